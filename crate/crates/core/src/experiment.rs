//! Multi-run drivers: single runs written to disk, one-axis sweeps and the
//! attack × defense comparison matrix.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::AttackKind;
use crate::config::SimConfig;
use crate::defenses::DefenseKind;
use crate::error::{Error, Result};
use crate::results::{fmt_float, summarize, write_atomic, write_results, Format, Summary};
use crate::sim::{run_simulation, RoundRecord};

fn file_name(format: Format) -> &'static str {
    match format {
        Format::Csv => "results.csv",
        Format::Json => "results.json",
    }
}

/// Run `cfg` and write one result file per requested format into `out_dir`.
pub fn run_to_dir(cfg: &SimConfig, out_dir: &Path, formats: &[Format]) -> Result<(Vec<RoundRecord>, Summary)> {
    let records = run_simulation(cfg)?;
    for &f in formats {
        write_results(&records, &out_dir.join(file_name(f)), f, cfg)?;
    }
    let summary = summarize(&records);
    Ok((records, summary))
}

fn cell(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn safe_dir_name(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-=".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Parse `key=v1,v2,...`.
pub fn parse_axis(spec: &str) -> Result<(String, Vec<String>)> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(format!("sweep axis `{spec}` is not of the form key=v1,v2")))?;
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(Error::config(format!("sweep axis `{key}` has no values")));
    }
    Ok((key.trim().to_string(), values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: String,
    pub summary: Summary,
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("axis_value,final_acc,final_asr\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            r.axis_value,
            cell(r.summary.final_acc),
            cell(r.summary.final_asr)
        ));
    }
    out
}

/// One run per axis value, run `i` seeded with `master_seed + i`, each in
/// `out_dir/<key>=<value>/`. `sweep_summary.csv` lists the runs that finished;
/// the first failure stops the sweep after the summary is written.
pub fn sweep(
    cfg: &SimConfig,
    key: &str,
    values: &[String],
    out_dir: &Path,
    formats: &[Format],
) -> Result<Vec<SweepRow>> {
    // reject bad values before spending time on earlier runs
    let mut cfgs = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        let mut c = cfg.clone();
        c.set(key, v)?;
        c.master_seed = cfg.master_seed.wrapping_add(i as u64);
        c.validate()?;
        cfgs.push(c);
    }
    let mut rows = Vec::with_capacity(values.len());
    let mut failure = None;
    for (c, v) in cfgs.iter().zip(values) {
        let dir = out_dir.join(safe_dir_name(&format!("{key}={v}")));
        match run_to_dir(c, &dir, formats) {
            Ok((_, summary)) => rows.push(SweepRow {
                axis_value: v.clone(),
                summary,
            }),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    write_atomic(&out_dir.join("sweep_summary.csv"), &sweep_csv(&rows))?;
    match failure {
        Some(e) => Err(e),
        None => Ok(rows),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub attack: AttackKind,
    pub defense: DefenseKind,
    pub summary: Summary,
}

pub const COMPARE_HEADER: &str = "attack,defense,final_acc,final_asr";

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out = format!("{COMPARE_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.attack,
            r.defense,
            cell(r.summary.final_acc),
            cell(r.summary.final_asr)
        ));
    }
    out
}

/// Every (attack, defense) pair from `cfg.compare`, all with the same seed.
/// Rows are sorted by attack name, then defense name. Per-pair results go to
/// `out_dir/<attack>__<defense>/` when `out_dir` is given, the matrix to
/// `out_dir/compare.csv`.
pub fn compare(cfg: &SimConfig, out_dir: Option<&Path>, formats: &[Format]) -> Result<Vec<CompareRow>> {
    let mut pairs: Vec<(AttackKind, DefenseKind)> = cfg
        .compare
        .attacks
        .iter()
        .flat_map(|&a| cfg.compare.defenses.iter().map(move |&d| (a, d)))
        .collect();
    pairs.sort_by(|x, y| (x.0.name(), x.1.name()).cmp(&(y.0.name(), y.1.name())));
    pairs.dedup();
    let cells: Vec<(SimConfig, PathBuf)> = pairs
        .iter()
        .map(|&(a, d)| {
            let mut c = cfg.clone();
            c.attack.kind = a;
            c.defense.kind = d;
            c.validate()?;
            let dir = out_dir.map(|o| o.join(format!("{a}__{d}"))).unwrap_or_default();
            Ok((c, dir))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<CompareRow> = cells
        .par_iter()
        .map(|(c, dir)| {
            let summary = match out_dir {
                Some(_) => run_to_dir(c, dir, formats)?.1,
                None => summarize(&run_simulation(c)?),
            };
            Ok(CompareRow {
                attack: c.attack.kind,
                defense: c.defense.kind,
                summary,
            })
        })
        .collect::<Result<_>>()?;
    if let Some(o) = out_dir {
        write_atomic(&o.join("compare.csv"), &compare_csv(&rows))?;
    }
    Ok(rows)
}
