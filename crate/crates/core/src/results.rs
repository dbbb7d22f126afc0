//! Result files.
//!
//! Floats are rounded to 9 significant digits. Files are written to a
//! temporary sibling and renamed into place.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::sim::RoundRecord;

pub const CSV_HEADER: &str = "round,acc,asr,d_t,phi_t,accepted,malicious_selected,tp,fp,fn,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::config(format!("unknown output format `{s}`"))),
        }
    }
}

/// Round to 9 significant digits.
pub fn round9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Shortest text for `round9(x)`; exponent form outside [1e-4, 1e15).
pub fn fmt_float(x: f64) -> String {
    let r = round9(x);
    let a = r.abs();
    if r == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn ids(v: &[usize]) -> String {
    v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub final_acc: Option<f64>,
    pub final_asr: Option<f64>,
    pub mean_detection_precision: Option<f64>,
    pub mean_detection_recall: Option<f64>,
}

/// Mean per-round precision and recall over rounds after `after_round`.
/// Rounds where a ratio is undefined (zero denominator) are skipped.
pub fn detection_means(records: &[RoundRecord], after_round: usize) -> (Option<f64>, Option<f64>) {
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let later = || records.iter().filter(|r| r.round > after_round);
    let precision = later()
        .filter(|r| r.tp + r.fp > 0)
        .map(|r| r.tp as f64 / (r.tp + r.fp) as f64)
        .collect();
    let recall = later()
        .filter(|r| r.tp + r.fn_ > 0)
        .map(|r| r.tp as f64 / (r.tp + r.fn_) as f64)
        .collect();
    (mean(precision), mean(recall))
}

pub fn summarize(records: &[RoundRecord]) -> Summary {
    let last = records.iter().rev().find(|r| r.is_eval());
    let (p, r) = detection_means(records, 0);
    Summary {
        final_acc: last.and_then(|r| r.acc),
        final_asr: last.and_then(|r| r.asr),
        mean_detection_precision: p,
        mean_detection_recall: r,
    }
}

/// Evaluation rounds as CSV, header first.
pub fn to_csv(records: &[RoundRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records.iter().filter(|r| r.is_eval()) {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.round,
            opt(r.acc),
            opt(r.asr),
            opt(r.d_t),
            opt(r.phi_t),
            ids(&r.accepted),
            ids(&r.malicious_selected),
            r.tp,
            r.fp,
            r.fn_,
            fmt_float(r.wall_ms)
        )
        .expect("writing to a String");
    }
    out
}

fn rounded(r: &RoundRecord) -> RoundRecord {
    let o = |x: Option<f64>| x.map(round9);
    RoundRecord {
        acc: o(r.acc),
        asr: o(r.asr),
        d_t: o(r.d_t),
        phi_t: o(r.phi_t),
        wall_ms: round9(r.wall_ms),
        ..r.clone()
    }
}

/// `{config, records, summary}` with every round included.
pub fn to_json(records: &[RoundRecord], cfg: &SimConfig) -> Result<String> {
    let config: Map<String, Value> = cfg
        .entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), Value::String(v)))
        .collect();
    let s = summarize(records);
    let o = |x: Option<f64>| x.map(round9);
    let doc = json!({
        "config": config,
        "records": records.iter().map(rounded).collect::<Vec<_>>(),
        "summary": Summary {
            final_acc: o(s.final_acc),
            final_asr: o(s.final_asr),
            mean_detection_precision: o(s.mean_detection_precision),
            mean_detection_recall: o(s.mean_detection_recall),
        },
    });
    serde_json::to_string_pretty(&doc).map_err(|e| Error::config(format!("json encoding: {e}")))
}

/// Write `contents` to a temporary sibling, then rename over `path`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_results(records: &[RoundRecord], path: &Path, format: Format, cfg: &SimConfig) -> Result<()> {
    let body = match format {
        Format::Csv => to_csv(records),
        Format::Json => to_json(records, cfg)?,
    };
    write_atomic(path, &body)
}
