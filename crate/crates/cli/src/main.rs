//! `fedguard` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fedguard::experiment::{compare, compare_csv, parse_axis, run_to_dir, sweep};
use fedguard::results::{fmt_float, Format};
use fedguard::{Error, SimConfig};

#[derive(Parser)]
#[command(
    name = "fedguard",
    version,
    about = "Federated learning poisoning and defense simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write results.csv / results.json.
    Run(Common),
    /// Run one simulation per value of a config key.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Axis to sweep, `key=v1,v2,...`.
        #[arg(long)]
        axis: String,
    },
    /// Run every attack × defense pair listed under `compare.*`.
    Compare(Common),
    /// Parse and validate a config without running it.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Override a config key; repeatable, the last one wins.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, env = "FEDGUARD_OUT", default_value = "results")]
    out: PathBuf,
    /// Replace `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = OutFormat::Both)]
    format: OutFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
    Both,
}

impl OutFormat {
    fn formats(self) -> Vec<Format> {
        match self {
            OutFormat::Csv => vec![Format::Csv],
            OutFormat::Json => vec![Format::Json],
            OutFormat::Both => vec![Format::Csv, Format::Json],
        }
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<SimConfig, Failure> {
    // an unreadable config file is a configuration problem, not a runtime one
    let mut cfg = SimConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?;
    cfg.apply_overrides(overrides)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_else(|| "NA".into())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(c) => {
            let cfg = load(&c.config, &c.overrides, c.seed)?;
            let (_, s) = run_to_dir(&cfg, &c.out, &c.format.formats())?;
            println!("final_acc={} final_asr={}", opt(s.final_acc), opt(s.final_asr));
        }
        Command::Sweep { common: c, axis } => {
            let cfg = load(&c.config, &c.overrides, c.seed)?;
            let (key, values) = parse_axis(&axis)?;
            let rows = sweep(&cfg, &key, &values, &c.out, &c.format.formats())?;
            for r in rows {
                println!(
                    "{key}={} final_acc={} final_asr={}",
                    r.axis_value,
                    opt(r.summary.final_acc),
                    opt(r.summary.final_asr)
                );
            }
        }
        Command::Compare(c) => {
            let cfg = load(&c.config, &c.overrides, c.seed)?;
            let rows = compare(&cfg, Some(&c.out), &c.format.formats())?;
            print!("{}", compare_csv(&rows));
        }
        Command::ValidateConfig { config, overrides } => {
            load(&config, &overrides, None)?;
            println!("ok {}", config.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
