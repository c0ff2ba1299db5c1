//! Config-driven experiments on horospheric products of trees.
//!
//! Every command is deterministic given its config and flags: all
//! randomness flows through declared seeds, and no output carries
//! timestamps or machine state. Exit codes: 0 all checks pass, 1
//! verification failure, 2 usage or config error, 3 budget exceeded.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use horoprod::config::ExperimentConfig;

mod exec;
mod relation;

/// A command outcome that maps onto the nonzero exit codes.
#[derive(Debug)]
pub enum Failure {
    /// A checked identity or cross-check does not hold.
    Verification(String),
    /// Bad flags, config, or input files.
    Usage(String),
    /// A state or size budget was hit; the message says which knob to turn.
    Budget(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Budget(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Verification(m) | Failure::Usage(m) | Failure::Budget(m) => m,
        }
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Parser)]
#[command(
    name = "horoprod",
    version,
    about = "Random walks on horospheric products of trees",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compare the closed-form distance against BFS on a ball around the origin
    VerifyDistance(ConfigArgs),
    /// Print every geodesic between two product vertices
    Geodesics(GeodesicsArgs),
    /// Sample walks; write a path CSV and an estimate-report JSON
    Simulate(ConfigArgs),
    /// Run the measured-equivalence-relation identity battery
    Eqrel(EqrelArgs),
    /// Write the exact entropy sequence of the n-step laws as CSV
    Entropy(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Built-in config: dl22, dl23, or gw-uniform123
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Ball radius override (verify-distance)
    #[arg(long)]
    radius: Option<u32>,
    /// Steps-per-walk override; for entropy, the sequence horizon
    #[arg(long)]
    n: Option<usize>,
    /// Number-of-walks override
    #[arg(long)]
    walks: Option<usize>,
    /// Budget override: DP states, BFS arena vertices, or geodesic count
    #[arg(long)]
    budget: Option<usize>,
    /// Primary output path override
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    /// Loads the config and folds the flag overrides into it.
    fn resolve(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), None) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Failure::Usage(format!("cannot read {}: {e}", path.display()))
                })?;
                toml::from_str(&text).map_err(|e| {
                    Failure::Usage(format!("bad config {}: {e}", path.display()))
                })?
            }
            (None, Some(name)) => preset(name)?,
            (None, None) => {
                return Err(Failure::Usage(
                    "pass --config FILE or --preset NAME (dl22, dl23, gw-uniform123)".into(),
                ))
            }
            (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
        };
        if let Some(s) = self.seed {
            cfg.params.seed = s;
        }
        if let Some(r) = self.radius {
            cfg.params.radius = r;
        }
        if let Some(n) = self.n {
            cfg.params.n = n;
        }
        if let Some(w) = self.walks {
            cfg.params.walks = w;
        }
        if let Some(b) = self.budget {
            cfg.params.budget = b;
        }
        Ok(cfg)
    }
}

fn preset(name: &str) -> Result<ExperimentConfig, Failure> {
    let text = match name {
        "dl22" => include_str!("../presets/dl22.toml"),
        "dl23" => include_str!("../presets/dl23.toml"),
        "gw-uniform123" => include_str!("../presets/gw-uniform123.toml"),
        other => {
            return Err(Failure::Usage(format!(
                "unknown preset {other}; available: dl22, dl23, gw-uniform123"
            )))
        }
    };
    toml::from_str(text).map_err(|e| Failure::Usage(format!("bad preset {name}: {e}")))
}

#[derive(Args)]
struct GeodesicsArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// First vertex, in the form (k:[i,..]|k:[i,..])
    x: String,
    /// Second vertex
    y: String,
}

#[derive(Args)]
struct EqrelArgs {
    /// TOML relation description; omit to audit seeded random relations
    #[arg(long, value_name = "FILE")]
    relation: Option<PathBuf>,
    /// Without --relation: how many random relations per family to audit
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// JSON report path; stdout always carries the summary
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Cmd::VerifyDistance(a) => exec::verify_distance(a),
        Cmd::Geodesics(a) => exec::geodesics(a),
        Cmd::Simulate(a) => exec::simulate(a),
        Cmd::Eqrel(a) => exec::eqrel(a),
        Cmd::Entropy(a) => exec::entropy(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
