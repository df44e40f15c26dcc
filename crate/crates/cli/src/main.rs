//! `transcend-lab`: build synthetic expert corpora over a fictional knowledge
//! graph and measure when a learner trained on them beats every expert.
//!
//! Typical desk run:
//! ```sh
//! transcend-lab --out runs/desk gen-graph
//! transcend-lab --out runs/desk cluster
//! transcend-lab --out runs/desk make-experts --setting selection --coverage 0.1
//! transcend-lab --out runs/desk gen-corpus --samples 100000
//! transcend-lab --out runs/desk simulate
//! ```
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.

mod commands;
mod config;
mod provider;
mod verify;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use transcend_lab::experts::Setting;
use transcend_lab::corpus::TwoHopFormat;

/// Bad input: configuration, flags, or missing/invalid files. Exit code 1.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Parser, Debug)]
#[command(name = "transcend-lab", version, about = "Synthetic expert corpora and exact learners for transcendence experiments")]
pub struct Cli {
    /// TOML run configuration; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Master seed (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; defaults to all cores. Outputs do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Print errors as a JSON object on stderr.
    #[arg(long, global = true)]
    pub error_json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a fictional knowledge graph (graph.json).
    GenGraph(GenGraphArgs),
    /// Partition the edges into expertise clusters (partition.json).
    Cluster(ClusterArgs),
    /// Build expert personal graphs (experts.json).
    MakeExperts(MakeExpertsArgs),
    /// Emit the training corpus and two-hop splits (corpus/).
    GenCorpus(GenCorpusArgs),
    /// Sweep experts, coverage, alpha and temperature with the mixture learner (report.csv).
    Simulate(SimulateArgs),
    /// Two-hop generalization: condition report, accuracies, phase sweep.
    Generalize(GeneralizeArgs),
    /// Two-hop shortcut baselines (baselines.csv).
    Baselines,
    /// Run the invariant and oracle suite (verify.csv).
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct GenGraphArgs {
    #[arg(long, value_enum)]
    pub preset: Option<config::Preset>,
    /// Import an existing graph JSON and redraw its names instead of generating.
    #[arg(long)]
    pub import: Option<PathBuf>,
    #[arg(long)]
    pub entities: Option<usize>,
    #[arg(long)]
    pub edges: Option<usize>,
    #[arg(long)]
    pub relations: Option<usize>,
    #[arg(long)]
    pub skew: Option<f64>,
    /// At most one tail per (head, relation); required by `generalize`.
    #[arg(long)]
    pub functional: bool,
    #[arg(long, value_enum)]
    pub names: Option<config::NameSource>,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Args, Debug)]
pub struct MakeExpertsArgs {
    #[arg(long, value_parser = parse_setting)]
    pub setting: Option<Setting>,
    #[arg(long)]
    pub n_experts: Option<usize>,
    #[arg(long)]
    pub coverage: Option<f64>,
}

#[derive(Args, Debug)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Diversity level 1-4.
    #[arg(long)]
    pub level: Option<u8>,
    /// Add two-hop sentences and validation/test splits.
    #[arg(long)]
    pub two_hop: bool,
    #[arg(long, value_parser = parse_format)]
    pub format: Option<TwoHopFormat>,
    #[arg(long)]
    pub validation_size: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_setting)]
    pub setting: Option<Setting>,
    /// Fit counts over a generated corpus of this many samples instead of the exact mixture.
    #[arg(long)]
    pub empirical: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GeneralizeArgs {
    #[arg(long)]
    pub kappa_comp: Option<usize>,
    #[arg(long)]
    pub validation_size: Option<usize>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Smaller graphs and grids.
    #[arg(long)]
    pub quick: bool,
}

fn parse_setting(s: &str) -> Result<Setting, String> {
    match s {
        "denoising" => Ok(Setting::Denoising),
        "selection" => Ok(Setting::Selection),
        "generalization" => Ok(Setting::Generalization),
        _ => Err(format!("unknown setting {s:?} (denoising, selection, generalization)")),
    }
}

fn parse_format(s: &str) -> Result<TwoHopFormat, String> {
    match s {
        "plain" => Ok(TwoHopFormat::Plain),
        "cot" => Ok(TwoHopFormat::Cot),
        _ => Err(format!("unknown two-hop format {s:?} (plain, cot)")),
    }
}

fn is_validation(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<Invalid>().is_some() || e.downcast_ref::<transcend_lab::Error>().is_some_and(|e| e.is_validation())
    })
}

fn report(err: &anyhow::Error, as_json: bool, code: u8) {
    if as_json {
        let kind = if code == 1 { "validation" } else { "runtime" };
        eprintln!("{}", json!({"error": {"kind": kind, "code": code, "message": format!("{err:#}")}}));
    } else {
        eprintln!("error: {err:#}");
    }
}

fn main() -> ExitCode {
    let error_json = std::env::args().any(|a| a == "--error-json");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            if error_json {
                report(&anyhow::Error::msg(e.to_string().trim().to_string()), true, 1);
            } else {
                let _ = e.print();
            }
            return ExitCode::from(1);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = if is_validation(&err) { 1 } else { 2 };
            report(&err, cli.error_json, code);
            ExitCode::from(code)
        }
    }
}
