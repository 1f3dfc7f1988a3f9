//! `adatailr` — operator surface for the noise-robust loss toolkit.
//!
//! Subcommands: `verify` (bound suites), `bench` (loss grid on the synthetic
//! noisy benchmark), `gen-data` (task + dataset files), `diversity` (corpus
//! metrics), `grad-check` (finite-difference gradient audit).
//!
//! Exit codes: 0 success, 1 verification/assertion failure, 2 usage or
//! config error. Every command is deterministic given its resolved
//! configuration, seed included.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use adatailr::synth::NoiseKind;

mod commands;
mod config;

use config::BenchConfig;

#[derive(Parser)]
#[command(name = "adatailr", version, about = "Noise-robust sequence-loss toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the numerical bound suites and write JSON reports.
    Verify(VerifyArgs),
    /// Train the loss grid on the synthetic noisy benchmark.
    Bench(BenchArgs),
    /// Generate a clean task and a corrupted dataset.
    GenData(GenDataArgs),
    /// Compute corpus diversity metrics.
    Diversity(DiversityArgs),
    /// Check analytic gradients against central finite differences.
    GradCheck(GradCheckArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    All,
    Theorem1,
    Theorem2,
    Lemmas,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Which reports to run.
    #[arg(long, value_enum, default_value = "all")]
    pub suite: Suite,
    /// Trial count for every verifier (default: 10^4, or 10^3 for the
    /// lambda-set verifiers).
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Points on the trade-off grid of the optimality check.
    #[arg(long, default_value_t = 101)]
    pub grid_points: usize,
    /// Ramp slopes for the approximation checks, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Directory for the JSON reports.
    #[arg(long, default_value = "verify_out")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct BenchArgs {
    /// key=value config file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub trunc_frac: Option<f64>,
    /// Comma-separated noise rates.
    #[arg(long, value_delimiter = ',')]
    pub rhos: Option<Vec<f64>>,
    /// Comma-separated loss kinds.
    #[arg(long, value_delimiter = ',')]
    pub losses: Option<Vec<String>>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Also write each cell's final model as a JSON matrix.
    #[arg(long)]
    pub save_models: bool,
}

impl BenchArgs {
    fn apply_overrides(&self, config: &mut BenchConfig) -> anyhow::Result<()> {
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        if let Some(v) = self.steps {
            config.steps = v;
        }
        if let Some(v) = self.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            config.learning_rate = v;
        }
        if let Some(v) = self.eval_every {
            config.eval_every = v;
        }
        if let Some(v) = self.gamma {
            config.gamma = v;
        }
        if let Some(v) = self.lambda {
            config.lambda = v;
        }
        if let Some(v) = self.delta {
            config.delta = v;
        }
        if let Some(v) = self.trunc_frac {
            config.trunc_frac = v;
        }
        if let Some(v) = &self.rhos {
            config.rhos = v.clone();
        }
        if let Some(v) = &self.losses {
            config.losses = v
                .iter()
                .map(|name| {
                    name.parse()
                        .map_err(|e| anyhow::anyhow!("--losses: {e}"))
                })
                .collect::<anyhow::Result<_>>()?;
        }
        if let Some(v) = &self.seeds {
            config.seeds = v.clone();
        }
        if self.save_models {
            config.save_models = true;
        }
        Ok(())
    }
}

#[derive(Args)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 32)]
    pub contexts: usize,
    #[arg(long, default_value_t = 32)]
    pub vocab: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub concentration: f64,
    /// Probability that a draw comes from the noise distribution.
    #[arg(long, default_value_t = 0.4)]
    pub rho: f64,
    #[arg(long, value_enum, default_value = "uniform")]
    pub noise: NoiseKindArg,
    #[arg(long, default_value_t = 2000)]
    pub samples_per_context: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Task JSON whose rows serve as the noise distribution
    /// (fixed-distribution noise only).
    #[arg(long)]
    pub noise_task: Option<PathBuf>,
    #[arg(long, default_value = "data_out")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseKindArg {
    Uniform,
    ShuffledTask,
    FixedDistribution,
}

impl From<NoiseKindArg> for NoiseKind {
    fn from(value: NoiseKindArg) -> Self {
        match value {
            NoiseKindArg::Uniform => NoiseKind::Uniform,
            NoiseKindArg::ShuffledTask => NoiseKind::ShuffledTask,
            NoiseKindArg::FixedDistribution => NoiseKind::FixedDistribution,
        }
    }
}

#[derive(Args)]
pub struct DiversityArgs {
    /// Plain text (one document per line) or `.jsonl` with `{"tokens": [..]}`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Newline-delimited reference vocabulary: token ids for a `.jsonl`
    /// corpus, token strings for a text corpus.
    #[arg(long)]
    pub reference: PathBuf,
    /// Sample sizes for the saturation curve; 10 log-spaced sizes by default.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value = "diversity_out")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Maximum allowed relative error.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify(args) => commands::run_verify(args),
        Command::Bench(args) => commands::run_bench(args),
        Command::GenData(args) => commands::run_gen_data(args),
        Command::Diversity(args) => commands::run_diversity(args),
        Command::GradCheck(args) => commands::run_grad_check(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
