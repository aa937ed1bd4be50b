//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lpgrad::bench::PRESET_NAMES;
use lpgrad::BandwidthRule;

use crate::config::{
    Format, FunctionKind, LawArg, MetricSpec, ModeArg, NormalizationArg, RadialArg, RunConfig,
    SigmaSpec,
};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "lpgrad", version, about = "Zeroth-order gradient estimation with p-generalized Gaussian directions")]
pub struct Cli {
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, global = true, env = "LPGRAD_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the gradient of a test function and report the error per repetition.
    Estimate(EstimateArgs),
    /// Reproduce one of the built-in benchmark tables.
    Table(TableArgs),
    /// Compare empirical sampler moments with their closed forms.
    Moments(MomentsArgs),
    /// Mean squared error against N with a log-log slope fit.
    MseSweep(SweepArgs),
    /// Run a saved configuration file.
    Run(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    #[arg(long, value_enum)]
    pub function: FunctionKind,
    /// Objective for custom-expr, e.g. "sum((1-x[k])^2)".
    #[arg(long)]
    pub expr: Option<String>,
    #[arg(long, default_value_t = 2.0)]
    pub m1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub m2: f64,
    #[arg(long)]
    pub d: usize,
    /// Comma-separated evaluation point; defaults to the function's own.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Shape parameter; defaults to floor(max(2, ln d)) + 1.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long = "L", default_value_t = 1)]
    pub l: usize,
    /// Comma-separated offsets, one per point.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub betas: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, default_value_t = 1e-4)]
    pub h: f64,
    /// Pick h from the scheme instead of --h, with this exponent.
    #[arg(long)]
    pub bandwidth_gamma: Option<f64>,
    #[arg(long, requires = "bandwidth_gamma")]
    pub bandwidth_scale: Option<f64>,
    /// A positive number, auto-c3 or auto-d2.
    #[arg(long, default_value = "auto-d2")]
    pub sigma: SigmaSpec,
    #[arg(long, value_enum, default_value_t)]
    pub law: LawArg,
    #[arg(long, value_enum, default_value_t)]
    pub radial: RadialArg,
    #[arg(long)]
    pub decorrelate: bool,
    #[arg(long, value_enum, default_value_t)]
    pub normalization: NormalizationArg,
    /// identity, exp-corr:<rho> or file:<path>.
    #[arg(long, default_value = "identity")]
    pub metric: MetricSpec,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    /// Append a central finite-difference row.
    #[arg(long)]
    pub fdm_baseline: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    /// Write 0 for wall_ms so output is reproducible byte for byte.
    #[arg(long)]
    pub no_timing: bool,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long)]
    pub dump_config: bool,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
    pub name: String,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_values: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
}

impl ProblemArgs {
    pub fn into_config(self, n: usize, reps: usize) -> RunConfig {
        let bandwidth_rule = self.bandwidth_gamma.map(|gamma| BandwidthRule {
            gamma,
            scale: self.bandwidth_scale.unwrap_or(BandwidthRule::default().scale),
        });
        RunConfig {
            function: self.function,
            expr: self.expr,
            m1: self.m1,
            m2: self.m2,
            d: self.d,
            x0: self.x0,
            p: self.p,
            l: self.l,
            betas: self.betas,
            mode: self.mode,
            n,
            h: self.h,
            bandwidth_rule,
            sigma: self.sigma,
            law: self.law,
            radial: self.radial,
            decorrelate: self.decorrelate,
            normalization: self.normalization,
            metric: self.metric,
            seed: self.seed,
            reps,
            fdm_baseline: false,
            out: None,
            format: Format::Csv,
            no_timing: false,
        }
    }
}

impl EstimateArgs {
    pub fn into_config(self) -> RunConfig {
        let mut cfg = self.problem.into_config(self.n, self.reps);
        cfg.fdm_baseline = self.fdm_baseline;
        cfg.out = self.out;
        cfg.format = self.format;
        cfg.no_timing = self.no_timing;
        cfg
    }
}

/// Sizes the global pool; `None` or 0 leaves rayon's default.
pub fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    match threads {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}"))),
        _ => Ok(()),
    }
}
