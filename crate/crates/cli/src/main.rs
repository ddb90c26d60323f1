mod commands;
mod config;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::CliError;

/// Score, compare and test convolutional filter pruning criteria.
#[derive(Debug, Parser)]
#[command(name = "prunecrit", version, about)]
struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, env = "PRUNECRIT_SEED", default_value_t = 1)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score filters, compare criteria and profile score magnitudes.
    Analyze(AnalyzeArgs),
    /// Run the weight-distribution test suite on every layer.
    CwdaTest(CwdaArgs),
    /// Run Monte Carlo checks of the closed-form results.
    Verify(VerifyArgs),
    /// Simulate global pruning of two Gaussian layers.
    Simulate(SimulateArgs),
    /// Write a synthetic NTD dump.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// NTD dump to analyze.
    #[arg(long, short)]
    pub input: String,
    /// Comma-separated criteria (L1, L2, GM, Fermat, BNGamma, BNBeta,
    /// TaylorL1, TaylorL2, Entropy, APoZ).
    #[arg(long, short, default_value = "L1,L2,GM,Fermat", value_delimiter = ',')]
    pub criteria: Vec<String>,
    #[arg(long, short, default_value = "out")]
    pub out_dir: String,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,
    /// Number of lowest-scoring filter indices listed per layer.
    #[arg(long, default_value_t = 8)]
    pub bottom_k: usize,
    /// Also build a prune mask with this ratio, in (0, 1).
    #[arg(long)]
    pub prune_ratio: Option<f64>,
    #[arg(long, value_enum, default_value_t = ModeArg::Layerwise)]
    pub prune_mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    pub min_keep: usize,
    #[arg(long, default_value_t = 100)]
    pub entropy_bins: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub apoz_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Layerwise,
    Global,
}

#[derive(Debug, Args)]
pub struct CwdaArgs {
    #[arg(long, short)]
    pub input: String,
    #[arg(long, short, default_value = "out")]
    pub out_dir: String,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Bound on the spread of per-filter variances.
    #[arg(long, default_value_t = 1e-4)]
    pub sigma0_sq: f64,
    /// Bound on the absolute mean of the weights.
    #[arg(long, default_value_t = 0.01)]
    pub eps0: f64,
    /// Bound on the excess absolute correlation.
    #[arg(long, default_value_t = 0.01)]
    pub eps0_magnitude: f64,
    /// Monte Carlo replicates for the KS p-value.
    #[arg(long, default_value_t = 2000)]
    pub replicates: usize,
    #[arg(long, value_enum, default_value_t = ScopeArg::All)]
    pub scope: ScopeArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    All,
    WithinBlock,
    OffBlock,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Verifiers to run; all when omitted.
    pub names: Vec<String>,
    /// Write the JSON lines here as well as to standard output.
    #[arg(long, short)]
    pub out: Option<String>,
    /// Multiplies every pass tolerance (0 makes every check fail).
    #[arg(long, default_value_t = 1.0)]
    pub tolerance_scale: f64,
    /// Override the trial count of every verifier.
    #[arg(long)]
    pub trials: Option<usize>,
    /// List verifier names and exit.
    #[arg(long)]
    pub list: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 576)]
    pub d_a: usize,
    #[arg(long, default_value_t = 144)]
    pub d_b: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = 1e-1)]
    pub sigma_max: f64,
    /// Grid points per axis.
    #[arg(long, default_value_t = 50)]
    pub grid: usize,
    #[arg(long, default_value_t = 256)]
    pub n_filters: usize,
    #[arg(long, short, default_value = "out")]
    pub out_dir: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Cwda,
    Uniform,
    Vgg,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, conflicts_with = "layers")]
    pub preset: Option<Preset>,
    /// Comma-separated `NOUTxNINxK:SIGMA[:EPS]` layer specs.
    #[arg(long)]
    pub layers: Option<String>,
    /// Relative spread of per-position variances, in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Draw uniform instead of Gaussian weights (custom layers only).
    #[arg(long)]
    pub uniform: bool,
    #[arg(long, short)]
    pub out: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(a) => commands::analyze(a, cli.seed),
        Command::CwdaTest(a) => commands::cwda_test(a, cli.seed),
        Command::Verify(a) => commands::verify(a, cli.seed),
        Command::Simulate(a) => commands::simulate(a, cli.seed),
        Command::Synth(a) => commands::synth(a, cli.seed),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Input(_) => 2,
                CliError::Core(ref c) if c.is_input_error() => 2,
                CliError::Core(_) => 3,
            })
        }
    }
}
