use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bridgelab::experiment::{run, write_report, ConfigFile, ExperimentKind, Sampler};
use bridgelab::Error;

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "bridgelab", version, about = "Brownian bridges on model manifolds: kernels, samplers and checks")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Heat kernel checks.
    Heatkernel {
        #[command(subcommand)]
        action: HeatkernelCmd,
    },
    /// Grid certificates for kernel, gradient and volume inequalities.
    Bounds {
        #[command(subcommand)]
        action: BoundsCmd,
    },
    /// Bridge path sampling.
    Bridge {
        #[command(subcommand)]
        action: BridgeCmd,
    },
    /// Nested Monte Carlo test of the Markov property.
    Markov {
        #[command(subcommand)]
        action: MarkovCmd,
    },
    /// Martingale, integrability and refinement checks of the bridge decomposition.
    Semimart {
        #[command(subcommand)]
        action: SemimartCmd,
    },
    /// Horizontal lifts of path CSVs to the frame bundle.
    Lift {
        #[command(subcommand)]
        action: LiftCmd,
    },
    /// Every applicable acceptance check on one model.
    AcceptAll(AcceptArgs),
    /// Any experiment from a flat JSON config; flags override file values.
    Run(RunArgs),
}

#[derive(Subcommand, Debug)]
enum HeatkernelCmd {
    /// Series agreement, Chapman–Kolmogorov, heat equation and gradient checks.
    Check(KernelArgs),
}

#[derive(Subcommand, Debug)]
enum BoundsCmd {
    Check(BoundsArgs),
}

#[derive(Subcommand, Debug)]
enum BridgeCmd {
    /// Writes sampled paths as CSV and a JSON summary report.
    Sample(SampleArgs),
}

#[derive(Subcommand, Debug)]
enum MarkovCmd {
    Test(MarkovArgs),
}

#[derive(Subcommand, Debug)]
enum SemimartCmd {
    Test(SemimartArgs),
}

#[derive(Subcommand, Debug)]
enum LiftCmd {
    Run(LiftArgs),
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    /// euclidean:<m>, s1, s2 or h3.
    #[arg(long)]
    model: Option<String>,
    /// Random seed; falls back to BRIDGELAB_SEED, then 42.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (JSON report, or CSV data where the command writes paths or frames).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Relative tail tolerance of the kernel series.
    #[arg(long)]
    series_tol: Option<f64>,
    /// Term cap of the kernel series.
    #[arg(long)]
    max_terms: Option<usize>,
    /// Circle: time at which the Fourier series takes over from image sums.
    #[arg(long)]
    crossover_t: Option<f64>,
    /// Absolute tolerance of kernel quadratures.
    #[arg(long)]
    quad_tol: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct BridgeSpecArgs {
    /// Start point in chart coordinates, comma- or space-separated.
    #[arg(long, num_args = 1.., value_delimiter = ',', allow_negative_numbers = true)]
    x: Option<Vec<f64>>,
    /// End point in chart coordinates, comma- or space-separated.
    #[arg(long, num_args = 1.., value_delimiter = ',', allow_negative_numbers = true)]
    y: Option<Vec<f64>>,
    /// Terminal time.
    #[arg(short = 'T', long = "horizon")]
    horizon: Option<f64>,
    /// Time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Number of grid steps (overrides --dt).
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args, Debug)]
struct KernelArgs {
    #[command(flatten)]
    common: ModelArgs,
    #[command(flatten)]
    bridge: BridgeSpecArgs,
    /// Random (t, x, y) samples for the gradient check.
    #[arg(long)]
    paths: Option<u64>,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[command(flatten)]
    common: ModelArgs,
    /// Inequality name, or "all".
    #[arg(long)]
    inequality: Option<String>,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    /// Times x point pairs, e.g. 40x40.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    common: ModelArgs,
    #[command(flatten)]
    bridge: BridgeSpecArgs,
    #[arg(long)]
    paths: Option<u64>,
    #[arg(long, value_enum)]
    sampler: Option<SamplerArg>,
    /// JSON report path (default: the CSV path with a .json extension).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MarkovArgs {
    #[command(flatten)]
    common: ModelArgs,
    #[command(flatten)]
    bridge: BridgeSpecArgs,
    /// Outer paths.
    #[arg(long)]
    paths: Option<u64>,
    /// Inner sub-bridges per outer path.
    #[arg(long)]
    inner: Option<usize>,
    /// Cap on outer times inner samples.
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Args, Debug)]
struct SemimartArgs {
    #[command(flatten)]
    common: ModelArgs,
    #[command(flatten)]
    bridge: BridgeSpecArgs,
    #[arg(long)]
    paths: Option<u64>,
    /// Test function, e.g. bump:center=0,0,1,radius=0.5 (repeatable; default: the standard suite).
    #[arg(long = "f", allow_hyphen_values = true)]
    f: Vec<String>,
    /// Paths for the integrability refinement over dt, dt/2, dt/4 (0 skips it).
    #[arg(long)]
    refine_paths: Option<u64>,
    /// Sampler for the martingale battery (the refinement always uses the SDE).
    #[arg(long, value_enum)]
    sampler: Option<SamplerArg>,
}

#[derive(Args, Debug)]
struct LiftArgs {
    #[command(flatten)]
    common: ModelArgs,
    /// Path CSV to lift.
    #[arg(long = "paths")]
    input: PathBuf,
    /// JSON report path (default: the CSV path with a .json extension).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AcceptArgs {
    #[command(flatten)]
    common: ModelArgs,
    #[command(flatten)]
    bridge: BridgeSpecArgs,
    /// Monte Carlo scale: outer paths for the statistical checks.
    #[arg(long)]
    paths: Option<u64>,
    #[arg(long)]
    inner: Option<usize>,
    #[arg(long)]
    refine_paths: Option<u64>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Flat JSON config file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    experiment: Option<ExperimentArg>,
    #[command(flatten)]
    common: ModelArgs,
    #[command(flatten)]
    bridge: BridgeSpecArgs,
    #[arg(long)]
    paths: Option<u64>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum SamplerArg {
    Sde,
    Exact,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum ExperimentArg {
    KernelCheck,
    BoundsCheck,
    BridgeSample,
    MarkovTest,
    SemimartTest,
    LiftRun,
    AcceptAll,
}

impl From<ExperimentArg> for ExperimentKind {
    fn from(e: ExperimentArg) -> Self {
        match e {
            ExperimentArg::KernelCheck => Self::KernelCheck,
            ExperimentArg::BoundsCheck => Self::BoundsCheck,
            ExperimentArg::BridgeSample => Self::BridgeSample,
            ExperimentArg::MarkovTest => Self::MarkovTest,
            ExperimentArg::SemimartTest => Self::SemimartTest,
            ExperimentArg::LiftRun => Self::LiftRun,
            ExperimentArg::AcceptAll => Self::AcceptAll,
        }
    }
}

fn sampler(s: Option<SamplerArg>) -> Option<Sampler> {
    s.map(|s| match s {
        SamplerArg::Sde => Sampler::Sde,
        SamplerArg::Exact => Sampler::Exact,
    })
}

impl ModelArgs {
    fn apply(self, c: &mut ConfigFile) {
        c.model = self.model;
        c.seed = self.seed;
        c.out = self.out;
        c.series_tol = self.series_tol;
        c.max_terms = self.max_terms;
        c.crossover_t = self.crossover_t;
        c.quad_tol = self.quad_tol;
    }
}

impl BridgeSpecArgs {
    fn apply(self, c: &mut ConfigFile) {
        c.x = self.x;
        c.y = self.y;
        c.horizon = self.horizon;
        c.dt = self.dt;
        c.steps = self.steps;
    }
}

/// The flags as a config layer, plus the config file to put under it.
fn flags(command: Command) -> (ConfigFile, Option<PathBuf>) {
    let mut c = ConfigFile::default();
    let mut file = None;
    match command {
        Command::Heatkernel { action: HeatkernelCmd::Check(a) } => {
            c.experiment = Some(ExperimentKind::KernelCheck);
            a.common.apply(&mut c);
            a.bridge.apply(&mut c);
            c.paths = a.paths;
        }
        Command::Bounds { action: BoundsCmd::Check(a) } => {
            c.experiment = Some(ExperimentKind::BoundsCheck);
            a.common.apply(&mut c);
            c.inequality = a.inequality;
            c.t_min = a.t_min;
            c.t_max = a.t_max;
            c.grid = a.grid;
        }
        Command::Bridge { action: BridgeCmd::Sample(a) } => {
            c.experiment = Some(ExperimentKind::BridgeSample);
            a.common.apply(&mut c);
            a.bridge.apply(&mut c);
            c.paths = a.paths;
            c.sampler = sampler(a.sampler);
            c.report = a.report;
        }
        Command::Markov { action: MarkovCmd::Test(a) } => {
            c.experiment = Some(ExperimentKind::MarkovTest);
            a.common.apply(&mut c);
            a.bridge.apply(&mut c);
            c.paths = a.paths;
            c.inner_paths = a.inner;
            c.budget = a.budget;
        }
        Command::Semimart { action: SemimartCmd::Test(a) } => {
            c.experiment = Some(ExperimentKind::SemimartTest);
            a.common.apply(&mut c);
            a.bridge.apply(&mut c);
            c.paths = a.paths;
            c.f = if a.f.is_empty() { None } else { Some(a.f) };
            c.refine_paths = a.refine_paths;
            c.sampler = sampler(a.sampler);
        }
        Command::Lift { action: LiftCmd::Run(a) } => {
            c.experiment = Some(ExperimentKind::LiftRun);
            a.common.apply(&mut c);
            c.input = Some(a.input);
            c.report = a.report;
        }
        Command::AcceptAll(a) => {
            c.experiment = Some(ExperimentKind::AcceptAll);
            a.common.apply(&mut c);
            a.bridge.apply(&mut c);
            c.paths = a.paths;
            c.inner_paths = a.inner;
            c.refine_paths = a.refine_paths;
        }
        Command::Run(a) => {
            c.experiment = a.experiment.map(Into::into);
            a.common.apply(&mut c);
            a.bridge.apply(&mut c);
            c.paths = a.paths;
            c.input = a.input;
            c.report = a.report;
            file = Some(a.config);
        }
    }
    (c, file)
}

fn execute(cli: Cli) -> Result<u8, Error> {
    let (mut layer, file) = flags(cli.command);
    layer.threads = cli.threads;
    let base = match file {
        Some(p) => ConfigFile::from_json(&std::fs::read_to_string(&p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?)?,
        None => ConfigFile::default(),
    };
    let mut merged = base.overlay(&layer)?;
    if merged.seed.is_none() {
        if let Ok(s) = std::env::var("BRIDGELAB_SEED") {
            merged.seed = Some(s.trim().parse().map_err(|_| Error::Config(format!("BRIDGELAB_SEED='{s}' is not an unsigned integer")))?);
        }
    }
    let config = merged.resolve()?;
    if config.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(config.threads).build_global().map_err(|e| Error::Config(e.to_string()))?;
    }
    let outcome = run(&config)?;
    let csv_output = matches!(config.experiment, ExperimentKind::BridgeSample | ExperimentKind::LiftRun);
    let report_path = if csv_output {
        config.report.clone().or_else(|| config.out.as_ref().map(|p| p.with_extension("json")))
    } else {
        config.out.clone().or_else(|| config.report.clone())
    };
    match report_path {
        Some(p) => write_report(&p, &outcome.report)?,
        None => println!("{}", serde_json::to_string_pretty(&outcome.report)?),
    }
    if config.experiment == ExperimentKind::AcceptAll {
        for c in outcome.report["results"]["criteria"].as_array().into_iter().flatten() {
            if let Ok(c) = serde_json::from_value::<bridgelab::experiment::CriterionResult>(c.clone()) {
                eprintln!("{}", c.line());
            }
        }
    }
    if let Some(e) = outcome.report["error"].as_str() {
        eprintln!("error: {e}");
    }
    Ok(if outcome.pass { 0 } else { EXIT_FAIL })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e @ Error::Config(_)) => {
            eprintln!("usage error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAIL)
        }
    }
}
