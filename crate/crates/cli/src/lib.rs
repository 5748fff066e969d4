//! Argument handling and dispatch for the `wlecv` binary.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use wlecv_core::io::read_samples;
use wlecv_core::mapping::{
    analyze, ingest_counts, synthetic_dataset, MappingConfig, OutlierPolicy, SyntheticConfig, WeightMode,
};
use wlecv_core::sim::DEFAULT_SEED;
use wlecv_core::{
    lognormal_weight, mle_mean, optimize_weights, run_study, select_weights, wle, Delta, Family, ModelSpec,
    MultiSample, Scheme, StudyConfig, WeightVector, WleError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Emit {
    Csv,
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Table1,
    Table3,
}

#[derive(Debug, Parser)]
#[command(name = "wlecv", version, about = "Cross-validated weighted likelihood estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output format.
    #[arg(long, value_enum, default_value_t = Emit::Table, global = true)]
    pub emit: Emit,

    /// Master seed for anything random.
    #[arg(long, env = "WLECV_SEED", default_value_t = DEFAULT_SEED, global = true)]
    pub seed: u64,

    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,

    /// Write output here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Sample CSV: population_id,column_index,value (first population is the target).
    #[arg(long, short)]
    pub input: PathBuf,

    /// Deletion scheme; defaults to equal-column for equal sizes, unequal-point otherwise.
    #[arg(long)]
    pub scheme: Option<Scheme>,

    #[arg(long, default_value = "normal")]
    pub family: Family,

    /// Fixed regularization instead of the default rule.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cross-validated weights from a sample file.
    Weights(SampleArgs),
    /// Weights plus the weighted likelihood estimate of the target.
    Wle(SampleArgs),
    /// Direct numerical minimization of the leave-one-out discrepancy.
    Oracle(SampleArgs),
    /// Monte Carlo comparison of the MLE and the WLE.
    Simulate(SimulateArgs),
    /// Small-area pipeline on weekly regional counts.
    Map(MapArgs),
    /// Write a synthetic weekly count file.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub family: Option<Family>,
    /// True parameter of the target population.
    #[arg(long, allow_hyphen_values = true)]
    pub theta1: Option<f64>,
    /// True parameter of the second population.
    #[arg(long, allow_hyphen_values = true)]
    pub theta2: Option<f64>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: Option<u64>,
    #[arg(long)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// Weekly or daily count CSV.
    #[arg(long, short, required_unless_present = "synthetic")]
    pub input: Option<PathBuf>,
    /// Use the seeded synthetic generator instead of a file.
    #[arg(long, conflicts_with = "input")]
    pub synthetic: bool,
    #[arg(long, default_value = "R1")]
    pub target: String,
    #[arg(long, default_value_t = wlecv_core::mapping::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub weeks_per_year: Option<u32>,
    /// Weeks dropped from every year.
    #[arg(long, value_delimiter = ',', conflicts_with = "auto_outliers")]
    pub exclude_weeks: Option<Vec<u32>>,
    /// Drop k-means flagged weeks of the target, per year.
    #[arg(long)]
    pub auto_outliers: bool,
    /// Use λ = w₀ (MLE) in every year.
    #[arg(long)]
    pub mle_only: bool,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Also write analysis.json, summary.csv and weights.csv here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    pub regions: usize,
    #[arg(long, default_value_t = 6)]
    pub years: u32,
    #[arg(long, default_value_t = 16)]
    pub weeks: u32,
}

/// Maps an error to its exit code.
pub fn exit_code(err: &WleError) -> i32 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_DATA
    }
}

fn delta_of(v: Option<f64>) -> Delta {
    v.map_or(Delta::Default, Delta::Fixed)
}

#[derive(Serialize)]
struct WeightsOutput<'a> {
    command: &'a str,
    input: String,
    family: Family,
    scheme: Scheme,
    delta_rule: String,
    population_ids: Vec<String>,
    weights: WeightVector,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimate: Option<EstimateOutput>,
}

#[derive(Serialize)]
struct EstimateOutput {
    theta: f64,
    phi: f64,
    mle_theta: f64,
    mle_phi: f64,
    negative_rate: bool,
}

fn sample_weights(args: &SampleArgs, ms: &MultiSample, scheme: Scheme, model: &ModelSpec) -> wlecv_core::Result<WeightVector> {
    if model.is_linear() {
        return select_weights(ms, scheme, delta_of(args.delta));
    }
    let pops = ms.populations();
    if ms.m() == 2 && scheme == Scheme::EqualColumn {
        lognormal_weight(&pops[0], &pops[1])
    } else {
        optimize_weights(ms, model, scheme)
    }
}

fn render_weights(out: &WeightsOutput, emit: Emit) -> String {
    match emit {
        Emit::Json => serde_json::to_string_pretty(out).expect("serializable") + "\n",
        Emit::Csv => {
            let mut s = format!(
                "# command={} family={} scheme={} delta={} delta_used={} unique={} condition_flag={}\n",
                out.command,
                out.family,
                out.scheme,
                out.delta_rule,
                out.weights.delta_used,
                out.weights.unique,
                out.weights.condition_flag
            );
            s.push_str("population_id,lambda\n");
            for (id, l) in out.population_ids.iter().zip(&out.weights.lambda) {
                let _ = writeln!(s, "{id},{l}");
            }
            if let Some(e) = &out.estimate {
                let _ = writeln!(s, "# theta={} phi={} mle_theta={} mle_phi={}", e.theta, e.phi, e.mle_theta, e.mle_phi);
            }
            s
        }
        Emit::Table => {
            let mut s = format!(
                "{} ({} family, {} scheme, delta {})\n",
                out.command, out.family, out.scheme, out.delta_rule
            );
            for (id, l) in out.population_ids.iter().zip(&out.weights.lambda) {
                let _ = writeln!(s, "  {id:>12}  {l:>14.8}");
            }
            if !out.weights.unique {
                s.push_str("  (minimizer not unique: minimum-norm solution)\n");
            }
            if let Some(e) = &out.estimate {
                let _ = writeln!(s, "  WLE theta = {:.8}  phi = {:.8}", e.theta, e.phi);
                let _ = writeln!(s, "  MLE theta = {:.8}  phi = {:.8}", e.mle_theta, e.mle_phi);
                if e.negative_rate {
                    s.push_str("  warning: negative rate estimate\n");
                }
            }
            s
        }
    }
}

fn run_sample_command(name: &str, args: &SampleArgs, emit: Emit) -> wlecv_core::Result<String> {
    let ms = read_samples(&args.input)?;
    let scheme = args.scheme.unwrap_or_else(|| Scheme::default_for(&ms));
    let model = ModelSpec::new(args.family);
    let (weights, delta_rule) = if name == "oracle" {
        (optimize_weights(&ms, &model, scheme)?, "none (direct minimization)".to_string())
    } else {
        (sample_weights(args, &ms, scheme, &model)?, delta_of(args.delta).describe())
    };
    let estimate = if name == "wle" {
        let est = wle(&ms, &weights, &model)?;
        let mle = mle_mean(ms.target(), &model)?;
        Some(EstimateOutput {
            theta: est.theta,
            phi: est.phi,
            mle_theta: mle.theta,
            mle_phi: mle.phi,
            negative_rate: est.negative_rate,
        })
    } else {
        None
    };
    let out = WeightsOutput {
        command: name,
        input: args.input.display().to_string(),
        family: args.family,
        scheme,
        delta_rule,
        population_ids: ms.populations().iter().map(|p| p.id().to_string()).collect(),
        weights,
        estimate,
    };
    Ok(render_weights(&out, emit))
}

fn study_config(args: &SimulateArgs, seed: u64) -> Result<StudyConfig, String> {
    let mut cfg = match args.preset {
        Some(Preset::Table1) => StudyConfig::table1(seed),
        Some(Preset::Table3) => StudyConfig::table3(seed),
        None => {
            let (Some(family), Some(t1), Some(t2), Some(n)) = (args.family, args.theta1, args.theta2, args.n.clone())
            else {
                return Err("without --preset, --family, --theta1, --theta2 and --n are required".into());
            };
            StudyConfig {
                model: ModelSpec::new(family),
                true_params: (t1, t2),
                n_list: n,
                replications: 1000,
                master_seed: seed,
                delta: Delta::Default,
                scheme: Scheme::EqualColumn,
            }
        }
    };
    if args.preset.is_some() {
        if let Some(f) = args.family {
            cfg.model = ModelSpec::new(f);
        }
        if let Some(t) = args.theta1 {
            cfg.true_params.0 = t;
        }
        if let Some(t) = args.theta2 {
            cfg.true_params.1 = t;
        }
        if let Some(n) = &args.n {
            cfg.n_list = n.clone();
        }
    }
    if let Some(r) = args.reps {
        cfg.replications = r as usize;
    }
    if let Some(s) = args.scheme {
        cfg.scheme = s;
    }
    if let Some(d) = args.delta {
        cfg.delta = Delta::Fixed(d);
    }
    Ok(cfg)
}

fn run_map(args: &MapArgs, seed: u64, emit: Emit) -> wlecv_core::Result<String> {
    let ds = if args.synthetic {
        let mut cfg = SyntheticConfig {
            seed,
            ..Default::default()
        };
        if let Some(w) = args.weeks_per_year {
            cfg.weeks = w;
        }
        synthetic_dataset(&cfg)?
    } else {
        let path = args.input.as_ref().expect("clap enforces input or synthetic");
        ingest_counts(path, args.weeks_per_year)?
    };
    let mut cfg = MappingConfig::new(args.target.clone());
    cfg.threshold = args.threshold;
    cfg.level = args.level;
    cfg.delta = delta_of(args.delta);
    if args.mle_only {
        cfg.weights = WeightMode::Mle;
    }
    cfg.outliers = match (&args.exclude_weeks, args.auto_outliers) {
        (Some(w), _) => OutlierPolicy::Weeks(w.iter().copied().collect::<BTreeSet<u32>>()),
        (None, true) => OutlierPolicy::Auto,
        (None, false) => OutlierPolicy::None,
    };
    let analysis = analyze(&ds, &cfg)?;
    let json = serde_json::to_string_pretty(&analysis).expect("serializable") + "\n";
    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("analysis.json"), &json)?;
        std::fs::write(dir.join("summary.csv"), analysis.summary_csv())?;
        std::fs::write(dir.join("weights.csv"), analysis.weights_csv())?;
    }
    Ok(match emit {
        Emit::Json => json,
        Emit::Csv => analysis.summary_csv() + "\n" + &analysis.weights_csv(),
        Emit::Table => analysis.to_table(),
    })
}

fn counts_csv(ds: &wlecv_core::mapping::MappingDataset) -> String {
    let mut s = String::from("region_id,longitude,latitude,year,week,count\n");
    for r in ds.regions() {
        for y in ds.years() {
            for w in 1..=ds.weeks_per_year() {
                if let Some(c) = ds.count(&r.id, y, w) {
                    let _ = writeln!(s, "{},{},{},{y},{w},{c}", r.id, r.longitude, r.latitude);
                }
            }
        }
    }
    s
}

enum Failure {
    Usage(String),
    Core(WleError),
}

impl From<WleError> for Failure {
    fn from(e: WleError) -> Self {
        Failure::Core(e)
    }
}

fn dispatch(cli: &Cli) -> Result<String, Failure> {
    match &cli.command {
        Command::Weights(a) => Ok(run_sample_command("weights", a, cli.emit)?),
        Command::Wle(a) => Ok(run_sample_command("wle", a, cli.emit)?),
        Command::Oracle(a) => Ok(run_sample_command("oracle", a, cli.emit)?),
        Command::Simulate(a) => {
            let cfg = study_config(a, cli.seed).map_err(Failure::Usage)?;
            cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let report = run_study(&cfg)?;
            Ok(match cli.emit {
                Emit::Json => serde_json::to_string_pretty(&report).expect("serializable") + "\n",
                Emit::Csv => report.to_csv(),
                Emit::Table => report.to_table(),
            })
        }
        Command::Map(a) => Ok(run_map(a, cli.seed, cli.emit)?),
        Command::Synth(a) => {
            let cfg = SyntheticConfig {
                regions: a.regions,
                years: a.years,
                weeks: a.weeks,
                seed: cli.seed,
                ..Default::default()
            };
            Ok(counts_csv(&synthetic_dataset(&cfg)?))
        }
    }
}

fn write_output(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => stdout.write_all(text.as_bytes()),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Results go to `stdout`, diagnostics to `stderr`.
pub fn run_cli_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.workers {
        Some(w) => match rayon_pool(w as usize) {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(msg) => Err(Failure::Usage(msg)),
        },
        None => dispatch(&cli),
    };
    match result {
        Ok(text) => match write_output(cli.output.as_deref(), &text, stdout) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                let _ = writeln!(stderr, "error: {e}");
                EXIT_DATA
            }
        },
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "usage error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Core(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn rayon_pool(workers: usize) -> Result<rayon::ThreadPool, String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| e.to_string())
}

pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_cli_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
