//! Command-line front end: argument definitions and the command implementations
//! behind the `uncertain-eval` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};
use uncertain_eval::ingestion::{
    parse_ground_truth, parse_leaderboard, parse_predictions, parse_scores, parse_trials, write_ground_truth,
    write_predictions, write_trials, PredictionTable,
};
use uncertain_eval::leaderboard::{AuditMatrix, NETFLIX_TEST_RATINGS};
use uncertain_eval::simulator::{simulate_predictions, MeanDistribution};
use uncertain_eval::uncertainty::{fit_population_sigma_with, SigmaBias};
use uncertain_eval::{
    audit, derive_rng, derive_seed, draw_sigma, error_matrix, estimate_from_trials, histogram_with_range,
    mc_metric_distribution, order_probabilities, simulate, trial_metric_series, Approach, AuditConfig, DeltaAllocation,
    DeviationReading, FitFamily, FixedDeviation, Gaussian, Metric, PropagationSums, Scale, SimConfig, UncertainRating,
    UncertaintyModel,
};

pub mod error;
pub mod report;

pub use error::{CliError, CliResult};
pub use report::{Body, Format, Report};
use report::{
    EvalPayload, HistogramPayload, InputFile, MatrixPayload, Metadata, SweepPayload, SweepRow, SystemEval,
    SystemHistogram,
};

/// Environment variable consulted when `--seed` is absent.
pub const SEED_ENV: &str = "UNCERTAIN_EVAL_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "uncertain-eval",
    version,
    about = "Uncertainty-aware evaluation of recommender systems"
)]
pub struct Cli {
    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
    /// Exit with status 3 when a result is numerically degenerate.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Metric distribution of each system from uncertain ratings.
    Eval(EvalArgs),
    /// Pairwise ranking-error probabilities between systems.
    Rank(RankArgs),
    /// Re-audit a published leaderboard under an uncertainty model.
    Audit(AuditArgs),
    /// Generate a synthetic repeated-rating study.
    Simulate(SimulateArgs),
    /// Per-trial metric values and their histograms.
    Trials(TrialsArgs),
    /// Score variance over a grid of test-set sizes and rating uncertainties.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricArg {
    Rmse,
    Mse,
    Mae,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Metric {
        match m {
            MetricArg::Rmse => Metric::Rmse,
            MetricArg::Mse => Metric::Mse,
            MetricArg::Mae => Metric::Mae,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScaleArgs {
    /// Lowest rating on the scale.
    #[arg(long, default_value_t = 1.0)]
    pub scale_min: f64,
    /// Highest rating on the scale.
    #[arg(long, default_value_t = 5.0)]
    pub scale_max: f64,
}

impl ScaleArgs {
    fn scale(&self) -> CliResult<Scale> {
        Ok(Scale::new(self.scale_min, self.scale_max)?)
    }
}

/// Where the uncertain ratings come from.
#[derive(Debug, Clone, Args, Serialize)]
#[group(required = true, multiple = false)]
pub struct RatingSource {
    /// Repeated-trial ratings (user,item,trial,rating).
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Known rating densities (user,item,mean,variance).
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: RatingSource,
    /// Predictions (system,user,item,prediction).
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricArg::Rmse)]
    pub metric: MetricArg,
    /// Also estimate each distribution from this many Monte Carlo samples.
    #[arg(long)]
    pub mc: Option<usize>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// Accept trial ratings outside the scale.
    #[arg(long)]
    pub unbounded: bool,
    #[command(flatten)]
    pub scale: ScaleArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RankArgs {
    /// Precomputed score distributions (system,mean,variance).
    #[arg(long, conflicts_with_all = ["ratings", "truth", "predictions"])]
    pub scores: Option<PathBuf>,
    /// Repeated-trial ratings, evaluated like `eval` does.
    #[arg(long, conflicts_with = "truth")]
    pub ratings: Option<PathBuf>,
    /// Known rating densities (user,item,mean,variance).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Metric used with eval inputs; rank needs a closed form, so rmse or mse.
    #[arg(long, value_enum, default_value_t = MetricArg::Rmse)]
    pub metric: MetricArg,
    /// Also sample complete orderings this many times.
    #[arg(long)]
    pub orders: Option<usize>,
    /// Collapse systems with identical score densities into one row.
    #[arg(long)]
    pub merge_ties: bool,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub unbounded: bool,
    #[command(flatten)]
    pub scale: ScaleArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    Uniform,
    Triangular,
    Beta,
    Constant,
}

/// Parametric σ density; unset parameters fall back to per-family defaults.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// σ density family.
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Upper end of a uniform density [default: σ_max of the scale].
    #[arg(long)]
    pub upper: Option<f64>,
    /// Mode of a triangular density on [0, σ_max] [default: σ_max / 2].
    #[arg(long)]
    pub mode: Option<f64>,
    /// First shape of a beta density scaled to [0, σ_max].
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    /// Second shape of a beta density scaled to [0, σ_max].
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    /// σ of a constant density.
    #[arg(long)]
    pub sigma: Option<f64>,
}

impl ModelArgs {
    fn build(&self, scale: Scale, default: FamilyArg) -> CliResult<UncertaintyModel> {
        let smax = scale.max_sigma();
        let model = match self.family.unwrap_or(default) {
            FamilyArg::Uniform => UncertaintyModel::uniform(scale, self.upper.unwrap_or(smax))?,
            FamilyArg::Triangular => UncertaintyModel::triangular(scale, self.mode.unwrap_or(smax / 2.0))?,
            FamilyArg::Beta => UncertaintyModel::beta(scale, self.alpha, self.beta)?,
            FamilyArg::Constant => {
                let sigma = self
                    .sigma
                    .ok_or_else(|| CliError::Usage("--family constant needs --sigma".into()))?;
                UncertaintyModel::constant(scale, sigma)?
            }
        };
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ApproachArg {
    A,
    B,
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FitFamilyArg {
    Beta,
    Uniform,
    Triangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasArg {
    Raw,
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadingArg {
    Std,
    Variance,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AuditArgs {
    /// Leaderboard (rank,name,score).
    #[arg(long)]
    pub leaderboard: PathBuf,
    /// Size of the hidden test set [default: residual count of --deltas, else 2800000].
    #[arg(long, value_parser = parse_count)]
    pub n: Option<u64>,
    #[arg(long, value_enum, ignore_case = true, default_value_t = ApproachArg::B)]
    pub approach: ApproachArg,
    /// Approach B density [default family: beta(2, 2)].
    #[command(flatten)]
    pub model: ModelArgs,
    /// Approach A: repeated-trial ratings to fit the σ density from.
    #[arg(long)]
    pub trials: Option<PathBuf>,
    /// Approach A: family fitted to the trial σ values.
    #[arg(long, value_enum, default_value_t = FitFamilyArg::Beta)]
    pub fit_family: FitFamilyArg,
    /// Approach A: de-bias few-trial σ estimates before fitting.
    #[arg(long, value_enum, default_value_t = BiasArg::Raw)]
    pub bias: BiasArg,
    /// Impose this score deviation on every entry instead of computing one.
    #[arg(long)]
    pub score_sigma: Option<f64>,
    /// Whether --score-sigma is a standard deviation or a variance.
    #[arg(long, value_enum, default_value_t = ReadingArg::Std)]
    pub reading: ReadingArg,
    /// One residual per line for the hidden test ratings [default: Δ = score].
    #[arg(long)]
    pub deltas: Option<PathBuf>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub scale: ScaleArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 50)]
    pub users: usize,
    #[arg(long, default_value_t = 20)]
    pub items: usize,
    /// Repeated trials per (user, item).
    #[arg(long, default_value_t = 5)]
    pub trials: u32,
    /// Lower end of the uniform density of rating means.
    #[arg(long, default_value_t = 1.0)]
    pub mean_low: f64,
    /// Upper end of the uniform density of rating means.
    #[arg(long, default_value_t = 5.0)]
    pub mean_high: f64,
    /// σ density of the simulated raters [default family: uniform on [0, 1]].
    #[command(flatten)]
    pub model: ModelArgs,
    /// Keep raw Gaussian draws instead of whole stars within the scale.
    #[arg(long)]
    pub continuous: bool,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// Trial table output.
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth densities output [default: <out> with a .truth.csv suffix].
    #[arg(long)]
    pub truth_out: Option<PathBuf>,
    /// Synthetic systems as name:noise pairs, e.g. a:0.8,b:0.9.
    #[arg(long, value_delimiter = ',', value_parser = parse_system)]
    pub systems: Vec<(String, f64)>,
    /// Predictions output; required with --systems.
    #[arg(long)]
    pub predictions_out: Option<PathBuf>,
    #[command(flatten)]
    pub scale: ScaleArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrialsArgs {
    /// Repeated-trial ratings (user,item,trial,rating).
    #[arg(long)]
    pub trials: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricArg::Rmse)]
    pub metric: MetricArg,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long)]
    pub unbounded: bool,
    #[command(flatten)]
    pub scale: ScaleArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    /// Test-set sizes, e.g. 100,1e3,1e4.
    #[arg(long, value_delimiter = ',', value_parser = parse_count, required = true)]
    pub n_grid: Vec<u64>,
    /// Homogeneous per-rating σ values.
    #[arg(long, value_delimiter = ',')]
    pub sigma_grid: Vec<f64>,
    /// Residual shared by every rating.
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    /// Also draw heterogeneous σ populations from the model below, one row per n.
    #[arg(long)]
    pub population: bool,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub scale: ScaleArgs,
}

fn parse_system(s: &str) -> Result<(String, f64), String> {
    let (name, noise) = s
        .rsplit_once(':')
        .ok_or_else(|| format!("expected name:noise, got {s:?}"))?;
    let noise: f64 = noise.parse().map_err(|_| format!("invalid noise level {noise:?}"))?;
    if name.is_empty() || !(noise.is_finite() && noise >= 0.0) {
        return Err(format!("invalid system spec {s:?}"));
    }
    Ok((name.to_owned(), noise))
}

/// Accepts plain integers and integral scientific notation such as `2.8e6`.
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let v: f64 = s.parse().map_err(|_| format!("invalid count {s:?}"))?;
    if v.fract() == 0.0 && v >= 0.0 && v <= u64::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(format!("count {s:?} is not a whole number"))
    }
}

/// What a command produced: a report for stdout, or nothing (files written).
pub type Outcome = Option<Report>;

pub fn run(cli: &Cli) -> CliResult<Outcome> {
    match &cli.command {
        Command::Eval(a) => cmd_eval(a).map(Some),
        Command::Rank(a) => cmd_rank(a).map(Some),
        Command::Audit(a) => cmd_audit(a).map(Some),
        Command::Simulate(a) => cmd_simulate(a).map(|_| None),
        Command::Trials(a) => cmd_trials(a).map(Some),
        Command::Sweep(a) => cmd_sweep(a).map(Some),
    }
}

fn metadata<A: Serialize>(command: &str, args: &A, seed: Option<u64>) -> Metadata {
    let mut meta = Metadata::new(command);
    meta.seed = seed;
    if let Ok(serde_json::Value::Object(map)) = serde_json::to_value(args) {
        meta.flags = map.into_iter().collect();
    }
    meta
}

/// Reads a whole input file and records its digest.
fn read_input(path: &Path, role: &str, meta: &mut Metadata) -> CliResult<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Read {
        path: path.display().to_string(),
        source,
    })?;
    meta.inputs.push(InputFile {
        role: role.to_owned(),
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    });
    Ok(bytes)
}

fn located<T>(path: &Path, r: uncertain_eval::Result<T>) -> CliResult<T> {
    r.map_err(|source| CliError::Input {
        path: path.display().to_string(),
        source,
    })
}

fn load_ratings(
    source: &RatingSource,
    scale: Option<Scale>,
    meta: &mut Metadata,
    warnings: &mut Vec<String>,
) -> CliResult<Vec<UncertainRating>> {
    if let Some(path) = &source.ratings {
        let bytes = read_input(path, "ratings", meta)?;
        let table = located(path, parse_trials(&bytes[..], scale))?;
        let ratings = estimate_from_trials(&table)?;
        let single = ratings.iter().filter(|r| r.single_trial()).count();
        if single > 0 {
            warnings.push(format!(
                "{single} of {} ratings have a single trial and carry σ = 0",
                ratings.len()
            ));
        }
        Ok(ratings)
    } else if let Some(path) = &source.truth {
        let bytes = read_input(path, "truth", meta)?;
        located(path, parse_ground_truth(&bytes[..]))
    } else {
        Err(CliError::Usage("either --ratings or --truth is required".into()))
    }
}

fn load_predictions(path: &Path, meta: &mut Metadata) -> CliResult<PredictionTable> {
    let bytes = read_input(path, "predictions", meta)?;
    located(path, parse_predictions(&bytes[..]))
}

/// The ratings with each system's predictor attached, systems sorted by name.
fn per_system(
    ratings: &[UncertainRating],
    predictions: &PredictionTable,
) -> CliResult<Vec<(String, Vec<UncertainRating>)>> {
    predictions
        .systems()
        .into_iter()
        .map(|system| {
            let with = ratings
                .iter()
                .map(|r| {
                    let p = predictions.get(&system, &r.user, &r.item).ok_or_else(|| {
                        uncertain_eval::Error::MissingPrediction {
                            system: system.clone(),
                            user: r.user.clone(),
                            item: r.item.clone(),
                        }
                    })?;
                    Ok(r.clone().with_predictor(p))
                })
                .collect::<CliResult<Vec<_>>>()?;
            Ok((system, with))
        })
        .collect()
}

fn analytic(metric: Metric, ratings: &[UncertainRating]) -> CliResult<uncertain_eval::MetricDistribution> {
    Ok(match metric {
        Metric::Rmse => uncertain_eval::rmse_distribution(ratings)?,
        Metric::Mse => uncertain_eval::mse_distribution(ratings)?,
        Metric::Mae => return Err(CliError::Usage("mae has no closed form; pass --mc".into())),
    })
}

/// Seed of system `s` in a multi-system Monte Carlo run.
fn system_seed(root: u64, s: usize) -> u64 {
    derive_seed(root, s as u64)
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<Report> {
    let metric = Metric::from(args.metric);
    if metric == Metric::Mae && args.mc.is_none() {
        return Err(CliError::Usage("mae has no closed form; pass --mc <samples>".into()));
    }
    let seed = args.mc.map(|_| args.seed.unwrap_or(0));
    let mut meta = metadata("eval", args, seed);
    let mut warnings = Vec::new();
    let scale = if args.unbounded {
        None
    } else {
        Some(args.scale.scale()?)
    };
    let ratings = load_ratings(&args.source, scale, &mut meta, &mut warnings)?;
    let predictions = load_predictions(&args.predictions, &mut meta)?;
    let mut degenerate = false;
    let systems = per_system(&ratings, &predictions)?
        .into_iter()
        .enumerate()
        .map(|(s, (system, rs))| {
            let a = if metric == Metric::Mae {
                None
            } else {
                Some(analytic(metric, &rs)?)
            };
            let mc = match (args.mc, seed) {
                (Some(samples), Some(root)) => {
                    Some(mc_metric_distribution(&rs, metric, system_seed(root, s), samples)?)
                }
                _ => None,
            };
            if a.as_ref().is_some_and(|d| d.degenerate) {
                degenerate = true;
                warnings.push(format!("{system}: every σ and residual is zero; point mass at 0"));
            }
            if a.as_ref().or(mc.as_ref()).is_some_and(|d| d.clt_approx) {
                warnings.push(format!(
                    "{system}: fewer than 30 ratings; Gaussian shape is approximate"
                ));
            }
            Ok(SystemEval {
                system,
                analytic: a,
                monte_carlo: mc,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut report = Report::new(Body::MetricDistribution(EvalPayload { metric, systems }), meta);
    report.warnings = warnings;
    report.degenerate = degenerate;
    Ok(report)
}

pub fn cmd_rank(args: &RankArgs) -> CliResult<Report> {
    let seed = args.orders.map(|_| args.seed.unwrap_or(0));
    let mut meta = metadata("rank", args, seed);
    let mut warnings = Vec::new();
    let systems: Vec<(String, Gaussian)> = if let Some(path) = &args.scores {
        let bytes = read_input(path, "scores", &mut meta)?;
        located(path, parse_scores(&bytes[..]))?
    } else {
        let predictions = args
            .predictions
            .as_ref()
            .ok_or_else(|| CliError::Usage("rank needs --scores, or --predictions with --ratings or --truth".into()))?;
        let source = RatingSource {
            ratings: args.ratings.clone(),
            truth: args.truth.clone(),
        };
        let scale = if args.unbounded {
            None
        } else {
            Some(args.scale.scale()?)
        };
        let ratings = load_ratings(&source, scale, &mut meta, &mut warnings)?;
        let predictions = load_predictions(predictions, &mut meta)?;
        let metric = Metric::from(args.metric);
        per_system(&ratings, &predictions)?
            .into_iter()
            .map(|(name, rs)| Ok((name, analytic(metric, &rs)?.gaussian)))
            .collect::<CliResult<_>>()?
    };
    let degenerate = systems.iter().any(|(_, g)| g.is_degenerate());
    if degenerate {
        warnings.push("some score densities have zero variance; their error probabilities are 0, ½ or 1".into());
    }
    let mut matrix = error_matrix(&systems)?;
    if args.merge_ties {
        matrix = matrix.merge_ties();
    }
    let orders = match (args.orders, seed) {
        (Some(samples), Some(root)) => Some(order_probabilities(&systems, root, samples)?),
        _ => None,
    };
    let mut report = Report::new(
        Body::ErrorMatrix(MatrixPayload {
            entries: None,
            matrices: vec![AuditMatrix {
                variant: "point".into(),
                matrix,
            }],
            orders,
        }),
        meta,
    );
    report.warnings = warnings;
    report.degenerate = degenerate;
    Ok(report)
}

fn parse_deltas(bytes: &[u8], path: &Path) -> CliResult<Vec<f64>> {
    let text = std::str::from_utf8(bytes).map_err(|_| CliError::Input {
        path: path.display().to_string(),
        source: uncertain_eval::Error::Parse {
            line: 0,
            message: "not valid UTF-8".into(),
        },
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Input {
                    path: path.display().to_string(),
                    source: uncertain_eval::Error::Parse {
                        line: i + 1,
                        message: format!("invalid residual {:?}", l.trim()),
                    },
                })
        })
        .collect()
}

pub fn cmd_audit(args: &AuditArgs) -> CliResult<Report> {
    let seed = args.seed.unwrap_or(0);
    let mut meta = metadata("audit", args, Some(seed));
    let scale = args.scale.scale()?;
    let bytes = read_input(&args.leaderboard, "leaderboard", &mut meta)?;
    let board = located(&args.leaderboard, parse_leaderboard(&bytes[..]))?;
    let mut warnings = board.warnings.clone();

    let deltas = match &args.deltas {
        Some(path) => {
            let bytes = read_input(path, "deltas", &mut meta)?;
            Some(parse_deltas(&bytes, path)?)
        }
        None => None,
    };
    let n = args
        .n
        .or(deltas.as_ref().map(|d| d.len() as u64))
        .unwrap_or(NETFLIX_TEST_RATINGS);
    let approach = match args.approach {
        ApproachArg::A => Approach::A,
        ApproachArg::B => Approach::B,
        ApproachArg::C => Approach::C,
    };
    let mut cfg = AuditConfig::new(n, approach, seed);
    if let Some(d) = deltas {
        cfg.deltas = DeltaAllocation::PerRating(d.into());
    }
    cfg.fixed_deviation = args.score_sigma.map(|value| FixedDeviation {
        value,
        reading: match args.reading {
            ReadingArg::Std => DeviationReading::StdDev,
            ReadingArg::Variance => DeviationReading::Variance,
        },
    });

    let model = match (approach, &args.trials) {
        (_, _) if cfg.fixed_deviation.is_some() => args.model.build(scale, FamilyArg::Beta)?,
        (Approach::A, Some(path)) => {
            let bytes = read_input(path, "trials", &mut meta)?;
            let table = located(path, parse_trials(&bytes[..], Some(scale)))?;
            let ratings = estimate_from_trials(&table)?;
            let family = match args.fit_family {
                FitFamilyArg::Beta => FitFamily::Beta,
                FitFamilyArg::Uniform => FitFamily::Uniform,
                FitFamilyArg::Triangular => FitFamily::Triangular,
            };
            let bias = match args.bias {
                BiasArg::Raw => SigmaBias::Raw,
                BiasArg::Corrected => SigmaBias::SmallSampleCorrected,
            };
            fit_population_sigma_with(&ratings, scale, family, bias)?
        }
        (Approach::A, None) => return Err(CliError::Usage("approach A needs --trials".into())),
        _ => args.model.build(scale, FamilyArg::Beta)?,
    };
    let degenerate = model.is_degenerate();
    if degenerate {
        warnings.push("fitted σ density is degenerate (all repeated ratings identical)".into());
    }

    let result = audit(&board.entries, &cfg, &model)?;
    let mut report = Report::new(
        Body::ErrorMatrix(MatrixPayload {
            entries: Some(result.entries),
            matrices: result.matrices,
            orders: None,
        }),
        meta,
    );
    report.warnings = warnings;
    report.degenerate = degenerate;
    Ok(report)
}

/// Summary of the files written by `simulate`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOutput {
    pub trials: PathBuf,
    pub truth: PathBuf,
    pub predictions: Option<PathBuf>,
}

fn create(path: &Path) -> CliResult<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<SimulateOutput> {
    if !args.systems.is_empty() && args.predictions_out.is_none() {
        return Err(CliError::Usage("--systems needs --predictions-out".into()));
    }
    let scale = args.scale.scale()?;
    let sigma_model = if args.model.family.is_none() && args.model.upper.is_none() {
        UncertaintyModel::uniform(scale, 1.0)?
    } else {
        args.model.build(scale, FamilyArg::Uniform)?
    };
    let seed = args.seed.unwrap_or(0);
    let cfg = SimConfig {
        users: args.users,
        items: args.items,
        trials: args.trials,
        scale,
        mean_distribution: MeanDistribution::Uniform {
            low: args.mean_low,
            high: args.mean_high,
        },
        sigma_model,
        discretize: !args.continuous,
        seed,
    };
    let sim = simulate(&cfg)?;
    let truth_path = args.truth_out.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".truth.csv");
        PathBuf::from(p)
    });
    let mut out = create(&args.out)?;
    write_trials(&mut out, &sim.trials)?;
    std::io::Write::flush(&mut out)?;
    let mut out = create(&truth_path)?;
    write_ground_truth(&mut out, &sim.truth)?;
    std::io::Write::flush(&mut out)?;
    let predictions = match &args.predictions_out {
        Some(path) if !args.systems.is_empty() => {
            let table = simulate_predictions(&sim.truth, &args.systems, seed)?;
            let mut out = create(path)?;
            write_predictions(&mut out, &table)?;
            std::io::Write::flush(&mut out)?;
            Some(path.clone())
        }
        _ => None,
    };
    Ok(SimulateOutput {
        trials: args.out.clone(),
        truth: truth_path,
        predictions,
    })
}

pub fn cmd_trials(args: &TrialsArgs) -> CliResult<Report> {
    if args.bins == 0 {
        return Err(CliError::Usage("--bins must be at least 1".into()));
    }
    let mut meta = metadata("trials", args, None);
    let scale = if args.unbounded {
        None
    } else {
        Some(args.scale.scale()?)
    };
    let bytes = read_input(&args.trials, "trials", &mut meta)?;
    let table = located(&args.trials, parse_trials(&bytes[..], scale))?;
    let predictions = load_predictions(&args.predictions, &mut meta)?;
    let metric = Metric::from(args.metric);
    let series = trial_metric_series(&table, &predictions, metric)?;

    let all: Vec<f64> = series.iter().flat_map(|s| s.values.iter().copied()).collect();
    let (mut lo, mut hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let mut edges = Vec::new();
    let systems = series
        .into_iter()
        .map(|s| {
            let h = histogram_with_range(&s.values, args.bins, lo, hi)?;
            edges = h.bin_edges.clone();
            let (min, max) = s.range();
            Ok(SystemHistogram {
                system: s.system,
                trials: s.trials,
                values: s.values,
                min,
                max,
                counts: h.counts,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Report::new(
        Body::Histogram(HistogramPayload {
            metric,
            bin_edges: edges,
            systems,
        }),
        meta,
    ))
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<Report> {
    if args.n_grid.is_empty() || args.n_grid.contains(&0) {
        return Err(CliError::Usage("--n-grid needs at least one positive count".into()));
    }
    if args.sigma_grid.is_empty() && !args.population {
        return Err(CliError::Usage(
            "--sigma-grid is empty; give σ values or --population".into(),
        ));
    }
    if !args.delta.is_finite() {
        return Err(CliError::Usage("--delta must be finite".into()));
    }
    let seed = args.population.then(|| args.seed.unwrap_or(0));
    let meta = metadata("sweep", args, seed);
    let mut rows = Vec::new();
    let mut degenerate = false;
    for &n in &args.n_grid {
        for &sigma in &args.sigma_grid {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(CliError::Usage(format!("invalid σ {sigma} in --sigma-grid")));
            }
            let mut sums = PropagationSums::new();
            sums.push_repeated(sigma * sigma, args.delta, n);
            let d = sums.rmse()?;
            degenerate |= d.degenerate;
            rows.push(row(n, Some(sigma), args.delta, d.gaussian));
        }
    }
    if let Some(root) = seed {
        let model = args.model.build(args.scale.scale()?, FamilyArg::Uniform)?;
        for (k, &n) in args.n_grid.iter().enumerate() {
            let mut rng = derive_rng(root, k as u64);
            let sigmas = draw_sigma(&model, &mut rng, n as usize)?;
            let mut sums = PropagationSums::new();
            for s in sigmas {
                sums.push(s * s, args.delta);
            }
            let d = sums.rmse()?;
            degenerate |= d.degenerate;
            rows.push(row(n, None, args.delta, d.gaussian));
        }
    }
    let mut report = Report::new(Body::Sweep(SweepPayload { rows }), meta);
    if degenerate {
        report.degenerate = true;
        report.warnings.push("σ = 0 with Δ = 0 gives a point mass at 0".into());
    }
    Ok(report)
}

fn row(n: u64, sigma: Option<f64>, delta: f64, g: Gaussian) -> SweepRow {
    SweepRow {
        n,
        sigma,
        delta,
        mean: g.mean(),
        variance: g.variance(),
        std: g.std_dev(),
    }
}
