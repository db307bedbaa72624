//! Command-line front end.
//!
//! Every command writes a first line `# manifest: {json}` holding the full
//! parameter set. `replay` re-runs a manifest and reproduces the output byte
//! for byte.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{
    chebyshev_width, default_eps_grid, fourth_moment_width, gaussian_benchmark_width,
    kurtosis_upper_width, log_grid, lower_bound_kurtosis, lower_bound_variance,
};
use crate::error::{Error, Result};
use crate::iterated::{
    build_schedule, iterated_width, run_iterated, Center, EpsSplit, GammaRule, IteratedConfig,
    Start, StepCount,
};
use crate::jitter::{JitterSource, ALGORITHM_ID};
use crate::kurtosis::{kurtosis_bounds, run_kurtosis_scheme, KurtosisConfig, KurtosisJitter};
use crate::last_step::{estimate_last_step, last_step_curve, LastStepPlan};
use crate::lepski::{adapt, deviation_bound, GridLimits, LepskiConfig};
use crate::simulation::{run_coverage, run_coverage_threads, ExperimentReport, Law, Method};
use crate::special::TruncationKind;
use crate::truncated::{
    clipped_width, estimate_one_shot, tuned_width, ConfidenceEstimate, PriorBounds, Sample,
};

const MANIFEST_PREFIX: &str = "# manifest: ";

#[derive(Debug, Parser)]
#[command(
    name = "truncmean",
    version,
    about = "Truncated mean estimators with non-asymptotic confidence intervals"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Seed of the jitter and of the simulated samples.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for `simulate` (does not change the output).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Timestamp recorded in the manifest; defaults to SOURCE_DATE_EPOCH, else null.
    #[arg(long, global = true)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Text,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Estimate the mean of a sample file (one value per line, '#' comments).
    Estimate(EstimateArgs),
    /// Tabulate half-width curves against epsilon as CSV.
    Curves(CurvesArgs),
    /// Run a seeded coverage experiment.
    Simulate(SimulateArgs),
    /// Compare the lower bounds with the matching upper bounds.
    LowerBounds(LowerBoundsArgs),
    /// Re-run the manifest found on the first line of an output file.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    OneShot,
    Iterated,
    LastStep,
    Kurtosis,
    Lepski,
    /// Empirical mean with a fixed half-width (simulate only).
    EmpiricalMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitArg {
    Tenths,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaArg {
    Stated,
    Cumulative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncArg {
    Smooth,
    Clipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawArg {
    Gaussian,
    ThreePoint,
    FourPoint,
    Bernoulli,
    StudentT,
}

/// Settings of the iterated schedules.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct IterFlags {
    /// Number of steps, or `auto`.
    #[arg(long, default_value = "10")]
    pub steps: String,
    /// Jitter fraction of steps 2..k.
    #[arg(long, default_value_t = 0.1)]
    pub x: f64,
    #[arg(long, value_enum, default_value_t = SplitArg::Tenths)]
    pub eps_split: SplitArg,
    #[arg(long, value_enum, default_value_t = GammaArg::Stated)]
    pub gamma: GammaArg,
    #[arg(long, value_enum, default_value_t = TruncArg::Smooth)]
    pub truncation: TruncArg,
}

impl IterFlags {
    fn config(&self, start: Start) -> Result<IteratedConfig> {
        let steps = if self.steps == "auto" {
            StepCount::Auto { max: 40 }
        } else {
            StepCount::Fixed(self.steps.parse().map_err(|_| {
                Error::Parse(format!(
                    "--steps expects an integer or `auto`, got `{}`",
                    self.steps
                ))
            })?)
        };
        Ok(IteratedConfig {
            start,
            steps,
            x: self.x,
            split: match self.eps_split {
                SplitArg::Tenths => EpsSplit::Tenths,
                SplitArg::Uniform => EpsSplit::Uniform,
            },
            gamma: match self.gamma {
                GammaArg::Stated => GammaRule::Stated,
                GammaArg::Cumulative => GammaRule::Cumulative,
            },
            kind: self.kind(),
        })
    }

    fn kind(&self) -> TruncationKind {
        match self.truncation {
            TruncArg::Smooth => TruncationKind::Smooth,
            TruncArg::Clipped => TruncationKind::Clipped,
        }
    }
}

/// Settings of the kurtosis and adaptive schemes.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SchemeFlags {
    /// Mean/variance rounds of the kurtosis scheme.
    #[arg(long, default_value_t = 4)]
    pub rounds: usize,
    /// Constant jitter fraction for the kurtosis scheme (tapered 0.5/0.1 when absent).
    #[arg(long)]
    pub kurtosis_x: Option<f64>,
    /// Reference variance of the adaptive grid.
    #[arg(long, default_value_t = 1.0)]
    pub reference: f64,
    /// Largest mantissa depth of the adaptive grid.
    #[arg(long, default_value_t = 4)]
    pub d_max: u32,
    /// Overrides the last-step budget.
    #[arg(long)]
    pub eps2: Option<f64>,
    /// Overrides the last-step beta search.
    #[arg(long)]
    pub beta: Option<f64>,
}

impl SchemeFlags {
    fn kurtosis(&self) -> KurtosisConfig {
        KurtosisConfig {
            rounds: self.rounds,
            jitter: self
                .kurtosis_x
                .map_or(KurtosisJitter::Tapered, KurtosisJitter::Constant),
        }
    }

    fn lepski(&self, iter: &IterFlags) -> Result<LepskiConfig> {
        Ok(LepskiConfig {
            reference: self.reference,
            limits: GridLimits {
                d_max: self.d_max,
                ..GridLimits::default()
            },
            base: iter.config(Start::EmpiricalMean)?,
        })
    }

    fn last_step(&self, iterated: IteratedConfig) -> LastStepPlan {
        LastStepPlan {
            iterated,
            eps2: self.eps2,
            beta: self.beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// One-sided budget; outputs report the two-sided 2·eps.
    #[arg(long)]
    pub eps: f64,
    /// Variance prior.
    #[arg(long)]
    pub v0: Option<f64>,
    /// Prior center.
    #[arg(long, default_value_t = 0.0)]
    pub theta0: f64,
    /// Prior distance |theta0 − m| ≤ delta0; selects a known-center start.
    #[arg(long)]
    pub delta0: Option<f64>,
    /// Uniform kurtosis bound.
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    pub jitter: OnOff,
    #[command(flatten)]
    pub iter: IterFlags,
    #[command(flatten)]
    pub scheme: SchemeFlags,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GridFlags {
    /// Explicit comma-separated decreasing grid; an empty string gives an empty grid.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub eps_hi: Option<f64>,
    #[arg(long)]
    pub eps_lo: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
}

impl GridFlags {
    fn grid(&self) -> Result<Vec<f64>> {
        if let Some(g) = &self.grid {
            return g
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad grid value `{s}`")))
                })
                .collect();
        }
        if self.eps_hi.is_none() && self.eps_lo.is_none() && self.points.is_none() {
            return Ok(default_eps_grid());
        }
        log_grid(
            self.eps_hi.unwrap_or(0.1),
            self.eps_lo.unwrap_or(1e-15),
            self.points.unwrap_or(57),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CurvesArgs {
    #[arg(long)]
    pub n: usize,
    /// Variance (or its prior bound).
    #[arg(long, default_value_t = 1.0)]
    pub v: f64,
    /// Prior distance for the known-center curves.
    #[arg(long, default_value_t = 1.0)]
    pub delta0: f64,
    /// Uniform kurtosis bound for the kurtosis curves.
    #[arg(long, default_value_t = 3.0)]
    pub c: f64,
    /// Classical kurtosis for the empirical-mean bounds; defaults to c.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Comma-separated curve names.
    #[arg(long, default_value = "chebyshev,gaussian-benchmark,iterated")]
    pub which: String,
    #[command(flatten)]
    pub grid: GridFlags,
    #[command(flatten)]
    pub iter: IterFlags,
    #[command(flatten)]
    pub scheme: SchemeFlags,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub law: LawArg,
    /// Sample size.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub replicates: u64,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// One-sided budget of the method.
    #[arg(long)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.0)]
    pub mean: f64,
    #[arg(long, default_value_t = 1.0)]
    pub variance: f64,
    /// Three-point variance.
    #[arg(long, default_value_t = 1.0)]
    pub v: f64,
    /// Three-point scale; tuned to the variance lower bound when absent.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Four-point kurtosis bound, also used by the kurtosis method.
    #[arg(long, default_value_t = 3.0)]
    pub c: f64,
    /// Budget used to build the worst-case laws; defaults to eps.
    #[arg(long)]
    pub law_eps: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, default_value_t = 3.0)]
    pub df: f64,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Variance prior; defaults to the true variance.
    #[arg(long)]
    pub v0: Option<f64>,
    /// Known-center start at distance delta0.
    #[arg(long)]
    pub delta0: Option<f64>,
    /// The prior center is m + offset.
    #[arg(long, default_value_t = 0.0)]
    pub offset: f64,
    /// Half-width of the empirical-mean method; the variance lower bound when
    /// absent. Deviations equal to it count as misses.
    #[arg(long)]
    pub half_width: Option<f64>,
    #[command(flatten)]
    pub iter: IterFlags,
    #[command(flatten)]
    pub scheme: SchemeFlags,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct LowerBoundsArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub v: f64,
    #[arg(long, default_value_t = 6.0)]
    pub c: f64,
    /// Classical kurtosis of the upper bound; defaults to c.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[command(flatten)]
    pub grid: GridFlags,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// An output file whose first line is a manifest.
    pub path: PathBuf,
}

/// Everything needed to reproduce an output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub params: Command,
    pub seed: u64,
    pub format: Format,
    pub algorithm_id: String,
    pub version: String,
    pub timestamp: Option<String>,
    /// Hex sha256 of the input file, for `estimate`.
    pub input_sha256: Option<String>,
}

impl RunManifest {
    pub fn to_line(&self) -> String {
        format!(
            "{MANIFEST_PREFIX}{}",
            serde_json::to_string(self).expect("serializable manifest")
        )
    }

    pub fn parse_line(line: &str) -> Result<RunManifest> {
        let body = line
            .strip_prefix(MANIFEST_PREFIX)
            .ok_or_else(|| Error::Parse("the first line is not a manifest".into()))?;
        serde_json::from_str(body).map_err(|e| Error::Parse(format!("bad manifest: {e}")))
    }
}

/// Reads the manifest on the first line of `path`.
pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path)?;
    RunManifest::parse_line(text.lines().next().unwrap_or(""))
}

/// Formats a float with the shortest representation that round-trips.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:?}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Exit code of an error: 2 usage or parse, 3 infeasible, 4 no root, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) | Error::InvalidParameter(_) | Error::Domain { .. } => 2,
        Error::Infeasible(_) | Error::Admissibility { .. } | Error::EmptyFamily(_) => 3,
        Error::NoRoot(_) => 4,
        Error::Numerical(_) | Error::Io(_) => 1,
    }
}

/// Parses a sample file: one decimal value per line, `#` comments and blank
/// lines ignored.
pub fn parse_sample(text: &str) -> Result<Sample> {
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let y: f64 = t
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: `{t}` is not a number", i + 1)))?;
        if !y.is_finite() {
            return Err(Error::Parse(format!(
                "line {}: non-finite value `{t}`",
                i + 1
            )));
        }
        values.push(y);
    }
    if values.is_empty() {
        return Err(Error::Parse("the input holds no observations".into()));
    }
    Sample::new(values)
}

struct Context {
    seed: u64,
    format: Format,
    threads: Option<usize>,
    timestamp: Option<String>,
}

impl Context {
    fn manifest(&self, command: &Command, input_sha256: Option<String>) -> RunManifest {
        let name = match command {
            Command::Estimate(_) => "estimate",
            Command::Curves(_) => "curves",
            Command::Simulate(_) => "simulate",
            Command::LowerBounds(_) => "lower-bounds",
            Command::Replay(_) => "replay",
        };
        RunManifest {
            command: name.into(),
            params: command.clone(),
            seed: self.seed,
            format: self.format,
            algorithm_id: ALGORITHM_ID.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp: self.timestamp.clone(),
            input_sha256,
        }
    }
}

/// Runs the command line `args` (program name first), writing the result to
/// `out` unless `--out` is given and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let timestamp = cli
        .timestamp
        .clone()
        .or_else(|| std::env::var("SOURCE_DATE_EPOCH").ok());
    match render_cli(&cli, timestamp).and_then(|text| emit(&text, cli.out.as_deref(), out)) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Output of a command line (without the program name) as a string, with the
/// manifest timestamp set to `timestamp`; `--out` is ignored.
pub fn render<S: AsRef<str>>(args: &[S], timestamp: Option<String>) -> Result<String> {
    let argv = std::iter::once("truncmean").chain(args.iter().map(|a| a.as_ref()));
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::Parse(e.to_string()))?;
    render_cli(&cli, timestamp)
}

fn render_cli(cli: &Cli, timestamp: Option<String>) -> Result<String> {
    let ctx = Context {
        seed: cli.seed,
        format: cli.format,
        threads: cli.threads,
        timestamp: cli.timestamp.clone().or(timestamp),
    };
    match &cli.command {
        Command::Replay(r) => replay(&r.path, cli.threads),
        cmd => execute(cmd, &ctx),
    }
}

fn emit(text: &str, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Re-runs the manifest of an output file and returns the regenerated text.
pub fn replay(path: &Path, threads: Option<usize>) -> Result<String> {
    let m = read_manifest(path)?;
    if m.version != env!("CARGO_PKG_VERSION") || m.algorithm_id != ALGORITHM_ID {
        return Err(Error::InvalidParameter(format!(
            "manifest written by version {} with {}; this is version {} with {}",
            m.version,
            m.algorithm_id,
            env!("CARGO_PKG_VERSION"),
            ALGORITHM_ID
        )));
    }
    if matches!(m.params, Command::Replay(_)) {
        return Err(Error::Parse("a manifest cannot hold a replay".into()));
    }
    let ctx = Context {
        seed: m.seed,
        format: m.format,
        threads,
        timestamp: m.timestamp.clone(),
    };
    if let (Command::Estimate(a), Some(expected)) = (&m.params, &m.input_sha256) {
        let got = sha256_hex(&std::fs::read(&a.input)?);
        if &got != expected {
            return Err(Error::InvalidParameter(format!(
                "input {} changed since the run (sha256 {got}, expected {expected})",
                a.input.display()
            )));
        }
    }
    execute(&m.params, &ctx)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn execute(command: &Command, ctx: &Context) -> Result<String> {
    match command {
        Command::Estimate(a) => cmd_estimate(command, a, ctx),
        Command::Curves(a) => cmd_curves(command, a, ctx),
        Command::Simulate(a) => cmd_simulate(command, a, ctx),
        Command::LowerBounds(a) => cmd_lower_bounds(command, a, ctx),
        Command::Replay(_) => Err(Error::Parse("nested replay".into())),
    }
}

fn need(v: Option<f64>, flag: &str, method: &str) -> Result<f64> {
    v.ok_or_else(|| Error::InvalidParameter(format!("--{flag} is required by --method {method}")))
}

fn cmd_estimate(command: &Command, a: &EstimateArgs, ctx: &Context) -> Result<String> {
    let bytes = std::fs::read(&a.input)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Error::Parse("the input is not UTF-8".into()))?;
    let sample = parse_sample(&text)?;
    let jitter = match a.jitter {
        OnOff::On => JitterSource::new(ctx.seed),
        OnOff::Off => JitterSource::off(),
    };
    let start = match a.delta0 {
        Some(d) => Start::Known { delta0: d },
        None => Start::EmpiricalMean,
    };
    let center = match start {
        Start::Known { .. } => Center::Given(a.theta0),
        Start::EmpiricalMean => Center::EmpiricalMean,
    };
    let mut variance = None;
    let est: ConfidenceEstimate = match a.method {
        MethodArg::OneShot => {
            let v0 = need(a.v0, "v0", "one-shot")?;
            let delta0 = need(a.delta0, "delta0", "one-shot")?;
            estimate_one_shot(
                &sample,
                a.theta0,
                PriorBounds::variance(v0, delta0),
                a.eps,
                a.iter.kind(),
            )?
        }
        MethodArg::Iterated => {
            let v0 = need(a.v0, "v0", "iterated")?;
            let sched = build_schedule(sample.len(), v0, a.eps, &a.iter.config(start)?)?;
            run_iterated(&sample, center, &sched, jitter)?
        }
        MethodArg::LastStep => {
            let v0 = need(a.v0, "v0", "last-step")?;
            let plan = a.scheme.last_step(a.iter.config(start)?);
            estimate_last_step(&sample, center, v0, a.eps, &plan, jitter)?
        }
        MethodArg::Kurtosis => {
            let c = need(a.c, "c", "kurtosis")?;
            let sched = a.scheme.kurtosis().schedule(sample.len(), c, a.eps)?;
            let outcome = run_kurtosis_scheme(&sample, a.theta0, &sched, jitter)?;
            variance = Some(outcome.variance_interval);
            outcome.mean
        }
        MethodArg::Lepski => adapt(&sample, a.eps, &a.scheme.lepski(&a.iter)?, jitter)?,
        MethodArg::EmpiricalMean => {
            return Err(Error::InvalidParameter(
                "--method empirical-mean is only available in simulate".into(),
            ))
        }
    };
    let mut s = ctx.manifest(command, Some(sha256_hex(&bytes))).to_line();
    s.push('\n');
    let md = &est.metadata;
    match ctx.format {
        Format::Text => {
            let _ = writeln!(s, "method: {}", md.method);
            let _ = writeln!(s, "point: {}", fmt_f64(est.point));
            if md.theoretical_only {
                let _ = writeln!(
                    s,
                    "half_width: theoretical-only {}",
                    fmt_f64(est.half_width)
                );
            } else {
                let _ = writeln!(s, "half_width: {}", fmt_f64(est.half_width));
            }
            let _ = writeln!(s, "two_sided_miss: {}", fmt_f64(est.miss_probability));
            let _ = writeln!(s, "feasible: {}", est.feasible);
            if let Some(x) = md.alpha {
                let _ = writeln!(s, "alpha: {}", fmt_f64(x));
            }
            if let Some(x) = md.beta {
                let _ = writeln!(s, "beta: {}", fmt_f64(x));
            }
            if let Some((lo, hi)) = variance {
                let _ = writeln!(s, "variance_interval: {} {}", fmt_f64(lo), fmt_f64(hi));
            }
            if let Some(d) = &md.schedule_digest {
                let _ = writeln!(s, "schedule_digest: {d}");
            }
        }
        Format::Csv => {
            s.push_str("method,point,half_width,two_sided_miss,feasible,theoretical_only,alpha,beta,variance_lower,variance_upper\n");
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                md.method,
                fmt_f64(est.point),
                fmt_f64(est.half_width),
                fmt_f64(est.miss_probability),
                est.feasible,
                md.theoretical_only,
                fmt_opt(md.alpha),
                fmt_opt(md.beta),
                fmt_opt(variance.map(|v| v.0)),
                fmt_opt(variance.map(|v| v.1)),
            );
        }
    }
    Ok(s)
}

/// Names accepted by `curves --which`.
pub const CURVE_NAMES: &[&str] = &[
    "chebyshev",
    "gaussian-benchmark",
    "tuned",
    "clipped",
    "iterated-known",
    "iterated",
    "last-step",
    "kurtosis-mean",
    "kurtosis-sd-upper",
    "kurtosis-upper",
    "fourth-moment",
    "lower-variance",
    "lower-kurtosis",
    "lepski",
];

/// Curve value at one ε; infeasible or out-of-domain upper bounds become `+∞`
/// and undefined lower bounds `NaN`.
fn curve_value(name: &str, a: &CurvesArgs, eps: f64) -> Result<f64> {
    let (n, v) = (a.n, a.v);
    let sd = v.sqrt();
    let kappa = a.kappa.unwrap_or(a.c);
    let r = match name {
        "chebyshev" => chebyshev_width(n, v, eps),
        "gaussian-benchmark" => gaussian_benchmark_width(n, v, eps),
        "tuned" => tuned_width(n, v, a.delta0, eps).map(|w| w.1),
        "clipped" => clipped_width(n, v, a.delta0, eps).map(|w| w.1),
        "iterated-known" => iterated_width(
            n,
            v,
            eps,
            &a.iter.config(Start::Known { delta0: a.delta0 })?,
        ),
        "iterated" => iterated_width(n, v, eps, &a.iter.config(Start::EmpiricalMean)?),
        "last-step" => last_step_curve(
            n,
            v,
            eps,
            &a.scheme.last_step(a.iter.config(Start::EmpiricalMean)?),
        ),
        "kurtosis-mean" | "kurtosis-sd-upper" => {
            a.scheme.kurtosis().schedule(n, a.c, eps).map(|s| {
                let b = kurtosis_bounds(&s, v, a.delta0 * a.delta0);
                if name == "kurtosis-mean" {
                    b.mean_half_width
                } else {
                    b.sd_upper
                }
            })
        }
        "kurtosis-upper" => kurtosis_upper_width(n, kappa, eps).map(|w| w * sd),
        "fourth-moment" => fourth_moment_width(n, kappa, eps).map(|w| w * sd),
        "lower-variance" => lower_bound_variance(n, v, eps),
        "lower-kurtosis" => lower_bound_kurtosis(n, a.c, eps).map(|w| w * sd),
        "lepski" => deviation_bound(n, v, eps, &a.scheme.lepski(&a.iter)?),
        other => {
            return Err(Error::Parse(format!(
                "unknown curve `{other}`; known: {}",
                CURVE_NAMES.join(", ")
            )))
        }
    };
    let lower = name.starts_with("lower-");
    match r {
        Ok(w) => Ok(w),
        Err(Error::Domain { .. }) if lower => Ok(f64::NAN),
        Err(
            Error::Domain { .. }
            | Error::Infeasible(_)
            | Error::Admissibility { .. }
            | Error::NoRoot(_),
        ) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

fn cmd_curves(command: &Command, a: &CurvesArgs, ctx: &Context) -> Result<String> {
    let names: Vec<&str> = a
        .which
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    for name in &names {
        if !CURVE_NAMES.contains(name) {
            return Err(Error::Parse(format!(
                "unknown curve `{name}`; known: {}",
                CURVE_NAMES.join(", ")
            )));
        }
    }
    let grid = a.grid.grid()?;
    let mut s = ctx.manifest(command, None).to_line();
    s.push('\n');
    s.push_str("epsilon");
    for name in &names {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for &eps in &grid {
        s.push_str(&fmt_f64(eps));
        for name in &names {
            s.push(',');
            s.push_str(&fmt_f64(curve_value(name, a, eps)?));
        }
        s.push('\n');
    }
    Ok(s)
}

fn cmd_lower_bounds(command: &Command, a: &LowerBoundsArgs, ctx: &Context) -> Result<String> {
    let grid = a.grid.grid()?;
    let kappa = a.kappa.unwrap_or(a.c);
    let sd = a.v.sqrt();
    let or_nan = |r: Result<f64>| match r {
        Ok(w) => Ok(w),
        Err(Error::Domain { .. }) => Ok(f64::NAN),
        Err(e) => Err(e),
    };
    let mut s = ctx.manifest(command, None).to_line();
    s.push('\n');
    s.push_str(
        "epsilon,lower-variance,chebyshev,lower-kurtosis,kurtosis-upper,gaussian-benchmark\n",
    );
    for &eps in &grid {
        let row = [
            or_nan(lower_bound_variance(a.n, a.v, eps))?,
            or_nan(chebyshev_width(a.n, a.v, eps))?,
            or_nan(lower_bound_kurtosis(a.n, a.c, eps).map(|w| w * sd))?,
            or_nan(kurtosis_upper_width(a.n, kappa, eps).map(|w| w * sd))?,
            or_nan(gaussian_benchmark_width(a.n, a.v, eps))?,
        ];
        s.push_str(&fmt_f64(eps));
        for w in row {
            s.push(',');
            s.push_str(&fmt_f64(w));
        }
        s.push('\n');
    }
    Ok(s)
}

/// The law and method described by `simulate` flags.
pub fn simulation_setup(a: &SimulateArgs) -> Result<(Law, Method)> {
    let law_eps = a.law_eps.unwrap_or(a.eps);
    let law = match a.law {
        LawArg::Gaussian => Law::Gaussian {
            mean: a.mean,
            variance: a.variance,
        },
        LawArg::ThreePoint => match a.eta {
            Some(eta) => Law::ThreePoint {
                v: a.v,
                eta,
                n: a.n,
            },
            None => Law::three_point_tuned(a.n, a.v, law_eps)?,
        },
        LawArg::FourPoint => Law::FourPoint {
            c: a.c,
            eps: law_eps,
            n: a.n,
        },
        LawArg::Bernoulli => Law::Bernoulli { p: a.p },
        LawArg::StudentT => Law::StudentT {
            df: a.df,
            scale: a.scale,
        },
    };
    law.validate()?;
    let v0 = a.v0.unwrap_or_else(|| law.variance());
    let start = match a.delta0 {
        Some(d) => Start::Known { delta0: d },
        None => Start::EmpiricalMean,
    };
    let method = match a.method {
        MethodArg::EmpiricalMean => Method::EmpiricalMean {
            half_width: match a.half_width {
                Some(w) => w,
                None => lower_bound_variance(a.n, law.variance(), a.eps)?,
            },
            eps: a.eps,
            inclusive: true,
        },
        MethodArg::OneShot => Method::OneShot {
            v0,
            eps: a.eps,
            offset: a.offset,
            kind: a.iter.kind(),
        },
        MethodArg::Iterated => Method::Iterated {
            v0,
            eps: a.eps,
            offset: a.offset,
            config: a.iter.config(start)?,
        },
        MethodArg::LastStep => Method::LastStep {
            v0,
            eps: a.eps,
            plan: a.scheme.last_step(a.iter.config(start)?),
        },
        MethodArg::Kurtosis => Method::Kurtosis {
            c: a.c,
            eps: a.eps,
            offset: a.offset,
            config: a.scheme.kurtosis(),
        },
        MethodArg::Lepski => Method::Lepski {
            eps: a.eps,
            config: a.scheme.lepski(&a.iter)?,
        },
    };
    Ok((law, method))
}

fn cmd_simulate(command: &Command, a: &SimulateArgs, ctx: &Context) -> Result<String> {
    let (law, method) = simulation_setup(a)?;
    let report: ExperimentReport = match ctx.threads {
        Some(t) => run_coverage_threads(&law, &method, a.n, a.replicates, ctx.seed, t)?,
        None => run_coverage(&law, &method, a.n, a.replicates, ctx.seed)?,
    };
    let mut s = ctx.manifest(command, None).to_line();
    s.push('\n');
    s.push_str("replicate,estimate,half_width,miss\n");
    for r in &report.rows {
        let miss = if r.error.is_some() {
            "error"
        } else if r.miss {
            "1"
        } else {
            "0"
        };
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.replicate,
            fmt_f64(r.estimate),
            fmt_f64(r.half_width),
            miss
        );
    }
    let _ = writeln!(
        s,
        "# summary: {}",
        serde_json::to_string(&report).map_err(|e| Error::Numerical(e.to_string()))?
    );
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("truncmean").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn float_formatting() {
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(1.0), "1.0");
        assert_eq!(fmt_f64(1e-15), "1e-15");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(f64::NAN), "nan");
        for x in [0.1 + 0.2, 1.0 / 3.0, 6.02e23, -2.5e-300] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn sample_parsing() {
        let s = parse_sample("# header\n1.5\n\n-2e-3\n  4 \n").unwrap();
        assert_eq!(s.values(), &[1.5, -2e-3, 4.0]);
        assert!(matches!(parse_sample("1\nx\n"), Err(Error::Parse(_))));
        assert!(matches!(parse_sample("# only\n"), Err(Error::Parse(_))));
        assert!(matches!(parse_sample("inf\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(
            run_capture(&["curves", "--n", "10", "--which", "nope"]).0,
            2
        );
        assert_eq!(run_capture(&["bogus"]).0, 2);
        assert_eq!(run_capture(&["--help"]).0, 0);
        assert_eq!(exit_code(&Error::Infeasible(String::new())), 3);
        assert_eq!(exit_code(&Error::NoRoot(String::new())), 4);
    }

    #[test]
    fn empty_grid_is_header_only() {
        let (code, out, _) = run_capture(&[
            "curves",
            "--n",
            "1000",
            "--which",
            "chebyshev",
            "--grid",
            "",
        ]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with(MANIFEST_PREFIX));
        assert_eq!(lines[1], "epsilon,chebyshev");
    }

    #[test]
    fn manifest_round_trip() {
        let (_, out, _) =
            run_capture(&["--seed", "5", "lower-bounds", "--n", "100", "--points", "3"]);
        let m = RunManifest::parse_line(out.lines().next().unwrap()).unwrap();
        assert_eq!(m.seed, 5);
        assert_eq!(m.command, "lower-bounds");
        assert!(matches!(
            m.params,
            Command::LowerBounds(LowerBoundsArgs { n: 100, .. })
        ));
    }
}
