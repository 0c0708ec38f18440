//! Command-line flags, config files and their merge into a fully resolved
//! run configuration.
//!
//! Every subcommand has a flag struct (all fields optional, shared by clap
//! and the config file) and a resolved struct with defaults filled in. The
//! resolved form is what the manifest records and what `replay` reads back.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "LDPCLAB_OUT";
const DEFAULT_OUT: &str = "ldpclab-out";

#[derive(Debug, Parser)]
#[command(name = "ldpclab", version, about = "Exact and message-passing experiments on LDPC codes over the AWGN channel")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonFlags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct CommonFlags {
    /// TOML file with top-level options and one section per subcommand.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Master seed (required, here or in the config file).
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Output directory [default: $LDPCLAB_OUT, then ./ldpclab-out].
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Skip instances that exceed the enumeration budget instead of failing.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skip_infeasible: Option<bool>,
    /// Exit with status 4 when the command's acceptance check fails.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assert: Option<bool>,
    /// Enumeration budget as a power of two.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_log2: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Duality identity on random codes (or one fixed code).
    VerifyDuality(VerifyDualityFlags),
    /// First and second derivative identities on random codes.
    VerifyDerivatives(VerifyDualityFlags),
    /// Pair correlations against graph distance with a log-linear fit.
    Decay(DecayFlags),
    /// MAP Monte Carlo GEXIT of an ensemble against density evolution.
    GexitCompare(GexitCompareFlags),
    /// Finite-difference entropy derivative against the GEXIT formula.
    GexitFd(GexitFdFlags),
    /// Density-evolution GEXIT curve of an ensemble.
    DeCurve(DeCurveFlags),
    /// Root marginal under free and all-plus boundaries at several depths.
    BoundaryCheck(BoundaryFlags),
    /// Cluster-expansion identity under both compatibility rules.
    ClusterCheck(ClusterCheckFlags),
    /// Moment of |sinh 2l|^(-2s) over the LLR density.
    SinhMoment(SinhMomentFlags),
    /// Rerun the configuration recorded in a manifest.
    Replay {
        /// A manifest.json or report JSON written by an earlier run.
        manifest: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::VerifyDuality(_) => "verify-duality",
            Command::VerifyDerivatives(_) => "verify-derivatives",
            Command::Decay(_) => "decay",
            Command::GexitCompare(_) => "gexit-compare",
            Command::GexitFd(_) => "gexit-fd",
            Command::DeCurve(_) => "de-curve",
            Command::BoundaryCheck(_) => "boundary-check",
            Command::ClusterCheck(_) => "cluster-check",
            Command::SinhMoment(_) => "sinh-moment",
            Command::Replay { .. } => "replay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleChoice {
    Literal,
    Linked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodChoice {
    Quadrature,
    Mc,
}

// Flag structs. `None` means "not given here".

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct VerifyDualityFlags {
    /// Fixed code (`builtin:<name>` or a file); random codes when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    /// Largest random code length.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_n: Option<usize>,
    /// Noise variances, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps2: Option<Vec<f64>>,
    /// Residual threshold used by --assert.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct DecayFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps2: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    /// `all`, `from:<bit>` or a list such as `0-3,1-5`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<String>,
    /// Bits received without noise.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perfect: Option<Vec<usize>>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct GexitCompareFlags {
    /// `poisson:<mean>[,<dc>]`, `regular:<dv>,<dc>` or an ensemble file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps2: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graphs: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_samples: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub population: Option<usize>,
    /// Also estimate the finite-difference derivative.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fd: Option<bool>,
    /// Relative step for the finite difference.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fd_step: Option<f64>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct GexitFdFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps2: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    /// Relative step in the SNR.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct DeCurveFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<String>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps2: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub population: Option<usize>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct BoundaryFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depths: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perfect: Option<Vec<usize>>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ClusterCheckFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    /// `all` or a list such as `0-2,1-2`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draws: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Exponent for the moment diagnostics, in (0, 1/2).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    /// Samples per cluster for the moment diagnostics; 0 disables them.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic_samples: Option<u64>,
    /// Rule that --assert requires to hold.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<RuleChoice>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoints_in_gamma: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_connected_sets: Option<usize>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SinhMomentFlags {
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps2: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodChoice>,
    /// Monte Carlo samples (ignored by quadrature).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
}

// Resolved parameters.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct VerifyParams {
    pub code: Option<String>,
    pub trials: u64,
    pub max_n: usize,
    pub eps2: Vec<f64>,
    pub tolerance: f64,
}

impl VerifyParams {
    fn duality() -> Self {
        VerifyParams {
            code: None,
            trials: 100,
            max_n: 16,
            eps2: vec![0.1, 0.5, 1.0],
            tolerance: 1e-10,
        }
    }

    fn derivatives() -> Self {
        VerifyParams {
            max_n: 14,
            tolerance: 1e-8,
            ..Self::duality()
        }
    }
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self::duality()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DecayParams {
    pub code: String,
    pub eps2: Vec<f64>,
    pub samples: u64,
    pub pairs: String,
    pub perfect: Vec<usize>,
}

impl Default for DecayParams {
    fn default() -> Self {
        DecayParams {
            code: String::new(),
            eps2: vec![0.1],
            samples: 10_000,
            pairs: "from:0".into(),
            perfect: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct GexitCompareParams {
    pub ensemble: String,
    pub n: usize,
    pub eps2: Vec<f64>,
    pub graphs: u64,
    pub noise_samples: u64,
    pub depth: usize,
    pub population: usize,
    pub fd: bool,
    pub fd_step: f64,
}

impl Default for GexitCompareParams {
    fn default() -> Self {
        GexitCompareParams {
            ensemble: String::new(),
            n: 24,
            eps2: vec![0.1],
            graphs: 200,
            noise_samples: 50,
            depth: 20,
            population: 100_000,
            fd: false,
            fd_step: ldpclab::experiments::DEFAULT_FD_STEP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct GexitFdParams {
    pub code: String,
    pub eps2: Vec<f64>,
    pub samples: u64,
    pub step: f64,
}

impl Default for GexitFdParams {
    fn default() -> Self {
        GexitFdParams {
            code: String::new(),
            eps2: vec![0.5],
            samples: 100_000,
            step: ldpclab::experiments::DEFAULT_FD_STEP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DeCurveParams {
    pub ensemble: String,
    pub eps2: Vec<f64>,
    pub depth: usize,
    pub population: usize,
}

impl Default for DeCurveParams {
    fn default() -> Self {
        DeCurveParams {
            ensemble: String::new(),
            eps2: (1..=10).map(|k| k as f64 / 10.0).collect(),
            depth: 20,
            population: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct BoundaryParams {
    pub code: String,
    pub root: usize,
    pub depths: Vec<usize>,
    pub eps2: f64,
    pub samples: u64,
    pub perfect: Vec<usize>,
}

impl Default for BoundaryParams {
    fn default() -> Self {
        BoundaryParams {
            code: String::new(),
            root: 0,
            depths: vec![2, 4, 6],
            eps2: 0.05,
            samples: 10_000,
            perfect: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ClusterCheckParams {
    pub code: String,
    pub pairs: String,
    pub eps2: f64,
    pub draws: u64,
    pub tolerance: f64,
    pub s: f64,
    pub diagnostic_samples: u64,
    pub rule: RuleChoice,
    pub endpoints_in_gamma: bool,
    pub max_connected_sets: usize,
}

impl Default for ClusterCheckParams {
    fn default() -> Self {
        let e = ldpclab::cluster::ExpansionOptions::default();
        ClusterCheckParams {
            code: String::new(),
            pairs: "all".into(),
            eps2: 0.5,
            draws: 100,
            tolerance: 1e-8,
            s: 0.25,
            diagnostic_samples: 1000,
            rule: RuleChoice::Literal,
            endpoints_in_gamma: e.endpoints_in_gamma,
            max_connected_sets: e.max_connected_sets,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SinhMomentParams {
    pub eps2: Vec<f64>,
    pub s: f64,
    pub method: MethodChoice,
    pub samples: u64,
}

impl Default for SinhMomentParams {
    fn default() -> Self {
        SinhMomentParams {
            eps2: vec![0.1, 0.5, 1.0],
            s: 0.25,
            method: MethodChoice::Quadrature,
            samples: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    VerifyDuality(VerifyParams),
    VerifyDerivatives(VerifyParams),
    Decay(DecayParams),
    GexitCompare(GexitCompareParams),
    GexitFd(GexitFdParams),
    DeCurve(DeCurveParams),
    BoundaryCheck(BoundaryParams),
    ClusterCheck(ClusterCheckParams),
    SinhMoment(SinhMomentParams),
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::VerifyDuality(_) => "verify-duality",
            Task::VerifyDerivatives(_) => "verify-derivatives",
            Task::Decay(_) => "decay",
            Task::GexitCompare(_) => "gexit-compare",
            Task::GexitFd(_) => "gexit-fd",
            Task::DeCurve(_) => "de-curve",
            Task::BoundaryCheck(_) => "boundary-check",
            Task::ClusterCheck(_) => "cluster-check",
            Task::SinhMoment(_) => "sinh-moment",
        }
    }
}

/// Everything that determines the numbers in a report. This is what the
/// manifest records and hashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub skip_infeasible: bool,
    pub budget_log2: u32,
    pub task: Task,
}

/// A resolved run plus where to put it.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub run: RunConfig,
    pub out: PathBuf,
    pub assert: bool,
}

/// Top-level layout of a config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<PathBuf>,
    skip_infeasible: Option<bool>,
    assert: Option<bool>,
    budget_log2: Option<u32>,
    verify_duality: Option<VerifyDualityFlags>,
    verify_derivatives: Option<VerifyDualityFlags>,
    decay: Option<DecayFlags>,
    gexit_compare: Option<GexitCompareFlags>,
    gexit_fd: Option<GexitFdFlags>,
    de_curve: Option<DeCurveFlags>,
    boundary_check: Option<BoundaryFlags>,
    cluster_check: Option<ClusterCheckFlags>,
    sinh_moment: Option<SinhMomentFlags>,
}

fn parse_file(path: &Path) -> CliResult<FileConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::config(describe_toml_error(path, &text, &e)))
}

fn describe_toml_error(path: &Path, text: &str, e: &toml::de::Error) -> String {
    let msg = e.message();
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("{}:{line}: {msg}", path.display())
        }
        None => format!("{}: {msg}", path.display()),
    }
}

/// Values from `top` replace those in `base`; both are flat objects.
fn overlay(mut base: Map<String, Value>, top: Map<String, Value>) -> Map<String, Value> {
    base.extend(top);
    base
}

fn to_map<T: Serialize>(v: &T) -> CliResult<Map<String, Value>> {
    match serde_json::to_value(v).map_err(|e| CliError::Other(e.to_string()))? {
        Value::Object(m) => Ok(m),
        Value::Null => Ok(Map::new()),
        other => Err(CliError::Other(format!("expected an object, got {other}"))),
    }
}

/// Makes file-based `code` and `ensemble` sources absolute relative to `dir`.
fn absolutize_sources(m: &mut Map<String, Value>, dir: &Path) {
    for key in ["code", "ensemble"] {
        if let Some(Value::String(s)) = m.get_mut(key) {
            if let Some(abs) = absolute_source(s, key == "ensemble", dir) {
                *s = abs;
            }
        }
    }
}

fn absolute_source(s: &str, ensemble: bool, dir: &Path) -> Option<String> {
    if s.starts_with("builtin:") || (ensemble && (s.starts_with("poisson:") || s.starts_with("regular:"))) {
        return None;
    }
    let raw = s.strip_prefix("file:").unwrap_or(s);
    let p = Path::new(raw);
    if p.is_absolute() {
        return None;
    }
    Some(dir.join(p).to_string_lossy().into_owned())
}

fn merge_params<F: Serialize, P: DeserializeOwned>(
    command: &str,
    file: Option<&F>,
    file_dir: &Path,
    cli: &F,
    cwd: &Path,
    defaults: Map<String, Value>,
) -> CliResult<P> {
    let mut from_file = match file {
        Some(f) => to_map(f)?,
        None => Map::new(),
    };
    absolutize_sources(&mut from_file, file_dir);
    let mut from_cli = to_map(cli)?;
    absolutize_sources(&mut from_cli, cwd);
    let merged = overlay(overlay(defaults, from_file), from_cli);
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::config(format!("[{command}]: {e}")))
}

/// Resolves flags, config file and environment into one invocation.
pub fn resolve(cli: Cli) -> CliResult<Invocation> {
    let cwd = std::env::current_dir().map_err(|e| CliError::Other(e.to_string()))?;
    let (file, file_dir) = match &cli.common.config {
        Some(p) => {
            let abs = cwd.join(p);
            let dir = abs.parent().map(Path::to_path_buf).unwrap_or_else(|| cwd.clone());
            (parse_file(&abs)?, dir)
        }
        None => (FileConfig::default(), cwd.clone()),
    };
    let c = &cli.common;
    let out = match (&c.out, &file.out) {
        (Some(o), _) => cwd.join(o),
        (None, Some(o)) => file_dir.join(o),
        (None, None) => match std::env::var_os(OUT_ENV) {
            Some(o) if !o.is_empty() => cwd.join(o),
            _ => cwd.join(DEFAULT_OUT),
        },
    };
    let assert = c.assert.or(file.assert).unwrap_or(false);

    if let Command::Replay { manifest } = &cli.command {
        let mut run = read_recorded_config(&cwd.join(manifest))?;
        if let Some(w) = c.workers {
            run.workers = w;
        }
        return Ok(Invocation { run, out, assert });
    }

    let seed = c
        .seed
        .or(file.seed)
        .ok_or_else(|| CliError::config("a seed is required: pass --seed or set `seed` in the config file"))?;
    let workers = c.workers.or(file.workers).unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(CliError::config("workers must be at least 1"));
    }
    let skip_infeasible = c.skip_infeasible.or(file.skip_infeasible).unwrap_or(false);
    let budget_log2 = c
        .budget_log2
        .or(file.budget_log2)
        .unwrap_or(ldpclab::EnumOptions::default().budget_log2);

    macro_rules! params {
        ($name:expr, $file:expr, $flags:expr, $defaults:expr) => {
            merge_params($name, $file.as_ref(), &file_dir, $flags, &cwd, to_map(&$defaults)?)?
        };
    }
    let name = cli.command.name();
    let task = match &cli.command {
        Command::VerifyDuality(f) => Task::VerifyDuality(params!(name, file.verify_duality, f, VerifyParams::duality())),
        Command::VerifyDerivatives(f) => {
            Task::VerifyDerivatives(params!(name, file.verify_derivatives, f, VerifyParams::derivatives()))
        }
        Command::Decay(f) => Task::Decay(params!(name, file.decay, f, DecayParams::default())),
        Command::GexitCompare(f) => Task::GexitCompare(params!(name, file.gexit_compare, f, GexitCompareParams::default())),
        Command::GexitFd(f) => Task::GexitFd(params!(name, file.gexit_fd, f, GexitFdParams::default())),
        Command::DeCurve(f) => Task::DeCurve(params!(name, file.de_curve, f, DeCurveParams::default())),
        Command::BoundaryCheck(f) => Task::BoundaryCheck(params!(name, file.boundary_check, f, BoundaryParams::default())),
        Command::ClusterCheck(f) => Task::ClusterCheck(params!(name, file.cluster_check, f, ClusterCheckParams::default())),
        Command::SinhMoment(f) => Task::SinhMoment(params!(name, file.sinh_moment, f, SinhMomentParams::default())),
        Command::Replay { .. } => unreachable!("handled above"),
    };
    Ok(Invocation {
        run: RunConfig {
            seed,
            workers,
            skip_infeasible,
            budget_log2,
            task,
        },
        out,
        assert,
    })
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(usize::from).unwrap_or(1)
}

/// Reads the run configuration from a manifest or from a report that
/// embeds one.
fn read_recorded_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{}:{}: {e}", path.display(), e.line())))?;
    let manifest = v.get("manifest").unwrap_or(&v);
    let config = manifest
        .get("config")
        .ok_or_else(|| CliError::config(format!("{}: no `config` entry", path.display())))?;
    serde_json::from_value(config.clone()).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}
