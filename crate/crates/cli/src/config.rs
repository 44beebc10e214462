//! Experiment configuration files.
//!
//! A config is a TOML document; a run manifest (JSON) written by a previous
//! run is accepted in its place and replays the exact resolved settings.

use std::fmt;
use std::path::{Path, PathBuf};

use bbis_core::harness::DEFAULT_REPS_CV;
use bbis_core::losses::{load_relu_params, LossKind};
use bbis_core::{
    CorrelationMatrix, DistributionSpec, ExperimentConfig, HRule, LossModel, Method, ReluNetParams,
};
use serde::{Deserialize, Serialize};

use crate::manifest::RunManifest;

pub const DEFAULT_REPS: usize = bbis_core::harness::DEFAULT_REPS;
pub const DEFAULT_NAIVE_BUDGET: usize = 4_096_000;

/// Why a config could not be loaded. Each variant has its own message prefix.
#[derive(Debug)]
pub enum ConfigError {
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// The document is not well-formed TOML / JSON.
    Parse { path: PathBuf, message: String },
    /// Well-formed, but with unknown keys or values of the wrong type.
    Schema { path: PathBuf, message: String },
    /// A value violates a model invariant.
    Invalid { field: String, message: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => {
                write!(f, "cannot read config {}: {source}", path.display())
            }
            ConfigError::Parse { path, message } => {
                write!(f, "parse error in {}: {message}", path.display())
            }
            ConfigError::Schema { path, message } => {
                write!(f, "schema error in {}: {message}", path.display())
            }
            ConfigError::Invalid { field, message } => {
                write!(f, "invalid config field `{field}`: {message}")
            }
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(field: &str, message: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.to_string(),
    }
}

/// Which estimators a command runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    #[default]
    Is,
    Naive,
    Both,
}

impl MethodChoice {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodChoice::Is => vec![Method::Importance],
            MethodChoice::Naive => vec![Method::Naive],
            MethodChoice::Both => vec![Method::Importance, Method::Naive],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Common(f64),
    PerCoordinate(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorrelationSpec {
    /// `"identity"`, `"tridiagonal(c)"` or `"equicorrelated(c)"`.
    Named(String),
    Dense(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSection {
    pub alpha: AlphaSpec,
    /// Required when `alpha` is a single number.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<CorrelationSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    #[serde(alias = "pert7")]
    Pert,
    Linear,
    ReluNet,
}

/// A seeded synthetic network, used in place of a weights file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomNet {
    pub hidden: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub kind: LossName,
    /// ReLU weights file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomNet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    /// Largest naive sample size tried when matching IS precision.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub naive_budget: Option<usize>,
    /// Replications per naive sample size (defaults to `reps`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_reps: Option<usize>,
}

/// The document as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps_cv: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    /// Tail levels as powers of ten, appended to `betas`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log10_betas: Option<Vec<f64>>,
    /// Fixed value, grid (cross-validated) or `{ a, b }` for `a + b ln(1/beta)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<HRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodChoice>,
    pub distribution: DistributionSection,
    pub loss: LossSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkSection>,
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub betas: Vec<f64>,
    pub h: Option<f64>,
    pub method: Option<MethodChoice>,
}

/// A validated configuration ready to run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub method: MethodChoice,
    pub naive_budget: usize,
    pub match_reps: usize,
    /// The normalised document: overrides applied, levels expanded, paths
    /// absolute. Feeding it back reproduces the run.
    pub resolved: FileConfig,
}

/// Reads a config file (TOML) or a run manifest (`.json`).
pub fn load_file_config(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if path.extension().is_some_and(|e| e == "json") {
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        let manifest: RunManifest =
            serde_json::from_value(value).map_err(|e| ConfigError::Schema {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        return Ok(manifest.resolved);
    }
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })?;
    let mut cfg: FileConfig = FileConfig::deserialize(table).map_err(|e| ConfigError::Schema {
        path: path.to_path_buf(),
        message: e.message().to_string(),
    })?;
    if let Some(w) = cfg.loss.weights.as_mut() {
        if w.is_relative() {
            *w = path.parent().unwrap_or(Path::new(".")).join(&*w);
        }
    }
    Ok(cfg)
}

/// Loads and validates a config with defaults resolved.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    resolve(load_file_config(path)?, &Overrides::default())
}

/// Applies overrides and validates every field.
pub fn resolve(mut file: FileConfig, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    if let Some(seed) = overrides.seed {
        file.seed = Some(seed);
    }
    if !overrides.betas.is_empty() {
        file.betas = Some(overrides.betas.clone());
        file.log10_betas = None;
    }
    if let Some(h) = overrides.h {
        file.h = Some(HRule::Fixed(h));
    }
    if let Some(m) = overrides.method {
        file.method = Some(m);
    }

    let mut betas = file.betas.clone().unwrap_or_default();
    betas.extend(file.log10_betas.iter().flatten().map(|e| 10f64.powf(*e)));
    file.betas = Some(betas.clone());
    file.log10_betas = None;

    let reps = file.reps.unwrap_or(DEFAULT_REPS);
    let reps_cv = file.reps_cv.unwrap_or(DEFAULT_REPS_CV);
    let method = file.method.unwrap_or_default();
    let h_rule = file.h.clone().unwrap_or(HRule::Fixed(2.6));
    file.reps = Some(reps);
    file.reps_cv = Some(reps_cv);
    file.method = Some(method);
    file.h = Some(h_rule.clone());
    let seed = *file.seed.get_or_insert(0);

    let dist = build_distribution(&file.distribution)?;
    if let Some(w) = file.loss.weights.as_mut() {
        // Absolute paths keep replayed manifests independent of the cwd.
        if let Ok(abs) = std::path::absolute(&*w) {
            *w = abs;
        }
    }
    let loss = build_loss(&file.loss, dist.dim())?;
    let bench = file.benchmark.clone().unwrap_or_default();

    let experiment = ExperimentConfig {
        dist,
        loss,
        betas,
        n: file.n,
        reps,
        h_rule,
        base_seed: seed,
        reps_cv,
    };
    experiment.validate().map_err(|e| match e {
        bbis_core::Error::InvalidParameter { field, reason } => invalid(field, reason),
        bbis_core::Error::Dimension { expected, got } => invalid(
            "loss",
            format!("loss expects dimension {expected} but the distribution has dimension {got}"),
        ),
        other => invalid("config", other),
    })?;
    if method != MethodChoice::Naive {
        check_outward(&experiment)?;
    }
    Ok(RunConfig {
        experiment,
        method,
        naive_budget: bench.naive_budget.unwrap_or(DEFAULT_NAIVE_BUDGET),
        match_reps: bench.match_reps.unwrap_or(reps),
        resolved: file,
    })
}

/// Every fixed or affine `h` must push samples outward at every level.
fn check_outward(cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    for &beta in &cfg.betas {
        if let Some(h) = cfg.h_rule.h_for(beta) {
            bbis_core::extrapolation_factor(beta, h).map_err(|e| invalid("h", e))?;
        }
    }
    Ok(())
}

fn build_distribution(section: &DistributionSection) -> Result<DistributionSpec, ConfigError> {
    let alphas = match (&section.alpha, section.dim) {
        (AlphaSpec::Common(a), Some(d)) => vec![*a; d],
        (AlphaSpec::Common(_), None) => {
            return Err(invalid(
                "distribution.dim",
                "required when alpha is a single number",
            ))
        }
        (AlphaSpec::PerCoordinate(v), Some(d)) if v.len() != d => {
            return Err(invalid(
                "distribution.dim",
                format!("alpha has {} entries but dim is {d}", v.len()),
            ))
        }
        (AlphaSpec::PerCoordinate(v), _) => v.clone(),
    };
    let d = alphas.len();
    if d == 0 {
        return Err(invalid(
            "distribution.alpha",
            "at least one coordinate is required",
        ));
    }
    let correlation = match &section.correlation {
        None => CorrelationMatrix::identity(d),
        Some(CorrelationSpec::Dense(rows)) => CorrelationMatrix::from_rows(rows),
        Some(CorrelationSpec::Named(name)) => named_correlation(name, d)?,
    }
    .map_err(|e| invalid("distribution.correlation", e))?;
    DistributionSpec::from_alphas(&alphas, correlation).map_err(|e| invalid("distribution", e))
}

fn named_correlation(
    name: &str,
    d: usize,
) -> Result<bbis_core::Result<CorrelationMatrix>, ConfigError> {
    let name = name.trim();
    if name == "identity" {
        return Ok(CorrelationMatrix::identity(d));
    }
    let parsed = name
        .strip_suffix(')')
        .and_then(|s| s.split_once('('))
        .and_then(|(pattern, c)| c.trim().parse::<f64>().ok().map(|c| (pattern.trim(), c)));
    match parsed {
        Some(("tridiagonal", c)) => Ok(CorrelationMatrix::tridiagonal(d, c)),
        Some(("equicorrelated", c)) => Ok(CorrelationMatrix::equicorrelated(d, c)),
        _ => Err(invalid(
            "distribution.correlation",
            format!(
                "unknown pattern {name:?}; expected \"identity\", \"tridiagonal(c)\", \"equicorrelated(c)\" or a matrix"
            ),
        )),
    }
}

fn build_loss(section: &LossSection, d: usize) -> Result<LossModel, ConfigError> {
    let kind = match section.kind {
        LossName::Pert => LossKind::Pert7,
        LossName::Linear => LossKind::Linear,
        LossName::ReluNet => LossKind::ReluNet(relu_params(section, d)?),
    };
    if section.kind != LossName::ReluNet && (section.weights.is_some() || section.random.is_some())
    {
        return Err(invalid(
            "loss.weights",
            "only a relu_net loss takes weights",
        ));
    }
    LossModel::new(kind, section.rho.unwrap_or(1.0)).map_err(|e| invalid("loss.rho", e))
}

/// Network weights from a file, or a seeded random network whose input
/// width matches the distribution.
fn relu_params(section: &LossSection, d: usize) -> Result<ReluNetParams, ConfigError> {
    match (&section.weights, section.random) {
        (Some(path), None) => load_relu_params(path).map_err(|e| invalid("loss.weights", e)),
        (None, Some(RandomNet { hidden, seed })) => {
            ReluNetParams::random(d, hidden, seed).map_err(|e| invalid("loss.random", e))
        }
        (Some(_), Some(_)) => Err(invalid(
            "loss",
            "give either `weights` or `random`, not both",
        )),
        (None, None) => Err(invalid(
            "loss.weights",
            "a relu_net loss needs a weights file or `random`",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_patterns() {
        let m = named_correlation(" tridiagonal( 0.2 ) ", 3)
            .unwrap()
            .unwrap();
        assert_eq!((m.get(0, 1), m.get(0, 2)), (0.2, 0.0));
        let m = named_correlation("equicorrelated(0.1)", 3)
            .unwrap()
            .unwrap();
        assert_eq!(m.get(0, 2), 0.1);
        assert!(named_correlation("identity", 4)
            .unwrap()
            .unwrap()
            .is_identity());
    }

    #[test]
    fn unknown_or_malformed_patterns_are_rejected() {
        for bad in [
            "banded(0.1)",
            "tridiagonal",
            "tridiagonal(x)",
            "equicorrelated(0.1",
        ] {
            let e = named_correlation(bad, 3).unwrap_err().to_string();
            assert!(e.contains("distribution.correlation"), "{bad}: {e}");
        }
        // Well-formed but outside the positive definite range.
        assert!(named_correlation("equicorrelated(-0.9)", 3)
            .unwrap()
            .is_err());
    }

    #[test]
    fn method_choice_expands() {
        assert_eq!(
            MethodChoice::Both.methods(),
            vec![Method::Importance, Method::Naive]
        );
        assert_eq!(MethodChoice::Naive.methods(), vec![Method::Naive]);
    }
}
