//! Loss functions evaluated as black boxes by the estimators.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};

/// Any deterministic map from a d-vector to a real loss.
pub trait BlackBoxLoss: Send + Sync {
    fn eval(&self, x: &[f64]) -> f64;

    /// Input dimension, when the loss only accepts one.
    fn dim(&self) -> Option<usize> {
        None
    }
}

impl<F> BlackBoxLoss for F
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// One hidden layer ReLU network: `w2ᵀ max(W1 x + b1, 0) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNetParams {
    d: usize,
    hidden: usize,
    /// `hidden × d`, row-major.
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

impl ReluNetParams {
    pub fn new(
        d: usize,
        hidden: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
    ) -> Result<Self> {
        if d == 0 || hidden == 0 {
            return Err(Error::InvalidParameter {
                field: "dims",
                reason: format!("d and h must be at least 1, got d = {d}, h = {hidden}"),
            });
        }
        let check = |expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::Dimension { expected, got })
            }
        };
        check(hidden * d, w1.len())?;
        check(hidden, b1.len())?;
        check(hidden, w2.len())?;
        if w1
            .iter()
            .chain(&b1)
            .chain(&w2)
            .chain([&b2])
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidParameter {
                field: "weights",
                reason: "all weights must be finite".into(),
            });
        }
        Ok(Self {
            d,
            hidden,
            w1,
            b1,
            w2,
            b2,
        })
    }

    /// Seeded synthetic network: `W1` entries uniform on `[-1, 1]`, `b1`
    /// uniform on `[-0.5, 0.5]`, nonnegative `w2` uniform on `[0, 1]`, `b2 = 0`.
    pub fn random(d: usize, hidden: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1 = (0..hidden * d)
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        let b1 = (0..hidden).map(|_| rng.random_range(-0.5..=0.5)).collect();
        let w2 = (0..hidden).map(|_| rng.random_range(0.0..=1.0)).collect();
        Self::new(d, hidden, w1, b1, w2, 0.0)
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn w1(&self) -> &[f64] {
        &self.w1
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    pub fn w2(&self) -> &[f64] {
        &self.w2
    }

    pub fn b2(&self) -> f64 {
        self.b2
    }
}

/// On-disk layout of a ReLU network weights file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReluFile {
    dims: ReluDims,
    #[serde(rename = "W1")]
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReluDims {
    d: usize,
    h: usize,
}

/// Failure modes of [`load_relu_params`], one variant per cause.
#[derive(Debug, Error)]
pub enum WeightsFileError {
    #[error("cannot read weights file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed weights file {path}: {message}")]
    Parse { path: String, message: String },
    #[error("inconsistent dimensions in weights file {path}: {source}")]
    Dimension { path: String, source: Error },
}

impl WeightsFileError {
    /// Stable numeric code per failure cause.
    pub fn code(&self) -> i32 {
        match self {
            WeightsFileError::Io { .. } => 1,
            WeightsFileError::Parse { .. } => 2,
            WeightsFileError::Dimension { .. } => 3,
        }
    }
}

/// Reads and validates a ReLU weights file (TOML with `dims = { d, h }`,
/// row-major `W1`, `b1`, `w2` and scalar `b2`).
pub fn load_relu_params(path: &Path) -> std::result::Result<ReluNetParams, WeightsFileError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| WeightsFileError::Io {
        path: shown.clone(),
        source,
    })?;
    parse_relu_params(&text).map_err(|e| match e {
        WeightsFileError::Parse { message, .. } => WeightsFileError::Parse {
            path: shown,
            message,
        },
        WeightsFileError::Dimension { source, .. } => WeightsFileError::Dimension {
            path: shown,
            source,
        },
        other => other,
    })
}

/// Parses the weights document from a string.
pub fn parse_relu_params(text: &str) -> std::result::Result<ReluNetParams, WeightsFileError> {
    let file: ReluFile = toml::from_str(text).map_err(|e| WeightsFileError::Parse {
        path: String::new(),
        message: e.message().to_string(),
    })?;
    ReluNetParams::new(file.dims.d, file.dims.h, file.w1, file.b1, file.w2, file.b2).map_err(
        |source| WeightsFileError::Dimension {
            path: String::new(),
            source,
        },
    )
}

/// Serialises parameters in the format read by [`load_relu_params`].
/// Floats are written in shortest round-trip form.
pub fn relu_params_to_string(p: &ReluNetParams) -> String {
    let file = ReluFile {
        dims: ReluDims {
            d: p.d,
            h: p.hidden,
        },
        w1: p.w1.clone(),
        b1: p.b1.clone(),
        w2: p.w2.clone(),
        b2: p.b2,
    };
    toml::to_string(&file).expect("weights are finite floats")
}

/// `x1 + x7 + max{x5 + max{x2, x3}, x6 + max{x4, x3}}`.
pub fn eval_pert(x: &[f64]) -> Result<f64> {
    if x.len() != 7 {
        return Err(Error::Dimension {
            expected: 7,
            got: x.len(),
        });
    }
    Ok(pert7(x))
}

fn pert7(x: &[f64]) -> f64 {
    let upper = x[4] + x[1].max(x[2]);
    let lower = x[5] + x[3].max(x[2]);
    x[0] + x[6] + upper.max(lower)
}

/// Equally weighted portfolio loss `1ᵀx`.
pub fn eval_linear(x: &[f64]) -> f64 {
    x.iter().sum()
}

pub fn eval_relu_net(x: &[f64], p: &ReluNetParams) -> Result<f64> {
    if x.len() != p.d {
        return Err(Error::Dimension {
            expected: p.d,
            got: x.len(),
        });
    }
    Ok(relu_net(x, p))
}

fn relu_net(x: &[f64], p: &ReluNetParams) -> f64 {
    let mut out = p.b2;
    for (k, row) in p.w1.chunks_exact(p.d).enumerate() {
        let pre: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + p.b1[k];
        out += p.w2[k] * pre.max(0.0);
    }
    out
}

#[derive(Clone)]
pub enum LossKind {
    Pert7,
    Linear,
    ReluNet(ReluNetParams),
    External(Arc<dyn BlackBoxLoss>),
}

impl fmt::Debug for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::Pert7 => f.write_str("Pert7"),
            LossKind::Linear => f.write_str("Linear"),
            LossKind::ReluNet(p) => write!(f, "ReluNet(d = {}, h = {})", p.d, p.hidden),
            LossKind::External(_) => f.write_str("External"),
        }
    }
}

/// A loss together with its growth exponent `rho`: `L(t x) ~ t^rho L*(x)`.
#[derive(Debug, Clone)]
pub struct LossModel {
    kind: LossKind,
    rho: f64,
}

impl LossModel {
    pub fn new(kind: LossKind, rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::InvalidParameter {
                field: "rho",
                reason: format!("scaling exponent must be positive, got {rho}"),
            });
        }
        Ok(Self { kind, rho })
    }

    pub fn pert() -> Self {
        Self {
            kind: LossKind::Pert7,
            rho: 1.0,
        }
    }

    pub fn linear() -> Self {
        Self {
            kind: LossKind::Linear,
            rho: 1.0,
        }
    }

    pub fn relu_net(params: ReluNetParams) -> Self {
        Self {
            kind: LossKind::ReluNet(params),
            rho: 1.0,
        }
    }

    /// Registers a black-box loss with an explicit exponent.
    pub fn external(loss: Arc<dyn BlackBoxLoss>, rho: f64) -> Result<Self> {
        Self::new(LossKind::External(loss), rho)
    }

    pub fn kind(&self) -> &LossKind {
        &self.kind
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Input dimension this loss requires, if fixed.
    pub fn dim(&self) -> Option<usize> {
        match &self.kind {
            LossKind::Pert7 => Some(7),
            LossKind::Linear => None,
            LossKind::ReluNet(p) => Some(p.d),
            LossKind::External(f) => f.dim(),
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        match self.dim() {
            Some(expected) if expected != d => Err(Error::Dimension { expected, got: d }),
            _ => Ok(()),
        }
    }

    /// Evaluates without re-checking the dimension; see [`LossModel::check_dim`].
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match &self.kind {
            LossKind::Pert7 => pert7(x),
            LossKind::Linear => eval_linear(x),
            LossKind::ReluNet(p) => relu_net(x, p),
            LossKind::External(f) => f.eval(x),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.eval_unchecked(x))
    }
}
