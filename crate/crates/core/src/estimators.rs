//! VaR / CVaR from likelihood-ratio weighted loss samples.
//!
//! Plain Monte Carlo is the special case where every log weight is zero, so
//! both paths share the same code. Weights are accumulated after subtracting
//! the largest log weight; the common factor is applied once at the end.

use serde::{Deserialize, Serialize};

use crate::dist::{sample_x, DistributionSpec};
use crate::error::{Error, Result};
use crate::losses::LossModel;
use crate::transform::{log_likelihood_ratio_at, transform, TransformParams};

/// Plain Monte Carlo is attempted only when `n * beta` reaches this count.
pub const NAIVE_MIN_TAIL_COUNT: f64 = 5.0;

/// A loss value `L(Z_i)` and its log likelihood ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedLossSample {
    pub loss: f64,
    pub log_weight: f64,
}

impl WeightedLossSample {
    pub fn new(loss: f64, log_weight: f64) -> Self {
        Self { loss, log_weight }
    }

    /// Unit likelihood ratio (plain Monte Carlo).
    pub fn unweighted(loss: f64) -> Self {
        Self {
            loss,
            log_weight: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Naive,
    #[serde(rename = "is")]
    Importance,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Importance => "is",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inputs of a single estimation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsConfig {
    pub beta: f64,
    /// Required for [`Method::Importance`], ignored otherwise.
    pub h: Option<f64>,
    pub n: usize,
    pub seed: u64,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub var_hat: f64,
    pub cvar_hat: f64,
    pub cvar_se: f64,
    pub method: Method,
    pub beta: f64,
    pub h: Option<f64>,
    pub n: usize,
    pub seed: u64,
}

/// Weighted tail function `Ĝ` as a step function over the distinct losses.
struct TailProfile {
    /// Distinct losses, ascending.
    levels: Vec<f64>,
    /// `above[k]`: scaled weight of samples with loss strictly above `levels[k]`.
    above: Vec<f64>,
    total: f64,
    /// `exp(max log weight)`.
    scale: f64,
    n: f64,
}

impl TailProfile {
    fn new(samples: &[WeightedLossSample]) -> Self {
        let n = samples.len();
        let max_lw = max_log_weight(samples);
        let mut sorted: Vec<(f64, f64)> = samples
            .iter()
            .map(|s| (s.loss, (s.log_weight - max_lw).exp()))
            .collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

        // Merge ties, then accumulate from the largest loss downward.
        let mut levels: Vec<f64> = Vec::new();
        let mut mass: Vec<f64> = Vec::new();
        for (loss, w) in sorted {
            match levels.last() {
                Some(&last) if last == loss => *mass.last_mut().unwrap() += w,
                _ => {
                    levels.push(loss);
                    mass.push(w);
                }
            }
        }
        let mut above = vec![0.0; levels.len()];
        let mut acc = 0.0;
        for k in (0..levels.len()).rev() {
            above[k] = acc;
            acc += mass[k];
        }
        Self {
            levels,
            above,
            total: acc,
            scale: max_lw.exp(),
            n: n as f64,
        }
    }

    fn scaled(&self, mass: f64) -> f64 {
        mass * self.scale / self.n
    }

    fn tail(&self, u: f64) -> f64 {
        // Index of the last level <= u; everything above it is in the tail.
        match self.levels.partition_point(|&l| l <= u) {
            0 => self.scaled(self.total),
            k => self.scaled(self.above[k - 1]),
        }
    }
}

fn max_log_weight(samples: &[WeightedLossSample]) -> f64 {
    samples
        .iter()
        .map(|s| s.log_weight)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `Ĝ(u) = (1/n) Σ L_i · I(loss_i > u)`; the c.d.f. estimate is `1 - Ĝ(u)`.
pub fn is_cdf_tail(samples: &[WeightedLossSample], u: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    TailProfile::new(samples).tail(u)
}

/// Smallest sample loss `v` with `Ĝ(v) <= beta`, i.e. `inf{u : F̂(u) >= 1 - beta}`.
pub fn is_var(samples: &[WeightedLossSample], beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if samples.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let profile = TailProfile::new(samples);
    let mass = profile.scaled(profile.total);
    if mass <= beta {
        return Err(Error::BetaTooLarge { beta, mass });
    }
    // Ĝ is nonincreasing over the levels and zero at the top one.
    let k = profile
        .above
        .iter()
        .position(|&a| profile.scaled(a) <= beta)
        .expect("tail is empty above the largest loss");
    Ok(profile.levels[k])
}

/// `v + (1/(n beta)) Σ L_i (loss_i - v)⁺`.
pub fn is_cvar(samples: &[WeightedLossSample], beta: f64, v: f64) -> f64 {
    if samples.is_empty() {
        return v;
    }
    let max_lw = max_log_weight(samples);
    let excess: f64 = samples
        .iter()
        .map(|s| (s.log_weight - max_lw).exp() * (s.loss - v).max(0.0))
        .sum();
    if excess == 0.0 {
        return v;
    }
    v + excess * max_lw.exp() / (samples.len() as f64 * beta)
}

/// Empirical quantile and CVaR of unweighted losses.
pub fn naive_var_cvar(losses: &[f64], beta: f64) -> Result<(f64, f64)> {
    let samples: Vec<WeightedLossSample> = losses
        .iter()
        .map(|&l| WeightedLossSample::unweighted(l))
        .collect();
    let v = is_var(&samples, beta)?;
    Ok((v, is_cvar(&samples, beta, v)))
}

/// `sqrt(s² / n) / beta` where `s²` is the sample variance (divisor `n - 1`)
/// of `L_i (loss_i - v)⁺`.
pub fn cvar_standard_error(samples: &[WeightedLossSample], beta: f64, v: f64) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let max_lw = max_log_weight(samples);
    let terms: Vec<f64> = samples
        .iter()
        .map(|s| (s.log_weight - max_lw).exp() * (s.loss - v).max(0.0))
        .collect();
    let mean = terms.iter().sum::<f64>() / n as f64;
    let ss: f64 = terms.iter().map(|t| (t - mean) * (t - mean)).sum();
    let var = ss / (n - 1) as f64;
    Ok((var / n as f64).sqrt() * max_lw.exp() / beta)
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            field: "beta",
            reason: format!("tail level must lie in (0, 1), got {beta}"),
        })
    }
}

/// One estimation run: importance sampling through `T`, or plain Monte Carlo.
pub fn estimate(
    dist: &DistributionSpec,
    loss: &LossModel,
    cfg: &IsConfig,
) -> Result<EstimateReport> {
    check_beta(cfg.beta)?;
    let samples = match cfg.method {
        Method::Importance => {
            let h = cfg.h.ok_or(Error::InvalidParameter {
                field: "h",
                reason: "importance sampling needs a hyper-parameter h".into(),
            })?;
            let params = TransformParams::for_level(cfg.beta, h, loss.rho())?;
            importance_samples(dist, loss, cfg.n, cfg.seed, &params)?
        }
        Method::Naive => {
            let expected_tail = cfg.n as f64 * cfg.beta;
            if expected_tail < NAIVE_MIN_TAIL_COUNT {
                return Err(Error::NaiveInfeasible(expected_tail));
            }
            naive_samples(dist, loss, cfg.n, cfg.seed)?
        }
    };
    report(&samples, cfg)
}

/// Importance-sampling estimate with explicit transform parameters.
pub fn estimate_with_transform(
    dist: &DistributionSpec,
    loss: &LossModel,
    beta: f64,
    n: usize,
    seed: u64,
    params: &TransformParams,
) -> Result<EstimateReport> {
    check_beta(beta)?;
    let samples = importance_samples(dist, loss, n, seed, params)?;
    let cfg = IsConfig {
        beta,
        h: None,
        n,
        seed,
        method: Method::Importance,
    };
    report(&samples, &cfg)
}

fn report(samples: &[WeightedLossSample], cfg: &IsConfig) -> Result<EstimateReport> {
    let var_hat = is_var(samples, cfg.beta)?;
    let cvar_hat = is_cvar(samples, cfg.beta, var_hat);
    let cvar_se = cvar_standard_error(samples, cfg.beta, var_hat)?;
    Ok(EstimateReport {
        var_hat,
        cvar_hat,
        cvar_se,
        method: cfg.method,
        beta: cfg.beta,
        h: match cfg.method {
            Method::Importance => cfg.h,
            Method::Naive => None,
        },
        n: cfg.n,
        seed: cfg.seed,
    })
}

/// `(L(T(X_i)), ln L_R(X_i))` for `n` draws of `X`.
pub fn importance_samples(
    dist: &DistributionSpec,
    loss: &LossModel,
    n: usize,
    seed: u64,
    params: &TransformParams,
) -> Result<Vec<WeightedLossSample>> {
    loss.check_dim(dist.dim())?;
    let x = sample_x(n, dist, seed)?;
    x.rows()
        .map(|row| {
            let z = transform(row, params)?;
            let log_weight = log_likelihood_ratio_at(row, &z, dist, params)?;
            if !log_weight.is_finite() {
                return Err(Error::Domain(format!(
                    "non-finite log likelihood ratio at {row:?}"
                )));
            }
            Ok(WeightedLossSample::new(checked_loss(loss, &z)?, log_weight))
        })
        .collect()
}

/// `(L(X_i), 0)` for `n` draws of `X`.
pub fn naive_samples(
    dist: &DistributionSpec,
    loss: &LossModel,
    n: usize,
    seed: u64,
) -> Result<Vec<WeightedLossSample>> {
    loss.check_dim(dist.dim())?;
    let x = sample_x(n, dist, seed)?;
    x.rows()
        .map(|row| Ok(WeightedLossSample::unweighted(checked_loss(loss, row)?)))
        .collect()
}

fn checked_loss(loss: &LossModel, x: &[f64]) -> Result<f64> {
    let value = loss.eval_unchecked(x);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain(format!("loss is not finite at {x:?}")))
    }
}
