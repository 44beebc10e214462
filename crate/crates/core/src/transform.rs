//! The self-structuring change of measure `Z = T(X) = X · r^κ(X)`.
//!
//! `T` pushes each sample outward along a direction that depends only on the
//! relative log-magnitudes of its coordinates, so the sampler needs nothing
//! from the loss beyond its growth exponent `rho`. All likelihood arithmetic
//! stays in log space; weights are exponentiated inside estimator sums only.

use crate::dist::{joint_log_density, DistributionSpec};
use crate::error::{Error, Result};

/// Extrapolation factor and loss growth exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformParams {
    r: f64,
    rho: f64,
}

impl TransformParams {
    pub fn new(r: f64, rho: f64) -> Result<Self> {
        check_rho(rho)?;
        if !(r.is_finite() && r > 1.0) {
            return Err(Error::NoOutwardExtrapolation(r));
        }
        Ok(Self { r, rho })
    }

    /// `r = h ln ln(1/beta)`.
    pub fn for_level(beta: f64, h: f64, rho: f64) -> Result<Self> {
        Self::new(extrapolation_factor(beta, h)?, rho)
    }

    /// `r = 1`: `T` is the identity and every likelihood ratio is one.
    /// Only useful for checking the importance path against plain Monte Carlo.
    pub fn identity(rho: f64) -> Result<Self> {
        check_rho(rho)?;
        Ok(Self { r: 1.0, rho })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.is_finite() && rho > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            field: "rho",
            reason: format!("scaling exponent must be positive, got {rho}"),
        })
    }
}

/// `h ln ln(1/beta)`; only outward factors (`> 1`) are accepted.
pub fn extrapolation_factor(beta: f64, h: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < (-1.0f64).exp()) {
        return Err(Error::ExtrapolationUndefined(beta));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidParameter {
            field: "h",
            reason: format!("hyper-parameter must be positive, got {h}"),
        });
    }
    let r = h * (-beta.ln()).ln();
    if r <= 1.0 {
        return Err(Error::NoOutwardExtrapolation(r));
    }
    Ok(r)
}

/// `ln(1 + |x_i|)` per coordinate, its maximum and the (first) maximiser.
fn log_magnitudes(x: &[f64]) -> Result<(Vec<f64>, f64, usize)> {
    if x.is_empty() {
        return Err(Error::Domain("empty input vector".into()));
    }
    let logs: Vec<f64> = x.iter().map(|v| v.abs().ln_1p()).collect();
    let mut arg = 0;
    for (i, &l) in logs.iter().enumerate() {
        if l > logs[arg] {
            arg = i;
        }
    }
    let max = logs[arg];
    if max.is_nan() || max <= 0.0 {
        return Err(Error::Domain(
            "kappa is undefined at the origin (all coordinates zero)".into(),
        ));
    }
    Ok((logs, max, arg))
}

/// `κ_i(x) = ln(1+|x_i|) / (rho · max_j ln(1+|x_j|))`.
pub fn kappa(x: &[f64], rho: f64) -> Result<Vec<f64>> {
    check_rho(rho)?;
    let (logs, max, arg) = log_magnitudes(x)?;
    Ok(logs
        .iter()
        .enumerate()
        // The maximiser gets exactly 1/rho.
        .map(|(i, &l)| if i == arg { 1.0 / rho } else { l / (rho * max) })
        .collect())
}

/// `T(x)_i = x_i · r^κ_i(x)`.
pub fn transform(x: &[f64], p: &TransformParams) -> Result<Vec<f64>> {
    let k = kappa(x, p.rho)?;
    let ln_r = p.r.ln();
    Ok(x.iter()
        .zip(&k)
        .map(|(&xi, &ki)| xi * (ki * ln_r).exp())
        .collect())
}

/// `ln J(x)` with `J = [∏ J̃_i] r^(Σκ_i) / max_i J̃_i` and
/// `J̃_i = 1 + (ln r / (rho ‖ln(1+|x|)‖∞)) · |x_i| / (1+|x_i|)`.
pub fn log_jacobian(x: &[f64], p: &TransformParams) -> Result<f64> {
    let (logs, max, arg) = log_magnitudes(x)?;
    let ln_r = p.r.ln();
    let c = ln_r / (p.rho * max);
    let mut sum_ln_jt = 0.0;
    let mut sum_kappa = 0.0;
    for (i, (&xi, &l)) in x.iter().zip(&logs).enumerate() {
        if i == arg {
            sum_kappa += 1.0 / p.rho;
        } else {
            let a = xi.abs();
            sum_ln_jt += (c * a / (1.0 + a)).ln_1p();
            sum_kappa += l / (p.rho * max);
        }
    }
    // The maximising J̃ cancels against the divisor.
    Ok(sum_ln_jt + ln_r * sum_kappa)
}

/// `ln[f_X(T(x)) / f_X(x) · J(x)]`.
pub fn log_likelihood_ratio(
    x: &[f64],
    spec: &DistributionSpec,
    p: &TransformParams,
) -> Result<f64> {
    let z = transform(x, p)?;
    log_likelihood_ratio_at(x, &z, spec, p)
}

/// Same as [`log_likelihood_ratio`] when `z = T(x)` is already available.
pub(crate) fn log_likelihood_ratio_at(
    x: &[f64],
    z: &[f64],
    spec: &DistributionSpec,
    p: &TransformParams,
) -> Result<f64> {
    if p.r == 1.0 {
        return Ok(0.0);
    }
    Ok(joint_log_density(z, spec)? - joint_log_density(x, spec)? + log_jacobian(x, p)?)
}
