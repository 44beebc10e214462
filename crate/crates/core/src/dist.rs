//! Weibull-type marginals coupled by a Gaussian copula.
//!
//! Marginals have c.d.f. `F(x) = 1 - exp(-x^alpha)` on `[0, inf)`. Densities
//! are only ever exposed on the log scale: the importance weights evaluate
//! `f_X` far out in the tail where raw densities underflow.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// One Weibull-type marginal, `F(x) = 1 - exp(-x^alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalSpec {
    alpha: f64,
}

impl MarginalSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter {
                field: "alpha",
                reason: format!("tail exponent must be positive and finite, got {alpha}"),
            });
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Hazard `x^alpha`, i.e. `-ln(1 - F(x))`.
    fn hazard(&self, x: f64) -> f64 {
        x.powf(self.alpha)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-self.hazard(x)).exp_m1()
        }
    }

    /// `1 - F(x)`.
    pub fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            (-self.hazard(x)).exp()
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        marginal_quantile(u, self)
    }

    pub fn ln_pdf(&self, x: f64) -> Result<f64> {
        marginal_log_density(x, self)
    }

    /// The point whose survival probability `1 - F(x)` is `s`. Unlike
    /// [`MarginalSpec::quantile`] this keeps full precision in the upper tail.
    pub fn quantile_from_sf(&self, s: f64) -> Result<f64> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Domain(format!(
                "survival probability must lie in (0, 1), got {s}"
            )));
        }
        Ok(self.quantile_from_ln_sf(s.ln()))
    }

    /// Inverse of the hazard: the point whose survival probability is `exp(ln_sf)`.
    fn quantile_from_ln_sf(&self, ln_sf: f64) -> f64 {
        (-ln_sf).powf(1.0 / self.alpha)
    }

    /// Gaussian score `Φ⁻¹(F(x))` for `x > 0`, computed through whichever
    /// tail keeps full relative precision.
    fn normal_score(&self, x: f64) -> Result<f64> {
        let hazard = self.hazard(x);
        if hazard >= std::f64::consts::LN_2 {
            // Upper half: 1 - F(x) = exp(-hazard) is exact in log space.
            Ok(-normal::quantile_from_ln(-hazard)?)
        } else {
            let ln_cdf = if hazard > 0.0 {
                (-(-hazard).exp_m1()).ln()
            } else {
                // x^alpha underflowed; F(x) ~ x^alpha.
                self.alpha * x.ln()
            };
            normal::quantile_from_ln(ln_cdf)
        }
    }
}

/// `(-ln(1-u))^(1/alpha)`.
pub fn marginal_quantile(u: f64, m: &MarginalSpec) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!(
            "marginal quantile needs u in (0, 1), got {u}"
        )));
    }
    Ok(m.quantile_from_ln_sf((-u).ln_1p()))
}

/// `ln(alpha) + (alpha - 1) ln(x) - x^alpha` for `x > 0`.
pub fn marginal_log_density(x: f64, m: &MarginalSpec) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!(
            "marginal density is evaluated only at positive finite points, got {x}"
        )));
    }
    let alpha = m.alpha;
    Ok(alpha.ln() + (alpha - 1.0) * x.ln() - m.hazard(x))
}

/// `Φ⁻¹(p)` with absolute error below 1e-9 on `[1e-300, 1 - 1e-12]`.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    normal::quantile(p)
}

/// Correlation matrix of the Gaussian copula with its cached factorisations.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    dim: usize,
    entries: Vec<f64>,
    chol: Vec<f64>,
    /// R⁻¹ − I, row-major.
    precision_minus_identity: Vec<f64>,
    ln_det: f64,
    identity: bool,
}

impl CorrelationMatrix {
    /// Validates a row-major `dim × dim` matrix and factorises it.
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidCorrelation(
                "dimension must be at least 1".into(),
            ));
        }
        if entries.len() != dim * dim {
            return Err(Error::Dimension {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        if let Some(bad) = entries.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidCorrelation(format!("non-finite entry {bad}")));
        }
        for i in 0..dim {
            if entries[i * dim + i] != 1.0 {
                return Err(Error::InvalidCorrelation(format!(
                    "diagonal entry ({i}, {i}) is {} instead of 1",
                    entries[i * dim + i]
                )));
            }
            for j in 0..i {
                if (entries[i * dim + j] - entries[j * dim + i]).abs() > 1e-12 {
                    return Err(Error::InvalidCorrelation(format!(
                        "entries ({i}, {j}) and ({j}, {i}) differ"
                    )));
                }
            }
        }

        let matrix = DMatrix::from_row_slice(dim, dim, &entries);
        let chol = matrix.cholesky().ok_or(Error::NotPositiveDefinite)?;
        let lower = chol.l();
        let ln_det = 2.0 * lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let inverse = chol.inverse();

        let mut chol_rows = vec![0.0; dim * dim];
        let mut q = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                chol_rows[i * dim + j] = lower[(i, j)];
                q[i * dim + j] = inverse[(i, j)] - if i == j { 1.0 } else { 0.0 };
            }
        }
        let identity = entries
            .iter()
            .enumerate()
            .all(|(k, &v)| v == if k / dim == k % dim { 1.0 } else { 0.0 });

        Ok(Self {
            dim,
            entries,
            chol: chol_rows,
            precision_minus_identity: q,
            ln_det,
            identity,
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::tridiagonal(dim, 0.0)
    }

    /// Unit diagonal, `c` on the first off-diagonals, zero elsewhere.
    pub fn tridiagonal(dim: usize, c: f64) -> Result<Self> {
        Self::from_fn(dim, |i, j| if i.abs_diff(j) == 1 { c } else { 0.0 })
    }

    /// Unit diagonal, `c` everywhere else.
    pub fn equicorrelated(dim: usize, c: f64) -> Result<Self> {
        Self::from_fn(dim, |_, _| c)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if let Some(row) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: row.len(),
            });
        }
        Self::new(dim, rows.concat())
    }

    fn from_fn(dim: usize, off_diagonal: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                entries[i * dim + j] = if i == j { 1.0 } else { off_diagonal(i, j) };
            }
        }
        Self::new(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    /// Lower Cholesky factor entry `(i, j)`.
    pub fn chol(&self, i: usize, j: usize) -> f64 {
        self.chol[i * self.dim + j]
    }

    pub fn ln_det(&self) -> f64 {
        self.ln_det
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    /// Copula log density at Gaussian scores `z`.
    fn ln_density_at_scores(&self, z: &[f64]) -> f64 {
        if self.identity {
            return 0.0;
        }
        let d = self.dim;
        let mut quad = 0.0;
        for i in 0..d {
            let row = &self.precision_minus_identity[i * d..(i + 1) * d];
            let inner: f64 = row.iter().zip(z).map(|(q, zj)| q * zj).sum();
            quad += z[i] * inner;
        }
        -0.5 * self.ln_det - 0.5 * quad
    }
}

/// `-½ ln det R - ½ zᵀ(R⁻¹ - I)z` with `z = Φ⁻¹(u)` componentwise.
pub fn copula_log_density(u: &[f64], c: &CorrelationMatrix) -> Result<f64> {
    if u.len() != c.dim {
        return Err(Error::Dimension {
            expected: c.dim,
            got: u.len(),
        });
    }
    let z = u
        .iter()
        .map(|&p| normal::quantile(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(c.ln_density_at_scores(&z))
}

/// Joint law of the input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSpec {
    marginals: Vec<MarginalSpec>,
    correlation: CorrelationMatrix,
}

impl DistributionSpec {
    pub fn new(marginals: Vec<MarginalSpec>, correlation: CorrelationMatrix) -> Result<Self> {
        if marginals.len() != correlation.dim() {
            return Err(Error::Dimension {
                expected: correlation.dim(),
                got: marginals.len(),
            });
        }
        Ok(Self {
            marginals,
            correlation,
        })
    }

    /// Identical marginals with exponent `alpha`.
    pub fn iid(alpha: f64, correlation: CorrelationMatrix) -> Result<Self> {
        let m = MarginalSpec::new(alpha)?;
        Self::new(vec![m; correlation.dim()], correlation)
    }

    pub fn from_alphas(alphas: &[f64], correlation: CorrelationMatrix) -> Result<Self> {
        let marginals = alphas
            .iter()
            .map(|&a| MarginalSpec::new(a))
            .collect::<Result<Vec<_>>>()?;
        Self::new(marginals, correlation)
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[MarginalSpec] {
        &self.marginals
    }

    pub fn correlation(&self) -> &CorrelationMatrix {
        &self.correlation
    }
}

/// `ln f_X(x)`: copula log density at the marginal c.d.f. values plus the
/// marginal log densities.
pub fn joint_log_density(x: &[f64], spec: &DistributionSpec) -> Result<f64> {
    if x.len() != spec.dim() {
        return Err(Error::Dimension {
            expected: spec.dim(),
            got: x.len(),
        });
    }
    let mut total = 0.0;
    for (&xi, m) in x.iter().zip(&spec.marginals) {
        total += marginal_log_density(xi, m)?;
    }
    if spec.correlation.is_identity() {
        return Ok(total);
    }
    let z = x
        .iter()
        .zip(&spec.marginals)
        .map(|(&xi, m)| m.normal_score(xi))
        .collect::<Result<Vec<_>>>()?;
    Ok(spec.correlation.ln_density_at_scores(&z) + total)
}

/// Row-major `n × d` block of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn from_vec(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::Dimension {
                expected: n * d,
                got: data.len(),
            });
        }
        Ok(Self { n, d, data })
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Draws `n` i.i.d. rows: `W ~ N(0, I)`, `V = chol · W`, `U = Φ(V)`,
/// `X_i = F_i⁻¹(U_i)`. The survival probability `1 - U_i` is carried in log
/// space so deep upper-tail draws keep full precision.
pub fn sample_x(n: usize, spec: &DistributionSpec, seed: u64) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let d = spec.dim();
    let corr = &spec.correlation;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * d);
    let mut w = vec![0.0; d];
    for _ in 0..n {
        for wi in w.iter_mut() {
            *wi = StandardNormal.sample(&mut rng);
        }
        for (i, m) in spec.marginals.iter().enumerate() {
            let v: f64 = if corr.identity {
                w[i]
            } else {
                (0..=i).map(|j| corr.chol(i, j) * w[j]).sum()
            };
            data.push(m.quantile_from_ln_sf(normal::ln_sf(v)));
        }
    }
    Ok(SampleMatrix { n, d, data })
}
