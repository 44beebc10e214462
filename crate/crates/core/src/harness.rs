//! Replication experiments: repeated estimation across tail levels, relative
//! RMSE summaries, cross-validation of `h`, and naive-vs-IS comparisons.
//!
//! Every replication gets its own seed derived from the base seed, so tables
//! are reproducible and independent of scheduling. Replications run on the
//! ambient rayon pool; results are collected in (level, replication) order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::DistributionSpec;
use crate::error::{Error, Result};
use crate::estimators::{estimate, IsConfig, Method, NAIVE_MIN_TAIL_COUNT};
use crate::losses::LossModel;
use crate::transform::extrapolation_factor;

pub const DEFAULT_REPS: usize = 50;
pub const DEFAULT_REPS_CV: usize = 20;

/// How the hyper-parameter `h` is chosen for each tail level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HRule {
    Fixed(f64),
    /// Candidate values, resolved per level by cross-validation.
    Grid(Vec<f64>),
    /// `h(beta) = a + b ln(1/beta)`.
    Affine {
        a: f64,
        b: f64,
    },
}

impl HRule {
    /// `2 - 0.6 ln(beta)`, the rule used for the PERT network.
    pub fn pert() -> Self {
        HRule::Affine { a: 2.0, b: 0.6 }
    }

    /// The value of `h` at `beta`, or `None` for a grid.
    pub fn h_for(&self, beta: f64) -> Option<f64> {
        match self {
            HRule::Fixed(h) => Some(*h),
            HRule::Grid(_) => None,
            HRule::Affine { a, b } => Some(a + b * (1.0 / beta).ln()),
        }
    }
}

/// `h(beta) = 2 - 0.6 ln(beta)`.
pub fn pert_h_rule(beta: f64) -> f64 {
    2.0 - 0.6 * beta.ln()
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dist: DistributionSpec,
    pub loss: LossModel,
    pub betas: Vec<f64>,
    pub n: usize,
    pub reps: usize,
    pub h_rule: HRule,
    pub base_seed: u64,
    /// Replications per grid point when cross-validating `h`.
    pub reps_cv: usize,
}

impl ExperimentConfig {
    pub fn new(
        dist: DistributionSpec,
        loss: LossModel,
        betas: Vec<f64>,
        n: usize,
        h_rule: HRule,
        base_seed: u64,
    ) -> Result<Self> {
        let cfg = Self {
            dist,
            loss,
            betas,
            n,
            reps: DEFAULT_REPS,
            h_rule,
            base_seed,
            reps_cv: DEFAULT_REPS_CV,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_reps(mut self, reps: usize) -> Result<Self> {
        self.reps = reps;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid =
            |field: &'static str, reason: String| Err(Error::InvalidParameter { field, reason });
        if self.reps < 2 {
            return invalid(
                "reps",
                format!("need at least 2 replications, got {}", self.reps),
            );
        }
        if self.reps_cv < 2 {
            return invalid(
                "reps_cv",
                format!("need at least 2 replications, got {}", self.reps_cv),
            );
        }
        if self.n < 2 {
            return invalid("n", format!("need at least 2 samples, got {}", self.n));
        }
        if self.betas.is_empty() {
            return invalid("betas", "at least one tail level is required".into());
        }
        let cap = (-1.0f64).exp();
        if let Some(b) = self.betas.iter().find(|&&b| !(b > 0.0 && b < cap)) {
            return invalid("betas", format!("beta must be < 1/e and > 0, got {b}"));
        }
        match &self.h_rule {
            HRule::Fixed(h) if !(h.is_finite() && *h > 0.0) => {
                return invalid("h", format!("must be positive, got {h}"))
            }
            HRule::Grid(g) if g.is_empty() => return invalid("h", "grid is empty".into()),
            HRule::Grid(g) if g.iter().any(|h| !(h.is_finite() && *h > 0.0)) => {
                return invalid("h", "grid values must be positive".into())
            }
            HRule::Affine { a, b } if !(a.is_finite() && b.is_finite()) => {
                return invalid("h", "affine coefficients must be finite".into())
            }
            _ => {}
        }
        self.loss.check_dim(self.dist.dim())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one replication; adding levels or methods never moves existing seeds.
pub fn derive_seed(base_seed: u64, beta_index: usize, method: Method, rep: usize) -> u64 {
    let tag = match method {
        Method::Naive => 1,
        Method::Importance => 2,
    };
    [beta_index as u64, tag, rep as u64]
        .iter()
        .fold(splitmix64(base_seed), |acc, &v| splitmix64(acc ^ v))
}

/// Seed stream used by cross-validation; shared across grid points.
fn cv_seed(base_seed: u64, beta: f64, rep: usize) -> u64 {
    [0xc5_u64, beta.to_bits(), rep as u64]
        .iter()
        .fold(splitmix64(base_seed), |acc, &v| splitmix64(acc ^ v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// Weighted tail mass never reached beta.
    BetaTooLarge,
    /// Plain Monte Carlo skipped: `n * beta` below the guard.
    Infeasible,
    Failed,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::BetaTooLarge => "beta_too_large",
            RunStatus::Infeasible => "infeasible",
            RunStatus::Failed => "failed",
        }
    }

    /// Status recorded for a replication that failed with `e`.
    pub fn from_error(e: &Error) -> Self {
        match e {
            Error::BetaTooLarge { .. } => RunStatus::BetaTooLarge,
            Error::NaiveInfeasible(_) => RunStatus::Infeasible,
            _ => RunStatus::Failed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub method: Method,
    pub beta_index: usize,
    pub beta: f64,
    pub h: Option<f64>,
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub var_hat: Option<f64>,
    pub cvar_hat: Option<f64>,
    pub cvar_se: Option<f64>,
    pub status: RunStatus,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplicationTable {
    pub rows: Vec<ReplicationRow>,
}

impl ReplicationTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn level(
        &self,
        method: Method,
        beta_index: usize,
    ) -> impl Iterator<Item = &ReplicationRow> {
        self.rows
            .iter()
            .filter(move |r| r.method == method && r.beta_index == beta_index)
    }

    pub fn failure_fraction(&self, method: Method, beta_index: usize) -> f64 {
        let (total, failed) = self
            .level(method, beta_index)
            .fold((0usize, 0usize), |(t, f), r| {
                (t + 1, f + usize::from(r.status != RunStatus::Ok))
            });
        if total == 0 {
            0.0
        } else {
            failed as f64 / total as f64
        }
    }

    /// True when more than half of the replications at this level failed.
    pub fn is_flagged(&self, method: Method, beta_index: usize) -> bool {
        self.failure_fraction(method, beta_index) > 0.5
    }

    pub fn extend(&mut self, other: ReplicationTable) {
        self.rows.extend(other.rows);
    }
}

/// Resolves `h` for every level; grid rules are cross-validated.
pub fn resolve_h(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    cfg.betas
        .iter()
        .map(|&beta| match &cfg.h_rule {
            HRule::Grid(grid) => Ok(cross_validate_h(cfg, grid, beta, cfg.reps_cv)?.selected_h),
            rule => Ok(rule.h_for(beta).expect("non-grid rule")),
        })
        .collect()
}

/// Runs `cfg.reps` replications per level with one method.
pub fn run_replications(cfg: &ExperimentConfig, method: Method) -> Result<ReplicationTable> {
    cfg.validate()?;
    let hs = match method {
        Method::Importance => resolve_h(cfg)?.into_iter().map(Some).collect(),
        Method::Naive => vec![None; cfg.betas.len()],
    };
    run_with_h(cfg, method, &hs, cfg.n, cfg.reps)
}

fn run_with_h(
    cfg: &ExperimentConfig,
    method: Method,
    hs: &[Option<f64>],
    n: usize,
    reps: usize,
) -> Result<ReplicationTable> {
    let jobs: Vec<(usize, usize)> = (0..cfg.betas.len())
        .flat_map(|b| (0..reps).map(move |r| (b, r)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(beta_index, rep)| {
            let beta = cfg.betas[beta_index];
            let seed = derive_seed(cfg.base_seed, beta_index, method, rep);
            let is_cfg = IsConfig {
                beta,
                h: hs[beta_index],
                n,
                seed,
                method,
            };
            let mut row = ReplicationRow {
                method,
                beta_index,
                beta,
                h: hs[beta_index],
                n,
                rep,
                seed,
                var_hat: None,
                cvar_hat: None,
                cvar_se: None,
                status: RunStatus::Ok,
            };
            match estimate(&cfg.dist, &cfg.loss, &is_cfg) {
                Ok(rep) => {
                    row.var_hat = Some(rep.var_hat);
                    row.cvar_hat = Some(rep.cvar_hat);
                    row.cvar_se = Some(rep.cvar_se);
                }
                Err(e) => row.status = RunStatus::from_error(&e),
            }
            row
        })
        .collect();
    Ok(ReplicationTable { rows })
}

/// Relative RMSE of replicated estimates.
///
/// With a reference: `sqrt(mean((v - ref)^2)) / mean(v)`. Without: the
/// sample standard deviation (divisor `n - 1`) over the mean, i.e. the
/// coefficient of variation.
pub fn relative_rmse(values: &[f64], reference: Option<f64>) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if mean == 0.0 {
        return Err(Error::ZeroMean);
    }
    let rmse = match reference {
        Some(r) => (values.iter().map(|v| (v - r) * (v - r)).sum::<f64>() / n as f64).sqrt(),
        None => {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        }
    };
    Ok(rmse / mean.abs())
}

/// Per (method, level) aggregate of a replication table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub beta: f64,
    pub h: Option<f64>,
    pub n: usize,
    /// Successful replications.
    pub reps: usize,
    pub failures: usize,
    pub rel_rmse_var: Option<f64>,
    pub rel_rmse_cvar: Option<f64>,
    pub mean_cvar: Option<f64>,
    pub flagged: bool,
}

/// Summarises every (method, level) group, optionally against reference
/// (VaR, CVaR) values per level.
pub fn summarize(
    table: &ReplicationTable,
    reference: Option<&dyn Fn(f64) -> (f64, f64)>,
) -> Vec<SummaryRow> {
    let mut keys: Vec<(Method, usize)> = Vec::new();
    for r in &table.rows {
        if !keys.contains(&(r.method, r.beta_index)) {
            keys.push((r.method, r.beta_index));
        }
    }
    keys.into_iter()
        .map(|(method, beta_index)| {
            let rows: Vec<&ReplicationRow> = table.level(method, beta_index).collect();
            let first = rows[0];
            let ok: Vec<&ReplicationRow> = rows
                .iter()
                .copied()
                .filter(|r| r.status == RunStatus::Ok)
                .collect();
            let vars: Vec<f64> = ok.iter().filter_map(|r| r.var_hat).collect();
            let cvars: Vec<f64> = ok.iter().filter_map(|r| r.cvar_hat).collect();
            let refs = reference.map(|f| f(first.beta));
            SummaryRow {
                method,
                beta: first.beta,
                h: first.h,
                n: first.n,
                reps: ok.len(),
                failures: rows.len() - ok.len(),
                rel_rmse_var: relative_rmse(&vars, refs.map(|r| r.0)).ok(),
                rel_rmse_cvar: relative_rmse(&cvars, refs.map(|r| r.1)).ok(),
                mean_cvar: (!cvars.is_empty())
                    .then(|| cvars.iter().sum::<f64>() / cvars.len() as f64),
                flagged: table.is_flagged(method, beta_index),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub h: f64,
    /// Extrapolation factor, when `h` gives an outward map at this level.
    pub r: Option<f64>,
    pub successes: usize,
    pub mean_cvar: Option<f64>,
    /// Coefficient of variation of the CVaR estimates.
    pub cv_cvar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub beta: f64,
    pub points: Vec<CvPoint>,
    pub selected_h: f64,
}

/// Picks the `h` in `grid` whose CVaR estimates have the smallest
/// coefficient of variation over `reps_cv` replications at `beta`.
/// Grid points with `r <= 1` are skipped; ties go to the smaller `h`.
/// All grid points share one seed stream.
pub fn cross_validate_h(
    cfg: &ExperimentConfig,
    grid: &[f64],
    beta: f64,
    reps_cv: usize,
) -> Result<CrossValidation> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();

    let points: Vec<CvPoint> = sorted
        .iter()
        .map(|&h| {
            let Ok(r) = extrapolation_factor(beta, h) else {
                return CvPoint {
                    h,
                    r: None,
                    successes: 0,
                    mean_cvar: None,
                    cv_cvar: None,
                };
            };
            let cvars: Vec<f64> = (0..reps_cv)
                .into_par_iter()
                .filter_map(|rep| {
                    let is_cfg = IsConfig {
                        beta,
                        h: Some(h),
                        n: cfg.n,
                        seed: cv_seed(cfg.base_seed, beta, rep),
                        method: Method::Importance,
                    };
                    estimate(&cfg.dist, &cfg.loss, &is_cfg)
                        .ok()
                        .map(|r| r.cvar_hat)
                })
                .collect();
            CvPoint {
                h,
                r: Some(r),
                successes: cvars.len(),
                mean_cvar: (!cvars.is_empty())
                    .then(|| cvars.iter().sum::<f64>() / cvars.len() as f64),
                cv_cvar: relative_rmse(&cvars, None).ok(),
            }
        })
        .collect();

    let mut best: Option<(f64, f64)> = None;
    for p in &points {
        if let Some(cv) = p.cv_cvar {
            // Strict comparison keeps the smaller h on ties.
            if best.is_none_or(|(_, b)| cv < b) {
                best = Some((p.h, cv));
            }
        }
    }
    let (selected_h, _) = best.ok_or(Error::EmptyGrid)?;
    Ok(CrossValidation {
        beta,
        points,
        selected_h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NaiveCv {
    Value(f64),
    /// `n * beta` below the feasibility guard.
    Infeasible,
    /// Feasible but fewer than two replications succeeded.
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRatioRow {
    pub beta: f64,
    pub h: f64,
    pub cv_is: Option<f64>,
    pub cv_naive: NaiveCv,
}

/// Coefficient of variation of IS and (where feasible) naive CVaR estimates
/// at every level.
pub fn variance_ratio_study(cfg: &ExperimentConfig) -> Result<Vec<VarianceRatioRow>> {
    let hs = resolve_h(cfg)?;
    let is_table = run_with_h(
        cfg,
        Method::Importance,
        &hs.iter().copied().map(Some).collect::<Vec<_>>(),
        cfg.n,
        cfg.reps,
    )?;
    let naive_table = run_with_h(
        cfg,
        Method::Naive,
        &vec![None; cfg.betas.len()],
        cfg.n,
        cfg.reps,
    )?;
    let cv_of = |table: &ReplicationTable, method, b| {
        let cvars: Vec<f64> = table.level(method, b).filter_map(|r| r.cvar_hat).collect();
        relative_rmse(&cvars, None).ok()
    };
    Ok(cfg
        .betas
        .iter()
        .enumerate()
        .map(|(b, &beta)| VarianceRatioRow {
            beta,
            h: hs[b],
            cv_is: cv_of(&is_table, Method::Importance, b),
            cv_naive: if (cfg.n as f64) * beta < NAIVE_MIN_TAIL_COUNT {
                NaiveCv::Infeasible
            } else {
                cv_of(&naive_table, Method::Naive, b).map_or(NaiveCv::Unavailable, NaiveCv::Value)
            },
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveMatch {
    pub beta: f64,
    pub target_rel_rmse: f64,
    /// Smallest doubling of the start size that met the target.
    pub matched_n: Option<usize>,
    /// `(n, relative RMSE of CVaR)` for every size tried.
    pub trace: Vec<(usize, Option<f64>)>,
    pub budget_exhausted: bool,
}

/// Doubles the naive sample size from `start_n` until the relative RMSE
/// (coefficient of variation) of the CVaR estimate falls to `target`, or
/// `budget` is exceeded.
pub fn naive_matching_n(
    cfg: &ExperimentConfig,
    beta_index: usize,
    target: f64,
    start_n: usize,
    budget: usize,
    reps: usize,
) -> Result<NaiveMatch> {
    let beta = *cfg.betas.get(beta_index).ok_or(Error::InvalidParameter {
        field: "beta_index",
        reason: format!("no tail level with index {beta_index}"),
    })?;
    let single = ExperimentConfig {
        betas: vec![beta],
        ..cfg.clone()
    };
    let mut trace = Vec::new();
    let mut n = start_n.max(2);
    while n <= budget {
        let table = run_with_h(&single, Method::Naive, &[None], n, reps)?;
        let cvars: Vec<f64> = table.rows.iter().filter_map(|r| r.cvar_hat).collect();
        let rel = if table.is_flagged(Method::Naive, 0) {
            None
        } else {
            relative_rmse(&cvars, None).ok()
        };
        trace.push((n, rel));
        if rel.is_some_and(|r| r <= target) {
            return Ok(NaiveMatch {
                beta,
                target_rel_rmse: target,
                matched_n: Some(n),
                trace,
                budget_exhausted: false,
            });
        }
        n *= 2;
    }
    Ok(NaiveMatch {
        beta,
        target_rel_rmse: target,
        matched_n: None,
        trace,
        budget_exhausted: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::CorrelationMatrix;

    fn exp_cfg(betas: Vec<f64>, n: usize, reps: usize) -> ExperimentConfig {
        let dist = DistributionSpec::iid(1.0, CorrelationMatrix::identity(1).unwrap()).unwrap();
        ExperimentConfig::new(dist, LossModel::linear(), betas, n, HRule::Fixed(2.6), 9)
            .unwrap()
            .with_reps(reps)
            .unwrap()
    }

    #[test]
    fn pert_rule_examples() {
        assert_eq!(pert_h_rule(1.0), 2.0);
        assert!((pert_h_rule((-5.0f64).exp()) - 5.0).abs() < 1e-14);
        assert!((pert_h_rule(10f64.powf(-3.5)) - 6.835_428_695_287_496).abs() < 1e-12);
        assert!((HRule::pert().h_for(0.01).unwrap() - pert_h_rule(0.01)).abs() < 1e-14);
    }

    #[test]
    fn relative_rmse_examples() {
        assert_eq!(relative_rmse(&[3.0; 5], None).unwrap(), 0.0);
        assert!((relative_rmse(&[1.0, 3.0], None).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(relative_rmse(&[1.0, 3.0], Some(2.0)).unwrap(), 0.5);
        assert_eq!(relative_rmse(&[1.0, -1.0], None), Err(Error::ZeroMean));
        assert!(relative_rmse(&[1.0], None).is_err());
    }

    #[test]
    fn config_validation() {
        let dist = DistributionSpec::iid(1.0, CorrelationMatrix::identity(1).unwrap()).unwrap();
        let mk = |betas: Vec<f64>, rule| {
            ExperimentConfig::new(dist.clone(), LossModel::linear(), betas, 100, rule, 1)
        };
        assert!(mk(vec![0.5], HRule::Fixed(2.0)).is_err());
        assert!(mk(vec![], HRule::Fixed(2.0)).is_err());
        assert!(mk(vec![1e-3], HRule::Grid(vec![])).is_err());
        assert!(mk(vec![1e-3], HRule::Fixed(2.0))
            .unwrap()
            .with_reps(1)
            .is_err());
        let pert_on_1d = ExperimentConfig::new(
            dist,
            LossModel::pert(),
            vec![1e-3],
            100,
            HRule::Fixed(2.0),
            1,
        );
        assert!(matches!(pert_on_1d, Err(Error::Dimension { .. })));
    }

    #[test]
    fn replication_table_shape_and_determinism() {
        let cfg = exp_cfg(vec![1e-4], 200, 2);
        let a = run_replications(&cfg, Method::Importance).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a, run_replications(&cfg, Method::Importance).unwrap());
        assert_ne!(a.rows[0].seed, a.rows[1].seed);
    }

    #[test]
    fn seeds_do_not_depend_on_other_levels() {
        let short = exp_cfg(vec![1e-4], 100, 3);
        let long = exp_cfg(vec![1e-4, 1e-6], 100, 3);
        let a = run_replications(&short, Method::Importance).unwrap();
        let b = run_replications(&long, Method::Importance).unwrap();
        assert_eq!(a.rows[..], b.rows[..3]);
        assert_ne!(
            derive_seed(1, 0, Method::Naive, 0),
            derive_seed(1, 0, Method::Importance, 0)
        );
    }

    #[test]
    fn naive_failures_are_recorded_and_flagged() {
        let cfg = exp_cfg(vec![1e-1, 1e-2, 1e-6], 1000, 4);
        let t = run_replications(&cfg, Method::Naive).unwrap();
        assert_eq!(t.len(), 12);
        assert!(!t.is_flagged(Method::Naive, 0));
        assert!(t.is_flagged(Method::Naive, 2));
        assert!(t
            .level(Method::Naive, 2)
            .all(|r| r.status == RunStatus::Infeasible));
        // Failure fraction never shrinks as beta decreases.
        let fr: Vec<f64> = (0..3)
            .map(|b| t.failure_fraction(Method::Naive, b))
            .collect();
        assert!(fr.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rmse_decomposes_into_spread_and_bias() {
        let cfg = exp_cfg(vec![1e-6], 1000, 20);
        let t = run_replications(&cfg, Method::Importance).unwrap();
        let v: Vec<f64> = t.rows.iter().filter_map(|r| r.cvar_hat).collect();
        let truth = 1e6f64.ln() + 1.0;
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let with_ref = relative_rmse(&v, Some(truth)).unwrap() * mean;
        let sd = relative_rmse(&v, None).unwrap() * mean;
        let identity = ((n - 1.0) / n) * sd * sd + (mean - truth).powi(2);
        assert!((with_ref * with_ref - identity).abs() < 1e-10 * identity);
    }

    #[test]
    fn cross_validation_singleton_and_filtering() {
        let cfg = exp_cfg(vec![1e-6], 300, 2);
        let cv = cross_validate_h(&cfg, &[2.6], 1e-6, 5).unwrap();
        assert_eq!(cv.selected_h, 2.6);
        // h = 0.3 gives r < 1 at this level and is skipped.
        let cv = cross_validate_h(&cfg, &[0.3, 2.0, 3.0], 1e-6, 5).unwrap();
        assert!(cv.points[0].r.is_none());
        assert_ne!(cv.selected_h, 0.3);
        assert_eq!(
            cross_validate_h(&cfg, &[0.1, 0.2], 1e-6, 5),
            Err(Error::EmptyGrid)
        );
        assert_eq!(cross_validate_h(&cfg, &[], 1e-6, 5), Err(Error::EmptyGrid));
    }

    #[test]
    fn grid_rule_resolves_through_cross_validation() {
        let mut cfg = exp_cfg(vec![1e-5], 300, 2);
        cfg.h_rule = HRule::Grid(vec![2.6]);
        cfg.reps_cv = 3;
        let t = run_replications(&cfg, Method::Importance).unwrap();
        assert!(t.rows.iter().all(|r| r.h == Some(2.6)));
    }

    #[test]
    fn variance_ratio_flags_infeasible_naive() {
        let cfg = exp_cfg(vec![0.1, 1e-6], 1000, 5);
        let rows = variance_ratio_study(&cfg).unwrap();
        assert!(matches!(rows[0].cv_naive, NaiveCv::Value(_)));
        assert_eq!(rows[1].cv_naive, NaiveCv::Infeasible);
        assert!(rows.iter().all(|r| r.cv_is.is_some()));
    }

    #[test]
    fn summary_counts_failures() {
        let cfg = exp_cfg(vec![1e-2, 1e-6], 1000, 3);
        let t = run_replications(&cfg, Method::Naive).unwrap();
        let s = summarize(&t, None);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].reps, s[0].failures, s[0].flagged), (3, 0, false));
        assert_eq!((s[1].reps, s[1].failures, s[1].flagged), (0, 3, true));
        assert!(s[1].rel_rmse_cvar.is_none());
    }
}
