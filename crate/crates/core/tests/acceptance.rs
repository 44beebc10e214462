//! Acceptance suite: every criterion runs at its stated tolerance and time
//! limit, prints one PASS/FAIL line, and the test fails if any criterion does.
//!
//! The criteria run one after another inside a single test so that their
//! wall-clock measurements do not compete for the same threads.

use std::time::{Duration, Instant};

use bbis_core::estimators::importance_samples;
use bbis_core::harness::{cross_validate_h, summarize, SummaryRow};
use bbis_core::{
    estimate, is_cvar, is_var, log_jacobian, naive_var_cvar, run_replications, transform,
    CorrelationMatrix, DistributionSpec, Error, ExperimentConfig, HRule, IsConfig, LossModel,
    Method, ReluNetParams, TransformParams, WeightedLossSample,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn run(id: usize, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = elapsed < limit;
    let passed = out.passed && in_time;
    println!(
        "criterion {id} [{}] {name}: {} ({:.1}s of {}s{})",
        if passed { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { ", over time limit" },
    );
    passed
}

fn exponential_1d() -> DistributionSpec {
    DistributionSpec::iid(1.0, CorrelationMatrix::identity(1).unwrap()).unwrap()
}

fn portfolio() -> DistributionSpec {
    let alphas: Vec<f64> = [0.9; 5].into_iter().chain([1.1; 5]).collect();
    DistributionSpec::from_alphas(&alphas, CorrelationMatrix::equicorrelated(10, 0.1).unwrap())
        .unwrap()
}

fn only(rows: &[SummaryRow], beta: f64) -> &SummaryRow {
    rows.iter()
        .find(|r| r.beta == beta)
        .expect("summary row for level")
}

fn analytic_oracle() -> Outcome {
    let beta = 1e-6;
    let cfg = ExperimentConfig::new(
        exponential_1d(),
        LossModel::linear(),
        vec![beta],
        1000,
        HRule::Fixed(2.6),
        1,
    )
    .unwrap()
    .with_reps(50)
    .unwrap();
    let table = run_replications(&cfg, Method::Importance).unwrap();
    let truth = |b: f64| ((1.0 / b).ln(), (1.0 / b).ln() + 1.0);
    let rows = summarize(&table, Some(&truth));
    let row = only(&rows, beta);
    let (var, cvar) = (
        row.rel_rmse_var.unwrap_or(f64::INFINITY),
        row.rel_rmse_cvar.unwrap_or(f64::INFINITY),
    );
    outcome(
        row.failures == 0 && cvar <= 0.05 && var <= 0.08,
        format!(
            "rel RMSE CVaR {:.4} (<= 0.05), VaR {:.4} (<= 0.08), failures {}",
            cvar, var, row.failures
        ),
    )
}

fn unbiased_tail_probability() -> Outcome {
    let n = 100_000;
    let params = TransformParams::for_level(1e-6, 2.6, 1.0).unwrap();
    let samples =
        importance_samples(&exponential_1d(), &LossModel::linear(), n, 2, &params).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for u in [5.0, 10.0, 15.0] {
        let terms: Vec<f64> = samples
            .iter()
            .map(|s| if s.loss > u { s.log_weight.exp() } else { 0.0 })
            .collect();
        let mean = terms.iter().sum::<f64>() / n as f64;
        let var = terms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let z = (mean - (-u).exp()) / se;
        ok &= z.abs() <= 3.0;
        parts.push(format!("u={u}: z={z:+.2}"));
    }
    outcome(ok, format!("{} (|z| <= 3)", parts.join(", ")))
}

fn fd_abs_det(x: &[f64], p: &TransformParams) -> f64 {
    let d = x.len();
    let mut m = nalgebra::DMatrix::zeros(d, d);
    for j in 0..d {
        let step = 1e-6 * (1.0 + x[j].abs());
        let mut up = x.to_vec();
        let mut dn = x.to_vec();
        up[j] += step;
        dn[j] -= step;
        let tu = transform(&up, p).unwrap();
        let td = transform(&dn, p).unwrap();
        for i in 0..d {
            m[(i, j)] = (tu[i] - td[i]) / (2.0 * step);
        }
    }
    m.determinant().abs()
}

/// A point whose largest log-magnitude is clearly separated from the rest and
/// whose coordinates stay away from the kink at zero.
fn separated_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..d)
            .map(|_| {
                let mag = 0.05 * (400.0f64).powf(rng.random::<f64>());
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        let mut logs: Vec<f64> = x.iter().map(|v| v.abs().ln_1p()).collect();
        logs.sort_by(|a, b| b.total_cmp(a));
        if d == 1 || logs[0] - logs[1] > 1e-3 {
            return x;
        }
    }
}

fn jacobian_matches_finite_difference() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for d in [2, 5, 10] {
        for r in [2.0, 5.0, 10.0] {
            for rho in [0.5, 1.0, 2.0] {
                let p = TransformParams::new(r, rho).unwrap();
                for _ in 0..100 {
                    let x = separated_point(&mut rng, d);
                    let fd = fd_abs_det(&x, &p);
                    let exact = log_jacobian(&x, &p).unwrap().exp();
                    worst = worst.max(((exact - fd) / fd).abs());
                    checked += 1;
                }
            }
        }
    }
    outcome(
        worst <= 1e-4,
        format!("max relative error {worst:.2e} over {checked} points (<= 1e-4)"),
    )
}

fn portfolio_flat_error() -> Outcome {
    let betas = vec![10f64.powf(-3.5), 1e-5, 1e-6, 1e-7];
    let cfg = ExperimentConfig::new(
        portfolio(),
        LossModel::linear(),
        betas.clone(),
        1000,
        HRule::Fixed(2.6),
        4,
    )
    .unwrap()
    .with_reps(50)
    .unwrap();
    let rows = summarize(&run_replications(&cfg, Method::Importance).unwrap(), None);
    let cvs: Vec<f64> = betas
        .iter()
        .map(|&b| only(&rows, b).rel_rmse_cvar.unwrap_or(f64::INFINITY))
        .collect();
    let flat = cvs[3] <= 1.5 * cvs[0];
    let all_ok = cvs.iter().all(|&c| c <= 0.08);
    let listed: Vec<String> = cvs.iter().map(|c| format!("{c:.4}")).collect();
    outcome(
        all_ok && flat,
        format!(
            "CVaR CV by level [{}] (<= 0.08), ratio 1e-7 / 10^-3.5 = {:.2} (<= 1.5)",
            listed.join(", "),
            cvs[3] / cvs[0]
        ),
    )
}

fn naive_sample_complexity() -> Outcome {
    let beta = 10f64.powf(-3.5);
    let cfg = ExperimentConfig::new(
        portfolio(),
        LossModel::linear(),
        vec![beta],
        200_000,
        HRule::Fixed(2.6),
        5,
    )
    .unwrap()
    .with_reps(20)
    .unwrap();
    let rows = summarize(&run_replications(&cfg, Method::Naive).unwrap(), None);
    let cv = only(&rows, beta).rel_rmse_cvar.unwrap_or(f64::INFINITY);

    let small = IsConfig {
        beta,
        h: None,
        n: 1000,
        seed: 5,
        method: Method::Naive,
    };
    let guarded = matches!(
        estimate(&portfolio(), &LossModel::linear(), &small),
        Err(Error::NaiveInfeasible(_))
    );
    outcome(
        cv <= 0.05 && guarded,
        format!("naive n=2e5 CVaR CV {cv:.4} (<= 0.05), n=1e3 rejected by guard: {guarded}"),
    )
}

fn pert_network() -> Outcome {
    let betas = vec![1e-4, 1e-6];
    let dist = DistributionSpec::iid(0.5, CorrelationMatrix::tridiagonal(7, 0.1).unwrap()).unwrap();
    let cfg = ExperimentConfig::new(
        dist,
        LossModel::pert(),
        betas.clone(),
        1000,
        HRule::pert(),
        6,
    )
    .unwrap()
    .with_reps(50)
    .unwrap();
    let table = run_replications(&cfg, Method::Importance).unwrap();
    let finite = table.rows.iter().all(|r| {
        [r.var_hat, r.cvar_hat, r.cvar_se]
            .iter()
            .all(|v| v.is_some_and(f64::is_finite))
    });
    let rows = summarize(&table, None);
    let cvs: Vec<f64> = betas
        .iter()
        .map(|&b| only(&rows, b).rel_rmse_cvar.unwrap_or(f64::INFINITY))
        .collect();
    outcome(
        finite && cvs.iter().all(|&c| c <= 0.12),
        format!(
            "all finite: {finite}, CVaR CV [{:.4}, {:.4}] (<= 0.12)",
            cvs[0], cvs[1]
        ),
    )
}

fn cross_validation_robustness() -> Outcome {
    let beta = 1e-6;
    let grid = [1.5, 2.0, 2.5, 3.0, 3.5];
    let cfg = ExperimentConfig::new(
        portfolio(),
        LossModel::linear(),
        vec![beta],
        1000,
        HRule::Grid(grid.to_vec()),
        7,
    )
    .unwrap();
    let cv = cross_validate_h(&cfg, &grid, beta, cfg.reps_cv).unwrap();
    let values: Vec<f64> = cv.points.iter().filter_map(|p| p.cv_cvar).collect();
    let (lo, hi) = values.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let spread = hi / lo;

    // Fresh replications at the selected value.
    let check = ExperimentConfig {
        h_rule: HRule::Fixed(cv.selected_h),
        reps: 50,
        ..cfg.clone()
    };
    let rows = summarize(&run_replications(&check, Method::Importance).unwrap(), None);
    let selected = only(&rows, beta).rel_rmse_cvar.unwrap_or(f64::INFINITY);
    let listed: Vec<String> = values.iter().map(|c| format!("{c:.4}")).collect();
    outcome(
        values.len() == grid.len() && spread < 3.0 && selected <= 0.08,
        format!(
            "grid CV [{}], spread {spread:.2} (< 3), selected h={} with CV {selected:.4} (<= 0.08)",
            listed.join(", "),
            cv.selected_h
        ),
    )
}

fn relu_network() -> Outcome {
    let beta = 1e-3;
    let net = ReluNetParams::random(8, 12, 8).unwrap();
    assert!(net.w2().iter().all(|&w| w >= 0.0));
    let dist = DistributionSpec::iid(0.6, CorrelationMatrix::tridiagonal(8, 0.1).unwrap()).unwrap();
    let cfg = ExperimentConfig::new(
        dist,
        LossModel::relu_net(net),
        vec![beta],
        517,
        HRule::Fixed(4.6),
        8,
    )
    .unwrap()
    .with_reps(50)
    .unwrap();
    let table = run_replications(&cfg, Method::Importance).unwrap();
    let row = &summarize(&table, None)[0];
    let success = row.reps as f64 / (row.reps + row.failures) as f64;
    let cv = row.rel_rmse_cvar.unwrap_or(f64::INFINITY);
    outcome(
        success >= 0.9 && cv <= 0.15,
        format!(
            "success {:.0}% (>= 90%), CVaR CV {cv:.4} (<= 0.15)",
            100.0 * success
        ),
    )
}

fn brute_force_var(samples: &[WeightedLossSample], beta: f64) -> Option<f64> {
    let n = samples.len() as f64;
    let tail = |u: f64| {
        samples
            .iter()
            .filter(|s| s.loss > u)
            .map(|s| s.log_weight.exp())
            .sum::<f64>()
            / n
    };
    let mut thresholds: Vec<f64> = samples.iter().map(|s| s.loss).collect();
    thresholds.sort_by(f64::total_cmp);
    if tail(f64::NEG_INFINITY) <= beta {
        return None;
    }
    thresholds.into_iter().find(|&u| tail(u) <= beta)
}

fn estimator_oracles() -> Outcome {
    let weighted: Vec<WeightedLossSample> = [(5.0, 0.12f64), (3.0, 0.5), (1.0, 1.0)]
        .iter()
        .map(|&(l, w)| WeightedLossSample::new(l, w.ln()))
        .collect();
    let var = is_var(&weighted, 0.1).unwrap();
    let cvar = is_cvar(&weighted, 0.1, 3.0);
    let losses: Vec<f64> = (1..=10).map(f64::from).collect();
    let naive = naive_var_cvar(&losses, 0.2).unwrap();
    // The weights enter through their logarithms; allow one rounding step.
    let examples = var == 3.0 && (cvar - 3.8).abs() <= 1e-14 && naive == (8.0, 9.5);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=20);
        let samples: Vec<WeightedLossSample> = (0..n)
            .map(|_| {
                WeightedLossSample::new(
                    f64::from(rng.random_range(0..8u8)),
                    rng.random_range(-2.0..2.0),
                )
            })
            .collect();
        let beta = rng.random_range(0.01..0.9);
        if is_var(&samples, beta).ok() != brute_force_var(&samples, beta) {
            mismatches += 1;
        }
    }
    outcome(
        examples && mismatches == 0,
        format!(
            "VaR {var}, CVaR {cvar}, naive {naive:?}; brute-force mismatches {mismatches} of 200"
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let secs = Duration::from_secs;
    let results = [
        run(
            1,
            "analytic oracle, 1-d exponential",
            secs(10),
            analytic_oracle,
        ),
        run(
            2,
            "unbiased tail probability",
            secs(30),
            unbiased_tail_probability,
        ),
        run(
            3,
            "Jacobian against finite differences",
            secs(5),
            jacobian_matches_finite_difference,
        ),
        run(
            4,
            "portfolio, flat relative error",
            secs(120),
            portfolio_flat_error,
        ),
        run(
            5,
            "naive sample complexity",
            secs(180),
            naive_sample_complexity,
        ),
        run(6, "PERT network", secs(120), pert_network),
        run(
            7,
            "cross-validation robustness",
            secs(180),
            cross_validation_robustness,
        ),
        run(8, "ReLU-network loss", secs(60), relu_network),
        run(
            9,
            "estimator oracles and brute-force VaR",
            secs(5),
            estimator_oracles,
        ),
    ];
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, &ok)| !ok)
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
