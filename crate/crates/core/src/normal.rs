//! Standard normal c.d.f. and quantile helpers for the Gaussian copula.
//!
//! Every routine works on the lower tail and reaches the upper tail by
//! symmetry, so probabilities near one never lose their relative accuracy.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this log-probability the quantile is solved directly in log space.
const LN_P_LOG_SPACE: f64 = -690.0;

/// Φ(x).
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// 1 − Φ(x), accurate in the upper tail.
pub fn sf(x: f64) -> f64 {
    cdf(-x)
}

/// ln φ(x).
pub fn ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// ln Φ(x), finite for every finite x.
pub fn ln_cdf(x: f64) -> f64 {
    if x > 0.0 {
        (-sf(x)).ln_1p()
    } else if x > -37.0 {
        cdf(x).ln()
    } else {
        ln_cdf_asymptotic(x)
    }
}

/// Mills-ratio series; truncation error is below 1e-12 for x < -37.
fn ln_cdf_asymptotic(x: f64) -> f64 {
    let y = 1.0 / (x * x);
    let series = 1.0 - y * (1.0 - 3.0 * y * (1.0 - 5.0 * y * (1.0 - 7.0 * y)));
    ln_pdf(x) - (-x).ln() + series.ln()
}

/// ln(1 − Φ(x)).
pub fn ln_sf(x: f64) -> f64 {
    ln_cdf(-x)
}

// Acklam's rational approximation, relative error about 1.15e-9.
const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const P_LOW: f64 = 0.024_25;

fn acklam_lower(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p <= 0.5);
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Quantile for p ∈ (0, 1/2]: rational start plus one Halley polish step.
fn lower_quantile(p: f64) -> f64 {
    let x = acklam_lower(p);
    let e = cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Φ⁻¹(p) for p in the open unit interval.
pub fn quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile needs p in (0, 1), got {p}"
        )));
    }
    Ok(if p <= 0.5 {
        lower_quantile(p)
    } else {
        // 1 - p is exact for p in [0.5, 1).
        -lower_quantile(1.0 - p)
    })
}

/// Φ⁻¹(exp(ln_p)) for ln_p < 0, including probabilities below the smallest
/// positive double. Accuracy near p = 1 is that of `exp(ln_p)`, so callers
/// should route upper-tail probabilities through the complement.
pub fn quantile_from_ln(ln_p: f64) -> Result<f64> {
    if ln_p.is_nan() || ln_p == f64::NEG_INFINITY || ln_p >= 0.0 {
        return Err(Error::Domain(format!(
            "log-space normal quantile needs ln p in (-inf, 0), got {ln_p}"
        )));
    }
    if ln_p > LN_P_LOG_SPACE {
        return quantile(ln_p.exp());
    }
    // Newton on ln Φ(x) = ln_p; ln Φ is concave so the iteration is monotone.
    let mut x = -(-2.0 * ln_p).sqrt();
    for _ in 0..100 {
        let g = ln_cdf(x) - ln_p;
        let slope = (ln_pdf(x) - ln_cdf(x)).exp();
        let step = g / slope;
        x -= step;
        if step.abs() <= 1e-15 * x.abs() {
            break;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference quantiles from 60-digit arithmetic.
    const ORACLE: &[(f64, f64)] = &[
        (0.5, 0.0),
        (0.975, 1.959_963_984_540_054_2),
        (1e-6, -4.753_424_308_822_899),
        (1e-12, -7.034_483_825_301_132),
        (1e-20, -9.262_340_089_798_408),
        (1e-100, -21.273_453_560_965_324),
        (1e-300, -37.047_096_299_361_2),
        // The double nearest 1 - 1e-12 is 1 - 1.0000889e-12.
        (0.999_999_999_999, 7.034_486_910_047_835),
        (0.024_25, -1.972_961_051_311_884_8),
        (0.3, -0.524_400_512_708_040_8),
        (0.9, 1.281_551_565_544_600_5),
    ];

    #[test]
    fn quantile_matches_high_precision_oracle() {
        for &(p, want) in ORACLE {
            let got = quantile(p).unwrap();
            assert!((got - want).abs() <= 1e-9, "p = {p}: {got} vs {want}");
        }
    }

    #[test]
    fn spec_examples() {
        assert_eq!(quantile(0.5).unwrap(), 0.0);
        assert!((quantile(0.975).unwrap() - 1.959964).abs() < 5e-7);
        assert!((quantile(1e-6).unwrap() + 4.753424).abs() < 5e-7);
    }

    #[test]
    fn rejects_out_of_range() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(quantile(p), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn quantile_inverts_cdf_on_a_grid() {
        // Lower half only: cdf(x) rounds away the upper tail.
        for k in 0..400 {
            let x = -0.04 * k as f64;
            assert!((quantile(cdf(x)).unwrap() - x).abs() < 1e-9, "x = {x}");
            assert!(
                (quantile_from_ln(ln_cdf(x)).unwrap() - x).abs() < 1e-9,
                "x = {x}"
            );
        }
    }

    #[test]
    fn log_space_quantile_agrees_and_extends() {
        for &(p, want) in ORACLE.iter().filter(|(p, _)| *p <= 0.5) {
            let got = quantile_from_ln(p.ln()).unwrap();
            assert!((got - want).abs() <= 1e-9, "p = {p}");
        }
        // ln p = -1000 is far below f64 range; check self-consistency of ln Φ.
        let x = quantile_from_ln(-1000.0).unwrap();
        assert!((ln_cdf(x) + 1000.0).abs() < 1e-10);
        assert!(x < -44.0 && x > -45.0);
    }

    #[test]
    fn ln_cdf_is_continuous_across_branches() {
        for x in [-30.0, -36.5, -37.0] {
            let series = ln_cdf_asymptotic(x);
            let direct = cdf(x).ln();
            assert!((series - direct).abs() < 1e-12 * direct.abs(), "x = {x}");
        }
        // ln Φ(-40) from 50-digit arithmetic.
        assert!((ln_cdf(-40.0) + 804.608_442_013_753_8).abs() < 1e-10);
        assert!((ln_cdf(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!((ln_sf(3.0) - sf(3.0).ln()).abs() < 1e-14);
    }
}
