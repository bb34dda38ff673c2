//! Shapiro–Wilk normality test, Royston's AS R94 formulation.
//!
//! Valid for 3 ≤ n ≤ 5000. Weights come from the expected normal order
//! statistics m_i = Φ⁻¹((i − 0.375)/(n + 0.25)) with polynomial corrections
//! to the outermost one (n ≤ 5) or two (n > 5) coefficients; the p-value
//! maps W through the small-sample transforms Royston fitted: exact arcsine
//! law at n = 3, a −ln(γ − ln(1−W)) normalization for 4 ≤ n ≤ 11, and a
//! ln(1−W) normalization for n ≥ 12.

use super::special::{normal_cdf, normal_ppf};
use super::StatsError;

pub const SHAPIRO_MIN_N: usize = 3;
pub const SHAPIRO_MAX_N: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapiroWilk {
    pub w: f64,
    pub p_value: f64,
}

/// Polynomial correction for the largest weight, in powers of 1/√n.
const OUTER_POLY: [f64; 5] = [0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
/// Correction for the second-largest weight (only used when n > 5).
const SECOND_POLY: [f64; 5] = [0.042981, -0.293762, -1.752461, 5.682633, -3.582633];

fn poly_in(u: f64, coeffs: &[f64]) -> f64 {
    // c1 u + c2 u² + …, no constant term.
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = (acc + c) * u;
    }
    acc
}

pub fn shapiro_wilk(sample: &[f64]) -> Result<ShapiroWilk, StatsError> {
    let n = sample.len();
    if n < SHAPIRO_MIN_N {
        return Err(StatsError::TooFewSamples { test: "shapiro-wilk", n, min: SHAPIRO_MIN_N });
    }
    if n > SHAPIRO_MAX_N {
        return Err(StatsError::TooManySamples { test: "shapiro-wilk", n, max: SHAPIRO_MAX_N });
    }
    if !sample.iter().all(|v| v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut x = sample.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    if x[n - 1] == x[0] {
        return Err(StatsError::ZeroRange);
    }

    let nf = n as f64;
    let m: Vec<f64> =
        (1..=n).map(|i| normal_ppf((i as f64 - 0.375) / (nf + 0.25))).collect();
    let m_sq: f64 = m.iter().map(|v| v * v).sum();

    let mut a = vec![0.0; n];
    if n == 3 {
        let w = std::f64::consts::FRAC_1_SQRT_2;
        a[0] = -w;
        a[2] = w;
    } else {
        let u = 1.0 / nf.sqrt();
        let a_n = m[n - 1] / m_sq.sqrt() + poly_in(u, &OUTER_POLY);
        if n <= 5 {
            let phi = (m_sq - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * a_n * a_n);
            a[n - 1] = a_n;
            a[0] = -a_n;
            for i in 1..n - 1 {
                a[i] = m[i] / phi.sqrt();
            }
        } else {
            let a_n1 = m[n - 2] / m_sq.sqrt() + poly_in(u, &SECOND_POLY);
            let phi = (m_sq - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2])
                / (1.0 - 2.0 * a_n * a_n - 2.0 * a_n1 * a_n1);
            a[n - 1] = a_n;
            a[0] = -a_n;
            a[n - 2] = a_n1;
            a[1] = -a_n1;
            for i in 2..n - 2 {
                a[i] = m[i] / phi.sqrt();
            }
        }
    }

    let mean = x.iter().sum::<f64>() / nf;
    let ssq: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    let num: f64 = a.iter().zip(&x).map(|(ai, xi)| ai * xi).sum();
    let w = (num * num / ssq).min(1.0);

    let p_value = if n == 3 {
        let p = 6.0 / std::f64::consts::PI
            * (w.sqrt().asin() - 0.75f64.sqrt().asin());
        p.clamp(0.0, 1.0)
    } else {
        let w1 = 1.0 - w;
        if w1 <= 0.0 {
            1.0
        } else if n <= 11 {
            let gamma = -2.273 + 0.459 * nf;
            let arg = gamma - w1.ln();
            if arg <= 0.0 {
                // W so low the transform leaves its domain; the mapped
                // statistic diverges to +∞ and the tail mass vanishes.
                0.0
            } else {
                let y = -arg.ln();
                let mu = 0.5440 - 0.39978 * nf + 0.025054 * nf * nf - 0.0006714 * nf * nf * nf;
                let sigma =
                    (1.3822 - 0.77857 * nf + 0.062767 * nf * nf - 0.0020322 * nf * nf * nf).exp();
                1.0 - normal_cdf((y - mu) / sigma)
            }
        } else {
            let y = w1.ln();
            let ln_n = nf.ln();
            let mu = -1.5861 - 0.31082 * ln_n - 0.083751 * ln_n * ln_n
                + 0.0038915 * ln_n * ln_n * ln_n;
            let sigma = (-0.4803 - 0.082676 * ln_n + 0.0030302 * ln_n * ln_n).exp();
            1.0 - normal_cdf((y - mu) / sigma)
        }
    };
    Ok(ShapiroWilk { w, p_value })
}
