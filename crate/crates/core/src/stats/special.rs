//! Scalar special functions backing the statistical tests.
//!
//! Everything here is implemented from standard numerical building blocks
//! (Stirling series, Lentz continued fractions, the AS 241 rational
//! approximations) rather than pulled from a linear-algebra stack, because
//! the crate needs exactly four functions and byte-stable behavior across
//! releases matters more than breadth. Accuracy targets, checked by the
//! reference-grid tests: ~1e-13 relative for ln_gamma / erf / normal_cdf,
//! 1e-10 absolute for t_cdf, ~3.5e-16 relative for normal_ppf.

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_74;
const FPMIN: f64 = 1e-300;

/// Natural log of the gamma function for x > 0.
///
/// Stirling's series with Bernoulli correction terms, after lifting the
/// argument to at least 10 via ln Γ(x) = ln Γ(x+1) − ln x. At x ≥ 10 the
/// first omitted term is below 4e-17 relative.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x.is_finite() && x > 0.0, "ln_gamma requires finite x > 0, got {x}");
    let mut shift = 0.0;
    let mut x = x;
    while x < 10.0 {
        shift -= x.ln();
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2
                                * (-1.0 / 1680.0
                                    + inv2
                                        * (1.0 / 1188.0
                                            + inv2
                                                * (-691.0 / 360_360.0
                                                    + inv2 * (1.0 / 156.0)))))));
    shift + (x - 0.5) * x.ln() - x + LN_SQRT_2PI + series
}

/// Continued fraction for the incomplete beta, modified Lentz form.
/// Converges fast only for x < (a+1)/(a+b+2); callers flip via symmetry.
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 400;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return h;
        }
    }
    // The fraction converges for every admissible (a, b, x); hitting the cap
    // still leaves ~1e-13, which downstream tolerances absorb.
    h
}

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "reg_inc_beta requires a, b > 0");
    assert!((0.0..=1.0).contains(&x), "reg_inc_beta requires x in [0, 1], got {x}");
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (-x).ln_1p();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * betacf(a, b, x) / a
    } else {
        1.0 - front * betacf(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t with `df` degrees of freedom (df > 0, not necessarily
/// integer), via the incomplete-beta identity
/// P(T ≤ t) = I_x(df/2, 1/2) / 2 with x = df/(df + t²) for t ≤ 0,
/// and symmetry for t > 0.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    assert!(df.is_finite() && df > 0.0, "t_cdf requires finite df > 0, got {df}");
    assert!(!t.is_nan(), "t_cdf requires a non-NaN statistic");
    if t.is_infinite() {
        return if t < 0.0 { 0.0 } else { 1.0 };
    }
    let x = df / (df + t * t);
    let half_tail = 0.5 * reg_inc_beta(0.5 * df, 0.5, x);
    if t <= 0.0 {
        half_tail
    } else {
        1.0 - half_tail
    }
}

/// Maclaurin series for erf, used on |x| < 2 where it converges quickly and
/// the alternating terms stay small enough to avoid cancellation trouble.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut power = x; // x^(2n+1) / n!
    let mut sum = x;
    for n in 1..200u32 {
        power *= x2 / n as f64;
        let term = power / (2 * n + 1) as f64;
        if n % 2 == 1 {
            sum -= term;
        } else {
            sum += term;
        }
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    std::f64::consts::FRAC_2_SQRT_PI * sum
}

/// Continued fraction for erfc on x ≥ 2 (Lentz), where the series would
/// cancel. erfc(x) = e^(−x²)/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …)))).
fn erfc_cf(x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-16;
    let mut f = FPMIN;
    let mut c = f;
    let mut d = 0.0;
    for n in 1..=MAX_ITER {
        let a = if n == 1 { 1.0 } else { (n - 1) as f64 / 2.0 };
        d = x + a * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = x + a / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    std::f64::consts::FRAC_2_SQRT_PI * 0.5 * (-x * x).exp() * f
}

pub fn erf(x: f64) -> f64 {
    assert!(!x.is_nan(), "erf requires a non-NaN argument");
    if x.abs() < 2.0 {
        erf_series(x)
    } else if x > 0.0 {
        1.0 - erfc_cf(x)
    } else {
        erfc_cf(-x) - 1.0
    }
}

pub fn erfc(x: f64) -> f64 {
    assert!(!x.is_nan(), "erfc requires a non-NaN argument");
    if x >= 2.0 {
        erfc_cf(x)
    } else if x <= -2.0 {
        2.0 - erfc_cf(-x)
    } else {
        1.0 - erf_series(x)
    }
}

/// Standard normal CDF. Φ(z) = erfc(−z/√2)/2 keeps full relative accuracy in
/// the lower tail, which the Shapiro–Wilk p-value path depends on.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

// AS 241 (PPND16) rational-approximation coefficients. Three regimes:
// central |p − 1/2| ≤ 0.425, then two tail pieces split at r = 5 where
// r = sqrt(−ln(min(p, 1−p))).
const PPF_A: [f64; 8] = [
    3.387_132_872_796_366_608e0,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
const PPF_B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561e3,
];
const PPF_C: [f64; 8] = [
    1.423_437_110_749_683_577_34e0,
    4.630_337_846_156_545_295_9e0,
    5.769_497_221_460_691_405_5e0,
    3.647_848_324_763_204_605_04e0,
    1.270_458_252_452_368_382_58e0,
    2.417_807_251_774_506_117_7e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_4e-4,
];
const PPF_D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87e0,
    1.676_384_830_183_803_849_4e0,
    6.897_673_349_851_000_045_5e-1,
    1.481_039_764_274_800_745_9e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const PPF_E: [f64; 8] = [
    6.657_904_643_501_103_777_2e0,
    5.463_784_911_164_114_369_9e0,
    1.784_826_539_917_291_335_8e0,
    2.965_605_718_285_048_912_3e-1,
    2.653_218_952_657_612_309_3e-2,
    1.242_660_947_388_078_438_6e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const PPF_F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_9e-1,
    1.369_298_809_227_358_053_1e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

fn rational(num: &[f64; 8], den: &[f64; 8], r: f64) -> f64 {
    let mut n = num[7];
    let mut d = den[7];
    for i in (0..7).rev() {
        n = n * r + num[i];
        d = d * r + den[i];
    }
    n / d
}

/// Standard normal quantile function (inverse CDF) for p in (0, 1),
/// Wichura's algorithm AS 241 (the double-precision PPND16 variant).
pub fn normal_ppf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "normal_ppf requires p in (0, 1), got {p}");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * rational(&PPF_A, &PPF_B, r);
    }
    let r = (-(p.min(1.0 - p)).ln()).sqrt();
    let z = if r <= 5.0 {
        rational(&PPF_C, &PPF_D, r - 1.6)
    } else {
        rational(&PPF_E, &PPF_F, r - 5.0)
    };
    if q < 0.0 {
        -z
    } else {
        z
    }
}
