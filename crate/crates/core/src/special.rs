//! Scalar ancillary functions: the smooth influence function and its
//! envelopes, the clipped influence function, the helper maps used by the
//! confidence widths, and a self-contained standard normal CDF / quantile.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI, SQRT_2};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which bounded influence function a truncated mean uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationKind {
    /// `T(x) = ½·log[(1 + x + x²/2) / (1 − x + x²/2)]`.
    #[default]
    Smooth,
    /// `L(x) = max(−1, min(1, x))`, used with the rescaling by `λ`.
    Clipped,
}

impl TruncationKind {
    pub fn name(self) -> &'static str {
        match self {
            TruncationKind::Smooth => "smooth",
            TruncationKind::Clipped => "clipped",
        }
    }

    /// Constants `λ` and `a` of the clipped variant.
    pub fn clipped_constants() -> &'static ClippedConstants {
        clipped_constants()
    }
}

/// The constants attached to the clipped influence function.
///
/// `lambda` is the positive root of
/// `−(1/λ)·log(1 − λ² / (4[exp(λ) − 1 − λ])) = 1` and
/// `a = 2[exp(λ) − 1 − λ] / λ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClippedConstants {
    pub lambda: f64,
    pub a: f64,
}

fn lambda_equation(lambda: f64) -> f64 {
    let e = lambda.exp_m1() - lambda;
    -(1.0 - lambda * lambda / (4.0 * e)).ln() / lambda - 1.0
}

/// Computed once by bisection on `[0.4, 0.7]` to an absolute tolerance of 1e−14.
pub fn clipped_constants() -> &'static ClippedConstants {
    static CONSTANTS: OnceLock<ClippedConstants> = OnceLock::new();
    CONSTANTS.get_or_init(|| {
        let (mut lo, mut hi) = (0.4_f64, 0.7_f64);
        // The equation is decreasing in λ on this bracket.
        while hi - lo > 1e-14 {
            let mid = 0.5 * (lo + hi);
            if lambda_equation(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let lambda = 0.5 * (lo + hi);
        let a = 2.0 * (lambda.exp_m1() - lambda) / (lambda * lambda);
        ClippedConstants { lambda, a }
    })
}

/// Smooth influence function `T(x)`.
///
/// Evaluated as `½·log1p(2x / (1 − x + x²/2))`, which is accurate near 0 and
/// degrades gracefully (to 0) when `x²` overflows.
pub fn t_smooth(x: f64) -> f64 {
    // Evaluated on |x| so that T is exactly odd.
    let a = x.abs();
    let den = 1.0 - a + 0.5 * a * a;
    (0.5 * (2.0 * a / den).ln_1p()).copysign(x)
}

/// `(T₋(x), T₊(x)) = (−log(1 − x + x²/2), log(1 + x + x²/2))`.
pub fn t_envelopes(x: f64) -> (f64, f64) {
    let lower = -(-x + 0.5 * x * x).ln_1p();
    let upper = (x + 0.5 * x * x).ln_1p();
    (lower, upper)
}

/// Residuals of the quartic bracket around `r(x) = log(1 + x + x²/2) − x + x³/6`.
///
/// Returns `(r(x) + x⁴/38, x⁴/6 − r(x))`; both are nonnegative for every real x.
pub fn log_quad_envelope_check(x: f64) -> (f64, f64) {
    let r = (x + 0.5 * x * x).ln_1p() - x + x * x * x / 6.0;
    let x4 = x * x * x * x;
    (r + x4 / 38.0, x4 / 6.0 - r)
}

/// `g(x) = x − T(x)`.
pub fn g_gap(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        // Taylor series of ∫ t²(2 + t²)/(4 + t⁴) dt.
        let x2 = x * x;
        x * x2 * (1.0 / 6.0 + x2 * (1.0 / 20.0 - x2 / 56.0))
    } else {
        x - t_smooth(x)
    }
}

/// `φ(x) = 2x / (1 + √(1 − 4x))` for `x ≤ 1/4`, `+∞` otherwise.
pub fn phi(x: f64) -> f64 {
    if x <= 0.25 {
        2.0 * x / (1.0 + (1.0 - 4.0 * x).max(0.0).sqrt())
    } else {
        f64::INFINITY
    }
}

/// `h(a, y) = 4y / [(1 + y)(1 + √(1 − 4ay²/(1 + y)²))]`.
///
/// A discriminant within 1e−12 below zero is treated as zero; anything more
/// negative is a domain error.
pub fn h_ancillary(a: f64, y: f64) -> Result<f64> {
    if !(a > 0.0) || !(y >= 0.0) || !a.is_finite() || !y.is_finite() {
        return Err(Error::Domain {
            function: "h_ancillary",
            detail: format!("requires a > 0 and y >= 0, got a = {a:?}, y = {y:?}"),
        });
    }
    let s = (1.0 + y) * (1.0 + y);
    let mut disc = 1.0 - 4.0 * a * y * y / s;
    if disc < 0.0 {
        if disc > -1e-12 {
            disc = 0.0;
        } else {
            return Err(Error::Domain {
                function: "h_ancillary",
                detail: format!("negative discriminant {disc:?} for a = {a:?}, y = {y:?}"),
            });
        }
    }
    Ok(4.0 * y / ((1.0 + y) * (1.0 + disc.sqrt())))
}

/// Clipped influence function `L(x) = max(−1, min(1, x))`.
pub fn l_clipped(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

fn l_upper(x: f64) -> Result<f64> {
    let ClippedConstants { lambda, .. } = *clipped_constants();
    let arg = 1.0 + lambda * x + (lambda.exp_m1() - lambda) * x * x;
    if !(arg > 0.0) {
        return Err(Error::Domain {
            function: "l_envelopes",
            detail: format!("nonpositive log argument {arg:?} at x = {x:?}"),
        });
    }
    Ok(arg.ln() / lambda)
}

/// `(L₋(x), L₊(x))` with `L₊(x) = (1/λ)·log{1 + λx + [exp(λ) − 1 − λ]x²}`
/// and `L₋(x) = −L₊(−x)`.
pub fn l_envelopes(x: f64) -> Result<(f64, f64)> {
    Ok((-l_upper(-x)?, l_upper(x)?))
}

fn l_upper_third(x: f64) -> f64 {
    let l = LN_2;
    let cubic = 1.0 - l - 0.5 * l * l;
    let xp = x.max(0.0);
    (1.0 + l * x + 0.5 * l * l * x * x + cubic * xp * xp * xp).ln() / l
}

/// Envelopes `(L₋′(x), L₊′(x))` usable when a third moment exists. No
/// estimator is built on them; they are exposed for checking.
pub fn l_third_moment_envelopes(x: f64) -> (f64, f64) {
    (-l_upper_third(-x), l_upper_third(x))
}

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Complementary error function.
///
/// Power series of `erf` (all terms positive) for `|x| < 2`, Lentz-evaluated
/// continued fraction for `erfc` beyond. Absolute accuracy is about 1e−15
/// and relative accuracy in the far tail about 1e−14.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.0 {
        1.0 - erf_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

/// `erf(x) = 2/√π · exp(−x²) · Σ 2ⁿ x^{2n+1} / (2n+1)!!`.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
        if term <= sum * 1e-17 || n > 200.0 {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-x2).exp() * sum
}

/// `erfc(x) = exp(−x²)/√π · 1 / (x + (1/2)/(x + 1/(x + (3/2)/(x + …))))`.
fn erfc_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = f;
    let mut d = 0.0;
    for n in 1..=500 {
        let a = 0.5 * n as f64;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (PI.sqrt() * f)
}

/// Standard normal distribution function `F(z)`.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal quantile `F⁻¹(p)`.
///
/// Rational initial guess refined by Halley steps against [`normal_cdf`];
/// evaluated on the lower half and mirrored so that
/// `normal_quantile(p) = −normal_quantile(1 − p)`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain {
            function: "normal_quantile",
            detail: format!("p must lie in (0, 1), got {p:?}"),
        });
    }
    if p > 0.5 {
        Ok(-lower_quantile(1.0 - p))
    } else {
        Ok(lower_quantile(p))
    }
}

/// Quantile for `p ∈ (0, 1/2]`.
fn lower_quantile(p: f64) -> f64 {
    let mut x = quantile_initial_guess(p);
    for _ in 0..3 {
        // F(x) for x <= 0 goes through erfc of a nonnegative argument, which
        // keeps relative accuracy deep in the tail.
        let e = 0.5 * erfc(-x / SQRT_2) - p;
        let u = e / normal_pdf(x);
        let step = u / (1.0 + 0.5 * x * u);
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1e-300) {
            break;
        }
    }
    x
}

/// Piecewise rational approximation (relative error about 1e−9).
#[allow(clippy::excessive_precision)]
fn quantile_initial_guess(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_smooth_values() {
        assert_eq!(t_smooth(0.0), 0.0);
        let peak = t_smooth(2f64.sqrt());
        assert!((peak - (1.0 + 2f64.sqrt()).ln()).abs() < 1e-15);
        assert!((peak - 0.881373587019543).abs() < 1e-12);
        for i in -200..=200 {
            let x = i as f64 * 0.173;
            assert!((t_smooth(-x) + t_smooth(x)).abs() < 1e-15);
        }
        // Saturation back to zero far away, without NaN.
        assert!(t_smooth(1e200).abs() < 1e-150);
        assert!(t_smooth(-1e200).abs() < 1e-150);
    }

    #[test]
    fn t_envelope_values() {
        assert_eq!(t_envelopes(0.0), (0.0, 0.0));
        let (lo, hi) = t_envelopes(1.0);
        assert!((lo - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((hi - 0.916290731874155).abs() < 1e-12);
        for i in -1000..=1000 {
            let x = i as f64 * 0.01;
            let (lo, hi) = t_envelopes(x);
            let t = t_smooth(x);
            assert!(lo <= t + 1e-15 && t <= hi + 1e-15, "x = {x}");
        }
    }

    #[test]
    fn quartic_bracket() {
        assert_eq!(log_quad_envelope_check(0.0), (0.0, 0.0));
        let (lo, hi) = log_quad_envelope_check(1.0);
        // r(1) = log 2.5 − 5/6 ≈ 0.0829575
        let r1 = 2.5f64.ln() - 1.0 + 1.0 / 6.0;
        assert!((r1 - 0.082957398).abs() < 1e-8);
        assert!((lo - (r1 + 1.0 / 38.0)).abs() < 1e-15);
        assert!((hi - (1.0 / 6.0 - r1)).abs() < 1e-15);
        assert!(lo > 0.0 && hi > 0.0);
    }

    #[test]
    fn g_gap_values() {
        assert_eq!(g_gap(0.0), 0.0);
        let g1 = g_gap(1.0);
        assert!((g1 - (1.0 - 0.5 * 5f64.ln())).abs() < 1e-15);
        assert!((g1 - 0.195281).abs() < 1e-6);
        assert!(g1 <= 0.2);
        // Series and direct evaluation agree across the switch.
        let x = 0.999e-3;
        let direct = x - t_smooth(x);
        assert!((g_gap(x) / direct - 1.0).abs() < 1e-8);
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi(0.0), 0.0);
        assert_eq!(phi(0.25), 0.5);
        assert_eq!(phi(0.3), f64::INFINITY);
        assert_eq!(phi(0.25 + 1e-15), f64::INFINITY);
    }

    #[test]
    fn h_values() {
        assert_eq!(h_ancillary(2.0, 0.0).unwrap(), 0.0);
        assert!(matches!(h_ancillary(2.0, 10.0), Err(Error::Domain { .. })));
        assert!(h_ancillary(-1.0, 0.1).is_err());
        let mut prev = 0.0;
        for i in 1..100 {
            let y = i as f64 * 0.005;
            let h = h_ancillary(1.5, y).unwrap();
            assert!(h > prev);
            prev = h;
        }
    }

    #[test]
    fn clipped_values() {
        assert_eq!(l_clipped(0.5), 0.5);
        assert_eq!(l_clipped(3.0), 1.0);
        assert_eq!(l_clipped(-2.0), -1.0);
        let (lo, hi) = l_envelopes(0.5).unwrap();
        assert!(lo <= 0.5 && 0.5 <= hi);
    }

    #[test]
    fn lambda_root() {
        let ClippedConstants { lambda, a } = *clipped_constants();
        assert!((0.535..=0.536).contains(&lambda), "lambda = {lambda}");
        let lhs = -(1.0 - lambda * lambda / (4.0 * (lambda.exp() - 1.0 - lambda))).ln() / lambda;
        assert!((lhs - 1.0).abs() < 1e-12);
        assert!(a > 1.0 && a.sqrt() <= 1.1);
    }

    #[test]
    fn quantile_values() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_quantile(0.975).unwrap() - 1.959963984540054).abs() < 1e-12);
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
        for &p in &[1e-12, 0.01, 0.2, 0.4] {
            let q = 1.0 - p;
            let a = normal_quantile(1.0 - q).unwrap();
            let b = normal_quantile(q).unwrap();
            assert!((a + b).abs() < 1e-10);
        }
    }
}
