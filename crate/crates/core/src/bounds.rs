//! Closed-form deviation bounds used as comparison curves.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_probability, invalid, Error, Result};
use crate::special::normal_quantile;

const E: f64 = std::f64::consts::E;

/// `√(v/(2εn))`: Chebyshev width of the empirical mean.
pub fn chebyshev_width(n: usize, v: f64, eps: f64) -> Result<f64> {
    check_n(n)?;
    check_probability("eps", eps)?;
    Ok((v / (2.0 * eps * n as f64)).sqrt())
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        invalid("n must be >= 1")
    } else {
        Ok(())
    }
}

/// Deviation of the empirical mean under a kurtosis bound, in units of `√v`.
///
/// With `L = log(3/(2ε))`:
/// `2L√κ/(5n) + √(2L/n) + (3κ/(2εn³))^{1/4}·(1 + 3⁵(n−1)L²κ/(2500n²) + 12√2·L^{3/2}√κ/(25n^{3/2}))^{1/4}`.
pub fn kurtosis_upper_width(n: usize, kappa: f64, eps: f64) -> Result<f64> {
    if n < 2 {
        return invalid("n must be >= 2");
    }
    check_probability("eps", eps)?;
    if !(kappa >= 1.0) {
        return invalid(format!("kappa must be >= 1, got {kappa:?}"));
    }
    let nf = n as f64;
    let l = (1.5 / eps).ln();
    let first = 2.0 * l * kappa.sqrt() / (5.0 * nf);
    let second = (2.0 * l / nf).sqrt();
    let inner = 1.0
        + 243.0 * (nf - 1.0) * l * l * kappa / (2500.0 * nf * nf)
        + 12.0 * 2f64.sqrt() * l.powf(1.5) * kappa.sqrt() / (25.0 * nf.powf(1.5));
    let third = (3.0 * kappa / (2.0 * eps * nf.powi(3))).powf(0.25) * inner.powf(0.25);
    Ok(first + second + third)
}

/// `((3(n−1) + κ)/(2nε))^{1/4}·√(1/n)`: Chebyshev on the fourth moment, in
/// units of `√v`.
pub fn fourth_moment_width(n: usize, kappa: f64, eps: f64) -> Result<f64> {
    check_n(n)?;
    check_probability("eps", eps)?;
    if !(kappa >= 1.0) {
        return invalid(format!("kappa must be >= 1, got {kappa:?}"));
    }
    let nf = n as f64;
    Ok(((3.0 * (nf - 1.0) + kappa) / (2.0 * nf * eps)).powf(0.25) / nf.sqrt())
}

/// `√(v/n)·F⁻¹(1 − ε)`: the smallest width achievable on Gaussian samples.
pub fn gaussian_benchmark_width(n: usize, v: f64, eps: f64) -> Result<f64> {
    check_n(n)?;
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Domain {
            function: "gaussian_benchmark_width",
            detail: format!("eps must lie in (0, 1/2), got {eps:?}"),
        });
    }
    Ok((v / n as f64).sqrt() * normal_quantile(1.0 - eps)?)
}

/// Below this width, some law of variance `v` makes the empirical mean miss
/// with probability at least `2ε`: `√(v/(2nε))·(1 − 2eε/n)^{(n−1)/2}`,
/// for `ε ≤ 1/(2e)`.
pub fn lower_bound_variance(n: usize, v: f64, eps: f64) -> Result<f64> {
    check_n(n)?;
    if !(eps > 0.0 && eps <= 1.0 / (2.0 * E)) {
        return Err(Error::Domain {
            function: "lower_bound_variance",
            detail: format!("eps must lie in (0, 1/(2e)], got {eps:?}"),
        });
    }
    let nf = n as f64;
    Ok((v / (2.0 * nf * eps)).sqrt() * (1.0 - 2.0 * E * eps / nf).powf((nf - 1.0) / 2.0))
}

/// Kurtosis counterpart of [`lower_bound_variance`], in units of `√v`:
/// `((c−1)/(4n³ε))^{1/4}·(1 − 4eε/n)^{(n−1)/4}`, for `c ≥ 1 + 1/n` and
/// `ε ≤ 1/(4e)`.
pub fn lower_bound_kurtosis(n: usize, c: f64, eps: f64) -> Result<f64> {
    check_n(n)?;
    let nf = n as f64;
    if !(c >= 1.0 + 1.0 / nf) || !(eps > 0.0 && eps <= 1.0 / (4.0 * E)) {
        return Err(Error::Domain {
            function: "lower_bound_kurtosis",
            detail: format!(
                "needs c >= 1 + 1/n and eps in (0, 1/(4e)], got c = {c:?}, eps = {eps:?}"
            ),
        });
    }
    Ok(((c - 1.0) / (4.0 * nf.powi(3) * eps)).powf(0.25)
        * (1.0 - 4.0 * E * eps / nf).powf((nf - 1.0) / 4.0))
}

/// Role of a curve in a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    UpperDeviation,
    LowerDeviation,
    Benchmark,
}

/// Half-width tabulated against ε, with ε strictly decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub name: String,
    pub kind: CurveKind,
    pub points: Vec<(f64, f64)>,
}

impl BoundCurve {
    /// Evaluates `f` on `grid`; values outside a formula's domain become `+∞`
    /// for upper curves and are dropped for the others.
    pub fn tabulate(
        name: &str,
        kind: CurveKind,
        grid: &[f64],
        f: impl Fn(f64) -> Result<f64>,
    ) -> Result<BoundCurve> {
        for w in grid.windows(2) {
            if !(w[1] < w[0]) {
                return invalid("the epsilon grid must be strictly decreasing");
            }
        }
        let mut points = Vec::with_capacity(grid.len());
        for &e in grid {
            match f(e) {
                Ok(w) => points.push((e, w)),
                Err(Error::Domain { .. }) if kind == CurveKind::UpperDeviation => {
                    points.push((e, f64::INFINITY))
                }
                Err(Error::Domain { .. }) => {}
                Err(other) => return Err(other),
            }
        }
        Ok(BoundCurve {
            name: name.to_string(),
            kind,
            points,
        })
    }
}

/// `count` log-spaced values from `hi` down to `lo`.
pub fn log_grid(hi: f64, lo: f64, count: usize) -> Result<Vec<f64>> {
    check_positive("hi", hi)?;
    check_positive("lo", lo)?;
    if count == 0 {
        return Ok(Vec::new());
    }
    if count == 1 {
        return Ok(vec![hi]);
    }
    if !(lo < hi) {
        return invalid("lo must be below hi");
    }
    let (a, b) = (hi.log10(), lo.log10());
    Ok((0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect())
}

/// The default curve grid: 57 points from 1e−1 down to 1e−15, four per decade.
pub fn default_eps_grid() -> Vec<f64> {
    (0..57).map(|i| 10f64.powf(-1.0 - i as f64 / 4.0)).collect()
}
