//! One-shot truncated mean and its confidence half-widths.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_probability, invalid, Error, Result};
use crate::special::{clipped_constants, l_clipped, t_smooth, TruncationKind};

/// An immutable, nonempty sample of finite observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return invalid("a sample needs at least one observation");
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return invalid(format!("observation {i} is not finite ({v})"));
        }
        Ok(Sample { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false; kept for API symmetry with slices.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Sample with every observation shifted by `t`.
    pub fn shifted(&self, t: f64) -> Sample {
        Sample {
            values: self.values.iter().map(|y| y + t).collect(),
        }
    }

    /// Sample with every observation multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Sample {
        Sample {
            values: self.values.iter().map(|y| y * s).collect(),
        }
    }
}

impl TryFrom<Vec<f64>> for Sample {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Sample::new(values)
    }
}

/// Prior knowledge about the sampling law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorBounds {
    /// Upper bound on the variance.
    pub v0: f64,
    /// Upper bound on the distance between the starting center and the mean.
    pub delta0: f64,
    /// Upper bound on the uniform kurtosis.
    pub c: Option<f64>,
}

impl PriorBounds {
    pub fn variance(v0: f64, delta0: f64) -> Self {
        PriorBounds {
            v0,
            delta0,
            c: None,
        }
    }

    pub fn kurtosis(c: f64) -> Self {
        PriorBounds {
            v0: 0.0,
            delta0: 0.0,
            c: Some(c),
        }
    }
}

/// Method description attached to an estimate.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimateMetadata {
    pub method: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// Hex sha256 of the deterministic schedule constants, when there is one.
    pub schedule_digest: Option<String>,
    /// Set when the half-width is a theoretical deviation bound that cannot
    /// be computed from the data alone.
    pub theoretical_only: bool,
}

/// Point estimate with a half-width valid with probability at least
/// `1 − miss_probability`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceEstimate {
    pub point: f64,
    pub half_width: f64,
    /// The two-sided miss probability `2ε`.
    pub miss_probability: f64,
    pub feasible: bool,
    pub metadata: EstimateMetadata,
}

impl ConfidenceEstimate {
    pub fn interval(&self) -> (f64, f64) {
        (self.point - self.half_width, self.point + self.half_width)
    }

    pub fn covers(&self, m: f64) -> bool {
        (self.point - m).abs() <= self.half_width
    }
}

/// `θ̂_α(θ₀)`.
///
/// Smooth: `θ₀ + (1/(nα))·Σ T[α(Y_i − θ₀)]`.
/// Clipped: `θ₀ + (λ/(nα))·Σ L[(α/λ)(Y_i − θ₀)]`.
pub fn truncated_mean(
    sample: &Sample,
    theta0: f64,
    alpha: f64,
    kind: TruncationKind,
) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return invalid(format!("alpha must be finite and > 0, got {alpha:?}"));
    }
    let n = sample.len() as f64;
    let ys = sample.values();
    Ok(match kind {
        TruncationKind::Smooth => {
            let s: f64 = ys.iter().map(|y| t_smooth(alpha * (y - theta0))).sum();
            theta0 + s / (n * alpha)
        }
        TruncationKind::Clipped => {
            let lambda = clipped_constants().lambda;
            let r = alpha / lambda;
            let s: f64 = ys.iter().map(|y| l_clipped(r * (y - theta0))).sum();
            theta0 + lambda * s / (n * alpha)
        }
    })
}

fn check_common(n: usize, v0: f64, delta0: f64, epsilon: f64) -> Result<()> {
    if n == 0 {
        return invalid("n must be >= 1");
    }
    if !(v0 >= 0.0) || !(delta0 >= 0.0) || !v0.is_finite() || !delta0.is_finite() {
        return invalid(format!(
            "priors must be finite and >= 0, got v0 = {v0:?}, delta0 = {delta0:?}"
        ));
    }
    check_probability("epsilon", epsilon)
}

/// How α is chosen in the fixed-center width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaPolicy {
    /// A user-supplied α.
    Fixed(f64),
    /// `α = √(2·log(ε⁻¹)/(n·v₀))`.
    ConfidenceTuned,
    /// `α = √(2/(n·v₀))`, the same for every ε.
    ConfidenceFree,
}

/// Half-width around a fixed center at distance at most `δ₀` from the mean:
/// `αv₀/2 + log(ε⁻¹)/(nα) + (α²δ₀/2)(1 + αδ₀)(δ₀²/3 + v₀)`.
pub fn one_shot_width(n: usize, v0: f64, delta0: f64, alpha: f64, epsilon: f64) -> Result<f64> {
    check_common(n, v0, delta0, epsilon)?;
    check_positive("alpha", alpha)?;
    let nf = n as f64;
    Ok(alpha * v0 / 2.0
        + (1.0 / epsilon).ln() / (nf * alpha)
        + alpha * alpha * delta0 / 2.0 * (1.0 + alpha * delta0) * (delta0 * delta0 / 3.0 + v0))
}

/// [`one_shot_width`] with α picked by `policy`; returns `(α, half_width)`.
pub fn one_shot_width_with(
    n: usize,
    v0: f64,
    delta0: f64,
    policy: AlphaPolicy,
    epsilon: f64,
) -> Result<(f64, f64)> {
    check_common(n, v0, delta0, epsilon)?;
    let nf = n as f64;
    let alpha = match policy {
        AlphaPolicy::Fixed(a) => a,
        AlphaPolicy::ConfidenceTuned => {
            check_positive("v0", v0)?;
            (2.0 * (1.0 / epsilon).ln() / (nf * v0)).sqrt()
        }
        AlphaPolicy::ConfidenceFree => {
            check_positive("v0", v0)?;
            (2.0 / (nf * v0)).sqrt()
        }
    };
    Ok((alpha, one_shot_width(n, v0, delta0, alpha, epsilon)?))
}

/// Width when α absorbs the location uncertainty:
/// `α = √(2·log(ε⁻¹)/(n(v₀ + δ₀²)))`, half-width `√(2(v₀ + δ₀²)·log(ε⁻¹)/n)`.
pub fn tuned_width(n: usize, v0: f64, delta0: f64, epsilon: f64) -> Result<(f64, f64)> {
    check_common(n, v0, delta0, epsilon)?;
    let s = v0 + delta0 * delta0;
    if !(s > 0.0) {
        return invalid("v0 + delta0^2 must be > 0");
    }
    let nf = n as f64;
    let l = (1.0 / epsilon).ln();
    Ok(((2.0 * l / (nf * s)).sqrt(), (2.0 * s * l / nf).sqrt()))
}

/// Clipped counterpart of [`tuned_width`]: both the half-width and `1/α` are
/// inflated by `√a`.
pub fn clipped_width(n: usize, v0: f64, delta0: f64, epsilon: f64) -> Result<(f64, f64)> {
    let (alpha, width) = tuned_width(n, v0, delta0, epsilon)?;
    let sa = clipped_constants().a.sqrt();
    Ok((alpha / sa, width * sa))
}

/// One-shot estimate around `theta0` with the tuned α for `kind`.
pub fn estimate_one_shot(
    sample: &Sample,
    theta0: f64,
    priors: PriorBounds,
    epsilon: f64,
    kind: TruncationKind,
) -> Result<ConfidenceEstimate> {
    let n = sample.len();
    let (alpha, half_width) = match kind {
        TruncationKind::Smooth => tuned_width(n, priors.v0, priors.delta0, epsilon)?,
        TruncationKind::Clipped => clipped_width(n, priors.v0, priors.delta0, epsilon)?,
    };
    let point = truncated_mean(sample, theta0, alpha, kind)?;
    Ok(ConfidenceEstimate {
        point,
        half_width,
        miss_probability: 2.0 * epsilon,
        feasible: true,
        metadata: EstimateMetadata {
            method: format!("one-shot-{}", kind.name()),
            alpha: Some(alpha),
            ..Default::default()
        },
    })
}
