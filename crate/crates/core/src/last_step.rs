//! Root-defined last step refining an iterated first stage.
//!
//! With `M_α(θ) = (1/(nα))·Σ log{1 + α(Y_i − θ) + α²(Y_i − θ)²/2 + 1/(2βn)}`
//! the estimate is the first point `θ ≥ θ̃₁ − δ₁` where `M_α(θ) ≤ 0`.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_probability, invalid, Error, Result};
use crate::iterated::{
    build_schedule, run_iterated, Center, IteratedConfig, IterationSchedule, StepCount,
};
use crate::jitter::JitterSource;
use crate::special::phi;
use crate::truncated::{ConfidenceEstimate, EstimateMetadata, Sample};

/// `M_α(θ₀)`.
pub fn m_alpha(sample: &Sample, theta0: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_positive("alpha", alpha)?;
    check_positive("beta", beta)?;
    let n = sample.len() as f64;
    let eta = 1.0 / (2.0 * beta * n);
    let mut sum = 0.0;
    for &y in sample.values() {
        let z = alpha * (y - theta0);
        // 1 + z + z²/2 = ((1 + z)² + 1)/2 ≥ 1/2.
        let arg = 0.5 * ((1.0 + z) * (1.0 + z) + 1.0) + eta;
        if !(arg > 0.0) {
            return Err(Error::Numerical(format!(
                "nonpositive log argument {arg:?} in M_alpha"
            )));
        }
        sum += arg.ln();
    }
    Ok(sum / (n * alpha))
}

/// Result of the first stage: an estimate `θ̃₁` with `|θ̃₁ − m| ≤ δ₁` except
/// with probability `2ε₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstStage {
    pub theta1: f64,
    pub delta1: f64,
    pub eps1: f64,
}

/// Choice of `α` for the last step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaChoice {
    /// `α = √((β⁻¹ + 2·log(ε₂⁻¹))/(n·v₀))`.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LastStepConfig {
    pub beta: f64,
    pub alpha: AlphaChoice,
    pub eps2: f64,
    pub v0: f64,
    pub first_stage: FirstStage,
}

impl LastStepConfig {
    pub fn resolved_alpha(&self, n: usize) -> Result<f64> {
        match self.alpha {
            AlphaChoice::Fixed(a) => {
                check_positive("alpha", a)?;
                Ok(a)
            }
            AlphaChoice::Auto => {
                check_positive("v0", self.v0)?;
                check_positive("beta", self.beta)?;
                check_probability("eps2", self.eps2)?;
                Ok(auto_alpha(n, self.v0, self.beta, self.eps2))
            }
        }
    }
}

fn auto_alpha(n: usize, v0: f64, beta: f64, eps2: f64) -> f64 {
    ((1.0 / beta + 2.0 * (1.0 / eps2).ln()) / (n as f64 * v0)).sqrt()
}

/// Smallest `θ ≥ θ̃₁ − δ₁` with `M_α(θ) ≤ 0`.
///
/// Scans a grid of step `δ₁/1024` to the right of `θ̃₁ − δ₁`, doubling the
/// searched reach `B` from `δ₁` up to `64·δ₁`, then bisects the first sign
/// change to `max(1e−12, 1e−12·|θ̃₁|)`.
pub fn solve_root(sample: &Sample, config: &LastStepConfig) -> Result<f64> {
    let FirstStage { theta1, delta1, .. } = config.first_stage;
    check_positive("delta1", delta1)?;
    if !theta1.is_finite() {
        return invalid(format!("theta1 must be finite, got {theta1:?}"));
    }
    let alpha = config.resolved_alpha(sample.len())?;
    let beta = config.beta;
    let m = |t: f64| m_alpha(sample, t, alpha, beta);

    let left = theta1 - delta1;
    if m(left)? <= 0.0 {
        return Ok(left);
    }
    let h = delta1 / 1024.0;
    let tol = 1e-12f64.max(1e-12 * theta1.abs());
    let mut j: u64 = 0;
    let mut prev = left;
    let mut reach = delta1;
    while reach <= 64.0 * delta1 {
        let right = theta1 + reach;
        loop {
            let t = left + (j + 1) as f64 * h;
            if t > right {
                break;
            }
            j += 1;
            if m(t)? <= 0.0 {
                let (mut lo, mut hi) = (prev, t);
                while hi - lo > tol {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if m(mid)? <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Ok(hi);
            }
            prev = t;
        }
        reach *= 2.0;
    }
    Err(Error::NoRoot(format!(
        "M_alpha stays positive on [{left}, {}] (alpha = {alpha}, beta = {beta})",
        theta1 + 64.0 * delta1
    )))
}

/// Width of the last step with the automatic α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LastStepWidth {
    pub alpha: f64,
    /// `+∞` whenever the feasibility condition fails.
    pub half_width: f64,
    /// The width formula regardless of feasibility.
    pub raw_half_width: f64,
    pub feasible: bool,
}

/// Automatic-α width: with `γ = β⁻¹ + 2·log(ε₂⁻¹)`,
/// half-width `(2/(1+β))·√(nv₀/γ)·φ((1+β)γ/(2n))`, feasible when
/// `2δ₁ ≤ √(γv₀/n) / φ((1+β)γ/(2n))`.
pub fn last_step_width(
    n: usize,
    v0: f64,
    beta: f64,
    eps2: f64,
    delta1: f64,
) -> Result<LastStepWidth> {
    if n == 0 {
        return invalid("n must be >= 1");
    }
    check_positive("v0", v0)?;
    check_positive("beta", beta)?;
    check_probability("eps2", eps2)?;
    if !(delta1 >= 0.0) {
        return invalid(format!("delta1 must be >= 0, got {delta1:?}"));
    }
    let nf = n as f64;
    let g = 1.0 / beta + 2.0 * (1.0 / eps2).ln();
    let p = phi((1.0 + beta) * g / (2.0 * nf));
    let raw = 2.0 / (1.0 + beta) * (nf * v0 / g).sqrt() * p;
    let feasible = p.is_finite() && 2.0 * delta1 * p <= (g * v0 / nf).sqrt();
    Ok(LastStepWidth {
        alpha: auto_alpha(n, v0, beta, eps2),
        half_width: if feasible { raw } else { f64::INFINITY },
        raw_half_width: raw,
        feasible,
    })
}

/// Width for an arbitrary α: `(2/((1+β)α))·φ((1+β)[nα²v₀ + γ]/(4n))`, feasible
/// when `4nαδ₁ ≤ [nα²v₀ + γ] / φ((1+β)[nα²v₀ + γ]/(4n))`.
pub fn last_step_width_general(
    n: usize,
    v0: f64,
    alpha: f64,
    beta: f64,
    eps2: f64,
    delta1: f64,
) -> Result<LastStepWidth> {
    if n == 0 {
        return invalid("n must be >= 1");
    }
    check_positive("v0", v0)?;
    check_positive("alpha", alpha)?;
    check_positive("beta", beta)?;
    check_probability("eps2", eps2)?;
    let nf = n as f64;
    let s = nf * alpha * alpha * v0 + 1.0 / beta + 2.0 * (1.0 / eps2).ln();
    let p = phi((1.0 + beta) * s / (4.0 * nf));
    let raw = 2.0 / ((1.0 + beta) * alpha) * p;
    let feasible = p.is_finite() && 4.0 * nf * alpha * delta1 * p <= s;
    Ok(LastStepWidth {
        alpha,
        half_width: if feasible { raw } else { f64::INFINITY },
        raw_half_width: raw,
        feasible,
    })
}

/// Smallest `ε₂` granted feasible by the closed-form sufficient condition for
/// the automatic α: `exp(1/(2β) − nv₀/(2(1+β)²δ₁² + 8(1+β)v₀))`.
pub fn sufficient_eps2(n: usize, v0: f64, beta: f64, delta1: f64) -> f64 {
    let nf = n as f64;
    (0.5 / beta
        - nf * v0 / (2.0 * (1.0 + beta).powi(2) * delta1 * delta1 + 8.0 * (1.0 + beta) * v0))
        .exp()
}

/// Closed-form sufficient condition for an arbitrary α:
/// `exp{−n[1/(1+β) − αδ₁ − (nα²v₀ + β⁻¹)/(2n)]}`.
///
/// That display bounds `φ(x)` by `x/(1 − 2x)`, which only holds for
/// `x ≤ 1/4`, so the threshold is also raised to keep the argument of `φ`
/// there: `ε₂ ≥ exp{−(n/(1+β) − nα²v₀ − β⁻¹)/2}`.
pub fn sufficient_eps2_general(n: usize, v0: f64, alpha: f64, beta: f64, delta1: f64) -> f64 {
    let nf = n as f64;
    let quad = nf * alpha * alpha * v0 + 1.0 / beta;
    let display = (-nf * (1.0 / (1.0 + beta) - alpha * delta1 - quad / (2.0 * nf))).exp();
    let domain = (-(nf / (1.0 + beta) - quad) / 2.0).exp();
    display.max(domain)
}

/// The β grid searched by [`default_beta`]: 64 log-spaced points on `[0.01, 100]`.
pub fn beta_grid() -> Vec<f64> {
    (0..64)
        .map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / 63.0))
        .collect()
}

/// The feasible width-minimizing β on [`beta_grid`], if any.
pub fn default_beta(
    n: usize,
    v0: f64,
    eps2: f64,
    delta1: f64,
) -> Result<Option<(f64, LastStepWidth)>> {
    let mut best: Option<(f64, LastStepWidth)> = None;
    for beta in beta_grid() {
        let w = last_step_width(n, v0, beta, eps2, delta1)?;
        if w.feasible && best.is_none_or(|(_, b)| w.half_width < b.half_width) {
            best = Some((beta, w));
        }
    }
    Ok(best)
}

/// Fallback β reported when no grid point is feasible.
pub const FALLBACK_BETA: f64 = 1.0;

/// Split of a total one-sided budget between the iterated first stage and
/// the last step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LastStepPlan {
    /// First-stage iterated configuration; its final step is replaced by the
    /// last step.
    pub iterated: IteratedConfig,
    /// Overrides the last-step budget; otherwise the budget of the replaced
    /// final step is used.
    pub eps2: Option<f64>,
    /// Overrides the β search.
    pub beta: Option<f64>,
}

/// Deterministic constants of a planned last step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LastStepDesign {
    pub delta1: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub beta: f64,
    pub width: LastStepWidth,
    pub first_stage_steps: usize,
}

/// First-stage schedule (the iterated schedule for `eps` without its final
/// step) and the budget of the dropped step.
///
/// A one-step plan keeps its single step and spends half the budget on it.
fn first_stage_schedule(
    n: usize,
    v0: f64,
    eps: f64,
    plan: &LastStepPlan,
) -> Result<(IterationSchedule, f64)> {
    let full = build_schedule(n, v0, eps, &plan.iterated)?;
    let k = full.k();
    if k == 1 {
        let mut cfg = plan.iterated;
        cfg.steps = StepCount::Fixed(1);
        return Ok((build_schedule(n, v0, eps / 2.0, &cfg)?, eps / 2.0));
    }
    let eps2 = full.eps[k - 1];
    let mut first = full;
    first.eps.truncate(k - 1);
    first.x.truncate(k - 2);
    first.gamma.truncate(k - 1);
    first.delta.truncate(k - 1);
    first.alpha.truncate(k - 1);
    Ok((first, eps2))
}

/// Resolves the first stage and the last-step constants.
pub fn design_last_step(
    n: usize,
    v0: f64,
    eps: f64,
    plan: &LastStepPlan,
) -> Result<LastStepDesign> {
    Ok(plan_parts(n, v0, eps, plan)?.1)
}

fn plan_parts(
    n: usize,
    v0: f64,
    eps: f64,
    plan: &LastStepPlan,
) -> Result<(IterationSchedule, LastStepDesign)> {
    let (first, dropped) = first_stage_schedule(n, v0, eps, plan)?;
    let eps2 = plan.eps2.unwrap_or(dropped);
    check_probability("eps2", eps2)?;
    let delta1 = first.final_width();
    let (beta, width) = match plan.beta {
        Some(b) => (b, last_step_width(n, v0, b, eps2, delta1)?),
        None => match default_beta(n, v0, eps2, delta1)? {
            Some(found) => found,
            None => (
                FALLBACK_BETA,
                last_step_width(n, v0, FALLBACK_BETA, eps2, delta1)?,
            ),
        },
    };
    let design = LastStepDesign {
        delta1,
        eps1: first.eps.iter().sum(),
        eps2,
        beta,
        width,
        first_stage_steps: first.k(),
    };
    Ok((first, design))
}

/// Half-width curve value of the planned last step (`+∞` when infeasible).
pub fn last_step_curve(n: usize, v0: f64, eps: f64, plan: &LastStepPlan) -> Result<f64> {
    Ok(design_last_step(n, v0, eps, plan)?.width.half_width)
}

/// Full estimate: iterated first stage, then the root of `M_α`.
///
/// An infeasible configuration is an [`Error::Infeasible`]; the point is not
/// computed in that case.
pub fn estimate_last_step(
    sample: &Sample,
    center: Center,
    v0: f64,
    eps: f64,
    plan: &LastStepPlan,
    jitter: JitterSource,
) -> Result<ConfidenceEstimate> {
    let n = sample.len();
    let (first, design) = plan_parts(n, v0, eps, plan)?;
    if !design.width.feasible {
        return Err(Error::Infeasible(format!(
            "last-step feasibility condition fails: 2*delta1 = {:?} exceeds the allowed distance at eps2 = {:?} (beta = {:?}); \
             this is the confidence level after which the last step breaks down",
            2.0 * design.delta1,
            design.eps2,
            design.beta
        )));
    }
    let stage = run_iterated(sample, center, &first, jitter)?;
    let config = LastStepConfig {
        beta: design.beta,
        alpha: AlphaChoice::Auto,
        eps2: design.eps2,
        v0,
        first_stage: FirstStage {
            theta1: stage.point,
            delta1: design.delta1,
            eps1: design.eps1,
        },
    };
    let point = solve_root(sample, &config)?;
    Ok(ConfidenceEstimate {
        point,
        half_width: design.width.half_width,
        miss_probability: 2.0 * (design.eps1 + design.eps2),
        feasible: true,
        metadata: EstimateMetadata {
            method: "last-step".into(),
            alpha: Some(design.width.alpha),
            beta: Some(design.beta),
            schedule_digest: stage.metadata.schedule_digest,
            theoretical_only: false,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::t_envelopes;
    use proptest::prelude::*;

    fn sample(v: &[f64]) -> Sample {
        Sample::new(v.to_vec()).unwrap()
    }

    #[test]
    fn m_alpha_hand_values() {
        let s = sample(&[0.0, 0.0, 3.0]);
        let v = m_alpha(&s, 0.0, 1.0, 1.0).unwrap();
        let expected = (2.0 * (7.0f64 / 6.0).ln() + (8.5 + 1.0 / 6.0f64).ln()) / 3.0;
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.822595).abs() < 1e-6);

        let c = sample(&[1.5; 8]);
        let v = m_alpha(&c, 1.5, 0.4, 2.0).unwrap();
        assert!((v - (1.0 + 1.0 / 32.0f64).ln() / 0.4).abs() < 1e-15);
    }

    #[test]
    fn large_beta_tends_to_upper_envelope_sum() {
        let s = sample(&[-2.0, 0.3, 1.1, 4.0]);
        let alpha = 0.7;
        let env: f64 = s
            .values()
            .iter()
            .map(|y| t_envelopes(alpha * (y - 0.2)).1)
            .sum::<f64>()
            / (4.0 * alpha);
        let v = m_alpha(&s, 0.2, alpha, 1e12).unwrap();
        assert!((v - env).abs() < 1e-10);
    }

    #[test]
    fn left_endpoint_root() {
        // α(y − θ) = −1 at the left end, where M_α is at its minimum.
        let s = sample(&[-3.0, -3.0, -3.0]);
        let cfg = LastStepConfig {
            beta: 1.0,
            alpha: AlphaChoice::Fixed(0.5),
            eps2: 0.01,
            v0: 1.0,
            first_stage: FirstStage {
                theta1: 0.0,
                delta1: 1.0,
                eps1: 0.01,
            },
        };
        assert_eq!(solve_root(&s, &cfg).unwrap(), -1.0);
    }

    #[test]
    fn constant_sample_closed_form() {
        let c = 2.0;
        let n = 50;
        let s = sample(&vec![c; n]);
        for &(alpha, beta) in &[(0.5, 1.0), (1.3, 0.2), (0.05, 10.0)] {
            let cfg = LastStepConfig {
                beta,
                alpha: AlphaChoice::Fixed(alpha),
                eps2: 0.01,
                v0: 1.0,
                first_stage: FirstStage {
                    theta1: c,
                    delta1: 0.5,
                    eps1: 0.01,
                },
            };
            let eta = 1.0 / (2.0 * beta * n as f64);
            let oracle = c + (1.0 - (1.0 - 2.0 * eta).sqrt()) / alpha;
            let root = solve_root(&s, &cfg).unwrap();
            assert!((root - oracle).abs() < 1e-11, "{root} vs {oracle}");
            assert!(root > c);
        }
    }

    #[test]
    fn no_root_is_reported() {
        // M_alpha > 0 for every θ when η > 1/2.
        let s = sample(&[0.0]);
        let cfg = LastStepConfig {
            beta: 0.5,
            alpha: AlphaChoice::Fixed(1.0),
            eps2: 0.1,
            v0: 1.0,
            first_stage: FirstStage {
                theta1: 0.0,
                delta1: 1.0,
                eps1: 0.1,
            },
        };
        assert!(matches!(solve_root(&s, &cfg), Err(Error::NoRoot(_))));
    }

    #[test]
    fn infinite_width_past_phi_domain() {
        let w = last_step_width(100, 1.0, 1.0, 1e-30, 0.1).unwrap();
        assert!(!w.feasible);
        assert_eq!(w.half_width, f64::INFINITY);
        assert_eq!(w.raw_half_width, f64::INFINITY);
    }

    #[test]
    fn sufficient_condition_implies_feasible() {
        for &n in &[300usize, 1000, 5000] {
            for &beta in &[0.05, 0.3, 1.0, 4.0] {
                for &delta1 in &[0.05, 0.2, 0.5] {
                    let t = sufficient_eps2(n, 1.0, beta, delta1);
                    for j in 0..40 {
                        let e = 10f64.powf(-0.5 * j as f64);
                        if e < 1.0 && e >= t {
                            assert!(last_step_width(n, 1.0, beta, e, delta1).unwrap().feasible);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn general_alpha_reduces_to_auto() {
        let (n, v0, beta, e2, d1) = (1000, 1.0, 0.7, 1e-5, 0.05);
        let auto = last_step_width(n, v0, beta, e2, d1).unwrap();
        let gen = last_step_width_general(n, v0, auto.alpha, beta, e2, d1).unwrap();
        assert!((auto.raw_half_width - gen.raw_half_width).abs() < 1e-14);
        assert_eq!(auto.feasible, gen.feasible);
        for alpha in [0.02, 0.1, 0.3] {
            let t = sufficient_eps2_general(n, v0, alpha, beta, d1);
            assert!(t < 1.0);
            for e in [t * 1.0001, t.sqrt(), (t.ln() / 4.0).exp()] {
                assert!(
                    last_step_width_general(n, v0, alpha, beta, e, d1)
                        .unwrap()
                        .feasible,
                    "alpha {alpha} eps2 {e}"
                );
            }
        }
    }

    #[test]
    fn width_monotone_on_feasible_region() {
        let mut prev = 0.0;
        for j in 1..60 {
            let e = 10f64.powf(-0.25 * j as f64);
            let w = last_step_width(1000, 1.0, 1.0, e, 0.0).unwrap();
            if w.feasible {
                assert!(w.half_width >= prev);
                prev = w.half_width;
            }
        }
        let a = last_step_width(1000, 1.0, 1.0, 1e-4, 0.0).unwrap();
        let b = last_step_width(2000, 1.0, 1.0, 1e-4, 0.0).unwrap();
        assert!(b.half_width < a.half_width);
    }

    #[test]
    fn planned_estimate_runs() {
        let values: Vec<f64> = (0..1000)
            .map(|i| ((i * 7919 % 1000) as f64 / 1000.0 - 0.5) * 3.4)
            .collect();
        let s = Sample::new(values).unwrap();
        let est = estimate_last_step(
            &s,
            Center::EmpiricalMean,
            1.0,
            1e-3,
            &LastStepPlan::default(),
            JitterSource::new(3),
        )
        .unwrap();
        assert!(est.covers(s.mean()));
        assert!((est.miss_probability - 2e-3).abs() < 1e-15);
        let bad = estimate_last_step(
            &Sample::new(vec![0.0; 300]).unwrap(),
            Center::EmpiricalMean,
            1.0,
            1e-13,
            &LastStepPlan::default(),
            JitterSource::new(3),
        );
        assert!(matches!(bad, Err(Error::Infeasible(_))));
    }

    proptest! {
        #[test]
        fn m_alpha_decreases_in_beta(
            ys in prop::collection::vec(-10.0f64..10.0, 1..30),
            theta in -5.0f64..5.0,
            alpha in 0.01f64..3.0,
            b1 in 0.01f64..10.0,
            factor in 1.01f64..100.0,
        ) {
            let s = Sample::new(ys).unwrap();
            let a = m_alpha(&s, theta, alpha, b1).unwrap();
            let b = m_alpha(&s, theta, alpha, b1 * factor).unwrap();
            prop_assert!(b < a);
        }

        #[test]
        fn root_is_a_first_crossing(
            ys in prop::collection::vec(-3.0f64..3.0, 20..60),
            shift in -0.5f64..0.5,
            beta in 0.1f64..10.0,
        ) {
            let s = Sample::new(ys).unwrap();
            let cfg = LastStepConfig {
                beta,
                alpha: AlphaChoice::Auto,
                eps2: 0.01,
                v0: 3.0,
                first_stage: FirstStage { theta1: s.mean() + shift, delta1: 1.0, eps1: 0.01 },
            };
            let alpha = cfg.resolved_alpha(s.len()).unwrap();
            match solve_root(&s, &cfg) {
                Ok(root) => {
                    let left = cfg.first_stage.theta1 - 1.0;
                    let tol = 1e-12f64.max(1e-12 * cfg.first_stage.theta1.abs());
                    prop_assert!(m_alpha(&s, root, alpha, beta).unwrap() <= 1e-12);
                    if root > left {
                        prop_assert!(m_alpha(&s, root - 8.0 * tol, alpha, beta).unwrap() > -1e-12);
                    }
                }
                Err(e) => prop_assert!(matches!(e, Error::NoRoot(_))),
            }
        }
    }
}
