//! Iterated jitter-and-truncate estimators under a variance prior.
//!
//! A schedule fixes, before any data is seen, the per-step budgets `ε_i`,
//! jitter fractions `x_i`, penalties `γ_i`, widths `δ_i` and scales `α_i`.
//! Running it on a sample walks
//! `θ̃_i = θ̂_{α_i}(θ̃_{i−1} + x_i·δ_{i−1}·U_i)` from a first-step center that
//! is either a truncated mean around a known `θ₀` or the empirical mean.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_positive, check_probability, invalid, Result};
use crate::jitter::JitterSource;
use crate::special::{clipped_constants, TruncationKind};
use crate::truncated::{truncated_mean, ConfidenceEstimate, EstimateMetadata, Sample};

/// How the penalty `γ_i` of step `i` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaRule {
    /// `γ_i = log(1 + 1/x_i)`.
    #[default]
    Stated,
    /// `γ_i = Σ_{j=2}^{i} log(1 + 1/x_j)`.
    Cumulative,
}

/// How a total one-sided budget `ε` is spread over `k` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsSplit {
    /// `ε_i = ε/10` for `i < k` and `ε_k = ε − (k−1)ε/10`; needs `k ≤ 10`.
    #[default]
    Tenths,
    /// `ε_i = ε/k`.
    Uniform,
}

/// How the first center is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Start {
    /// A truncated mean around a given `θ₀` with `|θ₀ − m| ≤ δ₀`.
    Known { delta0: f64 },
    /// The empirical mean, with its Chebyshev width.
    EmpiricalMean,
}

/// Number of steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepCount {
    Fixed(usize),
    /// The `k ≤ max` with the smallest final width.
    Auto {
        max: usize,
    },
}

/// Everything needed to build a schedule from `(n, v₀, ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IteratedConfig {
    pub start: Start,
    pub steps: StepCount,
    /// Jitter fraction used for every step `i ≥ 2`.
    pub x: f64,
    pub split: EpsSplit,
    pub gamma: GammaRule,
    pub kind: TruncationKind,
}

/// Default number of steps.
pub const DEFAULT_STEPS: usize = 10;

impl Default for IteratedConfig {
    fn default() -> Self {
        IteratedConfig {
            start: Start::EmpiricalMean,
            steps: StepCount::Fixed(DEFAULT_STEPS),
            x: 0.1,
            split: EpsSplit::Tenths,
            gamma: GammaRule::Stated,
            kind: TruncationKind::Smooth,
        }
    }
}

impl IteratedConfig {
    pub fn known(delta0: f64) -> Self {
        IteratedConfig {
            start: Start::Known { delta0 },
            ..Default::default()
        }
    }

    /// Empirical start with automatic step count and uniform budgets.
    pub fn auto() -> Self {
        IteratedConfig {
            steps: StepCount::Auto { max: 40 },
            split: EpsSplit::Uniform,
            ..Default::default()
        }
    }
}

/// The deterministic constants of an iterated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSchedule {
    pub n: usize,
    pub v0: f64,
    pub start: Start,
    pub gamma_rule: GammaRule,
    pub kind: TruncationKind,
    /// `ε_1..ε_k`.
    pub eps: Vec<f64>,
    /// `x_2..x_k`.
    pub x: Vec<f64>,
    /// `γ_1..γ_k`, with `γ_1 = 0`.
    pub gamma: Vec<f64>,
    /// `δ_1..δ_k`.
    pub delta: Vec<f64>,
    /// `α_1..α_k`; `None` for an empirical-mean first step.
    pub alpha: Vec<Option<f64>>,
}

/// Splits a total budget over `k` steps.
pub fn split_budget(eps: f64, k: usize, split: EpsSplit) -> Result<Vec<f64>> {
    check_probability("eps", eps)?;
    if k == 0 {
        return invalid("the number of steps must be >= 1");
    }
    match split {
        EpsSplit::Uniform => Ok(vec![eps / k as f64; k]),
        EpsSplit::Tenths => {
            if k > 10 {
                return invalid(format!(
                    "the tenths split supports at most 10 steps, got {k}"
                ));
            }
            let mut out = vec![eps / 10.0; k];
            out[k - 1] = eps - (k - 1) as f64 * eps / 10.0;
            Ok(out)
        }
    }
}

fn validate(n: usize, v0: f64, eps: &[f64], x: &[f64]) -> Result<()> {
    if n == 0 {
        return invalid("n must be >= 1");
    }
    check_positive("v0", v0)?;
    if eps.is_empty() {
        return invalid("at least one step budget is required");
    }
    if x.len() + 1 != eps.len() {
        return invalid(format!(
            "expected {} jitter fractions for {} steps, got {}",
            eps.len() - 1,
            eps.len(),
            x.len()
        ));
    }
    for &e in eps {
        check_probability("eps_i", e)?;
    }
    for &xi in x {
        check_positive("x_i", xi)?;
    }
    Ok(())
}

fn build(
    n: usize,
    v0: f64,
    start: Start,
    eps: &[f64],
    x: &[f64],
    rule: GammaRule,
    kind: TruncationKind,
) -> Result<IterationSchedule> {
    validate(n, v0, eps, x)?;
    let nf = n as f64;
    // The clipped influence function inflates every variance term by `a`.
    let a = match kind {
        TruncationKind::Smooth => 1.0,
        TruncationKind::Clipped => clipped_constants().a,
    };
    let k = eps.len();
    let mut gamma = vec![0.0; k];
    let mut delta = vec![0.0; k];
    let mut alpha = vec![None; k];
    match start {
        Start::Known { delta0 } => {
            if !(delta0 >= 0.0) || !delta0.is_finite() {
                return invalid(format!("delta0 must be finite and >= 0, got {delta0:?}"));
            }
            let s = v0 + delta0 * delta0;
            let l = (1.0 / eps[0]).ln();
            delta[0] = (2.0 * a * s * l / nf).sqrt();
            alpha[0] = Some((2.0 * l / (a * nf * s)).sqrt());
        }
        Start::EmpiricalMean => {
            delta[0] = (v0 / (2.0 * nf * eps[0])).sqrt();
        }
    }
    let mut acc = 0.0;
    for i in 1..k {
        let xi = x[i - 1];
        let step_gamma = (1.0 + 1.0 / xi).ln();
        acc += step_gamma;
        gamma[i] = match rule {
            GammaRule::Stated => step_gamma,
            GammaRule::Cumulative => acc,
        };
        let s = v0 + (1.0 + xi) * (1.0 + xi) * delta[i - 1] * delta[i - 1];
        let l = (1.0 / eps[i]).ln() + gamma[i];
        delta[i] = (2.0 * a * s * l / nf).sqrt();
        alpha[i] = Some((2.0 * l / (a * nf * s)).sqrt());
    }
    Ok(IterationSchedule {
        n,
        v0,
        start,
        gamma_rule: rule,
        kind,
        eps: eps.to_vec(),
        x: x.to_vec(),
        gamma,
        delta,
        alpha,
    })
}

/// Schedule started from a truncated mean around `θ₀` with `|θ₀ − m| ≤ δ₀`.
pub fn schedule_known_delta0(
    n: usize,
    v0: f64,
    delta0: f64,
    eps: &[f64],
    x: &[f64],
    rule: GammaRule,
) -> Result<IterationSchedule> {
    build(
        n,
        v0,
        Start::Known { delta0 },
        eps,
        x,
        rule,
        TruncationKind::Smooth,
    )
}

/// Schedule started from the empirical mean, `δ₁ = √(v₀/(2nε₁))`.
pub fn schedule_empirical_start(
    n: usize,
    v0: f64,
    eps: &[f64],
    x: &[f64],
    rule: GammaRule,
) -> Result<IterationSchedule> {
    build(
        n,
        v0,
        Start::EmpiricalMean,
        eps,
        x,
        rule,
        TruncationKind::Smooth,
    )
}

/// Schedule with `k` steps for a total one-sided budget `eps`.
pub fn schedule_with_steps(
    n: usize,
    v0: f64,
    eps: f64,
    k: usize,
    config: &IteratedConfig,
) -> Result<IterationSchedule> {
    let budgets = split_budget(eps, k, config.split)?;
    let x = vec![config.x; k - 1];
    build(n, v0, config.start, &budgets, &x, config.gamma, config.kind)
}

/// Schedule for a total one-sided budget `eps`, resolving the step count.
pub fn build_schedule(
    n: usize,
    v0: f64,
    eps: f64,
    config: &IteratedConfig,
) -> Result<IterationSchedule> {
    match config.steps {
        StepCount::Fixed(k) => schedule_with_steps(n, v0, eps, k, config),
        StepCount::Auto { max } => {
            if max == 0 {
                return invalid("the maximal number of steps must be >= 1");
            }
            let max = match config.split {
                EpsSplit::Tenths => max.min(10),
                EpsSplit::Uniform => max,
            };
            let mut best = schedule_with_steps(n, v0, eps, 1, config)?;
            for k in 2..=max {
                let s = schedule_with_steps(n, v0, eps, k, config)?;
                if s.final_width() < best.final_width() {
                    best = s;
                }
            }
            Ok(best)
        }
    }
}

/// `δ_k` of [`build_schedule`].
pub fn iterated_width(n: usize, v0: f64, eps: f64, config: &IteratedConfig) -> Result<f64> {
    Ok(build_schedule(n, v0, eps, config)?.final_width())
}

impl IterationSchedule {
    pub fn k(&self) -> usize {
        self.eps.len()
    }

    pub fn final_width(&self) -> f64 {
        self.delta[self.delta.len() - 1]
    }

    /// `2·Σε_i`.
    pub fn miss_probability(&self) -> f64 {
        2.0 * self.eps.iter().sum::<f64>()
    }

    /// Hex sha256 over the little-endian bytes of `n` and every constant.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update(self.v0.to_le_bytes());
        for v in self
            .eps
            .iter()
            .chain(&self.x)
            .chain(&self.gamma)
            .chain(&self.delta)
        {
            h.update(v.to_le_bytes());
        }
        for a in &self.alpha {
            h.update(a.unwrap_or(f64::NAN).to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// First center of an iterated run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Center {
    Given(f64),
    EmpiricalMean,
}

/// Runs the schedule on `sample`, returning `θ̃_k ± δ_k` at miss level `2Σε_i`.
///
/// The jitter stream is consumed as `U_2, …, U_k`.
pub fn run_iterated(
    sample: &Sample,
    center: Center,
    schedule: &IterationSchedule,
    jitter: JitterSource,
) -> Result<ConfidenceEstimate> {
    let path = iterated_path(sample, center, schedule, jitter)?;
    Ok(ConfidenceEstimate {
        point: path[path.len() - 1],
        half_width: schedule.final_width(),
        miss_probability: schedule.miss_probability(),
        feasible: true,
        metadata: EstimateMetadata {
            method: match schedule.start {
                Start::Known { .. } => "iterated-known".into(),
                Start::EmpiricalMean => "iterated".into(),
            },
            alpha: schedule.alpha[schedule.k() - 1],
            beta: None,
            schedule_digest: Some(schedule.digest()),
            theoretical_only: false,
        },
    })
}

/// All centers `θ̃_1..θ̃_k` of a run.
pub fn iterated_path(
    sample: &Sample,
    center: Center,
    schedule: &IterationSchedule,
    jitter: JitterSource,
) -> Result<Vec<f64>> {
    if sample.len() != schedule.n {
        return invalid(format!(
            "schedule built for n = {} but the sample has {} observations",
            schedule.n,
            sample.len()
        ));
    }
    let kind = schedule.kind;
    let first = match (schedule.start, center) {
        (Start::Known { .. }, Center::Given(theta0)) => truncated_mean(
            sample,
            theta0,
            schedule.alpha[0].expect("known start has alpha_1"),
            kind,
        )?,
        (Start::EmpiricalMean, Center::EmpiricalMean) => sample.mean(),
        (Start::Known { .. }, Center::EmpiricalMean) => {
            return invalid("a known-location schedule needs a given center");
        }
        (Start::EmpiricalMean, Center::Given(_)) => {
            return invalid("an empirical-start schedule does not take a center");
        }
    };
    let mut stream = jitter.stream();
    let mut path = Vec::with_capacity(schedule.k());
    path.push(first);
    let mut theta = first;
    for i in 1..schedule.k() {
        let u = stream.next_uniform();
        let jittered = theta + schedule.x[i - 1] * schedule.delta[i - 1] * u;
        theta = truncated_mean(
            sample,
            jittered,
            schedule.alpha[i].expect("alpha_i for i >= 2"),
            kind,
        )?;
        path.push(theta);
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::truncated::tuned_width;
    use proptest::prelude::*;

    /// Straight transcription of the recursion, kept apart from `build`.
    fn oracle_known(n: f64, v0: f64, d0: f64, eps: &[f64], x: &[f64]) -> Vec<f64> {
        let mut d = vec![(2.0 * (v0 + d0 * d0) * (1.0 / eps[0]).ln() / n).sqrt()];
        for i in 1..eps.len() {
            let g = (1.0 + 1.0 / x[i - 1]).ln();
            let prev = d[i - 1];
            d.push(
                (2.0 * (v0 + (1.0 + x[i - 1]).powi(2) * prev * prev) * ((1.0 / eps[i]).ln() + g)
                    / n)
                    .sqrt(),
            );
        }
        d
    }

    #[test]
    fn one_step_matches_tuned_width() {
        let s = schedule_known_delta0(1000, 1.0, 2.0, &[0.01], &[], GammaRule::Stated).unwrap();
        let (a, w) = tuned_width(1000, 1.0, 2.0, 0.01).unwrap();
        assert_eq!(s.delta[0], w);
        assert_eq!(s.alpha[0], Some(a));
        let e = schedule_empirical_start(1000, 1.0, &[0.05], &[], GammaRule::Stated).unwrap();
        assert!((e.delta[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn five_steps_match_oracle() {
        let eps = [1e-4; 5];
        let x = [0.1; 4];
        let s = schedule_known_delta0(1000, 1.0, 100.0, &eps, &x, GammaRule::Stated).unwrap();
        let o = oracle_known(1000.0, 1.0, 100.0, &eps, &x);
        for (a, b) in s.delta.iter().zip(&o) {
            assert!((a - b).abs() <= 1e-12 * b);
        }
        assert!(s.final_width() < s.delta[0] / 50.0);
    }

    #[test]
    fn cumulative_penalty_is_larger() {
        let eps = [1e-3; 4];
        let x = [0.5; 3];
        let a = schedule_empirical_start(500, 1.0, &eps, &x, GammaRule::Stated).unwrap();
        let b = schedule_empirical_start(500, 1.0, &eps, &x, GammaRule::Cumulative).unwrap();
        assert_eq!(a.delta[1], b.delta[1]);
        assert!(b.delta[3] > a.delta[3]);
        assert!((b.gamma[3] - 3.0 * 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(schedule_empirical_start(100, 1.0, &[], &[], GammaRule::Stated).is_err());
        assert!(schedule_empirical_start(100, 1.0, &[0.1, 0.1], &[], GammaRule::Stated).is_err());
        assert!(
            schedule_empirical_start(100, 1.0, &[0.1, 1.5], &[0.1], GammaRule::Stated).is_err()
        );
        assert!(
            schedule_empirical_start(100, 1.0, &[0.1, 0.1], &[0.0], GammaRule::Stated).is_err()
        );
        assert!(split_budget(0.1, 11, EpsSplit::Tenths).is_err());
        let s = split_budget(0.1, 4, EpsSplit::Tenths).unwrap();
        assert!((s.iter().sum::<f64>() - 0.1).abs() < 1e-16);
        assert!((s[3] - 0.07).abs() < 1e-16);
    }

    #[test]
    fn constant_sample_without_jitter() {
        let sample = Sample::new(vec![3.25; 200]).unwrap();
        let sched = schedule_with_steps(200, 1.0, 1e-3, 6, &IteratedConfig::known(5.0)).unwrap();
        let est = run_iterated(&sample, Center::Given(3.25), &sched, JitterSource::off()).unwrap();
        assert_eq!(est.point, 3.25);
        let sched = schedule_with_steps(200, 1.0, 1e-3, 6, &IteratedConfig::default()).unwrap();
        let est =
            run_iterated(&sample, Center::EmpiricalMean, &sched, JitterSource::new(9)).unwrap();
        assert!((est.point - 3.25).abs() <= est.half_width);
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let values: Vec<f64> = (0..300)
            .map(|i| ((i * 37 % 101) as f64 - 50.0) / 7.0)
            .collect();
        let sample = Sample::new(values).unwrap();
        let sched = build_schedule(300, 60.0, 1e-4, &IteratedConfig::default()).unwrap();
        let a = run_iterated(&sample, Center::EmpiricalMean, &sched, JitterSource::new(5)).unwrap();
        let b = run_iterated(&sample, Center::EmpiricalMean, &sched, JitterSource::new(5)).unwrap();
        assert_eq!(a.point.to_bits(), b.point.to_bits());
        assert!(run_iterated(&sample, Center::Given(0.0), &sched, JitterSource::new(5)).is_err());
        let short = Sample::new(vec![1.0; 10]).unwrap();
        assert!(run_iterated(&short, Center::EmpiricalMean, &sched, JitterSource::new(5)).is_err());
    }

    #[test]
    fn auto_steps_pick_the_smallest_width() {
        let cfg = IteratedConfig::auto();
        let best = build_schedule(1000, 1.0, 1e-8, &cfg).unwrap();
        for k in 1..=40 {
            let s = schedule_with_steps(1000, 1.0, 1e-8, k, &cfg).unwrap();
            assert!(best.final_width() <= s.final_width());
        }
    }

    proptest! {
        #[test]
        fn larger_budget_never_widens(
            k in 2usize..8,
            i in 0usize..8,
            e in 1e-10f64..1e-2,
            bump in 1.01f64..5.0,
            x in 0.05f64..2.0,
            d0 in 0.0f64..100.0,
            cumulative in any::<bool>(),
        ) {
            let i = i % k;
            let rule = if cumulative { GammaRule::Cumulative } else { GammaRule::Stated };
            let eps = vec![e; k];
            let mut more = eps.clone();
            more[i] = (e * bump).min(0.5);
            let xs = vec![x; k - 1];
            let a = schedule_known_delta0(700, 2.0, d0, &eps, &xs, rule).unwrap();
            let b = schedule_known_delta0(700, 2.0, d0, &more, &xs, rule).unwrap();
            for j in i..k {
                prop_assert!(b.delta[j] <= a.delta[j]);
            }
            let c = schedule_known_delta0(700, 2.0, d0, &eps, &xs, rule).unwrap();
            prop_assert_eq!(a, c);
        }

        #[test]
        fn jitter_containment(
            m in -10.0f64..10.0,
            off in -1.0f64..1.0,
            u in -1.0f64..1.0,
            delta in 1e-3f64..10.0,
            x in 0.01f64..3.0,
        ) {
            let theta = m + off * delta;
            let jittered = theta + x * delta * u;
            prop_assert!((jittered - m).abs() <= (1.0 + x) * delta * (1.0 + 1e-12));
        }

        #[test]
        fn translation_equivariance(
            ys in prop::collection::vec(-20.0f64..20.0, 30),
            t in -100.0f64..100.0,
            seed in any::<u64>(),
        ) {
            let sample = Sample::new(ys).unwrap();
            let sched = schedule_with_steps(30, 50.0, 1e-3, 5, &IteratedConfig::known(3.0)).unwrap();
            let a = run_iterated(&sample, Center::Given(0.5), &sched, JitterSource::new(seed)).unwrap();
            let b = run_iterated(&sample.shifted(t), Center::Given(0.5 + t), &sched, JitterSource::new(seed)).unwrap();
            prop_assert!((b.point - a.point - t).abs() <= 1e-10 * (1.0 + t.abs()));
            prop_assert_eq!(a.half_width, b.half_width);
        }
    }
}
