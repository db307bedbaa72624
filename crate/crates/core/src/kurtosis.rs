//! Mean and variance estimation under a uniform kurtosis bound `c`.
//!
//! The uniform kurtosis is `c = sup_θ E[(Y−θ)⁴] / E[(Y−θ)²]²`. The scheme
//! alternates between a variance-proxy step, which inverts the increasing map
//! `Q_{θ,δ}(α) = (1/n)·Σ log{1 + z_i + z_i²/2}` with `z_i = α(Y_i − θ)² − δ`,
//! and a truncated-mean step whose scale is set from that proxy.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_probability, invalid, Error, Result};
use crate::jitter::JitterSource;
use crate::special::{h_ancillary, TruncationKind};
use crate::truncated::{truncated_mean, ConfidenceEstimate, EstimateMetadata, Sample};

fn check_kappa(function: &'static str, kappa: f64) -> Result<()> {
    if kappa >= 1.0 && kappa.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            function,
            detail: format!("kurtosis must be finite and >= 1, got {kappa:?}"),
        })
    }
}

/// Range of the uniform kurtosis `c` given the classical kurtosis `κ`:
/// `(κ, (√κ + 2√(κ+3))²/9)`. The upper end never exceeds `κ + 2`.
pub fn kappa_c_bounds(kappa: f64) -> Result<(f64, f64)> {
    check_kappa("kappa_c_bounds", kappa)?;
    let s = kappa.sqrt() + 2.0 * (kappa + 3.0).sqrt();
    Ok((kappa, s * s / 9.0))
}

/// Uniform kurtosis of a law with zero skewness and kurtosis `κ`.
pub fn c_symmetric(kappa: f64) -> Result<f64> {
    check_kappa("c_symmetric", kappa)?;
    Ok(if kappa <= 3.0 {
        kappa + (3.0 - kappa) * (3.0 - kappa) / (5.0 - kappa)
    } else {
        kappa
    })
}

/// `(κ, E[Y⁴]/E[Y²]²)` for a Bernoulli(p) variable; the second value is
/// `1/p` and bounds `c` from below.
pub fn bernoulli_kurtosis(p: f64) -> Result<(f64, f64)> {
    check_probability("p", p)?;
    Ok((1.0 / p - 2.0 + p / (1.0 - p), 1.0 / p))
}

/// `Q_{θ,δ}(α)`.
pub fn q_eval(sample: &Sample, theta: f64, delta: f64, alpha: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must lie in (0, 1), got {delta:?}"));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return invalid(format!("alpha must be finite and >= 0, got {alpha:?}"));
    }
    let mut sum = 0.0;
    for &y in sample.values() {
        let r = y - theta;
        let z = alpha * r * r - delta;
        let arg = 0.5 * ((1.0 + z) * (1.0 + z) + 1.0);
        if !(arg > 0.0) {
            return Err(Error::Numerical(format!(
                "nonpositive log argument {arg:?} in Q"
            )));
        }
        sum += arg.ln();
    }
    Ok(sum / sample.len() as f64)
}

/// The `α ≥ 0` with `Q_{θ,δ}(α) = target`.
///
/// Doubles `α` from `1/mean((Y−θ)²)` until `Q ≥ target`, then bisects to
/// floating-point resolution.
pub fn q_inverse(sample: &Sample, theta: f64, delta: f64, target: f64) -> Result<f64> {
    let q0 = q_eval(sample, theta, delta, 0.0)?;
    if !(target > q0) {
        return Err(Error::NoRoot(format!(
            "target {target:?} is not above Q(0) = {q0:?}"
        )));
    }
    let m2 = sample
        .values()
        .iter()
        .map(|y| (y - theta) * (y - theta))
        .sum::<f64>()
        / sample.len() as f64;
    if !(m2 > 0.0) {
        return Err(Error::NoRoot(format!(
            "Q is flat: the sample is constant at {theta:?}"
        )));
    }
    let mut lo = 0.0;
    let mut hi = 1.0 / m2;
    let mut doublings = 0;
    while q_eval(sample, theta, delta, hi)? < target {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(Error::NoRoot(format!("Q never reaches {target:?}")));
        }
    }
    let tol = 1e-13 * target.abs().max(1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let q = q_eval(sample, theta, delta, mid)?;
        if (q - target).abs() <= tol {
            return Ok(mid);
        }
        if q < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Admissible upper bound on every `δ_{2i−1}`: `1/(2√(c(c−1)) − (c−1))`.
pub fn admissible_delta(c: f64) -> f64 {
    1.0 / (2.0 * (c * (c - 1.0)).sqrt() - (c - 1.0))
}

/// Sample-independent constants of the alternating scheme.
///
/// Indices follow the recursion: entry `j` of `eps`, `gamma` refers to step
/// `j + 1`; `x[j]` is `x_{j+2}`; `delta_odd[i]`, `zeta_odd[i]` are
/// `δ_{2i+1}`, `ζ_{2i+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KurtosisSchedule {
    pub n: usize,
    pub c: f64,
    pub eps: Vec<f64>,
    pub x: Vec<f64>,
    /// `γ_j = Σ_{j'=2}^{j} log(1 + 1/x_{j'})`.
    pub gamma: Vec<f64>,
    pub delta_odd: Vec<f64>,
    pub zeta_odd: Vec<f64>,
}

impl KurtosisSchedule {
    /// Number of mean/variance rounds.
    pub fn rounds(&self) -> usize {
        self.delta_odd.len()
    }

    pub fn miss_probability(&self) -> f64 {
        2.0 * self.eps.iter().sum::<f64>()
    }

    /// `x_j` for `j ≥ 2`.
    fn x_at(&self, j: usize) -> f64 {
        self.x[j - 2]
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update(self.c.to_le_bytes());
        for v in self
            .eps
            .iter()
            .chain(&self.x)
            .chain(&self.gamma)
            .chain(&self.delta_odd)
            .chain(&self.zeta_odd)
        {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Builds the deterministic constants for `2k = eps.len()` steps and
/// `x = (x_2, …, x_{2k})`, checking admissibility.
///
/// Each round needs `δ_{2i−1} ≤ 1/(2√(c(c−1)) − (c−1))` and, for `ζ_{2i−1}`
/// to be finite, `h < 1`.
pub fn kurtosis_schedule(n: usize, c: f64, eps: &[f64], x: &[f64]) -> Result<KurtosisSchedule> {
    if n == 0 {
        return invalid("n must be >= 1");
    }
    if !(c > 1.0) || !c.is_finite() {
        return invalid(format!("c must be finite and > 1, got {c:?}"));
    }
    if eps.is_empty() || !eps.len().is_multiple_of(2) {
        return invalid(format!(
            "an even, nonzero number of budgets is required, got {}",
            eps.len()
        ));
    }
    if x.len() + 1 != eps.len() {
        return invalid(format!(
            "expected {} jitter fractions, got {}",
            eps.len() - 1,
            x.len()
        ));
    }
    for &e in eps {
        check_probability("eps_i", e)?;
    }
    for &xi in x {
        if !(xi > 0.0) || !xi.is_finite() {
            return invalid(format!("jitter fractions must be > 0, got {xi:?}"));
        }
    }
    let nf = n as f64;
    let mut gamma = vec![0.0; eps.len()];
    for j in 1..eps.len() {
        gamma[j] = gamma[j - 1] + (1.0 + 1.0 / x[j - 1]).ln();
    }
    let bound = admissible_delta(c);
    let a = c / (c - 1.0);
    let k = eps.len() / 2;
    let mut delta_odd = Vec::with_capacity(k);
    let mut zeta_odd = Vec::with_capacity(k);
    for i in 0..k {
        let j = 2 * i;
        let d = (2.0 * ((1.0 / eps[j]).ln() + gamma[j]) / ((c - 1.0) * nf)).sqrt();
        let h = if d <= bound {
            h_ancillary(a, (c - 1.0) * d).ok()
        } else {
            None
        };
        match h {
            Some(h) if h < 1.0 => {
                delta_odd.push(d);
                zeta_odd.push(-0.5 * (-h).ln_1p());
            }
            _ => {
                return Err(Error::Admissibility {
                    detail: format!(
                        "delta_{} = {d:?} exceeds the admissible {bound:?} for c = {c:?}, n = {n}",
                        j + 1
                    ),
                    max_feasible_steps: i,
                })
            }
        }
    }
    Ok(KurtosisSchedule {
        n,
        c,
        eps: eps.to_vec(),
        x: x.to_vec(),
        gamma,
        delta_odd,
        zeta_odd,
    })
}

/// Jitter fractions used by [`KurtosisConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KurtosisJitter {
    /// `x_j = 0.5` for `j < 2k` and `x_{2k} = 0.1`.
    Tapered,
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KurtosisConfig {
    /// Number of mean/variance rounds.
    pub rounds: usize,
    pub jitter: KurtosisJitter,
}

impl Default for KurtosisConfig {
    fn default() -> Self {
        KurtosisConfig {
            rounds: 4,
            jitter: KurtosisJitter::Tapered,
        }
    }
}

impl KurtosisConfig {
    /// `(x_2, …, x_{2k})`.
    pub fn fractions(&self) -> Vec<f64> {
        let m = 2 * self.rounds - 1;
        match self.jitter {
            KurtosisJitter::Constant(x) => vec![x; m],
            KurtosisJitter::Tapered => {
                let mut v = vec![0.5; m];
                v[m - 1] = 0.1;
                v
            }
        }
    }

    /// Schedule for a total one-sided budget `eps`, split evenly over `2k` steps.
    pub fn schedule(&self, n: usize, c: f64, eps: f64) -> Result<KurtosisSchedule> {
        check_probability("eps", eps)?;
        if self.rounds == 0 {
            return invalid("the number of rounds must be >= 1");
        }
        let steps = 2 * self.rounds;
        kurtosis_schedule(n, c, &vec![eps / steps as f64; steps], &self.fractions())
    }
}

/// Sample-dependent trace of a run; index `j` refers to step `j + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KurtosisState {
    pub schedule: KurtosisSchedule,
    /// `θ̃_1..θ̃_{2k}`.
    pub theta: Vec<f64>,
    /// `q̃_1..q̃_{2k}`.
    pub q: Vec<f64>,
    /// `α_{2i}`, one per round.
    pub alpha_even: Vec<f64>,
    /// `ζ_{2i}`, one per round.
    pub zeta_even: Vec<f64>,
    /// `U_2..U_{2k}` as consumed.
    pub jitter: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KurtosisOutcome {
    pub mean: ConfidenceEstimate,
    /// Observable interval for the variance, valid on the same event as the
    /// mean interval.
    pub variance_interval: (f64, f64),
    pub state: KurtosisState,
}

/// Runs the alternating scheme from the prior guess `theta1`.
///
/// The jitter stream is consumed as `U_2, U_3, …, U_{2k}`.
pub fn run_kurtosis_scheme(
    sample: &Sample,
    theta1: f64,
    schedule: &KurtosisSchedule,
    jitter: JitterSource,
) -> Result<KurtosisOutcome> {
    if sample.len() != schedule.n {
        return invalid(format!(
            "schedule built for n = {} but the sample has {} observations",
            schedule.n,
            sample.len()
        ));
    }
    let nf = schedule.n as f64;
    let c = schedule.c;
    let k = schedule.rounds();
    let mut stream = jitter.stream();
    let mut theta = Vec::with_capacity(2 * k);
    let mut q = Vec::with_capacity(2 * k);
    let mut alpha_even = Vec::with_capacity(k);
    let mut zeta_even: Vec<f64> = Vec::with_capacity(k);
    let mut used = Vec::with_capacity(2 * k - 1);

    for i in 1..=k {
        let odd = 2 * i - 1;
        let even = 2 * i;
        let center = if i == 1 {
            theta1
        } else {
            let u = stream.next_uniform();
            used.push(u);
            theta[even - 3] + zeta_even[i - 2] * schedule.x_at(odd) * u
        };
        theta.push(center);

        let d = schedule.delta_odd[i - 1];
        let z_odd = schedule.zeta_odd[i - 1];
        let a_star = q_inverse(sample, center, d, -(c - 1.0) * d * d)?;
        let q_odd = d * (-z_odd).exp() / a_star;
        q.push(q_odd);

        let u = stream.next_uniform();
        used.push(u);
        let x_even = schedule.x_at(even);
        let q_even = q_odd * (x_even * z_odd * u).exp();
        q.push(q_even);

        let l = (1.0 / schedule.eps[even - 1]).ln() + schedule.gamma[even - 1];
        let spread = (1.0 + x_even) * z_odd / 2.0;
        let alpha = (-spread).exp() * (2.0 * l / (nf * q_even)).sqrt();
        let zeta = spread.exp() * (2.0 * q_even * l / nf).sqrt();
        alpha_even.push(alpha);
        zeta_even.push(zeta);
        theta.push(truncated_mean(
            sample,
            center,
            alpha,
            TruncationKind::Smooth,
        )?);
    }

    let z_last = schedule.zeta_odd[k - 1];
    let q_last = q[2 * k - 2];
    let lower = if k == 1 {
        0.0
    } else {
        let xo = schedule.x_at(2 * k - 1);
        let zprev = zeta_even[k - 2];
        ((-z_last).exp() * q_last - (1.0 + xo) * (1.0 + xo) * zprev * zprev).max(0.0)
    };
    let upper = z_last.exp() * q_last;

    let mean = ConfidenceEstimate {
        point: theta[2 * k - 1],
        half_width: zeta_even[k - 1],
        miss_probability: schedule.miss_probability(),
        feasible: true,
        metadata: EstimateMetadata {
            method: "kurtosis".into(),
            alpha: Some(alpha_even[k - 1]),
            beta: None,
            schedule_digest: Some(schedule.digest()),
            theoretical_only: false,
        },
    };
    Ok(KurtosisOutcome {
        mean,
        variance_interval: (lower, upper),
        state: KurtosisState {
            schedule: schedule.clone(),
            theta,
            q,
            alpha_even,
            zeta_even,
            jitter: used,
        },
    })
}

/// Deterministic bounds for a law of variance `v` with `(m − θ₁)² ≤ dist2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KurtosisBounds {
    /// Bound on the final mean half-width `ζ_{2k}`.
    pub mean_half_width: f64,
    /// Bound on the square root of the upper end of the variance interval.
    pub sd_upper: f64,
}

/// Propagates `ζ_2 ≤ e^{(1+x_2)ζ_1}·√(2[v + (m−θ₁)²][L_2 + γ_2]/n)` and
/// `ζ_{2i} ≤ e^{(1+x_{2i})ζ_{2i−1}}·√(2[v + (1+x_{2i−1})²ζ_{2i−2}²][L_{2i} + γ_{2i}]/n)`.
pub fn kurtosis_bounds(schedule: &KurtosisSchedule, v: f64, dist2: f64) -> KurtosisBounds {
    let nf = schedule.n as f64;
    let k = schedule.rounds();
    let mut zeta_even = 0.0;
    let mut proxy = v + dist2;
    for i in 1..=k {
        let even = 2 * i;
        if i > 1 {
            let xo = schedule.x_at(2 * i - 1);
            proxy = v + (1.0 + xo) * (1.0 + xo) * zeta_even * zeta_even;
        }
        let l = (1.0 / schedule.eps[even - 1]).ln() + schedule.gamma[even - 1];
        let z_odd = schedule.zeta_odd[i - 1];
        zeta_even = ((1.0 + schedule.x_at(even)) * z_odd).exp() * (2.0 * proxy * l / nf).sqrt();
    }
    // `proxy` now bounds v + (m − θ̃_{2k−1})², and q̃_{2k−1} ≤ proxy·e^{ζ_{2k−1}}.
    let sd_upper = (proxy * (2.0 * schedule.zeta_odd[k - 1]).exp()).sqrt();
    KurtosisBounds {
        mean_half_width: zeta_even,
        sd_upper,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spread_sample(n: usize, seed: u64) -> Sample {
        let mut s = JitterSource::new(seed).stream();
        Sample::new(
            (0..n)
                .map(|_| 2.0 * s.next_uniform() + 0.3 * s.next_uniform().powi(3))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn moment_identities() {
        let (lo, hi) = kappa_c_bounds(3.0).unwrap();
        assert_eq!(lo, 3.0);
        assert!((hi - (3.0 + 4.0 * 18f64.sqrt() / 9.0)).abs() < 1e-14);
        assert!((hi - 4.885618).abs() < 1e-6 && hi <= 5.0);
        let (_, hi1) = kappa_c_bounds(1.0).unwrap();
        assert!((hi1 - 25.0 / 9.0).abs() < 1e-14);
        assert!(kappa_c_bounds(0.5).is_err());
        assert_eq!(c_symmetric(3.0).unwrap(), 3.0);
        assert_eq!(c_symmetric(1.0).unwrap(), 2.0);
        assert!((c_symmetric(2.0).unwrap() - 7.0 / 3.0).abs() < 1e-15);
        assert_eq!(c_symmetric(7.5).unwrap(), 7.5);
        assert!(c_symmetric(0.9).is_err());
    }

    #[test]
    fn q_constant_sample() {
        let s = Sample::new(vec![1.0; 5]).unwrap();
        let base = (1.0f64 - 0.2 + 0.02).ln();
        for &a in &[0.0, 1.0, 100.0] {
            assert!((q_eval(&s, 1.0, 0.2, a).unwrap() - base).abs() < 1e-15);
        }
        assert!(matches!(
            q_inverse(&s, 1.0, 0.2, -0.1),
            Err(Error::NoRoot(_))
        ));
        let t = spread_sample(50, 1);
        assert!(matches!(
            q_inverse(&t, 0.0, 0.2, -0.3),
            Err(Error::NoRoot(_))
        ));
    }

    #[test]
    fn inadmissible_schedule_is_reported() {
        let e = kurtosis_schedule(50, 3.0, &[1e-10; 4], &[0.5; 3]).unwrap_err();
        assert!(matches!(
            e,
            Error::Admissibility {
                max_feasible_steps: 0,
                ..
            }
        ));
        // The first round fits, the second does not once γ has grown.
        let err = kurtosis_schedule(2000, 3.0, &[1e-3, 0.1, 1e-3, 0.1], &[1e-200, 1e-200, 0.5])
            .unwrap_err();
        assert!(
            matches!(
                err,
                Error::Admissibility {
                    max_feasible_steps: 1,
                    ..
                }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn target_above_q0() {
        for seed in 0..20 {
            let s = spread_sample(100, seed);
            for &c in &[1.5, 3.0, 10.0] {
                for &d in &[1e-3, 0.01, 0.1] {
                    let q0 = q_eval(&s, 0.1, d, 0.0).unwrap();
                    assert!(-(c - 1.0) * d * d > q0);
                    assert!(q_inverse(&s, 0.1, d, -(c - 1.0) * d * d).unwrap() > 0.0);
                }
            }
        }
    }

    #[test]
    fn deterministic_and_sample_free_constants() {
        let sched = KurtosisConfig::default().schedule(2000, 3.0, 1e-4).unwrap();
        let a = run_kurtosis_scheme(&spread_sample(2000, 1), 0.0, &sched, JitterSource::new(4))
            .unwrap();
        let b = run_kurtosis_scheme(&spread_sample(2000, 1), 0.0, &sched, JitterSource::new(4))
            .unwrap();
        assert_eq!(a, b);
        let c = run_kurtosis_scheme(&spread_sample(2000, 2), 0.0, &sched, JitterSource::new(4))
            .unwrap();
        assert_eq!(a.state.schedule, c.state.schedule);
        assert_eq!(a.state.jitter.len(), 7);
        let (lo, hi) = a.variance_interval;
        assert!(lo >= 0.0 && lo < hi);
    }

    proptest! {
        #[test]
        fn q_is_monotone(
            ys in prop::collection::vec(-10.0f64..10.0, 1..30),
            theta in -3.0f64..3.0,
            delta in 0.001f64..0.99,
            a in 0.0f64..5.0,
            step in 1e-6f64..1.0,
        ) {
            let s = Sample::new(ys).unwrap();
            let q1 = q_eval(&s, theta, delta, a).unwrap();
            let q2 = q_eval(&s, theta, delta, a + step).unwrap();
            prop_assert!(q2 - q1 >= -1e-10);
        }

        #[test]
        fn q_round_trip(
            ys in prop::collection::vec(-10.0f64..10.0, 2..30),
            theta in -3.0f64..3.0,
            delta in 0.001f64..0.5,
            a0 in 1e-3f64..3.0,
        ) {
            let s = Sample::new(ys).unwrap();
            let target = q_eval(&s, theta, delta, a0).unwrap();
            prop_assume!(target > q_eval(&s, theta, delta, 0.0).unwrap() + 1e-9);
            let a = q_inverse(&s, theta, delta, target).unwrap();
            prop_assert!((q_eval(&s, theta, delta, a).unwrap() - target).abs() <= 1e-10);
        }

        #[test]
        fn scale_equivariance(seed in 0u64..1000, scale in 0.01f64..100.0) {
            let sched = KurtosisConfig { rounds: 2, jitter: KurtosisJitter::Tapered }.schedule(400, 4.0, 1e-3).unwrap();
            let s = spread_sample(400, seed);
            let a = run_kurtosis_scheme(&s, 0.2, &sched, JitterSource::new(seed)).unwrap();
            let b = run_kurtosis_scheme(&s.scaled(scale), 0.2 * scale, &sched, JitterSource::new(seed)).unwrap();
            for (x, y) in a.state.theta.iter().zip(&b.state.theta) {
                prop_assert!((x * scale - y).abs() <= 1e-10 * (scale * (1.0 + x.abs())));
            }
            for (x, y) in a.state.q.iter().zip(&b.state.q) {
                prop_assert!((x * scale * scale - y).abs() <= 1e-10 * scale * scale * x.abs());
            }
        }
    }
}
