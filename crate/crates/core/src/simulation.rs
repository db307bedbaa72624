//! Seeded sampling and Monte Carlo coverage experiments.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::lower_bound_variance;
use crate::error::{check_positive, check_probability, invalid, Error, Result};
use crate::iterated::{build_schedule, run_iterated, Center, IteratedConfig, Start};
use crate::jitter::{derive_seed, unit_open, JitterSource};
use crate::kurtosis::{run_kurtosis_scheme, KurtosisConfig};
use crate::last_step::{estimate_last_step, LastStepPlan};
use crate::lepski::{adapt, deviation_bound, LepskiConfig};
use crate::special::{normal_quantile, TruncationKind};
use crate::truncated::{estimate_one_shot, ConfidenceEstimate, PriorBounds, Sample};

const E: f64 = std::f64::consts::E;

/// A sampling law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum Law {
    Gaussian {
        mean: f64,
        variance: f64,
    },
    /// Mass `v/(2n²η²)` at each of `±nη`, the rest at 0.
    ThreePoint {
        v: f64,
        eta: f64,
        n: usize,
    },
    /// Mass `q` at each of `±nη` and `(1 − 2q)/2` at each of `±ξ`, with
    /// `q = (2ε/n)(1 − 4eε/n)^{−(n−1)}`, `η = ((c−1)/(2qn⁴))^{1/4}` and
    /// `ξ² = (1 − 2qn²η²)/(1 − 2q)`.
    FourPoint {
        c: f64,
        eps: f64,
        n: usize,
    },
    Bernoulli {
        p: f64,
    },
    /// Student t with `df` degrees of freedom times `scale`.
    StudentT {
        df: f64,
        scale: f64,
    },
}

/// Parameters `(q, η, ξ)` of the four-point law.
pub fn four_point_params(c: f64, eps: f64, n: usize) -> Result<(f64, f64, f64)> {
    if n == 0 {
        return invalid("n must be >= 1");
    }
    let nf = n as f64;
    if !(c >= 1.0 + 1.0 / nf) || !c.is_finite() {
        return invalid(format!("four-point law needs c >= 1 + 1/n, got c = {c:?}"));
    }
    if !(eps > 0.0 && eps <= 1.0 / (4.0 * E)) {
        return invalid(format!(
            "four-point law needs eps in (0, 1/(4e)], got {eps:?}"
        ));
    }
    let q = 2.0 * eps / nf * (1.0 - 4.0 * E * eps / nf).powf(-(nf - 1.0));
    let eta = ((c - 1.0) / (2.0 * q * nf.powi(4))).powf(0.25);
    let xi2 = (1.0 - 2.0 * q * nf * nf * eta * eta) / (1.0 - 2.0 * q);
    if !(2.0 * q < 1.0) || !(xi2 >= 0.0) {
        return invalid(format!("four-point law undefined for c = {c:?}, eps = {eps:?}, n = {n} (q = {q}, xi^2 = {xi2})"));
    }
    Ok((q, eta, xi2.sqrt()))
}

impl Law {
    /// Three-point law whose empirical mean misses `lower_bound_variance(n, v, ε)`
    /// with probability at least `2ε`.
    pub fn three_point_tuned(n: usize, v: f64, eps: f64) -> Result<Self> {
        let eta = lower_bound_variance(n, v, eps)?;
        let law = Law::ThreePoint { v, eta, n };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Law::Gaussian { mean, variance } => {
                if !mean.is_finite() {
                    return invalid("the mean must be finite");
                }
                check_positive("variance", variance)
            }
            Law::ThreePoint { v, eta, n } => {
                check_positive("v", v)?;
                check_positive("eta", eta)?;
                let nf = n as f64;
                if n == 0 || v > nf * nf * eta * eta * (1.0 + 1e-12) {
                    return invalid(format!(
                        "three-point law needs v <= n^2 eta^2, got v = {v}, n = {n}, eta = {eta}"
                    ));
                }
                Ok(())
            }
            Law::FourPoint { c, eps, n } => four_point_params(c, eps, n).map(|_| ()),
            Law::Bernoulli { p } => check_probability("p", p),
            Law::StudentT { df, scale } => {
                check_positive("df", df)?;
                check_positive("scale", scale)
            }
        }
    }

    /// Atoms `(value, probability)` of a finitely supported law.
    pub fn support(&self) -> Option<Vec<(f64, f64)>> {
        match *self {
            Law::ThreePoint { v, eta, n } => {
                let nf = n as f64;
                let p = v / (2.0 * nf * nf * eta * eta);
                Some(vec![
                    (-nf * eta, p),
                    (0.0, (1.0 - 2.0 * p).max(0.0)),
                    (nf * eta, p),
                ])
            }
            Law::FourPoint { c, eps, n } => {
                let (q, eta, xi) = four_point_params(c, eps, n).ok()?;
                let nf = n as f64;
                let r = (1.0 - 2.0 * q) / 2.0;
                Some(vec![(-nf * eta, q), (-xi, r), (xi, r), (nf * eta, q)])
            }
            Law::Bernoulli { p } => Some(vec![(0.0, 1.0 - p), (1.0, p)]),
            _ => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Law::Gaussian { mean, .. } => mean,
            Law::Bernoulli { p } => p,
            _ => 0.0,
        }
    }

    /// Variance; infinite for Student t with `df ≤ 2`.
    pub fn variance(&self) -> f64 {
        match *self {
            Law::Gaussian { variance, .. } => variance,
            Law::ThreePoint { v, .. } => v,
            Law::FourPoint { .. } => 1.0,
            Law::Bernoulli { p } => p * (1.0 - p),
            Law::StudentT { df, scale } => {
                if df > 2.0 {
                    scale * scale * df / (df - 2.0)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Classical kurtosis `E[(Y−m)⁴]/v²`, when finite.
    pub fn kurtosis(&self) -> Option<f64> {
        match *self {
            Law::Gaussian { .. } => Some(3.0),
            Law::StudentT { df, .. } => (df > 4.0).then(|| 3.0 + 6.0 / (df - 4.0)),
            _ => {
                let atoms = self.support()?;
                let m = self.mean();
                let m2: f64 = atoms.iter().map(|(x, p)| p * (x - m).powi(2)).sum();
                let m4: f64 = atoms.iter().map(|(x, p)| p * (x - m).powi(4)).sum();
                Some(m4 / (m2 * m2))
            }
        }
    }
}

/// `n` independent draws using ChaCha20 seeded with `seed`.
///
/// Finite laws and the Gaussian use the inverse distribution function of
/// `u = ((w >> 12) + ½)·2⁻⁵²`; Student t uses `rand_distr`.
pub fn sample_from(law: &Law, n: usize, seed: u64) -> Result<Sample> {
    law.validate()?;
    if n == 0 {
        return invalid("n must be >= 1");
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let values: Vec<f64> = match *law {
        Law::Gaussian { mean, variance } => {
            let sd = variance.sqrt();
            (0..n)
                .map(|_| normal_quantile(unit_open(rng.next_u64())).map(|z| mean + sd * z))
                .collect::<Result<_>>()?
        }
        Law::StudentT { df, scale } => {
            let t = StudentT::new(df).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            (0..n).map(|_| scale * t.sample(&mut rng)).collect()
        }
        _ => {
            let atoms = law.support().expect("finite support");
            (0..n)
                .map(|_| {
                    let u = unit_open(rng.next_u64());
                    let mut acc = 0.0;
                    for &(x, p) in &atoms {
                        acc += p;
                        if u < acc {
                            return x;
                        }
                    }
                    atoms[atoms.len() - 1].0
                })
                .collect()
        }
    };
    Sample::new(values)
}

/// Exact `P(|M| ≥ η)` for the empirical mean `M` of `n ≤ 12` draws from a
/// finitely supported law, by summing multinomial probabilities over all
/// count vectors. Ties are resolved with a relative slack of 1e−12.
pub fn exact_deviation(law: &Law, n: usize, eta: f64) -> Result<f64> {
    if n == 0 || n > 12 {
        return invalid(format!("exact enumeration supports 1 <= n <= 12, got {n}"));
    }
    law.validate()?;
    let atoms = law.support().ok_or_else(|| {
        Error::InvalidParameter("exact enumeration needs a finitely supported law".into())
    })?;
    let m = law.mean();
    let mut fact = [1.0f64; 13];
    for i in 1..=12 {
        fact[i] = fact[i - 1] * i as f64;
    }
    let threshold = eta * (1.0 - 1e-12);
    let mut total = 0.0;
    let mut counts = vec![0usize; atoms.len()];
    #[allow(clippy::too_many_arguments)]
    fn walk(
        idx: usize,
        left: usize,
        counts: &mut Vec<usize>,
        atoms: &[(f64, f64)],
        n: usize,
        m: f64,
        threshold: f64,
        fact: &[f64; 13],
        total: &mut f64,
    ) {
        if idx == atoms.len() - 1 {
            counts[idx] = left;
            let mean: f64 = counts
                .iter()
                .zip(atoms)
                .map(|(&k, &(x, _))| k as f64 * x)
                .sum::<f64>()
                / n as f64;
            if (mean - m).abs() >= threshold {
                let mut p = fact[n];
                for (&k, &(_, q)) in counts.iter().zip(atoms) {
                    p *= q.powi(k as i32) / fact[k];
                }
                *total += p;
            }
            return;
        }
        for k in 0..=left {
            counts[idx] = k;
            walk(
                idx + 1,
                left - k,
                counts,
                atoms,
                n,
                m,
                threshold,
                fact,
                total,
            );
        }
    }
    walk(
        0,
        n,
        &mut counts,
        &atoms,
        n,
        m,
        threshold,
        &fact,
        &mut total,
    );
    Ok(total)
}

/// One-sided lower bound for the three-point law:
/// `v(1 − v/(η²n²))^{n−1}/(2nη²)`.
pub fn three_point_display(v: f64, eta: f64, n: usize) -> f64 {
    let nf = n as f64;
    v * (1.0 - v / (eta * eta * nf * nf)).powf(nf - 1.0) / (2.0 * nf * eta * eta)
}

/// One-sided lower bound for the four-point law: `nq(1 − 2q)^{n−1}/2`.
pub fn four_point_display(q: f64, n: usize) -> f64 {
    let nf = n as f64;
    nf * q * (1.0 - 2.0 * q).powf(nf - 1.0) / 2.0
}

/// Estimator under test in a coverage experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    /// Empirical mean with a fixed half-width, counted at miss level `2ε`.
    ///
    /// With `inclusive`, a deviation equal to the half-width (up to a relative
    /// 1e−12) also counts as a miss: the lower bounds concern `|M − m| ≥ η`,
    /// and under the worst-case laws `M` sits exactly on multiples of `η`.
    EmpiricalMean {
        half_width: f64,
        eps: f64,
        inclusive: bool,
    },
    /// One-shot truncated mean around `m + offset`, `δ₀ = |offset|`.
    OneShot {
        v0: f64,
        eps: f64,
        offset: f64,
        kind: TruncationKind,
    },
    /// Iterated scheme; a known-location start is centred at `m + offset`.
    Iterated {
        v0: f64,
        eps: f64,
        offset: f64,
        config: IteratedConfig,
    },
    LastStep {
        v0: f64,
        eps: f64,
        plan: LastStepPlan,
    },
    /// Kurtosis scheme from `θ₁ = m + offset`.
    Kurtosis {
        c: f64,
        eps: f64,
        offset: f64,
        config: KurtosisConfig,
    },
    /// Variance adaptation. The reported half-width is replaced by the
    /// deviation bound at the law's true variance, the level at which the
    /// adaptive estimate carries a guarantee.
    Lepski { eps: f64, config: LepskiConfig },
}

/// Per-replicate record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: u64,
    pub estimate: f64,
    pub half_width: f64,
    pub miss: bool,
    /// Whether the variance interval missed, for the kurtosis scheme.
    pub variance_miss: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub replicates: u64,
    pub misses: u64,
    /// Replicates where the method returned an error.
    pub failures: u64,
    /// `misses / (replicates − failures)`.
    pub miss_rate: f64,
    /// Nominal two-sided miss probability of the method.
    pub nominal_miss: f64,
    pub variance_misses: Option<u64>,
    pub mean_abs_deviation: f64,
    /// Quantiles 0.5, 0.9 and 0.99 of `|θ̂ − m|`.
    pub deviation_quantiles: [f64; 3],
    pub max_deviation: f64,
    pub mean_half_width: f64,
    pub seed: u64,
    /// Hex sha256 of the JSON form of the law and the method.
    pub method_digest: String,
    #[serde(skip)]
    pub rows: Vec<ReplicateRow>,
}

/// Three binomial standard deviations: `3·√(p(1−p)/R)`.
pub fn three_sigma(p: f64, replicates: u64) -> f64 {
    3.0 * (p * (1.0 - p) / replicates as f64).sqrt()
}

fn nominal_miss(method: &Method) -> f64 {
    match method {
        Method::EmpiricalMean { eps, .. }
        | Method::OneShot { eps, .. }
        | Method::Iterated { eps, .. }
        | Method::LastStep { eps, .. }
        | Method::Kurtosis { eps, .. }
        | Method::Lepski { eps, .. } => 2.0 * eps,
    }
}

fn replicate(law: &Law, method: &Method, n: usize, seed: u64, index: u64) -> ReplicateRow {
    let sample_seed = derive_seed(seed, 2 * index);
    let jitter = JitterSource::new(derive_seed(seed, 2 * index + 1));
    let m = law.mean();
    let outcome = sample_from(law, n, sample_seed)
        .and_then(|sample| run_method(&sample, law, method, jitter));
    match outcome {
        Ok((est, var)) => ReplicateRow {
            replicate: index,
            estimate: est.point,
            half_width: est.half_width,
            miss: match method {
                Method::EmpiricalMean {
                    inclusive: true, ..
                } => (est.point - m).abs() >= est.half_width * (1.0 - 1e-12),
                _ => !est.covers(m),
            },
            variance_miss: var.map(|(lo, hi)| {
                let v = law.variance();
                !(lo <= v && v <= hi)
            }),
            error: None,
        },
        Err(e) => ReplicateRow {
            replicate: index,
            estimate: f64::NAN,
            half_width: f64::NAN,
            miss: false,
            variance_miss: None,
            error: Some(e.to_string()),
        },
    }
}

type MethodOutput = (ConfidenceEstimate, Option<(f64, f64)>);

fn run_method(
    sample: &Sample,
    law: &Law,
    method: &Method,
    jitter: JitterSource,
) -> Result<MethodOutput> {
    let n = sample.len();
    let m = law.mean();
    match method {
        Method::EmpiricalMean {
            half_width, eps, ..
        } => Ok((
            ConfidenceEstimate {
                point: sample.mean(),
                half_width: *half_width,
                miss_probability: 2.0 * eps,
                feasible: true,
                metadata: Default::default(),
            },
            None,
        )),
        Method::OneShot {
            v0,
            eps,
            offset,
            kind,
        } => Ok((
            estimate_one_shot(
                sample,
                m + offset,
                PriorBounds::variance(*v0, offset.abs()),
                *eps,
                *kind,
            )?,
            None,
        )),
        Method::Iterated {
            v0,
            eps,
            offset,
            config,
        } => {
            let sched = build_schedule(n, *v0, *eps, config)?;
            let center = match config.start {
                Start::Known { .. } => Center::Given(m + offset),
                Start::EmpiricalMean => Center::EmpiricalMean,
            };
            Ok((run_iterated(sample, center, &sched, jitter)?, None))
        }
        Method::LastStep { v0, eps, plan } => {
            let center = match plan.iterated.start {
                Start::Known { .. } => Center::Given(m),
                Start::EmpiricalMean => Center::EmpiricalMean,
            };
            Ok((
                estimate_last_step(sample, center, *v0, *eps, plan, jitter)?,
                None,
            ))
        }
        Method::Kurtosis {
            c,
            eps,
            offset,
            config,
        } => {
            let sched = config.schedule(n, *c, *eps)?;
            let out = run_kurtosis_scheme(sample, m + offset, &sched, jitter)?;
            Ok((out.mean, Some(out.variance_interval)))
        }
        Method::Lepski { eps, config } => {
            let mut est = adapt(sample, *eps, config, jitter)?;
            est.half_width = deviation_bound(n, law.variance(), *eps, config)?;
            Ok((est, None))
        }
    }
}

/// Digest identifying a law and a method.
pub fn method_digest(law: &Law, method: &Method) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(law).expect("serializable law"));
    h.update(serde_json::to_vec(method).expect("serializable method"));
    hex::encode(h.finalize())
}

/// Runs `replicates` independent experiments with samples of size `n` on the
/// global thread pool.
///
/// Replicate `i` draws its sample with seed `derive_seed(seed, 2i)` and its
/// jitter with `derive_seed(seed, 2i + 1)`, so the report does not depend on
/// scheduling or thread count.
pub fn run_coverage(
    law: &Law,
    method: &Method,
    n: usize,
    replicates: u64,
    seed: u64,
) -> Result<ExperimentReport> {
    law.validate()?;
    if n == 0 {
        return invalid("n must be >= 1");
    }
    let rows: Vec<ReplicateRow> = (0..replicates)
        .into_par_iter()
        .map(|i| replicate(law, method, n, seed, i))
        .collect();
    Ok(summarize(law, method, seed, rows))
}

/// [`run_coverage`] on a dedicated pool of `threads` workers.
pub fn run_coverage_threads(
    law: &Law,
    method: &Method,
    n: usize,
    replicates: u64,
    seed: u64,
    threads: usize,
) -> Result<ExperimentReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    pool.install(|| run_coverage(law, method, n, replicates, seed))
}

fn summarize(law: &Law, method: &Method, seed: u64, rows: Vec<ReplicateRow>) -> ExperimentReport {
    let m = law.mean();
    let mut misses = 0;
    let mut failures = 0;
    let mut var_misses = 0;
    let mut has_var = false;
    let mut devs = Vec::with_capacity(rows.len());
    let mut width_sum = 0.0;
    for r in &rows {
        if r.error.is_some() {
            failures += 1;
            continue;
        }
        if r.miss {
            misses += 1;
        }
        if let Some(vm) = r.variance_miss {
            has_var = true;
            if vm {
                var_misses += 1;
            }
        }
        devs.push((r.estimate - m).abs());
        width_sum += r.half_width;
    }
    let ok = devs.len();
    devs.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        if ok == 0 {
            f64::NAN
        } else {
            let idx = ((q * ok as f64).ceil() as usize).clamp(1, ok) - 1;
            devs[idx]
        }
    };
    ExperimentReport {
        replicates: rows.len() as u64,
        misses,
        failures,
        miss_rate: if ok == 0 {
            f64::NAN
        } else {
            misses as f64 / ok as f64
        },
        nominal_miss: nominal_miss(method),
        variance_misses: has_var.then_some(var_misses),
        mean_abs_deviation: if ok == 0 {
            f64::NAN
        } else {
            devs.iter().sum::<f64>() / ok as f64
        },
        deviation_quantiles: [quantile(0.5), quantile(0.9), quantile(0.99)],
        max_deviation: devs.last().copied().unwrap_or(f64::NAN),
        mean_half_width: if ok == 0 {
            f64::NAN
        } else {
            width_sum / ok as f64
        },
        seed,
        method_digest: method_digest(law, method),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::gaussian_benchmark_width;

    #[test]
    fn three_point_without_zero_mass() {
        let n = 10;
        let law = Law::ThreePoint {
            v: 4.0,
            eta: 0.2,
            n,
        };
        let s = sample_from(&law, 500, 3).unwrap();
        assert!(s.values().iter().all(|&y| y == 2.0 || y == -2.0));
        assert!(Law::ThreePoint {
            v: 5.0,
            eta: 0.2,
            n
        }
        .validate()
        .is_err());
    }

    #[test]
    fn four_point_moments() {
        for &(c, eps, n) in &[(3.0, 0.01, 10usize), (6.0, 1e-4, 2000), (1.5, 0.05, 4)] {
            let law = Law::FourPoint { c, eps, n };
            let atoms = law.support().unwrap();
            let total: f64 = atoms.iter().map(|a| a.1).sum();
            let m2: f64 = atoms.iter().map(|(x, p)| p * x * x).sum();
            let m4: f64 = atoms.iter().map(|(x, p)| p * x.powi(4)).sum();
            assert!((total - 1.0).abs() < 1e-14);
            assert!((m2 - 1.0).abs() < 1e-12);
            assert!(m4 <= c * (1.0 + 1e-12), "c = {c}: E Y^4 = {m4}");
        }
        assert!(four_point_params(1.0, 0.01, 10).is_err());
        assert!(four_point_params(3.0, 0.1, 10).is_err());
    }

    #[test]
    fn empirical_moments_match() {
        let laws = [
            Law::Gaussian {
                mean: 1.0,
                variance: 4.0,
            },
            Law::Bernoulli { p: 0.3 },
            Law::FourPoint {
                c: 3.0,
                eps: 0.01,
                n: 10,
            },
            Law::ThreePoint {
                v: 1.0,
                eta: 0.05,
                n: 40,
            },
        ];
        let draws = 200_000;
        for (i, law) in laws.iter().enumerate() {
            let s = sample_from(law, draws, 100 + i as u64).unwrap();
            let mean = s.mean();
            let v = law.variance();
            let se = (v / draws as f64).sqrt();
            assert!((mean - law.mean()).abs() < 5.0 * se, "{law:?}: mean {mean}");
            let m2 = s
                .values()
                .iter()
                .map(|y| (y - law.mean()).powi(2))
                .sum::<f64>()
                / draws as f64;
            let k = law.kurtosis().unwrap();
            let se2 = ((k - 1.0) * v * v / draws as f64).sqrt();
            assert!((m2 - v).abs() < 5.0 * se2, "{law:?}: second moment {m2}");
        }
    }

    #[test]
    fn single_draw_enumeration() {
        let law = Law::ThreePoint {
            v: 0.5,
            eta: 1.0,
            n: 1,
        };
        let p = exact_deviation(&law, 1, 1.0).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!(exact_deviation(&law, 13, 1.0).is_err());
        let g = Law::Gaussian {
            mean: 0.0,
            variance: 1.0,
        };
        assert!(exact_deviation(&g, 3, 1.0).is_err());
    }

    #[test]
    fn small_enumerations_dominate_displays() {
        let law = Law::three_point_tuned(3, 1.0, 0.05).unwrap();
        let Law::ThreePoint { eta, .. } = law else {
            unreachable!()
        };
        let p = exact_deviation(&law, 3, eta).unwrap();
        assert!(p / 2.0 >= three_point_display(1.0, eta, 3) * (1.0 - 1e-12));
        let law = Law::FourPoint {
            c: 3.0,
            eps: 0.05,
            n: 4,
        };
        let (q, eta, _) = four_point_params(3.0, 0.05, 4).unwrap();
        let p = exact_deviation(&law, 4, eta).unwrap();
        assert!(p / 2.0 >= four_point_display(q, 4) * (1.0 - 1e-12));
    }

    #[test]
    fn reports_are_thread_independent() {
        let law = Law::Gaussian {
            mean: 0.0,
            variance: 1.0,
        };
        let method = Method::Iterated {
            v0: 1.0,
            eps: 0.01,
            offset: 0.0,
            config: IteratedConfig::default(),
        };
        let a = run_coverage_threads(&law, &method, 100, 300, 9, 1).unwrap();
        let b = run_coverage_threads(&law, &method, 100, 300, 9, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.failures, 0);
    }

    #[test]
    fn gaussian_pivot_coverage() {
        let law = Law::Gaussian {
            mean: 0.0,
            variance: 1.0,
        };
        let eps = 0.025;
        let n = 20;
        let method = Method::EmpiricalMean {
            half_width: gaussian_benchmark_width(n, 1.0, eps).unwrap(),
            eps,
            inclusive: false,
        };
        let r = run_coverage(&law, &method, n, 20_000, 1).unwrap();
        assert!(
            (r.miss_rate - 0.05).abs() <= three_sigma(0.05, 20_000),
            "{}",
            r.miss_rate
        );
    }
}
