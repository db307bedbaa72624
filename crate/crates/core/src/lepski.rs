//! Adaptation to an unknown variance.
//!
//! Candidate variance bounds `v₀` are coded on a dyadic grid relative to a
//! reference `V`. Each `v₀` gets the interval `I(v₀) = θ̂(v₀) ± δ(v₀, εν(v₀))`
//! of a base estimator whose width scales as `√v₀`. The nested intersections
//! `J(v₁) = ∩_{v₀ ≥ v₁} I(v₀)` are nonempty for large `v₁`; the estimate is
//! the midpoint of the smallest nonempty one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_probability, invalid, Error, Result};
use crate::iterated::{build_schedule, run_iterated, Center, IteratedConfig, Start};
use crate::jitter::JitterSource;
use crate::truncated::{ConfidenceEstimate, EstimateMetadata, Sample};

/// `v₀ = V·2^s·Σ_{k=0}^{d} c_k 2^{−k}` with `c_0 = c_d = 1`.
///
/// `mantissa` holds the bits `c_0 … c_d` as the integer `Σ c_k 2^{d−k}`, so it
/// lies in `[2^d, 2^{d+1})` and is odd when `d ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCode {
    pub s: i32,
    pub d: u32,
    pub mantissa: u64,
}

/// Largest supported mantissa length.
pub const MAX_D: u32 = 52;

impl DyadicCode {
    pub fn new(s: i32, d: u32, mantissa: u64) -> Result<Self> {
        let code = DyadicCode { s, d, mantissa };
        if code.is_valid() {
            Ok(code)
        } else {
            invalid(format!(
                "invalid dyadic code s = {s}, d = {d:?}, mantissa = {mantissa:#b}"
            ))
        }
    }

    pub fn is_valid(&self) -> bool {
        if self.d > MAX_D {
            return false;
        }
        let lo = 1u64 << self.d;
        let in_range = self.mantissa >= lo && self.mantissa < 2 * lo;
        in_range && (self.d == 0 || self.mantissa & 1 == 1)
    }

    /// `v₀/V`.
    pub fn ratio(&self) -> f64 {
        self.mantissa as f64 * 2f64.powi(self.s - self.d as i32)
    }

    pub fn decode(&self, reference: f64) -> f64 {
        reference * self.ratio()
    }

    /// Inverse of [`DyadicCode::decode`]; fails unless `v₀/V` is a positive
    /// dyadic rational with at most [`MAX_D`] fractional mantissa bits.
    pub fn encode(v0: f64, reference: f64) -> Result<Self> {
        check_positive("v0", v0)?;
        check_positive("reference", reference)?;
        let r = v0 / reference;
        let s = r.log2().floor() as i32;
        // Fix the exponent against rounding in log2.
        let s = if 2f64.powi(s) > r {
            s - 1
        } else if 2f64.powi(s + 1) <= r {
            s + 1
        } else {
            s
        };
        let mut m = r / 2f64.powi(s);
        let mut mantissa = 1u64;
        m -= 1.0;
        let mut d = 0u32;
        while m > 0.0 {
            d += 1;
            if d > MAX_D {
                return invalid(format!(
                    "{v0:?} is not a short dyadic multiple of {reference:?}"
                ));
            }
            m *= 2.0;
            let bit = if m >= 1.0 { 1 } else { 0 };
            m -= bit as f64;
            mantissa = (mantissa << 1) | bit;
        }
        DyadicCode::new(s, d, mantissa)
    }

    /// Unnormalized mass `[(|s|+2)(|s|+3)(d+1)(d+2)·2^{d−1}]⁻¹`.
    pub fn raw_mass(&self) -> f64 {
        let s = self.s.unsigned_abs() as f64;
        let d = self.d as f64;
        1.0 / ((s + 2.0) * (s + 3.0) * (d + 1.0) * (d + 2.0) * 2f64.powi(self.d as i32 - 1))
    }
}

/// Total raw mass over every code: `(5/6)·(3/2)`.
pub const RAW_TOTAL_MASS: f64 = 1.25;

/// `ν(code)`: the raw mass divided by [`RAW_TOTAL_MASS`], so that masses sum
/// to one over all codes.
pub fn nu_mass(code: &DyadicCode) -> f64 {
    code.raw_mass() / RAW_TOTAL_MASS
}

/// Bounds of the enumerated grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLimits {
    pub s_min: i32,
    pub s_max: i32,
    pub d_max: u32,
}

impl Default for GridLimits {
    fn default() -> Self {
        GridLimits {
            s_min: -40,
            s_max: 40,
            d_max: 4,
        }
    }
}

/// Every valid code within `limits`, ordered by `(s, d, mantissa)`.
pub fn enumerate_codes(limits: GridLimits) -> Result<Vec<DyadicCode>> {
    if limits.s_min > limits.s_max {
        return invalid("s_min must not exceed s_max");
    }
    if limits.d_max > 24 {
        return invalid(format!(
            "d_max = {} would enumerate too many codes",
            limits.d_max
        ));
    }
    let mut out = Vec::new();
    for s in limits.s_min..=limits.s_max {
        out.push(DyadicCode {
            s,
            d: 0,
            mantissa: 1,
        });
        for d in 1..=limits.d_max {
            let lo = 1u64 << d;
            for mantissa in (lo + 1..2 * lo).step_by(2) {
                out.push(DyadicCode { s, d, mantissa });
            }
        }
    }
    Ok(out)
}

/// A closed interval, possibly the whole line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn is_empty(&self) -> bool {
        !(self.lo <= self.hi)
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.max(other.lo),
            hi: self.hi.min(other.hi),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// One grid point of the family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub code: DyadicCode,
    pub v0: f64,
    pub point: f64,
    pub half_width: f64,
    /// `I(v₀)`.
    pub interval: Interval,
    /// `J(v₀)`.
    pub nested: Interval,
}

/// All `I(v₀)` and `J(v₀)`, sorted by decreasing `v₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalFamily {
    pub entries: Vec<GridEntry>,
}

impl IntervalFamily {
    /// Builds the family from `(code, v₀, point, half_width)` tuples in any order.
    pub fn from_points(mut points: Vec<(DyadicCode, f64, f64, f64)>) -> IntervalFamily {
        points.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut acc = Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        };
        let entries = points
            .into_iter()
            .map(|(code, v0, point, half_width)| {
                let interval = if half_width.is_finite() {
                    Interval {
                        lo: point - half_width,
                        hi: point + half_width,
                    }
                } else {
                    Interval {
                        lo: f64::NEG_INFINITY,
                        hi: f64::INFINITY,
                    }
                };
                acc = acc.intersect(&interval);
                GridEntry {
                    code,
                    v0,
                    point,
                    half_width,
                    interval,
                    nested: acc,
                }
            })
            .collect();
        IntervalFamily { entries }
    }

    /// `J(v₁)` for an arbitrary `v₁`: the intersection of every `I(v₀)` with
    /// `v₀ ≥ v₁`.
    pub fn nested_at(&self, v1: f64) -> Interval {
        self.entries
            .iter()
            .take_while(|e| e.v0 >= v1)
            .last()
            .map(|e| e.nested)
            .unwrap_or(Interval {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            })
    }

    /// The grid entry with the smallest `v₀` whose `J` is nonempty.
    pub fn smallest_nonempty(&self) -> Option<&GridEntry> {
        self.entries
            .iter()
            .take_while(|e| !e.nested.is_empty())
            .last()
    }
}

/// Base estimator used for every `v₀`: the empirical-start iterated scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LepskiConfig {
    pub reference: f64,
    pub limits: GridLimits,
    pub base: IteratedConfig,
}

impl Default for LepskiConfig {
    fn default() -> Self {
        LepskiConfig {
            reference: 1.0,
            limits: GridLimits::default(),
            base: IteratedConfig::default(),
        }
    }
}

fn check_base(config: &LepskiConfig) -> Result<()> {
    if config.base.start != Start::EmpiricalMean {
        return invalid("the base estimator must start from the empirical mean");
    }
    check_positive("reference", config.reference)
}

/// `δ(1, ε')` of the base estimator.
pub fn unit_width(n: usize, eps: f64, base: &IteratedConfig) -> Result<f64> {
    Ok(build_schedule(n, 1.0, eps, base)?.final_width())
}

/// `2·inf_{v₀ ≥ v} δ(1, εν(v₀))·√v₀` over the grid codes.
pub fn deviation_bound(n: usize, v: f64, eps: f64, config: &LepskiConfig) -> Result<f64> {
    check_base(config)?;
    check_probability("eps", eps)?;
    let mut best = f64::INFINITY;
    for code in enumerate_codes(config.limits)? {
        let v0 = code.decode(config.reference);
        if v0 >= v {
            let w = unit_width(n, eps * nu_mass(&code), &config.base)? * v0.sqrt();
            best = best.min(w);
        }
    }
    Ok(2.0 * best)
}

/// Builds the interval family for `sample` at total one-sided budget `eps`.
pub fn interval_family(
    sample: &Sample,
    eps: f64,
    config: &LepskiConfig,
    jitter: JitterSource,
) -> Result<IntervalFamily> {
    check_base(config)?;
    check_probability("eps", eps)?;
    let n = sample.len();
    let codes = enumerate_codes(config.limits)?;
    let points: Result<Vec<_>> = codes
        .par_iter()
        .map(|code| {
            let v0 = code.decode(config.reference);
            let sched = build_schedule(n, v0, eps * nu_mass(code), &config.base)?;
            let est = run_iterated(sample, Center::EmpiricalMean, &sched, jitter)?;
            Ok((*code, v0, est.point, est.half_width))
        })
        .collect();
    Ok(IntervalFamily::from_points(points?))
}

/// Adaptive estimate: midpoint of the smallest nonempty `J`.
///
/// The reported half-width is `2·inf_{v₀ ≥ v̂₁} δ(1, εν(v₀))·√v₀` where `v̂₁`
/// is the selected grid value. It is a theoretical deviation scale, not an
/// observable guarantee, and is flagged as such.
pub fn adapt(
    sample: &Sample,
    eps: f64,
    config: &LepskiConfig,
    jitter: JitterSource,
) -> Result<ConfidenceEstimate> {
    let family = interval_family(sample, eps, config, jitter)?;
    let chosen = family.smallest_nonempty().ok_or_else(|| {
        let top = family.entries.first();
        Error::EmptyFamily(format!(
            "every J on the grid is empty (largest v0 = {:?}, its interval = {:?}); widen the grid or change the reference",
            top.map(|e| e.v0),
            top.map(|e| e.interval)
        ))
    })?;
    let n = sample.len();
    let mut best = f64::INFINITY;
    for e in family.entries.iter().take_while(|e| e.v0 >= chosen.v0) {
        let w = unit_width(n, eps * nu_mass(&e.code), &config.base)? * e.v0.sqrt();
        best = best.min(w);
    }
    Ok(ConfidenceEstimate {
        point: chosen.nested.midpoint(),
        half_width: 2.0 * best,
        miss_probability: 2.0 * eps,
        feasible: true,
        metadata: EstimateMetadata {
            method: "lepski".into(),
            alpha: None,
            beta: None,
            schedule_digest: None,
            theoretical_only: true,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iterated::StepCount;
    use proptest::prelude::*;

    #[test]
    fn raw_masses() {
        let unit = DyadicCode::new(0, 0, 1).unwrap();
        assert!((unit.raw_mass() - 1.0 / 6.0).abs() < 1e-16);
        assert_eq!(unit.decode(1.0), 1.0);
        let one_and_half = DyadicCode::new(0, 1, 0b11).unwrap();
        assert!((one_and_half.raw_mass() - 1.0 / 36.0).abs() < 1e-16);
        assert_eq!(one_and_half.decode(2.0), 3.0);
        assert!(DyadicCode::new(0, 1, 0b10).is_err());
        assert!(DyadicCode::new(0, 2, 0b11).is_err());
    }

    #[test]
    fn total_mass_with_tails() {
        // Direct sum over |s| ≤ 60, d ≤ 40 plus the analytic tails.
        let s_part: f64 = (-60i32..=60)
            .map(|s| {
                let a = s.unsigned_abs() as f64;
                1.0 / ((a + 2.0) * (a + 3.0))
            })
            .sum();
        let s_tail = 2.0 / 63.0;
        assert!((s_part + s_tail - 5.0 / 6.0).abs() < 1e-14);
        let d_part: f64 = 1.0
            + (1..=40)
                .map(|d| 1.0 / ((d as f64 + 1.0) * (d as f64 + 2.0)))
                .sum::<f64>();
        let d_tail = 1.0 / 42.0;
        assert!((d_part + d_tail - 1.5).abs() < 1e-14);
        assert!((s_part * d_part) / RAW_TOTAL_MASS <= 1.0 + 1e-12);

        let codes = enumerate_codes(GridLimits {
            s_min: -5,
            s_max: 5,
            d_max: 10,
        })
        .unwrap();
        let total: f64 = codes.iter().map(nu_mass).sum();
        assert!(total <= 1.0 + 1e-12);
    }

    #[test]
    fn family_nesting_and_order_independence() {
        let mut pts = Vec::new();
        for (i, code) in enumerate_codes(GridLimits {
            s_min: -3,
            s_max: 3,
            d_max: 2,
        })
        .unwrap()
        .into_iter()
        .enumerate()
        {
            let v0 = code.decode(1.0);
            pts.push((code, v0, 0.01 * ((i * 7 % 5) as f64 - 2.0), 0.3 * v0.sqrt()));
        }
        let fam = IntervalFamily::from_points(pts.clone());
        pts.reverse();
        let rev = IntervalFamily::from_points(pts);
        assert_eq!(fam, rev);
        for w in fam.entries.windows(2) {
            // w[0].v0 > w[1].v0, so J(w[0]) contains J(w[1]).
            let (big, small) = (w[0].nested, w[1].nested);
            if !small.is_empty() {
                assert!(big.lo <= small.lo && small.hi <= big.hi);
            }
        }
    }

    #[test]
    fn single_point_family() {
        let code = DyadicCode::new(0, 0, 1).unwrap();
        let fam = IntervalFamily::from_points(vec![(code, 1.0, 0.4, 0.2)]);
        let e = fam.smallest_nonempty().unwrap();
        assert_eq!(e.nested.midpoint(), 0.4);
        assert_eq!(e.nested, e.interval);
    }

    #[test]
    fn common_point_survives() {
        let codes = enumerate_codes(GridLimits {
            s_min: -2,
            s_max: 2,
            d_max: 1,
        })
        .unwrap();
        let pts: Vec<_> = codes
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let v0 = c.decode(1.0);
                let off = if i % 2 == 0 { 0.5 } else { -0.5 };
                (*c, v0, 1.0 + off * v0.sqrt(), v0.sqrt())
            })
            .collect();
        let fam = IntervalFamily::from_points(pts);
        let e = fam.smallest_nonempty().unwrap();
        assert!(e.nested.contains(1.0));
    }

    #[test]
    fn adapt_runs() {
        let mut s = JitterSource::new(2).stream();
        let sample = Sample::new((0..200).map(|_| 3.0 * s.next_uniform()).collect()).unwrap();
        let config = LepskiConfig {
            limits: GridLimits {
                s_min: -6,
                s_max: 6,
                d_max: 2,
            },
            base: IteratedConfig {
                steps: StepCount::Fixed(4),
                ..Default::default()
            },
            ..Default::default()
        };
        let est = adapt(&sample, 0.01, &config, JitterSource::new(1)).unwrap();
        assert!(est.metadata.theoretical_only);
        assert!(est.point.abs() < 1.0);
        assert!(adapt(
            &sample,
            0.01,
            &LepskiConfig {
                base: IteratedConfig::known(1.0),
                ..config
            },
            JitterSource::new(1)
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(s in -60i32..60, d in 0u32..30, bits in any::<u64>()) {
            let mantissa = if d == 0 { 1 } else { (1u64 << d) | (bits & ((1u64 << d) - 1)) | 1 };
            let code = DyadicCode::new(s, d, mantissa).unwrap();
            let back = DyadicCode::encode(code.decode(1.0), 1.0).unwrap();
            prop_assert_eq!(back, code);
        }
    }
}
