//! One-shot smooth and clipped truncated means on a heavy-tailed sample.

use truncmean::simulation::{sample_from, Law};
use truncmean::truncated::estimate_one_shot;
use truncmean::{PriorBounds, TruncationKind};

fn main() -> truncmean::Result<()> {
    let law = Law::StudentT {
        df: 2.5,
        scale: 1.0,
    };
    let sample = sample_from(&law, 500, 42)?;
    let priors = PriorBounds::variance(law.variance(), 1.0);
    let eps = 0.005;

    println!("empirical mean  {:+.4}", sample.mean());
    for kind in [TruncationKind::Smooth, TruncationKind::Clipped] {
        let est = estimate_one_shot(&sample, 0.5, priors, eps, kind)?;
        let (lo, hi) = est.interval();
        println!(
            "{:<15} {:+.4}  [{lo:+.4}, {hi:+.4}] at level {:.3}",
            kind.name(),
            est.point,
            1.0 - est.miss_probability
        );
    }
    Ok(())
}
