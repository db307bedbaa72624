//! Adapting to an unknown variance over a dyadic grid of candidate bounds.

use truncmean::lepski::{adapt, deviation_bound, LepskiConfig};
use truncmean::simulation::{sample_from, Law};
use truncmean::JitterSource;

fn main() -> truncmean::Result<()> {
    let n = 1000;
    let config = LepskiConfig::default();
    for variance in [0.01, 1.0, 250.0] {
        let sample = sample_from(
            &Law::Gaussian {
                mean: 1.0,
                variance,
            },
            n,
            17,
        )?;
        let est = adapt(&sample, 1e-4, &config, JitterSource::new(4))?;
        println!(
            "v = {variance:>6}: {:.4}, grid deviation scale {:.4} (theoretical only: {}), bound at the true v {:.4}",
            est.point,
            est.half_width,
            est.metadata.theoretical_only,
            deviation_bound(n, variance, 1e-4, &config)?
        );
    }
    Ok(())
}
