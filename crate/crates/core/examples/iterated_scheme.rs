//! Iterated jitter-and-truncate estimate, starting from a far-off prior center
//! and from the empirical mean.

use truncmean::iterated::{build_schedule, iterated_path, run_iterated, Center, IteratedConfig};
use truncmean::simulation::{sample_from, Law};
use truncmean::JitterSource;

fn main() -> truncmean::Result<()> {
    let n = 1000;
    let law = Law::Gaussian {
        mean: 3.0,
        variance: 1.0,
    };
    let sample = sample_from(&law, n, 7)?;
    let eps = 1e-6;

    // Prior center 50 units off: the first step is wide, the later ones shrink fast.
    let known = build_schedule(n, 1.0, eps, &IteratedConfig::known(50.0))?;
    println!(
        "delta_i: {:?}",
        known
            .delta
            .iter()
            .map(|d| format!("{d:.3}"))
            .collect::<Vec<_>>()
    );
    let path = iterated_path(&sample, Center::Given(-47.0), &known, JitterSource::new(1))?;
    println!(
        "centers: {:?}",
        path.iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>()
    );

    let empirical = build_schedule(n, 1.0, eps, &IteratedConfig::default())?;
    let est = run_iterated(
        &sample,
        Center::EmpiricalMean,
        &empirical,
        JitterSource::new(1),
    )?;
    println!(
        "empirical start: {:.4} ± {:.4} (digest {})",
        est.point,
        est.half_width,
        empirical.digest()
    );
    Ok(())
}
