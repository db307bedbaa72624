//! Coverage of the iterated interval on the worst-case three-point law,
//! next to the empirical mean at the lower-bound width.

use truncmean::bounds::lower_bound_variance;
use truncmean::iterated::IteratedConfig;
use truncmean::simulation::{run_coverage, three_sigma, Law, Method};

fn main() -> truncmean::Result<()> {
    let (n, eps, replicates, seed) = (1000, 1e-3, 20_000, 2024);
    let law = Law::three_point_tuned(n, 1.0, eps)?;
    let methods = [
        (
            "empirical mean",
            Method::EmpiricalMean {
                half_width: lower_bound_variance(n, 1.0, eps)?,
                eps,
                inclusive: true,
            },
        ),
        (
            "iterated",
            Method::Iterated {
                v0: 1.0,
                eps,
                offset: 0.0,
                config: IteratedConfig::default(),
            },
        ),
    ];
    for (label, method) in &methods {
        let r = run_coverage(&law, method, n, replicates, seed)?;
        println!(
            "{label:<15} miss rate {:.5} (nominal {:.4}, 3 sigma {:.5}), mean width {:.4}",
            r.miss_rate,
            r.nominal_miss,
            three_sigma(r.nominal_miss, replicates),
            r.mean_half_width
        );
    }
    Ok(())
}
