//! Mean and variance intervals under a uniform kurtosis bound.

use truncmean::kurtosis::{c_symmetric, run_kurtosis_scheme, KurtosisConfig};
use truncmean::simulation::{sample_from, Law};
use truncmean::{Error, JitterSource};

fn main() -> truncmean::Result<()> {
    let n = 2000;
    let c = c_symmetric(3.0)?;
    let sample = sample_from(
        &Law::Gaussian {
            mean: 0.0,
            variance: 4.0,
        },
        n,
        5,
    )?;
    let config = KurtosisConfig::default();
    let schedule = config.schedule(n, c, 1e-6)?;
    let out = run_kurtosis_scheme(&sample, 10.0, &schedule, JitterSource::new(2))?;
    println!(
        "mean      {:.4} ± {:.4}",
        out.mean.point, out.mean.half_width
    );
    println!(
        "variance  [{:.4}, {:.4}]",
        out.variance_interval.0, out.variance_interval.1
    );

    // Too many rounds for the budget: the error says how many would fit.
    let greedy = KurtosisConfig {
        rounds: 40,
        ..config
    };
    match greedy.schedule(100, 8.0, 1e-10) {
        Err(Error::Admissibility {
            max_feasible_steps, ..
        }) => println!("at n = 100, c = 8: at most {max_feasible_steps} rounds"),
        other => println!("{other:?}"),
    }
    Ok(())
}
