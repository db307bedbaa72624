//! Root-defined last step after an iterated first stage, and where it stops
//! being feasible.

use truncmean::iterated::Center;
use truncmean::last_step::{design_last_step, estimate_last_step, LastStepPlan};
use truncmean::simulation::{sample_from, Law};
use truncmean::JitterSource;

fn main() -> truncmean::Result<()> {
    let plan = LastStepPlan::default();
    for n in [300, 1000] {
        for eps in [1e-4, 1e-8, 1e-10, 1e-12] {
            let d = design_last_step(n, 1.0, eps, &plan)?;
            println!(
                "n = {n:4}  eps = {eps:.0e}  beta = {:.3}  width = {:.4}  feasible = {}",
                d.beta, d.width.half_width, d.width.feasible
            );
        }
    }
    let sample = sample_from(&Law::Bernoulli { p: 0.2 }, 1000, 3)?;
    let est = estimate_last_step(
        &sample,
        Center::EmpiricalMean,
        0.16,
        1e-6,
        &plan,
        JitterSource::new(9),
    )?;
    println!("Bernoulli(0.2): {:.4} ± {:.4}", est.point, est.half_width);
    Ok(())
}
