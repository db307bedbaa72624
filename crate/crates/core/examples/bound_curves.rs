//! Upper bounds, lower bounds and the Gaussian benchmark on one epsilon grid.

use truncmean::bounds::{
    chebyshev_width, default_eps_grid, gaussian_benchmark_width, kurtosis_upper_width,
    lower_bound_kurtosis, lower_bound_variance, BoundCurve, CurveKind,
};
use truncmean::iterated::{iterated_width, IteratedConfig};

fn main() -> truncmean::Result<()> {
    let n = 1000;
    let grid: Vec<f64> = default_eps_grid().into_iter().step_by(8).collect();
    let curves = [
        BoundCurve::tabulate("lower-variance", CurveKind::LowerDeviation, &grid, |e| {
            lower_bound_variance(n, 1.0, e)
        })?,
        BoundCurve::tabulate("chebyshev", CurveKind::UpperDeviation, &grid, |e| {
            chebyshev_width(n, 1.0, e)
        })?,
        BoundCurve::tabulate("iterated", CurveKind::UpperDeviation, &grid, |e| {
            iterated_width(n, 1.0, e, &IteratedConfig::default())
        })?,
        BoundCurve::tabulate("benchmark", CurveKind::Benchmark, &grid, |e| {
            gaussian_benchmark_width(n, 1.0, e)
        })?,
        BoundCurve::tabulate("lower-kurtosis", CurveKind::LowerDeviation, &grid, |e| {
            lower_bound_kurtosis(n, 6.0, e)
        })?,
        BoundCurve::tabulate("kurtosis-upper", CurveKind::UpperDeviation, &grid, |e| {
            kurtosis_upper_width(n, 6.0, e)
        })?,
    ];
    for c in &curves {
        let cells: Vec<String> = c
            .points
            .iter()
            .map(|(e, w)| format!("{e:.0e}:{w:.3}"))
            .collect();
        println!("{:<15} {}", c.name, cells.join("  "));
    }
    Ok(())
}
