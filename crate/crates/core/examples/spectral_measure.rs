//! Time-averaged coefficients of i.i.d. samples approach the target's
//! coefficients at the Monte Carlo rate.

use ndarray::Array2;
use stein_ergodic::domain::{measure_coefficients, TargetMeasure, Workspace};
use stein_ergodic::spectral::SpectralBasis;

fn main() -> stein_ergodic::Result<()> {
    let ws = Workspace::unit(2);
    let basis = SpectralBasis::new(ws.clone(), 10)?;
    let measure = TargetMeasure::isotropic_mixture(
        vec![
            vec![0.25, 0.25],
            vec![0.75, 0.25],
            vec![0.25, 0.75],
            vec![0.75, 0.75],
        ],
        0.08,
    )?;
    let mu = measure_coefficients(&measure, &basis, 200_000, 1)?;
    println!("{} basis functions", basis.len());
    for t in [100, 1_000, 10_000, 100_000] {
        let pts = measure.sample(&ws, t, 7)?;
        let path = Array2::from_shape_fn((t, 2), |(i, j)| pts[i][j]);
        let q = basis.trajectory_coefficients(path.view())?;
        let gap = q
            .coefficients
            .iter()
            .zip(&mu.coefficients)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!(
            "T = {t:>6}: max |Q - mu| = {gap:.4}  (5/sqrt(T) = {:.4})  ergodic cost {:.2e}",
            5.0 / (t as f64).sqrt(),
            basis.ergodic_cost(&q, &mu)?
        );
    }
    Ok(())
}
