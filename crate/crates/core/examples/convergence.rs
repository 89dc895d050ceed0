//! Fifty paths covering the unit square under a uniform target.

use stein_ergodic::costs::{CostSpec, EndpointSpec};
use stein_ergodic::domain::{measure_coefficients, ProjectionMap, TargetMeasure, Workspace};
use stein_ergodic::kernels::{Bandwidth, KernelConfig};
use stein_ergodic::spectral::SpectralBasis;
use stein_ergodic::svgd::{optimize, Prior, SolverConfig, TrajectoryObjective};

fn main() -> stein_ergodic::Result<()> {
    let basis = SpectralBasis::new(Workspace::unit(2), 8)?;
    let mu = measure_coefficients(&TargetMeasure::Uniform, &basis, 1000, 0)?;
    let map = ProjectionMap::identity(2);
    let (start, end) = ([0.1, 0.1], [0.9, 0.9]);
    let spec = CostSpec {
        boundary_weight: 0.1,
        smoothness_weight: 15.0,
        smoothness_mean: true,
        endpoints: Some(EndpointSpec {
            initial: Some(start.to_vec()),
            terminal: Some(end.to_vec()),
            initial_weight: 0.1,
            terminal_weight: 0.1,
            space: Default::default(),
        }),
        ..CostSpec::default()
    };
    let steps = 100;
    let objective = TrajectoryObjective {
        spec: &spec,
        basis: &basis,
        map: &map,
        mu: &mu,
        obstacles: &[],
        steps,
        dt: 0.1,
    };
    let prior = Prior::interpolate(&start, &end, steps, 0.01)?;
    let solver = SolverConfig {
        max_iterations: 1500,
        prior_score_weight: 0.0,
        ..SolverConfig::default()
    };
    let kernel = KernelConfig::rbf(Bandwidth::MedianHeuristic);
    let t0 = std::time::Instant::now();
    let out = optimize(
        &objective,
        &prior,
        prior.sample(50, solver.seed)?,
        &kernel,
        &solver,
    )?;
    let first = &out.records[0];
    let last = out.records.last().expect("at least one record");
    for rec in out.records.iter().step_by(250) {
        println!(
            "iter {:5}  mean loss {:.5}  det(K) {:.4}  max |phi| {:.3e}",
            rec.iteration,
            rec.mean_erg_loss,
            rec.det_k.unwrap_or(f64::NAN),
            rec.max_dir_norm
        );
    }
    println!(
        "iterations {}  loss {:.4} -> {:.4} (ratio {:.3})  best particle {}  {:.1}s",
        last.iteration,
        first.mean_erg_loss,
        last.mean_erg_loss,
        last.mean_erg_loss / first.mean_erg_loss,
        out.best,
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}
