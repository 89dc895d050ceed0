//! Ten seconds of receding-horizon coverage over four Gaussian peaks while
//! ten obstacles drift through the square.

use ndarray::array;
use stein_ergodic::costs::CostSpec;
use stein_ergodic::domain::{measure_coefficients, ProjectionMap, TargetMeasure, Workspace};
use stein_ergodic::dynamics::{DynamicsModel, ModelKind};
use stein_ergodic::kernels::{Bandwidth, KernelConfig};
use stein_ergodic::mpc::{run_receding_horizon, MpcScenario, ShiftFill};
use stein_ergodic::sim::{coverage_metrics, spawn_obstacles, Exclusion, ObstacleField};
use stein_ergodic::spectral::SpectralBasis;
use stein_ergodic::svgd::{Prior, SolverConfig};

fn main() -> stein_ergodic::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
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
    let mu = measure_coefficients(&measure, &basis, 10_000, seed)?;
    let x0 = array![0.5, 0.5];
    let exclusion = Exclusion {
        point: x0.to_vec(),
        margin: 0.05,
    };
    let obstacles = spawn_obstacles(&ws, 10, (0.05, 0.05), seed, Some(&exclusion))?;
    let model = DynamicsModel::new(ModelKind::SingleIntegrator { dim: 2 }, 0.1)?;
    let scenario = MpcScenario {
        spec: CostSpec {
            boundary_weight: 1.0,
            control_weight: 0.01,
            smoothness_weight: 0.001,
            obstacle_weight: 100.0,
            ..CostSpec::default()
        },
        basis,
        map: ProjectionMap::identity(2),
        mu,
        model,
        kernel: KernelConfig::rbf(Bandwidth::MedianHeuristic),
        prior: Prior::zeros(20, 2, 0.01)?,
        particles: 20,
        field: ObstacleField::new(obstacles, 0.01, 0.1, ws)?,
        obstacle_margin: 0.02,
        shift_fill: ShiftFill::Duplicate,
        dump_plans: false,
        plan_with_history: true,
    };
    let solver = SolverConfig {
        max_iterations: 100,
        tolerance: 1e-2,
        prior_score_weight: 0.0,
        track_diversity: false,
        ..SolverConfig::default()
    };
    let t0 = std::time::Instant::now();
    let log = run_receding_horizon(&scenario, x0.view(), 10.0, &solver, seed)?;
    let summary = coverage_metrics(&log, &measure, &scenario.basis, &scenario.mu)?;
    let at = |s: f64| {
        log.cycles
            .iter()
            .find(|c| (c.time - s).abs() < 1e-9)
            .map(|c| c.executed_erg_loss)
    };
    println!("seed {seed}: {:.1}s wall", t0.elapsed().as_secs_f64());
    println!(
        "executed ergodic loss at 1s {:?}, at 10s {:?}",
        at(1.0),
        at(10.0)
    );
    println!("peak visits {:?}", summary.peak_visits);
    println!("min clearance {:.4}", summary.min_clearance);
    Ok(())
}
