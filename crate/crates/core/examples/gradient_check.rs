//! Central-difference check of the ergodic gradient through aircraft dynamics.

use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stein_ergodic::costs::{total_cost, CostContext, CostSpec};
use stein_ergodic::domain::{measure_coefficients, ProjectionMap, TargetMeasure, Workspace};
use stein_ergodic::dynamics::{DynamicsModel, ModelKind};
use stein_ergodic::spectral::SpectralBasis;

fn main() -> stein_ergodic::Result<()> {
    let basis = SpectralBasis::new(Workspace::unit(3), 4)?;
    let measure =
        TargetMeasure::isotropic_mixture(vec![vec![0.3, 0.5, 0.5], vec![0.7, 0.5, 0.5]], 0.15)?;
    let mu = measure_coefficients(&measure, &basis, 20_000, 0)?;
    let map = ProjectionMap::select(6, &[0, 1, 2])?;
    let model = DynamicsModel::new(ModelKind::Aircraft, 0.1)?;
    let spec = CostSpec {
        boundary_weight: 1.0,
        control_weight: 0.01,
        ..CostSpec::default()
    };
    let x0 = array![0.2, 0.3, 0.5, 0.0, 0.0, 0.5];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = Array2::from_shape_fn((30, 3), |_| rng.gen_range(-0.5..0.5));

    let cost = |u: &Array2<f64>| -> stein_ergodic::Result<(f64, Array2<f64>)> {
        let traj = model.rollout(x0.view(), u.view())?;
        let ctx = CostContext {
            basis: &basis,
            map: &map,
            mu: &mu,
            obstacles: &[],
            controls: Some(u.view()),
            history: None,
        };
        let e = total_cost(&spec, &traj, &ctx)?;
        let g = model.control_gradient_on(
            &traj,
            u.view(),
            e.state_grad.view(),
            e.control_grad.as_ref().map(|c| c.view()),
        )?;
        Ok((e.value, g))
    };
    let (value, grad) = cost(&u)?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for t in 0..u.nrows() {
        for j in 0..3 {
            let (mut up, mut down) = (u.clone(), u.clone());
            up[[t, j]] += h;
            down[[t, j]] -= h;
            let fd = (cost(&up)?.0 - cost(&down)?.0) / (2.0 * h);
            worst = worst.max((fd - grad[[t, j]]).abs() / fd.abs().max(1e-6));
        }
    }
    println!(
        "cost {value:.6}, {} control gradients, worst relative error {worst:.2e}",
        u.len()
    );
    Ok(())
}
