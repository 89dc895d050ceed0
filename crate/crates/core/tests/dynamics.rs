use ndarray::{array, s, Array2};
use stein_ergodic::dynamics::{DynamicsModel, ModelKind};

fn single(dt: f64) -> DynamicsModel {
    DynamicsModel::new(ModelKind::SingleIntegrator { dim: 2 }, dt).unwrap()
}

#[test]
fn single_integrator_step() {
    let x = single(0.1)
        .step(array![0.5, 0.5].view(), array![1.0, -0.5].view())
        .unwrap();
    assert!((x[0] - 0.6).abs() < 1e-15 && (x[1] - 0.45).abs() < 1e-15);
}

#[test]
fn controls_are_clamped_to_bounds() {
    let m = DynamicsModel::with_bounds(
        ModelKind::SingleIntegrator { dim: 2 },
        0.1,
        vec![-1.0, -1.0],
        vec![1.0, 1.0],
    )
    .unwrap();
    let x = m
        .step(array![0.0, 0.0].view(), array![5.0, -3.0].view())
        .unwrap();
    assert!((x[0] - 0.1).abs() < 1e-15 && (x[1] + 0.1).abs() < 1e-15);
    let (_, b) = m
        .jacobians(array![0.0, 0.0].view(), array![5.0, 0.5].view())
        .unwrap();
    assert_eq!(b.column(0).to_vec(), vec![0.0, 0.0]);
    assert_eq!(b[[1, 1]], 0.1);
}

#[test]
fn dubins_heads_along_theta() {
    let m = DynamicsModel::new(ModelKind::DubinsCar { speed: 2.0 }, 0.5).unwrap();
    let x = m
        .step(
            array![0.0, 0.0, std::f64::consts::FRAC_PI_2].view(),
            array![0.4].view(),
        )
        .unwrap();
    assert!(
        x[0].abs() < 1e-15
            && (x[1] - 1.0).abs() < 1e-15
            && (x[2] - (std::f64::consts::FRAC_PI_2 + 0.2)).abs() < 1e-15
    );
}

#[test]
fn aircraft_level_flight() {
    let m = DynamicsModel::new(ModelKind::Aircraft, 0.1).unwrap();
    let x = m
        .step(
            array![0.0, 0.0, 1.0, 0.0, 0.0, 2.0].view(),
            array![0.0, 0.0, 0.0].view(),
        )
        .unwrap();
    let expected = [0.2, 0.0, 1.0, 0.0, 0.0, 2.0];
    for (a, b) in x.iter().zip(expected) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn rollout_suffix_restarts_from_intermediate_state() {
    let m = DynamicsModel::new(ModelKind::DubinsCar { speed: 0.5 }, 0.1).unwrap();
    let u = Array2::from_shape_fn((8, 1), |(t, _)| (t as f64 * 0.7).sin());
    let full = m.rollout(array![0.2, 0.3, 0.1].view(), u.view()).unwrap();
    assert_eq!(full.states.nrows(), 9);
    let tail = m.rollout(full.states.row(3), u.slice(s![3.., ..])).unwrap();
    for (a, b) in tail
        .states
        .iter()
        .zip(full.states.slice(s![3.., ..]).iter())
    {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn single_integrator_jacobians() {
    let (a, b) = single(0.1)
        .jacobians(array![0.3, 0.7].view(), array![0.2, 0.1].view())
        .unwrap();
    assert_eq!(a, Array2::<f64>::eye(2));
    assert_eq!(b, Array2::<f64>::eye(2) * 0.1);
}

#[test]
fn aircraft_speed_sensitivity() {
    let m = DynamicsModel::new(ModelKind::Aircraft, 0.1).unwrap();
    let (a, _) = m
        .jacobians(
            array![0.0, 0.0, 0.0, 0.0, 0.0, 1.0].view(),
            array![0.0, 0.0, 0.0].view(),
        )
        .unwrap();
    assert!((a[[0, 5]] - 0.1).abs() < 1e-15);
}

#[test]
fn adjoint_of_terminal_squared_norm() {
    let dt = 0.1;
    let m = single(dt);
    let u = array![[0.5, -0.2], [0.3, 0.4]];
    let traj = m.rollout(array![0.1, 0.2].view(), u.view()).unwrap();
    let x_t = traj.states.row(2).to_owned();
    let mut grads = Array2::zeros((3, 2));
    grads.row_mut(2).assign(&(&x_t * 2.0));
    let g = m
        .control_gradient(array![0.1, 0.2].view(), u.view(), grads.view(), None)
        .unwrap();
    for t in 0..2 {
        for i in 0..2 {
            assert!((g[[t, i]] - 2.0 * dt * x_t[i]).abs() < 1e-15);
        }
    }
}

#[test]
fn zero_partials_give_zero_gradient() {
    let m = DynamicsModel::new(ModelKind::Aircraft, 0.1).unwrap();
    let u = Array2::from_elem((5, 3), 0.2);
    let x0 = array![0.5, 0.5, 0.5, 0.3, 0.1, 0.6];
    let g = m
        .control_gradient(x0.view(), u.view(), Array2::zeros((6, 6)).view(), None)
        .unwrap();
    assert!(g.iter().all(|x| *x == 0.0));
}
