mod common;

use std::path::Path;

use ndarray::{array, Array2};
use stein_ergodic::config::load_config;
use stein_ergodic::costs::{
    boundary_penalty, min_clearance, obstacle_penalty, smoothness_penalty, total_cost, CostContext,
    Obstacle,
};
use stein_ergodic::domain::Workspace;
use stein_ergodic::spectral::Trajectory;

#[test]
fn boundary_examples() {
    let ws = Workspace::unit(2);
    let inside = array![[0.5, 0.5], [0.0, 1.0]];
    let (v, g) = boundary_penalty(inside.view(), &ws).unwrap();
    assert_eq!(v, 0.0);
    assert!(g.iter().all(|x| *x == 0.0));

    let outside = array![[-0.1, 0.5], [0.5, 1.2]];
    let (v, g) = boundary_penalty(outside.view(), &ws).unwrap();
    assert!((v - 0.05).abs() < 1e-15);
    assert!((g[[0, 0]] + 0.2).abs() < 1e-15 && (g[[1, 1]] - 0.4).abs() < 1e-14);
}

#[test]
fn obstacle_examples() {
    let obs = [Obstacle::new(vec![0.5, 0.5], 0.2).unwrap()];
    let path = array![[0.5, 0.6], [0.9, 0.9]];
    let (v, g) = obstacle_penalty(path.view(), &obs).unwrap();
    assert!((v - 0.01).abs() < 1e-15);
    assert!((g[[0, 1]] + 0.2).abs() < 1e-14 && g[[0, 0]].abs() < 1e-15);
    assert_eq!(g.row(1).to_vec(), vec![0.0, 0.0]);
    assert!((min_clearance(path.view(), &obs) + 0.1).abs() < 1e-14);
    assert_eq!(min_clearance(path.view(), &[]), f64::INFINITY);
}

#[test]
fn smoothness_examples() {
    let path = array![[0.0, 0.0], [0.1, 0.0], [0.1, 0.2]];
    let (v, g) = smoothness_penalty(path.view(), 2.0).unwrap();
    assert!((v - 2.0 * (0.01 + 0.04)).abs() < 1e-15);
    assert!((g.sum()).abs() < 1e-15);
    let (v, _) = smoothness_penalty(Array2::from_elem((5, 2), 0.3).view(), 10.0).unwrap();
    assert_eq!(v, 0.0);
}

#[test]
fn convergence_scenario_terms_recomputed_by_hand() {
    let cfg = load_config(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/convergence.cfg"))
        .unwrap();
    let sc = cfg.build().unwrap();
    let steps = sc.prior.steps();
    let mut r = common::rng(21);
    let mut states = common::uniform_matrix(&mut r, steps, 2, -0.2, 1.2);
    states.row_mut(0).assign(&array![0.2, 0.05]);
    let path = Trajectory::new(states.clone(), cfg.dt).unwrap();
    let ctx = CostContext {
        basis: &sc.basis,
        map: &sc.map,
        mu: &sc.mu,
        obstacles: &sc.obstacles,
        controls: None,
        history: None,
    };
    let eval = total_cost(&cfg.cost, &path, &ctx).unwrap();

    let q = sc.basis.trajectory_coefficients(states.view()).unwrap();
    let ergodic = sc.basis.ergodic_cost(&q, &sc.mu).unwrap();
    let mut boundary = 0.0;
    for x in states.iter() {
        let d = if *x < 0.0 { -x } else { (x - 1.0).max(0.0) };
        boundary += d * d;
    }
    let mut smooth = 0.0;
    for t in 1..steps {
        smooth += (&states.row(t) - &states.row(t - 1)).mapv(|d| d * d).sum();
    }
    let e = cfg.cost.endpoints.as_ref().unwrap();
    let sq = |row: usize, target: &[f64]| -> f64 {
        target
            .iter()
            .enumerate()
            .map(|(i, x)| (states[[row, i]] - x).powi(2))
            .sum()
    };
    let endpoint = e.initial_weight * sq(0, e.initial.as_ref().unwrap())
        + e.terminal_weight * sq(steps - 1, e.terminal.as_ref().unwrap());

    let t = &eval.terms;
    assert!((t.ergodic - ergodic).abs() < 1e-12);
    assert!((t.boundary - cfg.cost.boundary_weight * boundary).abs() < 1e-12);
    assert!(
        (t.smoothness - cfg.cost.smoothness_weight * smooth / (steps - 1) as f64).abs() < 1e-12
    );
    assert!((t.endpoint - endpoint).abs() < 1e-12);
    assert_eq!(t.obstacle, 0.0);
    assert!((eval.value - (ergodic + t.boundary + t.smoothness + t.endpoint)).abs() < 1e-12);
}
