#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stein_ergodic::costs::{
    boundary_penalty, obstacle_penalty, smoothness_penalty, total_cost, Constraint, CostContext,
    CostSpec, EndpointSpec, Obstacle, PenaltySpace, StateQuadratic,
};
use stein_ergodic::domain::{MeasureSpectrum, ProjectionMap, Workspace};
use stein_ergodic::dynamics::{DynamicsModel, ModelKind};
use stein_ergodic::kernels::{Kernel, KernelKind};
use stein_ergodic::spectral::{SpectralBasis, Trajectory};
use stein_ergodic::svgd::Prior;

pub const CASES: usize = 100;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(lo..hi))
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_diff(f: &dyn Fn(&Array1<f64>) -> f64, x: &Array1<f64>, h: f64) -> Array1<f64> {
    let mut g = Array1::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let fp = f(&xp);
        xp[i] = orig - h;
        let fm = f(&xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// `|a - b| / max(|b|, 1e-6)` in the Euclidean norm.
pub fn rel_err(analytic: ArrayView1<f64>, numeric: ArrayView1<f64>) -> f64 {
    let diff = (&analytic - &numeric).mapv(|x| x * x).sum().sqrt();
    let scale = numeric.mapv(|x| x * x).sum().sqrt().max(1e-6);
    diff / scale
}

fn flat(a: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(a.iter().copied())
}

fn unflat(x: &Array1<f64>, cols: usize) -> Array2<f64> {
    Array2::from_shape_vec((x.len() / cols, cols), x.to_vec()).expect("rectangular")
}

/// Outcome of one gradient family: number of cases and worst relative error.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub name: &'static str,
    pub cases: usize,
    pub worst: f64,
    pub tolerance: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.cases >= CASES && self.worst <= self.tolerance
    }
}

fn run(
    name: &'static str,
    tolerance: f64,
    seed: u64,
    mut case: impl FnMut(&mut ChaCha8Rng) -> f64,
) -> GradCheck {
    let mut r = rng(seed);
    let worst = (0..CASES).map(|_| case(&mut r)).fold(0.0, f64::max);
    GradCheck {
        name,
        cases: CASES,
        worst,
        tolerance,
    }
}

pub fn random_basis(r: &mut ChaCha8Rng) -> SpectralBasis {
    let v = r.gen_range(1..=3);
    let lengths: Vec<f64> = (0..v).map(|_| r.gen_range(0.5..3.0)).collect();
    let k_max = if v == 3 {
        r.gen_range(2..=4)
    } else {
        r.gen_range(2..=6)
    };
    SpectralBasis::new(Workspace::new(lengths).unwrap(), k_max).unwrap()
}

pub fn random_mu(r: &mut ChaCha8Rng, basis: &SpectralBasis) -> MeasureSpectrum {
    MeasureSpectrum {
        coefficients: (0..basis.len()).map(|_| r.gen_range(-0.5..0.5)).collect(),
    }
}

fn random_path_in(r: &mut ChaCha8Rng, ws: &Workspace, steps: usize, spill: f64) -> Array2<f64> {
    Array2::from_shape_fn((steps, ws.dim()), |(_, i)| {
        let l = ws.lengths()[i];
        r.gen_range(-spill * l..(1.0 + spill) * l)
    })
}

pub fn check_basis_functions() -> GradCheck {
    run("basis function F_k", 1e-5, 1, |r| {
        let basis = random_basis(r);
        let k = r.gen_range(1..basis.len());
        let w = Array1::from_iter(
            basis
                .workspace()
                .lengths()
                .iter()
                .map(|l| r.gen_range(0.0..*l)),
        );
        let (_, g) = basis.basis_eval_grad(k, w.view());
        let f = |x: &Array1<f64>| basis.basis_eval_grad(k, x.view()).0;
        rel_err(Array1::from(g).view(), central_diff(&f, &w, 1e-6).view())
    })
}

pub fn check_ergodic_cost() -> GradCheck {
    run("ergodic cost", 1e-5, 2, |r| {
        let basis = random_basis(r);
        let mu = random_mu(r, &basis);
        let steps = r.gen_range(2..12);
        let path = random_path_in(r, basis.workspace(), steps, 0.0);
        let v = basis.dim();
        let (_, g) = basis.ergodic_cost_workspace_grad(path.view(), &mu).unwrap();
        let f = |x: &Array1<f64>| {
            basis
                .ergodic_cost_workspace_grad(unflat(x, v).view(), &mu)
                .unwrap()
                .0
        };
        rel_err(flat(&g).view(), central_diff(&f, &flat(&path), 1e-6).view())
    })
}

pub fn check_boundary() -> GradCheck {
    run("boundary penalty", 1e-5, 3, |r| {
        let ws = Workspace::new(vec![r.gen_range(0.5..2.0), r.gen_range(0.5..2.0)]).unwrap();
        let steps = r.gen_range(2..10);
        let path = random_path_in(r, &ws, steps, 0.3);
        let (_, g) = boundary_penalty(path.view(), &ws).unwrap();
        let f = |x: &Array1<f64>| boundary_penalty(unflat(x, 2).view(), &ws).unwrap().0;
        rel_err(flat(&g).view(), central_diff(&f, &flat(&path), 1e-6).view())
    })
}

pub fn check_obstacle() -> GradCheck {
    run("obstacle penalty", 1e-5, 4, |r| {
        let obstacles: Vec<Obstacle> = (0..r.gen_range(1..4))
            .map(|_| {
                Obstacle::new(
                    vec![r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)],
                    r.gen_range(0.2..0.5),
                )
                .unwrap()
            })
            .collect();
        let steps = r.gen_range(2..10);
        let path = uniform_matrix(r, steps, 2, 0.0, 1.0);
        let (_, g) = obstacle_penalty(path.view(), &obstacles).unwrap();
        let f = |x: &Array1<f64>| obstacle_penalty(unflat(x, 2).view(), &obstacles).unwrap().0;
        rel_err(flat(&g).view(), central_diff(&f, &flat(&path), 1e-6).view())
    })
}

pub fn check_smoothness() -> GradCheck {
    run("smoothness penalty", 1e-5, 5, |r| {
        let w = r.gen_range(0.001..20.0);
        let (steps, dim) = (r.gen_range(2..12), r.gen_range(1..4));
        let path = uniform_matrix(r, steps, dim, -1.0, 1.0);
        let cols = path.ncols();
        let (_, g) = smoothness_penalty(path.view(), w).unwrap();
        let f = |x: &Array1<f64>| smoothness_penalty(unflat(x, cols).view(), w).unwrap().0;
        rel_err(flat(&g).view(), central_diff(&f, &flat(&path), 1e-6).view())
    })
}

struct Fixture {
    basis: SpectralBasis,
    map: ProjectionMap,
    mu: MeasureSpectrum,
    obstacles: Vec<Obstacle>,
}

fn fixture(r: &mut ChaCha8Rng, state_dim: usize, indices: &[usize]) -> Fixture {
    let v = indices.len();
    let basis = SpectralBasis::new(Workspace::unit(v), r.gen_range(2..=4)).unwrap();
    let mu = random_mu(r, &basis);
    let obstacles = (0..2)
        .map(|_| {
            Obstacle::new(
                (0..v).map(|_| r.gen_range(0.2..0.8)).collect(),
                r.gen_range(0.1..0.3),
            )
            .unwrap()
        })
        .collect();
    Fixture {
        map: ProjectionMap::select(state_dim, indices).unwrap(),
        basis,
        mu,
        obstacles,
    }
}

/// Only the listed term is switched on.
fn single_term_spec(term: &str, r: &mut ChaCha8Rng, n: usize, steps: usize) -> CostSpec {
    let mut spec = CostSpec::default();
    match term {
        "endpoint" => {
            spec.endpoints = Some(EndpointSpec {
                initial: Some((0..n).map(|_| r.gen_range(0.0..1.0)).collect()),
                terminal: Some((0..n).map(|_| r.gen_range(0.0..1.0)).collect()),
                initial_weight: r.gen_range(0.05..1.0),
                terminal_weight: r.gen_range(0.05..1.0),
                space: PenaltySpace::State,
            })
        }
        "state quadratic" => spec.state_quadratic.push(StateQuadratic {
            component: r.gen_range(0..n),
            target: r.gen_range(0.0..1.0),
            weight: r.gen_range(0.1..2.0),
        }),
        "pin" => spec.constraints.push(Constraint::Pin {
            step: r.gen_range(0..steps),
            components: vec![0, n - 1],
            values: vec![r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)],
            weight: r.gen_range(0.1..5.0),
        }),
        "speed limit" => spec.constraints.push(Constraint::SpeedLimit {
            max_speed: r.gen_range(0.5..2.0),
            weight: r.gen_range(0.1..2.0),
        }),
        "state bounds" => spec.constraints.push(Constraint::StateBounds {
            component: r.gen_range(0..n),
            lower: r.gen_range(0.2..0.4),
            upper: r.gen_range(0.6..0.8),
            weight: r.gen_range(0.1..2.0),
        }),
        _ => unreachable!("unknown term {term}"),
    }
    spec
}

fn path_cost_case(
    r: &mut ChaCha8Rng,
    spec: &CostSpec,
    fx: &Fixture,
    steps: usize,
    n: usize,
    subtract_ergodic: bool,
) -> f64 {
    let dt = 0.1;
    let states = uniform_matrix(r, steps, n, 0.0, 1.0);
    let ctx = CostContext {
        basis: &fx.basis,
        map: &fx.map,
        mu: &fx.mu,
        obstacles: &fx.obstacles,
        controls: None,
        history: None,
    };
    let value = |s: &Array2<f64>| {
        let e = total_cost(spec, &Trajectory::new(s.clone(), dt).unwrap(), &ctx).unwrap();
        if subtract_ergodic {
            e.value - e.terms.ergodic
        } else {
            e.value
        }
    };
    let eval = total_cost(spec, &Trajectory::new(states.clone(), dt).unwrap(), &ctx).unwrap();
    let mut g = eval.state_grad.clone();
    if subtract_ergodic {
        let erg = fx
            .basis
            .ergodic_cost_grad(
                &Trajectory::new(states.clone(), dt).unwrap(),
                &fx.map,
                &fx.mu,
            )
            .unwrap();
        g -= &erg;
    }
    let f = |x: &Array1<f64>| value(&unflat(x, n));
    rel_err(
        flat(&g).view(),
        central_diff(&f, &flat(&states), 1e-6).view(),
    )
}

pub fn check_cost_term(term: &'static str, seed: u64) -> GradCheck {
    run(term, 1e-5, seed, |r| {
        let n = 3;
        let steps = r.gen_range(3..10);
        let fx = fixture(r, n, &[0, 1]);
        let spec = single_term_spec(term, r, n, steps);
        path_cost_case(r, &spec, &fx, steps, n, true)
    })
}

pub fn check_control_effort() -> GradCheck {
    run("control effort", 1e-5, 11, |r| {
        let w = r.gen_range(0.001..1.0);
        let steps = r.gen_range(2..10);
        let u = uniform_matrix(r, steps, 2, -1.0, 1.0);
        let basis = SpectralBasis::new(Workspace::unit(2), 2).unwrap();
        let mu = random_mu(r, &basis);
        let map = ProjectionMap::identity(2);
        let spec = CostSpec {
            control_weight: w,
            ..CostSpec::default()
        };
        let path = Trajectory::new(Array2::from_elem((3, 2), 0.5), 0.1).unwrap();
        let eval_at = |u: &Array2<f64>| {
            let ctx = CostContext {
                basis: &basis,
                map: &map,
                mu: &mu,
                obstacles: &[],
                controls: Some(u.view()),
                history: None,
            };
            total_cost(&spec, &path, &ctx).unwrap()
        };
        let g = eval_at(&u).control_grad.unwrap();
        let f = |x: &Array1<f64>| eval_at(&unflat(x, 2)).terms.control;
        rel_err(flat(&g).view(), central_diff(&f, &flat(&u), 1e-6).view())
    })
}

pub fn check_total_cost() -> GradCheck {
    run("total cost", 1e-5, 12, |r| {
        let n = 3;
        let steps = r.gen_range(3..10);
        let fx = fixture(r, n, &[0, 2]);
        let spec = CostSpec {
            boundary_weight: r.gen_range(0.0..1.0),
            smoothness_weight: r.gen_range(0.0..15.0),
            smoothness_mean: r.gen_bool(0.5),
            smoothness_space: if r.gen_bool(0.5) {
                PenaltySpace::State
            } else {
                PenaltySpace::Workspace
            },
            endpoints: Some(EndpointSpec {
                initial: Some(vec![0.1, 0.1]),
                terminal: Some(vec![0.9, 0.9]),
                initial_weight: 0.1,
                terminal_weight: 0.1,
                space: PenaltySpace::Workspace,
            }),
            obstacle_weight: r.gen_range(0.0..10.0),
            state_quadratic: vec![StateQuadratic {
                component: 1,
                target: 0.5,
                weight: 0.3,
            }],
            constraints: vec![
                Constraint::SpeedLimit {
                    max_speed: 1.0,
                    weight: 0.01,
                },
                Constraint::StateBounds {
                    component: 0,
                    lower: 0.3,
                    upper: 0.7,
                    weight: 0.2,
                },
            ],
            ..CostSpec::default()
        };
        path_cost_case(r, &spec, &fx, steps, n, false)
    })
}

pub fn check_kernel(kind_name: &'static str, seed: u64) -> GradCheck {
    run(kind_name, 1e-5, seed, |r| {
        let d = r.gen_range(1..4);
        let steps = r.gen_range(2..8);
        let kind = match kind_name {
            "rbf kernel" => KernelKind::Rbf,
            _ => KernelKind::Markov {
                graph: (0..r.gen_range(0..4))
                    .map(|_| (r.gen_range(0..steps), r.gen_range(0..steps)))
                    .collect(),
                normalize: r.gen_bool(0.5),
            },
        };
        let len = d * steps;
        let a = Array1::from_iter((0..len).map(|_| r.gen_range(0.0..1.0)));
        let b = Array1::from_iter(a.iter().map(|x| x + r.gen_range(-0.3..0.3)));
        let h = r.gen_range(0.05..2.0);
        let k = Kernel::new(kind, h, d).unwrap();
        let (_, g) = k.eval_grad(a.view(), b.view()).unwrap();
        let f = |x: &Array1<f64>| k.eval_grad(x.view(), b.view()).unwrap().0;
        rel_err(g.view(), central_diff(&f, &a, 1e-6).view())
    })
}

pub fn check_log_prior() -> GradCheck {
    run("log prior", 1e-5, 15, |r| {
        let steps = r.gen_range(2..10);
        let p =
            Prior::interpolate(&[0.1, 0.2], &[0.9, 0.7], steps, r.gen_range(0.005..1.0)).unwrap();
        let x = Array1::from_iter(p.mean.iter().map(|m| m + r.gen_range(-0.3..0.3)));
        let g = p.log_prior_grad(x.view()).unwrap();
        let f = |y: &Array1<f64>| p.log_density(y.view()).unwrap();
        rel_err(g.view(), central_diff(&f, &x, 1e-6).view())
    })
}

pub fn model_for(name: &str) -> (DynamicsModel, Vec<usize>) {
    match name {
        "single integrator" => (
            DynamicsModel::new(ModelKind::SingleIntegrator { dim: 2 }, 0.1).unwrap(),
            vec![0, 1],
        ),
        "dubins car" => (
            DynamicsModel::new(ModelKind::DubinsCar { speed: 0.5 }, 0.1).unwrap(),
            vec![0, 1],
        ),
        _ => (
            DynamicsModel::new(ModelKind::Aircraft, 0.1).unwrap(),
            vec![0, 1, 2],
        ),
    }
}

pub fn random_x0(r: &mut ChaCha8Rng, model: &DynamicsModel) -> Array1<f64> {
    match model.kind {
        ModelKind::SingleIntegrator { dim } => {
            Array1::from_iter((0..dim).map(|_| r.gen_range(0.3..0.7)))
        }
        ModelKind::DubinsCar { .. } => ndarray::array![
            r.gen_range(0.3..0.7),
            r.gen_range(0.3..0.7),
            r.gen_range(-3.0..3.0)
        ],
        ModelKind::Aircraft => ndarray::array![
            r.gen_range(0.3..0.7),
            r.gen_range(0.3..0.7),
            r.gen_range(0.3..0.7),
            r.gen_range(-3.0..3.0),
            r.gen_range(-0.5..0.5),
            r.gen_range(0.2..1.0)
        ],
    }
}

/// Total cost through a rollout versus the adjoint gradient.
pub fn check_adjoint(name: &'static str, seed: u64) -> GradCheck {
    run(name, 1e-4, seed, |r| {
        let (model, indices) = model_for(name);
        let n = model.state_dim();
        let m = model.control_dim();
        let fx = fixture(r, n, &indices);
        let spec = CostSpec {
            boundary_weight: 1.0,
            smoothness_weight: 0.01,
            control_weight: 0.01,
            obstacle_weight: 10.0,
            ..CostSpec::default()
        };
        let x0 = random_x0(r, &model);
        let steps = r.gen_range(2..15);
        // Strictly inside the bounds, away from the clamp kinks.
        let u = uniform_matrix(r, steps, m, -0.95, 0.95);
        let cost_of = |u: &Array2<f64>| {
            let traj = model.rollout(x0.view(), u.view()).unwrap();
            let ctx = CostContext {
                basis: &fx.basis,
                map: &fx.map,
                mu: &fx.mu,
                obstacles: &fx.obstacles,
                controls: Some(u.view()),
                history: None,
            };
            (total_cost(&spec, &traj, &ctx).unwrap(), traj)
        };
        let (eval, traj) = cost_of(&u);
        let g = model
            .control_gradient_on(
                &traj,
                u.view(),
                eval.state_grad.view(),
                eval.control_grad.as_ref().map(|c| c.view()),
            )
            .unwrap();
        let f = |x: &Array1<f64>| cost_of(&unflat(x, m)).0.value;
        rel_err(flat(&g).view(), central_diff(&f, &flat(&u), 1e-5).view())
    })
}

/// Every gradient family the solver relies on.
pub fn gradient_suite() -> Vec<GradCheck> {
    vec![
        check_basis_functions(),
        check_ergodic_cost(),
        check_boundary(),
        check_obstacle(),
        check_smoothness(),
        check_cost_term("endpoint", 6),
        check_cost_term("state quadratic", 7),
        check_cost_term("pin", 8),
        check_cost_term("speed limit", 9),
        check_cost_term("state bounds", 10),
        check_control_effort(),
        check_total_cost(),
        check_kernel("rbf kernel", 13),
        check_kernel("markov kernel", 14),
        check_log_prior(),
        check_adjoint("single integrator", 16),
        check_adjoint("dubins car", 17),
        check_adjoint("aircraft", 18),
    ]
}
