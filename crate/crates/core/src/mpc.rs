//! Receding-horizon ergodic control with control-space Stein updates.

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costs::{total_cost, CostContext, CostSpec, Obstacle};
use crate::domain::{MeasureSpectrum, ProjectionMap};
use crate::dynamics::DynamicsModel;
use crate::error::{check_dim, invalid, Error, Result};
use crate::kernels::KernelConfig;
use crate::sim::{point_clearance, CycleRecord, ObstacleField, RunLog};
use crate::spectral::{CoefficientSums, SpectralBasis};
use crate::svgd::{
    flatten, optimize, Ensemble, OptimizeOutcome, ParticleEval, ParticleObjective, Prior,
    SolverConfig,
};

/// Control-space objective: a particle is a flattened `T x m` control
/// sequence rolled out from a fixed initial state. Kernel features are the
/// controls themselves.
#[derive(Clone, Debug)]
pub struct ControlObjective<'a> {
    pub spec: &'a CostSpec,
    pub basis: &'a SpectralBasis,
    pub map: &'a ProjectionMap,
    pub mu: &'a MeasureSpectrum,
    pub obstacles: &'a [Obstacle],
    pub model: &'a DynamicsModel,
    pub x0: ArrayView1<'a, f64>,
    pub horizon: usize,
    pub history: Option<&'a CoefficientSums>,
}

impl ControlObjective<'_> {
    fn controls(&self, particle: ArrayView1<f64>) -> Result<Array2<f64>> {
        let m = self.model.control_dim();
        check_dim("control particle length", self.horizon * m, particle.len())?;
        Ok(particle
            .to_owned()
            .into_shape_with_order((self.horizon, m))
            .expect("length checked"))
    }

    /// States of the rollout of one control particle, `T+1` rows.
    pub fn planned_states(&self, particle: ArrayView1<f64>) -> Result<Array2<f64>> {
        let u = self.controls(particle)?;
        Ok(self.model.rollout(self.x0, u.view())?.states)
    }

    /// Workspace path of the rollout of one control particle.
    pub fn planned_path(&self, particle: ArrayView1<f64>) -> Result<Array2<f64>> {
        self.map.project_path(self.planned_states(particle)?.view())
    }
}

impl ParticleObjective for ControlObjective<'_> {
    fn evaluate(&self, particle: ArrayView1<f64>) -> Result<ParticleEval> {
        let u = self.controls(particle)?;
        let traj = self.model.rollout(self.x0, u.view())?;
        let ctx = CostContext {
            basis: self.basis,
            map: self.map,
            mu: self.mu,
            obstacles: self.obstacles,
            controls: Some(u.view()),
            history: self.history,
        };
        let eval = total_cost(self.spec, &traj, &ctx)?;
        let grad = self.model.control_gradient_on(
            &traj,
            u.view(),
            eval.state_grad.view(),
            eval.control_grad.as_ref().map(|g| g.view()),
        )?;
        Ok(ParticleEval {
            total: eval.value,
            ergodic: eval.terms.ergodic,
            grad: flatten(grad),
            features: particle.to_owned(),
        })
    }

    fn feature_point_dim(&self) -> usize {
        self.model.control_dim()
    }

    fn pull_back_features(
        &self,
        _particle: ArrayView1<f64>,
        feature_grad: ArrayView1<f64>,
    ) -> Result<Array1<f64>> {
        Ok(feature_grad.to_owned())
    }

    fn project(&self, particle: &mut [f64]) {
        let m = self.model.control_dim();
        for u in particle.chunks_exact_mut(m) {
            for ((x, lo), hi) in u
                .iter_mut()
                .zip(&self.model.control_min)
                .zip(&self.model.control_max)
            {
                *x = x.clamp(*lo, *hi);
            }
        }
    }
}

/// How the vacated last slot is filled after shifting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftFill {
    #[default]
    Duplicate,
    Zero,
}

/// `u_{0..T-2} <- u_{1..T-1}` for every particle.
pub fn shift_warm_start(ensemble: &mut Ensemble, fill: ShiftFill) -> Result<()> {
    let (steps, m) = (ensemble.steps, ensemble.point_dim);
    if steps < 2 {
        return Err(invalid("warm-start shift needs a horizon of at least 2"));
    }
    for mut row in ensemble.particles.rows_mut() {
        let s = row.as_slice_mut().expect("standard layout");
        s.copy_within(m.., 0);
        let last = (steps - 1) * m;
        match fill {
            ShiftFill::Duplicate => s.copy_within(last - m..last, last),
            ShiftFill::Zero => s[last..].fill(0.0),
        }
    }
    ensemble.costs.clear();
    Ok(())
}

/// Robot and planner state carried between cycles.
#[derive(Clone, Debug, PartialEq)]
pub struct MpcState {
    pub controls: Ensemble,
    pub x0: Array1<f64>,
    pub horizon: usize,
    pub time: f64,
    pub cycle: usize,
}

/// Static parts of a receding-horizon problem.
#[derive(Clone, Debug)]
pub struct MpcScenario {
    pub spec: CostSpec,
    pub basis: SpectralBasis,
    pub map: ProjectionMap,
    pub mu: MeasureSpectrum,
    pub model: DynamicsModel,
    pub kernel: KernelConfig,
    pub prior: Prior,
    pub particles: usize,
    pub field: ObstacleField,
    /// Added to every observed obstacle radius.
    pub obstacle_margin: f64,
    pub shift_fill: ShiftFill,
    pub dump_plans: bool,
    /// Average the planned path together with the executed one.
    pub plan_with_history: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleOutcome {
    pub applied: Array1<f64>,
    pub selected: usize,
    pub solve: OptimizeOutcome,
    pub plans: Option<Vec<Array2<f64>>>,
}

fn with_cycle(e: Error, cycle: usize) -> Error {
    match e {
        Error::Diverged {
            iteration, reason, ..
        } => Error::Diverged {
            iteration,
            cycle: Some(cycle),
            reason,
        },
        other => other,
    }
}

/// One planning cycle: Stein iterations on the control ensemble from the
/// current state, then the first control of the best particle.
pub fn mpc_cycle(
    state: &mut MpcState,
    scenario: &MpcScenario,
    obstacles: &[Obstacle],
    history: Option<&CoefficientSums>,
    solver: &SolverConfig,
) -> Result<CycleOutcome> {
    let objective = ControlObjective {
        spec: &scenario.spec,
        basis: &scenario.basis,
        map: &scenario.map,
        mu: &scenario.mu,
        obstacles,
        model: &scenario.model,
        x0: state.x0.view(),
        horizon: state.horizon,
        history,
    };
    let mut init = state.controls.clone();
    init.iteration = 0;
    let solve = optimize(&objective, &scenario.prior, init, &scenario.kernel, solver)
        .map_err(|e| with_cycle(e, state.cycle))?;
    let selected = solve.best;
    let m = scenario.model.control_dim();
    let applied = scenario.model.clamp(
        solve
            .ensemble
            .particles
            .row(selected)
            .slice(ndarray::s![..m]),
    );
    let plans = if scenario.dump_plans {
        Some(
            solve
                .ensemble
                .particles
                .rows()
                .into_iter()
                .map(|p| objective.planned_states(p))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    state.controls = solve.ensemble.clone();
    Ok(CycleOutcome {
        applied,
        selected,
        solve,
        plans,
    })
}

/// Executes `duration_s` seconds of replanning at the model rate.
pub fn run_receding_horizon(
    scenario: &MpcScenario,
    x0: ArrayView1<f64>,
    duration_s: f64,
    solver: &SolverConfig,
    seed: u64,
) -> Result<RunLog> {
    let dt = scenario.model.dt;
    let cycles = (duration_s / dt).round();
    if !(cycles >= 1.0) || ((cycles * dt) - duration_s).abs() > 1e-9 * duration_s.max(1.0) {
        return Err(invalid(format!(
            "duration {duration_s} is not a positive multiple of dt {dt}"
        )));
    }
    let cycles = cycles as usize;
    check_dim("initial state", scenario.model.state_dim(), x0.len())?;
    let horizon = scenario.prior.steps();
    check_dim(
        "prior point dimension",
        scenario.model.control_dim(),
        scenario.prior.point_dim(),
    )?;
    let mut controls = scenario.prior.sample(scenario.particles, seed)?;
    for mut row in controls.particles.rows_mut() {
        let s = row.as_slice_mut().expect("standard layout");
        for u in s.chunks_exact_mut(scenario.model.control_dim()) {
            let c = scenario.model.clamp(ArrayView1::from(&*u));
            u.copy_from_slice(c.as_slice().expect("contiguous"));
        }
    }
    let mut state = MpcState {
        controls,
        x0: x0.to_owned(),
        horizon,
        time: 0.0,
        cycle: 0,
    };
    let mut field = scenario.field.clone();
    let mut world_rng = ChaCha8Rng::seed_from_u64(seed);
    world_rng.set_stream(u64::MAX);
    let solver = SolverConfig {
        seed,
        ..solver.clone()
    };
    let mut executed = vec![x0.to_owned()];
    let mut log = RunLog {
        mode: "mpc".into(),
        seed,
        ..RunLog::default()
    };
    for c in 0..cycles {
        state.cycle = c;
        let observed = field.observe(scenario.obstacle_margin);
        // The current state starts the planned rollout, so history ends before it.
        let history = if scenario.plan_with_history && executed.len() > 1 {
            let past = executed_workspace(&executed[..executed.len() - 1], scenario)?;
            Some(scenario.basis.coefficient_sums(past.view())?)
        } else {
            None
        };
        let out = match mpc_cycle(&mut state, scenario, &observed, history.as_ref(), &solver) {
            Ok(o) => o,
            Err(e) => {
                log.partial = true;
                log.error = Some(e.to_string());
                finish_log(&mut log, &executed, scenario)?;
                return Err(e);
            }
        };
        let next = scenario.model.step(state.x0.view(), out.applied.view())?;
        field.step(&mut world_rng);
        executed.push(next.clone());
        state.x0 = next;
        state.time += dt;
        shift_warm_start(&mut state.controls, scenario.shift_fill)?;

        let ws = executed_workspace(&executed, scenario)?;
        let q = scenario.basis.trajectory_coefficients(ws.view())?;
        let executed_erg_loss = scenario.basis.ergodic_cost(&q, &scenario.mu)?;
        let robot = scenario.map.project(state.x0.view())?;
        let last = out
            .solve
            .records
            .last()
            .expect("optimize records every iteration");
        log.cycles.push(CycleRecord {
            cycle: c,
            time: state.time,
            state: state.x0.to_vec(),
            applied_control: out.applied.to_vec(),
            selected: out.selected,
            particle_costs: out.solve.ensemble.costs.clone(),
            iterations: last.iteration,
            converged: out.solve.converged,
            mean_erg_loss: last.mean_erg_loss,
            std_erg_loss: last.std_erg_loss,
            mean_total_cost: last.mean_total_cost,
            det_k: last.det_k,
            max_dir_norm: last.max_dir_norm,
            wall_ms: out.solve.records.iter().map(|r| r.wall_ms).sum(),
            executed_erg_loss,
            min_clearance: point_clearance(&robot, &field.obstacles),
            obstacle_centers: field.obstacles.iter().map(|o| o.center.clone()).collect(),
            plans: out.plans,
        });
    }
    finish_log(&mut log, &executed, scenario)?;
    Ok(log)
}

fn executed_workspace(executed: &[Array1<f64>], scenario: &MpcScenario) -> Result<Array2<f64>> {
    let states = stack_states(executed, scenario.model.state_dim());
    scenario.map.project_path(states.view())
}

fn stack_states(executed: &[Array1<f64>], n: usize) -> Array2<f64> {
    let mut states = Array2::zeros((executed.len(), n));
    for (mut row, x) in states.rows_mut().into_iter().zip(executed) {
        row.assign(x);
    }
    states
}

fn finish_log(log: &mut RunLog, executed: &[Array1<f64>], scenario: &MpcScenario) -> Result<()> {
    log.executed_states = Some(stack_states(executed, scenario.model.state_dim()));
    log.executed_workspace = Some(executed_workspace(executed, scenario)?);
    Ok(())
}
