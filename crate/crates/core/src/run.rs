//! Mode dispatch and output files for a parsed scenario.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};

use crate::config::{MeasureConfig, Mode, PriorConfig, Scenario, ScenarioConfig};
use crate::costs::Obstacle;
use crate::error::{invalid, Result};
use crate::mpc::{run_receding_horizon, ControlObjective, MpcScenario};
use crate::sim::{ObstacleField, RunLog, TimingSample};
use crate::svgd::{
    optimize, Ensemble, OptimizeOutcome, ParticleObjective, SolverConfig, TrajectoryObjective,
};

/// Command-line overrides applied on top of the config.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub dump_plans: bool,
}

pub const RUN_LOG: &str = "run_log.json";
pub const METRICS: &str = "metrics.csv";
pub const TRAJECTORIES: &str = "trajectories.csv";
pub const PLANS: &str = "plans.csv";
pub const TIMING: &str = "timing.csv";

/// 17 significant digits, `.` decimal.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Runs `cfg` in its own mode and writes every output under the output
/// directory. A failed run still writes its partial log.
pub fn run(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunLog> {
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if opts.dump_plans {
        cfg.mpc.get_or_insert_with(Default::default).dump_plans = true;
    }
    if let Some(dir) = &opts.out_dir {
        cfg.output.dir = dir.clone();
    }
    cfg.validate()?;
    let out = cfg.output.dir.clone();
    fs::create_dir_all(&out)?;
    let echo = cfg.to_toml();
    let result = match cfg.mode {
        Mode::Optimize => run_optimize(&cfg),
        Mode::Mpc => run_mpc(&cfg),
        Mode::Bench => run_bench(&cfg),
    };
    match result {
        Ok(mut log) => {
            log.config_echo = echo;
            write_outputs(&log, &out)?;
            Ok(log)
        }
        Err(e) => {
            let log = RunLog {
                mode: cfg.mode.as_str().into(),
                seed: cfg.seed,
                config_echo: echo,
                partial: true,
                error: Some(e.to_string()),
                ..RunLog::default()
            };
            write_json(&log, &out.join(RUN_LOG))?;
            Err(e)
        }
    }
}

fn objective_outcome(
    cfg: &ScenarioConfig,
    sc: &Scenario,
    solver: &SolverConfig,
) -> Result<(OptimizeOutcome, Vec<Array2<f64>>)> {
    let margin = cfg.obstacles.as_ref().map_or(0.0, |o| o.planner_margin);
    let planned: Vec<Obstacle> = sc
        .obstacles
        .iter()
        .map(|o| Obstacle {
            radius: o.radius + margin,
            ..o.clone()
        })
        .collect();
    match (&sc.model, &sc.x0) {
        (Some(model), Some(x0)) => {
            let obj = ControlObjective {
                spec: &cfg.cost,
                basis: &sc.basis,
                map: &sc.map,
                mu: &sc.mu,
                obstacles: &planned,
                model,
                x0: x0.view(),
                horizon: cfg.steps,
                history: None,
            };
            let init = initial_ensemble(&obj, sc, cfg.particles, solver.seed)?;
            let out = optimize(&obj, &sc.prior, init, &sc.kernel, solver)?;
            let paths = out
                .ensemble
                .particles
                .rows()
                .into_iter()
                .map(|p| obj.planned_states(p))
                .collect::<Result<_>>()?;
            Ok((out, paths))
        }
        _ => {
            let obj = TrajectoryObjective {
                spec: &cfg.cost,
                basis: &sc.basis,
                map: &sc.map,
                mu: &sc.mu,
                obstacles: &planned,
                steps: cfg.steps,
                dt: cfg.dt,
            };
            let init = initial_ensemble(&obj, sc, cfg.particles, solver.seed)?;
            let out = optimize(&obj, &sc.prior, init, &sc.kernel, solver)?;
            let paths = (0..out.ensemble.len())
                .map(|i| out.ensemble.path(i).to_owned())
                .collect();
            Ok((out, paths))
        }
    }
}

fn initial_ensemble<O: ParticleObjective>(
    obj: &O,
    sc: &Scenario,
    count: usize,
    seed: u64,
) -> Result<Ensemble> {
    let mut e = sc.prior.sample(count, seed)?;
    for mut row in e.particles.rows_mut() {
        obj.project(row.as_slice_mut().expect("standard layout"));
    }
    Ok(e)
}

/// Batch optimization of `cfg` without writing outputs.
pub fn run_optimize(cfg: &ScenarioConfig) -> Result<RunLog> {
    let sc = cfg.build()?;
    let (out, paths) = objective_outcome(cfg, &sc, &sc.solver)?;
    let best = paths[out.best].clone();
    Ok(RunLog {
        mode: "optimize".into(),
        seed: cfg.seed,
        iterations: out.records,
        executed_workspace: Some(sc.map.project_path(best.view())?),
        executed_states: Some(best),
        final_paths: paths,
        best: Some(out.best),
        ..RunLog::default()
    })
}

/// Receding-horizon problem described by `cfg`, with its initial state.
pub fn mpc_scenario(cfg: &ScenarioConfig) -> Result<(MpcScenario, Array1<f64>, SolverConfig)> {
    let sc = cfg.build()?;
    let (model, x0) = match (sc.model.clone(), sc.x0.clone()) {
        (Some(m), Some(x)) => (m, x),
        _ => return Err(invalid("mpc mode needs a dynamics model")),
    };
    let mpc = cfg.mpc.clone().unwrap_or_default();
    let obstacles = cfg.obstacles.clone();
    let field = ObstacleField::new(
        sc.obstacles.clone(),
        obstacles.as_ref().map_or(0.0, |o| o.sigma),
        cfg.dt,
        sc.basis.workspace().clone(),
    )?;
    let scenario = MpcScenario {
        spec: cfg.cost.clone(),
        basis: sc.basis,
        map: sc.map,
        mu: sc.mu,
        model,
        kernel: sc.kernel,
        prior: sc.prior,
        particles: cfg.particles,
        field,
        obstacle_margin: obstacles.as_ref().map_or(0.0, |o| o.planner_margin),
        shift_fill: mpc.shift_fill,
        dump_plans: mpc.dump_plans,
        plan_with_history: mpc.plan_with_history,
    };
    Ok((scenario, x0, sc.solver))
}

/// Receding-horizon run of `cfg` without writing outputs.
pub fn run_mpc(cfg: &ScenarioConfig) -> Result<RunLog> {
    let (scenario, x0, solver) = mpc_scenario(cfg)?;
    let duration = cfg.mpc.as_ref().map_or_else(
        || crate::config::MpcConfig::default().duration,
        |m| m.duration,
    );
    run_receding_horizon(&scenario, x0.view(), duration, &solver, cfg.seed)
}

/// Median wall time of one Stein step for `cfg`.
pub fn time_stein_step(cfg: &ScenarioConfig, iterations: usize) -> Result<f64> {
    let sc = cfg.build()?;
    let solver = SolverConfig {
        max_iterations: iterations,
        tolerance: f64::MIN_POSITIVE,
        track_diversity: false,
        ..sc.solver.clone()
    };
    let (out, _) = objective_outcome(cfg, &sc, &solver)?;
    let mut ms: Vec<f64> = out.records.iter().map(|r| r.wall_ms).collect();
    ms.sort_by(f64::total_cmp);
    Ok(ms[ms.len() / 2])
}

/// Uniform coverage of the unit `dim`-box with the cost weights of `base`
/// that do not depend on the dimension.
fn dimension_variant(
    base: &ScenarioConfig,
    dim: usize,
    particles: usize,
    steps: usize,
) -> ScenarioConfig {
    let variance = match &base.prior {
        PriorConfig::Interpolate { variance, .. } | PriorConfig::Zeros { variance } => *variance,
    };
    let mut cfg = base.clone();
    cfg.mode = Mode::Optimize;
    cfg.particles = particles;
    cfg.steps = steps;
    cfg.workspace = crate::config::WorkspaceConfig {
        lengths: vec![1.0; dim],
        origin: None,
        unit_scale: false,
    };
    cfg.projection = None;
    cfg.dynamics = None;
    cfg.measure = MeasureConfig::Uniform;
    cfg.obstacles = None;
    cfg.cost.endpoints = None;
    cfg.cost.state_quadratic.clear();
    cfg.cost.constraints.clear();
    cfg.kernel.graph.clear();
    cfg.prior = PriorConfig::Interpolate {
        start: vec![0.1; dim],
        end: vec![0.9; dim],
        variance,
    };
    cfg
}

/// Timing sweeps of `cfg` without writing outputs.
pub fn run_bench(cfg: &ScenarioConfig) -> Result<RunLog> {
    let b = cfg.bench.clone().unwrap_or_default();
    let mut timing = Vec::new();
    let base = {
        let mut c = cfg.clone();
        c.mode = Mode::Optimize;
        c.kernel.graph.clear();
        c
    };
    let dim = cfg.workspace_dim();
    for &n in &b.particle_counts {
        let c = ScenarioConfig {
            particles: n,
            steps: b.base_steps,
            ..base.clone()
        };
        timing.push(TimingSample {
            sweep: "particles".into(),
            particles: n,
            steps: b.base_steps,
            workspace_dim: dim,
            wall_ms: time_stein_step(&c, b.iterations)?,
        });
    }
    for &t in &b.step_counts {
        let c = ScenarioConfig {
            particles: b.base_particles,
            steps: t,
            ..base.clone()
        };
        timing.push(TimingSample {
            sweep: "steps".into(),
            particles: b.base_particles,
            steps: t,
            workspace_dim: dim,
            wall_ms: time_stein_step(&c, b.iterations)?,
        });
    }
    for &v in &b.workspace_dims {
        let c = dimension_variant(&base, v, b.base_particles, b.base_steps);
        timing.push(TimingSample {
            sweep: "workspace_dim".into(),
            particles: b.base_particles,
            steps: b.base_steps,
            workspace_dim: v,
            wall_ms: time_stein_step(&c, b.iterations)?,
        });
    }
    Ok(RunLog {
        mode: "bench".into(),
        seed: cfg.seed,
        timing,
        ..RunLog::default()
    })
}

fn write_json(log: &RunLog, path: &Path) -> Result<()> {
    let f = fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), log)?;
    Ok(())
}

fn write_outputs(log: &RunLog, dir: &Path) -> Result<()> {
    write_json(log, &dir.join(RUN_LOG))?;
    if !log.iterations.is_empty() {
        write_metrics(log, &dir.join(METRICS))?;
    }
    if !log.cycles.is_empty() {
        write_cycle_metrics(log, &dir.join(METRICS))?;
        if log.cycles.iter().any(|c| c.plans.is_some()) {
            write_plans(log, &dir.join(PLANS))?;
        }
    }
    if !log.final_paths.is_empty() {
        write_trajectories(&log.final_paths, &dir.join(TRAJECTORIES))?;
    } else if let Some(x) = &log.executed_states {
        write_trajectories(std::slice::from_ref(x), &dir.join(TRAJECTORIES))?;
    }
    if !log.timing.is_empty() {
        write_timing(&log.timing, &dir.join(TIMING))?;
    }
    Ok(())
}

pub fn write_metrics(log: &RunLog, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "iter",
        "mean_erg_loss",
        "std_erg_loss",
        "mean_total_cost",
        "det_K",
        "max_dir_norm",
        "wall_ms",
    ])?;
    for r in &log.iterations {
        w.write_record([
            r.iteration.to_string(),
            fmt_f64(r.mean_erg_loss),
            fmt_f64(r.std_erg_loss),
            fmt_f64(r.mean_total_cost),
            fmt_opt(r.det_k),
            fmt_f64(r.max_dir_norm),
            fmt_f64(r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-cycle planner metrics. Wall time stays in the JSON log so the CSV is
/// reproducible byte for byte.
pub fn write_cycle_metrics(log: &RunLog, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "cycle",
        "time",
        "iter",
        "mean_erg_loss",
        "std_erg_loss",
        "mean_total_cost",
        "det_K",
        "max_dir_norm",
        "executed_erg_loss",
        "min_clearance",
        "selected",
    ])?;
    for c in &log.cycles {
        w.write_record([
            c.cycle.to_string(),
            fmt_f64(c.time),
            c.iterations.to_string(),
            fmt_f64(c.mean_erg_loss),
            fmt_f64(c.std_erg_loss),
            fmt_f64(c.mean_total_cost),
            fmt_opt(c.det_k),
            fmt_f64(c.max_dir_norm),
            fmt_f64(c.executed_erg_loss),
            fmt_f64(c.min_clearance),
            c.selected.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn state_header(first: &[&str], n: usize, last: &[&str]) -> Vec<String> {
    first
        .iter()
        .map(|s| s.to_string())
        .chain((0..n).map(|i| format!("x{i}")))
        .chain(last.iter().map(|s| s.to_string()))
        .collect()
}

pub fn write_trajectories(paths: &[Array2<f64>], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let n = paths.first().map_or(0, |p| p.ncols());
    w.write_record(state_header(&["run", "particle", "t"], n, &[]))?;
    for (i, p) in paths.iter().enumerate() {
        for (t, row) in p.rows().into_iter().enumerate() {
            let mut rec = vec!["0".to_string(), i.to_string(), t.to_string()];
            rec.extend(row.iter().map(|x| fmt_f64(*x)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_plans(log: &RunLog, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let n = log
        .cycles
        .iter()
        .find_map(|c| c.plans.as_ref().and_then(|p| p.first()).map(|p| p.ncols()))
        .unwrap_or(0);
    w.write_record(state_header(&["cycle", "particle", "t"], n, &["selected"]))?;
    for c in &log.cycles {
        let Some(plans) = &c.plans else { continue };
        for (i, p) in plans.iter().enumerate() {
            for (t, row) in p.rows().into_iter().enumerate() {
                let mut rec = vec![c.cycle.to_string(), i.to_string(), t.to_string()];
                rec.extend(row.iter().map(|x| fmt_f64(*x)));
                rec.push(u8::from(i == c.selected).to_string());
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_timing(samples: &[TimingSample], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sweep", "particles", "steps", "workspace_dim", "wall_ms"])?;
    for s in samples {
        w.write_record([
            s.sweep.clone(),
            s.particles.to_string(),
            s.steps.to_string(),
            s.workspace_dim.to_string(),
            fmt_f64(s.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(invalid("slope needs at least two positive (x, y) pairs"));
    }
    let lx = Array1::from_iter(x.iter().map(|v| v.ln()));
    let ly = Array1::from_iter(y.iter().map(|v| v.ln()));
    let (mx, my) = (lx.mean().expect("non-empty"), ly.mean().expect("non-empty"));
    let cov = (&lx - mx).dot(&(&ly - my));
    let var = (&lx - mx).dot(&(&lx - mx));
    if var == 0.0 {
        return Err(invalid("slope needs distinct x values"));
    }
    Ok(cov / var)
}
