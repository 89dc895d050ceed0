//! Stein variational updates over path or control particles.
//!
//! A particle is a flattened `T x n` row-major matrix. Every iteration
//! evaluates all particles against the current ensemble, builds the Stein
//! direction, and only then moves them:
//!
//! `phi_j = (1/N) sum_i [k(x_i, x_j) s_i + grad_{x_i} k(x_i, x_j)]`,
//! `s_i = w_p grad log p(x_i) - lambda grad L(x_i)`.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{total_cost, CostContext, CostSpec, Obstacle};
use crate::domain::{MeasureSpectrum, ProjectionMap};
use crate::error::{check_dim, invalid, Error, Result};
use crate::kernels::{diversity, Kernel, KernelConfig, KernelKind};
use crate::spectral::{SpectralBasis, Trajectory};

/// Gaussian prior `N(mean, variance I)` over flattened paths.
#[derive(Clone, Debug, PartialEq)]
pub struct Prior {
    pub mean: Array2<f64>,
    pub variance: f64,
}

impl Prior {
    pub fn new(mean: Array2<f64>, variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(invalid(format!(
                "prior variance must be nonnegative, got {variance}"
            )));
        }
        if mean.is_empty() || mean.iter().any(|x| !x.is_finite()) {
            return Err(invalid("prior mean must be non-empty and finite"));
        }
        Ok(Self { mean, variance })
    }

    /// Straight line from `start` to `end` over `steps` points.
    pub fn interpolate(start: &[f64], end: &[f64], steps: usize, variance: f64) -> Result<Self> {
        check_dim("prior end point", start.len(), end.len())?;
        if steps < 2 {
            return Err(invalid("prior path needs at least 2 steps"));
        }
        let mean = Array2::from_shape_fn((steps, start.len()), |(t, i)| {
            let s = t as f64 / (steps - 1) as f64;
            start[i] + s * (end[i] - start[i])
        });
        Self::new(mean, variance)
    }

    pub fn zeros(steps: usize, dim: usize, variance: f64) -> Result<Self> {
        Self::new(Array2::zeros((steps, dim)), variance)
    }

    pub fn steps(&self) -> usize {
        self.mean.nrows()
    }

    pub fn point_dim(&self) -> usize {
        self.mean.ncols()
    }

    fn mean_flat(&self) -> ArrayView1<'_, f64> {
        self.mean
            .as_slice()
            .map(ArrayView1::from)
            .expect("prior mean is contiguous")
    }

    fn require_variance(&self) -> Result<()> {
        if self.variance > 0.0 {
            Ok(())
        } else {
            Err(invalid("prior density needs a positive variance"))
        }
    }

    pub fn log_density(&self, particle: ArrayView1<f64>) -> Result<f64> {
        check_dim("prior particle", self.mean.len(), particle.len())?;
        self.require_variance()?;
        let d = particle.len() as f64;
        let sq: f64 = particle
            .iter()
            .zip(self.mean_flat())
            .map(|(x, m)| (x - m) * (x - m))
            .sum();
        Ok(-0.5 * sq / self.variance - 0.5 * d * (2.0 * std::f64::consts::PI * self.variance).ln())
    }

    /// `grad log p(x) = -(x - mean) / variance`.
    pub fn log_prior_grad(&self, particle: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dim("prior particle", self.mean.len(), particle.len())?;
        self.require_variance()?;
        Ok((&self.mean_flat() - &particle) / self.variance)
    }

    /// `count` draws `mean + sigma z`. Particle `i` uses its own stream of a
    /// generator seeded with `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Ensemble> {
        if count == 0 {
            return Err(invalid("ensemble needs at least one particle"));
        }
        let sigma = self.variance.sqrt();
        let mean = self.mean_flat();
        let mut particles = Array2::zeros((count, mean.len()));
        for (i, mut row) in particles.rows_mut().into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            for (x, m) in row.iter_mut().zip(mean) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = m + sigma * z;
            }
        }
        Ensemble::new(particles, self.steps(), self.point_dim())
    }
}

/// `N` particles, each a flattened `steps x point_dim` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub particles: Array2<f64>,
    pub steps: usize,
    pub point_dim: usize,
    pub costs: Vec<f64>,
    pub iteration: usize,
}

impl Ensemble {
    pub fn new(particles: Array2<f64>, steps: usize, point_dim: usize) -> Result<Self> {
        if particles.nrows() == 0 {
            return Err(invalid("ensemble needs at least one particle"));
        }
        check_dim("particle length", steps * point_dim, particles.ncols())?;
        Ok(Self {
            particles,
            steps,
            point_dim,
            costs: Vec::new(),
            iteration: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.nrows() == 0
    }

    /// Particle `i` as a `steps x point_dim` view.
    pub fn path(&self, i: usize) -> ArrayView2<'_, f64> {
        self.particles
            .row(i)
            .into_shape_with_order((self.steps, self.point_dim))
            .expect("particle rows are contiguous")
    }
}

/// How the kernel couples particles.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Full Stein direction.
    #[default]
    Stein,
    /// Only the `i = j` term: `phi_j = k(x_j, x_j) s_j / N`.
    Independent,
    /// Kernel-weighted driving term without the repulsive gradient.
    NoRepulsion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub seed: u64,
    /// Weight of `grad log p` in the driving term.
    #[serde(default = "default_prior_score_weight")]
    pub prior_score_weight: f64,
    #[serde(default)]
    pub coupling: Coupling,
    /// Fixed RBF bandwidth used for the logged `det(K)`.
    #[serde(default = "default_diversity_bandwidth")]
    pub diversity_bandwidth: f64,
    #[serde(default = "default_true")]
    pub track_diversity: bool,
}

fn default_step_size() -> f64 {
    0.5
}
fn default_max_iterations() -> usize {
    1000
}
fn default_tolerance() -> f64 {
    1e-3
}
fn default_temperature() -> f64 {
    10.0
}
fn default_prior_score_weight() -> f64 {
    1.0
}
fn default_diversity_bandwidth() -> f64 {
    0.01
}
fn default_true() -> bool {
    true
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step_size: default_step_size(),
            max_iterations: default_max_iterations(),
            tolerance: default_tolerance(),
            temperature: default_temperature(),
            seed: 0,
            prior_score_weight: default_prior_score_weight(),
            coupling: Coupling::Stein,
            diversity_bandwidth: default_diversity_bandwidth(),
            track_diversity: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(invalid("step_size must be positive"));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(invalid("tolerance must be positive"));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(invalid("temperature must be positive"));
        }
        if !(self.prior_score_weight.is_finite() && self.prior_score_weight >= 0.0) {
            return Err(invalid("prior_score_weight must be nonnegative"));
        }
        if !(self.diversity_bandwidth.is_finite() && self.diversity_bandwidth > 0.0) {
            return Err(invalid("diversity_bandwidth must be positive"));
        }
        Ok(())
    }
}

/// Cost, gradient and kernel features of one particle.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEval {
    pub total: f64,
    pub ergodic: f64,
    pub grad: Array1<f64>,
    pub features: Array1<f64>,
}

/// What the solver optimizes. Implementations must be pure so particles can
/// be evaluated in parallel.
pub trait ParticleObjective: Sync {
    fn evaluate(&self, particle: ArrayView1<f64>) -> Result<ParticleEval>;

    /// Point dimension of the kernel features.
    fn feature_point_dim(&self) -> usize;

    /// Maps a gradient with respect to the features back to the particle.
    fn pull_back_features(
        &self,
        particle: ArrayView1<f64>,
        feature_grad: ArrayView1<f64>,
    ) -> Result<Array1<f64>>;

    /// Applied to each particle after every update.
    fn project(&self, _particle: &mut [f64]) {}
}

/// Path-space objective: particles are state trajectories.
#[derive(Clone, Debug)]
pub struct TrajectoryObjective<'a> {
    pub spec: &'a CostSpec,
    pub basis: &'a SpectralBasis,
    pub map: &'a ProjectionMap,
    pub mu: &'a MeasureSpectrum,
    pub obstacles: &'a [Obstacle],
    pub steps: usize,
    pub dt: f64,
}

impl TrajectoryObjective<'_> {
    fn trajectory(&self, particle: ArrayView1<f64>) -> Result<Trajectory> {
        let n = self.map.state_dim();
        check_dim("particle length", self.steps * n, particle.len())?;
        let states = particle
            .to_owned()
            .into_shape_with_order((self.steps, n))
            .expect("length checked");
        Trajectory::new(states, self.dt)
    }
}

impl ParticleObjective for TrajectoryObjective<'_> {
    fn evaluate(&self, particle: ArrayView1<f64>) -> Result<ParticleEval> {
        let traj = self.trajectory(particle)?;
        let ctx = CostContext {
            basis: self.basis,
            map: self.map,
            mu: self.mu,
            obstacles: self.obstacles,
            controls: None,
            history: None,
        };
        let eval = total_cost(self.spec, &traj, &ctx)?;
        let features = self.map.project_path(traj.states.view())?;
        Ok(ParticleEval {
            total: eval.value,
            ergodic: eval.terms.ergodic,
            grad: flatten(eval.state_grad),
            features: flatten(features),
        })
    }

    fn feature_point_dim(&self) -> usize {
        self.map.workspace_dim()
    }

    fn pull_back_features(
        &self,
        _particle: ArrayView1<f64>,
        feature_grad: ArrayView1<f64>,
    ) -> Result<Array1<f64>> {
        let v = self.map.workspace_dim();
        let g = feature_grad
            .to_owned()
            .into_shape_with_order((feature_grad.len() / v, v))
            .map_err(|_| invalid("feature gradient has the wrong length"))?;
        Ok(flatten(self.map.pull_back(g.view())?))
    }
}

pub(crate) fn flatten(a: Array2<f64>) -> Array1<f64> {
    let len = a.len();
    if a.is_standard_layout() {
        a.into_shape_with_order(len).expect("standard layout")
    } else {
        Array1::from_iter(a.iter().copied())
    }
}

/// Directions for every particle and the kernel Gram matrix used.
#[derive(Clone, Debug, PartialEq)]
pub struct SteinDirection {
    pub directions: Array2<f64>,
    pub gram: Array2<f64>,
}

/// Stein direction from per-particle driving terms `scores` (`N x D`) and
/// kernel features (`N x F`). `pull_back(i, r)` maps a feature-space
/// repulsion of particle `i` to particle space.
pub fn stein_direction<F>(
    scores: ArrayView2<f64>,
    features: ArrayView2<f64>,
    kernel: &Kernel,
    coupling: Coupling,
    pull_back: F,
) -> Result<SteinDirection>
where
    F: Fn(usize, ArrayView1<f64>) -> Result<Array1<f64>> + Sync,
{
    let n = scores.nrows();
    check_dim("feature rows", n, features.nrows())?;
    if n == 0 {
        return Err(invalid("stein direction needs at least one particle"));
    }
    let inv_n = 1.0 / n as f64;
    let with_repulsion = coupling == Coupling::Stein && *kernel.kind() != KernelKind::ConstantOne;
    let (gram, repulsion) = kernel.gram_and_repulsion(features, with_repulsion);
    let mut directions = match coupling {
        Coupling::Independent => {
            let mut d = scores.to_owned();
            for (mut row, k) in d.rows_mut().into_iter().zip(gram.diag()) {
                row *= *k;
            }
            d
        }
        Coupling::Stein | Coupling::NoRepulsion => gram.t().dot(&scores),
    };
    if with_repulsion {
        let pulled: Vec<Array1<f64>> = (0..n)
            .into_par_iter()
            .map(|j| pull_back(j, repulsion.row(j)))
            .collect::<Result<_>>()?;
        for (mut row, r) in directions.rows_mut().into_iter().zip(pulled) {
            check_dim("pulled-back repulsion", row.len(), r.len())?;
            row += &r;
        }
    }
    directions *= inv_n;
    Ok(SteinDirection { directions, gram })
}

/// Index of the lowest cost (the particle maximizing `exp(-lambda L)`),
/// ties to the lowest index.
pub fn select_best(costs: &[f64], temperature: f64) -> Result<usize> {
    if costs.is_empty() {
        return Err(invalid("cannot select from an empty ensemble"));
    }
    if !(temperature > 0.0) {
        return Err(invalid("temperature must be positive"));
    }
    let mut best = 0;
    for (i, c) in costs.iter().enumerate() {
        if c.total_cmp(&costs[best]).is_lt() {
            best = i;
        }
    }
    Ok(best)
}

/// One solver iteration, measured before the update it triggers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub ergodic_losses: Vec<f64>,
    pub total_costs: Vec<f64>,
    pub mean_erg_loss: f64,
    pub std_erg_loss: f64,
    pub mean_total_cost: f64,
    pub det_k: Option<f64>,
    pub max_dir_norm: f64,
    pub mean_sq_dir_norm: f64,
    pub bandwidth: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeOutcome {
    pub ensemble: Ensemble,
    pub best: usize,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs Stein updates from `ensemble` until the largest direction norm drops
/// below the tolerance or the iteration cap is reached.
pub fn optimize<O: ParticleObjective>(
    objective: &O,
    prior: &Prior,
    mut ensemble: Ensemble,
    kernel_cfg: &KernelConfig,
    solver: &SolverConfig,
) -> Result<OptimizeOutcome> {
    solver.validate()?;
    check_dim("prior length", prior.mean.len(), ensemble.particles.ncols())?;
    let n = ensemble.len();
    let point_dim = objective.feature_point_dim();
    let use_prior = solver.prior_score_weight > 0.0;
    if use_prior {
        prior.require_variance()?;
    }
    let mut records = Vec::new();
    let converged;
    loop {
        let r = ensemble.iteration;
        let start = Instant::now();
        let evals: Vec<ParticleEval> = (0..n)
            .into_par_iter()
            .map(|i| objective.evaluate(ensemble.particles.row(i)))
            .collect::<Result<_>>()
            .map_err(|e| match e {
                Error::InvalidArgument(msg) if msg.contains("non-finite") => Error::Diverged {
                    iteration: r,
                    cycle: None,
                    reason: msg,
                },
                other => other,
            })?;
        let features = stack(evals.iter().map(|e| e.features.view()))?;
        let mut scores = stack(evals.iter().map(|e| e.grad.view()))?;
        scores *= -solver.temperature;
        if use_prior {
            for (mut row, x) in scores.rows_mut().into_iter().zip(ensemble.particles.rows()) {
                row.scaled_add(solver.prior_score_weight, &prior.log_prior_grad(x)?);
            }
        }
        let kernel = kernel_cfg.resolve(features.view(), point_dim)?;
        let particles = &ensemble.particles;
        let step = stein_direction(
            scores.view(),
            features.view(),
            &kernel,
            solver.coupling,
            |i, g| objective.pull_back_features(particles.row(i), g),
        )?;
        let norms: Vec<f64> = step
            .directions
            .rows()
            .into_iter()
            .map(|d| d.dot(&d).sqrt())
            .collect();
        let max_dir_norm = norms.iter().copied().fold(0.0, f64::max);
        let mean_sq_dir_norm = norms.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let totals: Vec<f64> = evals.iter().map(|e| e.total).collect();
        if !max_dir_norm.is_finite() || totals.iter().any(|c| !c.is_finite()) {
            return Err(Error::Diverged {
                iteration: r,
                cycle: None,
                reason: "non-finite cost or direction".into(),
            });
        }
        let done = max_dir_norm < solver.tolerance;
        let stop = done || r >= solver.max_iterations;
        if !stop {
            ensemble
                .particles
                .scaled_add(solver.step_size, &step.directions);
            for mut row in ensemble.particles.rows_mut() {
                objective.project(row.as_slice_mut().expect("standard layout"));
            }
        }
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;

        let losses: Vec<f64> = evals.iter().map(|e| e.ergodic).collect();
        let (mean_erg_loss, std_erg_loss) = mean_std(&losses);
        let det_k = if solver.track_diversity {
            let k = Kernel::new(KernelKind::Rbf, solver.diversity_bandwidth, point_dim)?;
            Some(diversity(features.view(), &k).determinant)
        } else {
            None
        };
        records.push(IterationRecord {
            iteration: r,
            mean_erg_loss,
            std_erg_loss,
            mean_total_cost: totals.iter().sum::<f64>() / n as f64,
            ergodic_losses: losses,
            total_costs: totals.clone(),
            det_k,
            max_dir_norm,
            mean_sq_dir_norm,
            bandwidth: kernel.bandwidth(),
            wall_ms,
        });
        if stop {
            converged = done;
            ensemble.costs = totals;
            break;
        }
        ensemble.iteration += 1;
    }
    let best = select_best(&ensemble.costs, solver.temperature)?;
    Ok(OptimizeOutcome {
        ensemble,
        best,
        records,
        converged,
    })
}

pub(crate) fn stack<'a>(rows: impl Iterator<Item = ArrayView1<'a, f64>>) -> Result<Array2<f64>> {
    let views: Vec<_> = rows.map(|r| r.insert_axis(Axis(0))).collect();
    ndarray::concatenate(Axis(0), &views).map_err(|e| invalid(format!("ragged particle rows: {e}")))
}
