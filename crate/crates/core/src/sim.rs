//! Simulated world: moving obstacles, run logs and coverage metrics.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::costs::Obstacle;
use crate::domain::{MeasureSpectrum, TargetMeasure, Workspace};
use crate::error::{check_dim, invalid, Result};
use crate::spectral::SpectralBasis;
use crate::svgd::IterationRecord;

/// Obstacles driven by white-noise velocities and reflected at the walls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleField {
    pub obstacles: Vec<Obstacle>,
    pub sigma: f64,
    pub dt: f64,
    pub workspace: Workspace,
}

/// Keeps spawned obstacle surfaces at least `margin` away from `point`.
#[derive(Clone, Debug, PartialEq)]
pub struct Exclusion {
    pub point: Vec<f64>,
    pub margin: f64,
}

const MAX_SPAWN_ATTEMPTS: usize = 10_000;

/// `count` obstacles with centers uniform in the workspace and radii uniform
/// in `radius_range`.
pub fn spawn_obstacles(
    workspace: &Workspace,
    count: usize,
    radius_range: (f64, f64),
    seed: u64,
    exclusion: Option<&Exclusion>,
) -> Result<Vec<Obstacle>> {
    let (lo, hi) = radius_range;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(invalid(format!(
            "invalid obstacle radius range ({lo}, {hi})"
        )));
    }
    if let Some(e) = exclusion {
        check_dim("exclusion point", workspace.dim(), e.point.len())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut placed = false;
        for _ in 0..MAX_SPAWN_ATTEMPTS {
            let center: Vec<f64> = workspace
                .lengths()
                .iter()
                .map(|l| rng.gen::<f64>() * l)
                .collect();
            let radius = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            let obs = Obstacle::new(center, radius)?;
            if exclusion.is_none_or(|e| obs.clearance(&e.point) >= e.margin) {
                out.push(obs);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(invalid(
                "could not place obstacles outside the exclusion zone",
            ));
        }
    }
    Ok(out)
}

fn reflect(x: f64, l: f64) -> f64 {
    let period = 2.0 * l;
    let m = x.rem_euclid(period);
    if m > l {
        period - m
    } else {
        m
    }
}

impl ObstacleField {
    pub fn new(
        obstacles: Vec<Obstacle>,
        sigma: f64,
        dt: f64,
        workspace: Workspace,
    ) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(invalid("obstacle sigma must be nonnegative"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("obstacle dt must be positive"));
        }
        for o in &obstacles {
            check_dim("obstacle center", workspace.dim(), o.center.len())?;
        }
        Ok(Self {
            obstacles,
            sigma,
            dt,
            workspace,
        })
    }

    /// `c += dt sigma z` per axis, reflected into the workspace. The drawn
    /// velocity is stored on each obstacle.
    pub fn step<R: Rng>(&mut self, rng: &mut R) {
        for obs in &mut self.obstacles {
            obs.velocity.resize(obs.center.len(), 0.0);
            for ((c, v), l) in obs
                .center
                .iter_mut()
                .zip(obs.velocity.iter_mut())
                .zip(self.workspace.lengths())
            {
                let z: f64 = StandardNormal.sample(rng);
                *v = self.sigma * z;
                *c = reflect(*c + self.dt * *v, *l);
            }
        }
    }

    /// What the planner may see: positions and radii only.
    pub fn observe(&self, margin: f64) -> Vec<Obstacle> {
        self.obstacles
            .iter()
            .map(|o| Obstacle {
                center: o.center.clone(),
                radius: o.radius + margin,
                velocity: vec![0.0; o.center.len()],
            })
            .collect()
    }
}

/// One receding-horizon cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub time: f64,
    pub state: Vec<f64>,
    pub applied_control: Vec<f64>,
    pub selected: usize,
    pub particle_costs: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Planner statistics at the last Stein iteration of the cycle.
    pub mean_erg_loss: f64,
    pub std_erg_loss: f64,
    pub mean_total_cost: f64,
    pub det_k: Option<f64>,
    pub max_dir_norm: f64,
    /// Planner wall time for the whole cycle.
    pub wall_ms: f64,
    /// Ergodic loss of the whole executed path so far.
    pub executed_erg_loss: f64,
    /// Clearance of the robot to the obstacles after both moved.
    pub min_clearance: f64,
    pub obstacle_centers: Vec<Vec<f64>>,
    /// Planned state paths of every particle, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plans: Option<Vec<Array2<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingSample {
    pub sweep: String,
    pub particles: usize,
    pub steps: usize,
    pub workspace_dim: usize,
    pub wall_ms: f64,
}

/// Everything a run produced.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub mode: String,
    pub seed: u64,
    pub config_echo: String,
    pub iterations: Vec<IterationRecord>,
    pub cycles: Vec<CycleRecord>,
    /// Executed states (mpc) or the selected path (optimize).
    pub executed_states: Option<Array2<f64>>,
    pub executed_workspace: Option<Array2<f64>>,
    /// Final particles as `steps x dim` paths.
    pub final_paths: Vec<Array2<f64>>,
    pub best: Option<usize>,
    pub timing: Vec<TimingSample>,
    pub partial: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub final_erg_loss: f64,
    pub min_erg_loss: f64,
    pub det_first: Option<f64>,
    pub det_last: Option<f64>,
    /// Fraction of executed steps inside each mixture component's 2-sigma
    /// ellipse. Empty for non-mixture measures.
    pub peak_visits: Vec<f64>,
    pub min_clearance: f64,
}

/// Fraction of points attributed to each mixture component. A point counts
/// toward the component with the smallest Mahalanobis distance among those
/// within 2 standard deviations.
pub fn peak_visitation(path: ArrayView2<f64>, measure: &TargetMeasure) -> Result<Vec<f64>> {
    let comps = match measure {
        TargetMeasure::GaussianMixture(c) => c,
        _ => return Ok(Vec::new()),
    };
    if path.nrows() == 0 {
        return Err(invalid("empty path"));
    }
    let inverses: Vec<nalgebra::DMatrix<f64>> = comps
        .iter()
        .map(|g| {
            let v = g.mean.len();
            let m = nalgebra::DMatrix::from_fn(v, v, |i, j| g.covariance[i][j]);
            m.try_inverse()
                .ok_or_else(|| invalid("singular covariance"))
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0usize; comps.len()];
    for w in path.rows() {
        let mut best: Option<(usize, f64)> = None;
        for (c, (g, inv)) in comps.iter().zip(&inverses).enumerate() {
            check_dim("peak mean", w.len(), g.mean.len())?;
            let d = nalgebra::DVector::from_iterator(
                w.len(),
                w.iter().zip(&g.mean).map(|(a, m)| a - m),
            );
            let m2 = (d.transpose() * inv * &d)[(0, 0)];
            if m2 <= 4.0 && best.is_none_or(|(_, b)| m2 < b) {
                best = Some((c, m2));
            }
        }
        if let Some((c, _)) = best {
            counts[c] += 1;
        }
    }
    let n = path.nrows() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Summary statistics of a run.
pub fn coverage_metrics(
    log: &RunLog,
    measure: &TargetMeasure,
    basis: &SpectralBasis,
    mu: &MeasureSpectrum,
) -> Result<CoverageSummary> {
    let path = log
        .executed_workspace
        .as_ref()
        .filter(|p| p.nrows() > 0)
        .ok_or_else(|| invalid("run log has no executed trajectory"))?;
    let q = basis.trajectory_coefficients(path.view())?;
    let final_erg_loss = basis.ergodic_cost(&q, mu)?;
    let min_erg_loss = log
        .cycles
        .iter()
        .map(|c| c.executed_erg_loss)
        .chain(
            log.iterations
                .iter()
                .flat_map(|r| r.ergodic_losses.iter().copied()),
        )
        .fold(final_erg_loss, f64::min);
    let dets: Vec<f64> = if log.iterations.is_empty() {
        log.cycles.iter().filter_map(|c| c.det_k).collect()
    } else {
        log.iterations.iter().filter_map(|r| r.det_k).collect()
    };
    Ok(CoverageSummary {
        final_erg_loss,
        min_erg_loss,
        det_first: dets.first().copied(),
        det_last: dets.last().copied(),
        peak_visits: peak_visitation(path.view(), measure)?,
        min_clearance: log
            .cycles
            .iter()
            .map(|c| c.min_clearance)
            .fold(f64::INFINITY, f64::min),
    })
}

/// Minimum over obstacles of the surface clearance from `w`.
pub fn point_clearance(w: &Array1<f64>, obstacles: &[Obstacle]) -> f64 {
    let w = w.to_vec();
    obstacles
        .iter()
        .map(|o| o.clearance(&w))
        .fold(f64::INFINITY, f64::min)
}
