//! Cost likelihood `L = E + penalties + c1 h1^2 + c2 max(0, h2)` and its
//! gradient with respect to states and, optionally, controls.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::domain::MeasureSpectrum;
use crate::domain::{ProjectionMap, Workspace};
use crate::error::{check_dim, invalid, Result};
use crate::spectral::{CoefficientSums, SpectralBasis, Trajectory};

/// Spherical obstacle in workspace coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Vec<f64>,
    pub radius: f64,
    #[serde(default)]
    pub velocity: Vec<f64>,
}

impl Obstacle {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(invalid(format!(
                "obstacle radius must be positive, got {radius}"
            )));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(invalid("obstacle center must be finite"));
        }
        let velocity = vec![0.0; center.len()];
        Ok(Self {
            center,
            radius,
            velocity,
        })
    }

    /// Signed distance from `w` to the obstacle surface.
    pub fn clearance(&self, w: &[f64]) -> f64 {
        let d2: f64 = w
            .iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        d2.sqrt() - self.radius
    }
}

/// Coordinates a penalty is evaluated in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltySpace {
    #[default]
    State,
    Workspace,
}

/// Quadratic pull of the first and last path points toward fixed targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSpec {
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    #[serde(default)]
    pub terminal: Option<Vec<f64>>,
    #[serde(default = "default_endpoint_weight")]
    pub initial_weight: f64,
    #[serde(default = "default_endpoint_weight")]
    pub terminal_weight: f64,
    #[serde(default)]
    pub space: PenaltySpace,
}

fn default_endpoint_weight() -> f64 {
    0.1
}

/// `weight * sum_t (x_t[component] - target)^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateQuadratic {
    pub component: usize,
    #[serde(default)]
    pub target: f64,
    pub weight: f64,
}

/// Path constraints turned into penalties.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Constraint {
    /// Equality `h1 = x_step[c] - value` for each listed component,
    /// penalized as `weight * sum h1^2`.
    Pin {
        step: usize,
        components: Vec<usize>,
        values: Vec<f64>,
        weight: f64,
    },
    /// Inequality `h2 = |x_{t+1} - x_t|^2 / dt^2 - max_speed^2` per step,
    /// penalized as `weight * sum max(0, h2)`.
    SpeedLimit { max_speed: f64, weight: f64 },
    /// Inequalities `lower - x_t[c] <= 0` and `x_t[c] - upper <= 0` per step.
    StateBounds {
        component: usize,
        lower: f64,
        upper: f64,
        weight: f64,
    },
}

impl Constraint {
    pub fn is_equality(&self) -> bool {
        matches!(self, Constraint::Pin { .. })
    }

    fn validate(&self, t_len: usize, n: usize) -> Result<()> {
        let weight = match self {
            Constraint::Pin {
                step,
                components,
                values,
                weight,
            } => {
                if *step >= t_len {
                    return Err(invalid(format!(
                        "pin step {step} outside path of length {t_len}"
                    )));
                }
                check_dim("pin values", components.len(), values.len())?;
                if let Some(c) = components.iter().find(|c| **c >= n) {
                    return Err(invalid(format!("pin component {c} out of range")));
                }
                *weight
            }
            Constraint::SpeedLimit { max_speed, weight } => {
                if !(*max_speed >= 0.0) {
                    return Err(invalid("speed limit must be nonnegative"));
                }
                *weight
            }
            Constraint::StateBounds {
                component,
                lower,
                upper,
                weight,
            } => {
                if *component >= n {
                    return Err(invalid(format!("bound component {component} out of range")));
                }
                if lower > upper {
                    return Err(invalid("state bound lower exceeds upper"));
                }
                *weight
            }
        };
        if !(weight >= 0.0) {
            return Err(invalid("constraint weight must be nonnegative"));
        }
        Ok(())
    }

    /// Penalty value and state gradient, accumulated into `grad`.
    fn accumulate(&self, states: ArrayView2<f64>, dt: f64, grad: &mut Array2<f64>) -> f64 {
        match self {
            Constraint::Pin {
                step,
                components,
                values,
                weight,
            } => {
                let mut v = 0.0;
                for (&c, target) in components.iter().zip(values) {
                    let h = states[[*step, c]] - target;
                    v += weight * h * h;
                    grad[[*step, c]] += 2.0 * weight * h;
                }
                v
            }
            Constraint::SpeedLimit { max_speed, weight } => {
                let inv = 1.0 / (dt * dt);
                let mut v = 0.0;
                for t in 0..states.nrows().saturating_sub(1) {
                    let d = &states.row(t + 1) - &states.row(t);
                    let h = d.dot(&d) * inv - max_speed * max_speed;
                    if h > 0.0 {
                        v += weight * h;
                        let g = &d * (2.0 * weight * inv);
                        let mut next = grad.row_mut(t + 1);
                        next += &g;
                        let mut cur = grad.row_mut(t);
                        cur -= &g;
                    }
                }
                v
            }
            Constraint::StateBounds {
                component,
                lower,
                upper,
                weight,
            } => {
                let mut v = 0.0;
                for t in 0..states.nrows() {
                    let x = states[[t, *component]];
                    if x < *lower {
                        v += weight * (lower - x);
                        grad[[t, *component]] -= weight;
                    } else if x > *upper {
                        v += weight * (x - upper);
                        grad[[t, *component]] += weight;
                    }
                }
                v
            }
        }
    }
}

/// Weights of every cost term. The ergodic term always has weight 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    #[serde(default)]
    pub boundary_weight: f64,
    #[serde(default)]
    pub smoothness_weight: f64,
    /// Divide the smoothness sum by the number of differences.
    #[serde(default)]
    pub smoothness_mean: bool,
    #[serde(default)]
    pub smoothness_space: PenaltySpace,
    #[serde(default)]
    pub endpoints: Option<EndpointSpec>,
    #[serde(default)]
    pub control_weight: f64,
    #[serde(default)]
    pub state_quadratic: Vec<StateQuadratic>,
    #[serde(default)]
    pub obstacle_weight: f64,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
}

impl Default for CostSpec {
    fn default() -> Self {
        Self {
            boundary_weight: 0.0,
            smoothness_weight: 0.0,
            smoothness_mean: false,
            smoothness_space: PenaltySpace::State,
            endpoints: None,
            control_weight: 0.0,
            state_quadratic: Vec::new(),
            obstacle_weight: 0.0,
            constraints: Vec::new(),
        }
    }
}

impl CostSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("boundary_weight", self.boundary_weight),
            ("smoothness_weight", self.smoothness_weight),
            ("control_weight", self.control_weight),
            ("obstacle_weight", self.obstacle_weight),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(invalid(format!(
                    "{name} must be a nonnegative number, got {w}"
                )));
            }
        }
        if let Some(e) = &self.endpoints {
            if !(e.initial_weight >= 0.0 && e.terminal_weight >= 0.0) {
                return Err(invalid("endpoint weights must be nonnegative"));
            }
        }
        if self.state_quadratic.iter().any(|q| !(q.weight >= 0.0)) {
            return Err(invalid("state quadratic weights must be nonnegative"));
        }
        Ok(())
    }
}

/// Everything besides the path that a cost evaluation reads.
#[derive(Clone, Copy, Debug)]
pub struct CostContext<'a> {
    pub basis: &'a SpectralBasis,
    pub map: &'a ProjectionMap,
    pub mu: &'a MeasureSpectrum,
    pub obstacles: &'a [Obstacle],
    pub controls: Option<ArrayView2<'a, f64>>,
    /// Basis sums of already executed points, averaged together with the path.
    pub history: Option<&'a CoefficientSums>,
}

/// Per-term values of one cost evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostTerms {
    pub ergodic: f64,
    pub boundary: f64,
    pub obstacle: f64,
    pub smoothness: f64,
    pub endpoint: f64,
    pub state_quadratic: f64,
    pub control: f64,
    pub equality: f64,
    pub inequality: f64,
}

impl CostTerms {
    pub fn total(&self) -> f64 {
        self.ergodic
            + self.boundary
            + self.obstacle
            + self.smoothness
            + self.endpoint
            + self.state_quadratic
            + self.control
            + self.equality
            + self.inequality
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostEvaluation {
    pub value: f64,
    pub terms: CostTerms,
    pub state_grad: Array2<f64>,
    pub control_grad: Option<Array2<f64>>,
}

/// `sum_t sum_i d(w_ti)^2` with `d` the distance outside `[0, L_i]`.
pub fn boundary_penalty(
    path: ArrayView2<f64>,
    workspace: &Workspace,
) -> Result<(f64, Array2<f64>)> {
    check_dim("boundary path columns", workspace.dim(), path.ncols())?;
    let mut grad = Array2::zeros(path.raw_dim());
    let mut value = 0.0;
    for ((t, i), w) in path.indexed_iter() {
        let l = workspace.lengths()[i];
        let d = if *w < 0.0 {
            *w
        } else if *w > l {
            w - l
        } else {
            continue;
        };
        value += d * d;
        grad[[t, i]] = 2.0 * d;
    }
    Ok((value, grad))
}

/// `sum_t sum_obs max(0, r - |w_t - c|)^2`.
pub fn obstacle_penalty(
    path: ArrayView2<f64>,
    obstacles: &[Obstacle],
) -> Result<(f64, Array2<f64>)> {
    let mut grad = Array2::zeros(path.raw_dim());
    let mut value = 0.0;
    for obs in obstacles {
        check_dim("obstacle center", path.ncols(), obs.center.len())?;
        for (t, w) in path.rows().into_iter().enumerate() {
            let dist = w
                .iter()
                .zip(&obs.center)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>()
                .sqrt();
            let pen = obs.radius - dist;
            if pen <= 0.0 {
                continue;
            }
            value += pen * pen;
            if dist > 0.0 {
                for (i, (a, c)) in w.iter().zip(&obs.center).enumerate() {
                    grad[[t, i]] -= 2.0 * pen * (a - c) / dist;
                }
            }
        }
    }
    Ok((value, grad))
}

/// `weight * sum_t |x_{t+1} - x_t|^2`.
pub fn smoothness_penalty(path: ArrayView2<f64>, weight: f64) -> Result<(f64, Array2<f64>)> {
    if path.nrows() < 2 {
        return Err(invalid("smoothness penalty needs at least 2 points"));
    }
    let diffs = &path.slice(ndarray::s![1.., ..]) - &path.slice(ndarray::s![..-1, ..]);
    let value = weight * diffs.iter().map(|d| d * d).sum::<f64>();
    let mut grad = Array2::zeros(path.raw_dim());
    let scaled = diffs * (2.0 * weight);
    {
        let mut upper = grad.slice_mut(ndarray::s![1.., ..]);
        upper += &scaled;
    }
    {
        let mut lower = grad.slice_mut(ndarray::s![..-1, ..]);
        lower -= &scaled;
    }
    Ok((value, grad))
}

fn endpoint_penalty(
    path: ArrayView2<f64>,
    spec: &EndpointSpec,
    grad: &mut Array2<f64>,
) -> Result<f64> {
    let last = path.nrows() - 1;
    let mut value = 0.0;
    for (target, weight, t) in [
        (&spec.initial, spec.initial_weight, 0),
        (&spec.terminal, spec.terminal_weight, last),
    ] {
        if let Some(target) = target {
            check_dim("endpoint target", path.ncols(), target.len())?;
            for (i, x) in target.iter().enumerate() {
                let d = path[[t, i]] - x;
                value += weight * d * d;
                grad[[t, i]] += 2.0 * weight * d;
            }
        }
    }
    Ok(value)
}

/// Full cost of a trajectory and its gradients.
pub fn total_cost(
    spec: &CostSpec,
    path: &Trajectory,
    ctx: &CostContext<'_>,
) -> Result<CostEvaluation> {
    let states = path.states.view();
    let (t_len, n) = states.dim();
    check_dim("projection state dimension", ctx.map.state_dim(), n)?;
    check_dim(
        "projection workspace dimension",
        ctx.basis.dim(),
        ctx.map.workspace_dim(),
    )?;
    if spec.control_weight > 0.0 && ctx.controls.is_none() {
        return Err(invalid(
            "control effort weight is set but no controls were supplied",
        ));
    }
    let mut terms = CostTerms::default();
    let ws_path = ctx.map.project_path(states)?;
    let (ergodic, mut ws_grad) =
        ctx.basis
            .ergodic_cost_workspace_grad_with_history(ws_path.view(), ctx.mu, ctx.history)?;
    terms.ergodic = ergodic;
    let mut state_grad = Array2::zeros((t_len, n));

    if spec.boundary_weight > 0.0 {
        let (v, g) = boundary_penalty(ws_path.view(), ctx.basis.workspace())?;
        terms.boundary = spec.boundary_weight * v;
        ws_grad.scaled_add(spec.boundary_weight, &g);
    }
    if spec.obstacle_weight > 0.0 && !ctx.obstacles.is_empty() {
        let (v, g) = obstacle_penalty(ws_path.view(), ctx.obstacles)?;
        terms.obstacle = spec.obstacle_weight * v;
        ws_grad.scaled_add(spec.obstacle_weight, &g);
    }
    if spec.smoothness_weight > 0.0 {
        let w = if spec.smoothness_mean {
            spec.smoothness_weight / (t_len - 1) as f64
        } else {
            spec.smoothness_weight
        };
        match spec.smoothness_space {
            PenaltySpace::State => {
                let (v, g) = smoothness_penalty(states, w)?;
                terms.smoothness = v;
                state_grad += &g;
            }
            PenaltySpace::Workspace => {
                let (v, g) = smoothness_penalty(ws_path.view(), w)?;
                terms.smoothness = v;
                ws_grad += &g;
            }
        }
    }
    if let Some(e) = &spec.endpoints {
        terms.endpoint = match e.space {
            PenaltySpace::State => endpoint_penalty(states, e, &mut state_grad)?,
            PenaltySpace::Workspace => endpoint_penalty(ws_path.view(), e, &mut ws_grad)?,
        };
    }
    for q in &spec.state_quadratic {
        if q.component >= n {
            return Err(invalid(format!(
                "state quadratic component {} out of range",
                q.component
            )));
        }
        for t in 0..t_len {
            let d = states[[t, q.component]] - q.target;
            terms.state_quadratic += q.weight * d * d;
            state_grad[[t, q.component]] += 2.0 * q.weight * d;
        }
    }
    for c in &spec.constraints {
        c.validate(t_len, n)?;
        let v = c.accumulate(states, path.dt, &mut state_grad);
        if c.is_equality() {
            terms.equality += v;
        } else {
            terms.inequality += v;
        }
    }
    state_grad += &ctx.map.pull_back(ws_grad.view())?;

    let control_grad = match ctx.controls {
        Some(u) => {
            terms.control = spec.control_weight * u.iter().map(|x| x * x).sum::<f64>();
            Some(u.to_owned() * (2.0 * spec.control_weight))
        }
        None => None,
    };
    Ok(CostEvaluation {
        value: terms.total(),
        terms,
        state_grad,
        control_grad,
    })
}

/// Minimum clearance of a workspace path to any obstacle, `+inf` if none.
pub fn min_clearance(path: ArrayView2<f64>, obstacles: &[Obstacle]) -> f64 {
    path.axis_iter(Axis(0))
        .flat_map(|w| {
            let w = w.to_vec();
            obstacles.iter().map(move |o| o.clearance(&w))
        })
        .fold(f64::INFINITY, f64::min)
}
