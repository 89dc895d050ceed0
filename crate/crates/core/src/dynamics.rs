//! Discrete-time models `x_{t+1} = x_t + dt f(x_t, clamp(u_t))`, their
//! Jacobians, and the adjoint pass from state gradients to control gradients.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::spectral::Trajectory;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelKind {
    /// `x' = u`, with `n = m = dim`.
    SingleIntegrator { dim: usize },
    /// State `(p_x, p_y, theta)`, control `omega`, fixed forward speed.
    DubinsCar { speed: f64 },
    /// State `(p_x, p_y, p_z, psi, phi, v)`, control `(psi', phi', v')`.
    Aircraft,
}

impl ModelKind {
    pub fn state_dim(&self) -> usize {
        match self {
            ModelKind::SingleIntegrator { dim } => *dim,
            ModelKind::DubinsCar { .. } => 3,
            ModelKind::Aircraft => 6,
        }
    }

    pub fn control_dim(&self) -> usize {
        match self {
            ModelKind::SingleIntegrator { dim } => *dim,
            ModelKind::DubinsCar { .. } => 1,
            ModelKind::Aircraft => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsModel {
    pub kind: ModelKind,
    pub dt: f64,
    pub control_min: Vec<f64>,
    pub control_max: Vec<f64>,
}

impl DynamicsModel {
    /// Model with control bounds of `[-1, 1]` on every channel.
    pub fn new(kind: ModelKind, dt: f64) -> Result<Self> {
        let m = kind.control_dim();
        Self::with_bounds(kind, dt, vec![-1.0; m], vec![1.0; m])
    }

    pub fn with_bounds(
        kind: ModelKind,
        dt: f64,
        control_min: Vec<f64>,
        control_max: Vec<f64>,
    ) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        if kind.state_dim() == 0 {
            return Err(invalid("state dimension must be positive"));
        }
        if let ModelKind::DubinsCar { speed } = kind {
            if !speed.is_finite() {
                return Err(invalid("dubins speed must be finite"));
            }
        }
        let m = kind.control_dim();
        check_dim("control_min", m, control_min.len())?;
        check_dim("control_max", m, control_max.len())?;
        if control_min
            .iter()
            .zip(&control_max)
            .any(|(lo, hi)| !(lo <= hi))
        {
            return Err(invalid("control bounds need min <= max on every channel"));
        }
        Ok(Self {
            kind,
            dt,
            control_min,
            control_max,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.kind.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.kind.control_dim()
    }

    pub fn clamp(&self, u: ArrayView1<f64>) -> Array1<f64> {
        Array1::from_iter(
            u.iter()
                .zip(self.control_min.iter().zip(&self.control_max))
                .map(|(x, (lo, hi))| x.clamp(*lo, *hi)),
        )
    }

    pub fn clamp_sequence(&self, controls: &mut Array2<f64>) {
        for mut row in controls.rows_mut() {
            for ((x, lo), hi) in row.iter_mut().zip(&self.control_min).zip(&self.control_max) {
                *x = x.clamp(*lo, *hi);
            }
        }
    }

    fn check(&self, x: ArrayView1<f64>, u: ArrayView1<f64>) -> Result<()> {
        check_dim("state", self.state_dim(), x.len())?;
        check_dim("control", self.control_dim(), u.len())
    }

    pub fn step(&self, x: ArrayView1<f64>, u: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check(x, u)?;
        let u = self.clamp(u);
        let dt = self.dt;
        let mut next = x.to_owned();
        match self.kind {
            ModelKind::SingleIntegrator { .. } => next.scaled_add(dt, &u),
            ModelKind::DubinsCar { speed } => {
                next[0] += dt * speed * x[2].cos();
                next[1] += dt * speed * x[2].sin();
                next[2] += dt * u[0];
            }
            ModelKind::Aircraft => {
                let (psi, phi, v) = (x[3], x[4], x[5]);
                next[0] += dt * v * phi.cos() * psi.cos();
                next[1] += dt * v * phi.cos() * psi.sin();
                next[2] += dt * v * phi.sin();
                next[3] += dt * u[0];
                next[4] += dt * u[1];
                next[5] += dt * u[2];
            }
        }
        Ok(next)
    }

    /// `A = dF/dx` and `B = dF/du`. Channels clamped strictly outside their
    /// bounds get a zero column in `B`.
    pub fn jacobians(
        &self,
        x: ArrayView1<f64>,
        u: ArrayView1<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        self.check(x, u)?;
        let (n, m) = (self.state_dim(), self.control_dim());
        let dt = self.dt;
        let mut a = Array2::eye(n);
        let mut b = Array2::zeros((n, m));
        match self.kind {
            ModelKind::SingleIntegrator { .. } => {
                for i in 0..n {
                    b[[i, i]] = dt;
                }
            }
            ModelKind::DubinsCar { speed } => {
                a[[0, 2]] = -dt * speed * x[2].sin();
                a[[1, 2]] = dt * speed * x[2].cos();
                b[[2, 0]] = dt;
            }
            ModelKind::Aircraft => {
                let (psi, phi, v) = (x[3], x[4], x[5]);
                let (sps, cps, sph, cph) = (psi.sin(), psi.cos(), phi.sin(), phi.cos());
                a[[0, 3]] = -dt * v * cph * sps;
                a[[0, 4]] = -dt * v * sph * cps;
                a[[0, 5]] = dt * cph * cps;
                a[[1, 3]] = dt * v * cph * cps;
                a[[1, 4]] = -dt * v * sph * sps;
                a[[1, 5]] = dt * cph * sps;
                a[[2, 4]] = dt * v * cph;
                a[[2, 5]] = dt * sph;
                b[[3, 0]] = dt;
                b[[4, 1]] = dt;
                b[[5, 2]] = dt;
            }
        }
        for (j, uj) in u.iter().enumerate() {
            if *uj < self.control_min[j] || *uj > self.control_max[j] {
                b.column_mut(j).fill(0.0);
            }
        }
        Ok((a, b))
    }

    /// States `x_0 .. x_T` driven by `T` controls.
    pub fn rollout(&self, x0: ArrayView1<f64>, controls: ArrayView2<f64>) -> Result<Trajectory> {
        check_dim(
            "rollout controls columns",
            self.control_dim(),
            controls.ncols(),
        )?;
        check_dim("rollout initial state", self.state_dim(), x0.len())?;
        let t_len = controls.nrows();
        let mut states = Array2::zeros((t_len + 1, self.state_dim()));
        states.row_mut(0).assign(&x0);
        for t in 0..t_len {
            let next = self.step(states.row(t), controls.row(t))?;
            if next.iter().any(|x| !x.is_finite()) {
                return Err(Error::Diverged {
                    iteration: t,
                    cycle: None,
                    reason: "non-finite state in rollout".into(),
                });
            }
            states.row_mut(t + 1).assign(&next);
        }
        Trajectory::new(states, self.dt)
    }

    /// Total derivative of a cost `c(x_0..x_T, u_0..u_{T-1})` with respect to
    /// every control, given the partials on the rollout of `(x0, controls)`.
    pub fn control_gradient(
        &self,
        x0: ArrayView1<f64>,
        controls: ArrayView2<f64>,
        state_grads: ArrayView2<f64>,
        control_grads_direct: Option<ArrayView2<f64>>,
    ) -> Result<Array2<f64>> {
        let traj = self.rollout(x0, controls)?;
        self.control_gradient_on(&traj, controls, state_grads, control_grads_direct)
    }

    /// As [`control_gradient`](Self::control_gradient) on an existing rollout.
    pub fn control_gradient_on(
        &self,
        rollout: &Trajectory,
        controls: ArrayView2<f64>,
        state_grads: ArrayView2<f64>,
        control_grads_direct: Option<ArrayView2<f64>>,
    ) -> Result<Array2<f64>> {
        let t_len = controls.nrows();
        check_dim("rollout length", t_len + 1, rollout.len())?;
        check_dim("state gradient rows", t_len + 1, state_grads.nrows())?;
        check_dim(
            "state gradient columns",
            self.state_dim(),
            state_grads.ncols(),
        )?;
        if let Some(d) = control_grads_direct {
            check_dim("direct control gradient rows", t_len, d.nrows())?;
            check_dim(
                "direct control gradient columns",
                self.control_dim(),
                d.ncols(),
            )?;
        }
        let mut out = Array2::zeros((t_len, self.control_dim()));
        let mut lambda = state_grads.row(t_len).to_owned();
        for t in (0..t_len).rev() {
            let (a, b) = self.jacobians(rollout.states.row(t), controls.row(t))?;
            let mut g = b.t().dot(&lambda);
            if let Some(d) = control_grads_direct {
                g += &d.row(t);
            }
            out.row_mut(t).assign(&g);
            lambda = a.t().dot(&lambda) + state_grads.row(t);
        }
        Ok(out)
    }
}
