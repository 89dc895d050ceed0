//! Cosine Fourier basis on the workspace and the spectral ergodic cost.
//!
//! A basis with `k_max` modes per axis on a `v`-dimensional workspace holds
//! `k_max^v` frequency tuples in lexicographic order (the first axis is the
//! most significant digit). Each function is
//!
//! ```text
//! F_k(w) = (1/h_k) prod_i cos(k_i pi w_i / L_i)
//! ```
//!
//! with `h_k` the L2 norm of the unnormalized product over the box, and the
//! per-mode weight is `Lambda_k = (1 + |k|)^(-(v+1)/2)`.
//!
//! Trajectory statistics are the time average of `F_k` over the sampled
//! workspace path. Evaluation is separable: per point we build one cosine
//! table per axis, and the gradient of the cost is obtained by contracting
//! the coefficient tensor axis by axis, which keeps the per-point cost at a
//! small multiple of the number of modes for any `v`.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::domain::{MeasureSpectrum, ProjectionMap, Workspace};
use crate::error::{check_dim, invalid, Result};

#[derive(Clone, Debug)]
pub struct SpectralBasis {
    workspace: Workspace,
    k_max: usize,
    frequencies: Vec<usize>,
    normalizers: Vec<f64>,
    inv_normalizers: Vec<f64>,
    weights: Vec<f64>,
}

impl SpectralBasis {
    pub fn new(workspace: Workspace, k_max: usize) -> Result<Self> {
        if k_max == 0 {
            return Err(invalid("k_max must be at least 1"));
        }
        let v = workspace.dim();
        let count = k_max
            .checked_pow(v as u32)
            .filter(|c| *c <= 1 << 24)
            .ok_or_else(|| invalid(format!("k_max^v = {k_max}^{v} is too large")))?;
        let mut frequencies = Vec::with_capacity(count * v);
        let mut normalizers = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        let exponent = -((v as f64) + 1.0) / 2.0;
        for idx in 0..count {
            let mut rem = idx;
            let mut k = vec![0usize; v];
            for i in (0..v).rev() {
                k[i] = rem % k_max;
                rem /= k_max;
            }
            let h = k
                .iter()
                .zip(workspace.lengths())
                .map(|(&ki, &l)| if ki == 0 { l } else { l / 2.0 })
                .product::<f64>()
                .sqrt();
            let norm = k.iter().map(|&ki| (ki * ki) as f64).sum::<f64>().sqrt();
            normalizers.push(h);
            weights.push((1.0 + norm).powf(exponent));
            frequencies.extend_from_slice(&k);
        }
        let inv_normalizers = normalizers.iter().map(|h| 1.0 / h).collect();
        Ok(Self {
            workspace,
            k_max,
            frequencies,
            normalizers,
            inv_normalizers,
            weights,
        })
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    pub fn dim(&self) -> usize {
        self.workspace.dim()
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Number of frequency tuples, `k_max^v`.
    pub fn len(&self) -> usize {
        self.normalizers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normalizers.is_empty()
    }

    pub fn frequency(&self, index: usize) -> &[usize] {
        let v = self.dim();
        &self.frequencies[index * v..(index + 1) * v]
    }

    /// Position of a frequency tuple in the lexicographic ordering.
    pub fn index_of(&self, k: &[usize]) -> Option<usize> {
        if k.len() != self.dim() || k.iter().any(|&ki| ki >= self.k_max) {
            return None;
        }
        Some(k.iter().fold(0, |acc, &ki| acc * self.k_max + ki))
    }

    pub fn normalizers(&self) -> &[f64] {
        &self.normalizers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `F_k(w)` and its exact gradient with respect to `w`.
    pub fn basis_eval_grad(&self, k_index: usize, w: ArrayView1<f64>) -> (f64, Vec<f64>) {
        let k = self.frequency(k_index);
        let inv_h = self.inv_normalizers[k_index];
        let args: Vec<f64> = k
            .iter()
            .zip(self.workspace.lengths())
            .zip(w.iter())
            .map(|((&ki, &l), &wi)| ki as f64 * PI / l * wi)
            .collect();
        let cos: Vec<f64> = args.iter().map(|a| a.cos()).collect();
        let value = cos.iter().product::<f64>() * inv_h;
        let grad = (0..k.len())
            .map(|i| {
                let rate = k[i] as f64 * PI / self.workspace.lengths()[i];
                let others: f64 = cos
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, c)| c)
                    .product();
                -rate * args[i].sin() * others * inv_h
            })
            .collect();
        (value, grad)
    }

    pub(crate) fn scratch(&self) -> Scratch {
        Scratch::new(self.dim(), self.k_max)
    }

    /// Fills the per-axis cosine and derivative tables for one point.
    fn fill_tables(&self, w: ArrayView1<f64>, cos: &mut [f64], dsin: &mut [f64]) {
        let k = self.k_max;
        for (i, (&wi, &l)) in w.iter().zip(self.workspace.lengths()).enumerate() {
            let theta = PI * wi / l;
            let (s1, c1) = theta.sin_cos();
            let c = &mut cos[i * k..(i + 1) * k];
            let d = &mut dsin[i * k..(i + 1) * k];
            let (mut ck, mut sk) = (1.0, 0.0);
            for q in 0..k {
                c[q] = ck;
                d[q] = -(q as f64) * PI / l * sk;
                let next_c = ck * c1 - sk * s1;
                sk = sk * c1 + ck * s1;
                ck = next_c;
            }
        }
    }

    /// `acc[k] += weight * F_k(w)` for every mode.
    pub(crate) fn accumulate_values(
        &self,
        w: ArrayView1<f64>,
        weight: f64,
        acc: &mut [f64],
        scratch: &mut Scratch,
    ) {
        let (cos, dsin) = (&mut scratch.cos, &mut scratch.dsin);
        self.fill_tables(w, cos, dsin);
        accumulate_from_table(self, &scratch.cos, weight, acc, &mut scratch.prod);
    }

    /// Time-averaged coefficients `Q^k = (1/T) sum_t F_k(w_t)` of a `T x v`
    /// workspace path.
    pub fn trajectory_coefficients(
        &self,
        workspace_path: ArrayView2<f64>,
    ) -> Result<TrajectorySpectrum> {
        check_dim("workspace path columns", self.dim(), workspace_path.ncols())?;
        let t_len = workspace_path.nrows();
        if t_len == 0 {
            return Err(invalid("workspace path is empty"));
        }
        let mut acc = vec![0.0; self.len()];
        let mut scratch = self.scratch();
        for w in workspace_path.rows() {
            self.accumulate_values(w, 1.0, &mut acc, &mut scratch);
        }
        let inv_t = 1.0 / t_len as f64;
        acc.iter_mut().for_each(|q| *q *= inv_t);
        Ok(TrajectorySpectrum { coefficients: acc })
    }

    /// `E = sum_k Lambda_k (Q^k - mu^k)^2`.
    pub fn ergodic_cost(&self, q: &TrajectorySpectrum, mu: &MeasureSpectrum) -> Result<f64> {
        check_dim("trajectory spectrum", self.len(), q.coefficients.len())?;
        check_dim("measure spectrum", self.len(), mu.coefficients.len())?;
        Ok(self
            .weights
            .iter()
            .zip(&q.coefficients)
            .zip(&mu.coefficients)
            .map(|((l, q), m)| l * (q - m) * (q - m))
            .sum())
    }

    /// Ergodic cost of a `T x v` workspace path and its gradient with respect
    /// to every path point.
    pub fn ergodic_cost_workspace_grad(
        &self,
        workspace_path: ArrayView2<f64>,
        mu: &MeasureSpectrum,
    ) -> Result<(f64, Array2<f64>)> {
        self.ergodic_cost_workspace_grad_with_history(workspace_path, mu, None)
    }

    /// Unnormalized sums `sum_t F_k(w_t)` of a workspace path.
    pub fn coefficient_sums(&self, workspace_path: ArrayView2<f64>) -> Result<CoefficientSums> {
        check_dim("workspace path columns", self.dim(), workspace_path.ncols())?;
        let mut sums = vec![0.0; self.len()];
        let mut scratch = self.scratch();
        for w in workspace_path.rows() {
            self.accumulate_values(w, 1.0, &mut sums, &mut scratch);
        }
        Ok(CoefficientSums {
            sums,
            count: workspace_path.nrows(),
        })
    }

    /// As [`ergodic_cost_workspace_grad`](Self::ergodic_cost_workspace_grad),
    /// with `Q` averaged over `history` followed by `workspace_path`.
    pub fn ergodic_cost_workspace_grad_with_history(
        &self,
        workspace_path: ArrayView2<f64>,
        mu: &MeasureSpectrum,
        history: Option<&CoefficientSums>,
    ) -> Result<(f64, Array2<f64>)> {
        check_dim("workspace path columns", self.dim(), workspace_path.ncols())?;
        check_dim("measure spectrum", self.len(), mu.coefficients.len())?;
        if let Some(h) = history {
            check_dim("history sums", self.len(), h.sums.len())?;
        }
        let t_len = workspace_path.nrows();
        if t_len == 0 {
            return Err(invalid("workspace path is empty"));
        }
        let v = self.dim();
        let table = v * self.k_max;
        let mut cos = vec![0.0; t_len * table];
        let mut dsin = vec![0.0; t_len * table];
        let mut q = vec![0.0; self.len()];
        let mut prod = vec![0.0; self.len()];
        for (t, w) in workspace_path.rows().into_iter().enumerate() {
            let (c, d) = (
                &mut cos[t * table..(t + 1) * table],
                &mut dsin[t * table..(t + 1) * table],
            );
            self.fill_tables(w, c, d);
            accumulate_from_table(self, c, 1.0, &mut q, &mut prod);
        }
        if let Some(h) = history {
            q.iter_mut().zip(&h.sums).for_each(|(a, b)| *a += b);
        }
        let inv_t = 1.0 / (t_len + history.map_or(0, |h| h.count)) as f64;
        let mut cost = 0.0;
        // Reuse `prod` for the contracted coefficients 2 Lambda (Q - mu) / (T h).
        for k in 0..self.len() {
            let gap = q[k] * inv_t - mu.coefficients[k];
            cost += self.weights[k] * gap * gap;
            prod[k] = 2.0 * self.weights[k] * gap * inv_t * self.inv_normalizers[k];
        }
        let mut grad = Array2::zeros((t_len, v));
        let mut contraction = Contraction::new(v, self.k_max);
        for (t, mut g) in grad.rows_mut().into_iter().enumerate() {
            contraction.gradient(
                &prod,
                &cos[t * table..(t + 1) * table],
                &dsin[t * table..(t + 1) * table],
                g.as_slice_mut().expect("row-major gradient"),
            );
        }
        Ok((cost, grad))
    }

    /// Gradient of `ergodic_cost(trajectory_coefficients(g(x)), mu)` with
    /// respect to every state of the trajectory.
    pub fn ergodic_cost_grad(
        &self,
        trajectory: &Trajectory,
        map: &ProjectionMap,
        mu: &MeasureSpectrum,
    ) -> Result<Array2<f64>> {
        check_dim(
            "projection workspace dimension",
            self.dim(),
            map.workspace_dim(),
        )?;
        let w = map.project_path(trajectory.states.view())?;
        let (_, gw) = self.ergodic_cost_workspace_grad(w.view(), mu)?;
        map.pull_back(gw.view())
    }
}

fn accumulate_from_table(
    basis: &SpectralBasis,
    cos: &[f64],
    weight: f64,
    acc: &mut [f64],
    prod: &mut [f64],
) {
    let k = basis.k_max;
    let v = basis.dim();
    // Expand the outer product of the per-axis tables, first axis slowest.
    prod[0] = weight;
    let mut size = 1;
    for i in 0..v {
        let c = &cos[i * k..(i + 1) * k];
        for r in (0..size).rev() {
            let base = prod[r];
            let out = &mut prod[r * k..(r + 1) * k];
            for (o, cq) in out.iter_mut().zip(c) {
                *o = base * cq;
            }
        }
        size *= k;
    }
    for ((a, p), ih) in acc.iter_mut().zip(prod.iter()).zip(&basis.inv_normalizers) {
        *a += p * ih;
    }
}

/// Per-point cosine/derivative tables and expansion buffer.
pub(crate) struct Scratch {
    cos: Vec<f64>,
    dsin: Vec<f64>,
    prod: Vec<f64>,
}

impl Scratch {
    fn new(v: usize, k: usize) -> Self {
        Self {
            cos: vec![0.0; v * k],
            dsin: vec![0.0; v * k],
            prod: vec![0.0; k.pow(v as u32)],
        }
    }
}

/// Buffers for contracting a coefficient tensor against per-axis tables.
struct Contraction {
    k: usize,
    v: usize,
    with_cos: Vec<Vec<f64>>,
    with_deriv: Vec<Vec<f64>>,
}

impl Contraction {
    fn new(v: usize, k: usize) -> Self {
        let sizes: Vec<usize> = (0..v).map(|j| k.pow(j as u32)).collect();
        Self {
            k,
            v,
            with_cos: sizes.iter().map(|s| vec![0.0; *s]).collect(),
            with_deriv: sizes.iter().map(|s| vec![0.0; *s]).collect(),
        }
    }

    /// `grad[i] = sum_k coeffs[k] * dsin_i[k_i] * prod_{j != i} cos_j[k_j]`.
    fn gradient(&mut self, coeffs: &[f64], cos: &[f64], dsin: &[f64], grad: &mut [f64]) {
        let k = self.k;
        for j in (0..self.v).rev() {
            let c = &cos[j * k..(j + 1) * k];
            let d = &dsin[j * k..(j + 1) * k];
            let (lower_cos, upper_cos) = self.with_cos.split_at_mut(j + 1);
            let src: &[f64] = if j + 1 == self.v {
                coeffs
            } else {
                &upper_cos[0]
            };
            let out_c = &mut lower_cos[j];
            let out_d = &mut self.with_deriv[j];
            for (r, block) in src.chunks_exact(k).enumerate() {
                let (mut sc, mut sd) = (0.0, 0.0);
                for q in 0..k {
                    sc += block[q] * c[q];
                    sd += block[q] * d[q];
                }
                out_c[r] = sc;
                out_d[r] = sd;
            }
            // Collapse the remaining axes of the derivative branch with cosines.
            let buf = &mut self.with_deriv[j];
            let mut size = buf.len();
            for a in (0..j).rev() {
                let ca = &cos[a * k..(a + 1) * k];
                let next = size / k;
                for r in 0..next {
                    let mut s = 0.0;
                    for q in 0..k {
                        s += buf[r * k + q] * ca[q];
                    }
                    buf[r] = s;
                }
                size = next;
            }
            grad[j] = buf[0];
        }
    }
}

/// Discrete state path `x_0 .. x_{T-1}` sampled every `dt` seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Array2<f64>,
    pub dt: f64,
}

impl Trajectory {
    pub fn new(states: Array2<f64>, dt: f64) -> Result<Self> {
        if states.nrows() < 2 {
            return Err(invalid(format!(
                "trajectory needs at least 2 states, got {}",
                states.nrows()
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        if states.iter().any(|x| !x.is_finite()) {
            return Err(invalid("trajectory contains non-finite entries"));
        }
        Ok(Self { states, dt })
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.states.ncols()
    }
}

/// Running sums of basis values over a path, used to prepend history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSums {
    pub sums: Vec<f64>,
    pub count: usize,
}

/// Time-averaged coefficients `Q^k` of a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpectrum {
    pub coefficients: Vec<f64>,
}
