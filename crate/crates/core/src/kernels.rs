//! Kernels on discrete paths, bandwidth selection, and the `det(K)`
//! diversity measure.
//!
//! Paths are flattened `T x d` row-major vectors (`d` = `point_dim`). Three
//! kinds are supported:
//!
//! * `Rbf`: `exp(-|a - b|^2 / h)` on the whole flattened path.
//! * `Markov`: a sum of per-timestep RBF terms `k(a_t, b_t)` plus, for every
//!   edge `(t, s)` of a time graph, an RBF on the stacked pair
//!   `(x_t, x_s)`. Every term is a PSD kernel, so the sum is too. With
//!   `normalize` the sum is divided by its term count and the diagonal is 1.
//! * `ConstantOne`: `k = 1`, which removes all repulsion.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};

/// Floor applied to data-driven bandwidths.
pub const MIN_BANDWIDTH: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    /// `median pairwise squared distance / ln N`, recomputed every call.
    MedianHeuristic,
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelKind {
    Rbf,
    Markov {
        graph: Vec<(usize, usize)>,
        normalize: bool,
    },
    ConstantOne,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub bandwidth: Bandwidth,
}

impl KernelConfig {
    pub fn rbf(bandwidth: Bandwidth) -> Self {
        Self {
            kind: KernelKind::Rbf,
            bandwidth,
        }
    }

    pub fn markov(bandwidth: Bandwidth) -> Self {
        Self {
            kind: KernelKind::Markov {
                graph: Vec::new(),
                normalize: true,
            },
            bandwidth,
        }
    }

    pub fn constant_one() -> Self {
        Self {
            kind: KernelKind::ConstantOne,
            bandwidth: Bandwidth::Fixed(1.0),
        }
    }

    /// Fixes the bandwidth against the current particle set (`N x D` rows).
    pub fn resolve(&self, paths: ArrayView2<f64>, point_dim: usize) -> Result<Kernel> {
        if point_dim == 0 || !paths.ncols().is_multiple_of(point_dim) {
            return Err(invalid(format!(
                "path length {} is not a multiple of point dimension {point_dim}",
                paths.ncols()
            )));
        }
        let steps = paths.ncols() / point_dim;
        if let KernelKind::Markov { graph, .. } = &self.kind {
            if let Some((t, s)) = graph.iter().find(|(t, s)| *t >= steps || *s >= steps) {
                return Err(invalid(format!(
                    "markov graph edge ({t}, {s}) outside 0..{steps}"
                )));
            }
        }
        let h = match (&self.kind, self.bandwidth) {
            (KernelKind::ConstantOne, _) => 1.0,
            (_, Bandwidth::Fixed(h)) => {
                if !(h.is_finite() && h > 0.0) {
                    return Err(invalid(format!("bandwidth must be positive, got {h}")));
                }
                h
            }
            (KernelKind::Rbf, Bandwidth::MedianHeuristic) => median_bandwidth(paths)?,
            (KernelKind::Markov { .. }, Bandwidth::MedianHeuristic) => {
                median_bandwidth_pointwise(paths, point_dim)?
            }
        };
        Ok(Kernel {
            kind: self.kind.clone(),
            bandwidth: h,
            point_dim,
        })
    }
}

/// A kernel with a concrete bandwidth.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    kind: KernelKind,
    bandwidth: f64,
    point_dim: usize,
}

impl Kernel {
    pub fn new(kind: KernelKind, bandwidth: f64, point_dim: usize) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(invalid(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        if point_dim == 0 {
            return Err(invalid("point dimension must be positive"));
        }
        Ok(Self {
            kind,
            bandwidth,
            point_dim,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    fn markov_terms(&self, steps: usize) -> f64 {
        match &self.kind {
            KernelKind::Markov {
                graph,
                normalize: true,
            } => (steps + graph.len()) as f64,
            _ => 1.0,
        }
    }

    /// `k(a, b)` and its gradient with respect to `a`.
    pub fn eval_grad(&self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        check_dim("kernel argument", a.len(), b.len())?;
        let h = self.bandwidth;
        match &self.kind {
            KernelKind::ConstantOne => Ok((1.0, Array1::zeros(a.len()))),
            KernelKind::Rbf => {
                let diff = &a - &b;
                let k = (-diff.dot(&diff) / h).exp();
                Ok((k, diff * (-2.0 * k / h)))
            }
            KernelKind::Markov { graph, .. } => {
                let d = self.point_dim;
                if !a.len().is_multiple_of(d) {
                    return Err(invalid("path length is not a multiple of point dimension"));
                }
                let steps = a.len() / d;
                let norm = self.markov_terms(steps);
                let sq = |t: usize| -> f64 {
                    (0..d).map(|i| (a[t * d + i] - b[t * d + i]).powi(2)).sum()
                };
                let mut value = 0.0;
                let mut grad = Array1::zeros(a.len());
                let add = |t: usize, k: f64, grad: &mut Array1<f64>| {
                    for i in 0..d {
                        grad[t * d + i] += -2.0 * (a[t * d + i] - b[t * d + i]) / h * k / norm;
                    }
                };
                for t in 0..steps {
                    let k = (-sq(t) / h).exp();
                    value += k;
                    add(t, k, &mut grad);
                }
                for &(t, s) in graph {
                    if t >= steps || s >= steps {
                        return Err(invalid(format!(
                            "markov graph edge ({t}, {s}) out of range"
                        )));
                    }
                    let k = (-(sq(t) + sq(s)) / h).exp();
                    value += k;
                    add(t, k, &mut grad);
                    add(s, k, &mut grad);
                }
                Ok((value / norm, grad))
            }
        }
    }

    /// Gram matrix `K_ij = k(x_i, x_j)` of the rows of `paths`.
    pub fn gram(&self, paths: ArrayView2<f64>) -> Array2<f64> {
        self.gram_and_repulsion(paths, false).0
    }

    /// Gram matrix and, when requested, the summed repulsion
    /// `R_j = sum_i grad_{x_i} k(x_i, x_j)` for every row `j`.
    pub(crate) fn gram_and_repulsion(
        &self,
        paths: ArrayView2<f64>,
        with_repulsion: bool,
    ) -> (Array2<f64>, Array2<f64>) {
        let (n, len) = paths.dim();
        let h = self.bandwidth;
        let mut repulsion = Array2::zeros((if with_repulsion { n } else { 0 }, len));
        match &self.kind {
            KernelKind::ConstantOne => (Array2::ones((n, n)), repulsion),
            KernelKind::Rbf => {
                let k = rbf_gram(paths, h, 1.0);
                if with_repulsion {
                    add_rbf_repulsion(&mut repulsion.view_mut(), paths, &k, h, 1.0);
                }
                (k, repulsion)
            }
            KernelKind::Markov { graph, .. } => {
                let d = self.point_dim;
                let steps = len / d;
                let norm = self.markov_terms(steps);
                let mut total = Array2::zeros((n, n));
                for t in 0..steps {
                    let cols = paths.slice(ndarray::s![.., t * d..(t + 1) * d]);
                    let k = rbf_gram(cols, h, 1.0);
                    if with_repulsion {
                        let mut r = repulsion.slice_mut(ndarray::s![.., t * d..(t + 1) * d]);
                        add_rbf_repulsion(&mut r, cols, &k, h, norm);
                    }
                    total += &k;
                }
                for &(t, s) in graph {
                    let mut pair = Array2::zeros((n, 2 * d));
                    pair.slice_mut(ndarray::s![.., ..d])
                        .assign(&paths.slice(ndarray::s![.., t * d..(t + 1) * d]));
                    pair.slice_mut(ndarray::s![.., d..])
                        .assign(&paths.slice(ndarray::s![.., s * d..(s + 1) * d]));
                    let k = rbf_gram(pair.view(), h, 1.0);
                    if with_repulsion {
                        let mut r = Array2::zeros((n, 2 * d));
                        add_rbf_repulsion(&mut r.view_mut(), pair.view(), &k, h, norm);
                        let mut rt = repulsion.slice_mut(ndarray::s![.., t * d..(t + 1) * d]);
                        rt += &r.slice(ndarray::s![.., ..d]);
                        let mut rs = repulsion.slice_mut(ndarray::s![.., s * d..(s + 1) * d]);
                        rs += &r.slice(ndarray::s![.., d..]);
                    }
                    total += &k;
                }
                total /= norm;
                (total, repulsion)
            }
        }
    }
}

/// `exp(-D_ij / h)` from a Gram-matrix expansion of squared distances.
fn rbf_gram(paths: ArrayView2<f64>, h: f64, _scale: f64) -> Array2<f64> {
    let d = pairwise_sq_distances(paths);
    d.mapv(|x| (-x / h).exp())
}

/// `R_j += (1/norm) sum_i -2 (x_i - x_j) / h * K_ij`.
fn add_rbf_repulsion(
    out: &mut ndarray::ArrayViewMut2<f64>,
    paths: ArrayView2<f64>,
    k: &Array2<f64>,
    h: f64,
    norm: f64,
) {
    let kx = k.t().dot(&paths);
    let col_sums = k.sum_axis(Axis(0));
    let scale = -2.0 / (h * norm);
    for (j, (mut row, kx_j)) in out.rows_mut().into_iter().zip(kx.rows()).enumerate() {
        let s = col_sums[j];
        for ((o, kxv), x) in row.iter_mut().zip(kx_j.iter()).zip(paths.row(j).iter()) {
            *o += scale * (kxv - x * s);
        }
    }
}

/// Squared Euclidean distances between all rows, clamped at zero.
pub fn pairwise_sq_distances(paths: ArrayView2<f64>) -> Array2<f64> {
    let gram = paths.dot(&paths.t());
    let n = paths.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (gram[[i, i]] + gram[[j, j]] - 2.0 * gram[[i, j]]).max(0.0);
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Median heuristic: median pairwise squared distance over `ln N`, floored at
/// [`MIN_BANDWIDTH`].
pub fn median_bandwidth(paths: ArrayView2<f64>) -> Result<f64> {
    let n = paths.nrows();
    if n < 2 {
        return Err(invalid(format!(
            "median bandwidth needs at least 2 particles, got {n}"
        )));
    }
    let d = pairwise_sq_distances(paths);
    let mut vals = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            vals.push(d[[i, j]]);
        }
    }
    Ok((median(&mut vals) / (n as f64).ln()).max(MIN_BANDWIDTH))
}

/// Median heuristic over per-timestep point distances, used for the
/// time-sliced kernel whose terms compare single points.
pub fn median_bandwidth_pointwise(paths: ArrayView2<f64>, point_dim: usize) -> Result<f64> {
    let n = paths.nrows();
    if n < 2 {
        return Err(invalid(format!(
            "median bandwidth needs at least 2 particles, got {n}"
        )));
    }
    let steps = paths.ncols() / point_dim;
    let mut vals = Vec::with_capacity(n * (n - 1) / 2 * steps);
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (paths.row(i), paths.row(j));
            for t in 0..steps {
                let s: f64 = (t * point_dim..(t + 1) * point_dim)
                    .map(|c| (a[c] - b[c]).powi(2))
                    .sum();
                vals.push(s);
            }
        }
    }
    Ok((median(&mut vals) / (n as f64).ln()).max(MIN_BANDWIDTH))
}

/// Gram matrix of a particle set and its determinant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub kernel_matrix: Array2<f64>,
    pub determinant: f64,
}

pub fn diversity(paths: ArrayView2<f64>, kernel: &Kernel) -> DiversityReport {
    let kernel_matrix = kernel.gram(paths);
    let n = kernel_matrix.nrows();
    let determinant = if n == 0 {
        1.0
    } else {
        DMatrix::from_fn(n, n, |i, j| kernel_matrix[[i, j]])
            .lu()
            .determinant()
    };
    DiversityReport {
        kernel_matrix,
        determinant,
    }
}
