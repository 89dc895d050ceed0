//! Exploration workspace, the state-to-workspace projection, and target
//! measures together with their cosine-Fourier coefficients.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::spectral::SpectralBasis;

/// Axis-aligned box `[0, L_0] x ... x [0, L_{v-1}]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    lengths: Vec<f64>,
}

impl Workspace {
    pub fn new(lengths: Vec<f64>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(invalid("workspace needs at least one axis"));
        }
        if let Some(bad) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(invalid(format!(
                "workspace length must be positive, got {bad}"
            )));
        }
        Ok(Self { lengths })
    }

    /// The unit box of dimension `dim`.
    pub fn unit(dim: usize) -> Self {
        Self {
            lengths: vec![1.0; dim.max(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        w.len() == self.dim()
            && w.iter()
                .zip(&self.lengths)
                .all(|(x, l)| (0.0..=*l).contains(x))
    }

    /// Clamp a point onto the box.
    pub fn clamp(&self, w: &mut [f64]) {
        for (x, l) in w.iter_mut().zip(&self.lengths) {
            *x = x.clamp(0.0, *l);
        }
    }
}

/// Affine map `g(x) = S x + offset`, optionally divided per axis by the
/// physical workspace lengths so the image of the box lands in `[0,1]^v`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionMap {
    selection: Array2<f64>,
    offset: Array1<f64>,
    unit_scale: Option<Vec<f64>>,
    // Jacobian of the whole map, `diag(1/L) S` or `S`.
    jacobian: Array2<f64>,
}

impl ProjectionMap {
    pub fn new(
        selection: Array2<f64>,
        offset: Array1<f64>,
        unit_scale: Option<&Workspace>,
    ) -> Result<Self> {
        let (v, n) = selection.dim();
        if v == 0 || n == 0 {
            return Err(invalid("projection selection matrix must be non-empty"));
        }
        check_dim("projection offset", v, offset.len())?;
        if selection
            .iter()
            .chain(offset.iter())
            .any(|x| !x.is_finite())
        {
            return Err(invalid("projection entries must be finite"));
        }
        let unit_scale = match unit_scale {
            Some(ws) => {
                check_dim("projection unit-scale workspace", v, ws.dim())?;
                Some(ws.lengths().to_vec())
            }
            None => None,
        };
        let mut jacobian = selection.clone();
        if let Some(scale) = &unit_scale {
            for (mut row, l) in jacobian.axis_iter_mut(Axis(0)).zip(scale) {
                row /= *l;
            }
        }
        Ok(Self {
            selection,
            offset,
            unit_scale,
            jacobian,
        })
    }

    /// Identity map on an `n`-dimensional state.
    pub fn identity(n: usize) -> Self {
        Self::new(Array2::eye(n), Array1::zeros(n), None).expect("identity map is valid")
    }

    /// Picks the listed state components, in order.
    pub fn select(state_dim: usize, indices: &[usize]) -> Result<Self> {
        let mut s = Array2::zeros((indices.len(), state_dim));
        for (row, &i) in indices.iter().enumerate() {
            if i >= state_dim {
                return Err(invalid(format!(
                    "selected index {i} out of range for state dimension {state_dim}"
                )));
            }
            s[[row, i]] = 1.0;
        }
        Self::new(s, Array1::zeros(indices.len()), None)
    }

    pub fn with_offset(self, offset: Array1<f64>) -> Result<Self> {
        let ws = self
            .unit_scale
            .as_ref()
            .map(|l| Workspace::new(l.clone()))
            .transpose()?;
        Self::new(self.selection, offset, ws.as_ref())
    }

    /// Rescale outputs by `1/L_i` of `physical`.
    pub fn rescaled_to_unit(self, physical: &Workspace) -> Result<Self> {
        Self::new(self.selection, self.offset, Some(physical))
    }

    pub fn state_dim(&self) -> usize {
        self.selection.ncols()
    }

    pub fn workspace_dim(&self) -> usize {
        self.selection.nrows()
    }

    pub fn selection(&self) -> &Array2<f64> {
        &self.selection
    }

    pub fn offset(&self) -> &Array1<f64> {
        &self.offset
    }

    pub fn unit_scale(&self) -> Option<&[f64]> {
        self.unit_scale.as_deref()
    }

    /// Constant Jacobian `dg/dx` (v x n).
    pub fn jacobian(&self) -> &Array2<f64> {
        &self.jacobian
    }

    pub fn is_identity(&self) -> bool {
        let (v, n) = self.selection.dim();
        v == n
            && self.unit_scale.is_none()
            && self.offset.iter().all(|o| *o == 0.0)
            && self
                .selection
                .indexed_iter()
                .all(|((i, j), x)| *x == if i == j { 1.0 } else { 0.0 })
    }

    pub fn project(&self, state: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dim("projected state", self.state_dim(), state.len())?;
        let mut w = self.selection.dot(&state) + &self.offset;
        if let Some(scale) = &self.unit_scale {
            w.iter_mut().zip(scale).for_each(|(x, l)| *x /= l);
        }
        Ok(w)
    }

    /// Projects every row of a `T x n` state path into a `T x v` workspace path.
    pub fn project_path(&self, states: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim("projected path columns", self.state_dim(), states.ncols())?;
        let mut w = states.dot(&self.selection.t());
        w += &self.offset;
        if let Some(scale) = &self.unit_scale {
            for mut row in w.axis_iter_mut(Axis(0)) {
                row.iter_mut().zip(scale).for_each(|(x, l)| *x /= l);
            }
        }
        Ok(w)
    }

    /// Chain rule through the map: `T x v` workspace gradients to `T x n`.
    pub fn pull_back(&self, workspace_grad: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(
            "workspace gradient columns",
            self.workspace_dim(),
            workspace_grad.ncols(),
        )?;
        Ok(workspace_grad.dot(&self.jacobian))
    }
}

/// One Gaussian mixture component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub weight: f64,
}

/// Target spatial distribution on the workspace.
#[derive(Clone, Debug, PartialEq)]
pub enum TargetMeasure {
    /// The uniform probability measure on the box.
    Uniform,
    GaussianMixture(Vec<Gaussian>),
    /// Weighted sample points; weights are renormalized to sum to one.
    Empirical {
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
}

impl TargetMeasure {
    pub fn gaussian_mixture(
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<Vec<f64>>>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if means.is_empty() {
            return Err(invalid("gaussian mixture needs at least one component"));
        }
        check_dim("mixture covariances", means.len(), covariances.len())?;
        check_dim("mixture weights", means.len(), weights.len())?;
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("mixture weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!(
                "mixture weights must sum to 1, got {total}"
            )));
        }
        let comps = means
            .into_iter()
            .zip(covariances)
            .zip(weights)
            .map(|((mean, covariance), weight)| Gaussian {
                mean,
                covariance,
                weight,
            })
            .collect::<Vec<_>>();
        for c in &comps {
            cholesky(&c.covariance, c.mean.len())?;
        }
        Ok(Self::GaussianMixture(comps))
    }

    /// Isotropic mixture with equal weights.
    pub fn isotropic_mixture(means: Vec<Vec<f64>>, std: f64) -> Result<Self> {
        let k = means.len();
        let covs = means
            .iter()
            .map(|m| {
                (0..m.len())
                    .map(|i| {
                        (0..m.len())
                            .map(|j| if i == j { std * std } else { 0.0 })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self::gaussian_mixture(means, covs, vec![1.0 / k as f64; k])
    }

    pub fn empirical(points: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("empirical measure needs at least one point"));
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; points.len()]);
        check_dim("empirical weights", points.len(), weights.len())?;
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("empirical weights must be nonnegative"));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(invalid("empirical weights must not all be zero"));
        }
        Ok(Self::Empirical { points, weights })
    }

    /// Dimension of the points the measure lives on, if it carries any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::Uniform => None,
            Self::GaussianMixture(c) => c.first().map(|g| g.mean.len()),
            Self::Empirical { points, .. } => points.first().map(Vec::len),
        }
    }

    /// Draws `count` points, clamping mixture samples that leave the workspace.
    pub fn sample(&self, workspace: &Workspace, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = workspace.dim();
        match self {
            Self::Uniform => Ok((0..count)
                .map(|_| {
                    workspace
                        .lengths()
                        .iter()
                        .map(|l| l * rand::Rng::gen::<f64>(&mut rng))
                        .collect()
                })
                .collect()),
            Self::GaussianMixture(comps) => {
                let factors = comps
                    .iter()
                    .map(|c| {
                        check_dim("mixture mean", v, c.mean.len())?;
                        cholesky(&c.covariance, v)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let cdf: Vec<f64> = comps
                    .iter()
                    .scan(0.0, |acc, c| {
                        *acc += c.weight;
                        Some(*acc)
                    })
                    .collect();
                let mut out = Vec::with_capacity(count);
                for _ in 0..count {
                    let u: f64 = rand::Rng::gen(&mut rng);
                    let idx = cdf.iter().position(|c| u < *c).unwrap_or(comps.len() - 1);
                    let z = DVector::from_fn(v, |_, _| StandardNormal.sample(&mut rng));
                    let x = &factors[idx] * z;
                    let mut p: Vec<f64> = comps[idx]
                        .mean
                        .iter()
                        .zip(x.iter())
                        .map(|(m, d)| m + d)
                        .collect();
                    workspace.clamp(&mut p);
                    out.push(p);
                }
                Ok(out)
            }
            Self::Empirical { points, .. } => Ok(points.clone()),
        }
    }
}

fn cholesky(cov: &[Vec<f64>], v: usize) -> Result<DMatrix<f64>> {
    check_dim("covariance rows", v, cov.len())?;
    for row in cov {
        check_dim("covariance columns", v, row.len())?;
    }
    let m = DMatrix::from_fn(v, v, |i, j| cov[i][j]);
    if (0..v).any(|i| (0..v).any(|j| (m[(i, j)] - m[(j, i)]).abs() > 1e-12)) {
        return Err(invalid("covariance must be symmetric"));
    }
    m.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| invalid("covariance must be positive definite"))
}

/// Fourier coefficients `mu^k` of a target measure, one per basis frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpectrum {
    pub coefficients: Vec<f64>,
}

/// Coefficients of `measure` against `basis`.
///
/// The uniform measure is integrated analytically. Mixtures are estimated by
/// Monte Carlo with `sample_count` draws from a ChaCha stream seeded with
/// `rng_seed`; empirical measures use their own points.
pub fn measure_coefficients(
    measure: &TargetMeasure,
    basis: &SpectralBasis,
    sample_count: usize,
    rng_seed: u64,
) -> Result<MeasureSpectrum> {
    let ws = basis.workspace();
    if let Some(d) = measure.dim() {
        check_dim("measure dimension", ws.dim(), d)?;
    }
    let coefficients = match measure {
        TargetMeasure::Uniform => {
            let mut c = vec![0.0; basis.len()];
            c[0] = 1.0 / basis.normalizers()[0];
            c
        }
        TargetMeasure::GaussianMixture(_) => {
            if sample_count == 0 {
                return Err(invalid("sample_count must be positive"));
            }
            let pts = measure.sample(ws, sample_count, rng_seed)?;
            weighted_average(basis, &pts, None)
        }
        TargetMeasure::Empirical { points, weights } => {
            if points.is_empty() {
                return Err(invalid("empirical measure needs at least one point"));
            }
            for p in points {
                check_dim("empirical point", ws.dim(), p.len())?;
                if !ws.contains(p) {
                    return Err(invalid(format!(
                        "empirical point {p:?} lies outside the workspace"
                    )));
                }
            }
            weighted_average(basis, points, Some(weights))
        }
    };
    Ok(MeasureSpectrum { coefficients })
}

fn weighted_average(
    basis: &SpectralBasis,
    points: &[Vec<f64>],
    weights: Option<&[f64]>,
) -> Vec<f64> {
    let mut acc = vec![0.0; basis.len()];
    let mut scratch = basis.scratch();
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        total += w;
        basis.accumulate_values(ArrayView1::from(p.as_slice()), w, &mut acc, &mut scratch);
    }
    acc.iter_mut().for_each(|c| *c /= total);
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn workspace_rejects_nonpositive_lengths() {
        assert!(Workspace::new(vec![1.0, 0.0]).is_err());
        assert!(Workspace::new(vec![-1.0]).is_err());
        assert!(Workspace::new(vec![]).is_err());
        let w = Workspace::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(w.dim(), 2);
        assert_eq!(
            Workspace::new(vec![100.0, 100.0]).unwrap().lengths(),
            &[100.0, 100.0]
        );
        assert_eq!(Workspace::new(vec![3.0, 3.0, 1.0]).unwrap().dim(), 3);
    }

    #[test]
    fn identity_projection() {
        let m = ProjectionMap::identity(2);
        let w = m.project(array![0.3, 0.7].view()).unwrap();
        assert_eq!(w, array![0.3, 0.7]);
        assert!(m.is_identity());
        assert!(m.project(array![0.3].view()).is_err());
    }

    #[test]
    fn forest_projection_rescales_to_unit() {
        let physical = Workspace::new(vec![100.0, 100.0]).unwrap();
        let m = ProjectionMap::identity(2)
            .rescaled_to_unit(&physical)
            .unwrap();
        let w = m.project(array![25.0, 80.0].view()).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn aircraft_projection_selects_position() {
        let m = ProjectionMap::select(6, &[0, 1, 2]).unwrap();
        let w = m
            .project(array![1.0, 2.0, 0.5, 0.3, 0.1, 1.2].view())
            .unwrap();
        assert_eq!(w, array![1.0, 2.0, 0.5]);
    }

    #[test]
    fn drone_box_offset_moves_altitude_to_origin() {
        let m = ProjectionMap::identity(3)
            .with_offset(array![0.0, 0.0, -0.5])
            .unwrap();
        let w = m.project(array![1.0, 2.0, 1.5].view()).unwrap();
        assert_eq!(w, array![1.0, 2.0, 1.0]);
    }

    #[test]
    fn mixture_validation() {
        let cov = vec![vec![0.01, 0.0], vec![0.0, 0.01]];
        assert!(TargetMeasure::gaussian_mixture(
            vec![vec![0.5, 0.5]],
            vec![cov.clone()],
            vec![0.9]
        )
        .is_err());
        let not_pd = vec![vec![0.01, 0.02], vec![0.02, 0.01]];
        assert!(
            TargetMeasure::gaussian_mixture(vec![vec![0.5, 0.5]], vec![not_pd], vec![1.0]).is_err()
        );
        let asym = vec![vec![0.01, 0.001], vec![0.0, 0.01]];
        assert!(
            TargetMeasure::gaussian_mixture(vec![vec![0.5, 0.5]], vec![asym], vec![1.0]).is_err()
        );
        assert!(
            TargetMeasure::gaussian_mixture(vec![vec![0.5, 0.5]], vec![cov], vec![1.0]).is_ok()
        );
    }

    #[test]
    fn empty_empirical_is_rejected() {
        assert!(TargetMeasure::empirical(vec![], None).is_err());
        let basis = SpectralBasis::new(Workspace::unit(2), 4).unwrap();
        let m = TargetMeasure::Empirical {
            points: vec![],
            weights: vec![],
        };
        assert!(measure_coefficients(&m, &basis, 10, 0).is_err());
    }

    #[test]
    fn mixture_samples_are_clamped_into_workspace() {
        let ws = Workspace::unit(2);
        let m = TargetMeasure::isotropic_mixture(vec![vec![0.02, 0.98]], 0.2).unwrap();
        let pts = m.sample(&ws, 2000, 3).unwrap();
        assert!(pts.iter().all(|p| ws.contains(p)));
        assert!(pts.iter().any(|p| p[0] == 0.0));
    }
}
