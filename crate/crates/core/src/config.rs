//! Scenario files: one TOML document describing a whole experiment.
//!
//! Measures, obstacles and workspace-space penalties use the coordinates the
//! spectral basis sees, i.e. after the projection (and unit rescaling, when
//! enabled).

use std::path::{Path, PathBuf};

use ndarray::Array1;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::costs::{CostSpec, Obstacle, PenaltySpace};
use crate::domain::{
    measure_coefficients, MeasureSpectrum, ProjectionMap, TargetMeasure, Workspace,
};
use crate::dynamics::{DynamicsModel, ModelKind};
use crate::error::{Error, Result};
use crate::kernels::{Bandwidth, KernelConfig, KernelKind};
use crate::sim::{spawn_obstacles, Exclusion};
use crate::spectral::SpectralBasis;
use crate::svgd::{Prior, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Optimize,
    Mpc,
    Bench,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Optimize => "optimize",
            Mode::Mpc => "mpc",
            Mode::Bench => "bench",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub particles: usize,
    /// Path length for optimization, planning horizon for mpc.
    pub steps: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub workspace: WorkspaceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionConfig>,
    pub measure: MeasureConfig,
    pub basis: BasisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsConfig>,
    #[serde(default)]
    pub cost: CostSpec,
    #[serde(default)]
    pub kernel: KernelSection,
    pub prior: PriorConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obstacles: Option<ObstacleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mpc: Option<MpcConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_dt() -> f64 {
    0.1
}

/// Physical box `origin + [0, L]`. With `unit_scale` the basis lives on the
/// unit box and the projection divides by `L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceConfig {
    pub lengths: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Vec<f64>>,
    #[serde(default)]
    pub unit_scale: bool,
}

/// State components that form the workspace point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    pub indices: Vec<usize>,
    /// Needed only without a dynamics model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_dim: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureConfig {
    Uniform,
    /// Either full `covariances` or one isotropic `std`; equal weights when
    /// `weights` is absent.
    GaussianMixture {
        means: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        covariances: Option<Vec<Vec<Vec<f64>>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        std: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    /// Inline points, or a CSV file with `v` coordinates then a weight per row.
    Empirical {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        points: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file: Option<PathBuf>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub k_max: usize,
    /// Monte Carlo draws for mixture coefficients.
    #[serde(default = "default_measure_samples")]
    pub measure_samples: usize,
}

fn default_measure_samples() -> usize {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub model: ModelKind,
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_min: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_max: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    #[default]
    Rbf,
    Markov,
    ConstantOne,
}

/// Absent `bandwidth` selects the median heuristic.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default)]
    pub kind: KernelName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    /// Markov clique pairs `[t, s]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub graph: Vec<[usize; 2]>,
    /// Adds every `[t, t+1]` pair to the graph.
    #[serde(default)]
    pub adjacent_pairs: bool,
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub normalize: bool,
}

fn default_true() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    /// Straight line between two states.
    Interpolate {
        start: Vec<f64>,
        end: Vec<f64>,
        variance: f64,
    },
    /// Zero mean over the particle variables (controls when a model is set).
    Zeros { variance: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixed: Vec<Obstacle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spawn: Option<SpawnConfig>,
    /// Standard deviation of the random obstacle velocities.
    #[serde(default = "default_obstacle_sigma")]
    pub sigma: f64,
    /// Added to every radius the planner sees.
    #[serde(default)]
    pub planner_margin: f64,
}

fn default_obstacle_sigma() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnConfig {
    pub count: usize,
    pub radius_min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_max: Option<f64>,
    /// Minimum surface distance from the robot start.
    #[serde(default)]
    pub exclusion_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub shift_fill: crate::mpc::ShiftFill,
    #[serde(default)]
    pub plan_with_history: bool,
    #[serde(default)]
    pub dump_plans: bool,
}

fn default_duration() -> f64 {
    10.0
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            duration: default_duration(),
            shift_fill: Default::default(),
            plan_with_history: false,
            dump_plans: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "default_particle_counts")]
    pub particle_counts: Vec<usize>,
    #[serde(default = "default_step_counts")]
    pub step_counts: Vec<usize>,
    /// Path length held fixed while sweeping particle counts.
    #[serde(default = "default_base_steps")]
    pub base_steps: usize,
    /// Particle count held fixed while sweeping path lengths.
    #[serde(default = "default_base_particles")]
    pub base_particles: usize,
    #[serde(default = "default_workspace_dims")]
    pub workspace_dims: Vec<usize>,
    /// Timed Stein steps per configuration; the median is reported.
    #[serde(default = "default_bench_iterations")]
    pub iterations: usize,
}

fn default_particle_counts() -> Vec<usize> {
    vec![8, 16, 32, 64, 128]
}
fn default_step_counts() -> Vec<usize> {
    vec![50, 100, 200, 400]
}
fn default_base_steps() -> usize {
    100
}
fn default_base_particles() -> usize {
    16
}
fn default_workspace_dims() -> Vec<usize> {
    vec![2, 3]
}
fn default_bench_iterations() -> usize {
    5
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            particle_counts: default_particle_counts(),
            step_counts: default_step_counts(),
            base_steps: default_base_steps(),
            base_particles: default_base_particles(),
            workspace_dims: default_workspace_dims(),
            iterations: default_bench_iterations(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
        }
    }
}

const REQUIRED: [&str; 7] = [
    "mode",
    "particles",
    "steps",
    "workspace",
    "measure",
    "basis",
    "prior",
];

fn check_section<T: DeserializeOwned>(table: &toml::Table, key: &str, errors: &mut Vec<String>) {
    if let Some(v) = table.get(key) {
        if let Err(e) = serde_path_to_error::deserialize::<_, T>(v.clone()) {
            let path = e.path().to_string();
            let at = if path == "." {
                key.to_string()
            } else {
                format!("{key}.{path}")
            };
            errors.push(format!("{at}: {}", e.into_inner()));
        }
    }
}

/// Parses and validates a scenario. Relative measure files resolve against
/// the working directory.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    parse_config_in(text, Path::new("."))
}

/// Reads a scenario file; relative measure files resolve against its folder.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_in(&text, base)
}

fn parse_config_in(text: &str, base: &Path) -> Result<ScenarioConfig> {
    let table: toml::Table =
        toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))?;
    let mut errors = Vec::new();
    for key in REQUIRED {
        if !table.contains_key(key) {
            errors.push(format!("{key}: missing required field"));
        }
    }
    let known = [
        "name",
        "mode",
        "seed",
        "particles",
        "steps",
        "dt",
        "workspace",
        "projection",
        "measure",
        "basis",
        "dynamics",
        "cost",
        "kernel",
        "prior",
        "solver",
        "obstacles",
        "mpc",
        "bench",
        "output",
    ];
    for key in table.keys() {
        if !known.contains(&key.as_str()) {
            errors.push(format!("{key}: unknown field"));
        }
    }
    check_section::<String>(&table, "name", &mut errors);
    check_section::<Mode>(&table, "mode", &mut errors);
    check_section::<u64>(&table, "seed", &mut errors);
    check_section::<usize>(&table, "particles", &mut errors);
    check_section::<usize>(&table, "steps", &mut errors);
    check_section::<f64>(&table, "dt", &mut errors);
    check_section::<WorkspaceConfig>(&table, "workspace", &mut errors);
    check_section::<ProjectionConfig>(&table, "projection", &mut errors);
    check_section::<MeasureConfig>(&table, "measure", &mut errors);
    check_section::<BasisConfig>(&table, "basis", &mut errors);
    check_section::<DynamicsConfig>(&table, "dynamics", &mut errors);
    check_section::<CostSpec>(&table, "cost", &mut errors);
    check_section::<KernelSection>(&table, "kernel", &mut errors);
    check_section::<PriorConfig>(&table, "prior", &mut errors);
    check_section::<SolverConfig>(&table, "solver", &mut errors);
    check_section::<ObstacleConfig>(&table, "obstacles", &mut errors);
    check_section::<MpcConfig>(&table, "mpc", &mut errors);
    check_section::<BenchConfig>(&table, "bench", &mut errors);
    check_section::<OutputConfig>(&table, "output", &mut errors);
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    let mut cfg: ScenarioConfig = serde_path_to_error::deserialize(toml::Value::Table(table))
        .map_err(|e| {
            let path = e.path().to_string();
            Error::Config(vec![format!("{path}: {}", e.into_inner())])
        })?;
    cfg.resolve_files(base)?;
    cfg.validate()?;
    Ok(cfg)
}

fn read_measure_csv(path: &Path) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(vec![format!("measure.file: {}: {e}", path.display())]))?;
    let (mut points, mut weights) = (Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(vec![format!("measure.file: {e}")]))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(vec![format!("measure.file: row {}: {e}", i + 1)]))?;
        if vals.len() < 2 {
            return Err(Error::Config(vec![format!(
                "measure.file: row {} needs coordinates and a weight",
                i + 1
            )]));
        }
        weights.push(vals[vals.len() - 1]);
        points.push(vals[..vals.len() - 1].to_vec());
    }
    Ok((points, weights))
}

/// Everything a run needs, built from a validated config.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub basis: SpectralBasis,
    pub map: ProjectionMap,
    pub measure: TargetMeasure,
    pub mu: MeasureSpectrum,
    pub model: Option<DynamicsModel>,
    pub x0: Option<Array1<f64>>,
    pub kernel: KernelConfig,
    pub prior: Prior,
    pub solver: SolverConfig,
    /// Initial obstacles in workspace coordinates.
    pub obstacles: Vec<Obstacle>,
}

impl ScenarioConfig {
    /// Document that parses back to an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    fn resolve_files(&mut self, base: &Path) -> Result<()> {
        if let MeasureConfig::Empirical {
            points,
            weights,
            file,
        } = &mut self.measure
        {
            if let Some(f) = file.take() {
                if points.is_some() || weights.is_some() {
                    return Err(Error::Config(vec![
                        "measure: give either inline points or a file, not both".into(),
                    ]));
                }
                let (p, w) = read_measure_csv(&base.join(f))?;
                *points = Some(p);
                *weights = Some(w);
            }
        }
        Ok(())
    }

    pub fn workspace_dim(&self) -> usize {
        self.workspace.lengths.len()
    }

    pub fn state_dim(&self) -> usize {
        match (&self.dynamics, &self.projection) {
            (Some(d), _) => d.model.state_dim(),
            (None, Some(p)) => p.state_dim.unwrap_or(self.workspace_dim()),
            (None, None) => self.workspace_dim(),
        }
    }

    /// Width of one particle row: controls with a model, states otherwise.
    pub fn point_dim(&self) -> usize {
        match &self.dynamics {
            Some(d) => d.model.control_dim(),
            None => self.state_dim(),
        }
    }

    /// Collects every semantic error with its field path.
    pub fn validate(&self) -> Result<()> {
        let mut e = Vec::new();
        let v = self.workspace_dim();
        let n = self.state_dim();
        if self.particles == 0 {
            e.push("particles: must be at least 1".to_string());
        }
        if self.steps < 2 {
            e.push("steps: must be at least 2".to_string());
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            e.push("dt: must be positive".to_string());
        }
        if let Err(err) = Workspace::new(self.workspace.lengths.clone()) {
            e.push(format!("workspace.lengths: {err}"));
        }
        if let Some(o) = &self.workspace.origin {
            dim_err(&mut e, "workspace.origin", v, o.len());
        }
        if self.basis.k_max == 0 {
            e.push("basis.k_max: must be at least 1".to_string());
        }
        match &self.projection {
            Some(p) => {
                dim_err(&mut e, "projection.indices", v, p.indices.len());
                if let Some(i) = p.indices.iter().find(|i| **i >= n) {
                    e.push(format!(
                        "projection.indices: index {i} out of range for state dimension {n}"
                    ));
                }
                if self.dynamics.is_some() && p.state_dim.is_some_and(|s| s != n) {
                    e.push(format!(
                        "projection.state_dim: model state dimension is {n}"
                    ));
                }
            }
            None => {
                if n < v {
                    e.push(format!(
                        "projection: required when the state dimension {n} differs from the workspace dimension {v}"
                    ));
                } else if n > v && self.dynamics.is_none() {
                    e.push(
                        "projection: required when state_dim exceeds the workspace dimension"
                            .to_string(),
                    );
                }
            }
        }
        self.validate_measure(&mut e, v);
        if let Some(d) = &self.dynamics {
            dim_err(&mut e, "dynamics.x0", n, d.x0.len());
            let m = d.model.control_dim();
            if let Some(b) = &d.control_min {
                dim_err(&mut e, "dynamics.control_min", m, b.len());
            }
            if let Some(b) = &d.control_max {
                dim_err(&mut e, "dynamics.control_max", m, b.len());
            }
            if let Err(err) = self.model() {
                e.push(format!("dynamics: {err}"));
            }
        }
        if let Err(err) = self.cost.validate() {
            e.push(format!("cost: {err}"));
        }
        if let Some(ep) = &self.cost.endpoints {
            let d = match ep.space {
                PenaltySpace::State => n,
                PenaltySpace::Workspace => v,
            };
            for (name, p) in [
                ("cost.endpoints.initial", &ep.initial),
                ("cost.endpoints.terminal", &ep.terminal),
            ] {
                if let Some(p) = p {
                    dim_err(&mut e, name, d, p.len());
                }
            }
        }
        if let Some(q) = self.cost.state_quadratic.iter().find(|q| q.component >= n) {
            e.push(format!(
                "cost.state_quadratic: component {} out of range",
                q.component
            ));
        }
        if self
            .kernel
            .bandwidth
            .is_some_and(|h| !(h.is_finite() && h > 0.0))
        {
            e.push("kernel.bandwidth: must be positive".to_string());
        }
        if self.kernel.kind != KernelName::Markov
            && (!self.kernel.graph.is_empty() || self.kernel.adjacent_pairs)
        {
            e.push("kernel.graph: only the markov kernel takes a graph".to_string());
        }
        if let Some([t, s]) = self
            .kernel
            .graph
            .iter()
            .find(|[t, s]| *t >= self.steps || *s >= self.steps)
        {
            e.push(format!(
                "kernel.graph: edge [{t}, {s}] outside 0..{}",
                self.steps
            ));
        }
        match &self.prior {
            PriorConfig::Interpolate {
                start,
                end,
                variance,
            } => {
                if self.dynamics.is_some() {
                    e.push(
                        "prior: a dynamics model samples controls, use kind = \"zeros\""
                            .to_string(),
                    );
                }
                dim_err(&mut e, "prior.start", n, start.len());
                dim_err(&mut e, "prior.end", n, end.len());
                variance_err(&mut e, *variance);
            }
            PriorConfig::Zeros { variance } => variance_err(&mut e, *variance),
        }
        if let Err(err) = self.solver.validate() {
            e.push(format!("solver: {err}"));
        }
        if self.solver.seed != 0 {
            e.push("solver.seed: set the top-level seed instead".to_string());
        }
        if let Some(o) = &self.obstacles {
            for (i, ob) in o.fixed.iter().enumerate() {
                dim_err(&mut e, "obstacles.fixed.center", v, ob.center.len());
                if !(ob.radius.is_finite() && ob.radius > 0.0) {
                    e.push(format!("obstacles.fixed[{i}].radius: must be positive"));
                }
            }
            if !(o.sigma.is_finite() && o.sigma >= 0.0) {
                e.push("obstacles.sigma: must be nonnegative".to_string());
            }
            if !(o.planner_margin.is_finite() && o.planner_margin >= 0.0) {
                e.push("obstacles.planner_margin: must be nonnegative".to_string());
            }
            if let Some(s) = &o.spawn {
                if !(s.radius_min > 0.0 && s.radius_max.unwrap_or(s.radius_min) >= s.radius_min) {
                    e.push("obstacles.spawn: need 0 < radius_min <= radius_max".to_string());
                }
            }
        }
        match self.mode {
            Mode::Mpc => {
                if self.dynamics.is_none() {
                    e.push("dynamics: required in mpc mode".to_string());
                }
                if let Some(m) = &self.mpc {
                    let cycles = (m.duration / self.dt).round();
                    if !(cycles >= 1.0)
                        || (cycles * self.dt - m.duration).abs() > 1e-9 * m.duration.max(1.0)
                    {
                        e.push("mpc.duration: must be a positive multiple of dt".to_string());
                    }
                }
            }
            Mode::Bench => {
                let b = self.bench.clone().unwrap_or_default();
                if b.particle_counts
                    .iter()
                    .chain(&b.step_counts)
                    .any(|x| *x == 0)
                    || b.iterations == 0
                {
                    e.push("bench: counts and iterations must be positive".to_string());
                }
                if b.step_counts.iter().any(|t| *t < 2) || b.base_steps < 2 {
                    e.push("bench: path lengths must be at least 2".to_string());
                }
                if b.workspace_dims.contains(&0) {
                    e.push("bench.workspace_dims: must be positive".to_string());
                }
            }
            Mode::Optimize => {}
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(e))
        }
    }

    fn validate_measure(&self, e: &mut Vec<String>, v: usize) {
        match &self.measure {
            MeasureConfig::Uniform => {}
            MeasureConfig::GaussianMixture {
                means,
                covariances,
                std,
                weights,
            } => {
                for (i, m) in means.iter().enumerate() {
                    if m.len() != v {
                        e.push(format!(
                            "measure.means[{i}]: expected dimension {v}, got {}",
                            m.len()
                        ));
                    }
                }
                if covariances.is_some() == std.is_some() {
                    e.push("measure: give exactly one of covariances or std".to_string());
                }
                if let Some(w) = weights {
                    dim_err(e, "measure.weights", means.len(), w.len());
                }
                if e.is_empty() {
                    if let Err(err) = self.target_measure() {
                        e.push(format!("measure: {err}"));
                    }
                }
            }
            MeasureConfig::Empirical {
                points, weights, ..
            } => match points {
                None => e.push("measure.points: missing (inline points or a file)".to_string()),
                Some(p) => {
                    if let Some((i, q)) = p.iter().enumerate().find(|(_, q)| q.len() != v) {
                        e.push(format!(
                            "measure.points[{i}]: expected dimension {v}, got {}",
                            q.len()
                        ));
                    } else if let Err(err) = TargetMeasure::empirical(p.clone(), weights.clone()) {
                        e.push(format!("measure: {err}"));
                    }
                }
            },
        }
    }

    pub fn target_measure(&self) -> Result<TargetMeasure> {
        match &self.measure {
            MeasureConfig::Uniform => Ok(TargetMeasure::Uniform),
            MeasureConfig::GaussianMixture {
                means,
                covariances,
                std,
                weights,
            } => {
                let k = means.len();
                let covs = match (covariances, std) {
                    (Some(c), _) => c.clone(),
                    (None, Some(s)) => means
                        .iter()
                        .map(|m| {
                            (0..m.len())
                                .map(|i| {
                                    (0..m.len())
                                        .map(|j| if i == j { s * s } else { 0.0 })
                                        .collect()
                                })
                                .collect()
                        })
                        .collect(),
                    (None, None) => {
                        return Err(Error::Config(vec![
                            "measure: missing covariances or std".into()
                        ]))
                    }
                };
                let w = weights
                    .clone()
                    .unwrap_or_else(|| vec![1.0 / k.max(1) as f64; k]);
                TargetMeasure::gaussian_mixture(means.clone(), covs, w)
            }
            MeasureConfig::Empirical {
                points, weights, ..
            } => TargetMeasure::empirical(points.clone().unwrap_or_default(), weights.clone()),
        }
    }

    pub fn model(&self) -> Result<Option<DynamicsModel>> {
        let Some(d) = &self.dynamics else {
            return Ok(None);
        };
        let m = d.model.control_dim();
        DynamicsModel::with_bounds(
            d.model.clone(),
            self.dt,
            d.control_min.clone().unwrap_or_else(|| vec![-1.0; m]),
            d.control_max.clone().unwrap_or_else(|| vec![1.0; m]),
        )
        .map(Some)
    }

    /// Workspace the basis is defined on.
    pub fn basis_workspace(&self) -> Result<Workspace> {
        if self.workspace.unit_scale {
            Ok(Workspace::unit(self.workspace_dim()))
        } else {
            Workspace::new(self.workspace.lengths.clone())
        }
    }

    pub fn projection_map(&self) -> Result<ProjectionMap> {
        let v = self.workspace_dim();
        let n = self.state_dim();
        let indices: Vec<usize> = match &self.projection {
            Some(p) => p.indices.clone(),
            None => (0..v).collect(),
        };
        let mut map = ProjectionMap::select(n, &indices)?;
        if let Some(o) = &self.workspace.origin {
            map = map.with_offset(o.iter().map(|x| -x).collect())?;
        }
        if self.workspace.unit_scale {
            map = map.rescaled_to_unit(&Workspace::new(self.workspace.lengths.clone())?)?;
        }
        Ok(map)
    }

    pub fn kernel_config(&self) -> KernelConfig {
        let bandwidth = match self.kernel.bandwidth {
            Some(h) => Bandwidth::Fixed(h),
            None => Bandwidth::MedianHeuristic,
        };
        match self.kernel.kind {
            KernelName::Rbf => KernelConfig::rbf(bandwidth),
            KernelName::ConstantOne => KernelConfig::constant_one(),
            KernelName::Markov => {
                let mut graph: Vec<(usize, usize)> =
                    self.kernel.graph.iter().map(|[t, s]| (*t, *s)).collect();
                if self.kernel.adjacent_pairs {
                    graph.extend((0..self.steps - 1).map(|t| (t, t + 1)));
                }
                KernelConfig {
                    kind: KernelKind::Markov {
                        graph,
                        normalize: self.kernel.normalize,
                    },
                    bandwidth,
                }
            }
        }
    }

    pub fn prior(&self) -> Result<Prior> {
        match &self.prior {
            PriorConfig::Interpolate {
                start,
                end,
                variance,
            } => Prior::interpolate(start, end, self.steps, *variance),
            PriorConfig::Zeros { variance } => {
                Prior::zeros(self.steps, self.point_dim(), *variance)
            }
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            seed: self.seed,
            ..self.solver.clone()
        }
    }

    /// Fixed obstacles followed by the seeded spawned ones.
    pub fn initial_obstacles(&self, x0_workspace: Option<&[f64]>) -> Result<Vec<Obstacle>> {
        let Some(o) = &self.obstacles else {
            return Ok(Vec::new());
        };
        let mut out: Vec<Obstacle> = o
            .fixed
            .iter()
            .map(|ob| Obstacle::new(ob.center.clone(), ob.radius))
            .collect::<Result<_>>()?;
        if let Some(s) = &o.spawn {
            let exclusion = x0_workspace.map(|p| Exclusion {
                point: p.to_vec(),
                margin: s.exclusion_margin,
            });
            out.extend(spawn_obstacles(
                &self.basis_workspace()?,
                s.count,
                (s.radius_min, s.radius_max.unwrap_or(s.radius_min)),
                self.seed,
                exclusion.as_ref(),
            )?);
        }
        Ok(out)
    }

    pub fn build(&self) -> Result<Scenario> {
        self.validate()?;
        let basis = SpectralBasis::new(self.basis_workspace()?, self.basis.k_max)?;
        let map = self.projection_map()?;
        let measure = self.target_measure()?;
        let mu = measure_coefficients(&measure, &basis, self.basis.measure_samples, self.seed)?;
        let model = self.model()?;
        let x0 = self.dynamics.as_ref().map(|d| Array1::from(d.x0.clone()));
        let x0_ws = match &x0 {
            Some(x) => Some(map.project(x.view())?.to_vec()),
            None => None,
        };
        Ok(Scenario {
            obstacles: self.initial_obstacles(x0_ws.as_deref())?,
            basis,
            map,
            measure,
            mu,
            model,
            x0,
            kernel: self.kernel_config(),
            prior: self.prior()?,
            solver: self.solver_config(),
        })
    }
}

fn dim_err(e: &mut Vec<String>, field: &str, expected: usize, got: usize) {
    if expected != got {
        e.push(format!("{field}: expected dimension {expected}, got {got}"));
    }
}

fn variance_err(e: &mut Vec<String>, variance: f64) {
    if !(variance.is_finite() && variance >= 0.0) {
        e.push("prior.variance: must be nonnegative".to_string());
    }
}
