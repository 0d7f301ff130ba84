//! Run configuration: a TOML document and its validated form.
//!
//! ```toml
//! grouping = 1                      # optional, lumps m steps together
//!
//! [system]
//! a = [[1.5, 1.0], [0.0, 1.1]]      # row-major
//! b = [[1.25, 0.5], [1.0, 1.0]]
//!
//! [noise]
//! kind = "gaussian"                 # or kind = "file", path = "..."
//! mean = [0.0, 0.0]                 # optional, default 0
//! covariance = [[1.0, 0.0], [0.0, 1.0]]  # optional, default I
//!
//! [input_set]                       # box form, or matrix = [[..]], offset = [..]
//! lower = [-60.0, -60.0]
//! upper = [60.0, 60.0]
//!
//! [two_layer]                       # optional
//! enabled = true
//! gain = { lqr = { q = [[1.0, 0.0], [0.0, 1.0]], r = [[1.0, 0.0], [0.0, 1.0]] } }
//! abstract_input = { lower = [-20.0, -20.0], upper = [20.0, 20.0] }  # omit for R^p
//!
//! [partition]
//! lower = [-41.0, -41.0]
//! upper = [41.0, 41.0]
//! counts = [41, 41]
//!
//! [property]
//! goal = [{ lower = [-3.0, -3.0], upper = [3.0, 3.0] }]
//! avoid = []
//! avoid_complement = true
//! horizon = 16
//! threshold = 0.9
//!
//! [scenario]
//! samples = 3200
//! overall_confidence = 0.99
//! seed = 0
//!
//! [simulate]
//! runs = 1000
//! seed = 0
//! initial_states = [[-20.0, 0.0]]
//!
//! [outputs]
//! directory = "out"
//! export_model = false
//! ```
//!
//! With `grouping = m > 1` the two-layer gain and `U'` refer to the grouped
//! system, whose input stacks `m` consecutive base inputs.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::dynamics::{
    group_dynamics, grouped_horizon, make_stabilized, solve_dare, LinearSystem, LqrWeights,
    StabilizedSystem,
};
use crate::error::{Error, Result};
use crate::geometry::{HalfspacePolytope, HyperRectangle};
use crate::noise::NoiseSource;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub system: SystemDoc,
    pub noise: NoiseDoc,
    pub input_set: SetDoc,
    #[serde(default)]
    pub two_layer: TwoLayerDoc,
    #[serde(default = "default_grouping")]
    pub grouping: usize,
    pub partition: PartitionDoc,
    pub property: PropertyDoc,
    #[serde(default)]
    pub scenario: ScenarioDoc,
    #[serde(default)]
    pub simulate: SimulateDoc,
    #[serde(default)]
    pub outputs: OutputsDoc,
}

fn default_grouping() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseDoc {
    Gaussian {
        mean: Option<Vec<f64>>,
        covariance: Option<Vec<Vec<f64>>>,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SetDoc {
    Box(BoxDoc),
    HalfSpaces {
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDoc {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoLayerDoc {
    #[serde(default)]
    pub enabled: bool,
    pub gain: Option<GainDoc>,
    pub abstract_input: Option<SetDoc>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum GainDoc {
    Matrix(Vec<Vec<f64>>),
    Lqr { q: Vec<Vec<f64>>, r: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionDoc {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyDoc {
    pub goal: Vec<BoxDoc>,
    #[serde(default)]
    pub avoid: Vec<BoxDoc>,
    #[serde(default = "default_true")]
    pub avoid_complement: bool,
    pub horizon: usize,
    #[serde(default)]
    pub threshold: f64,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_confidence")]
    pub overall_confidence: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples() -> usize {
    3200
}

fn default_confidence() -> f64 {
    0.99
}

impl Default for ScenarioDoc {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            overall_confidence: default_confidence(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateDoc {
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial_states: Vec<Vec<f64>>,
}

fn default_runs() -> usize {
    1000
}

impl Default for SimulateDoc {
    fn default() -> Self {
        Self {
            runs: default_runs(),
            seed: 0,
            initial_states: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsDoc {
    pub directory: Option<PathBuf>,
    #[serde(default)]
    pub export_model: bool,
}

#[derive(Debug, Clone)]
pub enum GainSpec {
    Explicit(DMatrix<f64>),
    Lqr(LqrWeights),
}

#[derive(Debug, Clone)]
pub struct TwoLayerConfig {
    pub gain: GainSpec,
    pub abstract_input_set: HalfspacePolytope,
}

#[derive(Debug, Clone)]
pub struct PropertyConfig {
    pub goal: Vec<HyperRectangle>,
    pub avoid: Vec<HyperRectangle>,
    pub avoid_complement: bool,
    /// In base time steps.
    pub horizon: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub samples: usize,
    pub overall_confidence: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SimulateConfig {
    pub runs: usize,
    pub seed: u64,
    pub initial_states: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct OutputConfig {
    pub directory: Option<PathBuf>,
    pub export_model: bool,
}

/// Dynamics after grouping and optional stabilization.
#[derive(Debug, Clone)]
pub struct PreparedDynamics {
    /// The (possibly grouped) plant the abstraction is built for.
    pub plant: LinearSystem,
    pub stabilized: Option<StabilizedSystem>,
    /// Horizon in plant steps.
    pub horizon: usize,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub system: LinearSystem,
    pub grouping: usize,
    pub two_layer: Option<TwoLayerConfig>,
    pub domain: HyperRectangle,
    pub counts: Vec<usize>,
    pub property: PropertyConfig,
    pub scenario: ScenarioConfig,
    pub simulate: SimulateConfig,
    pub outputs: OutputConfig,
    pub prepared: PreparedDynamics,
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(Error::config(field, "matrix must be non-empty"));
    }
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::config(field, "rows have different lengths"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn rect(field: &str, b: &BoxDoc, dim: usize) -> Result<HyperRectangle> {
    if b.lower.len() != dim || b.upper.len() != dim {
        return Err(Error::config(field, format!("expected {dim}-dimensional bounds")));
    }
    HyperRectangle::new(b.lower.clone(), b.upper.clone())
        .map_err(|e| Error::config(field, e.to_string()))
}

fn polytope(field: &str, set: &SetDoc, dim: usize) -> Result<HalfspacePolytope> {
    match set {
        SetDoc::Box(b) => Ok(HalfspacePolytope::from_box(&rect(field, b, dim)?)),
        SetDoc::HalfSpaces { matrix: m, offset } => {
            let c = matrix(&format!("{field}.matrix"), m)?;
            if c.ncols() != dim {
                return Err(Error::config(field, format!("expected {dim} columns")));
            }
            HalfspacePolytope::new(&c, &DVector::from_column_slice(offset))
                .map_err(|e| Error::config(field, e.to_string()))
        }
    }
}

/// Parses and fully validates a TOML document; relative sample paths are
/// resolved against `base_dir`.
pub fn parse_config(document: &str, base_dir: Option<&Path>) -> Result<RunConfig> {
    let doc: ConfigDocument =
        toml::from_str(document).map_err(|e| Error::config("<document>", e.to_string()))?;
    RunConfig::from_document(doc, base_dir)
}

pub fn parse_config_file(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path.parent())
}

impl RunConfig {
    pub fn from_document(doc: ConfigDocument, base_dir: Option<&Path>) -> Result<Self> {
        let a = matrix("system.a", &doc.system.a)?;
        let b = matrix("system.b", &doc.system.b)?;
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::config("system.a", "must be square"));
        }
        if b.nrows() != n {
            return Err(Error::config("system.b", format!("must have {n} rows")));
        }
        let p = b.ncols();

        let noise = match &doc.noise {
            NoiseDoc::Gaussian { mean, covariance } => {
                let mean = match mean {
                    Some(m) if m.len() != n => {
                        return Err(Error::config("noise.mean", format!("expected length {n}")))
                    }
                    Some(m) => DVector::from_column_slice(m),
                    None => DVector::zeros(n),
                };
                let cov = match covariance {
                    Some(c) => matrix("noise.covariance", c)?,
                    None => DMatrix::identity(n, n),
                };
                NoiseSource::gaussian(mean, cov)
                    .map_err(|e| Error::config("noise.covariance", e.to_string()))?
            }
            NoiseDoc::File { path } => {
                let path = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                NoiseSource::from_file(&path, n)
                    .map_err(|e| Error::config("noise.path", e.to_string()))?
            }
        };

        let input_set = polytope("input_set", &doc.input_set, p)?;
        let system = LinearSystem::new(a, b, input_set, noise)
            .map_err(|e| Error::config("system", e.to_string()))?;

        if doc.grouping == 0 {
            return Err(Error::config("grouping", "must be at least 1"));
        }
        let grouped_p = p * doc.grouping;

        let two_layer = if doc.two_layer.enabled {
            let gain = match &doc.two_layer.gain {
                None => GainSpec::Lqr(LqrWeights::identity(n, grouped_p)),
                Some(GainDoc::Matrix(k)) => GainSpec::Explicit(matrix("two_layer.gain.matrix", k)?),
                Some(GainDoc::Lqr { q, r }) => GainSpec::Lqr(
                    LqrWeights::new(matrix("two_layer.gain.lqr.q", q)?, matrix("two_layer.gain.lqr.r", r)?)
                        .map_err(|e| Error::config("two_layer.gain.lqr", e.to_string()))?,
                ),
            };
            let abstract_input_set = match &doc.two_layer.abstract_input {
                Some(set) => polytope("two_layer.abstract_input", set, grouped_p)?,
                None => HalfspacePolytope::unconstrained(grouped_p),
            };
            Some(TwoLayerConfig {
                gain,
                abstract_input_set,
            })
        } else {
            None
        };

        if doc.partition.lower.len() != n || doc.partition.upper.len() != n {
            return Err(Error::config("partition", format!("expected {n}-dimensional bounds")));
        }
        let domain = HyperRectangle::new(doc.partition.lower.clone(), doc.partition.upper.clone())
            .map_err(|e| Error::config("partition", e.to_string()))?;
        if doc.partition.counts.len() != n || doc.partition.counts.contains(&0) {
            return Err(Error::config("partition.counts", format!("expected {n} positive counts")));
        }

        let prop = &doc.property;
        let goal = prop
            .goal
            .iter()
            .enumerate()
            .map(|(i, g)| rect(&format!("property.goal[{i}]"), g, n))
            .collect::<Result<Vec<_>>>()?;
        let avoid = prop
            .avoid
            .iter()
            .enumerate()
            .map(|(i, g)| rect(&format!("property.avoid[{i}]"), g, n))
            .collect::<Result<Vec<_>>>()?;
        if !prop.avoid_complement {
            return Err(Error::config(
                "property.avoid_complement",
                "the sink must be unsafe: zero-sample mass is folded into it",
            ));
        }
        if !(0.0..=1.0).contains(&prop.threshold) {
            return Err(Error::config("property.threshold", "must lie in [0, 1]"));
        }
        if prop.horizon == 0 {
            return Err(Error::config("property.horizon", "must be at least 1"));
        }
        let property = PropertyConfig {
            goal,
            avoid,
            avoid_complement: prop.avoid_complement,
            horizon: prop.horizon,
            threshold: prop.threshold,
        };

        let sc = &doc.scenario;
        if sc.samples == 0 {
            return Err(Error::config("scenario.samples", "must be at least 1"));
        }
        if !(sc.overall_confidence > 0.0 && sc.overall_confidence < 1.0) {
            return Err(Error::config("scenario.overall_confidence", "must lie in (0, 1)"));
        }
        let scenario = ScenarioConfig {
            samples: sc.samples,
            overall_confidence: sc.overall_confidence,
            seed: sc.seed,
        };

        let mut initial_states = Vec::new();
        for (i, x) in doc.simulate.initial_states.iter().enumerate() {
            if x.len() != n {
                return Err(Error::config(
                    format!("simulate.initial_states[{i}]"),
                    format!("expected length {n}"),
                ));
            }
            let x = DVector::from_column_slice(x);
            if !domain.contains(x.as_slice()) {
                return Err(Error::config(
                    format!("simulate.initial_states[{i}]"),
                    "initial state lies outside the partition domain",
                ));
            }
            initial_states.push(x);
        }
        if initial_states.is_empty() {
            initial_states.push(DVector::from_vec(domain.center()));
        }
        let simulate = SimulateConfig {
            runs: doc.simulate.runs,
            seed: doc.simulate.seed,
            initial_states,
        };

        let mut cfg = RunConfig {
            prepared: PreparedDynamics {
                plant: system.clone(),
                stabilized: None,
                horizon: prop.horizon,
            },
            system,
            grouping: doc.grouping,
            two_layer,
            domain,
            counts: doc.partition.counts.clone(),
            property,
            scenario,
            simulate,
            outputs: OutputConfig {
                directory: doc.outputs.directory.clone(),
                export_model: doc.outputs.export_model,
            },
        };
        cfg.prepared = cfg.prepare_dynamics()?;
        Ok(cfg)
    }

    /// Grouping, gain computation and the two-layer assumptions.
    pub fn prepare_dynamics(&self) -> Result<PreparedDynamics> {
        let plant = group_dynamics(&self.system, self.grouping)
            .map_err(|e| Error::config("grouping", e.to_string()))?;
        let horizon = grouped_horizon(self.property.horizon, self.grouping)
            .map_err(|e| Error::config("property.horizon", e.to_string()))?;
        plant
            .b_inverse()
            .map_err(|e| Error::config("system.b", e.to_string()))?;
        let stabilized = match &self.two_layer {
            None => None,
            Some(tl) => {
                let gain = match &tl.gain {
                    GainSpec::Explicit(k) => k.clone(),
                    GainSpec::Lqr(w) => {
                        solve_dare(plant.a(), plant.b(), w)
                            .map_err(|e| Error::config("two_layer.gain.lqr", e.to_string()))?
                            .1
                    }
                };
                if gain.nrows() != plant.input_dim() || gain.ncols() != plant.state_dim() {
                    return Err(Error::config(
                        "two_layer.gain",
                        format!("expected a {}x{} gain", plant.input_dim(), plant.state_dim()),
                    ));
                }
                Some(
                    make_stabilized(&plant, gain, tl.abstract_input_set.clone(), &self.domain)
                        .map_err(|e| Error::config("two_layer", e.to_string()))?,
                )
            }
        };
        Ok(PreparedDynamics {
            plant,
            stabilized,
            horizon,
        })
    }

    /// Replaces the noise model with recorded samples.
    pub fn with_samples_file(mut self, path: &Path) -> Result<Self> {
        let noise = NoiseSource::from_file(path, self.system.state_dim())?;
        self.system = self.system.with_noise(noise)?;
        self.prepared = self.prepare_dynamics()?;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scenario.seed = seed;
        self.simulate.seed = seed;
        self
    }
}
