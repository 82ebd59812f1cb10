//! TOML experiment recipes and their translation into engine inputs.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::adversary::{
    DeterministicErrorModel, ErrorFamily, ErrorModel, GmmComponent, GmmSpec,
    StochasticErrorModel, Window,
};
use crate::engine::{
    Algorithm, AdversarySpec, InitStates, RunConfig, TopologySource, WeightSchemeCfg,
};
use crate::graph::Topology;
use crate::protocol::Role;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Adversary(#[from] crate::adversary::AdversaryError),
}

fn default_runs() -> u32 {
    1
}
fn default_p_link() -> f64 {
    1.0
}
fn default_msr_f() -> usize {
    1
}

/// Root of an experiment recipe file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: String,
    pub seed: u64,
    /// Default: 500 rounds, 1000 for sdcc.
    pub horizon: Option<u64>,
    #[serde(default = "default_runs")]
    pub runs: u32,
    #[serde(default = "default_p_link")]
    pub p_link: f64,
    pub topology: TopologyCfg,
    #[serde(default)]
    pub weights: WeightsCfg,
    pub init: InitCfg,
    #[serde(default)]
    pub protocol: ProtocolCfg,
    #[serde(default = "default_msr_f")]
    pub msr_f: usize,
    #[serde(default, rename = "adversary")]
    pub adversaries: Vec<AdversaryCfg>,
    /// Algorithms the `compare` subcommand runs; defaults to
    /// ddcc, sdcc, wmsr.
    #[serde(default)]
    pub compare: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologyCfg {
    ErdosRenyi { n: usize, p_edge: f64, seed: u64 },
    /// Edge-list file: first line `n`, then one `i j` pair per line.
    EdgeList { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightsCfg {
    Perron { gamma: Option<f64> },
    Metropolis,
}

impl Default for WeightsCfg {
    fn default() -> Self {
        WeightsCfg::Perron { gamma: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitCfg {
    Uniform { low: f64, high: f64 },
    Explicit { values: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolCfg {
    pub alpha: f64,
    pub rho: f64,
    pub delta: Option<f64>,
}

impl Default for ProtocolCfg {
    fn default() -> Self {
        ProtocolCfg { alpha: 5.0, rho: 0.9, delta: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryCfg {
    pub node: usize,
    pub role: String,
    pub error: ErrorCfg,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowCfg {
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ErrorCfg {
    /// `a * cos(b * k)`
    Cosine { a: f64, b: f64, window: Option<WindowCfg> },
    /// `a * r^k`
    Geometric { a: f64, r: f64, window: Option<WindowCfg> },
    Constant { c: f64, window: Option<WindowCfg> },
    Table { rows: Vec<(u64, f64)>, window: Option<WindowCfg> },
    /// Bernoulli(theta) x GMM
    Stochastic {
        theta: f64,
        components: Vec<GmmComponentCfg>,
        window: Option<WindowCfg>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmComponentCfg {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(toml::from_str(&text)?)
    }

    /// Build the engine config. `base_dir` anchors relative file paths,
    /// `seed_override` replaces the recipe seed when set.
    pub fn to_run_config(
        &self,
        base_dir: &Path,
        seed_override: Option<u64>,
    ) -> Result<RunConfig, ConfigError> {
        let algorithm = parse_algorithm(&self.algorithm)?;
        let topology = match &self.topology {
            TopologyCfg::ErdosRenyi { n, p_edge, seed } => TopologySource::Generate {
                n: *n,
                p_edge: *p_edge,
                seed: *seed,
            },
            TopologyCfg::EdgeList { path } => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    base_dir.join(path)
                };
                let text = std::fs::read_to_string(&full).map_err(|source| ConfigError::Io {
                    path: full.clone(),
                    source,
                })?;
                TopologySource::Explicit(Topology::from_edge_list(&text)?)
            }
        };
        let weights = match &self.weights {
            WeightsCfg::Perron { gamma } => WeightSchemeCfg::Perron { gamma: *gamma },
            WeightsCfg::Metropolis => WeightSchemeCfg::Metropolis,
        };
        let init = match &self.init {
            InitCfg::Uniform { low, high } => InitStates::Uniform { low: *low, high: *high },
            InitCfg::Explicit { values } => InitStates::Explicit(values.clone()),
        };
        let adversaries = self
            .adversaries
            .iter()
            .map(|a| {
                Ok(AdversarySpec {
                    id: a.node,
                    role: parse_role(&a.role)?,
                    model: build_error_model(&a.error)?,
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        if self.runs == 0 {
            return Err(ConfigError::Invalid("runs must be >= 1".into()));
        }
        let horizon = self.horizon.unwrap_or(match algorithm {
            Algorithm::Sdcc => 1000,
            _ => 500,
        });
        Ok(RunConfig {
            topology,
            weights,
            init,
            adversaries,
            algorithm,
            alpha: self.protocol.alpha,
            rho: self.protocol.rho,
            delta: self.protocol.delta,
            p_link: self.p_link,
            horizon,
            master_seed: seed_override.unwrap_or(self.seed),
            runs: self.runs,
            msr_f: self.msr_f,
        })
    }

    /// Algorithm list for `compare`; defaults to ddcc, sdcc, wmsr.
    pub fn comparison_list(&self) -> Result<Vec<Algorithm>, ConfigError> {
        if self.compare.is_empty() {
            return Ok(vec![Algorithm::Ddcc, Algorithm::Sdcc, Algorithm::Wmsr]);
        }
        self.compare.iter().map(|s| parse_algorithm(s)).collect()
    }
}

pub fn parse_algorithm(s: &str) -> Result<Algorithm, ConfigError> {
    match s {
        "plain" => Ok(Algorithm::Plain),
        "ddcc" => Ok(Algorithm::Ddcc),
        "sdcc" => Ok(Algorithm::Sdcc),
        "wmsr" => Ok(Algorithm::Wmsr),
        other => Err(ConfigError::Invalid(format!(
            "unknown algorithm {other:?} (expected plain, ddcc, sdcc, or wmsr)"
        ))),
    }
}

fn parse_role(s: &str) -> Result<Role, ConfigError> {
    match s {
        "malicious" => Ok(Role::Malicious),
        "faulty" => Ok(Role::Faulty),
        other => Err(ConfigError::Invalid(format!(
            "unknown role {other:?} (expected malicious or faulty)"
        ))),
    }
}

fn window(w: &Option<WindowCfg>) -> Option<Window> {
    w.as_ref().map(|w| Window { start: w.start, end: w.end })
}

fn build_error_model(cfg: &ErrorCfg) -> Result<ErrorModel, ConfigError> {
    Ok(match cfg {
        ErrorCfg::Cosine { a, b, window: w } => ErrorModel::Deterministic(DeterministicErrorModel {
            family: ErrorFamily::Cosine { a: *a, b: *b },
            window: window(w),
        }),
        ErrorCfg::Geometric { a, r, window: w } => {
            ErrorModel::Deterministic(DeterministicErrorModel {
                family: ErrorFamily::Geometric { a: *a, r: *r },
                window: window(w),
            })
        }
        ErrorCfg::Constant { c, window: w } => ErrorModel::Deterministic(DeterministicErrorModel {
            family: ErrorFamily::Constant { c: *c },
            window: window(w),
        }),
        ErrorCfg::Table { rows, window: w } => ErrorModel::Deterministic(DeterministicErrorModel {
            family: ErrorFamily::Table(rows.clone()),
            window: window(w),
        }),
        ErrorCfg::Stochastic { theta, components, window: w } => {
            let comps = components
                .iter()
                .map(|c| GmmComponent {
                    weight: c.weight,
                    mean: c.mean,
                    variance: c.variance,
                })
                .collect();
            ErrorModel::Stochastic(StochasticErrorModel::new(
                *theta,
                GmmSpec::new(comps)?,
                window(w),
            )?)
        }
    })
}
