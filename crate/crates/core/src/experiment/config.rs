use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicsParams, MessagePair};
use crate::error::{Error, Result};
use crate::graph::{
    force_directed_embedding, generate_synthetic_population, load_edge_list, KernelConfig,
    MixtureComponent, Population,
};
use crate::solver::{ClusterConfig, CostSpec, Goal, MassScale, SolverConfig};

/// Full description of a scenario, loadable from and persisted as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub network: NetworkConfig,
    #[serde(default)]
    pub dynamics: DynamicsParams,
    #[serde(default)]
    pub kernel: KernelConfig,
    pub costs: CostsConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub clustering: ClusterConfig,
    #[serde(default)]
    pub cold_start: ColdStartConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkConfig {
    /// Initial opinions drawn from a Gaussian mixture.
    Synthetic {
        n: usize,
        components: Vec<MixtureComponent>,
    },
    /// Initial opinions from a force-directed layout of an edge list.
    EdgeList {
        path: PathBuf,
        #[serde(default = "default_layout_iterations")]
        iterations: usize,
    },
}

fn default_layout_iterations() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsConfig {
    pub adversary: CostConfig,
    pub defender: CostConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    /// Row-major `d x d` per-individual state weight.
    pub state_weight: Vec<Vec<f64>>,
    /// Row-major `d x d` message weight.
    pub input_weight: Vec<Vec<f64>>,
    pub goal: GoalConfig,
    #[serde(default)]
    pub mass_scale: MassScale,
}

/// Either `"initial"` or an explicit point such as `[-1.0, 0.0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GoalConfig {
    Point(Vec<f64>),
    Named(GoalName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalName {
    Initial,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColdStartConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversary: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defender: Option<Vec<f64>>,
}

fn square(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Config(format!("{what} must be a non-empty square matrix")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

impl CostConfig {
    pub fn to_spec(&self) -> Result<CostSpec> {
        let goal = match &self.goal {
            GoalConfig::Point(g) => Goal::Point(DVector::from_column_slice(g)),
            GoalConfig::Named(GoalName::Initial) => Goal::InitialOpinions,
        };
        let mut spec = CostSpec::new(
            square(&self.state_weight, "state_weight")?,
            square(&self.input_weight, "input_weight")?,
            goal,
        );
        spec.mass_scale = self.mass_scale;
        Ok(spec)
    }

    fn diagonal(q: &[f64], r: f64, goal: GoalConfig) -> Self {
        let d = q.len();
        let diag = |v: &dyn Fn(usize) -> f64| -> Vec<Vec<f64>> {
            (0..d)
                .map(|i| (0..d).map(|j| if i == j { v(i) } else { 0.0 }).collect())
                .collect()
        };
        CostConfig {
            state_weight: diag(&|i| q[i]),
            input_weight: diag(&|_| r),
            goal,
            mass_scale: MassScale::default(),
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale synthetic scenario: 300 individuals in three Gaussian
    /// clusters in the plane, an adversary pulling only the first coordinate
    /// toward -1 and a defender holding initial opinions.
    pub fn synthetic() -> Self {
        ExperimentConfig {
            seeds: vec![1, 2, 3],
            output_dir: PathBuf::from("out"),
            network: NetworkConfig::Synthetic {
                n: 300,
                components: vec![
                    MixtureComponent::isotropic(vec![-1.0, 1.0], 0.1, 0.4),
                    MixtureComponent::isotropic(vec![1.0, 1.0], 0.1, 0.3),
                    MixtureComponent::isotropic(vec![0.0, -1.0], 0.1, 0.3),
                ],
            },
            dynamics: DynamicsParams {
                alpha: 0.3,
                lambda: 0.7,
                eta: 0.5,
                ..DynamicsParams::default()
            },
            kernel: KernelConfig::gaussian(1.0),
            costs: CostsConfig {
                adversary: CostConfig::diagonal(&[3.0, 0.0], 20.0, GoalConfig::Point(vec![-1.0, 0.0])),
                defender: CostConfig::diagonal(&[1.0, 1.0], 80.0, GoalConfig::Named(GoalName::Initial)),
            },
            solver: SolverConfig {
                horizon: 5,
                max_level: 3,
                steps: 30,
                ..SolverConfig::default()
            },
            clustering: ClusterConfig::default(),
            cold_start: ColdStartConfig::default(),
        }
    }

    /// Edge-list scenario with the embedding-scale parameters used for the
    /// ego-network data set.
    pub fn edge_list(path: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            network: NetworkConfig::EdgeList {
                path: path.into(),
                iterations: default_layout_iterations(),
            },
            dynamics: DynamicsParams {
                alpha: 0.5,
                lambda: 0.7,
                eta: 1.0,
                ..DynamicsParams::default()
            },
            kernel: KernelConfig::gaussian(0.32),
            costs: CostsConfig {
                adversary: CostConfig::diagonal(&[3.0, 3.0], 20.0, GoalConfig::Point(vec![0.0, -1.5])),
                defender: CostConfig::diagonal(&[1.0, 1.0], 80.0, GoalConfig::Named(GoalName::Initial)),
            },
            solver: SolverConfig {
                max_level: 10,
                ..SolverConfig::default()
            },
            ..ExperimentConfig::synthetic()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }

    /// Opinion dimension implied by the cost matrices.
    pub fn dim(&self) -> usize {
        self.costs.defender.state_weight.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        self.dynamics.validate()?;
        self.kernel.validate()?;
        self.solver.validate()?;
        self.clustering.validate()?;
        let d = self.dim();
        self.costs.adversary.to_spec()?.validate(d)?;
        self.costs.defender.to_spec()?.validate(d)?;
        match &self.network {
            NetworkConfig::Synthetic { n, components } => {
                if *n < 2 {
                    return Err(Error::Config("synthetic network needs n >= 2".into()));
                }
                if components.iter().any(|c| c.mean.len() != d) {
                    return Err(Error::Config(format!(
                        "mixture components must have dimension {d}"
                    )));
                }
            }
            NetworkConfig::EdgeList { iterations, .. } => {
                if d != 2 {
                    return Err(Error::Config("edge-list embeddings are two-dimensional".into()));
                }
                if *iterations == 0 {
                    return Err(Error::Config("layout iterations must be positive".into()));
                }
            }
        }
        for v in [&self.cold_start.adversary, &self.cold_start.defender]
            .into_iter()
            .flatten()
        {
            if v.len() != d {
                return Err(Error::Config(format!("cold-start messages must have dimension {d}")));
            }
        }
        Ok(())
    }

    pub fn build_population(&self, seed: u64) -> Result<Population> {
        match &self.network {
            NetworkConfig::Synthetic { n, components } => {
                generate_synthetic_population(*n, components, seed)
            }
            NetworkConfig::EdgeList { path, iterations } => {
                force_directed_embedding(&load_edge_list(path)?, *iterations, seed)
            }
        }
    }

    /// Configured cold-start messages, falling back to `defaults` per player.
    pub fn cold_start_messages(&self, defaults: MessagePair) -> MessagePair {
        let pick = |v: &Option<Vec<f64>>, fallback: DVector<f64>| {
            v.as_ref()
                .map_or(fallback, |v| DVector::from_column_slice(v))
        };
        MessagePair::new(
            pick(&self.cold_start.adversary, defaults.adversary),
            pick(&self.cold_start.defender, defaults.defender),
        )
    }
}
