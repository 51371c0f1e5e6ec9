//! JSON network and cost configuration.
//!
//! ```json
//! {
//!   "nodes": 2,
//!   "edges": [{ "from": 0, "to": 1, "weight": 1.0 }],
//!   "origins": [0],
//!   "destinations": [1],
//!   "markov": { "rates": [[-1.0, 1.0], [1.0, -1.0]] },
//!   "alpha": 0.0,
//!   "bounds": { "beta_bar": 2.0, "delta_bar": 2.0 },
//!   "params": { "beta": 1.0, "delta": 1.0 },
//!   "costs": { "budget": 3.0 }
//! }
//! ```
//!
//! Nodes are numbered from 0. An edge weight is either one number for every
//! mode or a list with one entry per mode, where 0 switches the edge off in
//! that mode. Bounds and parameters accept a scalar or a list in the order
//! destinations appear, respectively edges appear in `edges`. Costs default
//! to `Σβ + Σδ`; explicit costs are lists of `{ "c", "exponent" }` terms per
//! destination (`g`) and per edge (`h`).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{
    build_graph, BufferNetwork, Edge, GraphSpec, MarkovChain, ModelError, ParamBounds, TuningParams,
};
use crate::problems::{CostModel, ProblemError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed config at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("invalid network: {0}")]
    Model(#[from] ModelError),
    #[error("invalid cost model: {0}")]
    Cost(#[from] ProblemError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

impl ScalarOrList {
    fn expand(&self, len: usize, what: &str) -> Result<Vec<f64>, ConfigError> {
        match self {
            ScalarOrList::Scalar(x) => Ok(vec![*x; len]),
            ScalarOrList::List(v) if v.len() == len => Ok(v.clone()),
            ScalarOrList::List(v) => Err(ConfigError::Invalid(format!(
                "{what} has {} entries, expected {len}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    pub from: usize,
    pub to: usize,
    pub weight: ScalarOrList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovConfig {
    pub rates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub beta_bar: ScalarOrList,
    pub delta_bar: ScalarOrList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub beta: ScalarOrList,
    pub delta: ScalarOrList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub c: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Vec<TermConfig>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<Vec<TermConfig>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub nodes: usize,
    pub edges: Vec<EdgeConfig>,
    pub origins: Vec<usize>,
    pub destinations: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub markov: Option<MarkovConfig>,
    #[serde(default)]
    pub alpha: f64,
    pub bounds: BoundsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<CostConfig>,
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub net: BufferNetwork,
    pub params: Option<TuningParams>,
    pub cost: CostModel,
    pub raw: NetworkConfig,
}

pub fn parse_config(text: &str) -> Result<LoadedConfig, ConfigError> {
    let raw: NetworkConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    raw.load()
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

impl NetworkConfig {
    pub fn load(&self) -> Result<LoadedConfig, ConfigError> {
        let chain = match &self.markov {
            Some(m) => MarkovChain::from_rows(&m.rates)?,
            None => MarkovChain::single(),
        };
        let modes = chain.modes();
        let weights = self
            .edges
            .iter()
            .map(|e| e.weight.expand(modes, &format!("weight of edge {}->{}", e.from, e.to)))
            .collect::<Result<Vec<_>, _>>()?;
        let graphs = (0..modes)
            .map(|m| {
                let edges = self
                    .edges
                    .iter()
                    .zip(&weights)
                    .filter(|(_, w)| w[m] != 0.0)
                    .map(|(e, w)| Edge {
                        from: e.from,
                        to: e.to,
                        weight: w[m],
                    })
                    .collect();
                build_graph(GraphSpec {
                    n: self.nodes,
                    edges,
                    origins: self.origins.clone(),
                    destinations: self.destinations.clone(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        // per-edge lists follow the config order; the network orders edges
        // by first appearance across modes
        let active: Vec<&EdgeConfig> = self
            .edges
            .iter()
            .zip(&weights)
            .filter(|(_, w)| w.iter().any(|&x| x != 0.0))
            .map(|(e, _)| e)
            .collect();
        let n_edges = active.len();
        let n_dest = self.destinations.len();
        let reorder = |values: Vec<f64>, graphs_edges: &[(usize, usize)]| -> Vec<f64> {
            graphs_edges
                .iter()
                .map(|&(f, t)| {
                    let k = active.iter().position(|e| e.from == f && e.to == t).expect("edge from config");
                    values[k]
                })
                .collect()
        };
        let union: Vec<(usize, usize)> = {
            let mut u = Vec::new();
            for g in &graphs {
                for e in g.edges() {
                    if !u.contains(&(e.from, e.to)) {
                        u.push((e.from, e.to));
                    }
                }
            }
            u
        };
        let bounds = ParamBounds {
            beta_bar: self.bounds.beta_bar.expand(n_dest, "beta_bar")?,
            delta_bar: reorder(self.bounds.delta_bar.expand(n_edges, "delta_bar")?, &union),
        };
        let net = BufferNetwork::new(graphs, chain, self.alpha, bounds)?;
        let params = match &self.params {
            Some(p) => {
                let params = TuningParams {
                    beta: p.beta.expand(n_dest, "beta")?,
                    delta: reorder(p.delta.expand(n_edges, "delta")?, net.edges()),
                };
                params.check(&net)?;
                Some(params)
            }
            None => None,
        };
        let costs = self.costs.clone().unwrap_or_default();
        let terms = |list: &[TermConfig]| list.iter().map(|t| (t.c, t.exponent)).collect::<Vec<_>>();
        let unit = vec![(1.0, 1.0)];
        let g: Vec<Vec<(f64, f64)>> = match &costs.g {
            Some(g) if g.len() != n_dest => {
                return Err(ConfigError::Invalid(format!(
                    "costs.g has {} entries, expected {n_dest}",
                    g.len()
                )))
            }
            Some(g) => g.iter().map(|t| terms(t)).collect(),
            None => vec![unit.clone(); n_dest],
        };
        let h: Vec<Vec<(f64, f64)>> = match &costs.h {
            Some(h) if h.len() != n_edges => {
                return Err(ConfigError::Invalid(format!(
                    "costs.h has {} entries, expected {n_edges}",
                    h.len()
                )))
            }
            Some(h) => {
                let listed: Vec<Vec<(f64, f64)>> = h.iter().map(|t| terms(t)).collect();
                net.edges()
                    .iter()
                    .map(|&(f, t)| listed[active.iter().position(|e| e.from == f && e.to == t).expect("edge from config")].clone())
                    .collect()
            }
            None => vec![unit; n_edges],
        };
        let mut cost = CostModel::from_terms(&net, &g, &h)?;
        cost.budget = costs.budget;
        cost.gamma_bound = costs.gamma_bound;
        Ok(LoadedConfig {
            net,
            params,
            cost,
            raw: self.clone(),
        })
    }

    /// Config of the two-node chain with unit parameters.
    pub fn e1() -> Self {
        NetworkConfig {
            nodes: 2,
            edges: vec![EdgeConfig {
                from: 0,
                to: 1,
                weight: ScalarOrList::Scalar(1.0),
            }],
            origins: vec![0],
            destinations: vec![1],
            markov: None,
            alpha: 0.0,
            bounds: BoundsConfig {
                beta_bar: ScalarOrList::Scalar(2.0),
                delta_bar: ScalarOrList::Scalar(2.0),
            },
            params: Some(ParamsConfig {
                beta: ScalarOrList::Scalar(1.0),
                delta: ScalarOrList::Scalar(1.0),
            }),
            costs: None,
        }
    }
}
