//! Scenario description, file formats and validation.
//!
//! A scenario file is one JSON document:
//!
//! ```json
//! {
//!   "name": "threehub",
//!   "horizon_hours": 24,
//!   "tariffs": { "grid_import": {"value": 0.22, "unit": "CHF/kWh"}, "grid_feed_in": 0.12, "gas": 0.115 },
//!   "hubs": [
//!     { "id": "hub1",
//!       "grid": { "import_max": 5000, "export_max": 5000 },
//!       "converters": [ {"kind": "pv", "eta": 0.15, "area": {"value": 8400, "unit": "m2"}, "p_max": 2500}, ... ] }
//!   ],
//!   "links": [ {"from_hub": "hub1", "to_hub": "hub2", "capacity_kappa": {"value": 1000, "unit": "kW"}} ],
//!   "series": { "hub1": {"L_e_kW": [...], "L_h_kW": [...], "irradiance_kW_m2": [...]} },
//!   "params": { "trading_tariff_gamma": 0.001, "admm_penalty_rho": 1.0, "import_regularization_weight": 1e-4 }
//! }
//! ```
//!
//! Any number may be a bare number (canonical unit) or `{"value", "unit"}`.
//! `series` may instead be `{"csv": "relative/path.csv"}` with columns
//! `hub_id,hour,L_e_kW,L_h_kW,irradiance_kW_m2`.
//!
//! Converter records carry a `kind` tag:
//!
//! | kind | fields |
//! |------|--------|
//! | `chp` | `eta`, `vertices` (4 × `{"p", "q"}`) |
//! | `hp`  | `cop`, `q_min`, `q_max` |
//! | `gb`  | `eta`, `q_min`, `q_max` |
//! | `pv`  | `eta`, `area`, `p_min`, `p_max` |
//! | `es`, `ts` | `standby_gamma`, `cycle_eta`, `soc_min`, `soc_max`, `charge_min`, `charge_max`, `discharge_min`, `discharge_max`, `soc_initial` |
//!
//! Missing `*_min` fields default to 0; missing grid limits are unbounded.

mod parse;
pub mod synth;
pub mod results;
pub mod units;
mod validate;
mod write;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::hub::spec::{ChpSpec, GbSpec, HpSpec, HubSpec, PvSpec, StorageSpec};
pub use parse::parse_scenario;
pub use validate::{validate_scenario, Finding, ValidationReport};
pub use write::{scenario_to_json, write_scenario};

pub const DEFAULT_GAMMA: f64 = 0.001;
pub const DEFAULT_RHO: f64 = 1.0;
pub const DEFAULT_KAPPA: f64 = 1000.0;
pub const DEFAULT_IMPORT_REGULARIZATION: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(String),
    #[error("`{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("`{path}`: unknown unit `{unit}`, expected {expected}")]
    Unit {
        path: String,
        unit: String,
        expected: String,
    },
}

impl ScenarioError {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Utility prices, CHF per kWh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TariffTable {
    pub grid_import: f64,
    pub grid_feed_in: f64,
    pub gas: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeLink {
    pub from_hub: String,
    pub to_hub: String,
    /// Trade limit κ, kW, applied in both directions.
    pub capacity_kappa: f64,
}

/// Demand of one hub, kW per hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSeries {
    pub electric: Vec<f64>,
    pub thermal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub hubs: Vec<HubSpec>,
    pub tariffs: TariffTable,
    pub links: Vec<TradeLink>,
    pub horizon_hours: usize,
    /// Per hub, in the order of `hubs`.
    pub demand: Vec<DemandSeries>,
    /// Per hub, kW/m².
    pub irradiance: Vec<Vec<f64>>,
    /// γ, CHF per kW² per hour, paid by each endpoint of a trade.
    pub trading_tariff_gamma: f64,
    pub admm_penalty_rho: f64,
    pub import_regularization_weight: f64,
}

/// An unordered trading pair, stored with `i < j` (hub indices).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub kappa: f64,
}

impl Scenario {
    pub fn num_hubs(&self) -> usize {
        self.hubs.len()
    }

    pub fn hub_index(&self, id: &str) -> Option<usize> {
        self.hubs.iter().position(|h| h.id == id)
    }

    /// Trading pairs from the links, canonical `i < j`, sorted. Links with
    /// unknown endpoints or self-loops are skipped (validation reports them).
    pub fn pairs(&self) -> Vec<Pair> {
        let mut out: Vec<Pair> = Vec::new();
        for link in &self.links {
            let (Some(a), Some(b)) = (self.hub_index(&link.from_hub), self.hub_index(&link.to_hub))
            else {
                continue;
            };
            if a == b {
                continue;
            }
            let (i, j) = (a.min(b), a.max(b));
            if !out.iter().any(|p| p.i == i && p.j == j) {
                out.push(Pair {
                    i,
                    j,
                    kappa: link.capacity_kappa,
                });
            }
        }
        out.sort_by_key(|p| (p.i, p.j));
        out
    }

    /// Trading partners of hub `i`, ascending.
    pub fn partners(&self, i: usize) -> Vec<usize> {
        self.pairs()
            .iter()
            .filter_map(|p| {
                if p.i == i {
                    Some(p.j)
                } else if p.j == i {
                    Some(p.i)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Connected components of the link graph, each sorted ascending.
    pub fn components(&self) -> Vec<Vec<usize>> {
        components(self.num_hubs(), self.pairs().iter().map(|p| (p.i, p.j)))
    }
}

/// Connected components of an undirected graph on `n` nodes.
pub fn components(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of_group: Vec<usize> = Vec::new();
    for x in 0..n {
        let r = find(&mut parent, x);
        match root_of_group.iter().position(|&g| g == r) {
            Some(k) => groups[k].push(x),
            None => {
                root_of_group.push(r);
                groups.push(vec![x]);
            }
        }
    }
    groups
}

/// Reads, parses and validates a scenario file. Validation errors are
/// reported as [`ScenarioError::Schema`] naming the first offending field.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let scenario = parse_scenario(&text, path.parent())?;
    let report = validate_scenario(&scenario);
    if let Some(first) = report.errors.first() {
        return Err(ScenarioError::schema(first.path.clone(), first.message.clone()));
    }
    for w in &report.warnings {
        log::warn!("{}: `{}`: {}", path.display(), w.path, w.message);
    }
    Ok(scenario)
}
