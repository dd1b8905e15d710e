//! The trading game: centralized social-cost solve (the oracle) and the
//! distributed consensus protocol between hubs.

mod admm;
mod central;
mod checks;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use admm::{average, dual_update, run_admm, AdmmConfig, AdmmState, RoundMessage};
pub use central::{central_problem, solve_centralized};
pub use admm::AdmmRun;
pub use checks::{baselines, social_cost_gap, verify_price_invariance, InvarianceReport, SocialCostGap, Solver};

use crate::hub::{CostBreakdown, DispatchProfile, HubError};
use crate::pricing::PriceProfile;
use crate::qp::QpError;

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("network is infeasible: {0}")]
    InfeasibleNetwork(String),
    #[error(transparent)]
    Hub(#[from] HubError),
    #[error(transparent)]
    Solver(#[from] QpError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DispatchStatus {
    Converged,
    /// Iteration limit reached; the result holds the last iterate.
    MaxIterExceeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    #[serde(rename = "W")]
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub hub_ids: Vec<String>,
    pub profile: DispatchProfile,
    /// Prices the costs were evaluated at.
    pub prices: PriceProfile,
    pub costs: Vec<CostBreakdown>,
    /// Social cost `W = Σ_i J_i`, CHF.
    pub social_cost: f64,
    pub status: DispatchStatus,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
    pub message_count: usize,
}

impl DispatchResult {
    pub fn hub_costs(&self) -> Vec<f64> {
        self.costs.iter().map(|c| c.total).collect()
    }
}
