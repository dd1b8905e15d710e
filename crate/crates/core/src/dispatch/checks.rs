use serde::{Deserialize, Serialize};

use super::{run_admm, solve_centralized, AdmmConfig, DispatchError, DispatchResult};
use crate::hub::non_trading_baseline;
use crate::pricing::PriceProfile;
use crate::scenario::Scenario;

/// How to compute the equilibrium.
#[derive(Debug, Clone)]
pub enum Solver {
    Central(crate::qp::QpSettings),
    Admm(AdmmConfig),
}

impl Solver {
    pub fn solve(&self, s: &Scenario, prices: &PriceProfile) -> Result<DispatchResult, DispatchError> {
        match self {
            Solver::Central(settings) => solve_centralized(s, prices, settings),
            Solver::Admm(cfg) => run_admm(s, prices, cfg).map(|r| r.result),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    /// Largest pairwise deviation of any trade entry, kW.
    pub max_trade_deviation: f64,
    /// Largest pairwise deviation of any asset setpoint.
    pub max_setpoint_deviation: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Solves the game for every price profile and compares the minimizers
/// pairwise. Only trades decide `passed`: setpoints of assets with zero
/// marginal cost differences can be non-unique, so their deviation is
/// reported for information.
pub fn verify_price_invariance(
    s: &Scenario,
    prices: &[PriceProfile],
    tol: f64,
    solver: &Solver,
) -> Result<(InvarianceReport, Vec<DispatchResult>), DispatchError> {
    if prices.len() < 2 {
        return Err(DispatchError::Config("price invariance needs at least two price profiles".into()));
    }
    let results = prices
        .iter()
        .map(|c| solver.solve(s, c))
        .collect::<Result<Vec<_>, _>>()?;
    let mut trade_dev: f64 = 0.0;
    let mut setpoint_dev: f64 = 0.0;
    for a in 0..results.len() {
        for b in a + 1..results.len() {
            trade_dev = trade_dev.max(results[a].profile.trades.max_deviation(&results[b].profile.trades));
            setpoint_dev = setpoint_dev.max(results[a].profile.max_setpoint_deviation(&results[b].profile));
        }
    }
    Ok((
        InvarianceReport {
            max_trade_deviation: trade_dev,
            max_setpoint_deviation: setpoint_dev,
            tol,
            passed: trade_dev <= tol,
        },
        results,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialCostGap {
    #[serde(rename = "W")]
    pub w: f64,
    #[serde(rename = "W_nt")]
    pub w_nt: f64,
    /// `(W_nt − W) / W_nt`.
    pub reduction_fraction: f64,
    /// Per-hub `J_i` and `J_i^nt`.
    pub j: Vec<f64>,
    pub j_nt: Vec<f64>,
}

/// Non-trading baselines of every hub.
pub fn baselines(s: &Scenario, settings: &crate::qp::QpSettings) -> Result<Vec<f64>, DispatchError> {
    (0..s.num_hubs())
        .map(|i| non_trading_baseline(s, i, settings).map(|(_, j)| j).map_err(DispatchError::from))
        .collect()
}

pub fn social_cost_gap(s: &Scenario, prices: &PriceProfile, solver: &Solver) -> Result<(SocialCostGap, DispatchResult), DispatchError> {
    let result = solver.solve(s, prices)?;
    let settings = match solver {
        Solver::Central(q) => q.clone(),
        Solver::Admm(cfg) => cfg.qp.clone(),
    };
    let j_nt = baselines(s, &settings)?;
    let w_nt: f64 = j_nt.iter().sum();
    let w = result.social_cost;
    Ok((
        SocialCostGap {
            w,
            w_nt,
            reduction_fraction: (w_nt - w) / w_nt,
            j: result.hub_costs(),
            j_nt,
        },
        result,
    ))
}
