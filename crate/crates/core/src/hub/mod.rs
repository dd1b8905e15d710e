//! Hub physics and costs as QP blocks.
//!
//! Each hub's decision vector is a sequence of blocks of `H` entries, one
//! per hour (index = block offset · H + hour). Blocks appear in this fixed
//! order, present only if the hub has the asset:
//!
//! | block | meaning | unit |
//! |-------|---------|------|
//! | `chp_w0..chp_w3` | CHP vertex weights | – |
//! | `hp_q` | heat pump heat output (electric input `hp_q / cop`) | kW |
//! | `gb_q` | gas boiler heat output | kW |
//! | `pv_p` | PV output (curtailable) | kW |
//! | `es_soc`, `es_ch`, `es_dc` | electrical storage | kWh, kW, kW |
//! | `ts_soc`, `ts_ch`, `ts_dc` | thermal storage | kWh, kW, kW |
//! | `grid_import`, `grid_export` | grid exchange | kW |
//! | `trade(j)` | `p_tr[i][j]` per partner `j`, ascending | kW |
//!
//! Equality rows per hour: electric balance, thermal balance, CHP simplex,
//! storage dynamics. Capacity limits are variable bounds; the terminal
//! state of charge is held at or above its initial value.
//!
//! Cost: `import·p_import − feed_in·p_export + gas·(fuel_chp + fuel_gb)
//! + Σ_j (c_ij·p_ij + γ·p_ij²) + w·(Σ_h p_import[h])²`. The last term is a
//! small strong-convexity regularizer; it is part of the hub's objective and
//! therefore of `J_i`.

mod blocks;
mod cost;
mod layout;
mod profile;
pub mod spec;

use thiserror::Error;

pub use blocks::{assemble_local_blocks, LocalBlocks, RowLabel, SparseRow, StorageKind};
pub use cost::{local_cost, non_trading_baseline, CostBreakdown};
pub use layout::{Layout, Var};
pub use profile::{DispatchProfile, HubSetpoints, PairSeries, TradeTensor};
pub use spec::{ChpSpec, GbSpec, HpSpec, HubSpec, PvSpec, StorageSpec};

use crate::qp::QpError;

#[derive(Debug, Error)]
pub enum HubError {
    #[error("hub `{hub}` is infeasible: {detail}")]
    InfeasibleHub {
        hub: String,
        /// First hour whose balance cannot be met, when known.
        hour: Option<usize>,
        detail: String,
    },
    #[error("QP for hub `{hub}` did not converge (KKT residual {residual:e})")]
    NotConverged { hub: String, residual: f64 },
    #[error(transparent)]
    Solver(#[from] QpError),
}

#[derive(Debug, Error, PartialEq)]
#[error("CHP weights must be nonnegative and sum to 1 (sum {sum}, min {min})")]
pub struct WeightError {
    pub sum: f64,
    pub min: f64,
}

/// Available PV output per hour: `min(eta · I[h] · area, p_max)`, never
/// negative.
pub fn pv_output(spec: &PvSpec, irradiance: &[f64]) -> Vec<f64> {
    irradiance
        .iter()
        .map(|&i| (spec.eta * i * spec.area_m2).min(spec.p_bounds[1]).max(0.0))
        .collect()
}

/// CHP operating point for vertex weights: `(p, q, fuel)` with
/// `fuel = p / eta`.
pub fn chp_point(spec: &ChpSpec, weights: &[f64; 4]) -> Result<(f64, f64, f64), WeightError> {
    let sum: f64 = weights.iter().sum();
    let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    if (sum - 1.0).abs() > 1e-9 || min < -1e-9 {
        return Err(WeightError { sum, min });
    }
    let p: f64 = weights.iter().zip(&spec.vertices).map(|(w, v)| w * v.0).sum();
    let q: f64 = weights.iter().zip(&spec.vertices).map(|(w, v)| w * v.1).sum();
    Ok((p, q, p / spec.eta))
}
