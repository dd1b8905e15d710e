use serde::{Deserialize, Serialize};

use super::blocks::assemble_without_trades;
use super::{HubError, HubSetpoints, TradeTensor};
use crate::pricing::PriceProfile;
use crate::qp::{QpSettings, QpStatus, QpWorkspace};
use crate::scenario::Scenario;

/// Cost of one hub over the horizon, CHF. `total` is the sum of the parts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub grid_import: f64,
    /// Feed-in remuneration (≤ 0).
    pub grid_feed_in: f64,
    pub gas_chp: f64,
    pub gas_gb: f64,
    /// `Σ c·p_tr`; negative for net exporters.
    pub trade_payments: f64,
    /// `Σ γ·p_tr²`.
    pub trade_tariff: f64,
    pub regularization: f64,
    pub total: f64,
}

impl CostBreakdown {
    fn finish(mut self) -> Self {
        self.total = self.grid_import
            + self.grid_feed_in
            + self.gas_chp
            + self.gas_gb
            + self.trade_payments
            + self.trade_tariff
            + self.regularization;
        self
    }
}

/// Evaluates hub `i`'s objective at the given setpoints and trades.
pub fn local_cost(
    s: &Scenario,
    i: usize,
    setpoints: &HubSetpoints,
    trades: &TradeTensor,
    prices: &PriceProfile,
) -> CostBreakdown {
    let hub = &s.hubs[i];
    let t = &s.tariffs;
    let mut c = CostBreakdown::default();
    let mut total_import = 0.0;
    for h in 0..s.horizon_hours {
        c.grid_import += t.grid_import * setpoints.grid_import[h];
        total_import += setpoints.grid_import[h];
        c.grid_feed_in -= t.grid_feed_in * setpoints.grid_export[h];
        if let Some(chp) = &hub.chp {
            c.gas_chp += t.gas * setpoints.chp_p[h] / chp.eta;
        }
        if let Some(gb) = &hub.gb {
            c.gas_gb += t.gas * setpoints.gb_q[h] / gb.eta;
        }
        for j in s.partners(i) {
            let p = trades.get(i, j, h);
            c.trade_payments += prices.get(i, j, h) * p;
            c.trade_tariff += s.trading_tariff_gamma * p * p;
        }
    }
    c.regularization = s.import_regularization_weight * total_import * total_import;
    c.finish()
}

/// Optimal dispatch of hub `i` with every trade fixed at zero, and its cost
/// `J_i^nt`.
pub fn non_trading_baseline(
    s: &Scenario,
    i: usize,
    settings: &QpSettings,
) -> Result<(HubSetpoints, f64), HubError> {
    let blocks = assemble_without_trades(s, i)?;
    let mut ws = QpWorkspace::new(&blocks.to_problem(), settings.clone())?;
    let sol = ws.solve();
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => {
            return Err(HubError::InfeasibleHub {
                hub: s.hubs[i].id.clone(),
                hour: None,
                detail: "no dispatch satisfies the balances and storage limits without trading".into(),
            })
        }
        QpStatus::MaxIter => {
            return Err(HubError::NotConverged {
                hub: s.hubs[i].id.clone(),
                residual: sol.residuals.max(),
            })
        }
    }
    let sp = blocks.setpoints(s, sol.x.as_slice());
    Ok((sp, sol.objective))
}
