use nalgebra::{DMatrix, DVector};

use super::{DispatchError, DispatchResult, DispatchStatus};
use crate::hub::{assemble_local_blocks, local_cost, DispatchProfile, LocalBlocks, TradeTensor, Var};
use crate::pricing::PriceProfile;
use crate::qp::{QpProblem, QpSettings, QpStatus, QpWorkspace};
use crate::scenario::Scenario;

/// Column map from every hub's local vector into the stacked social-cost
/// vector: asset blocks are concatenated, and both endpoints' trade columns
/// map onto one shared variable per pair-hour (`+1` for the lower index,
/// `−1` for the mirror), which makes reciprocity structural.
pub(crate) struct Stacking {
    pub blocks: Vec<LocalBlocks>,
    pub maps: Vec<Vec<(usize, f64)>>,
    pub num_vars: usize,
    /// Offset of the first trade variable.
    pub trade_offset: usize,
}

impl Stacking {
    pub fn new(s: &Scenario, prices: &PriceProfile) -> Result<Self, DispatchError> {
        let blocks = (0..s.num_hubs())
            .map(|i| assemble_local_blocks(s, i, prices))
            .collect::<Result<Vec<_>, _>>()?;
        let hh = s.horizon_hours;
        let pairs = s.pairs();
        let trade_offset: usize = blocks.iter().map(|b| b.layout.num_asset_vars()).sum();
        let mut maps = Vec::with_capacity(blocks.len());
        let mut offset = 0;
        for (i, b) in blocks.iter().enumerate() {
            let mut map = Vec::with_capacity(b.num_vars());
            for (k, var) in b.layout.blocks.iter().enumerate() {
                for h in 0..hh {
                    let local = k * hh + h;
                    map.push(match *var {
                        Var::Trade(j) => {
                            let pk = pairs
                                .iter()
                                .position(|p| p.i == i.min(j) && p.j == i.max(j))
                                .expect("partner has a pair");
                            (trade_offset + pk * hh + h, if i < j { 1.0 } else { -1.0 })
                        }
                        _ => (offset + local, 1.0),
                    });
                }
            }
            offset += b.layout.num_asset_vars();
            maps.push(map);
        }
        Ok(Self {
            blocks,
            maps,
            num_vars: trade_offset + pairs.len() * hh,
            trade_offset,
        })
    }

    pub fn problem(&self) -> QpProblem {
        let n = self.num_vars;
        let mut p = DMatrix::zeros(n, n);
        let mut q = DVector::zeros(n);
        let mut lower = DVector::from_element(n, f64::NEG_INFINITY);
        let mut upper = DVector::from_element(n, f64::INFINITY);
        let m: usize = self.blocks.iter().map(|b| b.equalities.len()).sum();
        let mut a = DMatrix::zeros(m, n);
        let mut rhs = DVector::zeros(m);
        let mut row = 0;
        for (b, map) in self.blocks.iter().zip(&self.maps) {
            for &(r, c, v) in &b.quad {
                let (gr, sr) = map[r];
                let (gc, sc) = map[c];
                p[(gr, gc)] += sr * sc * v;
            }
            for (j, &(g, sign)) in map.iter().enumerate() {
                q[g] += sign * b.lin[j];
                let (lo, hi) = if sign > 0.0 {
                    (b.lower[j], b.upper[j])
                } else {
                    (-b.upper[j], -b.lower[j])
                };
                lower[g] = lower[g].max(lo);
                upper[g] = upper[g].min(hi);
            }
            for eq in &b.equalities {
                for &(j, v) in &eq.entries {
                    let (g, sign) = map[j];
                    a[(row, g)] += sign * v;
                }
                rhs[row] = eq.rhs;
                row += 1;
            }
        }
        QpProblem::new(p, q).with_equalities(a, rhs).with_bounds(lower, upper)
    }

    /// Hub `i`'s local vector from a stacked vector.
    pub fn local(&self, i: usize, x: &[f64]) -> Vec<f64> {
        self.maps[i].iter().map(|&(g, sign)| sign * x[g]).collect()
    }

    pub fn trades(&self, s: &Scenario, x: &[f64]) -> TradeTensor {
        let mut t = TradeTensor::zeros(s);
        let hh = s.horizon_hours;
        for (k, p) in t.pairs.iter_mut().enumerate() {
            p.values
                .copy_from_slice(&x[self.trade_offset + k * hh..self.trade_offset + (k + 1) * hh]);
        }
        t
    }
}

/// The social-cost QP in stacked coordinates: asset blocks of each hub in
/// turn, then one shared variable per linked pair and hour.
pub fn central_problem(s: &Scenario, prices: &PriceProfile) -> Result<QpProblem, DispatchError> {
    Ok(Stacking::new(s, prices)?.problem())
}

/// Minimizes the social cost `Σ_i J_i` over all hubs jointly, with trades
/// shared between endpoints. Prices cancel pairwise in the objective, so the
/// minimizer does not depend on them; they only split the cost across hubs.
pub fn solve_centralized(
    s: &Scenario,
    prices: &PriceProfile,
    settings: &QpSettings,
) -> Result<DispatchResult, DispatchError> {
    let stack = Stacking::new(s, prices)?;
    let problem = stack.problem();
    let mut ws = QpWorkspace::new(&problem, settings.clone())?;
    let sol = ws.solve();
    let status = match sol.status {
        QpStatus::Optimal => DispatchStatus::Converged,
        QpStatus::MaxIter => DispatchStatus::MaxIterExceeded,
        QpStatus::Infeasible => {
            return Err(DispatchError::InfeasibleNetwork(format!(
                "social-cost problem has no feasible point (certificate {:e})",
                sol.certificate.unwrap_or(f64::NAN)
            )))
        }
    };
    if status == DispatchStatus::MaxIterExceeded {
        log::warn!(
            "centralized solve stopped at {} iterations, KKT residual {:e}",
            sol.iterations,
            sol.residuals.max()
        );
    }
    let x = sol.x.as_slice();
    let trades = stack.trades(s, x);
    let hubs: Vec<_> = stack
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| b.setpoints(s, &stack.local(i, x)))
        .collect();
    let profile = DispatchProfile { hubs, trades };
    Ok(finish(s, profile, prices, status, sol.iterations, Vec::new(), 0))
}

/// Evaluates per-hub costs and the social cost for a profile.
pub(crate) fn finish(
    s: &Scenario,
    profile: DispatchProfile,
    prices: &PriceProfile,
    status: DispatchStatus,
    iterations: usize,
    trace: Vec<super::TraceRow>,
    message_count: usize,
) -> DispatchResult {
    let costs: Vec<_> = (0..s.num_hubs())
        .map(|i| local_cost(s, i, &profile.hubs[i], &profile.trades, prices))
        .collect();
    let social_cost = costs.iter().map(|c| c.total).sum();
    DispatchResult {
        hub_ids: s.hubs.iter().map(|h| h.id.clone()).collect(),
        profile,
        prices: prices.clone(),
        costs,
        social_cost,
        status,
        iterations,
        trace,
        message_count,
    }
}
