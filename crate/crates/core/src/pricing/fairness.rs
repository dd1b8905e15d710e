use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{PriceProfile, PricingError};
use crate::dispatch::DispatchResult;
use crate::hub::TradeTensor;

/// Baselines smaller than this in magnitude cannot normalize a reduction.
pub const DEGENERATE_BASELINE: f64 = 1e-9;

/// Trades smaller than this, kW, are treated as zero.
pub const TRADE_NOISE: f64 = 1e-9;

/// Normalized cost reduction `(J_nt − J) / J_nt`.
pub fn cost_reduction(j_nt: f64, j: f64) -> Result<f64, PricingError> {
    if j_nt.abs() < DEGENERATE_BASELINE {
        return Err(PricingError::DegenerateBaseline { hub: None, j_nt });
    }
    Ok((j_nt - j) / j_nt)
}

/// Population variance `(1/N) Σ (d_i − d̄)²`; zero for an empty slice.
pub fn fairness_metric(d: &[f64]) -> f64 {
    if d.is_empty() {
        return 0.0;
    }
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// The equilibrium held fixed while prices move. Trades are
/// price-independent, so every hub's cost is affine in the prices:
/// `J_i(c) = J_i(0) + Σ_j Σ_h c_(i,j)[h] · p_tr[i][j][h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedDispatch {
    pub hub_ids: Vec<String>,
    pub trades: TradeTensor,
    /// `J_i` with all prices at zero, CHF.
    pub j_zero: Vec<f64>,
    /// Non-trading baselines `J_i^nt`, CHF.
    pub j_nt: Vec<f64>,
}

impl FixedDispatch {
    pub fn new(hub_ids: Vec<String>, trades: TradeTensor, j_zero: Vec<f64>, j_nt: Vec<f64>) -> Self {
        assert_eq!(j_zero.len(), trades.num_hubs);
        assert_eq!(j_nt.len(), trades.num_hubs);
        assert_eq!(hub_ids.len(), trades.num_hubs);
        Self {
            hub_ids,
            trades,
            j_zero,
            j_nt,
        }
    }

    /// Strips the trade payments (whatever prices `result` was solved at)
    /// from each hub's cost. Trades below [`TRADE_NOISE`] are solver noise
    /// and set to exactly zero.
    pub fn from_result(result: &DispatchResult, j_nt: Vec<f64>) -> Self {
        let j_zero = result.costs.iter().map(|c| c.total - c.trade_payments).collect();
        let mut trades = result.profile.trades.clone();
        for v in trades.pairs.iter_mut().flat_map(|p| p.values.iter_mut()) {
            if v.abs() < TRADE_NOISE {
                *v = 0.0;
            }
        }
        Self::new(result.hub_ids.clone(), trades, j_zero, j_nt)
    }

    pub fn num_hubs(&self) -> usize {
        self.j_nt.len()
    }

    pub fn horizon(&self) -> usize {
        self.trades.horizon
    }

    /// Hubs whose baseline can normalize a reduction. The others are left
    /// out of `d̄`, `φ` and its gradient.
    pub fn included(&self) -> Vec<usize> {
        (0..self.num_hubs())
            .filter(|&i| self.j_nt[i].abs() >= DEGENERATE_BASELINE)
            .collect()
    }

    /// A price profile over this dispatch's trading pairs.
    pub fn uniform_prices(&self, price: f64) -> PriceProfile {
        PriceProfile {
            num_hubs: self.num_hubs(),
            horizon: self.horizon(),
            pairs: self
                .trades
                .pairs
                .iter()
                .map(|p| crate::hub::PairSeries {
                    i: p.i,
                    j: p.j,
                    values: vec![price; self.horizon()],
                })
                .collect(),
        }
    }

    fn check_prices(&self, c: &PriceProfile) {
        assert!(
            c.pairs.len() == self.trades.pairs.len()
                && c.pairs.iter().zip(&self.trades.pairs).all(|(a, b)| a.i == b.i && a.j == b.j),
            "price profile and trades cover different pairs"
        );
    }

    /// `J_i(p*, c)` for every hub.
    pub fn costs(&self, c: &PriceProfile) -> Vec<f64> {
        self.check_prices(c);
        let mut j = self.j_zero.clone();
        for (t, pc) in self.trades.pairs.iter().zip(&c.pairs) {
            let pay: f64 = t.values.iter().zip(&pc.values).map(|(p, c)| p * c).sum();
            j[t.i] += pay;
            j[t.j] -= pay;
        }
        j
    }

    /// `d_i` at prices `c`; `NaN` for excluded hubs.
    pub fn reductions(&self, c: &PriceProfile) -> Vec<f64> {
        self.costs(c)
            .iter()
            .zip(&self.j_nt)
            .map(|(&j, &nt)| cost_reduction(nt, j).unwrap_or(f64::NAN))
            .collect()
    }

    /// `φ` over the included hubs.
    pub fn phi(&self, c: &PriceProfile) -> f64 {
        let d = self.reductions(c);
        let kept: Vec<f64> = self.included().iter().map(|&i| d[i]).collect();
        fairness_metric(&kept)
    }

    /// Social cost; independent of the prices.
    pub fn social_cost(&self) -> f64 {
        self.j_zero.iter().sum()
    }

    /// `∂d/∂c`: one row per hub, one column per flattened price entry
    /// (pair-major, hour-minor). Rows of excluded hubs are zero.
    pub fn reduction_jacobian(&self) -> DMatrix<f64> {
        let hh = self.horizon();
        let mut m = DMatrix::zeros(self.num_hubs(), self.trades.pairs.len() * hh);
        let included = self.included();
        for (k, t) in self.trades.pairs.iter().enumerate() {
            for h in 0..hh {
                let p = t.values[h];
                if included.contains(&t.i) {
                    m[(t.i, k * hh + h)] = -p / self.j_nt[t.i];
                }
                if included.contains(&t.j) {
                    m[(t.j, k * hh + h)] = p / self.j_nt[t.j];
                }
            }
        }
        m
    }
}

/// `∇_c φ` at prices `c`. Each pair's mediator needs only the reductions of
/// its two endpoints and the network mean `d̄`:
///
/// `∂φ/∂c_(i,j)[h] = −(2/N)·((d_i − d̄)·p_ij[h]/J_i^nt + (d_j − d̄)·p_ji[h]/J_j^nt)`
///
/// with `N` the number of included hubs. Terms of excluded hubs vanish.
pub fn fairness_gradient(model: &FixedDispatch, c: &PriceProfile) -> PriceProfile {
    let d = model.reductions(c);
    let included = model.included();
    let n = included.len() as f64;
    let mean = if included.is_empty() {
        0.0
    } else {
        included.iter().map(|&i| d[i]).sum::<f64>() / n
    };
    let dev = |i: usize| {
        if included.contains(&i) {
            (d[i] - mean) / model.j_nt[i]
        } else {
            0.0
        }
    };
    let mut g = c.clone();
    for (gp, t) in g.pairs.iter_mut().zip(&model.trades.pairs) {
        let (wi, wj) = (dev(t.i), dev(t.j));
        for (gv, &p) in gp.values.iter_mut().zip(&t.values) {
            // p_ji = −p_ij
            *gv = -(2.0 / n) * (wi * p - wj * p);
        }
    }
    g
}

/// Largest eigenvalue of the (constant) Hessian `(2/N)·MᵀΠM` of `φ`, with
/// `M` the reduction Jacobian and `Π` the centering projector over the
/// included hubs. Computed through the small `N × N` matrix `ΠMMᵀΠ`, which
/// has the same nonzero spectrum.
pub fn estimate_lipschitz(model: &FixedDispatch) -> f64 {
    let included = model.included();
    let n = included.len();
    if n == 0 {
        return 0.0;
    }
    let m = model.reduction_jacobian();
    let rows = DMatrix::from_fn(n, m.ncols(), |r, c| m[(included[r], c)]);
    let mut centered = rows.clone();
    for col in 0..centered.ncols() {
        let mean = rows.column(col).sum() / n as f64;
        for r in 0..n {
            centered[(r, col)] -= mean;
        }
    }
    let gram = &centered * centered.transpose();
    let top = gram.symmetric_eigenvalues().max().max(0.0);
    2.0 / n as f64 * top
}
