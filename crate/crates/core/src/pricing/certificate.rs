use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::fairness::FixedDispatch;
use super::{PriceProfile, PricingError};
use crate::scenario::components;

/// Trades smaller than this (kW, or kWh when aggregated) are treated as
/// absent when building the trade graph.
pub const TRADE_EPS: f64 = 1e-6;
/// A hub passes when `J_i(p*, c*) ≤ J_i^nt + GAP_TOL`.
pub const GAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregation {
    /// One edge per pair with its horizon-total traded energy, and a single
    /// price applied to every hour.
    #[default]
    Horizon,
    /// One edge per pair and hour.
    Hourly,
}

/// A realized trade: hub `i` receives `energy` from hub `j` (negative means
/// the reverse).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub hour: Option<usize>,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentCertificate {
    pub hubs: Vec<usize>,
    /// Indices into the certificate's edges.
    pub edges: Vec<usize>,
    /// Surplus `W^nt − W` of this component, CHF.
    pub kappa: f64,
}

/// Explicit prices making every hub at least as well off as without trading,
/// built as in the existence proof: with `V` the trade incidence matrix,
/// solve `J(0) + V c = J^nt − (κ/N)·𝟙` per connected component of the
/// realized-trade graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeneficialPriceCertificate {
    pub aggregation: Aggregation,
    pub edges: Vec<Edge>,
    /// `N × E`; column `e` has `+energy` at `i` and `−energy` at `j`.
    pub incidence: Vec<Vec<f64>>,
    /// Network surplus `W^nt − W`, CHF.
    pub kappa: f64,
    pub components: Vec<ComponentCertificate>,
    /// `c*` per edge, CHF/kWh.
    pub edge_prices: Vec<f64>,
    pub prices: PriceProfile,
    /// `J_i(p*, c*) − J_i^nt`.
    pub gaps: Vec<f64>,
    pub passed: bool,
}

impl BeneficialPriceCertificate {
    pub fn check(&self) -> Result<(), PricingError> {
        if self.passed {
            Ok(())
        } else {
            Err(PricingError::CertificateFailed {
                worst_gap: self.gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            })
        }
    }
}

pub fn construct_beneficial_prices(
    model: &FixedDispatch,
    aggregation: Aggregation,
) -> Result<BeneficialPriceCertificate, PricingError> {
    let n = model.num_hubs();
    let hh = model.horizon();
    let mut edges = Vec::new();
    for t in &model.trades.pairs {
        match aggregation {
            Aggregation::Horizon => {
                let energy: f64 = t.values.iter().sum();
                if energy.abs() > TRADE_EPS {
                    edges.push(Edge { i: t.i, j: t.j, hour: None, energy });
                }
            }
            Aggregation::Hourly => {
                for (h, &energy) in t.values.iter().enumerate() {
                    if energy.abs() > TRADE_EPS {
                        edges.push(Edge { i: t.i, j: t.j, hour: Some(h), energy });
                    }
                }
            }
        }
    }
    let mut incidence = vec![vec![0.0; edges.len()]; n];
    for (e, edge) in edges.iter().enumerate() {
        incidence[edge.i][e] = edge.energy;
        incidence[edge.j][e] = -edge.energy;
    }

    let groups = components(n, edges.iter().map(|e| (e.i, e.j)));
    if groups.len() > 1 {
        log::info!("realized trades form {} components; pricing each separately", groups.len());
    }
    let mut edge_prices = vec![0.0; edges.len()];
    let mut certs = Vec::new();
    for hubs in groups {
        let comp_edges: Vec<usize> = (0..edges.len()).filter(|&e| hubs.contains(&edges[e].i)).collect();
        let kappa: f64 = hubs.iter().map(|&i| model.j_nt[i] - model.j_zero[i]).sum();
        if !comp_edges.is_empty() {
            let share = kappa / hubs.len() as f64;
            let v = DMatrix::from_fn(hubs.len(), comp_edges.len(), |r, c| incidence[hubs[r]][comp_edges[c]]);
            let rhs = DVector::from_fn(hubs.len(), |r, _| {
                let i = hubs[r];
                model.j_nt[i] - share - model.j_zero[i]
            });
            let eps = 1e-12 * v.amax();
            let c = v
                .svd(true, true)
                .solve(&rhs, eps)
                .map_err(|e| PricingError::Config(format!("least-squares price solve failed: {e}")))?;
            for (k, &e) in comp_edges.iter().enumerate() {
                edge_prices[e] = c[k];
            }
        }
        certs.push(ComponentCertificate {
            hubs,
            edges: comp_edges,
            kappa,
        });
    }

    let mut prices = model.uniform_prices(0.0);
    for (e, edge) in edges.iter().enumerate() {
        let series = prices
            .pairs
            .iter_mut()
            .find(|p| p.i == edge.i && p.j == edge.j)
            .expect("edge of a trading pair");
        match edge.hour {
            Some(h) => series.values[h] = edge_prices[e],
            None => series.values.iter_mut().for_each(|v| *v = edge_prices[e]),
        }
    }
    debug_assert_eq!(prices.horizon, hh);
    let gaps: Vec<f64> = model
        .costs(&prices)
        .iter()
        .zip(&model.j_nt)
        .map(|(j, nt)| j - nt)
        .collect();
    let passed = gaps.iter().all(|&g| g <= GAP_TOL);
    Ok(BeneficialPriceCertificate {
        aggregation,
        edges,
        incidence,
        kappa: model.j_nt.iter().sum::<f64>() - model.social_cost(),
        components: certs,
        edge_prices,
        prices,
        gaps,
        passed,
    })
}
