//! Trading prices: the fairness metric over normalized cost reductions, the
//! mediated projected-gradient price search, and explicit beneficial prices.
//!
//! All of it works at a fixed equilibrium dispatch. Trades do not depend on
//! the prices, so each hub's cost is affine in them and the fairness metric
//! is a convex quadratic.

mod certificate;
mod fairness;
mod mediation;
mod profile;

use thiserror::Error;

pub use certificate::{
    construct_beneficial_prices, Aggregation, BeneficialPriceCertificate, ComponentCertificate, Edge, GAP_TOL,
    TRADE_EPS,
};
pub use fairness::{
    cost_reduction, estimate_lipschitz, fairness_gradient, fairness_metric, FixedDispatch, DEGENERATE_BASELINE,
    TRADE_NOISE,
};
pub use mediation::{
    mediation_step, run_mediation, FairnessReport, MediationConfig, MediationStatus, MediationTraceRow, PriceSet,
};
pub use profile::PriceProfile;

use crate::qp::QpError;

#[derive(Debug, Error)]
pub enum PricingError {
    #[error("baseline cost {j_nt:e} is too close to zero to normalize a reduction{}", hub.map(|h| format!(" (hub {h})")).unwrap_or_default())]
    DegenerateBaseline { hub: Option<usize>, j_nt: f64 },
    #[error("step β = {beta:e} is not below 2/L = {limit:e}")]
    StepTooLarge { beta: f64, limit: f64 },
    #[error("the feasible price set is empty")]
    ProjectionInfeasible,
    #[error("certificate failed: worst gap {worst_gap:e} CHF")]
    CertificateFailed { worst_gap: f64 },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] QpError),
}
