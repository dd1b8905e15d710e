use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::fairness::{estimate_lipschitz, fairness_gradient, fairness_metric, FixedDispatch};
use super::{PriceProfile, PricingError};
use crate::qp::{solve_qp, QpProblem, QpStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediationConfig {
    /// Gradient step β; `None` means `1/L`.
    pub step_beta: Option<f64>,
    /// Lipschitz constant of `∇φ`; `None` means computed from the dispatch.
    pub lipschitz_l: Option<f64>,
    /// Price box, CHF/kWh.
    pub price_min: f64,
    pub price_max: f64,
    /// Restrict prices to those leaving every hub no worse off than without
    /// trading.
    pub safeguard: bool,
    /// Stop when `|Δφ| ≤ tol · max(1, φ)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MediationConfig {
    fn default() -> Self {
        Self {
            step_beta: None,
            lipschitz_l: None,
            price_min: -0.5,
            price_max: 0.5,
            safeguard: false,
            tol: 1e-14,
            max_iter: 5000,
        }
    }
}

impl MediationConfig {
    /// Resolves `(β, L)`. Rejects `β ≤ 0` and `β ≥ 2/L`. With `L = 0` (no
    /// trades) the step is irrelevant and reported as zero.
    pub fn resolve_step(&self, model: &FixedDispatch) -> Result<(f64, f64), PricingError> {
        let l = self.lipschitz_l.unwrap_or_else(|| estimate_lipschitz(model));
        if !(self.price_min <= self.price_max) {
            return Err(PricingError::Config(format!(
                "empty price box [{}, {}]",
                self.price_min, self.price_max
            )));
        }
        if l <= 0.0 {
            return Ok((0.0, 0.0));
        }
        let beta = self.step_beta.unwrap_or(1.0 / l);
        if !(beta > 0.0) {
            return Err(PricingError::Config(format!("step β = {beta} must be positive")));
        }
        if beta >= 2.0 / l {
            return Err(PricingError::StepTooLarge { beta, limit: 2.0 / l });
        }
        Ok((beta, l))
    }
}

/// Feasible prices `𝒞`: a box, optionally intersected with the halfspaces
/// `J_i(p*, c) ≤ J_i^nt`.
#[derive(Debug, Clone)]
pub struct PriceSet {
    lower: f64,
    upper: f64,
    /// `a_i · c ≤ b_i` over the flattened prices.
    halfspaces: Option<(DMatrix<f64>, DVector<f64>)>,
}

impl PriceSet {
    pub fn boxed(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            halfspaces: None,
        }
    }

    pub fn new(model: &FixedDispatch, cfg: &MediationConfig) -> Self {
        let mut set = Self::boxed(cfg.price_min, cfg.price_max);
        if cfg.safeguard {
            // J_i(c) = J_i(0) + a_i·c ≤ J_i^nt  with  a_i = −J_i^nt · ∂d_i/∂c
            let hh = model.horizon();
            let n = model.num_hubs();
            let mut a = DMatrix::zeros(n, model.trades.pairs.len() * hh);
            for (k, t) in model.trades.pairs.iter().enumerate() {
                for h in 0..hh {
                    a[(t.i, k * hh + h)] = t.values[h];
                    a[(t.j, k * hh + h)] = -t.values[h];
                }
            }
            let b = DVector::from_fn(n, |i, _| model.j_nt[i] - model.j_zero[i]);
            set.halfspaces = Some((a, b));
        }
        set
    }

    /// Euclidean projection. The box alone is a clamp; with halfspaces a
    /// small QP is solved.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>, PricingError> {
        let clamped: Vec<f64> = v.iter().map(|x| x.clamp(self.lower, self.upper)).collect();
        let Some((a, b)) = &self.halfspaces else {
            return Ok(clamped);
        };
        let slack = a * DVector::from_column_slice(&clamped) - b;
        if slack.iter().all(|&s| s <= 0.0) {
            return Ok(clamped);
        }
        let n = v.len();
        let problem = QpProblem::new(DMatrix::identity(n, n), -DVector::from_column_slice(v))
            .with_inequalities(a.clone(), b.clone())
            .with_bounds(
                DVector::from_element(n, self.lower),
                DVector::from_element(n, self.upper),
            );
        let sol = solve_qp(&problem, 1e-12, 50_000)?;
        match sol.status {
            QpStatus::Optimal => Ok(sol.x.as_slice().to_vec()),
            QpStatus::Infeasible => Err(PricingError::ProjectionInfeasible),
            QpStatus::MaxIter => Err(PricingError::Config(format!(
                "price projection did not converge (KKT residual {:e})",
                sol.residuals.max()
            ))),
        }
    }
}

/// `c_{k+1} = Π_𝒞(c_k − β·g)`.
pub fn mediation_step(
    c: &PriceProfile,
    gradient: &PriceProfile,
    beta: f64,
    set: &PriceSet,
) -> Result<PriceProfile, PricingError> {
    let v: Vec<f64> = c
        .to_flat()
        .iter()
        .zip(gradient.to_flat())
        .map(|(c, g)| c - beta * g)
        .collect();
    Ok(c.with_flat(&set.project(&v)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MediationStatus {
    Converged,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediationTraceRow {
    pub iter: usize,
    pub phi: f64,
    /// Largest price change of the iteration, CHF/kWh.
    pub max_step: f64,
}

/// Outcome of a mediation run at the final prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub hub_ids: Vec<String>,
    /// `d_i`; `NaN` (`null` in JSON) for hubs with a degenerate baseline.
    #[serde(with = "nan_as_null")]
    pub d: Vec<f64>,
    pub d_mean: f64,
    pub phi: f64,
    pub j_trading: Vec<f64>,
    pub j_nontrading: Vec<f64>,
    pub beta: f64,
    pub lipschitz_l: f64,
    pub trace: Vec<MediationTraceRow>,
    pub status: MediationStatus,
}

impl FairnessReport {
    pub fn evaluate(model: &FixedDispatch, c: &PriceProfile) -> Self {
        let d = model.reductions(c);
        let kept: Vec<f64> = model.included().iter().map(|&i| d[i]).collect();
        let d_mean = if kept.is_empty() {
            0.0
        } else {
            kept.iter().sum::<f64>() / kept.len() as f64
        };
        Self {
            hub_ids: model.hub_ids.clone(),
            d,
            d_mean,
            phi: fairness_metric(&kept),
            j_trading: model.costs(c),
            j_nontrading: model.j_nt.clone(),
            beta: 0.0,
            lipschitz_l: 0.0,
            trace: Vec::new(),
            status: MediationStatus::Converged,
        }
    }

    /// `max_i |d_i − d̄|` over hubs with a usable baseline.
    pub fn max_deviation(&self) -> f64 {
        self.d
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0, |m, v| m.max((v - self.d_mean).abs()))
    }
}

/// Projected-gradient price mediation at a fixed equilibrium. Each round the
/// coordinator gathers the hubs' reductions and broadcasts their mean; every
/// pair's mediator then steps its own prices.
pub fn run_mediation(
    model: &FixedDispatch,
    start: &PriceProfile,
    cfg: &MediationConfig,
) -> Result<(PriceProfile, FairnessReport), PricingError> {
    let (beta, l) = cfg.resolve_step(model)?;
    let set = PriceSet::new(model, cfg);
    // a start outside 𝒞 (possible with safeguards) is projected first
    let mut c = start.with_flat(&set.project(&start.to_flat())?);
    let mut phi = model.phi(&c);
    let mut trace = Vec::new();
    let mut status = MediationStatus::MaxIter;
    for iter in 1..=cfg.max_iter {
        let next = if beta > 0.0 {
            mediation_step(&c, &fairness_gradient(model, &c), beta, &set)?
        } else {
            c.clone()
        };
        let max_step = next
            .to_flat()
            .iter()
            .zip(c.to_flat())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let next_phi = model.phi(&next);
        trace.push(MediationTraceRow {
            iter,
            phi: next_phi,
            max_step,
        });
        let change = (next_phi - phi).abs();
        c = next;
        phi = next_phi;
        if change <= cfg.tol * phi.max(1.0) {
            status = MediationStatus::Converged;
            break;
        }
    }
    log::info!("mediation finished after {} iterations, φ = {phi:e}", trace.len());
    let mut report = FairnessReport::evaluate(model, &c);
    report.beta = beta;
    report.lipschitz_l = l;
    report.trace = trace;
    report.status = status;
    Ok((c, report))
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let opt: Vec<Option<f64>> = v.iter().map(|x| Some(*x).filter(|x| x.is_finite())).collect();
        opt.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let opt = Vec::<Option<f64>>::deserialize(d)?;
        Ok(opt.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hub::{PairSeries, TradeTensor};

    fn model() -> FixedDispatch {
        let trades = TradeTensor {
            num_hubs: 3,
            horizon: 2,
            pairs: vec![
                PairSeries { i: 0, j: 1, values: vec![-10.0, -12.0] },
                PairSeries { i: 0, j: 2, values: vec![-5.0, 0.0] },
                PairSeries { i: 1, j: 2, values: vec![3.0, 4.0] },
            ],
        };
        FixedDispatch::new(
            vec!["a".into(), "b".into(), "c".into()],
            trades,
            vec![120.0, 40.0, 10.0],
            vec![118.0, 45.0, 11.0],
        )
    }

    #[test]
    fn zero_gradient_leaves_prices_unchanged() {
        let m = model();
        let c = m.uniform_prices(0.2);
        let g = m.uniform_prices(0.0);
        assert_eq!(mediation_step(&c, &g, 0.7, &PriceSet::boxed(-0.5, 0.5)).unwrap(), c);
    }

    #[test]
    fn box_projection_clamps() {
        let m = model();
        let c = m.uniform_prices(0.25);
        let g = m.uniform_prices(-0.1);
        let next = mediation_step(&c, &g, 1.0, &PriceSet::boxed(-0.5, 0.3)).unwrap();
        assert!(next.to_flat().iter().all(|&v| v == 0.3));
        let inner = mediation_step(&c, &g, 0.1, &PriceSet::boxed(-0.5, 0.3)).unwrap();
        assert!(inner.to_flat().iter().all(|&v| (v - 0.26).abs() < 1e-15));
    }

    #[test]
    fn oversized_step_is_rejected() {
        let m = model();
        let l = estimate_lipschitz(&m);
        let cfg = MediationConfig {
            step_beta: Some(2.0 / l),
            ..MediationConfig::default()
        };
        assert!(matches!(cfg.resolve_step(&m), Err(PricingError::StepTooLarge { .. })));
    }

    #[test]
    fn mediation_descends_and_equalizes() {
        let m = model();
        let (c, report) = run_mediation(&m, &m.uniform_prices(0.18), &MediationConfig::default()).unwrap();
        assert_eq!(report.status, MediationStatus::Converged);
        let mut last = m.phi(&m.uniform_prices(0.18));
        for row in &report.trace {
            assert!(row.phi <= last + 1e-12);
            last = row.phi;
        }
        assert!(report.max_deviation() < 1e-6, "{report:?}");
        assert!((m.phi(&c) - report.phi).abs() < 1e-15);
    }

    #[test]
    fn safeguarded_iterates_never_hurt_a_hub() {
        let m = model();
        let cfg = MediationConfig {
            safeguard: true,
            ..MediationConfig::default()
        };
        let (c, _) = run_mediation(&m, &m.uniform_prices(0.5), &cfg).unwrap();
        for (j, nt) in m.costs(&c).iter().zip(&m.j_nt) {
            assert!(*j <= nt + 1e-9);
        }
    }
}
