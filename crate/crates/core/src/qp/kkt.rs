use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{QpError, QpProblem, QpSolution};

/// Absolute KKT residuals (infinity norms) of a primal-dual pair.
///
/// `complementarity` also absorbs dual infeasibility: a negative inequality
/// or bound multiplier contributes its magnitude.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal_eq: f64,
    pub primal_ineq: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_eq)
            .max(self.primal_ineq)
            .max(self.complementarity)
    }

    pub fn all_within(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

/// Evaluates the KKT conditions of `p` at `s`, independent of how `s` was
/// produced.
pub fn check_kkt(p: &QpProblem, s: &QpSolution) -> Result<KktResiduals, QpError> {
    kkt_residuals(
        p,
        &s.x,
        &s.eq_duals,
        &s.ineq_duals,
        &s.lower_duals,
        &s.upper_duals,
    )
}

pub(crate) fn kkt_residuals(
    p: &QpProblem,
    x: &DVector<f64>,
    nu: &DVector<f64>,
    mu: &DVector<f64>,
    mu_l: &DVector<f64>,
    mu_u: &DVector<f64>,
) -> Result<KktResiduals, QpError> {
    let n = p.num_vars();
    if x.len() != n || mu_l.len() != n || mu_u.len() != n {
        return Err(QpError::Dimension(format!(
            "solution has {} variables, problem has {n}",
            x.len()
        )));
    }
    if nu.len() != p.num_eq() || mu.len() != p.num_ineq() {
        return Err(QpError::Dimension(format!(
            "solution has {}/{} multipliers, problem has {}/{} constraints",
            nu.len(),
            mu.len(),
            p.num_eq(),
            p.num_ineq()
        )));
    }

    let mut grad = &p.quad * x + &p.lin;
    grad += p.eq_mat.tr_mul(nu);
    grad += p.ineq_mat.tr_mul(mu);
    grad += mu_u;
    grad -= mu_l;
    let stationarity = grad.amax();

    let primal_eq = if p.num_eq() > 0 {
        (&p.eq_mat * x - &p.eq_rhs).amax()
    } else {
        0.0
    };

    let gx = &p.ineq_mat * x;
    let mut primal_ineq: f64 = 0.0;
    let mut complementarity: f64 = 0.0;
    for i in 0..p.num_ineq() {
        let slack = p.ineq_rhs[i] - gx[i];
        primal_ineq = primal_ineq.max(-slack);
        complementarity = complementarity.max((mu[i] * slack).abs()).max(-mu[i]);
    }
    for j in 0..n {
        primal_ineq = primal_ineq.max(p.lower[j] - x[j]).max(x[j] - p.upper[j]);
        complementarity = complementarity
            .max(bound_product(mu_l[j], x[j] - p.lower[j]))
            .max(bound_product(mu_u[j], p.upper[j] - x[j]))
            .max(-mu_l[j])
            .max(-mu_u[j]);
    }

    Ok(KktResiduals {
        stationarity,
        primal_eq,
        primal_ineq: primal_ineq.max(0.0),
        complementarity: complementarity.max(0.0),
    })
}

fn bound_product(dual: f64, slack: f64) -> f64 {
    if dual == 0.0 {
        0.0
    } else if slack.is_infinite() {
        f64::INFINITY
    } else {
        (dual * slack).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::{solve_qp, QpStatus};
    use nalgebra::DMatrix;

    fn x_ge_one() -> QpProblem {
        QpProblem::new(DMatrix::from_element(1, 1, 2.0), DVector::zeros(1)).with_inequalities(
            DMatrix::from_element(1, 1, -1.0),
            DVector::from_element(1, -1.0),
        )
    }

    #[test]
    fn optimal_solution_is_self_consistent() {
        let p = x_ge_one();
        let s = solve_qp(&p, 1e-8, 10_000).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!(check_kkt(&p, &s).unwrap().all_within(1e-8));
    }

    #[test]
    fn perturbation_shows_in_stationarity() {
        let p = x_ge_one();
        let mut s = solve_qp(&p, 1e-8, 10_000).unwrap();
        s.x[0] += 1e-2;
        let r = check_kkt(&p, &s).unwrap();
        // curvature 2 times the perturbation
        assert!((r.stationarity - 2e-2).abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn violated_point_reports_unit_residual() {
        let p = x_ge_one();
        let mut s = solve_qp(&p, 1e-8, 10_000).unwrap();
        s.x[0] = 0.0;
        s.ineq_duals[0] = 0.0;
        let r = check_kkt(&p, &s).unwrap();
        assert!((r.primal_ineq - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let p = x_ge_one();
        let mut s = solve_qp(&p, 1e-8, 10_000).unwrap();
        s.x = DVector::zeros(2);
        assert!(check_kkt(&p, &s).is_err());
    }
}
