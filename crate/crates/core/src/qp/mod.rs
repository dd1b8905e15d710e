//! Convex quadratic programming.
//!
//! Problems have the form
//!
//! ```text
//! minimize    ½ xᵀ P x + qᵀ x
//! subject to  A x  = b
//!             G x ≤ h
//!             l ≤ x ≤ u
//! ```
//!
//! with `P` symmetric positive semidefinite. Problems are stated with dense
//! matrices but stored and factorized sparsely after Ruiz equilibration.
//!
//! Two methods share the equilibrated data:
//! * a primal-dual interior point method (the default), robust on the
//!   degenerate, nearly linear problems that dispatch produces;
//! * an operator splitting scheme (alternating projections onto the affine
//!   KKT system and the constraint box, with over-relaxation and adaptive
//!   step size), used when the interior point method stalls and as the
//!   source of infeasibility certificates.
//!
//! Both finish with an active-set polishing step that lands exactly on the
//! active faces, giving high-accuracy primal and dual solutions.
//!
//! Dual sign convention: the Lagrangian is
//! `½xᵀPx + qᵀx + νᵀ(Ax − b) + μᵀ(Gx − h) + μ_uᵀ(x − u) + μ_lᵀ(l − x)`,
//! so `μ, μ_u, μ_l ≥ 0` and stationarity reads
//! `Px + q + Aᵀν + Gᵀμ + μ_u − μ_l = 0`.

mod dump;
mod kkt;
mod ldl;
mod solver;

pub use dump::dump_problem;
pub use kkt::{check_kkt, KktResiduals};
pub use solver::{QpMethod, QpSettings, QpWorkspace};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("quadratic cost is not convex: {0}")]
    NonConvex(String),
}

/// Canonical convex QP.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub quad: DMatrix<f64>,
    pub lin: DVector<f64>,
    pub eq_mat: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_mat: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem with the given cost.
    pub fn new(quad: DMatrix<f64>, lin: DVector<f64>) -> Self {
        let n = lin.len();
        Self {
            quad,
            lin,
            eq_mat: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            ineq_mat: DMatrix::zeros(0, n),
            ineq_rhs: DVector::zeros(0),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.eq_mat = a;
        self.eq_rhs = b;
        self
    }

    pub fn with_inequalities(mut self, g: DMatrix<f64>, h: DVector<f64>) -> Self {
        self.ineq_mat = g;
        self.ineq_rhs = h;
        self
    }

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.lin.len()
    }

    pub fn num_eq(&self) -> usize {
        self.eq_rhs.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.ineq_rhs.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.quad * x)) + self.lin.dot(x)
    }

    /// Checks dimensions, symmetry of `P` (1e-12, relative to its largest
    /// entry) and positive semidefiniteness (smallest eigenvalue ≥ −1e-9).
    pub fn check(&self) -> Result<(), QpError> {
        let n = self.num_vars();
        if self.quad.nrows() != n || self.quad.ncols() != n {
            return Err(QpError::Dimension(format!(
                "quadratic cost is {}x{}, expected {n}x{n}",
                self.quad.nrows(),
                self.quad.ncols()
            )));
        }
        if self.eq_mat.ncols() != n || self.eq_mat.nrows() != self.eq_rhs.len() {
            return Err(QpError::Dimension(format!(
                "equality system is {}x{} with {} right-hand sides, expected {n} columns",
                self.eq_mat.nrows(),
                self.eq_mat.ncols(),
                self.eq_rhs.len()
            )));
        }
        if self.ineq_mat.ncols() != n || self.ineq_mat.nrows() != self.ineq_rhs.len() {
            return Err(QpError::Dimension(format!(
                "inequality system is {}x{} with {} right-hand sides, expected {n} columns",
                self.ineq_mat.nrows(),
                self.ineq_mat.ncols(),
                self.ineq_rhs.len()
            )));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(QpError::Dimension(format!(
                "bounds have lengths {} and {}, expected {n}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        let data = [
            self.quad.as_slice(),
            self.lin.as_slice(),
            self.eq_mat.as_slice(),
            self.eq_rhs.as_slice(),
            self.ineq_mat.as_slice(),
            self.ineq_rhs.as_slice(),
        ];
        if data.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(QpError::Dimension("problem data contains non-finite entries".into()));
        }
        if self.lower.iter().any(|v| v.is_nan() || *v == f64::INFINITY)
            || self.upper.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY)
        {
            return Err(QpError::Dimension("invalid variable bounds".into()));
        }

        let scale = self.quad.amax().max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                let gap = (self.quad[(i, j)] - self.quad[(j, i)]).abs();
                if gap > 1e-12 * scale {
                    return Err(QpError::NonConvex(format!(
                        "quadratic cost not symmetric at ({i}, {j}): gap {gap:e}"
                    )));
                }
            }
        }
        check_psd(&self.quad)
    }
}

fn check_psd(quad: &DMatrix<f64>) -> Result<(), QpError> {
    let n = quad.nrows();
    if n == 0 {
        return Ok(());
    }
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || quad[(i, j)] == 0.0));
    if diagonal {
        let min = quad.diagonal().min();
        if min < -1e-9 {
            return Err(QpError::NonConvex(format!("smallest eigenvalue {min:e}")));
        }
        return Ok(());
    }
    let sym = (quad + quad.transpose()) * 0.5;
    let min = sym.symmetric_eigenvalues().min();
    if min < -1e-9 {
        return Err(QpError::NonConvex(format!("smallest eigenvalue {min:e}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

/// Primal-dual answer of [`solve_qp`].
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub eq_duals: DVector<f64>,
    pub ineq_duals: DVector<f64>,
    pub lower_duals: DVector<f64>,
    pub upper_duals: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    pub residuals: KktResiduals,
    /// Primal infeasibility certificate residual, set when `status` is
    /// [`QpStatus::Infeasible`].
    pub certificate: Option<f64>,
    pub polished: bool,
}

impl QpSolution {
    /// Lagrangian dual value at the reported multipliers. Equal to the
    /// primal objective at an optimal primal-dual pair.
    pub fn dual_objective(&self, p: &QpProblem) -> f64 {
        let x = &self.x;
        let mut value = p.objective(x);
        value += self.eq_duals.dot(&(&p.eq_mat * x - &p.eq_rhs));
        value += self.ineq_duals.dot(&(&p.ineq_mat * x - &p.ineq_rhs));
        for j in 0..x.len() {
            if self.upper_duals[j] != 0.0 {
                value += self.upper_duals[j] * (x[j] - p.upper[j]);
            }
            if self.lower_duals[j] != 0.0 {
                value += self.lower_duals[j] * (p.lower[j] - x[j]);
            }
        }
        value
    }
}

/// Solves `p` to KKT tolerance `tol`.
pub fn solve_qp(p: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution, QpError> {
    let settings = QpSettings {
        tol,
        max_iter,
        ..QpSettings::default()
    };
    let mut ws = QpWorkspace::new(p, settings)?;
    Ok(ws.solve())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn parabola_vertex() {
        let p = QpProblem::new(one(2.0), DVector::from_element(1, -6.0));
        let s = solve_qp(&p, 1e-8, 50_000).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 3.0).abs() < 1e-9);
        // (x-3)^2 = x^2 - 6x + 9
        assert!((s.objective + 9.0).abs() < 1e-9);
    }

    #[test]
    fn lower_bound_active_dual() {
        // min x^2 s.t. -x <= -1
        let p = QpProblem::new(one(2.0), DVector::zeros(1))
            .with_inequalities(one(-1.0), DVector::from_element(1, -1.0));
        let s = solve_qp(&p, 1e-8, 50_000).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-9);
        assert!((s.ineq_duals[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn equality_dual_sign() {
        let p = QpProblem::new(DMatrix::identity(2, 2) * 2.0, DVector::zeros(2))
            .with_equalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_element(1, 2.0));
        let s = solve_qp(&p, 1e-8, 50_000).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-9 && (s.x[1] - 1.0).abs() < 1e-9);
        assert!((s.eq_duals[0] + 2.0).abs() < 1e-8);
    }

    #[test]
    fn bound_duals_split_by_side() {
        // min (x+2)^2 + (y-5)^2 with 0 <= x, y <= 1
        let p = QpProblem::new(DMatrix::identity(2, 2) * 2.0, DVector::from_vec(vec![4.0, -10.0]))
            .with_bounds(DVector::zeros(2), DVector::from_element(2, 1.0));
        let s = solve_qp(&p, 1e-8, 50_000).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!(s.x[0].abs() < 1e-9 && (s.x[1] - 1.0).abs() < 1e-9);
        assert!((s.lower_duals[0] - 4.0).abs() < 1e-8);
        assert!((s.upper_duals[1] - 8.0).abs() < 1e-8);
        assert_eq!(s.upper_duals[0], 0.0);
    }

    #[test]
    fn detects_infeasible() {
        // x >= 1 and x <= 0
        let p = QpProblem::new(one(1.0), DVector::zeros(1)).with_inequalities(
            DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]),
            DVector::from_vec(vec![-1.0, 0.0]),
        );
        let s = solve_qp(&p, 1e-8, 50_000).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
        assert!(s.certificate.is_some());
    }

    #[test]
    fn crossed_bounds_are_infeasible() {
        let p = QpProblem::new(one(1.0), DVector::zeros(1))
            .with_bounds(DVector::from_element(1, 2.0), DVector::from_element(1, 1.0));
        let s = solve_qp(&p, 1e-8, 100).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
        assert!((s.certificate.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_dimensions() {
        let p = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(3));
        assert!(matches!(solve_qp(&p, 1e-8, 10), Err(QpError::Dimension(_))));
    }

    #[test]
    fn rejects_nonconvex() {
        let p = QpProblem::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), DVector::zeros(2));
        assert!(matches!(solve_qp(&p, 1e-8, 10), Err(QpError::NonConvex(_))));
        let p = QpProblem::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), DVector::zeros(2));
        assert!(matches!(solve_qp(&p, 1e-8, 10), Err(QpError::NonConvex(_))));
    }

    #[test]
    fn rejects_asymmetric() {
        let p = QpProblem::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]), DVector::zeros(2));
        assert!(matches!(solve_qp(&p, 1e-8, 10), Err(QpError::NonConvex(_))));
    }

    #[test]
    fn linear_program_with_degenerate_vertex() {
        // min -x - y s.t. x + y <= 1, x <= 1, y <= 1, x, y >= 0
        let p = QpProblem::new(DMatrix::zeros(2, 2), DVector::from_vec(vec![-1.0, -2.0]))
            .with_inequalities(
                DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 0.0, 0.0, 1.0]),
                DVector::from_vec(vec![1.0, 1.0, 1.0]),
            )
            .with_bounds(DVector::zeros(2), DVector::from_element(2, f64::INFINITY));
        let s = solve_qp(&p, 1e-8, 50_000).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.objective + 2.0).abs() < 1e-8, "{} {:?} {} {}", s.objective, s.residuals, s.polished, s.iterations);
    }
}
