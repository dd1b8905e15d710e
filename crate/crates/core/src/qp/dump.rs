use std::fmt::Write;

use super::QpProblem;

/// Renders a problem as plain text, one record per line, for cross-checking
/// with external solvers:
///
/// ```text
/// qp <n> <equalities> <inequalities>
/// P <i> <j> <value>          upper triangle, nonzeros only
/// q <j> <value>              nonzeros only
/// eq <row> <rhs> <j>:<value> ...
/// ineq <row> <rhs> <j>:<value> ...
/// bound <j> <lower> <upper>  finite bounds only
/// ```
///
/// Values use the shortest representation that round-trips exactly.
pub fn dump_problem(p: &QpProblem) -> String {
    let n = p.num_vars();
    let mut out = String::new();
    let _ = writeln!(out, "qp {} {} {}", n, p.num_eq(), p.num_ineq());
    for i in 0..n {
        for j in i..n {
            let v = p.quad[(i, j)];
            if v != 0.0 {
                let _ = writeln!(out, "P {i} {j} {v:?}");
            }
        }
    }
    for (j, v) in p.lin.iter().enumerate() {
        if *v != 0.0 {
            let _ = writeln!(out, "q {j} {v:?}");
        }
    }
    for i in 0..p.num_eq() {
        let _ = write!(out, "eq {i} {:?}", p.eq_rhs[i]);
        for j in 0..n {
            let v = p.eq_mat[(i, j)];
            if v != 0.0 {
                let _ = write!(out, " {j}:{v:?}");
            }
        }
        out.push('\n');
    }
    for i in 0..p.num_ineq() {
        let _ = write!(out, "ineq {i} {:?}", p.ineq_rhs[i]);
        for j in 0..n {
            let v = p.ineq_mat[(i, j)];
            if v != 0.0 {
                let _ = write!(out, " {j}:{v:?}");
            }
        }
        out.push('\n');
    }
    for j in 0..n {
        let (lo, hi) = (p.lower[j], p.upper[j]);
        if lo.is_finite() || hi.is_finite() {
            let _ = writeln!(out, "bound {j} {lo:?} {hi:?}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn one_line_per_record() {
        let p = QpProblem::new(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, 0.0]))
            .with_equalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_element(1, 2.0))
            .with_bounds(
                DVector::from_vec(vec![0.0, f64::NEG_INFINITY]),
                DVector::from_vec(vec![1.5, f64::INFINITY]),
            );
        let text = dump_problem(&p);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines,
            vec![
                "qp 2 1 0",
                "P 0 0 1.0",
                "P 1 1 1.0",
                "q 0 1.0",
                "eq 0 2.0 0:1.0 1:1.0",
                "bound 0 0.0 1.5",
            ]
        );
    }
}
