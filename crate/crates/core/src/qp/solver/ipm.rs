//! Primal-dual interior point method (Mehrotra predictor–corrector) on the
//! equilibrated problem `l ≤ A x ≤ u`.
//!
//! Rows with `l = u` are equalities. Every finite side of the remaining rows
//! is an inequality `c x + s = d`, `s ≥ 0`, with multiplier `z ≥ 0`. After
//! eliminating `s` and `z`, each Newton step solves the quasi-definite system
//!
//! ```text
//! [ P + Σ_k w_k a_kᵀ a_k   A_Eᵀ ] [dx]   [r_1]
//! [ A_E                    0    ] [dy] = [r_2]      w = z / s
//! ```
//!
//! with a sparse LDLᵀ factorization (static regularization, corrected by
//! iterative refinement against the unregularized matrix).

use super::{QpSolution, QpStatus, QpWorkspace};
use crate::qp::ldl::SparseLdl;

const MAX_STEPS: usize = 200;
const STEP_TO_BOUNDARY: f64 = 0.99;
const REG_PRIMAL: f64 = 1e-10;
const REG_DUAL: f64 = 1e-10;
const PIVOT_EPS: f64 = 1e-14;
const PIVOT_DELTA: f64 = 1e-8;
const REFINE_STEPS: usize = 6;
/// The mean complementarity product must fall this far below the residual
/// tolerance, which leaves the iterate close to the active faces.
const COMPLEMENTARITY_FACTOR: f64 = 1e-3;
/// Tighter targets tried when polishing fails.
const TIGHTEN_ROUNDS: usize = 3;

/// One finite side of a constraint row: `sign · a_row x + s = bound`.
#[derive(Debug, Clone, Copy)]
struct Side {
    row: usize,
    sign: f64,
    bound: f64,
}

/// Structure of the Newton system, built once per workspace.
pub(super) struct IpmStructure {
    eq_rows: Vec<usize>,
    sides: Vec<Side>,
    /// Inequality rows (with at least one finite side) and their sides.
    ineq_rows: Vec<(usize, Vec<usize>)>,
    ldl: SparseLdl,
    /// Slot of every stored `P` entry (`usize::MAX` below the diagonal), in
    /// row order.
    p_slots: Vec<usize>,
    diag_slots: Vec<usize>,
    /// Slots of the `a_kᵀ a_k` outer products, row by row, upper triangle.
    outer_slots: Vec<usize>,
    /// Slots of the equality-row entries, then of the dual diagonal.
    eq_slots: Vec<usize>,
    eq_diag_slots: Vec<usize>,
}

impl IpmStructure {
    pub(super) fn new(ws: &QpWorkspace) -> Option<Self> {
        let n = ws.n;
        let m = ws.a.len();
        let mut eq_rows = Vec::new();
        let mut sides = Vec::new();
        let mut ineq_rows = Vec::new();
        for k in 0..m {
            let (lo, hi) = (ws.l[k], ws.u[k]);
            if lo == hi {
                eq_rows.push(k);
                continue;
            }
            let mut own = Vec::new();
            if hi.is_finite() {
                own.push(sides.len());
                sides.push(Side { row: k, sign: 1.0, bound: hi });
            }
            if lo.is_finite() {
                own.push(sides.len());
                sides.push(Side { row: k, sign: -1.0, bound: -lo });
            }
            if !own.is_empty() {
                ineq_rows.push((k, own));
            }
        }

        let mut pattern = Vec::new();
        for i in 0..n {
            let (idx, _) = ws.p.row(i);
            pattern.extend(idx.iter().map(|&j| (i, j)));
        }
        for (k, _) in &ineq_rows {
            let (idx, _) = ws.a.row(*k);
            for &i in idx {
                pattern.extend(idx.iter().map(|&j| (i, j)));
            }
        }
        for (e, &k) in eq_rows.iter().enumerate() {
            let (idx, _) = ws.a.row(k);
            pattern.extend(idx.iter().map(|&j| (j, n + e)));
        }
        let mut signs = vec![1i8; n];
        signs.extend(std::iter::repeat(-1i8).take(eq_rows.len()));
        let ldl = SparseLdl::new(n + eq_rows.len(), pattern, signs)?;

        let mut p_slots = Vec::new();
        for i in 0..n {
            let (idx, _) = ws.p.row(i);
            p_slots.extend(idx.iter().map(|&j| if i <= j { ldl.slot(i, j) } else { usize::MAX }));
        }
        let diag_slots = (0..n).map(|i| ldl.slot(i, i)).collect();
        let mut outer_slots = Vec::new();
        for (k, _) in &ineq_rows {
            let (idx, _) = ws.a.row(*k);
            for &i in idx {
                outer_slots.extend(idx.iter().map(|&j| if i <= j { ldl.slot(i, j) } else { usize::MAX }));
            }
        }
        let mut eq_slots = Vec::new();
        for (e, &k) in eq_rows.iter().enumerate() {
            let (idx, _) = ws.a.row(k);
            eq_slots.extend(idx.iter().map(|&j| ldl.slot(j, n + e)));
        }
        let eq_diag_slots = (0..eq_rows.len()).map(|e| ldl.slot(n + e, n + e)).collect();
        Some(Self {
            eq_rows,
            sides,
            ineq_rows,
            ldl,
            p_slots,
            diag_slots,
            outer_slots,
            eq_slots,
            eq_diag_slots,
        })
    }
}

/// Iterate and the quantities shared between predictor and corrector.
struct State {
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
    z: Vec<f64>,
}

struct Residuals {
    dual: Vec<f64>,
    eq: Vec<f64>,
    ineq: Vec<f64>,
}

impl QpWorkspace {
    /// Runs the interior point method. `None` when it cannot reach the
    /// tolerance (infeasible, unbounded or numerically stuck); the caller
    /// falls back to operator splitting, which can certify infeasibility.
    pub(super) fn solve_interior_point(&mut self) -> Option<QpSolution> {
        if self.ipm.is_none() {
            self.ipm = Some(IpmStructure::new(self)?);
        }
        let mut st = self.ipm.take().expect("built above");
        let out = self.run_interior_point(&mut st);
        self.ipm = Some(st);
        out
    }

    fn run_interior_point(&mut self, st: &mut IpmStructure) -> Option<QpSolution> {
        let n = self.n;
        let ne = st.eq_rows.len();
        let ns = st.sides.len();
        let tol = self.settings.tol;

        let b: Vec<f64> = st.eq_rows.iter().map(|&k| self.l[k]).collect();
        let d: Vec<f64> = st.sides.iter().map(|sd| sd.bound).collect();
        let scale_p = 1.0
            + b.iter()
                .chain(d.iter())
                .fold(0.0f64, |acc, v| acc.max(v.abs()));
        let scale_d = 1.0 + self.q.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));

        // initial point: least-squares solve with unit weights, then shift
        // slacks and multipliers into the interior
        let mut w = vec![1.0; ns];
        if !self.factor_newton(st, &w) {
            return None;
        }
        let mut rhs = vec![0.0; n + ne];
        for j in 0..n {
            rhs[j] = -self.q[j];
        }
        for (i, sd) in st.sides.iter().enumerate() {
            self.add_side_t(sd, d[i], &mut rhs[..n]);
        }
        rhs[n..].copy_from_slice(&b);
        let sol = self.solve_newton(st, &w, &rhs);
        let x = sol[..n].to_vec();
        let y = sol[n..].to_vec();
        let mut s: Vec<f64> = st
            .sides
            .iter()
            .map(|sd| sd.bound - sd.sign * self.a.row_dot(sd.row, &x))
            .collect();
        let mut z: Vec<f64> = s.iter().map(|v| -v).collect();
        shift_positive(&mut s);
        shift_positive(&mut z);
        let mut state = State { x, y, s, z };

        let mut target = tol;
        // verified answer kept while iterating further for a polishable point
        let mut best: Option<QpSolution> = None;
        let mut extra = 0;
        for step in 1..=MAX_STEPS {
            let res = self.interior_residuals(st, &state, &b, &d);
            let mu = if ns > 0 {
                state.s.iter().zip(&state.z).map(|(s, z)| s * z).sum::<f64>() / ns as f64
            } else {
                0.0
            };
            let p_res = res.eq.iter().chain(res.ineq.iter()).fold(0.0f64, |a, v| a.max(v.abs()));
            let d_res = res.dual.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if !(p_res.is_finite() && d_res.is_finite() && mu.is_finite()) {
                return best;
            }
            if p_res <= target * scale_p && d_res <= target * scale_d && mu <= COMPLEMENTARITY_FACTOR * target {
                self.store_interior(st, &state);
                let sol = self.extract(QpStatus::Optimal, step, false);
                if sol.status == QpStatus::Optimal {
                    // land exactly on the active faces when the active set is
                    // clear-cut; otherwise tighten the interior answer a little
                    if !self.settings.polish {
                        return Some(sol);
                    }
                    if let Some(polished) = self.polish(step) {
                        return Some(polished);
                    }
                    best = Some(sol);
                    extra += 1;
                    if extra > TIGHTEN_ROUNDS {
                        return best;
                    }
                }
                target *= 0.1;
                if target < tol * 1e-6 {
                    return best;
                }
            }

            for i in 0..ns {
                w[i] = state.z[i] / state.s[i];
            }
            if !self.factor_newton(st, &w) {
                return best;
            }

            // predictor
            let r_sz: Vec<f64> = (0..ns).map(|i| -state.s[i] * state.z[i]).collect();
            let (dx, dy, ds, dz) = self.newton_direction(st, &state, &res, &w, &r_sz);
            let alpha_aff = max_step(&state.s, &ds).min(max_step(&state.z, &dz)).min(1.0);
            let mu_aff = if ns > 0 {
                (0..ns)
                    .map(|i| (state.s[i] + alpha_aff * ds[i]) * (state.z[i] + alpha_aff * dz[i]))
                    .sum::<f64>()
                    / ns as f64
            } else {
                0.0
            };
            let sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };

            // corrector
            let r_sz: Vec<f64> = (0..ns)
                .map(|i| sigma * mu - state.s[i] * state.z[i] - ds[i] * dz[i])
                .collect();
            let (dx2, dy2, ds2, dz2) = if ns > 0 {
                self.newton_direction(st, &state, &res, &w, &r_sz)
            } else {
                (dx, dy, ds, dz)
            };
            let alpha = (STEP_TO_BOUNDARY * max_step(&state.s, &ds2).min(max_step(&state.z, &dz2))).min(1.0);
            for j in 0..n {
                state.x[j] += alpha * dx2[j];
            }
            for e in 0..ne {
                state.y[e] += alpha * dy2[e];
            }
            for i in 0..ns {
                state.s[i] = (state.s[i] + alpha * ds2[i]).max(f64::MIN_POSITIVE);
                state.z[i] = (state.z[i] + alpha * dz2[i]).max(f64::MIN_POSITIVE);
            }
        }
        best
    }

    /// Adds `sign · a_rowᵀ · value` to `out`.
    fn add_side_t(&self, sd: &Side, value: f64, out: &mut [f64]) {
        let (idx, val) = self.a.row(sd.row);
        for (&j, &v) in idx.iter().zip(val) {
            out[j] += sd.sign * v * value;
        }
    }

    fn interior_residuals(&self, st: &IpmStructure, state: &State, b: &[f64], d: &[f64]) -> Residuals {
        let n = self.n;
        let mut dual = vec![0.0; n];
        self.p.mul(&state.x, &mut dual);
        for j in 0..n {
            dual[j] += self.q[j];
        }
        for (e, &k) in st.eq_rows.iter().enumerate() {
            let (idx, val) = self.a.row(k);
            for (&j, &v) in idx.iter().zip(val) {
                dual[j] += v * state.y[e];
            }
        }
        for (i, sd) in st.sides.iter().enumerate() {
            self.add_side_t(sd, state.z[i], &mut dual);
        }
        let eq = st
            .eq_rows
            .iter()
            .enumerate()
            .map(|(e, &k)| self.a.row_dot(k, &state.x) - b[e])
            .collect();
        let ineq = st
            .sides
            .iter()
            .enumerate()
            .map(|(i, sd)| sd.sign * self.a.row_dot(sd.row, &state.x) + state.s[i] - d[i])
            .collect();
        Residuals { dual, eq, ineq }
    }

    /// Factorizes the Newton matrix for weights `w`.
    fn factor_newton(&self, st: &mut IpmStructure, w: &[f64]) -> bool {
        let mut vals = vec![0.0; st.ldl.nnz()];
        for (&slot, &v) in st.p_slots.iter().zip(&self.p.val) {
            if slot != usize::MAX {
                vals[slot] += v;
            }
        }
        for &slot in &st.diag_slots {
            vals[slot] += REG_PRIMAL;
        }
        let mut cursor = 0;
        for (k, own) in &st.ineq_rows {
            let weight: f64 = own.iter().map(|&i| w[i]).sum();
            let (_, val) = self.a.row(*k);
            for &vi in val {
                for &vj in val {
                    let slot = st.outer_slots[cursor];
                    cursor += 1;
                    if slot != usize::MAX {
                        vals[slot] += weight * vi * vj;
                    }
                }
            }
        }
        let mut cursor = 0;
        for &k in &st.eq_rows {
            let (_, val) = self.a.row(k);
            for &v in val {
                vals[st.eq_slots[cursor]] += v;
                cursor += 1;
            }
        }
        for &slot in &st.eq_diag_slots {
            vals[slot] -= REG_DUAL;
        }
        st.ldl.factor(&vals, PIVOT_DELTA, PIVOT_EPS)
    }

    /// Unregularized Newton matrix times `v`.
    fn apply_newton(&self, st: &IpmStructure, w: &[f64], v: &[f64], out: &mut [f64]) {
        let n = self.n;
        let (vx, vy) = v.split_at(n);
        let (ox, oy) = out.split_at_mut(n);
        self.p.mul(vx, ox);
        for (k, own) in &st.ineq_rows {
            let weight: f64 = own.iter().map(|&i| w[i]).sum();
            let dot = self.a.row_dot(*k, vx) * weight;
            let (idx, val) = self.a.row(*k);
            for (&j, &a) in idx.iter().zip(val) {
                ox[j] += a * dot;
            }
        }
        for (e, &k) in st.eq_rows.iter().enumerate() {
            let (idx, val) = self.a.row(k);
            let mut dot = 0.0;
            for (&j, &a) in idx.iter().zip(val) {
                ox[j] += a * vy[e];
                dot += a * vx[j];
            }
            oy[e] = dot;
        }
    }

    fn solve_newton(&self, st: &mut IpmStructure, w: &[f64], rhs: &[f64]) -> Vec<f64> {
        let dim = rhs.len();
        let mut sol = rhs.to_vec();
        st.ldl.solve(&mut sol);
        let mut k_sol = vec![0.0; dim];
        let norm = rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut last = f64::INFINITY;
        for _ in 0..REFINE_STEPS {
            self.apply_newton(st, w, &sol, &mut k_sol);
            let mut r: Vec<f64> = (0..dim).map(|i| rhs[i] - k_sol[i]).collect();
            let err = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if err <= 1e-14 * (1.0 + norm) || err >= last {
                break;
            }
            last = err;
            st.ldl.solve(&mut r);
            for i in 0..dim {
                sol[i] += r[i];
            }
        }
        sol
    }

    /// Newton direction for complementarity target `r_sz` (the right-hand
    /// side of `Z ds + S dz = r_sz`).
    fn newton_direction(
        &self,
        st: &mut IpmStructure,
        state: &State,
        res: &Residuals,
        w: &[f64],
        r_sz: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.n;
        let ne = st.eq_rows.len();
        let mut rhs = vec![0.0; n + ne];
        for j in 0..n {
            rhs[j] = -res.dual[j];
        }
        let sides = st.sides.clone();
        for (i, sd) in sides.iter().enumerate() {
            let t = w[i] * res.ineq[i] + r_sz[i] / state.s[i];
            self.add_side_t(sd, -t, &mut rhs[..n]);
        }
        for e in 0..ne {
            rhs[n + e] = -res.eq[e];
        }
        let sol = self.solve_newton(st, w, &rhs);
        let dx = sol[..n].to_vec();
        let dy = sol[n..].to_vec();
        let mut dz = vec![0.0; sides.len()];
        let mut ds = vec![0.0; sides.len()];
        for (i, sd) in sides.iter().enumerate() {
            let c_dx = sd.sign * self.a.row_dot(sd.row, &dx);
            dz[i] = w[i] * (c_dx + res.ineq[i]) + r_sz[i] / state.s[i];
            ds[i] = (r_sz[i] - state.s[i] * dz[i]) / state.z[i];
        }
        (dx, dy, ds, dz)
    }

    /// Writes the interior point iterate into the workspace's row form:
    /// row multipliers are `z_upper − z_lower` (or the equality multiplier).
    fn store_interior(&mut self, st: &IpmStructure, state: &State) {
        self.x.copy_from_slice(&state.x);
        self.y.iter_mut().for_each(|v| *v = 0.0);
        for (e, &k) in st.eq_rows.iter().enumerate() {
            self.y[k] = state.y[e];
        }
        for (i, sd) in st.sides.iter().enumerate() {
            self.y[sd.row] += sd.sign * state.z[i];
        }
        let mut z = std::mem::take(&mut self.z);
        self.a.mul(&self.x, &mut z);
        for k in 0..z.len() {
            z[k] = z[k].clamp(self.l[k], self.u[k]);
        }
        self.z = z;
    }
}

/// Largest step `α` keeping `v + α dv ≥ 0`.
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    let mut alpha = f64::INFINITY;
    for (x, d) in v.iter().zip(dv) {
        if *d < 0.0 {
            alpha = alpha.min(-x / d);
        }
    }
    alpha
}

/// Moves a vector into the strict interior: unchanged when already
/// positive, otherwise shifted so its smallest entry is 1.
fn shift_positive(v: &mut [f64]) {
    let min = v.iter().fold(f64::INFINITY, |a, &x| a.min(x));
    if min.is_finite() && min <= 0.0 {
        v.iter_mut().for_each(|x| *x += 1.0 - min);
    }
}
