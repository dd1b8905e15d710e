use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::ldl::SparseLdl;

mod ipm;

use super::kkt::{kkt_residuals, KktResiduals};
use super::{QpError, QpProblem, QpSolution, QpStatus};

const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const INFEASIBILITY_TOL: f64 = 1e-5;
/// Dual iterates beyond this norm are treated as diverging.
const DUAL_DIVERGENCE: f64 = 1e12;
const POLISH_DELTA: f64 = 1e-7;
const POLISH_REFINE: usize = 15;
const POLISH_ROUNDS: usize = 12;
const POLISH_VIOLATION: f64 = 1e-9;

/// Solution method. Interior point is the default; when it fails to reach
/// the tolerance the solver continues with operator splitting, which also
/// produces infeasibility certificates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QpMethod {
    #[default]
    InteriorPoint,
    OperatorSplitting,
}

#[derive(Debug, Clone)]
pub struct QpSettings {
    pub method: QpMethod,
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    pub scaling_iters: usize,
    pub polish: bool,
    pub check_every: usize,
    pub adapt_every: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            method: QpMethod::default(),
            tol: 1e-8,
            max_iter: 50_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            scaling_iters: 15,
            polish: true,
            check_every: 5,
            adapt_every: 50,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum RowOrigin {
    Eq(usize),
    Ineq(usize),
    Bound(usize),
}

/// Compressed sparse rows.
#[derive(Debug, Clone, Default)]
struct Rows {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl Rows {
    fn with_capacity(rows: usize) -> Self {
        let mut ptr = Vec::with_capacity(rows + 1);
        ptr.push(0);
        Self {
            ptr,
            idx: Vec::new(),
            val: Vec::new(),
        }
    }

    fn push_row<I: IntoIterator<Item = (usize, f64)>>(&mut self, entries: I) {
        for (j, v) in entries {
            if v != 0.0 {
                self.idx.push(j);
                self.val.push(v);
            }
        }
        self.ptr.push(self.idx.len());
    }

    fn len(&self) -> usize {
        self.ptr.len() - 1
    }

    fn row(&self, k: usize) -> (&[usize], &[f64]) {
        let r = self.ptr[k]..self.ptr[k + 1];
        (&self.idx[r.clone()], &self.val[r])
    }

    fn row_dot(&self, k: usize, x: &[f64]) -> f64 {
        let (idx, val) = self.row(k);
        idx.iter().zip(val).map(|(&j, &v)| v * x[j]).sum()
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.row_dot(k, x);
        }
    }

    /// out += selfᵀ y
    fn mul_t_add(&self, y: &[f64], out: &mut [f64]) {
        for (k, &yk) in y.iter().enumerate() {
            if yk == 0.0 {
                continue;
            }
            let (idx, val) = self.row(k);
            for (&j, &v) in idx.iter().zip(val) {
                out[j] += v * yk;
            }
        }
    }

    fn scale(&mut self, row: &[f64], col: &[f64]) {
        for k in 0..self.len() {
            for p in self.ptr[k]..self.ptr[k + 1] {
                self.val[p] *= row[k] * col[self.idx[p]];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Activity {
    Inactive,
    Lower,
    Upper,
    Fixed,
}

/// Reusable solver state for one constraint structure. The linear cost can
/// be replaced between solves; iterates are kept as a warm start.
pub struct QpWorkspace {
    problem: QpProblem,
    settings: QpSettings,
    n: usize,
    origin: Vec<RowOrigin>,
    a: Rows,
    p: Rows,
    q: Vec<f64>,
    l: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
    rho: f64,
    rho_vec: Vec<f64>,
    factor: Option<Cholesky<f64, Dyn>>,
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    crossed_bounds: Option<f64>,
    polish_cache: Option<(Vec<Activity>, SparseLdl)>,
    ipm: Option<ipm::IpmStructure>,
}

impl QpWorkspace {
    pub fn new(problem: &QpProblem, settings: QpSettings) -> Result<Self, QpError> {
        problem.check()?;
        let n = problem.num_vars();

        let mut origin = Vec::new();
        let mut a = Rows::with_capacity(problem.num_eq() + problem.num_ineq() + n);
        let mut l = Vec::new();
        let mut u = Vec::new();
        for i in 0..problem.num_eq() {
            a.push_row((0..n).map(|j| (j, problem.eq_mat[(i, j)])));
            l.push(problem.eq_rhs[i]);
            u.push(problem.eq_rhs[i]);
            origin.push(RowOrigin::Eq(i));
        }
        for i in 0..problem.num_ineq() {
            a.push_row((0..n).map(|j| (j, problem.ineq_mat[(i, j)])));
            l.push(f64::NEG_INFINITY);
            u.push(problem.ineq_rhs[i]);
            origin.push(RowOrigin::Ineq(i));
        }
        let mut crossed: Option<f64> = None;
        for j in 0..n {
            let (lo, hi) = (problem.lower[j], problem.upper[j]);
            if lo > hi {
                let gap = lo - hi;
                crossed = Some(crossed.map_or(gap, |g| g.max(gap)));
            }
            if lo.is_finite() || hi.is_finite() {
                a.push_row(std::iter::once((j, 1.0)));
                l.push(lo);
                u.push(hi);
                origin.push(RowOrigin::Bound(j));
            }
        }

        let mut p = Rows::with_capacity(n);
        for i in 0..n {
            p.push_row((0..n).map(|j| (j, 0.5 * (problem.quad[(i, j)] + problem.quad[(j, i)]))));
        }

        let m = origin.len();
        let mut ws = Self {
            problem: problem.clone(),
            n,
            origin,
            a,
            p,
            q: problem.lin.iter().copied().collect(),
            l,
            u,
            d: vec![1.0; n],
            e: vec![1.0; m],
            c: 1.0,
            rho: settings.rho,
            rho_vec: vec![settings.rho; m],
            factor: None,
            x: vec![0.0; n],
            z: vec![0.0; m],
            y: vec![0.0; m],
            crossed_bounds: crossed,
            polish_cache: None,
            ipm: None,
            settings,
        };
        ws.equilibrate();
        ws.set_rho(ws.settings.rho);
        Ok(ws)
    }

    pub fn settings(&self) -> &QpSettings {
        &self.settings
    }

    /// Replaces the linear cost `q`. The quadratic cost and constraints are
    /// unchanged, so cached factorizations stay valid.
    pub fn set_linear_cost(&mut self, lin: &DVector<f64>) -> Result<(), QpError> {
        if lin.len() != self.n {
            return Err(QpError::Dimension(format!(
                "linear cost has length {}, expected {}",
                lin.len(),
                self.n
            )));
        }
        if lin.iter().any(|v| !v.is_finite()) {
            return Err(QpError::Dimension("linear cost contains non-finite entries".into()));
        }
        self.problem.lin = lin.clone();
        for j in 0..self.n {
            self.q[j] = self.c * self.d[j] * lin[j];
        }
        Ok(())
    }

    /// Clears the warm start.
    pub fn reset(&mut self) {
        self.x.iter_mut().for_each(|v| *v = 0.0);
        self.z.iter_mut().for_each(|v| *v = 0.0);
        self.y.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Modified Ruiz equilibration of the KKT matrix plus cost scaling.
    fn equilibrate(&mut self) {
        let n = self.n;
        let m = self.a.len();
        for _ in 0..self.settings.scaling_iters {
            let mut col = vec![0.0f64; n];
            let mut row = vec![0.0f64; m];
            for i in 0..n {
                let (_, val) = self.p.row(i);
                col[i] = val.iter().fold(0.0, |acc, v| acc.max(v.abs()));
            }
            for k in 0..m {
                let (idx, val) = self.a.row(k);
                for (&j, &v) in idx.iter().zip(val) {
                    col[j] = col[j].max(v.abs());
                    row[k] = row[k].max(v.abs());
                }
            }
            let dx: Vec<f64> = col.iter().map(|&v| 1.0 / limit_scaling(v).sqrt()).collect();
            let dz: Vec<f64> = row.iter().map(|&v| 1.0 / limit_scaling(v).sqrt()).collect();
            self.p.scale(&dx, &dx);
            self.a.scale(&dz, &dx);
            for j in 0..n {
                self.q[j] *= dx[j];
                self.d[j] *= dx[j];
            }
            for k in 0..m {
                self.e[k] *= dz[k];
            }

            let mean_col = if n > 0 {
                (0..n)
                    .map(|i| self.p.row(i).1.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
                    .sum::<f64>()
                    / n as f64
            } else {
                0.0
            };
            let q_norm = self.q.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let cost = 1.0 / limit_scaling(mean_col.max(q_norm));
            self.p.val.iter_mut().for_each(|v| *v *= cost);
            self.q.iter_mut().for_each(|v| *v *= cost);
            self.c *= cost;
        }
        for k in 0..m {
            self.l[k] *= self.e[k];
            self.u[k] *= self.e[k];
        }
    }

    fn set_rho(&mut self, rho: f64) {
        self.rho = rho.clamp(RHO_MIN, RHO_MAX);
        for k in 0..self.rho_vec.len() {
            let (lo, hi) = (self.l[k], self.u[k]);
            self.rho_vec[k] = if lo == hi {
                RHO_EQ_FACTOR * self.rho
            } else if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
                RHO_MIN
            } else {
                self.rho
            };
        }
        self.factor = None;
    }

    fn factorize(&mut self) -> Result<(), ()> {
        let n = self.n;
        let mut k = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let (idx, val) = self.p.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                k[(i, j)] += v;
            }
            k[(i, i)] += self.settings.sigma;
        }
        for r in 0..self.a.len() {
            let rho = self.rho_vec[r];
            let (idx, val) = self.a.row(r);
            for (&i, &vi) in idx.iter().zip(val) {
                for (&j, &vj) in idx.iter().zip(val) {
                    k[(i, j)] += rho * vi * vj;
                }
            }
        }
        self.factor = Some(Cholesky::new(k).ok_or(())?);
        Ok(())
    }

    pub fn solve(&mut self) -> QpSolution {
        if let Some(gap) = self.crossed_bounds {
            return self.infeasible_solution(gap, 0);
        }
        if self.settings.method == QpMethod::InteriorPoint {
            if let Some(sol) = self.solve_interior_point() {
                return sol;
            }
            log::debug!("interior point did not converge; continuing with operator splitting");
            self.reset();
        }
        if self.factor.is_none() && self.factorize().is_err() {
            return self.extract(QpStatus::MaxIter, 0, false);
        }

        let tol = self.settings.tol;
        let max_iter = self.settings.max_iter.max(1);
        let check_every = self.settings.check_every.max(1);
        let mut stage = if self.settings.polish { tol.max(1e-3) } else { tol };
        let mut y_prev = self.y.clone();
        let n = self.n;
        let m = self.a.len();
        let mut rhs = DVector::<f64>::zeros(n);
        let mut z_tilde = vec![0.0; m];
        let mut tmp = vec![0.0; n];

        for iter in 1..=max_iter {
            // x-update through the cached reduced KKT factor
            for j in 0..n {
                rhs[j] = self.settings.sigma * self.x[j] - self.q[j];
            }
            let w: Vec<f64> = (0..m).map(|k| self.rho_vec[k] * self.z[k] - self.y[k]).collect();
            self.a.mul_t_add(&w, rhs.as_mut_slice());
            self.factor
                .as_ref()
                .expect("factorized above")
                .solve_mut(&mut rhs);
            self.a.mul(rhs.as_slice(), &mut z_tilde);
            let alpha = self.settings.alpha;
            for j in 0..n {
                self.x[j] = alpha * rhs[j] + (1.0 - alpha) * self.x[j];
            }
            for k in 0..m {
                let relaxed = alpha * z_tilde[k] + (1.0 - alpha) * self.z[k];
                let z_new = (relaxed + self.y[k] / self.rho_vec[k]).clamp(self.l[k], self.u[k]);
                self.y[k] += self.rho_vec[k] * (relaxed - z_new);
                self.z[k] = z_new;
            }

            if iter % check_every == 0 || iter == max_iter {
                let res = self.scaled_residuals(&mut tmp);
                let (prim, prim_scale, dual, dual_scale) = res.unscaled;
                if prim <= stage * (1.0 + prim_scale) && dual <= stage * (1.0 + dual_scale) {
                    if self.settings.polish {
                        if let Some(sol) = self.polish(iter) {
                            return sol;
                        }
                        stage = (stage * 0.1).max(tol * 1e-2);
                    }
                    if prim <= tol * (1.0 + prim_scale) && dual <= tol * (1.0 + dual_scale) {
                        let sol = self.extract(QpStatus::Optimal, iter, false);
                        if sol.status == QpStatus::Optimal {
                            return sol;
                        }
                    }
                }
                if let Some(cert) = self.infeasibility_certificate(&y_prev) {
                    return self.infeasible_solution(cert, iter);
                }
                y_prev.copy_from_slice(&self.y);

                if iter % self.settings.adapt_every.max(check_every) == 0 {
                    let new_rho = self.rho
                        * ((res.prim / (res.prim_norm + 1e-30))
                            / (res.dual / (res.dual_norm + 1e-30) + 1e-30))
                            .sqrt();
                    if new_rho.is_finite() && (new_rho > 5.0 * self.rho || new_rho < 0.2 * self.rho)
                    {
                        self.set_rho(new_rho);
                        if self.factorize().is_err() {
                            return self.extract(QpStatus::MaxIter, iter, false);
                        }
                    }
                }
            }
        }
        if self.settings.polish {
            if let Some(sol) = self.polish(max_iter) {
                return sol;
            }
        }
        self.extract(QpStatus::MaxIter, max_iter, false)
    }

    fn scaled_residuals(&self, tmp: &mut [f64]) -> Residuals {
        let n = self.n;
        let m = self.a.len();
        let mut ax = vec![0.0; m];
        self.a.mul(&self.x, &mut ax);
        let mut prim: f64 = 0.0;
        let mut prim_norm: f64 = 0.0;
        let mut prim_u: f64 = 0.0;
        let mut prim_u_scale: f64 = 0.0;
        for k in 0..m {
            let r = ax[k] - self.z[k];
            prim = prim.max(r.abs());
            prim_norm = prim_norm.max(ax[k].abs()).max(self.z[k].abs());
            prim_u = prim_u.max((r / self.e[k]).abs());
            prim_u_scale = prim_u_scale
                .max((ax[k] / self.e[k]).abs())
                .max((self.z[k] / self.e[k]).abs());
        }
        self.p.mul(&self.x, tmp);
        let px = tmp.to_vec();
        let mut aty = vec![0.0; n];
        self.a.mul_t_add(&self.y, &mut aty);
        let mut dual: f64 = 0.0;
        let mut dual_norm: f64 = 0.0;
        let mut dual_u: f64 = 0.0;
        let mut dual_u_scale: f64 = 0.0;
        for j in 0..n {
            let r = px[j] + self.q[j] + aty[j];
            dual = dual.max(r.abs());
            dual_norm = dual_norm.max(px[j].abs()).max(aty[j].abs()).max(self.q[j].abs());
            let s = 1.0 / (self.d[j] * self.c);
            dual_u = dual_u.max((r * s).abs());
            dual_u_scale = dual_u_scale
                .max((px[j] * s).abs())
                .max((aty[j] * s).abs())
                .max((self.q[j] * s).abs());
        }
        Residuals {
            prim,
            prim_norm,
            dual,
            dual_norm,
            unscaled: (prim_u, prim_u_scale, dual_u, dual_u_scale),
        }
    }

    fn infeasibility_certificate(&self, y_prev: &[f64]) -> Option<f64> {
        let m = self.a.len();
        let dy: Vec<f64> = (0..m)
            .map(|k| self.e[k] * (self.y[k] - y_prev[k]) / self.c)
            .collect();
        let norm = dy.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let y_norm = (0..m).fold(0.0f64, |acc, k| acc.max((self.e[k] * self.y[k] / self.c).abs()));
        if norm <= 1e-30 {
            return None;
        }
        // Aᵀ δy in unscaled coordinates: D⁻¹ Āᵀ δȳ / c
        let dy_scaled: Vec<f64> = (0..m).map(|k| self.y[k] - y_prev[k]).collect();
        let mut at = vec![0.0; self.n];
        self.a.mul_t_add(&dy_scaled, &mut at);
        let at_norm = (0..self.n).fold(0.0f64, |acc, j| acc.max((at[j] / (self.d[j] * self.c)).abs()));
        let mut support = 0.0;
        for k in 0..m {
            let (lo, hi) = (self.l[k] / self.e[k], self.u[k] / self.e[k]);
            if dy[k] > INFEASIBILITY_TOL * norm {
                if hi.is_infinite() {
                    return None;
                }
                support += hi * dy[k];
            } else if dy[k] < -INFEASIBILITY_TOL * norm {
                if lo.is_infinite() {
                    return None;
                }
                support += lo * dy[k];
            }
        }
        let ratio = at_norm / norm;
        let certified = ratio <= INFEASIBILITY_TOL && support < -INFEASIBILITY_TOL * norm;
        if certified || (y_norm > DUAL_DIVERGENCE && support < 0.0) {
            Some(ratio)
        } else {
            None
        }
    }

    fn infeasible_solution(&self, certificate: f64, iterations: usize) -> QpSolution {
        let mut sol = self.extract(QpStatus::Infeasible, iterations, false);
        sol.status = QpStatus::Infeasible;
        sol.certificate = Some(certificate);
        sol
    }

    /// Active-set refinement: guesses the active constraints from the current
    /// iterate, solves the resulting equality-constrained QP exactly, and
    /// keeps the result if it satisfies the KKT conditions to tolerance.
    /// A wrong guess is corrected a few times (violated rows join the set,
    /// rows with wrong-signed multipliers leave it) before giving up.
    fn polish(&mut self, iterations: usize) -> Option<QpSolution> {
        let m = self.a.len();
        let mut activity: Vec<Activity> = (0..m)
            .map(|k| {
                if self.l[k] == self.u[k] {
                    Activity::Fixed
                } else if self.z[k] - self.l[k] < -self.y[k] {
                    Activity::Lower
                } else if self.u[k] - self.z[k] < self.y[k] {
                    Activity::Upper
                } else {
                    Activity::Inactive
                }
            })
            .collect();
        let saved = (self.x.clone(), self.z.clone(), self.y.clone());
        for _ in 0..POLISH_ROUNDS {
            let Some((x, y)) = self.polish_solve(&activity, &saved.0) else { break };
            self.x = x;
            self.a.mul(&self.x, &mut self.z);
            self.y = y;
            let sol = self.extract(QpStatus::Optimal, iterations, true);
            if sol.status == QpStatus::Optimal {
                for k in 0..m {
                    self.z[k] = self.z[k].clamp(self.l[k], self.u[k]);
                }
                return Some(sol);
            }
            // violated rows join first; only when the point is feasible does
            // the row with the most wrong-signed multiplier leave
            let mut changed = false;
            for k in 0..m {
                if activity[k] != Activity::Inactive {
                    continue;
                }
                let slack = POLISH_VIOLATION * (1.0 + self.z[k].abs());
                if self.z[k] > self.u[k] + slack {
                    activity[k] = Activity::Upper;
                    changed = true;
                } else if self.z[k] < self.l[k] - slack {
                    activity[k] = Activity::Lower;
                    changed = true;
                }
            }
            if !changed {
                let worst = (0..m)
                    .filter_map(|k| match activity[k] {
                        Activity::Lower if self.y[k] > 0.0 => Some((k, self.y[k])),
                        Activity::Upper if self.y[k] < 0.0 => Some((k, -self.y[k])),
                        _ => None,
                    })
                    .max_by(|a, b| a.1.total_cmp(&b.1));
                match worst {
                    Some((k, _)) => activity[k] = Activity::Inactive,
                    None => break,
                }
            }
        }
        (self.x, self.z, self.y) = saved;
        None
    }

    /// Solves the equality-constrained QP with the given rows held at their
    /// bounds. Variables with an active bound row are fixed; the remaining
    /// variables and active general rows form a quasi-definite KKT system
    /// (regularized by `±POLISH_DELTA`) that is factorized once and refined
    /// against the system with a proximal term `δ/2·|x − anchor|²` kept in
    /// the objective. The proximal term pins directions the active set leaves
    /// flat (non-unique optima) at the anchor, at a stationarity cost of
    /// `δ·|x − anchor|`. Bound multipliers follow from stationarity. Returns
    /// scaled primal and full-length dual vectors.
    fn polish_solve(&mut self, activity: &[Activity], anchor: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.n;
        let m = self.a.len();
        let target = |k: usize| match activity[k] {
            Activity::Lower | Activity::Fixed => self.l[k],
            _ => self.u[k],
        };

        let mut fixed: Vec<Option<usize>> = vec![None; n];
        let mut general = Vec::new();
        for k in 0..m {
            if activity[k] == Activity::Inactive {
                continue;
            }
            match self.origin[k] {
                RowOrigin::Bound(j) if fixed[j].is_none() => fixed[j] = Some(k),
                _ => general.push(k),
            }
        }
        let mut x = anchor.to_vec();
        for j in 0..n {
            if let Some(k) = fixed[j] {
                let (_, val) = self.a.row(k);
                x[j] = target(k) / val[0];
            }
        }
        let free: Vec<usize> = (0..n).filter(|&j| fixed[j].is_none()).collect();
        let mut pos = vec![usize::MAX; n];
        for (f, &j) in free.iter().enumerate() {
            pos[j] = f;
        }
        // rows without free entries only constrain fixed values; the final
        // KKT check decides whether they hold
        general.retain(|&k| self.a.row(k).0.iter().any(|&j| pos[j] != usize::MAX));
        let (nf, na) = (free.len(), general.len());

        let reuse = matches!(&self.polish_cache, Some((key, _)) if key.as_slice() == activity);
        if !reuse {
            let mut pattern = Vec::new();
            for (f, &i) in free.iter().enumerate() {
                let (idx, _) = self.p.row(i);
                pattern.extend(idx.iter().filter(|&&j| pos[j] != usize::MAX).map(|&j| (f, pos[j])));
            }
            for (a, &r) in general.iter().enumerate() {
                let (idx, _) = self.a.row(r);
                pattern.extend(idx.iter().filter(|&&j| pos[j] != usize::MAX).map(|&j| (pos[j], nf + a)));
            }
            let mut signs = vec![1i8; nf];
            signs.extend(std::iter::repeat(-1i8).take(na));
            let mut ldl = SparseLdl::new(nf + na, pattern, signs)?;
            let mut vals = vec![0.0; ldl.nnz()];
            for (f, &i) in free.iter().enumerate() {
                let (idx, val) = self.p.row(i);
                for (&j, &v) in idx.iter().zip(val) {
                    if pos[j] != usize::MAX && f <= pos[j] {
                        vals[ldl.slot(f, pos[j])] += v;
                    }
                }
                vals[ldl.slot(f, f)] += POLISH_DELTA;
            }
            for (a, &r) in general.iter().enumerate() {
                let (idx, val) = self.a.row(r);
                for (&j, &v) in idx.iter().zip(val) {
                    if pos[j] != usize::MAX {
                        vals[ldl.slot(pos[j], nf + a)] += v;
                    }
                }
                vals[ldl.slot(nf + a, nf + a)] -= POLISH_DELTA;
            }
            if !ldl.factor(&vals, POLISH_DELTA, 1e-14) {
                return None;
            }
            self.polish_cache = Some((activity.to_vec(), ldl));
        }
        let ldl = &mut self.polish_cache.as_mut().expect("set above").1;

        let mut y = vec![0.0; m];
        let mut px = vec![0.0; n];
        let mut aty = vec![0.0; n];
        let mut rhs = DVector::<f64>::zeros(nf + na);
        // first against the anchored system, then against the true one for
        // as long as its residual keeps shrinking
        let mut anchored = true;
        let mut last = f64::INFINITY;
        let mut best: Option<(Vec<f64>, Vec<f64>)> = None;
        for _ in 0..2 * POLISH_REFINE {
            // r_x = -q - P x - Aᵀ y over free columns ; r_y = b - A x
            self.p.mul(&x, &mut px);
            aty.iter_mut().for_each(|v| *v = 0.0);
            for &r in &general {
                let (idx, val) = self.a.row(r);
                for (&j, &v) in idx.iter().zip(val) {
                    aty[j] += v * y[r];
                }
            }
            for (f, &j) in free.iter().enumerate() {
                rhs[f] = -self.q[j] - px[j] - aty[j];
                if anchored {
                    rhs[f] -= POLISH_DELTA * (x[j] - anchor[j]);
                }
            }
            for (a, &r) in general.iter().enumerate() {
                rhs[nf + a] = target(r) - self.a.row_dot(r, &x);
            }
            let err = rhs.amax();
            // the anchored system is only solved to rounding level
            if err < if anchored { 1e-13 } else { 1e-15 } {
                if anchored {
                    anchored = false;
                    continue;
                }
                break;
            }
            if !anchored {
                if err >= last {
                    break;
                }
                last = err;
                best = Some((x.clone(), y.clone()));
            }
            ldl.solve(rhs.as_mut_slice());
            for (f, &j) in free.iter().enumerate() {
                x[j] += rhs[f];
            }
            for (a, &r) in general.iter().enumerate() {
                y[r] += rhs[nf + a];
            }
            if anchored && rhs.amax() < 1e-13 {
                anchored = false;
            }
        }
        // a diverging step is not kept
        if let Some((bx, by)) = best.filter(|_| last.is_finite()) {
            (x, y) = (bx, by);
        }

        self.p.mul(&x, &mut px);
        aty.iter_mut().for_each(|v| *v = 0.0);
        self.a.mul_t_add(&y, &mut aty);
        for j in 0..n {
            if let Some(k) = fixed[j] {
                let (_, val) = self.a.row(k);
                y[k] = -(px[j] + self.q[j] + aty[j]) / val[0];
            }
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return None;
        }
        Some((x, y))
    }

    /// Unscales the current iterate. If `status` is `Optimal` it is
    /// downgraded to `MaxIter` unless the unscaled KKT residuals pass.
    fn extract(&self, status: QpStatus, iterations: usize, polished: bool) -> QpSolution {
        let p = &self.problem;
        let n = self.n;
        let x = DVector::from_iterator(n, (0..n).map(|j| self.d[j] * self.x[j]));
        let mut eq_duals = DVector::zeros(p.num_eq());
        let mut ineq_duals = DVector::zeros(p.num_ineq());
        let mut lower_duals = DVector::zeros(n);
        let mut upper_duals = DVector::zeros(n);
        for (k, origin) in self.origin.iter().enumerate() {
            let y = self.e[k] * self.y[k] / self.c;
            match *origin {
                RowOrigin::Eq(i) => eq_duals[i] = y,
                RowOrigin::Ineq(i) => ineq_duals[i] = y,
                RowOrigin::Bound(j) => {
                    // a multiplier pointing at an infinite bound is reported
                    // as a wrong-signed multiplier on the finite side
                    let finite_upper = p.upper[j].is_finite();
                    let finite_lower = p.lower[j].is_finite();
                    if y > 0.0 {
                        if finite_upper || !finite_lower {
                            upper_duals[j] = y;
                        } else {
                            lower_duals[j] = -y;
                        }
                    } else if y < 0.0 {
                        if finite_lower || !finite_upper {
                            lower_duals[j] = -y;
                        } else {
                            upper_duals[j] = y;
                        }
                    }
                }
            }
        }
        let residuals = kkt_residuals(p, &x, &eq_duals, &ineq_duals, &lower_duals, &upper_duals)
            .unwrap_or(KktResiduals {
                stationarity: f64::INFINITY,
                primal_eq: f64::INFINITY,
                primal_ineq: f64::INFINITY,
                complementarity: f64::INFINITY,
            });
        let mut status = status;
        if status == QpStatus::Optimal
            && !within_tolerance(p, &x, &eq_duals, &ineq_duals, &residuals, self.settings.tol)
        {
            status = QpStatus::MaxIter;
        }
        QpSolution {
            objective: p.objective(&x),
            x,
            eq_duals,
            ineq_duals,
            lower_duals,
            upper_duals,
            status,
            iterations,
            residuals,
            certificate: None,
            polished,
        }
    }
}

struct Residuals {
    prim: f64,
    prim_norm: f64,
    dual: f64,
    dual_norm: f64,
    /// (primal, primal scale, dual, dual scale) in original units
    unscaled: (f64, f64, f64, f64),
}

fn limit_scaling(v: f64) -> f64 {
    if v < MIN_SCALING {
        1.0
    } else {
        v.min(MAX_SCALING)
    }
}

/// Optimality test: each residual within `tol · (1 + magnitude of the terms
/// it is built from)`.
fn within_tolerance(
    p: &QpProblem,
    x: &DVector<f64>,
    nu: &DVector<f64>,
    mu: &DVector<f64>,
    r: &KktResiduals,
    tol: f64,
) -> bool {
    let px = (&p.quad * x).amax();
    let aty = if p.num_eq() > 0 { p.eq_mat.tr_mul(nu).amax() } else { 0.0 };
    let gty = if p.num_ineq() > 0 { p.ineq_mat.tr_mul(mu).amax() } else { 0.0 };
    let dual_scale = px.max(p.lin.amax()).max(aty).max(gty);
    let eq_scale = if p.num_eq() > 0 {
        (&p.eq_mat * x).amax().max(p.eq_rhs.amax())
    } else {
        0.0
    };
    let ineq_scale = if p.num_ineq() > 0 {
        (&p.ineq_mat * x).amax().max(p.ineq_rhs.amax())
    } else {
        0.0
    }
    .max(x.amax());
    let comp_scale = dual_scale.max(eq_scale).max(ineq_scale);
    r.stationarity <= tol * (1.0 + dual_scale)
        && r.primal_eq <= tol * (1.0 + eq_scale)
        && r.primal_ineq <= tol * (1.0 + ineq_scale)
        && r.complementarity <= tol * (1.0 + comp_scale)
}
