use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::central::finish;
use super::{DispatchError, DispatchResult, DispatchStatus, TraceRow};
use crate::hub::{assemble_local_blocks, DispatchProfile, HubError, LocalBlocks, TradeTensor, Var};
use crate::pricing::PriceProfile;
use crate::qp::{QpProblem, QpSettings, QpStatus, QpWorkspace};
use crate::scenario::Scenario;

#[derive(Debug, Clone)]
pub struct AdmmConfig {
    pub rho: f64,
    /// Bound on both the primal residual `max|p̂ − p|` and the dual
    /// residual `ρ·max|Δp|`, kW.
    pub tol: f64,
    pub max_iter: usize,
    pub qp: QpSettings,
    /// Keep every message for export; counting happens regardless.
    pub record_messages: bool,
}

impl AdmmConfig {
    pub fn for_scenario(s: &Scenario) -> Self {
        Self {
            rho: s.admm_penalty_rho,
            tol: 1e-4,
            max_iter: 20_000,
            // per-round local solves need the relative tolerance only;
            // polishing rarely succeeds on these degenerate problems
            qp: QpSettings {
                polish: false,
                ..QpSettings::default()
            },
            record_messages: false,
        }
    }
}

/// What hub `sender` tells hub `receiver` after its local solve: its
/// estimates of the trade in both directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMessage {
    pub sender: String,
    pub receiver: String,
    pub iteration: usize,
    /// Sender's estimate of `p_tr[sender][receiver]`.
    pub forward: Vec<f64>,
    /// Sender's estimate of `p_tr[receiver][sender]`.
    pub reverse: Vec<f64>,
}

/// Protocol state, keyed by ordered pair `(i, j)` from hub `i`'s side.
#[derive(Debug, Clone)]
pub struct AdmmState {
    /// Agreed trades; reciprocal by construction.
    pub global: TradeTensor,
    /// `p̂_ij,i`: hub `i`'s estimate of `p_tr[i][j]`.
    pub estimate: BTreeMap<(usize, usize), Vec<f64>>,
    /// `p̂_ji,i`: hub `i`'s estimate of `p_tr[j][i]`.
    pub estimate_mirror: BTreeMap<(usize, usize), Vec<f64>>,
    pub lambda: BTreeMap<(usize, usize), Vec<f64>>,
    pub lambda_mirror: BTreeMap<(usize, usize), Vec<f64>>,
    pub iteration: usize,
}

pub struct AdmmRun {
    pub result: DispatchResult,
    pub state: AdmmState,
    pub messages: Vec<RoundMessage>,
    /// Messages exchanged in each iteration.
    pub messages_per_iteration: Vec<usize>,
    /// Each hub's last local solution in its own layout (trades at the
    /// hub's own estimates).
    pub local_x: Vec<Vec<f64>>,
}

/// One hub's augmented-Lagrangian subproblem. The local vector is the hub's
/// own layout followed by one mirror block per partner (`p̂_ji,i`), tied to
/// the own estimate by local reciprocity rows.
struct LocalAgent {
    blocks: LocalBlocks,
    base: QpProblem,
    ws: QpWorkspace,
    partners: Vec<usize>,
    n_base: usize,
    x: Vec<f64>,
}

impl LocalAgent {
    fn new(s: &Scenario, i: usize, prices: &PriceProfile, cfg: &AdmmConfig) -> Result<Self, DispatchError> {
        let blocks = assemble_local_blocks(s, i, prices)?;
        let base = blocks.to_problem();
        let partners = blocks.layout.partners();
        let hh = s.horizon_hours;
        let n_base = base.num_vars();
        let n = n_base + partners.len() * hh;

        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (n_base, n_base)).copy_from(&base.quad);
        let mut lower = DVector::zeros(n);
        let mut upper = DVector::zeros(n);
        lower.rows_mut(0, n_base).copy_from(&base.lower);
        upper.rows_mut(0, n_base).copy_from(&base.upper);
        let m0 = base.num_eq();
        let mut a = DMatrix::zeros(m0 + partners.len() * hh, n);
        a.view_mut((0, 0), (m0, n_base)).copy_from(&base.eq_mat);
        let mut b = DVector::zeros(m0 + partners.len() * hh);
        b.rows_mut(0, m0).copy_from(&base.eq_rhs);
        for (k, &j) in partners.iter().enumerate() {
            for h in 0..hh {
                let own = blocks.layout.index(Var::Trade(j), h).expect("trade block");
                let mirror = n_base + k * hh + h;
                p[(own, own)] += cfg.rho;
                p[(mirror, mirror)] += cfg.rho;
                lower[mirror] = -base.upper[own];
                upper[mirror] = -base.lower[own];
                let row = m0 + k * hh + h;
                a[(row, own)] = 1.0;
                a[(row, mirror)] = 1.0;
            }
        }
        let problem = QpProblem::new(p, DVector::zeros(n))
            .with_equalities(a, b)
            .with_bounds(lower, upper);
        let ws = QpWorkspace::new(&problem, cfg.qp.clone())?;
        Ok(Self {
            blocks,
            base,
            ws,
            partners,
            n_base,
            x: vec![0.0; n],
        })
    }

    /// Minimizes `J_i + Σ λᵀ(p̂ − p) + ρ/2‖p̂ − p‖²` over both copies of
    /// every trade.
    fn solve(&mut self, s: &Scenario, i: usize, st: &AdmmState, rho: f64) -> Result<(), HubError> {
        let hh = s.horizon_hours;
        let mut q = DVector::zeros(self.x.len());
        q.rows_mut(0, self.n_base).copy_from(&self.base.lin);
        for (k, &j) in self.partners.iter().enumerate() {
            let lam = &st.lambda[&(i, j)];
            let lam_m = &st.lambda_mirror[&(i, j)];
            for h in 0..hh {
                let own = self.blocks.layout.index(Var::Trade(j), h).expect("trade block");
                let global = st.global.get(i, j, h);
                q[own] += lam[h] - rho * global;
                q[self.n_base + k * hh + h] = lam_m[h] + rho * global;
            }
        }
        self.ws.set_linear_cost(&q)?;
        let sol = self.ws.solve();
        match sol.status {
            QpStatus::Optimal => {}
            QpStatus::Infeasible => {
                return Err(HubError::InfeasibleHub {
                    hub: s.hubs[i].id.clone(),
                    hour: None,
                    detail: "local subproblem has no feasible point".into(),
                })
            }
            QpStatus::MaxIter => {
                return Err(HubError::NotConverged {
                    hub: s.hubs[i].id.clone(),
                    residual: sol.residuals.max(),
                })
            }
        }
        self.x = sol.x.as_slice().to_vec();
        Ok(())
    }

    fn own(&self, j: usize) -> Vec<f64> {
        self.blocks.layout.series(&self.x, Var::Trade(j))
    }

    fn mirror(&self, k: usize, hh: usize) -> Vec<f64> {
        self.x[self.n_base + k * hh..self.n_base + (k + 1) * hh].to_vec()
    }

    /// `J_i` at the current local solution (trades at the own estimates).
    fn cost(&self) -> f64 {
        self.base
            .objective(&DVector::from_column_slice(&self.x[..self.n_base]))
    }
}

/// Agreed trade from the two endpoints' estimates of it.
pub fn average(estimate_i: f64, estimate_j: f64) -> f64 {
    0.5 * (estimate_i + estimate_j)
}

/// Dual ascent on one consensus constraint `p̂ = p`.
pub fn dual_update(lambda: f64, rho: f64, estimate: f64, global: f64) -> f64 {
    lambda + rho * (estimate - global)
}

/// Synchronous consensus ADMM between hubs:
///
/// 1. every hub solves its subproblem given the agreed trades and duals;
/// 2. every hub sends each partner its two estimates;
/// 3. each pair averages: `p_ij = ½(p̂_ij,i + p̂_ij,j)`;
/// 4. each copy's dual moves: `λ += ρ(p̂ − p)`.
///
/// Stops when `max|p̂ − p| ≤ tol` and `ρ·max|p^{k+1} − p^k| ≤ tol`.
pub fn run_admm(s: &Scenario, prices: &PriceProfile, cfg: &AdmmConfig) -> Result<AdmmRun, DispatchError> {
    if !(cfg.rho > 0.0) {
        return Err(DispatchError::Config(format!("ADMM penalty must be positive, got {}", cfg.rho)));
    }
    let hh = s.horizon_hours;
    let n = s.num_hubs();
    let mut agents = (0..n)
        .map(|i| LocalAgent::new(s, i, prices, cfg))
        .collect::<Result<Vec<_>, _>>()?;

    let zeros = || vec![0.0; hh];
    let mut st = AdmmState {
        global: TradeTensor::zeros(s),
        estimate: BTreeMap::new(),
        estimate_mirror: BTreeMap::new(),
        lambda: BTreeMap::new(),
        lambda_mirror: BTreeMap::new(),
        iteration: 0,
    };
    for (i, agent) in agents.iter().enumerate() {
        for &j in &agent.partners {
            st.estimate.insert((i, j), zeros());
            st.estimate_mirror.insert((i, j), zeros());
            st.lambda.insert((i, j), zeros());
            st.lambda_mirror.insert((i, j), zeros());
        }
    }

    let mut trace = Vec::new();
    let mut messages = Vec::new();
    let mut per_iter = Vec::new();
    let mut message_count = 0;
    let mut status = DispatchStatus::MaxIterExceeded;

    for k in 1..=cfg.max_iter {
        st.iteration = k;
        // (1) local solves, independent across hubs
        let state = &st;
        agents
            .par_iter_mut()
            .enumerate()
            .map(|(i, a)| a.solve(s, i, state, cfg.rho))
            .collect::<Result<Vec<()>, HubError>>()?;

        // (2) message exchange
        let mut inbox: BTreeMap<(usize, usize), RoundMessage> = BTreeMap::new();
        for (i, agent) in agents.iter().enumerate() {
            for (kk, &j) in agent.partners.iter().enumerate() {
                let msg = RoundMessage {
                    sender: s.hubs[i].id.clone(),
                    receiver: s.hubs[j].id.clone(),
                    iteration: k,
                    forward: agent.own(j),
                    reverse: agent.mirror(kk, hh),
                };
                debug_assert_eq!(msg.forward.len(), hh);
                st.estimate.insert((i, j), msg.forward.clone());
                st.estimate_mirror.insert((i, j), msg.reverse.clone());
                inbox.insert((i, j), msg);
            }
        }
        per_iter.push(inbox.len());
        message_count += inbox.len();

        // (3) averaging, once per unordered pair
        let previous = st.global.clone();
        for pair in s.pairs() {
            let (i, j) = (pair.i, pair.j);
            let from_i = &inbox[&(i, j)];
            let from_j = &inbox[&(j, i)];
            for h in 0..hh {
                // hub i's estimate of p_ij and hub j's estimate of the same trade
                st.global.set(i, j, h, average(from_i.forward[h], from_j.reverse[h]));
            }
        }

        // (4) dual updates and residuals
        let mut primal: f64 = 0.0;
        for ((i, j), est) in &st.estimate {
            let lam = st.lambda.get_mut(&(*i, *j)).expect("initialized");
            let lam_m = st.lambda_mirror.get_mut(&(*i, *j)).expect("initialized");
            let mirror = &st.estimate_mirror[&(*i, *j)];
            for h in 0..hh {
                let g = st.global.get(*i, *j, h);
                let r = est[h] - g;
                let r_m = mirror[h] + g;
                lam[h] = dual_update(lam[h], cfg.rho, est[h], g);
                lam_m[h] = dual_update(lam_m[h], cfg.rho, mirror[h], -g);
                primal = primal.max(r.abs()).max(r_m.abs());
            }
        }
        let dual = cfg.rho * st.global.max_deviation(&previous);
        let w: f64 = agents.iter().map(LocalAgent::cost).sum();
        trace.push(TraceRow {
            iter: k,
            primal_res: primal,
            dual_res: dual,
            w,
        });
        if cfg.record_messages {
            messages.extend(inbox.into_values());
        }
        if k % 100 == 0 {
            log::debug!("admm iter {k}: primal {primal:e} dual {dual:e} W {w}");
        }
        if primal <= cfg.tol && dual <= cfg.tol {
            status = DispatchStatus::Converged;
            break;
        }
    }
    if status == DispatchStatus::MaxIterExceeded {
        log::warn!("ADMM reached {} iterations without consensus", cfg.max_iter);
    }

    let hubs = agents
        .iter()
        .map(|a| a.blocks.setpoints(s, &a.x[..a.n_base]))
        .collect();
    let profile = DispatchProfile {
        hubs,
        trades: st.global.clone(),
    };
    let local_x = agents.iter().map(|a| a.x[..a.n_base].to_vec()).collect();
    let iterations = st.iteration;
    let result = finish(s, profile, prices, status, iterations, trace, message_count);
    Ok(AdmmRun {
        result,
        state: st,
        messages,
        messages_per_iteration: per_iter,
        local_x,
    })
}

