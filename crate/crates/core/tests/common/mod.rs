//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use fairtrade::dispatch::{AdmmRun, DispatchResult, Solver};
use fairtrade::hub::{HubSetpoints, PairSeries, TradeTensor};
use fairtrade::pricing::{FixedDispatch, PriceProfile};
use fairtrade::qp::{QpProblem, QpSettings};
use fairtrade::scenario::{load_scenario, ChpSpec, Scenario};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

pub fn load(name: &str) -> Scenario {
    load_scenario(scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn central() -> Solver {
    Solver::Central(QpSettings::default())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random feasible convex QP with `n` variables, `m_eq` equalities and
/// `m_in` inequalities. With `singular`, `P` is rank-deficient and `q` lies
/// in its range so the problem stays bounded below.
pub fn random_qp(rng: &mut ChaCha8Rng, n: usize, m_eq: usize, m_in: usize, singular: bool) -> QpProblem {
    let rank = if singular { (n / 2).max(1) } else { n };
    let b = DMatrix::from_fn(rank, n, |_, _| rng.random_range(-1.0..1.0));
    let mut p = b.transpose() * &b;
    if !singular {
        p += DMatrix::identity(n, n) * 0.1;
    }
    let q = if singular {
        let w = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        &p * w
    } else {
        DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0))
    };
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let a = DMatrix::from_fn(m_eq, n, |_, _| rng.random_range(-1.0..1.0));
    let beq = &a * &x0;
    let g = DMatrix::from_fn(m_in, n, |_, _| rng.random_range(-1.0..1.0));
    let slack = DVector::from_fn(m_in, |_, _| rng.random_range(0.0..0.5));
    let h = &g * &x0 + slack;
    QpProblem::new(p, q).with_equalities(a, beq).with_inequalities(g, h)
}

/// Brute-force optimum: enumerate every subset of inequalities as the
/// active set, solve the resulting KKT system by least squares, keep the
/// consistent, primal-feasible, dual-feasible candidates and return the best
/// objective. Bounds on variables are not supported.
pub fn active_set_oracle(p: &QpProblem) -> Option<f64> {
    let n = p.num_vars();
    let m_eq = p.num_eq();
    let m_in = p.num_ineq();
    assert!(m_in <= 16, "oracle enumerates 2^m subsets");
    let mut best: Option<f64> = None;
    for mask in 0u32..(1u32 << m_in) {
        let active: Vec<usize> = (0..m_in).filter(|i| mask & (1 << i) != 0).collect();
        let k = m_eq + active.len();
        let mut kkt = DMatrix::<f64>::zeros(n + k, n + k);
        let mut rhs = DVector::<f64>::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.quad);
        for j in 0..n {
            rhs[j] = -p.lin[j];
        }
        for r in 0..m_eq {
            for j in 0..n {
                kkt[(n + r, j)] = p.eq_mat[(r, j)];
                kkt[(j, n + r)] = p.eq_mat[(r, j)];
            }
            rhs[n + r] = p.eq_rhs[r];
        }
        for (a, &i) in active.iter().enumerate() {
            let r = m_eq + a;
            for j in 0..n {
                kkt[(n + r, j)] = p.ineq_mat[(i, j)];
                kkt[(j, n + r)] = p.ineq_mat[(i, j)];
            }
            rhs[n + r] = p.ineq_rhs[i];
        }
        let svd = kkt.clone().svd(true, true);
        let Ok(sol) = svd.solve(&rhs, 1e-10) else { continue };
        if (&kkt * &sol - &rhs).amax() > 1e-8 {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        let feasible = (0..m_in).all(|i| p.ineq_mat.row(i).dot(&x.transpose()) <= p.ineq_rhs[i] + 1e-8);
        let dual_ok = (0..active.len()).all(|a| sol[n + m_eq + a] >= -1e-8);
        if feasible && dual_ok {
            let obj = p.objective(&x);
            best = Some(best.map_or(obj, |b: f64| b.min(obj)));
        }
    }
    best
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Largest violation of each physical invariant over a solved profile.
#[derive(Debug, Default, Clone, Copy)]
pub struct PhysicsCheck {
    /// `|soc − recursion(soc_initial, ch, dc)|`, kWh.
    pub storage: f64,
    /// Shortfall of the terminal state of charge below its initial value.
    pub terminal: f64,
    /// Distance of `(chp_p, chp_q)` outside the hull of the CHP vertices, kW.
    pub chp: f64,
    /// `|p_ij + p_ji|`; zero when reciprocity is exact.
    pub reciprocity: f64,
    /// Electric and thermal balance residuals, kW.
    pub balance: f64,
}

impl PhysicsCheck {
    pub fn worst(&self) -> f64 {
        self.storage.max(self.terminal).max(self.chp).max(self.reciprocity).max(self.balance)
    }

    pub fn holds(&self) -> bool {
        self.storage <= 1e-8 && self.terminal <= 1e-8 && self.chp <= 1e-8 && self.reciprocity == 0.0 && self.balance <= 1e-6
    }
}

/// Recomputes every invariant from the setpoints and the scenario alone.
/// `traded(i, h)` is the power hub `i` receives through trades in hour `h`
/// as seen by that hub's own balance.
pub fn physics_check(
    s: &Scenario,
    setpoints: &[HubSetpoints],
    trades: &TradeTensor,
    traded: impl Fn(usize, usize) -> f64,
) -> PhysicsCheck {
    let mut out = PhysicsCheck::default();
    let hh = s.horizon_hours;
    for (i, (hub, sp)) in s.hubs.iter().zip(setpoints).enumerate() {
        for (spec, soc, ch, dc) in [
            (&hub.es, &sp.es_soc, &sp.es_ch, &sp.es_dc),
            (&hub.ts, &sp.ts_soc, &sp.ts_ch, &sp.ts_dc),
        ] {
            let Some(st) = spec else { continue };
            let mut level = st.soc_initial;
            for h in 0..hh {
                level = st.standby_gamma * level + st.cycle_eta * ch[h] - dc[h] / st.cycle_eta;
                out.storage = out.storage.max((level - soc[h]).abs());
            }
            out.terminal = out.terminal.max(st.soc_initial - soc[hh - 1]);
        }
        if let Some(chp) = &hub.chp {
            for h in 0..hh {
                out.chp = out.chp.max(hull_distance(chp, (sp.chp_p[h], sp.chp_q[h])));
            }
        }
        let d = &s.demand[i];
        for h in 0..hh {
            let electric = sp.chp_p[h] + sp.pv_p[h] + sp.grid_import[h] - sp.grid_export[h] + sp.es_dc[h] - sp.es_ch[h]
                - sp.hp_p[h]
                + traded(i, h)
                - d.electric[h];
            let thermal = sp.chp_q[h] + sp.hp_q[h] + sp.gb_q[h] + sp.ts_dc[h] - sp.ts_ch[h] - d.thermal[h];
            out.balance = out.balance.max(electric.abs()).max(thermal.abs());
        }
    }
    for a in 0..s.num_hubs() {
        for b in 0..s.num_hubs() {
            for h in 0..hh {
                out.reciprocity = out.reciprocity.max((trades.get(a, b, h) + trades.get(b, a, h)).abs());
            }
        }
    }
    out
}

pub fn check_result(s: &Scenario, r: &DispatchResult) -> PhysicsCheck {
    physics_check(s, &r.profile.hubs, &r.profile.trades, |i, h| r.profile.trades.net_import(i, h))
}

/// ADMM setpoints balance against each hub's own trade estimates, which
/// agree with the global trades only up to the consensus tolerance.
pub fn check_admm(s: &Scenario, run: &AdmmRun) -> PhysicsCheck {
    physics_check(s, &run.result.profile.hubs, &run.result.profile.trades, |i, h| {
        run.state
            .estimate
            .iter()
            .filter(|((a, _), _)| *a == i)
            .map(|(_, v)| v[h])
            .sum()
    })
}

/// Distance of `pt` outside the convex hull of the CHP vertices (0 inside),
/// from a monotone-chain hull.
pub fn hull_distance(chp: &ChpSpec, pt: (f64, f64)) -> f64 {
    let mut pts: Vec<(f64, f64)> = chp.vertices.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    let seg = |a: (f64, f64), b: (f64, f64)| {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 { (((pt.0 - a.0) * dx + (pt.1 - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
        ((pt.0 - a.0 - t * dx).powi(2) + (pt.1 - a.1 - t * dy).powi(2)).sqrt()
    };
    let edges: Vec<((f64, f64), (f64, f64))> = (0..hull.len()).map(|k| (hull[k], hull[(k + 1) % hull.len()])).collect();
    if hull.len() >= 3 && edges.iter().all(|&(a, b)| cross(a, b, pt) >= 0.0) {
        return 0.0;
    }
    edges.iter().map(|&(a, b)| seg(a, b)).fold(f64::INFINITY, f64::min)
}

/// `φ` rebuilt from the definitions: `J_i = J_i(0) + Σ_j Σ_h c·p_ij`,
/// `d_i = (J_nt − J)/J_nt`, population variance.
pub fn phi_oracle(model: &FixedDispatch, c: &PriceProfile) -> f64 {
    let n = model.num_hubs();
    let mut j = model.j_zero.clone();
    for t in &model.trades.pairs {
        let price = c.pairs.iter().find(|p| p.i == t.i && p.j == t.j).unwrap();
        for (h, &p) in t.values.iter().enumerate() {
            j[t.i] += price.values[h] * p;
            j[t.j] -= price.values[h] * p;
        }
    }
    let d: Vec<f64> = (0..n).map(|i| (model.j_nt[i] - j[i]) / model.j_nt[i]).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64
}

/// Random fixed dispatch with `n` hubs over `hh` hours and random prices;
/// about a fifth of the trade entries are exactly zero.
pub fn random_model(rng: &mut impl Rng, n: usize, hh: usize) -> (FixedDispatch, PriceProfile) {
    let mut pairs = Vec::new();
    let mut prices = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            pairs.push(PairSeries {
                i,
                j,
                values: (0..hh)
                    .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(-300.0..300.0) })
                    .collect(),
            });
            prices.push(PairSeries {
                i,
                j,
                values: (0..hh).map(|_| rng.random_range(-0.5..0.5)).collect(),
            });
        }
    }
    let j_nt: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..1500.0)).collect();
    let j_zero: Vec<f64> = j_nt.iter().map(|v| v * rng.random_range(0.9..1.0)).collect();
    let ids = (0..n).map(|i| format!("h{i}")).collect();
    let trades = TradeTensor {
        num_hubs: n,
        horizon: hh,
        pairs,
    };
    let c = PriceProfile {
        num_hubs: n,
        horizon: hh,
        pairs: prices,
    };
    (FixedDispatch::new(ids, trades, j_zero, j_nt), c)
}
