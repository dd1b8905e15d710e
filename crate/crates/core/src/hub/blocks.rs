use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{pv_output, HubError, HubSetpoints, Layout, StorageSpec, Var};
use crate::pricing::PriceProfile;
use crate::qp::QpProblem;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StorageKind {
    Electric,
    Thermal,
}

/// What an equality row encodes, with its hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowLabel {
    ElectricBalance(usize),
    ThermalBalance(usize),
    ChpSimplex(usize),
    Storage(StorageKind, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub entries: Vec<(usize, f64)>,
    pub rhs: f64,
    pub label: RowLabel,
}

impl SparseRow {
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(j, v)| v * x[j]).sum::<f64>() - self.rhs
    }
}

/// One hub's QP: `½xᵀPx + linᵀx` subject to the equality rows and bounds.
#[derive(Debug, Clone)]
pub struct LocalBlocks {
    pub hub: usize,
    pub layout: Layout,
    /// Entries of the symmetric `P`, listed once per `(row, col)` position.
    pub quad: Vec<(usize, usize, f64)>,
    pub lin: Vec<f64>,
    pub equalities: Vec<SparseRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Builds hub `i`'s QP blocks with trade variables for every partner,
/// priced by `prices`.
///
/// Fails with `InfeasibleHub` when a per-hour capacity check shows a balance
/// cannot be met, naming the first such hour.
pub fn assemble_local_blocks(s: &Scenario, i: usize, prices: &PriceProfile) -> Result<LocalBlocks, HubError> {
    build(s, i, &s.partners(i), Some(prices))
}

/// Same as [`assemble_local_blocks`] with no trade variables at all.
pub(crate) fn assemble_without_trades(s: &Scenario, i: usize) -> Result<LocalBlocks, HubError> {
    build(s, i, &[], None)
}

fn build(s: &Scenario, i: usize, partners: &[usize], prices: Option<&PriceProfile>) -> Result<LocalBlocks, HubError> {
    let hub = &s.hubs[i];
    let hh = s.horizon_hours;
    let layout = Layout::for_hub(hub, partners, hh);
    let n = layout.num_vars();
    let idx = |v: Var, h: usize| layout.index(v, h).expect("block present");
    let t = &s.tariffs;

    precheck(s, i, partners)?;

    let mut lin = vec![0.0; n];
    let mut quad = Vec::new();
    let mut lower = vec![f64::NEG_INFINITY; n];
    let mut upper = vec![f64::INFINITY; n];
    let mut eqs = Vec::new();
    let mut set_bounds = |j: usize, lo: f64, hi: f64| {
        lower[j] = lo;
        upper[j] = hi;
    };
    let demand = &s.demand[i];
    let pv_avail = hub.pv.as_ref().map(|pv| pv_output(pv, &s.irradiance[i]));

    for h in 0..hh {
        let mut elec: Vec<(usize, f64)> = Vec::new();
        let mut heat: Vec<(usize, f64)> = Vec::new();

        if let Some(chp) = &hub.chp {
            let mut simplex = Vec::new();
            for (k, &(p, q)) in chp.vertices.iter().enumerate() {
                let j = idx(Var::ChpW(k as u8), h);
                set_bounds(j, 0.0, 1.0);
                lin[j] = t.gas * p / chp.eta;
                elec.push((j, p));
                heat.push((j, q));
                simplex.push((j, 1.0));
            }
            eqs.push(SparseRow {
                entries: simplex,
                rhs: 1.0,
                label: RowLabel::ChpSimplex(h),
            });
        }
        if let Some(hp) = &hub.hp {
            let j = idx(Var::HpQ, h);
            set_bounds(j, hp.q_bounds[0], hp.q_bounds[1]);
            heat.push((j, 1.0));
            elec.push((j, -1.0 / hp.cop));
        }
        if let Some(gb) = &hub.gb {
            let j = idx(Var::GbQ, h);
            set_bounds(j, gb.q_bounds[0], gb.q_bounds[1]);
            lin[j] = t.gas / gb.eta;
            heat.push((j, 1.0));
        }
        if let Some(pv) = &hub.pv {
            let j = idx(Var::PvP, h);
            let avail = pv_avail.as_ref().expect("computed with pv")[h];
            let lo = pv.p_bounds[0].min(avail);
            set_bounds(j, lo, avail);
            elec.push((j, 1.0));
        }
        for (kind, st, soc, ch, dc) in [
            (StorageKind::Electric, &hub.es, Var::EsSoc, Var::EsCh, Var::EsDc),
            (StorageKind::Thermal, &hub.ts, Var::TsSoc, Var::TsCh, Var::TsDc),
        ] {
            let Some(st) = st else { continue };
            let (js, jc, jd) = (idx(soc, h), idx(ch, h), idx(dc, h));
            let soc_lo = if h + 1 == hh {
                st.soc_bounds[0].max(st.soc_initial)
            } else {
                st.soc_bounds[0]
            };
            set_bounds(js, soc_lo, st.soc_bounds[1]);
            set_bounds(jc, st.charge_bounds[0], st.charge_bounds[1]);
            set_bounds(jd, st.discharge_bounds[0], st.discharge_bounds[1]);
            eqs.push(storage_row(kind, st, h, js, jc, jd, (h > 0).then(|| idx(soc, h - 1))));
            let balance = if kind == StorageKind::Electric { &mut elec } else { &mut heat };
            balance.push((jd, 1.0));
            balance.push((jc, -1.0));
        }

        let ji = idx(Var::GridImport, h);
        let je = idx(Var::GridExport, h);
        set_bounds(ji, 0.0, hub.import_max);
        set_bounds(je, 0.0, hub.export_max);
        lin[ji] = t.grid_import;
        lin[je] = -t.grid_feed_in;
        elec.push((ji, 1.0));
        elec.push((je, -1.0));

        for &partner in partners {
            let j = idx(Var::Trade(partner), h);
            let kappa = s
                .pairs()
                .iter()
                .find(|p| (p.i, p.j) == (i.min(partner), i.max(partner)))
                .map_or(0.0, |p| p.kappa);
            set_bounds(j, -kappa, kappa);
            lin[j] = prices.map_or(0.0, |c| c.get(i, partner, h));
            quad.push((j, j, 2.0 * s.trading_tariff_gamma));
            elec.push((j, 1.0));
        }

        eqs.push(SparseRow {
            entries: elec,
            rhs: demand.electric[h],
            label: RowLabel::ElectricBalance(h),
        });
        eqs.push(SparseRow {
            entries: heat,
            rhs: demand.thermal[h],
            label: RowLabel::ThermalBalance(h),
        });
    }

    // w·(Σ_h import[h])² = ½ xᵀ (2w·𝟙𝟙ᵀ) x over the import block
    let w = s.import_regularization_weight;
    if w > 0.0 {
        for a in 0..hh {
            for b in 0..hh {
                quad.push((idx(Var::GridImport, a), idx(Var::GridImport, b), 2.0 * w));
            }
        }
    }

    Ok(LocalBlocks {
        hub: i,
        layout,
        quad,
        lin,
        equalities: eqs,
        lower,
        upper,
    })
}

/// `soc[h] − γ·soc[h−1] − η·ch[h] + dc[h]/η = γ·soc_initial·[h = 0]`.
fn storage_row(
    kind: StorageKind,
    st: &StorageSpec,
    h: usize,
    js: usize,
    jc: usize,
    jd: usize,
    prev: Option<usize>,
) -> SparseRow {
    let mut entries = vec![(js, 1.0), (jc, -st.cycle_eta), (jd, 1.0 / st.cycle_eta)];
    let rhs = match prev {
        Some(jp) => {
            entries.push((jp, -st.standby_gamma));
            0.0
        }
        None => st.standby_gamma * st.soc_initial,
    };
    SparseRow {
        entries,
        rhs,
        label: RowLabel::Storage(kind, h),
    }
}

/// Per-hour capacity test of both balances, ignoring storage inventory
/// limits (a necessary condition for feasibility).
fn precheck(s: &Scenario, i: usize, partners: &[usize]) -> Result<(), HubError> {
    let hub = &s.hubs[i];
    let trade_cap: f64 = s
        .pairs()
        .iter()
        .filter(|p| (p.i == i && partners.contains(&p.j)) || (p.j == i && partners.contains(&p.i)))
        .map(|p| p.kappa)
        .sum();
    let pv = hub.pv.as_ref().map(|pv| pv_output(pv, &s.irradiance[i]));
    let fail = |h: usize, detail: String| HubError::InfeasibleHub {
        hub: hub.id.clone(),
        hour: Some(h),
        detail,
    };
    let tol = 1e-9;
    for h in 0..s.horizon_hours {
        let (le, lh) = (s.demand[i].electric[h], s.demand[i].thermal[h]);

        let chp_q_max = hub.chp.as_ref().map_or(0.0, |c| c.vertices.iter().map(|v| v.1).fold(0.0, f64::max));
        let chp_q_min = hub.chp.as_ref().map_or(0.0, |c| c.vertices.iter().map(|v| v.1).fold(f64::INFINITY, f64::min));
        let heat_max = chp_q_max
            + hub.hp.as_ref().map_or(0.0, |x| x.q_bounds[1])
            + hub.gb.as_ref().map_or(0.0, |x| x.q_bounds[1])
            + hub.ts.as_ref().map_or(0.0, |x| x.discharge_bounds[1] - x.charge_bounds[0]);
        let heat_min = chp_q_min
            + hub.hp.as_ref().map_or(0.0, |x| x.q_bounds[0])
            + hub.gb.as_ref().map_or(0.0, |x| x.q_bounds[0])
            + hub.ts.as_ref().map_or(0.0, |x| x.discharge_bounds[0] - x.charge_bounds[1]);
        if heat_max + tol < lh {
            return Err(fail(h, format!("thermal demand {lh} kW exceeds heat capacity {heat_max} kW at hour {h}")));
        }
        if heat_min > lh + tol {
            return Err(fail(h, format!("minimum heat output {heat_min} kW exceeds thermal demand {lh} kW at hour {h}")));
        }

        let chp_p_max = hub.chp.as_ref().map_or(0.0, |c| c.vertices.iter().map(|v| v.0).fold(0.0, f64::max));
        let chp_p_min = hub.chp.as_ref().map_or(0.0, |c| c.vertices.iter().map(|v| v.0).fold(f64::INFINITY, f64::min));
        let pv_h = pv.as_ref().map_or(0.0, |p| p[h]);
        let pv_min = hub.pv.as_ref().map_or(0.0, |x| x.p_bounds[0].min(pv_h));
        let es = hub.es.as_ref();
        let supply_max = hub.import_max + chp_p_max + pv_h + es.map_or(0.0, |x| x.discharge_bounds[1]) + trade_cap;
        let supply_min = chp_p_min + pv_min + es.map_or(0.0, |x| x.discharge_bounds[0]);
        let use_min = le
            + hub.hp.as_ref().map_or(0.0, |x| x.q_bounds[0] / x.cop)
            + es.map_or(0.0, |x| x.charge_bounds[0]);
        let use_max = le
            + hub.export_max
            + hub.hp.as_ref().map_or(0.0, |x| x.q_bounds[1] / x.cop)
            + es.map_or(0.0, |x| x.charge_bounds[1])
            + trade_cap;
        if supply_max + tol < use_min {
            return Err(fail(h, format!("electric demand {use_min} kW exceeds supply capacity {supply_max} kW at hour {h}")));
        }
        if supply_min > use_max + tol {
            return Err(fail(h, format!("forced electric output {supply_min} kW cannot be absorbed at hour {h}")));
        }
    }
    Ok(())
}

impl LocalBlocks {
    pub fn num_vars(&self) -> usize {
        self.layout.num_vars()
    }

    /// Dense `QpProblem` of this hub alone.
    pub fn to_problem(&self) -> QpProblem {
        let n = self.num_vars();
        let mut p = DMatrix::zeros(n, n);
        for &(a, b, v) in &self.quad {
            p[(a, b)] += v;
        }
        let m = self.equalities.len();
        let mut a = DMatrix::zeros(m, n);
        let mut b = DVector::zeros(m);
        for (r, row) in self.equalities.iter().enumerate() {
            for &(j, v) in &row.entries {
                a[(r, j)] += v;
            }
            b[r] = row.rhs;
        }
        QpProblem::new(p, DVector::from_vec(self.lin.clone()))
            .with_equalities(a, b)
            .with_bounds(
                DVector::from_vec(self.lower.clone()),
                DVector::from_vec(self.upper.clone()),
            )
    }

    /// Largest balance-row residual at `x`, kW.
    pub fn max_balance_residual(&self, x: &[f64]) -> f64 {
        self.equalities
            .iter()
            .filter(|r| matches!(r.label, RowLabel::ElectricBalance(_) | RowLabel::ThermalBalance(_)))
            .map(|r| r.residual(x).abs())
            .fold(0.0, f64::max)
    }

    /// Reads setpoints out of a local decision vector.
    pub fn setpoints(&self, s: &Scenario, x: &[f64]) -> HubSetpoints {
        let hub = &s.hubs[self.hub];
        let l = &self.layout;
        let hh = l.horizon;
        let mut sp = HubSetpoints::zeros(hh);
        if let Some(chp) = &hub.chp {
            let w: Vec<Vec<f64>> = (0..4).map(|k| l.series(x, Var::ChpW(k))).collect();
            for h in 0..hh {
                let wh = [w[0][h], w[1][h], w[2][h], w[3][h]];
                sp.chp_weights[h] = wh;
                sp.chp_p[h] = (0..4).map(|k| wh[k] * chp.vertices[k].0).sum();
                sp.chp_q[h] = (0..4).map(|k| wh[k] * chp.vertices[k].1).sum();
            }
        }
        sp.hp_q = l.series(x, Var::HpQ);
        if let Some(hp) = &hub.hp {
            sp.hp_p = sp.hp_q.iter().map(|q| q / hp.cop).collect();
        }
        sp.gb_q = l.series(x, Var::GbQ);
        sp.pv_p = l.series(x, Var::PvP);
        sp.es_soc = l.series(x, Var::EsSoc);
        sp.es_ch = l.series(x, Var::EsCh);
        sp.es_dc = l.series(x, Var::EsDc);
        sp.ts_soc = l.series(x, Var::TsSoc);
        sp.ts_ch = l.series(x, Var::TsCh);
        sp.ts_dc = l.series(x, Var::TsDc);
        sp.grid_import = l.series(x, Var::GridImport);
        sp.grid_export = l.series(x, Var::GridExport);
        sp
    }
}
