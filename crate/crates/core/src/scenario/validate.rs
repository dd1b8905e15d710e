use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{Scenario, StorageSpec};

/// One validation finding, located by a field path such as `links[0].to_hub`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(Finding {
            path: path.into(),
            message: message.into(),
        });
    }

    fn warn(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.warnings.push(Finding {
            path: path.into(),
            message: message.into(),
        });
    }
}

/// Checks every scenario invariant. Errors make the scenario unusable;
/// warnings flag legal but suspicious data.
pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let mut r = ValidationReport::default();
    let h = s.horizon_hours;
    if h == 0 {
        r.error("horizon_hours", "horizon must be at least one hour");
    }

    let t = &s.tariffs;
    for (name, v) in [("grid_import", t.grid_import), ("grid_feed_in", t.grid_feed_in), ("gas", t.gas)] {
        if !(v >= 0.0) || !v.is_finite() {
            r.error(format!("tariffs.{name}"), "negative or non-finite tariff");
        }
    }
    if t.grid_feed_in > t.grid_import {
        r.warn("tariffs.grid_feed_in", "feed-in price exceeds import price");
    }
    if !(s.trading_tariff_gamma >= 0.0) || !s.trading_tariff_gamma.is_finite() {
        r.error("params.trading_tariff_gamma", "negative trading tariff");
    }
    if !(s.admm_penalty_rho > 0.0) || !s.admm_penalty_rho.is_finite() {
        r.error("params.admm_penalty_rho", "ADMM penalty must be positive");
    }
    if !(s.import_regularization_weight >= 0.0) || !s.import_regularization_weight.is_finite() {
        r.error("params.import_regularization_weight", "negative regularization weight");
    }

    let mut ids = HashSet::new();
    for (k, hub) in s.hubs.iter().enumerate() {
        let path = format!("hubs[{k}]");
        if hub.id.is_empty() {
            r.error(format!("{path}.id"), "empty hub id");
        } else if !ids.insert(hub.id.as_str()) {
            r.error(format!("{path}.id"), format!("duplicate hub id `{}`", hub.id));
        }
        check_hub(&mut r, &path, s, k);
    }

    let mut seen_pairs = HashSet::new();
    for (k, link) in s.links.iter().enumerate() {
        let path = format!("links[{k}]");
        let a = s.hub_index(&link.from_hub);
        let b = s.hub_index(&link.to_hub);
        if a.is_none() {
            r.error(format!("{path}.from_hub"), format!("unknown hub `{}`", link.from_hub));
        }
        if b.is_none() {
            r.error(format!("{path}.to_hub"), format!("unknown hub `{}`", link.to_hub));
        }
        if let (Some(a), Some(b)) = (a, b) {
            if a == b {
                r.error(format!("{path}.to_hub"), "link connects a hub to itself");
            } else if !seen_pairs.insert((a.min(b), a.max(b))) {
                r.error(path.clone(), "second link for the same pair of hubs");
            }
        }
        if !(link.capacity_kappa >= 0.0) {
            r.error(format!("{path}.capacity_kappa"), "negative trade capacity");
        }
    }

    if s.demand.len() != s.hubs.len() || s.irradiance.len() != s.hubs.len() {
        r.error("series", "one demand and irradiance series per hub required");
    } else {
        for (k, hub) in s.hubs.iter().enumerate() {
            let path = format!("series.{}", hub.id);
            for (name, series) in [
                ("L_e_kW", &s.demand[k].electric),
                ("L_h_kW", &s.demand[k].thermal),
                ("irradiance_kW_m2", &s.irradiance[k]),
            ] {
                if series.len() != h {
                    r.error(
                        format!("{path}.{name}"),
                        format!("series has {} entries, horizon is {h}", series.len()),
                    );
                }
                if let Some(i) = series.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
                    r.error(format!("{path}.{name}[{i}]"), "negative or non-finite value");
                }
            }
        }
    }
    r
}

fn check_hub(r: &mut ValidationReport, path: &str, s: &Scenario, k: usize) {
    let hub = &s.hubs[k];
    let unit_interval = |v: f64| v > 0.0 && v <= 1.0;
    if !(hub.import_max >= 0.0) {
        r.error(format!("{path}.grid.import_max"), "negative grid limit");
    }
    if !(hub.export_max >= 0.0) {
        r.error(format!("{path}.grid.export_max"), "negative grid limit");
    }
    if let Some(chp) = &hub.chp {
        let cp = format!("{path}.chp");
        if !unit_interval(chp.eta) {
            r.error(format!("{cp}.eta"), "efficiency must lie in (0, 1]");
        }
        if chp
            .vertices
            .iter()
            .any(|&(p, q)| !(p >= 0.0 && q >= 0.0) || !p.is_finite() || !q.is_finite())
        {
            r.error(format!("{cp}.vertices"), "vertex outputs must be finite and nonnegative");
        } else {
            let (p0, q0) = chp.vertices[0];
            let collinear = chp.vertices.iter().all(|&(p1, q1)| {
                chp.vertices.iter().all(|&(p2, q2)| {
                    ((p1 - p0) * (q2 - q0) - (q1 - q0) * (p2 - p0)).abs() <= 1e-9
                })
            });
            if collinear {
                r.warn(format!("{cp}.vertices"), "vertices are collinear (degenerate region)");
            }
        }
    }
    if let Some(hp) = &hub.hp {
        if !(hp.cop > 0.0) || !hp.cop.is_finite() {
            r.error(format!("{path}.hp.cop"), "COP must be positive");
        }
        check_bounds(r, &format!("{path}.hp.q"), hp.q_bounds);
    }
    if let Some(gb) = &hub.gb {
        if !unit_interval(gb.eta) {
            r.error(format!("{path}.gb.eta"), "efficiency must lie in (0, 1]");
        }
        check_bounds(r, &format!("{path}.gb.q"), gb.q_bounds);
    }
    if let Some(pv) = &hub.pv {
        if !unit_interval(pv.eta) {
            r.error(format!("{path}.pv.eta"), "efficiency must lie in (0, 1]");
        }
        if !(pv.area_m2 >= 0.0) || !pv.area_m2.is_finite() {
            r.error(format!("{path}.pv.area"), "negative area");
        }
        check_bounds(r, &format!("{path}.pv.p"), pv.p_bounds);
    }
    for (name, st) in [("es", &hub.es), ("ts", &hub.ts)] {
        if let Some(st) = st {
            check_storage(r, &format!("{path}.{name}"), st);
        }
    }
}

fn check_bounds(r: &mut ValidationReport, path: &str, b: [f64; 2]) {
    if !b[0].is_finite() || !b[1].is_finite() {
        r.error(format!("{path}_max"), "bounds must be finite");
    } else if b[0] < 0.0 {
        r.error(format!("{path}_min"), "lower bound must be nonnegative");
    } else if b[0] > b[1] {
        r.error(format!("{path}_max"), "upper bound below lower bound");
    }
}

fn check_storage(r: &mut ValidationReport, path: &str, st: &StorageSpec) {
    if !(st.cycle_eta > 0.0 && st.cycle_eta <= 1.0) {
        r.error(format!("{path}.cycle_eta"), "efficiency must lie in (0, 1]");
    }
    if !(st.standby_gamma > 0.0 && st.standby_gamma <= 1.0) {
        r.error(format!("{path}.standby_gamma"), "standby factor must lie in (0, 1]");
    }
    check_bounds(r, &format!("{path}.soc"), st.soc_bounds);
    check_bounds(r, &format!("{path}.charge"), st.charge_bounds);
    check_bounds(r, &format!("{path}.discharge"), st.discharge_bounds);
    if !(st.soc_initial >= st.soc_bounds[0] && st.soc_initial <= st.soc_bounds[1]) {
        r.error(format!("{path}.soc_initial"), "initial state of charge outside its bounds");
    }
}
