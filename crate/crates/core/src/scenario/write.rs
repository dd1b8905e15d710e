use std::path::Path;

use serde_json::{json, Map, Value};

use super::{Scenario, ScenarioError, StorageSpec};

/// Renders a scenario in the file format read by [`super::parse_scenario`],
/// with inline series. Infinite grid limits are omitted.
pub fn scenario_to_json(s: &Scenario) -> Value {
    let hubs: Vec<Value> = s
        .hubs
        .iter()
        .map(|h| {
            let mut converters = Vec::new();
            if let Some(c) = &h.chp {
                converters.push(json!({
                    "kind": "chp",
                    "eta": c.eta,
                    "vertices": c.vertices.iter().map(|(p, q)| json!({"p": p, "q": q})).collect::<Vec<_>>(),
                }));
            }
            if let Some(c) = &h.hp {
                converters.push(json!({"kind": "hp", "cop": c.cop, "q_min": c.q_bounds[0], "q_max": c.q_bounds[1]}));
            }
            if let Some(c) = &h.gb {
                converters.push(json!({"kind": "gb", "eta": c.eta, "q_min": c.q_bounds[0], "q_max": c.q_bounds[1]}));
            }
            if let Some(c) = &h.pv {
                converters.push(json!({
                    "kind": "pv",
                    "eta": c.eta,
                    "area": {"value": c.area_m2, "unit": "m2"},
                    "p_min": c.p_bounds[0],
                    "p_max": c.p_bounds[1],
                }));
            }
            for (kind, st) in [("es", &h.es), ("ts", &h.ts)] {
                if let Some(st) = st {
                    converters.push(storage_json(kind, st));
                }
            }
            let mut grid = Map::new();
            if h.import_max.is_finite() {
                grid.insert("import_max".into(), json!(h.import_max));
            }
            if h.export_max.is_finite() {
                grid.insert("export_max".into(), json!(h.export_max));
            }
            json!({"id": h.id, "grid": grid, "converters": converters})
        })
        .collect();

    let links: Vec<Value> = s
        .links
        .iter()
        .map(|l| {
            json!({
                "from_hub": l.from_hub,
                "to_hub": l.to_hub,
                "capacity_kappa": {"value": l.capacity_kappa, "unit": "kW"},
            })
        })
        .collect();

    let mut series = Map::new();
    for (k, h) in s.hubs.iter().enumerate() {
        series.insert(
            h.id.clone(),
            json!({
                "L_e_kW": s.demand[k].electric,
                "L_h_kW": s.demand[k].thermal,
                "irradiance_kW_m2": s.irradiance[k],
            }),
        );
    }

    json!({
        "name": s.name,
        "horizon_hours": s.horizon_hours,
        "tariffs": {
            "grid_import": {"value": s.tariffs.grid_import, "unit": "CHF/kWh"},
            "grid_feed_in": {"value": s.tariffs.grid_feed_in, "unit": "CHF/kWh"},
            "gas": {"value": s.tariffs.gas, "unit": "CHF/kWh"},
        },
        "hubs": hubs,
        "links": links,
        "series": series,
        "params": {
            "trading_tariff_gamma": {"value": s.trading_tariff_gamma, "unit": "CHF/kW2"},
            "admm_penalty_rho": s.admm_penalty_rho,
            "import_regularization_weight": s.import_regularization_weight,
        },
    })
}

fn storage_json(kind: &str, st: &StorageSpec) -> Value {
    json!({
        "kind": kind,
        "standby_gamma": st.standby_gamma,
        "cycle_eta": st.cycle_eta,
        "soc_min": st.soc_bounds[0],
        "soc_max": st.soc_bounds[1],
        "charge_min": st.charge_bounds[0],
        "charge_max": st.charge_bounds[1],
        "discharge_min": st.discharge_bounds[0],
        "discharge_max": st.discharge_bounds[1],
        "soc_initial": st.soc_initial,
    })
}

pub fn write_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(&scenario_to_json(s))
        .map_err(|e| ScenarioError::Parse(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}
