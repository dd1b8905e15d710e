use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{Map, Value};

use super::units::{factor, Dimension};
use super::{
    ChpSpec, DemandSeries, GbSpec, HpSpec, HubSpec, PvSpec, Scenario, ScenarioError, StorageSpec,
    TariffTable, TradeLink, DEFAULT_GAMMA, DEFAULT_IMPORT_REGULARIZATION, DEFAULT_KAPPA,
    DEFAULT_RHO,
};

type Obj = Map<String, Value>;

/// Parses scenario JSON. `base_dir` resolves a relative series CSV path.
/// The result is not validated.
pub fn parse_scenario(text: &str, base_dir: Option<&Path>) -> Result<Scenario, ScenarioError> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let root = as_object(&root, "")?;

    let name = match root.get("name") {
        Some(v) => v
            .as_str()
            .ok_or_else(|| ScenarioError::schema("name", "expected a string"))?
            .to_string(),
        None => String::new(),
    };
    let horizon_hours = {
        let v = required(root, "horizon_hours", "")?;
        v.as_u64()
            .ok_or_else(|| ScenarioError::schema("horizon_hours", "expected a nonnegative integer"))?
            as usize
    };

    let tariffs = {
        let t = as_object(required(root, "tariffs", "")?, "tariffs")?;
        TariffTable {
            grid_import: number(t, "grid_import", "tariffs", Dimension::EnergyPrice)?,
            grid_feed_in: number(t, "grid_feed_in", "tariffs", Dimension::EnergyPrice)?,
            gas: number(t, "gas", "tariffs", Dimension::EnergyPrice)?,
        }
    };

    let hubs_val = as_array(required(root, "hubs", "")?, "hubs")?;
    let mut hubs = Vec::with_capacity(hubs_val.len());
    for (k, h) in hubs_val.iter().enumerate() {
        hubs.push(parse_hub(h, &format!("hubs[{k}]"))?);
    }

    let mut links = Vec::new();
    if let Some(v) = root.get("links") {
        for (k, l) in as_array(v, "links")?.iter().enumerate() {
            let path = format!("links[{k}]");
            let o = as_object(l, &path)?;
            links.push(TradeLink {
                from_hub: string(o, "from_hub", &path)?,
                to_hub: string(o, "to_hub", &path)?,
                capacity_kappa: optional_number(o, "capacity_kappa", &path, Dimension::Power)?
                    .unwrap_or(DEFAULT_KAPPA),
            });
        }
    }

    let params = match root.get("params") {
        Some(v) => as_object(v, "params")?.clone(),
        None => Obj::new(),
    };
    let trading_tariff_gamma =
        optional_number(&params, "trading_tariff_gamma", "params", Dimension::QuadraticPrice)?
            .unwrap_or(DEFAULT_GAMMA);
    let admm_penalty_rho = optional_number(&params, "admm_penalty_rho", "params", Dimension::Ratio)?
        .unwrap_or(DEFAULT_RHO);
    let import_regularization_weight =
        optional_number(&params, "import_regularization_weight", "params", Dimension::Ratio)?
            .unwrap_or(DEFAULT_IMPORT_REGULARIZATION);
    for key in params.keys() {
        if !matches!(
            key.as_str(),
            "trading_tariff_gamma" | "admm_penalty_rho" | "import_regularization_weight"
        ) {
            return Err(ScenarioError::schema(format!("params.{key}"), "unknown parameter"));
        }
    }

    let series = as_object(required(root, "series", "")?, "series")?;
    let ids: Vec<String> = hubs.iter().map(|h: &HubSpec| h.id.clone()).collect();
    let per_hub = if let Some(csv_path) = series.get("csv") {
        let rel = csv_path
            .as_str()
            .ok_or_else(|| ScenarioError::schema("series.csv", "expected a file path"))?;
        let full = match base_dir {
            Some(dir) => dir.join(rel),
            None => Path::new(rel).to_path_buf(),
        };
        let text = std::fs::read_to_string(&full).map_err(|source| ScenarioError::Io {
            path: full.clone(),
            source,
        })?;
        parse_series_csv(&text, &ids)?
    } else {
        parse_inline_series(series, &ids)?
    };
    let (demand, irradiance) = per_hub.into_iter().unzip();

    Ok(Scenario {
        name,
        hubs,
        tariffs,
        links,
        horizon_hours,
        demand,
        irradiance,
        trading_tariff_gamma,
        admm_penalty_rho,
        import_regularization_weight,
    })
}

fn parse_hub(v: &Value, path: &str) -> Result<HubSpec, ScenarioError> {
    let o = as_object(v, path)?;
    let mut hub = HubSpec::bare(string(o, "id", path)?);
    if let Some(g) = o.get("grid") {
        let gp = format!("{path}.grid");
        let g = as_object(g, &gp)?;
        if let Some(x) = optional_number(g, "import_max", &gp, Dimension::Power)? {
            hub.import_max = x;
        }
        if let Some(x) = optional_number(g, "export_max", &gp, Dimension::Power)? {
            hub.export_max = x;
        }
    }
    let converters = match o.get("converters") {
        Some(c) => as_array(c, &format!("{path}.converters"))?.clone(),
        None => Vec::new(),
    };
    for (k, c) in converters.iter().enumerate() {
        let cp = format!("{path}.converters[{k}]");
        let co = as_object(c, &cp)?;
        let kind = string(co, "kind", &cp)?;
        let duplicate = || ScenarioError::schema(format!("{cp}.kind"), format!("second `{kind}` converter"));
        match kind.as_str() {
            "chp" => {
                if hub.chp.is_some() {
                    return Err(duplicate());
                }
                let vp = format!("{cp}.vertices");
                let verts = as_array(required(co, "vertices", &cp)?, &vp)?;
                if verts.len() != 4 {
                    return Err(ScenarioError::schema(vp, format!("expected 4 vertices, found {}", verts.len())));
                }
                let mut vertices = [(0.0, 0.0); 4];
                for (n, vv) in verts.iter().enumerate() {
                    let p = format!("{vp}[{n}]");
                    let vo = as_object(vv, &p)?;
                    vertices[n] = (
                        number(vo, "p", &p, Dimension::Power)?,
                        number(vo, "q", &p, Dimension::Power)?,
                    );
                }
                hub.chp = Some(ChpSpec {
                    eta: number(co, "eta", &cp, Dimension::Ratio)?,
                    vertices,
                });
            }
            "hp" => {
                if hub.hp.is_some() {
                    return Err(duplicate());
                }
                hub.hp = Some(HpSpec {
                    cop: number(co, "cop", &cp, Dimension::Ratio)?,
                    q_bounds: range(co, "q", &cp, Dimension::Power)?,
                });
            }
            "gb" => {
                if hub.gb.is_some() {
                    return Err(duplicate());
                }
                hub.gb = Some(GbSpec {
                    eta: number(co, "eta", &cp, Dimension::Ratio)?,
                    q_bounds: range(co, "q", &cp, Dimension::Power)?,
                });
            }
            "pv" => {
                if hub.pv.is_some() {
                    return Err(duplicate());
                }
                hub.pv = Some(PvSpec {
                    eta: number(co, "eta", &cp, Dimension::Ratio)?,
                    area_m2: number(co, "area", &cp, Dimension::Area)?,
                    p_bounds: range(co, "p", &cp, Dimension::Power)?,
                });
            }
            "es" | "ts" => {
                let slot = if kind == "es" { &mut hub.es } else { &mut hub.ts };
                if slot.is_some() {
                    return Err(duplicate());
                }
                *slot = Some(StorageSpec {
                    standby_gamma: number(co, "standby_gamma", &cp, Dimension::Ratio)?,
                    cycle_eta: number(co, "cycle_eta", &cp, Dimension::Ratio)?,
                    soc_bounds: range(co, "soc", &cp, Dimension::Energy)?,
                    charge_bounds: range(co, "charge", &cp, Dimension::Power)?,
                    discharge_bounds: range(co, "discharge", &cp, Dimension::Power)?,
                    soc_initial: number(co, "soc_initial", &cp, Dimension::Energy)?,
                });
            }
            other => {
                return Err(ScenarioError::schema(
                    format!("{cp}.kind"),
                    format!("unknown converter kind `{other}` (expected chp, hp, gb, pv, es or ts)"),
                ))
            }
        }
    }
    Ok(hub)
}

type HubSeries = (DemandSeries, Vec<f64>);

fn parse_inline_series(series: &Obj, ids: &[String]) -> Result<Vec<HubSeries>, ScenarioError> {
    for key in series.keys() {
        if !ids.contains(key) {
            return Err(ScenarioError::schema(format!("series.{key}"), "series for an unknown hub"));
        }
    }
    ids.iter()
        .map(|id| {
            let path = format!("series.{id}");
            let o = as_object(
                series
                    .get(id)
                    .ok_or_else(|| ScenarioError::schema(path.clone(), "missing series for hub"))?,
                &path,
            )?;
            Ok((
                DemandSeries {
                    electric: number_list(o, "L_e_kW", &path)?,
                    thermal: number_list(o, "L_h_kW", &path)?,
                },
                number_list(o, "irradiance_kW_m2", &path)?,
            ))
        })
        .collect()
}

/// Parses the long-format series CSV. Hours must be contiguous from 0 per
/// hub; row order is free.
pub(crate) fn parse_series_csv(text: &str, ids: &[String]) -> Result<Vec<HubSeries>, ScenarioError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| ScenarioError::Parse(format!("series csv: {e}")))?
        .clone();
    let expected = ["hub_id", "hour", "L_e_kW", "L_h_kW", "irradiance_kW_m2"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(ScenarioError::schema(
            "series.csv",
            format!("expected header `{}`", expected.join(",")),
        ));
    }
    let mut rows: BTreeMap<&str, BTreeMap<usize, [f64; 3]>> = BTreeMap::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| ScenarioError::Parse(format!("series csv: {e}")))?;
        let path = format!("series.csv[{line}]");
        let hub = rec.get(0).unwrap_or_default();
        let Some(id) = ids.iter().find(|id| id.as_str() == hub) else {
            return Err(ScenarioError::schema(path, format!("unknown hub `{hub}`")));
        };
        let hour: usize = rec
            .get(1)
            .unwrap_or_default()
            .parse()
            .map_err(|_| ScenarioError::schema(format!("{path}.hour"), "expected a nonnegative integer"))?;
        let mut vals = [0.0; 3];
        for (k, name) in ["L_e_kW", "L_h_kW", "irradiance_kW_m2"].iter().enumerate() {
            vals[k] = rec
                .get(k + 2)
                .unwrap_or_default()
                .parse()
                .map_err(|_| ScenarioError::schema(format!("{path}.{name}"), "expected a number"))?;
        }
        if rows.entry(id.as_str()).or_default().insert(hour, vals).is_some() {
            return Err(ScenarioError::schema(path, format!("duplicate hour {hour} for `{hub}`")));
        }
    }
    ids.iter()
        .map(|id| {
            let hours = rows.remove(id.as_str()).unwrap_or_default();
            if let Some((k, _)) = hours.keys().enumerate().find(|(k, h)| *k != **h) {
                return Err(ScenarioError::schema(
                    format!("series.{id}"),
                    format!("hour {k} missing from series csv"),
                ));
            }
            let col = |c: usize| hours.values().map(|v| v[c]).collect::<Vec<f64>>();
            Ok((
                DemandSeries {
                    electric: col(0),
                    thermal: col(1),
                },
                col(2),
            ))
        })
        .collect()
}

fn required<'a>(o: &'a Obj, key: &str, path: &str) -> Result<&'a Value, ScenarioError> {
    o.get(key)
        .ok_or_else(|| ScenarioError::schema(join(path, key), "missing required field"))
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Obj, ScenarioError> {
    v.as_object()
        .ok_or_else(|| ScenarioError::schema(if path.is_empty() { "$" } else { path }, "expected an object"))
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>, ScenarioError> {
    v.as_array()
        .ok_or_else(|| ScenarioError::schema(path, "expected an array"))
}

fn string(o: &Obj, key: &str, path: &str) -> Result<String, ScenarioError> {
    required(o, key, path)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| ScenarioError::schema(join(path, key), "expected a string"))
}

/// A bare number in canonical units, or `{"value": x, "unit": "..."}`.
fn quantity(v: &Value, path: &str, dim: Dimension) -> Result<f64, ScenarioError> {
    if let Some(x) = v.as_f64() {
        return Ok(x);
    }
    let o = v
        .as_object()
        .ok_or_else(|| ScenarioError::schema(path, "expected a number or {value, unit}"))?;
    let value = o
        .get("value")
        .and_then(Value::as_f64)
        .ok_or_else(|| ScenarioError::schema(format!("{path}.value"), "expected a number"))?;
    let unit = o
        .get("unit")
        .and_then(Value::as_str)
        .ok_or_else(|| ScenarioError::schema(format!("{path}.unit"), "expected a unit tag"))?;
    let f = factor(unit, dim).ok_or_else(|| ScenarioError::Unit {
        path: format!("{path}.unit"),
        unit: unit.to_string(),
        expected: dim.to_string(),
    })?;
    Ok(value * f)
}

fn number(o: &Obj, key: &str, path: &str, dim: Dimension) -> Result<f64, ScenarioError> {
    quantity(required(o, key, path)?, &join(path, key), dim)
}

fn optional_number(o: &Obj, key: &str, path: &str, dim: Dimension) -> Result<Option<f64>, ScenarioError> {
    o.get(key)
        .map(|v| quantity(v, &join(path, key), dim))
        .transpose()
}

/// `<prefix>_min` (default 0) and `<prefix>_max` (required).
fn range(o: &Obj, prefix: &str, path: &str, dim: Dimension) -> Result<[f64; 2], ScenarioError> {
    let lo = optional_number(o, &format!("{prefix}_min"), path, dim)?.unwrap_or(0.0);
    let hi = number(o, &format!("{prefix}_max"), path, dim)?;
    Ok([lo, hi])
}

fn number_list(o: &Obj, key: &str, path: &str) -> Result<Vec<f64>, ScenarioError> {
    let p = join(path, key);
    as_array(required(o, key, path)?, &p)?
        .iter()
        .enumerate()
        .map(|(k, v)| {
            v.as_f64()
                .ok_or_else(|| ScenarioError::schema(format!("{p}[{k}]"), "expected a number"))
        })
        .collect()
}
