mod common;

use common::{central, load, scenario_path};
use fairtrade::dispatch::{run_admm, AdmmConfig};
use fairtrade::pricing::{FixedDispatch, MediationConfig, PriceProfile, run_mediation};
use fairtrade::scenario::results::{
    self, cost_rows, read_csv, read_json, read_message_log, series_rows, trade_rows, write_csv, write_json,
    write_message_log, write_results, CostRow, FairnessRow, Format, Results, SeriesRow, TradeRow,
};
use fairtrade::scenario::{
    load_scenario, parse_scenario, scenario_to_json, validate_scenario, ScenarioError, StorageSpec,
};
use proptest::prelude::*;
use serde_json::Value;

fn fixture(name: &str) -> std::path::PathBuf {
    scenario_path("fixtures").join(name)
}

fn schema_path(e: ScenarioError) -> String {
    match e {
        ScenarioError::Schema { path, .. } => path,
        other => panic!("expected a schema error, got {other}"),
    }
}

fn threehub_json() -> Value {
    serde_json::from_str(&std::fs::read_to_string(scenario_path("threehub.scenario")).unwrap()).unwrap()
}

/// Parses a mutated document and returns the validation findings'
/// `(errors, warnings)` paths; parse-time schema errors count as errors.
fn findings(doc: &Value) -> (Vec<String>, Vec<String>) {
    match parse_scenario(&doc.to_string(), None) {
        Ok(s) => {
            let r = validate_scenario(&s);
            (
                r.errors.into_iter().map(|f| f.path).collect(),
                r.warnings.into_iter().map(|f| f.path).collect(),
            )
        }
        Err(ScenarioError::Schema { path, .. }) => (vec![path], vec![]),
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn threehub_tariffs_are_table_values() {
    let s = load("threehub.scenario");
    assert_eq!(s.num_hubs(), 3);
    assert_eq!(s.horizon_hours, 24);
    assert_eq!(s.tariffs.grid_import, 0.22);
    assert_eq!(s.tariffs.grid_feed_in, 0.12);
    assert_eq!(s.tariffs.gas, 0.115);
}

#[test]
fn shipped_scenarios_validate_clean() {
    for name in ["threehub", "two_hub_toy", "self_sufficient", "disconnected"] {
        let s = load(&format!("{name}.scenario"));
        let r = validate_scenario(&s);
        assert!(r.errors.is_empty(), "{name}: {:?}", r.errors);
        assert!(r.warnings.is_empty(), "{name}: {:?}", r.warnings);
    }
}

#[test]
fn unknown_hub_names_link_field() {
    let e = load_scenario(fixture("unknown_hub.scenario")).unwrap_err();
    assert_eq!(schema_path(e), "links[0].to_hub");
}

#[test]
fn short_series_names_series() {
    let e = load_scenario(fixture("short_series.scenario")).unwrap_err();
    assert_eq!(schema_path(e), "series.hub2.L_e_kW");
}

#[test]
fn negative_gamma_is_one_error() {
    let text = std::fs::read_to_string(fixture("negative_gamma.scenario")).unwrap();
    let s = parse_scenario(&text, None).unwrap();
    let r = validate_scenario(&s);
    assert_eq!(r.errors.len(), 1);
    assert_eq!(r.errors[0].message, "negative trading tariff");
    assert!(load_scenario(fixture("negative_gamma.scenario")).is_err());
}

#[test]
fn feed_in_above_import_is_only_a_warning() {
    let s = load_scenario(fixture("feed_in_warning.scenario")).unwrap();
    let r = validate_scenario(&s);
    assert!(r.errors.is_empty());
    assert_eq!(r.warnings.len(), 1);
    assert_eq!(r.warnings[0].path, "tariffs.grid_feed_in");
}

#[test]
fn truncated_file_is_a_parse_error() {
    let e = load_scenario(fixture("truncated.scenario")).unwrap_err();
    assert!(matches!(e, ScenarioError::Parse(_)), "{e}");
}

#[test]
fn missing_file_is_io_error() {
    let e = load_scenario(fixture("no_such.scenario")).unwrap_err();
    assert!(matches!(e, ScenarioError::Io { .. }));
}

#[test]
fn unknown_unit_is_unit_error() {
    let mut doc = threehub_json();
    doc["params"]["trading_tariff_gamma"] = serde_json::json!({"unit": "furlong", "value": 0.001});
    let e = parse_scenario(&doc.to_string(), None).unwrap_err();
    assert!(matches!(e, ScenarioError::Unit { .. }), "{e}");
}

#[test]
fn missing_field_names_its_path() {
    let mut doc = threehub_json();
    doc["tariffs"].as_object_mut().unwrap().remove("gas");
    let e = parse_scenario(&doc.to_string(), None).unwrap_err();
    assert!(schema_path(e).contains("tariffs"));
}

#[test]
fn series_csv_matches_inline_series() {
    let inline = load("threehub.scenario");
    let from_csv = load_scenario(fixture("threehub_csv.scenario")).unwrap();
    assert_eq!(inline.demand, from_csv.demand);
    assert_eq!(inline.irradiance, from_csv.irradiance);
}

#[test]
fn every_invariant_is_detected() {
    type Mutation = (&'static str, fn(&mut Value));
    let cases: Vec<Mutation> = vec![
        ("zero horizon", |d| d["horizon_hours"] = 0.into()),
        ("short thermal series", |d| {
            d["series"]["hub1"]["L_h_kW"].as_array_mut().unwrap().pop();
        }),
        ("short irradiance", |d| {
            d["series"]["hub3"]["irradiance_kW_m2"].as_array_mut().unwrap().pop();
        }),
        ("self link", |d| d["links"][0]["to_hub"] = d["links"][0]["from_hub"].clone()),
        ("unknown from hub", |d| d["links"][1]["from_hub"] = "nowhere".into()),
        ("duplicate link", |d| {
            let mut l = d["links"][0].clone();
            let (a, b) = (l["from_hub"].clone(), l["to_hub"].clone());
            l["from_hub"] = b;
            l["to_hub"] = a;
            d["links"].as_array_mut().unwrap().push(l);
        }),
        ("negative kappa", |d| d["links"][0]["capacity_kappa"]["value"] = (-1.0).into()),
        ("negative import tariff", |d| d["tariffs"]["grid_import"] = (-0.1).into()),
        ("negative feed-in tariff", |d| d["tariffs"]["grid_feed_in"] = (-0.1).into()),
        ("negative gas tariff", |d| d["tariffs"]["gas"] = (-0.1).into()),
        ("negative gamma", |d| d["params"]["trading_tariff_gamma"]["value"] = (-0.001).into()),
        ("zero rho", |d| d["params"]["admm_penalty_rho"] = 0.0.into()),
        ("negative regularization", |d| d["params"]["import_regularization_weight"] = (-1.0).into()),
        ("negative electric demand", |d| d["series"]["hub2"]["L_e_kW"][5] = (-3.0).into()),
        ("negative thermal demand", |d| d["series"]["hub2"]["L_h_kW"][5] = (-3.0).into()),
        ("negative irradiance", |d| d["series"]["hub1"]["irradiance_kW_m2"][12] = (-0.1).into()),
        ("duplicate hub id", |d| d["hubs"][1]["id"] = d["hubs"][0]["id"].clone()),
    ];
    for (what, mutate) in cases {
        let mut doc = threehub_json();
        mutate(&mut doc);
        let (errors, _) = findings(&doc);
        assert!(!errors.is_empty(), "{what}: not detected");
    }
}

#[test]
fn storage_invariants_are_detected() {
    let base = load("threehub.scenario");
    let hub = base.hubs.iter().position(|h| h.es.is_some() || h.ts.is_some()).expect("a hub with storage");
    let breaks: Vec<fn(&mut StorageSpec)> = vec![
        |st| st.cycle_eta = 0.0,
        |st| st.cycle_eta = 1.5,
        |st| st.standby_gamma = 0.0,
        |st| st.standby_gamma = 1.2,
        |st| st.soc_initial = st.soc_bounds[1] + 1.0,
    ];
    for (k, f) in breaks.into_iter().enumerate() {
        let mut s = base.clone();
        let h = &mut s.hubs[hub];
        let st = if h.es.is_some() { h.es.as_mut() } else { h.ts.as_mut() }.unwrap();
        f(st);
        assert!(!validate_scenario(&s).is_valid(), "storage mutation {k} not detected");
    }
}

#[test]
fn converter_invariants_are_detected() {
    let base = load("threehub.scenario");
    let with = |pick: fn(&mut fairtrade::scenario::HubSpec) -> bool| {
        let mut s = base.clone();
        let touched = s.hubs.iter_mut().any(pick);
        assert!(touched, "no hub has the converter");
        validate_scenario(&s).is_valid()
    };
    assert!(!with(|h| h.chp.as_mut().map(|c| c.eta = 0.0).is_some()));
    assert!(!with(|h| h.chp.as_mut().map(|c| c.eta = 1.1).is_some()));
    assert!(!with(|h| h.hp.as_mut().map(|c| c.cop = 0.0).is_some()));
    assert!(!with(|h| h.hp.as_mut().map(|c| c.q_bounds = [10.0, 5.0]).is_some()));
    assert!(!with(|h| h.gb.as_mut().map(|c| c.eta = 0.0).is_some()));
    assert!(!with(|h| h.pv.as_mut().map(|c| c.eta = 0.0).is_some()));
    assert!(!with(|h| h.pv.as_mut().map(|c| c.area_m2 = -1.0).is_some()));
}

#[test]
fn validation_is_pure() {
    let s = load("threehub.scenario");
    let mut t = s.clone();
    t.trading_tariff_gamma = -1.0;
    assert_eq!(validate_scenario(&s), validate_scenario(&s));
    assert_eq!(validate_scenario(&t), validate_scenario(&t));
    assert_eq!(s, load("threehub.scenario"));
}

#[test]
fn scenario_json_round_trips() {
    let s = load("threehub.scenario");
    let text = serde_json::to_string_pretty(&scenario_to_json(&s)).unwrap();
    let back = parse_scenario(&text, None).unwrap();
    assert_eq!(s, back);
}

#[test]
fn empty_trades_give_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trades.csv");
    write_csv::<TradeRow>(&[], &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, "from,to,hour,p_tr_kW,price_chf_kWh\n");
    assert!(read_csv::<TradeRow>(&path).unwrap().is_empty());
}

#[test]
fn threehub_trades_csv_has_ordered_pair_rows() {
    let s = load("threehub.scenario");
    let r = central().solve(&s, &PriceProfile::uniform(&s, 0.18)).unwrap();
    let rows = trade_rows(&r);
    assert_eq!(rows.len(), 3 * 2 * 24);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trades.csv");
    write_csv(&rows, &path).unwrap();
    let back: Vec<TradeRow> = read_csv(&path).unwrap();
    assert_eq!(back.len(), rows.len());
    for (a, b) in rows.iter().zip(&back) {
        assert_eq!((&a.from, &a.to, a.hour), (&b.from, &b.to, b.hour));
        assert!(rel(a.p_tr_kw, b.p_tr_kw) <= 1e-12);
        assert!(rel(a.price_chf_kwh, b.price_chf_kwh) <= 1e-12);
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

#[test]
fn dispatch_results_round_trip() {
    let s = load("threehub.scenario");
    let r = central().solve(&s, &PriceProfile::uniform(&s, 0.18)).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let json = dir.path().join("result.json");
    write_results(Results::Dispatch(&r), &json, Format::Json).unwrap();
    let back: fairtrade::dispatch::DispatchResult = read_json(&json).unwrap();
    assert_eq!(back, r);

    let again = dir.path().join("again.json");
    write_json(&back, &again).unwrap();
    assert_eq!(std::fs::read(&json).unwrap(), std::fs::read(&again).unwrap());

    let j_nt = fairtrade::dispatch::baselines(&s, &Default::default()).unwrap();
    let costs = dir.path().join("costs.csv");
    write_csv(&cost_rows(&r, &j_nt), &costs).unwrap();
    let rows: Vec<CostRow> = read_csv(&costs).unwrap();
    assert_eq!(rows.len(), 3);
    for (k, row) in rows.iter().enumerate() {
        assert!(rel(row.J_trading, r.costs[k].total) <= 1e-12);
        assert!(rel(row.J_nontrading, j_nt[k]) <= 1e-12);
    }
    let header = std::fs::read_to_string(&costs).unwrap();
    assert!(header.starts_with("hub,J_trading,J_nontrading,d_i\n"));

    let csv_out = dir.path().join("via_results.csv");
    write_results(Results::Dispatch(&r), &csv_out, Format::Csv).unwrap();
    assert_eq!(read_csv::<TradeRow>(&csv_out).unwrap().len(), 144);
}

#[test]
fn fairness_report_round_trips() {
    let s = load("threehub.scenario");
    let r = central().solve(&s, &PriceProfile::zero(&s)).unwrap();
    let j_nt = fairtrade::dispatch::baselines(&s, &Default::default()).unwrap();
    let model = FixedDispatch::from_result(&r, j_nt);
    let cfg = MediationConfig {
        max_iter: 20,
        ..Default::default()
    };
    let (_, report) = run_mediation(&model, &model.uniform_prices(0.18), &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let json = dir.path().join("fairness.json");
    write_results(Results::Fairness(&report), &json, Format::Json).unwrap();
    let back: fairtrade::pricing::FairnessReport = read_json(&json).unwrap();
    assert_eq!(back, report);

    let csv_path = dir.path().join("fairness.csv");
    write_results(Results::Fairness(&report), &csv_path, Format::Csv).unwrap();
    let rows: Vec<FairnessRow> = read_csv(&csv_path).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(std::fs::read_to_string(&csv_path).unwrap().starts_with("hub,d_i,J_trading,J_nontrading\n"));
}

#[test]
fn series_csv_round_trips() {
    let s = load("threehub.scenario");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inputs.csv");
    let rows = series_rows(&s);
    write_csv(&rows, &path).unwrap();
    let back: Vec<SeriesRow> = read_csv(&path).unwrap();
    assert_eq!(back, rows);
    assert!(std::fs::read_to_string(&path)
        .unwrap()
        .starts_with("hub_id,hour,L_e_kW,L_h_kW,irradiance_kW_m2\n"));
}

#[test]
fn price_rows_round_trip_and_reject_asymmetry() {
    let s = load("threehub.scenario");
    let mut c = PriceProfile::uniform(&s, 0.1);
    c.pairs[1].values[7] = 0.123_456_789_012_3;
    let rows = results::price_rows(&s, &c);
    assert_eq!(rows.len(), 144);
    assert_eq!(results::prices_from_rows(&s, &rows).unwrap(), c);

    let mut broken = rows.clone();
    broken[0].price_chf_kwh += 0.01;
    assert!(results::prices_from_rows(&s, &broken).is_err());
}

#[test]
fn message_log_round_trips() {
    let s = load("two_hub_toy.scenario");
    let cfg = AdmmConfig {
        record_messages: true,
        ..AdmmConfig::for_scenario(&s)
    };
    let run = run_admm(&s, &PriceProfile::uniform(&s, 0.18), &cfg).unwrap();
    assert!(!run.messages.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("messages.jsonl");
    write_message_log(&run.messages, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), run.messages.len());
    assert_eq!(read_message_log(&path).unwrap(), run.messages);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cost_rows_survive_csv(j in prop::collection::vec(-1e6f64..1e6, 1..6), scale in 1e-6f64..1e3) {
        let rows: Vec<CostRow> = j
            .iter()
            .enumerate()
            .map(|(k, &v)| CostRow {
                hub: format!("h{k}"),
                J_trading: v * scale,
                J_nontrading: v / scale,
                d_i: if k % 2 == 0 { Some(v / 7.0) } else { None },
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("costs.csv");
        write_csv(&rows, &path).unwrap();
        let back: Vec<CostRow> = read_csv(&path).unwrap();
        prop_assert_eq!(back, rows);
    }
}
