//! Result files.
//!
//! | file | columns |
//! |------|---------|
//! | trades CSV | `from,to,hour,p_tr_kW,price_chf_kWh` — every ordered trading pair and hour |
//! | costs CSV | `hub,J_trading,J_nontrading,d_i` |
//! | fairness CSV | `hub,d_i,J_trading,J_nontrading` |
//! | convergence trace CSV | `iter,primal_res,dual_res,W` |
//! | mediation trace CSV | `iter,phi,max_step` |
//! | message log | JSON lines, one [`RoundMessage`] per line |
//! | input series CSV | `hub_id,hour,L_e_kW,L_h_kW,irradiance_kW_m2` (same as the scenario series file) |
//! | price CSV (input) | `from,to,hour,price_chf_kWh`; other columns are ignored, so a trades CSV works |
//!
//! Numbers are written in shortest round-trip form, so reading a file back
//! reproduces every value exactly. JSON output is the full serialized
//! object.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Scenario;
use crate::dispatch::{DispatchResult, RoundMessage, TraceRow};
use crate::pricing::{cost_reduction, FairnessReport, MediationTraceRow, PriceProfile};

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("json error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// A CSV row type with a fixed header (written even when there are no rows).
pub trait CsvRow: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRow {
    pub from: String,
    pub to: String,
    pub hour: usize,
    /// `p_tr[from][to][hour]`: positive when `from` receives power.
    #[serde(rename = "p_tr_kW")]
    pub p_tr_kw: f64,
    #[serde(rename = "price_chf_kWh")]
    pub price_chf_kwh: f64,
}

impl CsvRow for TradeRow {
    const HEADER: &'static [&'static str] = &["from", "to", "hour", "p_tr_kW", "price_chf_kWh"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct CostRow {
    pub hub: String,
    pub J_trading: f64,
    pub J_nontrading: f64,
    /// Empty when the baseline is too small to normalize.
    pub d_i: Option<f64>,
}

impl CsvRow for CostRow {
    const HEADER: &'static [&'static str] = &["hub", "J_trading", "J_nontrading", "d_i"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct FairnessRow {
    pub hub: String,
    pub d_i: Option<f64>,
    pub J_trading: f64,
    pub J_nontrading: f64,
}

impl CsvRow for FairnessRow {
    const HEADER: &'static [&'static str] = &["hub", "d_i", "J_trading", "J_nontrading"];
}

impl CsvRow for TraceRow {
    const HEADER: &'static [&'static str] = &["iter", "primal_res", "dual_res", "W"];
}

impl CsvRow for MediationTraceRow {
    const HEADER: &'static [&'static str] = &["iter", "phi", "max_step"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub hub_id: String,
    pub hour: usize,
    #[serde(rename = "L_e_kW")]
    pub l_e_kw: f64,
    #[serde(rename = "L_h_kW")]
    pub l_h_kw: f64,
    #[serde(rename = "irradiance_kW_m2")]
    pub irradiance_kw_m2: f64,
}

impl CsvRow for SeriesRow {
    const HEADER: &'static [&'static str] = &["hub_id", "hour", "L_e_kW", "L_h_kW", "irradiance_kW_m2"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRow {
    pub from: String,
    pub to: String,
    pub hour: usize,
    #[serde(rename = "price_chf_kWh")]
    pub price_chf_kwh: f64,
}

impl CsvRow for PriceRow {
    const HEADER: &'static [&'static str] = &["from", "to", "hour", "price_chf_kWh"];
}

pub fn series_rows(s: &Scenario) -> Vec<SeriesRow> {
    let mut rows = Vec::new();
    for (i, hub) in s.hubs.iter().enumerate() {
        for h in 0..s.horizon_hours {
            rows.push(SeriesRow {
                hub_id: hub.id.clone(),
                hour: h,
                l_e_kw: s.demand[i].electric[h],
                l_h_kw: s.demand[i].thermal[h],
                irradiance_kw_m2: s.irradiance[i][h],
            });
        }
    }
    rows
}

pub fn price_rows(s: &Scenario, prices: &PriceProfile) -> Vec<PriceRow> {
    let mut rows = Vec::new();
    for p in s.pairs() {
        for (a, b) in [(p.i, p.j), (p.j, p.i)] {
            for h in 0..s.horizon_hours {
                rows.push(PriceRow {
                    from: s.hubs[a].id.clone(),
                    to: s.hubs[b].id.clone(),
                    hour: h,
                    price_chf_kwh: prices.get(a, b, h),
                });
            }
        }
    }
    rows
}

/// Builds a price profile from rows. Pair-hours without a row are priced at
/// zero; both directions of a pair must agree when both are given.
pub fn prices_from_rows(s: &Scenario, rows: &[PriceRow]) -> Result<PriceProfile, String> {
    let mut prices = PriceProfile::zero(s);
    let mut seen = std::collections::HashMap::new();
    for (k, r) in rows.iter().enumerate() {
        let a = s.hub_index(&r.from).ok_or_else(|| format!("row {k}: unknown hub `{}`", r.from))?;
        let b = s.hub_index(&r.to).ok_or_else(|| format!("row {k}: unknown hub `{}`", r.to))?;
        if r.hour >= s.horizon_hours {
            return Err(format!("row {k}: hour {} outside the horizon", r.hour));
        }
        let (i, j) = (a.min(b), a.max(b));
        let series = prices
            .pairs
            .iter_mut()
            .find(|p| p.i == i && p.j == j)
            .ok_or_else(|| format!("row {k}: `{}` and `{}` do not trade", r.from, r.to))?;
        if let Some(prev) = seen.insert((i, j, r.hour), r.price_chf_kwh) {
            if prev != r.price_chf_kwh {
                return Err(format!(
                    "row {k}: price {} differs from {prev} given for the opposite direction",
                    r.price_chf_kwh
                ));
            }
        }
        series.values[r.hour] = r.price_chf_kwh;
    }
    Ok(prices)
}

/// One row per ordered trading pair `(from, to)` and hour, pairs in
/// ascending `(from, to)` hub-index order.
pub fn trade_rows(result: &DispatchResult) -> Vec<TradeRow> {
    let trades = &result.profile.trades;
    let mut ordered: Vec<(usize, usize)> = trades.pairs.iter().flat_map(|p| [(p.i, p.j), (p.j, p.i)]).collect();
    ordered.sort_unstable();
    let mut rows = Vec::with_capacity(ordered.len() * trades.horizon);
    for (a, b) in ordered {
        for h in 0..trades.horizon {
            rows.push(TradeRow {
                from: result.hub_ids[a].clone(),
                to: result.hub_ids[b].clone(),
                hour: h,
                p_tr_kw: trades.get(a, b, h),
                price_chf_kwh: result.prices.get(a, b, h),
            });
        }
    }
    rows
}

pub fn cost_rows(result: &DispatchResult, j_nt: &[f64]) -> Vec<CostRow> {
    result
        .costs
        .iter()
        .zip(j_nt)
        .zip(&result.hub_ids)
        .map(|((c, &nt), id)| CostRow {
            hub: id.clone(),
            J_trading: c.total,
            J_nontrading: nt,
            d_i: cost_reduction(nt, c.total).ok(),
        })
        .collect()
}

pub fn fairness_rows(report: &FairnessReport) -> Vec<FairnessRow> {
    (0..report.hub_ids.len())
        .map(|i| FairnessRow {
            hub: report.hub_ids[i].clone(),
            d_i: Some(report.d[i]).filter(|d| d.is_finite()),
            J_trading: report.j_trading[i],
            J_nontrading: report.j_nontrading[i],
        })
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ResultsError + '_ {
    move |source| ResultsError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ResultsError + '_ {
    move |source| ResultsError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> ResultsError + '_ {
    move |source| ResultsError::Json {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_csv<T: CsvRow>(rows: &[T], path: impl AsRef<Path>) -> Result<(), ResultsError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    w.write_record(T::HEADER).map_err(csv_err(path))?;
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_csv<T: CsvRow>(path: impl AsRef<Path>) -> Result<Vec<T>, ResultsError> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err(path))
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<(), ResultsError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T, ResultsError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}

/// What [`write_results`] can persist.
pub enum Results<'a> {
    /// CSV form: the trades table.
    Dispatch(&'a DispatchResult),
    /// CSV form: the per-hub fairness table.
    Fairness(&'a FairnessReport),
}

pub fn write_results(results: Results<'_>, path: impl AsRef<Path>, format: Format) -> Result<(), ResultsError> {
    match (results, format) {
        (Results::Dispatch(r), Format::Csv) => write_csv(&trade_rows(r), path),
        (Results::Dispatch(r), Format::Json) => write_json(r, path),
        (Results::Fairness(r), Format::Csv) => write_csv(&fairness_rows(r), path),
        (Results::Fairness(r), Format::Json) => write_json(r, path),
    }
}

pub fn write_message_log(messages: &[RoundMessage], path: impl AsRef<Path>) -> Result<(), ResultsError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for m in messages {
        serde_json::to_writer(&mut w, m).map_err(json_err(path))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_message_log(path: impl AsRef<Path>) -> Result<Vec<RoundMessage>, ResultsError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(json_err(path))?);
        }
    }
    Ok(out)
}
