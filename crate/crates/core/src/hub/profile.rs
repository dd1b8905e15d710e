use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;

/// A series attached to an unordered hub pair, stored once with `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSeries {
    pub i: usize,
    pub j: usize,
    pub values: Vec<f64>,
}

/// Bilateral trades `p_tr[i][j][h]` in kW, positive when hub `i` receives
/// power from hub `j`. Only `i < j` is stored; the mirror entry is its exact
/// negation, so reciprocity holds by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeTensor {
    pub num_hubs: usize,
    pub horizon: usize,
    pub pairs: Vec<PairSeries>,
}

impl TradeTensor {
    /// All-zero trades over the scenario's trading pairs.
    pub fn zeros(s: &Scenario) -> Self {
        Self {
            num_hubs: s.num_hubs(),
            horizon: s.horizon_hours,
            pairs: s
                .pairs()
                .iter()
                .map(|p| PairSeries {
                    i: p.i,
                    j: p.j,
                    values: vec![0.0; s.horizon_hours],
                })
                .collect(),
        }
    }

    fn slot(&self, a: usize, b: usize) -> Option<(usize, f64)> {
        let (i, j, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        self.pairs
            .iter()
            .position(|p| p.i == i && p.j == j)
            .map(|k| (k, sign))
    }

    /// `p_tr[a][b][h]`; zero for pairs without a link.
    pub fn get(&self, a: usize, b: usize, h: usize) -> f64 {
        match self.slot(a, b) {
            Some((k, sign)) => sign * self.pairs[k].values[h],
            None => 0.0,
        }
    }

    /// Series `p_tr[a][b][·]`, if the pair trades.
    pub fn series(&self, a: usize, b: usize) -> Option<Vec<f64>> {
        self.slot(a, b)
            .map(|(k, sign)| self.pairs[k].values.iter().map(|v| sign * v).collect())
    }

    /// Sets `p_tr[a][b][h] = v` (and therefore `p_tr[b][a][h] = −v`).
    pub fn set(&mut self, a: usize, b: usize, h: usize, v: f64) {
        let (k, sign) = self
            .slot(a, b)
            .unwrap_or_else(|| panic!("hubs {a} and {b} do not trade"));
        self.pairs[k].values[h] = sign * v;
    }

    /// Net power received by hub `i` through trades at hour `h`.
    pub fn net_import(&self, i: usize, h: usize) -> f64 {
        self.pairs
            .iter()
            .map(|p| {
                if p.i == i {
                    p.values[h]
                } else if p.j == i {
                    -p.values[h]
                } else {
                    0.0
                }
            })
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.pairs
            .iter()
            .flat_map(|p| p.values.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entrywise difference; pairs are matched by position.
    pub fn max_deviation(&self, other: &TradeTensor) -> f64 {
        assert_eq!(self.pairs.len(), other.pairs.len(), "different trading pairs");
        self.pairs
            .iter()
            .zip(&other.pairs)
            .flat_map(|(a, b)| a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Setpoints of one hub over the horizon. Absent assets are all-zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubSetpoints {
    /// CHP vertex weights per hour.
    pub chp_weights: Vec<[f64; 4]>,
    pub chp_p: Vec<f64>,
    pub chp_q: Vec<f64>,
    /// Heat pump heat output and electric input.
    pub hp_q: Vec<f64>,
    pub hp_p: Vec<f64>,
    pub gb_q: Vec<f64>,
    pub pv_p: Vec<f64>,
    pub es_soc: Vec<f64>,
    pub es_ch: Vec<f64>,
    pub es_dc: Vec<f64>,
    pub ts_soc: Vec<f64>,
    pub ts_ch: Vec<f64>,
    pub ts_dc: Vec<f64>,
    pub grid_import: Vec<f64>,
    pub grid_export: Vec<f64>,
}

impl HubSetpoints {
    pub fn zeros(horizon: usize) -> Self {
        let z = vec![0.0; horizon];
        Self {
            chp_weights: vec![[0.0; 4]; horizon],
            chp_p: z.clone(),
            chp_q: z.clone(),
            hp_q: z.clone(),
            hp_p: z.clone(),
            gb_q: z.clone(),
            pv_p: z.clone(),
            es_soc: z.clone(),
            es_ch: z.clone(),
            es_dc: z.clone(),
            ts_soc: z.clone(),
            ts_ch: z.clone(),
            ts_dc: z.clone(),
            grid_import: z.clone(),
            grid_export: z,
        }
    }

    /// Named scalar series, in a fixed order (used for CSV output and
    /// deviation checks).
    pub fn named_series(&self) -> Vec<(&'static str, &Vec<f64>)> {
        vec![
            ("chp_p", &self.chp_p),
            ("chp_q", &self.chp_q),
            ("hp_q", &self.hp_q),
            ("hp_p", &self.hp_p),
            ("gb_q", &self.gb_q),
            ("pv_p", &self.pv_p),
            ("es_soc", &self.es_soc),
            ("es_ch", &self.es_ch),
            ("es_dc", &self.es_dc),
            ("ts_soc", &self.ts_soc),
            ("ts_ch", &self.ts_ch),
            ("ts_dc", &self.ts_dc),
            ("grid_import", &self.grid_import),
            ("grid_export", &self.grid_export),
        ]
    }
}

/// Full decision of the network: every hub's setpoints plus the trades.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchProfile {
    pub hubs: Vec<HubSetpoints>,
    pub trades: TradeTensor,
}

impl DispatchProfile {
    /// Largest deviation over all setpoints of all hubs.
    pub fn max_setpoint_deviation(&self, other: &DispatchProfile) -> f64 {
        self.hubs
            .iter()
            .zip(&other.hubs)
            .flat_map(|(a, b)| {
                a.named_series()
                    .into_iter()
                    .zip(b.named_series())
                    .flat_map(|((_, x), (_, y))| x.iter().zip(y.iter()).map(|(u, v)| (u - v).abs()).collect::<Vec<_>>())
            })
            .fold(0.0, f64::max)
    }
}
