use serde::{Deserialize, Serialize};

use super::HubSpec;

/// One block of `H` decision variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Var {
    ChpW(u8),
    HpQ,
    GbQ,
    PvP,
    EsSoc,
    EsCh,
    EsDc,
    TsSoc,
    TsCh,
    TsDc,
    GridImport,
    GridExport,
    /// `p_tr[i][partner]`.
    Trade(usize),
}

/// Decision-vector layout of one hub; see the module docs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub horizon: usize,
    pub blocks: Vec<Var>,
}

impl Layout {
    pub fn for_hub(hub: &HubSpec, partners: &[usize], horizon: usize) -> Self {
        let mut blocks = Vec::new();
        if hub.chp.is_some() {
            blocks.extend((0..4).map(Var::ChpW));
        }
        if hub.hp.is_some() {
            blocks.push(Var::HpQ);
        }
        if hub.gb.is_some() {
            blocks.push(Var::GbQ);
        }
        if hub.pv.is_some() {
            blocks.push(Var::PvP);
        }
        if hub.es.is_some() {
            blocks.extend([Var::EsSoc, Var::EsCh, Var::EsDc]);
        }
        if hub.ts.is_some() {
            blocks.extend([Var::TsSoc, Var::TsCh, Var::TsDc]);
        }
        blocks.extend([Var::GridImport, Var::GridExport]);
        let mut sorted = partners.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        blocks.extend(sorted.into_iter().map(Var::Trade));
        Self { horizon, blocks }
    }

    pub fn num_vars(&self) -> usize {
        self.blocks.len() * self.horizon
    }

    /// Number of leading non-trade variables.
    pub fn num_asset_vars(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| !matches!(b, Var::Trade(_)))
            .count()
            * self.horizon
    }

    pub fn has(&self, var: Var) -> bool {
        self.blocks.contains(&var)
    }

    pub fn index(&self, var: Var, hour: usize) -> Option<usize> {
        debug_assert!(hour < self.horizon);
        self.blocks
            .iter()
            .position(|&b| b == var)
            .map(|k| k * self.horizon + hour)
    }

    pub fn partners(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .filter_map(|b| match b {
                Var::Trade(j) => Some(*j),
                _ => None,
            })
            .collect()
    }

    /// The `H` values of block `var` in `x`, or zeros if absent.
    pub fn series(&self, x: &[f64], var: Var) -> Vec<f64> {
        match self.index(var, 0) {
            Some(start) => x[start..start + self.horizon].to_vec(),
            None => vec![0.0; self.horizon],
        }
    }
}
