use serde::{Deserialize, Serialize};

use crate::hub::PairSeries;
use crate::scenario::Scenario;

/// Trading prices `c_(i,j)[h]` in CHF/kWh. One series per trading pair, so
/// `c_(i,j) = c_(j,i)` holds by construction: both endpoints price the same
/// physical trade identically and the payments cancel in the social cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceProfile {
    pub num_hubs: usize,
    pub horizon: usize,
    pub pairs: Vec<PairSeries>,
}

impl PriceProfile {
    pub fn uniform(s: &Scenario, price: f64) -> Self {
        Self {
            num_hubs: s.num_hubs(),
            horizon: s.horizon_hours,
            pairs: s
                .pairs()
                .iter()
                .map(|p| PairSeries {
                    i: p.i,
                    j: p.j,
                    values: vec![price; s.horizon_hours],
                })
                .collect(),
        }
    }

    pub fn zero(s: &Scenario) -> Self {
        Self::uniform(s, 0.0)
    }

    /// Price of trades between hubs `a` and `b` at hour `h` (either order);
    /// zero for pairs without a link.
    pub fn get(&self, a: usize, b: usize, h: usize) -> f64 {
        let (i, j) = (a.min(b), a.max(b));
        self.pairs
            .iter()
            .find(|p| p.i == i && p.j == j)
            .map_or(0.0, |p| p.values[h])
    }

    /// Pair-major, hour-minor flattening.
    pub fn to_flat(&self) -> Vec<f64> {
        self.pairs.iter().flat_map(|p| p.values.iter().copied()).collect()
    }

    /// Inverse of [`Self::to_flat`] over the same pair structure.
    pub fn with_flat(&self, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), self.pairs.len() * self.horizon, "flat price vector length");
        let mut out = self.clone();
        for (k, p) in out.pairs.iter_mut().enumerate() {
            p.values.copy_from_slice(&flat[k * self.horizon..(k + 1) * self.horizon]);
        }
        out
    }
}
