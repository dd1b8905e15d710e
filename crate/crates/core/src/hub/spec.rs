use serde::{Deserialize, Serialize};

/// Combined heat and power unit. The feasible (p, q) region is the convex
/// hull of four vertices; fuel drawn is `p / eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChpSpec {
    pub eta: f64,
    /// (electric kW, thermal kW) for vertices A, B, C, D.
    pub vertices: [(f64, f64); 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpSpec {
    pub cop: f64,
    /// Heat output range, kW.
    pub q_bounds: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbSpec {
    pub eta: f64,
    /// Heat output range, kW.
    pub q_bounds: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvSpec {
    pub eta: f64,
    pub area_m2: f64,
    pub p_bounds: [f64; 2],
}

/// Electrical or thermal storage:
/// `soc[h] = standby_gamma·soc[h-1] + cycle_eta·charge[h] − discharge[h]/cycle_eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageSpec {
    pub standby_gamma: f64,
    pub cycle_eta: f64,
    pub soc_bounds: [f64; 2],
    pub charge_bounds: [f64; 2],
    pub discharge_bounds: [f64; 2],
    pub soc_initial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubSpec {
    pub id: String,
    pub chp: Option<ChpSpec>,
    pub hp: Option<HpSpec>,
    pub gb: Option<GbSpec>,
    pub pv: Option<PvSpec>,
    pub es: Option<StorageSpec>,
    pub ts: Option<StorageSpec>,
    /// Grid import limit, kW (may be infinite; `null` in JSON).
    #[serde(with = "unbounded")]
    pub import_max: f64,
    /// Grid feed-in limit, kW (may be infinite; `null` in JSON).
    #[serde(with = "unbounded")]
    pub export_max: f64,
}

impl HubSpec {
    /// A hub with no converters and unlimited grid access.
    pub fn bare(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            chp: None,
            hp: None,
            gb: None,
            pv: None,
            es: None,
            ts: None,
            import_max: f64::INFINITY,
            export_max: f64::INFINITY,
        }
    }
}

/// Serializes an infinite limit as `null`.
mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
