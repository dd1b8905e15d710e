//! Unit tags accepted in scenario files. Everything is converted to kW, kWh,
//! CHF and hours on load.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Power,
    Energy,
    /// Price per unit of energy.
    EnergyPrice,
    /// Quadratic trading tariff, price per kW² per hour.
    QuadraticPrice,
    Area,
    Irradiance,
    Ratio,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Dimension::Power => "a power unit (kW, W, MW)",
            Dimension::Energy => "an energy unit (kWh, Wh, MWh)",
            Dimension::EnergyPrice => "an energy price unit (CHF/kWh, CHF/MWh, Rp/kWh)",
            Dimension::QuadraticPrice => "a quadratic tariff unit (CHF/kW2)",
            Dimension::Area => "an area unit (m2)",
            Dimension::Irradiance => "an irradiance unit (kW/m2, W/m2)",
            Dimension::Ratio => "a dimensionless unit (1, -, %)",
        };
        f.write_str(s)
    }
}

/// Factor converting a value tagged `unit` into the canonical unit of `dim`,
/// or `None` if the tag is unknown for that dimension.
///
/// Prices tagged per kW (as in some tariff tables) are read as per kWh:
/// with hourly steps the two are numerically identical.
pub fn factor(unit: &str, dim: Dimension) -> Option<f64> {
    let unit = unit.trim();
    let f = match dim {
        Dimension::Power => match unit {
            "kW" => 1.0,
            "W" => 1e-3,
            "MW" => 1e3,
            _ => return None,
        },
        Dimension::Energy => match unit {
            "kWh" => 1.0,
            "Wh" => 1e-3,
            "MWh" => 1e3,
            _ => return None,
        },
        Dimension::EnergyPrice => match unit {
            "CHF/kWh" | "CHF/kW" => 1.0,
            "CHF/MWh" => 1e-3,
            "Rp/kWh" => 1e-2,
            _ => return None,
        },
        Dimension::QuadraticPrice => match unit {
            "CHF/kW2" | "CHF/kW^2" | "CHF/kW²" | "CHF/kW2h" => 1.0,
            _ => return None,
        },
        Dimension::Area => match unit {
            "m2" | "m^2" | "m²" => 1.0,
            _ => return None,
        },
        Dimension::Irradiance => match unit {
            "kW/m2" | "kW/m^2" | "kW/m²" => 1.0,
            "W/m2" | "W/m^2" | "W/m²" => 1e-3,
            _ => return None,
        },
        Dimension::Ratio => match unit {
            "" | "1" | "-" => 1.0,
            "%" => 1e-2,
            _ => return None,
        },
    };
    Some(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_and_unknown_tags() {
        assert_eq!(factor("MW", Dimension::Power), Some(1e3));
        assert_eq!(factor("Rp/kWh", Dimension::EnergyPrice), Some(1e-2));
        assert_eq!(factor("kWh", Dimension::Power), None);
        assert_eq!(factor("furlong", Dimension::Area), None);
    }
}
