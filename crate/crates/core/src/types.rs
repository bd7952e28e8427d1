//! Shared domain vocabulary: bus technologies, length groups, seasons and
//! purchasable bus versions.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::money::Money;

/// Technology dimension of the scenario tree. Both charging variants of a
/// battery bus share one battery technology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TechKind {
    Diesel,
    Battery,
    Hydrogen,
}

impl fmt::Display for TechKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TechKind::Diesel => write!(f, "DB"),
            TechKind::Battery => write!(f, "BEB"),
            TechKind::Hydrogen => write!(f, "HFCB"),
        }
    }
}

/// Fleet-side bus type: diesel, the two battery charging schemes, hydrogen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BusType {
    Diesel,
    BebFastCharge,
    BebOvernight,
    Hydrogen,
}

impl BusType {
    pub fn tech(self) -> TechKind {
        match self {
            BusType::Diesel => TechKind::Diesel,
            BusType::BebFastCharge | BusType::BebOvernight => TechKind::Battery,
            BusType::Hydrogen => TechKind::Hydrogen,
        }
    }

    pub fn is_battery(self) -> bool {
        matches!(self, BusType::BebFastCharge | BusType::BebOvernight)
    }

    pub fn code(self) -> &'static str {
        match self {
            BusType::Diesel => "DB",
            BusType::BebFastCharge => "BEB-FC",
            BusType::BebOvernight => "BEB-ONC",
            BusType::Hydrogen => "HFCB",
        }
    }
}

impl fmt::Display for BusType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

impl FromStr for BusType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "DB" => Ok(BusType::Diesel),
            "BEB-FC" => Ok(BusType::BebFastCharge),
            "BEB-ONC" => Ok(BusType::BebOvernight),
            "HFCB" => Ok(BusType::Hydrogen),
            other => Err(format!("unknown bus type {other:?}")),
        }
    }
}

/// Vehicle length group; schedules and versions are matched on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LengthGroup {
    M8,
    M10,
    M12,
    M18,
}

impl LengthGroup {
    pub const ALL: [LengthGroup; 4] = [
        LengthGroup::M8,
        LengthGroup::M10,
        LengthGroup::M12,
        LengthGroup::M18,
    ];

    pub fn code(self) -> &'static str {
        match self {
            LengthGroup::M8 => "8m",
            LengthGroup::M10 => "10m",
            LengthGroup::M12 => "12m",
            LengthGroup::M18 => "18m",
        }
    }
}

impl fmt::Display for LengthGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

impl FromStr for LengthGroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "8m" => Ok(LengthGroup::M8),
            "10m" => Ok(LengthGroup::M10),
            "12m" => Ok(LengthGroup::M12),
            "18m" => Ok(LengthGroup::M18),
            other => Err(format!("unknown length group {other:?}")),
        }
    }
}

/// Schedule subperiod. Winter stands for the non-summer part of the year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Season {
    Winter,
    Summer,
}

impl Season {
    pub const ALL: [Season; 2] = [Season::Winter, Season::Summer];

    pub fn code(self) -> &'static str {
        match self {
            Season::Winter => "winter",
            Season::Summer => "summer",
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

impl FromStr for Season {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "winter" => Ok(Season::Winter),
            "summer" => Ok(Season::Summer),
            other => Err(format!("unknown season {other:?}")),
        }
    }
}

/// One purchasable technology/version: the unit of purchase, salvage and
/// assignment decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusVersion {
    /// Stable key, e.g. `"BEB-FC-12m-280"`.
    pub id: String,
    pub bus_type: BusType,
    pub length: LengthGroup,
    /// Usable battery capacity in kWh. Zero for non-battery buses.
    pub battery_capacity_kwh: f64,
    /// Battery pack mass in kg, fixed at the design capacity. Capacity
    /// improvements keep the pack weight so total bus mass is unchanged.
    pub battery_mass_kg: f64,
    /// Full-recharge duration in minutes (fast-charge buses only).
    pub recharge_minutes: f64,
    /// Economic life in years.
    pub economic_life: u32,
    /// Purchase cost of the bus itself (excluding chargers and the mid-life
    /// powertrain replacement that investment costing adds on top).
    pub purchase_cost: Money,
    /// Diesel consumption in L/km (diesel buses only).
    pub diesel_l_per_km: f64,
    /// Hydrogen consumption in kg/km (hydrogen buses only).
    pub hydrogen_kg_per_km: f64,
}

impl BusVersion {
    /// Scale battery capacity by a cumulative efficiency multiplier. Pack
    /// mass and recharge time stay as designed.
    pub fn with_capacity_multiplier(&self, eff_multiplier: f64) -> BusVersion {
        let mut v = self.clone();
        if self.bus_type.is_battery() {
            v.battery_capacity_kwh = self.battery_capacity_kwh * eff_multiplier;
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bus_type_roundtrip() {
        for t in [
            BusType::Diesel,
            BusType::BebFastCharge,
            BusType::BebOvernight,
            BusType::Hydrogen,
        ] {
            assert_eq!(t.code().parse::<BusType>().unwrap(), t);
        }
        assert!("BEV".parse::<BusType>().is_err());
    }

    #[test]
    fn battery_types_share_tech() {
        assert_eq!(BusType::BebFastCharge.tech(), TechKind::Battery);
        assert_eq!(BusType::BebOvernight.tech(), TechKind::Battery);
        assert_eq!(BusType::Diesel.tech(), TechKind::Diesel);
    }

    #[test]
    fn capacity_multiplier_keeps_mass() {
        let v = BusVersion {
            id: "BEB-ONC-12m-280".into(),
            bus_type: BusType::BebOvernight,
            length: LengthGroup::M12,
            battery_capacity_kwh: 280.0,
            battery_mass_kg: 1400.0,
            recharge_minutes: 373.3,
            economic_life: 12,
            purchase_cost: Money::from_dollars(440_000.0),
            diesel_l_per_km: 0.0,
            hydrogen_kg_per_km: 0.0,
        };
        let evolved = v.with_capacity_multiplier(1.31);
        assert!((evolved.battery_capacity_kwh - 366.8).abs() < 1e-9);
        assert_eq!(evolved.battery_mass_kg, 1400.0);
        assert_eq!(evolved.recharge_minutes, v.recharge_minutes);
    }
}
