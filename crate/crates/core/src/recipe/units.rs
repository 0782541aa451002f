//! Fixed unit table for recipe quantities and device readings.
//!
//! Conversions only ever happen inside one dimension, and only the explicit
//! pairs mg↔g and s↔min are supported.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Mass,
    Volume,
    Temperature,
    Time,
    Rate,
    Turbidity,
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Unit {
    Milligram,
    Gram,
    Millilitre,
    Celsius,
    Second,
    Minute,
    Rpm,
    /// Dimensionless turbidity scalar reported by the camera model.
    Ntu,
    Count,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UnitError {
    #[error("unknown unit '{0}'")]
    Unknown(String),
    #[error("cannot convert {from} to {to}: different dimensions")]
    Incompatible { from: Unit, to: Unit },
    #[error("expected '<number> <unit>', found '{0}'")]
    Malformed(String),
}

impl Unit {
    pub const RECIPE_UNITS: [Unit; 7] = [
        Unit::Milligram,
        Unit::Gram,
        Unit::Millilitre,
        Unit::Celsius,
        Unit::Second,
        Unit::Minute,
        Unit::Rpm,
    ];

    pub fn parse(symbol: &str) -> Result<Unit, UnitError> {
        let unit = match symbol.trim() {
            "mg" => Unit::Milligram,
            "g" => Unit::Gram,
            "mL" | "ml" => Unit::Millilitre,
            "°C" | "degC" => Unit::Celsius,
            "s" => Unit::Second,
            "min" => Unit::Minute,
            "rpm" => Unit::Rpm,
            "NTU" => Unit::Ntu,
            "count" => Unit::Count,
            other => return Err(UnitError::Unknown(other.to_string())),
        };
        Ok(unit)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Milligram => "mg",
            Unit::Gram => "g",
            Unit::Millilitre => "mL",
            Unit::Celsius => "°C",
            Unit::Second => "s",
            Unit::Minute => "min",
            Unit::Rpm => "rpm",
            Unit::Ntu => "NTU",
            Unit::Count => "count",
        }
    }

    pub fn dimension(self) -> Dimension {
        match self {
            Unit::Milligram | Unit::Gram => Dimension::Mass,
            Unit::Millilitre => Dimension::Volume,
            Unit::Celsius => Dimension::Temperature,
            Unit::Second | Unit::Minute => Dimension::Time,
            Unit::Rpm => Dimension::Rate,
            Unit::Ntu => Dimension::Turbidity,
            Unit::Count => Dimension::Count,
        }
    }

    pub fn is_recipe_unit(self) -> bool {
        Self::RECIPE_UNITS.contains(&self)
    }

    /// Canonical unit devices receive for this dimension.
    pub fn canonical(dimension: Dimension) -> Unit {
        match dimension {
            Dimension::Mass => Unit::Milligram,
            Dimension::Volume => Unit::Millilitre,
            Dimension::Temperature => Unit::Celsius,
            Dimension::Time => Unit::Second,
            Dimension::Rate => Unit::Rpm,
            Dimension::Turbidity => Unit::Ntu,
            Dimension::Count => Unit::Count,
        }
    }

    fn scale_to_base(self) -> f64 {
        match self {
            Unit::Gram => 1000.0,
            Unit::Minute => 60.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl Serialize for Unit {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.symbol())
    }
}

impl<'de> Deserialize<'de> for Unit {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Unit::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub unit: Unit,
}

impl Quantity {
    pub fn new(value: f64, unit: Unit) -> Self {
        Self { value, unit }
    }

    pub fn convert_to(self, unit: Unit) -> Result<Quantity, UnitError> {
        if self.unit == unit {
            return Ok(self);
        }
        if self.unit.dimension() != unit.dimension() {
            return Err(UnitError::Incompatible {
                from: self.unit,
                to: unit,
            });
        }
        let value = self.value * self.unit.scale_to_base() / unit.scale_to_base();
        Ok(Quantity { value, unit })
    }

    /// Converts into the canonical unit of the quantity's dimension.
    pub fn canonical(self) -> Quantity {
        let unit = Unit::canonical(self.unit.dimension());
        self.convert_to(unit).expect("same dimension")
    }
}

impl FromStr for Quantity {
    type Err = UnitError;

    /// Parses `"<number> <unit>"`, e.g. `"5000 mg"`.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let malformed = || UnitError::Malformed(text.to_string());
        let mut parts = text.split_whitespace();
        let (Some(num), Some(sym), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(malformed());
        };
        let value: f64 = num.parse().map_err(|_| malformed())?;
        if !value.is_finite() {
            return Err(malformed());
        }
        Ok(Quantity::new(value, Unit::parse(sym)?))
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", format_number(self.value), self.unit)
    }
}

/// Shortest text that reparses to the same `f64`; integral values print
/// without a fractional part.
pub fn format_number(value: f64) -> String {
    if value.fract() == 0.0 && value.abs() < 1e15 {
        format!("{}", value as i64)
    } else {
        format!("{value}")
    }
}
