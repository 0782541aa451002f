//! Exact material quantities.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// Millionths of a material's stock unit (mg for solids, mL for liquids).
///
/// Integer arithmetic keeps `initial − Σ dispensed = remaining` exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Micros(pub i64);

impl Micros {
    pub const ZERO: Micros = Micros(0);
    pub const PER_UNIT: i64 = 1_000_000;

    /// Rounds to the nearest micro-unit.
    pub fn from_units(value: f64) -> Micros {
        Micros((value * Self::PER_UNIT as f64).round() as i64)
    }

    pub fn to_units(self) -> f64 {
        self.0 as f64 / Self::PER_UNIT as f64
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn checked_sub(self, rhs: Micros) -> Option<Micros> {
        self.0.checked_sub(rhs.0).map(Micros)
    }
}

impl Add for Micros {
    type Output = Micros;
    fn add(self, rhs: Micros) -> Micros {
        Micros(self.0 + rhs.0)
    }
}

impl Sub for Micros {
    type Output = Micros;
    fn sub(self, rhs: Micros) -> Micros {
        Micros(self.0 - rhs.0)
    }
}

impl Neg for Micros {
    type Output = Micros;
    fn neg(self) -> Micros {
        Micros(-self.0)
    }
}

impl AddAssign for Micros {
    fn add_assign(&mut self, rhs: Micros) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Micros {
    fn sub_assign(&mut self, rhs: Micros) {
        self.0 -= rhs.0;
    }
}

impl Sum for Micros {
    fn sum<I: Iterator<Item = Micros>>(iter: I) -> Micros {
        iter.fold(Micros::ZERO, Add::add)
    }
}

impl fmt::Display for Micros {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let whole = abs / Self::PER_UNIT as u64;
        let frac = abs % Self::PER_UNIT as u64;
        if frac == 0 {
            write!(f, "{sign}{whole}")
        } else {
            let digits = format!("{frac:06}");
            write!(f, "{sign}{whole}.{}", digits.trim_end_matches('0'))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_and_display() {
        assert_eq!(Micros::from_units(15.0), Micros(15_000_000));
        assert_eq!(Micros::from_units(0.0000014), Micros(1));
        assert_eq!(Micros(15_020_000).to_string(), "15.02");
        assert_eq!(Micros(-1).to_string(), "-0.000001");
        assert_eq!(Micros(2_000_000).to_string(), "2");
    }

    #[test]
    fn sums_are_exact() {
        let parts: Vec<Micros> = (0..1000).map(|_| Micros::from_units(0.1)).collect();
        assert_eq!(parts.into_iter().sum::<Micros>(), Micros::from_units(100.0));
    }
}
