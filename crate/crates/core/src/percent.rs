use std::fmt;

use serde::{Serialize, Serializer};

/// A percentage stored in hundredths, rounded half-up from an exact ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Percent(u64);

impl Percent {
    /// `100 * part / total` rounded half-up to two decimals. Integer
    /// arithmetic only, so exact halves never depend on binary floating point.
    pub fn of(part: u64, total: u64) -> Option<Percent> {
        if total == 0 {
            return None;
        }
        let doubled = 20_000u128 * u128::from(part) + u128::from(total);
        Some(Percent((doubled / (2 * u128::from(total))) as u64))
    }

    pub fn hundredths(self) -> u64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl Serialize for Percent {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.value())
    }
}
