//! Exact functional scores and decimal/percent helpers.

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

/// A threshold or weight expressed as an exact non-negative fraction.
pub type Fraction = Ratio<u64>;

/// Functional score as raw test counts. The value is `passed / total`, or 0
/// when no tests were counted.
///
/// Equality is structural (3/4 and 6/8 are different records); ordering of
/// scores always goes through [`Score::value`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Score {
    pub passed: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("passed count {passed} exceeds total {total}")]
pub struct ScoreError {
    pub passed: u64,
    pub total: u64,
}

impl Score {
    pub const ZERO: Score = Score { passed: 0, total: 0 };

    pub fn new(passed: u64, total: u64) -> Result<Self, ScoreError> {
        if passed > total {
            return Err(ScoreError { passed, total });
        }
        Ok(Score { passed, total })
    }

    /// Exact value in [0, 1].
    pub fn value(&self) -> Fraction {
        if self.total == 0 {
            Fraction::from_integer(0)
        } else {
            Fraction::new(self.passed, self.total)
        }
    }

    pub fn as_f64(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.passed as f64 / self.total as f64
        }
    }

    /// Strictly greater by value.
    pub fn beats(&self, other: &Score) -> bool {
        self.value() > other.value()
    }

    /// `value >= threshold`, no epsilon.
    pub fn meets(&self, threshold: Fraction) -> bool {
        self.value() >= threshold
    }

    pub fn is_valid(&self) -> bool {
        self.passed <= self.total
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}/{})", percent_2dp(self.passed as u128, self.total as u128), self.passed, self.total)
    }
}

/// Renders `num/den` as a percentage with two decimals, rounding half up.
/// A zero denominator renders as `0.00%`.
pub fn percent_2dp(num: u128, den: u128) -> String {
    if den == 0 {
        return "0.00%".to_string();
    }
    // hundredths of a percent
    let scaled = (num * 20_000 + den) / (2 * den);
    format!("{}.{:02}%", scaled / 100, scaled % 100)
}

/// Parses a non-negative decimal literal such as `0.86`, `1`, or `.5` into an
/// exact fraction.
pub fn parse_decimal(text: &str) -> Option<Fraction> {
    let text = text.trim();
    let (int_part, frac_part) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    if frac_part.len() > 18 {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: u64 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
    let denom = 10u64.checked_pow(frac_part.len() as u32)?;
    Some(Fraction::new(numer, denom))
}

/// Exact fraction for the shortest decimal form of `value`, so a config value
/// written as `0.4` becomes 2/5 rather than the nearest binary double.
pub fn fraction_from_f64(value: f64) -> Option<Fraction> {
    if !value.is_finite() || value < 0.0 {
        return None;
    }
    parse_decimal(&format!("{value}"))
}
