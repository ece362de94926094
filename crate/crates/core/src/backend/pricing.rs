use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::score::{parse_decimal, Fraction};

/// Money in picodollars (1e-12 USD). Exact for prices with up to six decimals
/// in dollars per million tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cost(u64);

impl Cost {
    pub const ZERO: Cost = Cost(0);

    pub fn from_pico(pico: u64) -> Self {
        Cost(pico)
    }

    pub fn pico(&self) -> u64 {
        self.0
    }

    /// Parses a dollar amount such as `13.24`.
    pub fn from_dollars(text: &str) -> Option<Cost> {
        let value = parse_decimal(text)?;
        let pico = value * Fraction::from_integer(1_000_000_000_000);
        pico.is_integer().then(|| Cost(pico.to_integer()))
    }

    pub fn as_dollars(&self) -> f64 {
        self.0 as f64 / 1e12
    }

    /// Dollars rounded half-up to two decimals.
    pub fn dollars_2dp(&self) -> String {
        let cents = (self.0 as u128 + 5_000_000_000) / 10_000_000_000;
        format!("{}.{:02}", cents / 100, cents % 100)
    }
}

impl Add for Cost {
    type Output = Cost;
    fn add(self, rhs: Cost) -> Cost {
        Cost(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for Cost {
    fn add_assign(&mut self, rhs: Cost) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::ZERO, Add::add)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}", self.dollars_2dp())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PriceError {
    #[error("price `{0}` is not a non-negative decimal with at most six fractional digits")]
    Invalid(String),
}

/// Per-token prices, stored as picodollars per token.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceTable {
    pub input_pico_per_token: u64,
    pub output_pico_per_token: u64,
}

impl PriceTable {
    /// Prices in dollars per million tokens, written as decimals.
    pub fn per_million(input: &str, output: &str) -> Result<Self, PriceError> {
        let conv = |text: &str| {
            let value = parse_decimal(text).ok_or_else(|| PriceError::Invalid(text.into()))?;
            let pico = value * Fraction::from_integer(1_000_000);
            if !pico.is_integer() {
                return Err(PriceError::Invalid(text.into()));
            }
            Ok(pico.to_integer())
        };
        Ok(PriceTable { input_pico_per_token: conv(input)?, output_pico_per_token: conv(output)? })
    }

    pub fn usage(&self, prompt_tokens: u64, completion_tokens: u64) -> BackendUsage {
        let cost = prompt_tokens
            .saturating_mul(self.input_pico_per_token)
            .saturating_add(completion_tokens.saturating_mul(self.output_pico_per_token));
        BackendUsage { prompt_tokens, completion_tokens, monetary_cost: Cost(cost) }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Picodollars.
    pub monetary_cost: Cost,
}

impl Add for BackendUsage {
    type Output = BackendUsage;
    fn add(self, rhs: BackendUsage) -> BackendUsage {
        BackendUsage {
            prompt_tokens: self.prompt_tokens + rhs.prompt_tokens,
            completion_tokens: self.completion_tokens + rhs.completion_tokens,
            monetary_cost: self.monetary_cost + rhs.monetary_cost,
        }
    }
}

impl AddAssign for BackendUsage {
    fn add_assign(&mut self, rhs: BackendUsage) {
        *self = *self + rhs;
    }
}
