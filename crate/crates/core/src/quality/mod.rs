//! Functional and non-functional quality scoring.
//!
//! The functional score is the exact test pass rate. Non-functional quality is
//! a weighted sum over up to five normalized dimensions; maintainability is
//! computed in-process, the other four arrive as raw external scores.

mod maintainability;
mod python;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::score::{Fraction, Score};
use crate::sandbox::ExecutionReport;
#[cfg(test)]
use crate::sandbox::ExitStatus;

pub use maintainability::{file_maintainability, maintainability_index, FileStats};
pub use python::{analyze_python_source, repository_maintainability, PythonAnalyzer, SourceAnalyzer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Maintainability,
    Security,
    Robustness,
    Efficiency,
    Resource,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::Maintainability,
        Dimension::Security,
        Dimension::Robustness,
        Dimension::Efficiency,
        Dimension::Resource,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Dimension::Maintainability => "maintainability",
            Dimension::Security => "security",
            Dimension::Robustness => "robustness",
            Dimension::Efficiency => "efficiency",
            Dimension::Resource => "resource",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = QualityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| QualityError::UnknownDimension(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QualityError {
    #[error("weights sum to {0}, expected exactly 1")]
    WeightSum(String),
    #[error("weights cover {weights:?} but scores cover {scores:?}")]
    WeightCoverage { weights: Vec<Dimension>, scores: Vec<Dimension> },
    #[error("score for {dimension} is {value}, outside [0, 1]")]
    Range { dimension: Dimension, value: f64 },
    #[error("normalization range is degenerate (min = max = {0})")]
    DegenerateRange(f64),
    #[error("invalid source statistics: {0}")]
    InvalidStats(String),
    #[error("unknown quality dimension `{0}`")]
    UnknownDimension(String),
    #[error("no dimensions present")]
    NoDimensions,
}

/// Exact weights per dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Weights(pub BTreeMap<Dimension, Fraction>);

impl Weights {
    /// 1/5 on every dimension.
    pub fn uniform() -> Self {
        Weights(Dimension::ALL.into_iter().map(|d| (d, Fraction::new(1, 5))).collect())
    }

    pub fn sum(&self) -> Fraction {
        self.0.values().fold(Fraction::zero(), |acc, w| acc + w)
    }

    pub fn validate(&self) -> Result<(), QualityError> {
        let sum = self.sum();
        if sum != Fraction::from_integer(1) {
            return Err(QualityError::WeightSum(sum.to_string()));
        }
        Ok(())
    }

    /// Restricts to `present` dimensions and rescales so they sum to 1.
    pub fn renormalized_over(&self, present: &[Dimension]) -> Result<Weights, QualityError> {
        let kept: BTreeMap<_, _> = self.0.iter().filter(|(d, _)| present.contains(d)).map(|(d, w)| (*d, *w)).collect();
        let sum = kept.values().fold(Fraction::zero(), |acc, w| acc + w);
        if sum.is_zero() {
            return Err(QualityError::NoDimensions);
        }
        Ok(Weights(kept.into_iter().map(|(d, w)| (d, w / sum)).collect()))
    }
}

/// Affine map with clamping: `clamp((raw - min) / (max - min), 0, 1)`.
/// `min > max` is allowed and describes a lower-is-better raw scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization { min: 0.0, max: 1.0 }
    }
}

pub fn ingest_external_dimension(
    dimension: Dimension,
    raw: f64,
    spec: Normalization,
) -> Result<f64, QualityError> {
    if spec.min == spec.max {
        return Err(QualityError::DegenerateRange(spec.min));
    }
    if !raw.is_finite() {
        return Err(QualityError::Range { dimension, value: raw });
    }
    Ok(((raw - spec.min) / (spec.max - spec.min)).clamp(0.0, 1.0))
}

/// Weighted sum of normalized dimension scores.
///
/// The sum is accumulated exactly (each score is taken at its exact binary
/// value) and rounded to `f64` once at the end.
pub fn aggregate_nonfunctional(
    dimensions: &BTreeMap<Dimension, f64>,
    weights: &Weights,
) -> Result<f64, QualityError> {
    if dimensions.is_empty() {
        return Err(QualityError::NoDimensions);
    }
    if !dimensions.keys().eq(weights.0.keys()) {
        return Err(QualityError::WeightCoverage {
            weights: weights.0.keys().copied().collect(),
            scores: dimensions.keys().copied().collect(),
        });
    }
    weights.validate()?;
    let mut acc = BigRational::zero();
    for (dim, value) in dimensions {
        if !(0.0..=1.0).contains(value) {
            return Err(QualityError::Range { dimension: *dim, value: *value });
        }
        let w = weights.0[dim];
        let w = BigRational::new(BigInt::from(*w.numer()), BigInt::from(*w.denom()));
        let s = BigRational::from_float(*value).expect("finite");
        acc += w * s;
    }
    Ok(acc.to_f64().expect("bounded").clamp(0.0, 1.0))
}

/// Pass rate of one execution. Partial counts are honoured for timed-out runs.
pub fn functional_score(report: &ExecutionReport) -> Score {
    Score::new(report.tests_passed, report.tests_total).unwrap_or(Score::ZERO)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub functional: Score,
    pub dimensions: BTreeMap<Dimension, f64>,
    pub weights: Weights,
    pub nonfunctional_aggregate: f64,
}

/// Scoring configuration: base weights and per-dimension normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringConfig {
    pub weights: Weights,
    pub normalization: BTreeMap<Dimension, Normalization>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig { weights: Weights::uniform(), normalization: BTreeMap::new() }
    }
}

impl ScoringConfig {
    /// Builds a report from whatever dimensions are available. Weights are
    /// renormalized over the present dimensions. `None` when nothing is present.
    pub fn report(
        &self,
        functional: Score,
        maintainability: Option<f64>,
        external_raw: &BTreeMap<String, f64>,
    ) -> Result<Option<QualityReport>, QualityError> {
        let mut dims = BTreeMap::new();
        if let Some(mi) = maintainability {
            dims.insert(Dimension::Maintainability, mi);
        }
        for (name, raw) in external_raw {
            let Ok(dim) = name.parse::<Dimension>() else { continue };
            if dim == Dimension::Maintainability {
                continue;
            }
            let spec = self.normalization.get(&dim).copied().unwrap_or_default();
            dims.insert(dim, ingest_external_dimension(dim, *raw, spec)?);
        }
        dims.retain(|d, _| self.weights.0.get(d).is_some_and(|w| !w.is_zero()));
        if dims.is_empty() {
            return Ok(None);
        }
        let present: Vec<_> = dims.keys().copied().collect();
        let weights = self.weights.renormalized_over(&present)?;
        let aggregate = aggregate_nonfunctional(&dims, &weights)?;
        Ok(Some(QualityReport { functional, dimensions: dims, weights, nonfunctional_aggregate: aggregate }))
    }
}
