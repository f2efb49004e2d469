//! Vector comparators. Every score is a similarity: distances are negated so
//! that higher always means "more likely genuine".

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

const CHI2_GUARD: f64 = 1e-12;
const NORM_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Chi2,
    Cosine,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Euclidean, Metric::Chi2, Metric::Cosine];

    pub fn id(&self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Chi2 => "chi2",
            Metric::Cosine => "cosine",
        }
    }

    pub fn compare(&self, a: &[f32], b: &[f32]) -> Result<f64> {
        match self {
            Metric::Euclidean => euclidean(a, b),
            Metric::Chi2 => chi2(a, b),
            Metric::Cosine => cosine(a, b),
        }
    }

    /// Like [`Metric::compare`], but χ² uses `|a| + |b|` in the denominator so
    /// that signed activations can be compared. Identical to `compare` on
    /// non-negative input.
    pub fn compare_signed(&self, a: &[f32], b: &[f32]) -> Result<f64> {
        match self {
            Metric::Chi2 => chi2_abs(a, b),
            other => other.compare(a, b),
        }
    }

    pub fn score(&self, a: &FeatureVector, b: &FeatureVector) -> Result<Score> {
        Ok(Score {
            value: self.compare(&a.values, &b.values)?,
            comparator_id: self.id().to_owned(),
        })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "chi2" => Ok(Metric::Chi2),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::invalid(format!(
                "unknown metric {other:?} (expected euclidean, chi2 or cosine)"
            ))),
        }
    }
}

/// A comparison outcome, always a similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub comparator_id: String,
}

fn same_len(a: &[f32], b: &[f32]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "vector lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Negated Euclidean distance.
pub fn euclidean(a: &[f32], b: &[f32]) -> Result<f64> {
    same_len(a, b)?;
    let ss: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(-ss.sqrt())
}

/// Negated χ² distance; terms with `a_i + b_i` below 1e-12 contribute nothing.
pub fn chi2(a: &[f32], b: &[f32]) -> Result<f64> {
    same_len(a, b)?;
    if let Some(i) = a.iter().chain(b).position(|&v| v < 0.0) {
        return Err(Error::invalid(format!(
            "chi2 needs non-negative entries (index {})",
            i % a.len().max(1)
        )));
    }
    Ok(-chi2_sum(a, b, |x, y| x + y))
}

/// χ² with an `|a_i| + |b_i|` denominator, defined for signed vectors.
pub fn chi2_abs(a: &[f32], b: &[f32]) -> Result<f64> {
    same_len(a, b)?;
    Ok(-chi2_sum(a, b, |x, y| x.abs() + y.abs()))
}

fn chi2_sum(a: &[f32], b: &[f32], denom: impl Fn(f64, f64) -> f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let (x, y) = (x as f64, y as f64);
            let s = denom(x, y);
            if s < CHI2_GUARD {
                0.0
            } else {
                (x - y) * (x - y) / s
            }
        })
        .sum()
}

/// Cosine similarity; zero when either vector has (near) zero norm.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    same_len(a, b)?;
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let (na, nb) = (na.sqrt(), nb.sqrt());
    if na < NORM_GUARD || nb < NORM_GUARD {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
