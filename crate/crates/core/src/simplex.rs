//! Probability vectors over `C` classes and the losses defined on them.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Absolute tolerance on the sum of a [`SimplexVector`].
pub const SUM_TOLERANCE: f64 = 1e-12;

/// A distribution over `C >= 2` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    /// Validates nonnegativity, `C >= 2` and the unit sum.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidSimplex(format!("need at least 2 classes, got {}", probs.len())));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidSimplex(format!("entry {p} is not a nonnegative real")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidSimplex(format!("entries sum to {sum}")));
        }
        Ok(Self(probs))
    }

    /// Rescales nonnegative weights to unit sum.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::InvalidSimplex(format!("cannot normalize weights summing to {sum}")));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(num_classes: usize) -> Self {
        assert!(num_classes >= 2, "a simplex needs at least two classes");
        Self(vec![1.0 / num_classes as f64; num_classes])
    }

    pub fn one_hot(class: usize, num_classes: usize) -> Self {
        assert!(num_classes >= 2 && class < num_classes, "class {class} out of range for C={num_classes}");
        let mut v = vec![0.0; num_classes];
        v[class] = 1.0;
        Self(v)
    }

    /// Builds without validation. Callers guarantee the invariants.
    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        Self(probs)
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }

    /// Index of the largest entry, ties to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.0.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
    }

    /// `weight * self + (1 - weight) * other`.
    pub fn mix(&self, weight: f64, other: &SimplexVector) -> Result<SimplexVector> {
        check_dims(self, other)?;
        let w = weight.clamp(0.0, 1.0);
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| w * a + (1.0 - w) * b).collect()))
    }
}

impl TryFrom<Vec<f64>> for SimplexVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SimplexVector> for Vec<f64> {
    fn from(v: SimplexVector) -> Self {
        v.0
    }
}

fn check_dims(a: &SimplexVector, b: &SimplexVector) -> Result<()> {
    if a.num_classes() != b.num_classes() {
        return Err(Error::DimensionMismatch { expected: a.num_classes(), actual: b.num_classes() });
    }
    Ok(())
}

/// `-sum_c target_c * ln(pred_c)`.
pub fn cross_entropy(pred: &SimplexVector, target: &SimplexVector) -> Result<f64> {
    check_dims(pred, target)?;
    let mut loss = 0.0;
    for (c, (&p, &t)) in pred.0.iter().zip(&target.0).enumerate() {
        if t > 0.0 {
            if p <= 0.0 {
                return Err(Error::Domain { class: c });
            }
            loss -= t * p.ln();
        }
    }
    // -0.0 for perfect predictions reads badly in CSV output
    Ok(loss.max(0.0))
}

/// Cross-entropy against a one-hot target, without materializing it.
pub fn cross_entropy_label(pred: &SimplexVector, label: usize) -> Result<f64> {
    if label >= pred.num_classes() {
        return Err(Error::DimensionMismatch { expected: pred.num_classes(), actual: label + 1 });
    }
    let p = pred.0[label];
    if p <= 0.0 {
        return Err(Error::Domain { class: label });
    }
    Ok((-p.ln()).max(0.0))
}

/// 0 when the argmax (lowest index on ties) is the target, else 1.
pub fn zero_one(pred: &SimplexVector, target_label: usize) -> u8 {
    u8::from(pred.argmax() != target_label)
}

pub fn l1_distance(a: &SimplexVector, b: &SimplexVector) -> Result<f64> {
    check_dims(a, b)?;
    Ok(a.0.iter().zip(&b.0).map(|(x, y)| (x - y).abs()).sum())
}
