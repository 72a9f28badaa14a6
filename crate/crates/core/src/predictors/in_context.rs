//! Kernel-softmax in-context predictor.
//!
//! The prediction is a softmax over negative Mahalanobis-style distances
//! `||x_l - x||_A` between each context input and the query, used to average the
//! one-hot context labels, then mixed with `epsilon` of uniform mass so every class
//! keeps probability at least `epsilon`.

use crate::error::{Error, Result};
use crate::example::ExampleSequence;
use crate::simplex::SimplexVector;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

const PSD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ICPredictorParams {
    a: DMatrix<f64>,
    bound: f64,
    epsilon: f64,
    num_classes: usize,
    /// `Some(s)` when `a == s * I`, which lets distances skip the quadratic form.
    scalar: Option<f64>,
}

impl ICPredictorParams {
    pub fn new(a: DMatrix<f64>, bound: f64, epsilon: f64, num_classes: usize) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidSpec("A must be square".into()));
        }
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::InvalidSpec(format!("norm cap B={bound} must be positive")));
        }
        if num_classes < 2 {
            return Err(Error::InvalidSpec("need at least 2 classes".into()));
        }
        if !(epsilon > 0.0 && epsilon * (num_classes as f64) < 1.0) {
            return Err(Error::InvalidSpec(format!("epsilon={epsilon} must lie in (0, 1/C)")));
        }
        let asym = (&a - a.transpose()).abs().max();
        if asym > PSD_TOLERANCE {
            return Err(Error::InvalidSpec(format!("A is not symmetric (max asymmetry {asym})")));
        }
        let eig = SymmetricEigen::new(a.clone()).eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        if lo < -PSD_TOLERANCE {
            return Err(Error::InvalidSpec(format!("A has negative eigenvalue {lo}")));
        }
        if hi > bound + PSD_TOLERANCE {
            return Err(Error::InvalidSpec(format!("spectral norm {hi} exceeds B={bound}")));
        }
        let scalar = scalar_multiple_of_identity(&a);
        Ok(Self { a, bound, epsilon, num_classes, scalar })
    }

    /// `A = min(1, B) * I`.
    pub fn identity(d: usize, bound: f64, epsilon: f64, num_classes: usize) -> Result<Self> {
        Self::new(DMatrix::identity(d, d) * bound.min(1.0), bound, epsilon, num_classes)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `||u - v||_A`, with tiny negative quadratic forms clamped to zero.
    pub fn distance(&self, u: &[f64], v: &[f64]) -> f64 {
        let q = match self.scalar {
            Some(s) => s * u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
            None => {
                let diff = DVector::from_iterator(u.len(), u.iter().zip(v).map(|(a, b)| a - b));
                diff.dot(&(&self.a * &diff))
            }
        };
        q.max(0.0).sqrt()
    }

    fn check_example(&self, ex: &ExampleSequence) -> Result<()> {
        let d = self.dim();
        if ex.query.len() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: ex.query.len() });
        }
        for pair in &ex.context {
            if pair.input.len() != d {
                return Err(Error::DimensionMismatch { expected: d, actual: pair.input.len() });
            }
            if pair.label >= self.num_classes {
                return Err(Error::DimensionMismatch { expected: self.num_classes, actual: pair.label + 1 });
            }
        }
        if ex.context.is_empty() {
            return Err(Error::InvalidSpec("in-context prediction needs a nonempty context".into()));
        }
        Ok(())
    }

    /// Softmax attention weights and distances over the context.
    fn attention(&self, ex: &ExampleSequence) -> (Vec<f64>, Vec<f64>) {
        let dists: Vec<f64> = ex.context.iter().map(|p| self.distance(&p.input, &ex.query)).collect();
        let min_d = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut weights: Vec<f64> = dists.iter().map(|d| (-(d - min_d)).exp()).collect();
        let z: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= z);
        (weights, dists)
    }
}

fn scalar_multiple_of_identity(a: &DMatrix<f64>) -> Option<f64> {
    let s = a[(0, 0)];
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let expected = if i == j { s } else { 0.0 };
            if a[(i, j)] != expected {
                return None;
            }
        }
    }
    Some(s)
}

pub fn ic_predict(params: &ICPredictorParams, ex: &ExampleSequence) -> Result<SimplexVector> {
    params.check_example(ex)?;
    let (weights, _) = params.attention(ex);
    let c = params.num_classes;
    let eps = params.epsilon;
    let scale = 1.0 - c as f64 * eps;
    let mut probs = vec![eps; c];
    for (pair, w) in ex.context.iter().zip(&weights) {
        probs[pair.label] += scale * w;
    }
    Ok(SimplexVector::from_raw(probs))
}

/// Gradient of the cross-entropy of [`ic_predict`] at `label` with respect to `A`.
pub fn ic_loss_gradient(params: &ICPredictorParams, ex: &ExampleSequence, label: usize) -> Result<DMatrix<f64>> {
    params.check_example(ex)?;
    let (weights, dists) = params.attention(ex);
    let c = params.num_classes;
    let scale = 1.0 - c as f64 * params.epsilon;
    let p_label: f64 = ex.context.iter().zip(&weights).filter(|(p, _)| p.label == label).map(|(_, w)| w).sum();
    let h_label = params.epsilon + scale * p_label;
    let d = params.dim();
    let mut grad = DMatrix::zeros(d, d);
    for ((pair, &s), &dist) in ex.context.iter().zip(&weights).zip(&dists) {
        if dist <= 1e-12 {
            continue;
        }
        let indicator = if pair.label == label { 1.0 } else { 0.0 };
        let dloss_ddist = scale * s * (indicator - p_label) / h_label;
        let diff = DVector::from_iterator(d, pair.input.iter().zip(&ex.query).map(|(a, b)| a - b));
        grad += (&diff * diff.transpose()) * (dloss_ddist / (2.0 * dist));
    }
    Ok(grad)
}

/// Euclidean projection onto `{A symmetric : 0 <= eigenvalues <= bound}`.
pub fn project_psd(a: &DMatrix<f64>, bound: f64) -> DMatrix<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let clamped = eig.eigenvalues.map(|v| v.clamp(0.0, bound));
    let q = &eig.eigenvectors;
    let projected = q * DMatrix::from_diagonal(&clamped) * q.transpose();
    (&projected + projected.transpose()) * 0.5
}

/// Online learner for `A` by projected gradient descent with step `lr / sqrt(t)`.
#[derive(Debug, Clone)]
pub struct ICLearner {
    pub params: ICPredictorParams,
    pub learning_rate: f64,
    pub steps: u64,
}

impl ICLearner {
    pub fn new(params: ICPredictorParams, learning_rate: f64) -> Self {
        Self { params, learning_rate, steps: 0 }
    }

    pub fn update(&mut self, ex: &ExampleSequence, label: usize) -> Result<()> {
        let grad = ic_loss_gradient(&self.params, ex, label)?;
        self.steps += 1;
        let eta = self.learning_rate / (self.steps as f64).sqrt();
        let stepped = &self.params.a - grad * eta;
        let a = project_psd(&stepped, self.params.bound);
        self.params.scalar = scalar_multiple_of_identity(&a);
        self.params.a = a;
        Ok(())
    }
}

/// Lower and upper bound pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPair {
    pub lower: f64,
    pub upper: f64,
}

fn check_counts(irrelevant: usize, context_len: usize) -> Result<()> {
    if irrelevant > context_len || context_len == 0 {
        return Err(Error::InvalidSpec(format!(
            "irrelevant count {irrelevant} must lie in 0..={context_len} with L >= 1"
        )));
    }
    Ok(())
}

/// L1 distance between the in-context prediction and the one-hot target, bounded in
/// terms of the number `irrelevant` of context labels that differ from the target.
pub fn ic_l1_bounds(irrelevant: usize, context_len: usize, bound: f64, epsilon: f64, num_classes: usize) -> Result<BoundPair> {
    check_counts(irrelevant, context_len)?;
    let (k, l, c) = (irrelevant as f64, context_len as f64, num_classes as f64);
    let floor = 2.0 * epsilon * (c - 1.0);
    let mass = 2.0 * k * (1.0 - epsilon * c);
    Ok(BoundPair {
        lower: mass / (k + (l - k) * (2.0 * bound.sqrt()).exp()) + floor,
        upper: mass / l + floor,
    })
}

/// Cross-entropy counterpart of [`ic_l1_bounds`]. With no relevant label the loss is
/// exactly `ln(1/epsilon)`.
pub fn ic_ce_bounds(irrelevant: usize, context_len: usize, bound: f64, epsilon: f64, num_classes: usize) -> Result<BoundPair> {
    check_counts(irrelevant, context_len)?;
    if irrelevant == context_len {
        let v = (1.0 / epsilon).ln();
        return Ok(BoundPair { lower: v, upper: v });
    }
    let (k, l, c) = (irrelevant as f64, context_len as f64, num_classes as f64);
    let scale = 1.0 - epsilon * c;
    Ok(BoundPair {
        lower: k * scale / (k + (l - k) * (2.0 * bound.sqrt()).exp()) + epsilon * (c - 1.0),
        upper: -(scale * (l - k) / l + epsilon).ln(),
    })
}
