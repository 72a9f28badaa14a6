//! Labeled pairs and example sequences (a context of `L` pairs plus a query).

use crate::error::{Error, Result};
use crate::simplex::SimplexVector;
use serde::{Deserialize, Serialize};

pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_unit(v: &[f64]) -> Result<()> {
    let n = norm(v);
    if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
        return Err(Error::InvalidSpec(format!("input has norm {n}, expected 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub input: Vec<f64>,
    pub label: usize,
}

impl LabeledPair {
    pub fn new(input: Vec<f64>, label: usize) -> Result<Self> {
        check_unit(&input)?;
        Ok(Self { input, label })
    }

    pub fn one_hot(&self, num_classes: usize) -> SimplexVector {
        SimplexVector::one_hot(self.label, num_classes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleSequence {
    pub context: Vec<LabeledPair>,
    pub query: Vec<f64>,
    /// Observed label of the query (after any label noise).
    pub target_label: usize,
    /// Whether some context label equals `target_label`.
    pub relevant: bool,
    /// Latent class whose prototype generated the query input.
    pub query_class: usize,
}

impl ExampleSequence {
    /// Validated constructor; `relevant` is derived from the labels.
    pub fn new(context: Vec<LabeledPair>, query: Vec<f64>, target_label: usize, query_class: usize) -> Result<Self> {
        check_unit(&query)?;
        for pair in &context {
            check_unit(&pair.input)?;
        }
        Ok(Self::assemble(context, query, target_label, query_class))
    }

    pub(crate) fn assemble(context: Vec<LabeledPair>, query: Vec<f64>, target_label: usize, query_class: usize) -> Self {
        let relevant = context.iter().any(|p| p.label == target_label);
        Self { context, query, target_label, relevant, query_class }
    }

    pub fn context_len(&self) -> usize {
        self.context.len()
    }

    /// Number of context labels that differ from the target.
    pub fn irrelevant_count(&self) -> usize {
        self.context.iter().filter(|p| p.label != self.target_label).count()
    }
}

/// One line of the JSONL dataset dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub seq_id: u64,
    pub context: Vec<ContextRecord>,
    pub query: Vec<f64>,
    pub target: usize,
    pub relevant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextRecord {
    pub x: Vec<f64>,
    pub y: usize,
}

impl DatasetRecord {
    pub fn from_example(seq_id: u64, ex: &ExampleSequence) -> Self {
        Self {
            seq_id,
            context: ex.context.iter().map(|p| ContextRecord { x: p.input.clone(), y: p.label }).collect(),
            query: ex.query.clone(),
            target: ex.target_label,
            relevant: ex.relevant,
        }
    }
}
