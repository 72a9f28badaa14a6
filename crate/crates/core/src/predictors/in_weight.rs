//! Tabular in-weight predictor: one label distribution per input key.
//!
//! Two backends share the table. `Kt` is the add-one-half (Krichevsky–Trofimov)
//! estimator; `Eg` runs exponentiated gradient on the simplex under cross-entropy,
//! with a per-key step count driving the learning rate.

use super::keying::InputKey;
use crate::error::{Error, Result};
use crate::simplex::SimplexVector;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

/// EG weights are kept at or above this value so that losses stay finite.
pub const EG_WEIGHT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IwBackend {
    #[default]
    Kt,
    Eg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub counts: Vec<u64>,
    pub total: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InWeightTable {
    num_classes: usize,
    backend: IwBackend,
    entries: HashMap<InputKey, TableEntry>,
}

/// EG step size for the `t`-th update of a key: `sqrt(2 ln C / t)`.
pub fn eg_learning_rate(num_classes: usize, t: u64) -> f64 {
    (2.0 * (num_classes as f64).ln() / t.max(1) as f64).sqrt()
}

impl InWeightTable {
    pub fn new(num_classes: usize, backend: IwBackend) -> Self {
        assert!(num_classes >= 2, "need at least two classes");
        Self { num_classes, backend, entries: HashMap::new() }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn backend(&self) -> IwBackend {
        self.backend
    }

    /// Number of distinct keys seen.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, key: &InputKey) -> Option<&TableEntry> {
        self.entries.get(key)
    }

    pub fn update(&mut self, key: InputKey, label: usize) -> Result<()> {
        if label >= self.num_classes {
            return Err(Error::DimensionMismatch { expected: self.num_classes, actual: label + 1 });
        }
        let c = self.num_classes;
        let backend = self.backend;
        let entry = self.entries.entry(key).or_insert_with(|| TableEntry {
            counts: vec![0; c],
            total: 0,
            weights: (backend == IwBackend::Eg).then(|| vec![1.0 / c as f64; c]),
        });
        entry.counts[label] += 1;
        entry.total += 1;
        if let Some(w) = entry.weights.as_mut() {
            eg_step(w, label, eg_learning_rate(c, entry.total));
        }
        Ok(())
    }

    pub fn predict(&self, key: &InputKey) -> SimplexVector {
        let c = self.num_classes;
        let Some(entry) = self.entries.get(key) else {
            return SimplexVector::uniform(c);
        };
        match (&self.backend, &entry.weights) {
            (IwBackend::Eg, Some(w)) => SimplexVector::from_raw(w.clone()),
            _ => {
                let denom = entry.total as f64 + c as f64 / 2.0;
                SimplexVector::from_raw(entry.counts.iter().map(|&n| (n as f64 + 0.5) / denom).collect())
            }
        }
    }

    /// Keys in sorted order with their entries.
    pub fn sorted_entries(&self) -> BTreeMap<InputKey, &TableEntry> {
        self.entries.iter().map(|(k, v)| (*k, v)).collect()
    }

    /// `{key: {counts, total}}` JSON snapshot (EG weights included when present).
    pub fn to_snapshot_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.sorted_entries())?)
    }

    pub fn from_snapshot_json(json: &str, num_classes: usize, backend: IwBackend) -> Result<Self> {
        let raw: BTreeMap<InputKey, TableEntry> = serde_json::from_str(json)?;
        let mut table = Self::new(num_classes, backend);
        for (key, mut entry) in raw {
            if entry.counts.len() != num_classes {
                return Err(Error::DimensionMismatch { expected: num_classes, actual: entry.counts.len() });
            }
            if entry.counts.iter().sum::<u64>() != entry.total {
                return Err(Error::Malformed(format!("counts of key {key} do not sum to its total")));
            }
            if backend == IwBackend::Eg && entry.weights.is_none() {
                return Err(Error::Malformed(format!("EG snapshot lacks weights for key {key}")));
            }
            if backend == IwBackend::Kt {
                entry.weights = None;
            }
            table.entries.insert(key, entry);
        }
        Ok(table)
    }
}

/// One multiplicative-weights step for the cross-entropy gradient at `label`.
///
/// The gradient is `-1 / w_label` on the observed coordinate and zero elsewhere, so the
/// step rescales that coordinate by `exp(eta / w_label)`; the update is done in log space.
fn eg_step(w: &mut [f64], label: usize, eta: f64) {
    let wl = w[label];
    let boosted = wl.ln() + eta / wl;
    let rest = (1.0 - wl).max(0.0);
    let log_z = if rest > 0.0 { log_add_exp(boosted, rest.ln()) } else { boosted };
    for (i, wi) in w.iter_mut().enumerate() {
        let log_new = if i == label { boosted - log_z } else { wi.ln() - log_z };
        *wi = log_new.exp().max(EG_WEIGHT_FLOOR);
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Leading term `(C-1)/2 * ln(N_x)/N_x` of the excess cross-entropy risk of the KT
/// estimator. The `O(1/N_x)` remainder has no known constant and is left out.
pub fn kt_excess_bound(n_x: u64, num_classes: usize) -> Result<f64> {
    if n_x == 0 {
        return Err(Error::InvalidSpec("N_x must be at least 1".into()));
    }
    let n = n_x as f64;
    Ok((num_classes as f64 - 1.0) / 2.0 * n.ln() / n)
}

/// Uniform high-probability excess-risk bound for the tabular empirical risk minimizer:
/// `6 G sqrt(ln(2 |X| C / delta) / N_x)`.
pub fn generalization_bound(grad_sup: f64, input_count: u64, num_classes: usize, delta: f64, n_x: u64) -> Result<f64> {
    if !(grad_sup >= 1.0 && grad_sup.is_finite()) {
        return Err(Error::InvalidSpec(format!("gradient bound {grad_sup} must be >= 1")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidSpec(format!("confidence delta={delta} must lie in (0,1)")));
    }
    if input_count == 0 || n_x == 0 || num_classes < 2 {
        return Err(Error::InvalidSpec("|X|, N_x must be positive and C >= 2".into()));
    }
    let log_term = (2.0 * input_count as f64 * num_classes as f64 / delta).ln();
    Ok(6.0 * grad_sup * (log_term / n_x as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn kt_fresh_key_and_counts() {
        let mut t = InWeightTable::new(10, IwBackend::Kt);
        assert_eq!(t.predict(&InputKey::Class(3)).probs(), SimplexVector::uniform(10).probs());
        t.update(InputKey::Class(3), 2).unwrap();
        let e = t.entry(&InputKey::Class(3)).unwrap();
        assert_eq!(e.counts, vec![0, 0, 1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(e.total, 1);
        assert!(t.update(InputKey::Class(3), 10).is_err());
    }

    #[test]
    fn kt_formula() {
        let mut t = InWeightTable::new(2, IwBackend::Kt);
        for label in [0, 0, 0, 1] {
            t.update(InputKey::Class(0), label).unwrap();
        }
        let p = t.predict(&InputKey::Class(0));
        assert_abs_diff_eq!(p.get(0), 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(1), 0.3, epsilon = 1e-15);

        let mut t = InWeightTable::new(10, IwBackend::Kt);
        for _ in 0..10_000 {
            t.update(InputKey::Class(1), 9).unwrap();
        }
        assert_abs_diff_eq!(t.predict(&InputKey::Class(1)).get(9), 10_000.5 / 10_005.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.predict(&InputKey::Class(1)).get(9), 0.99955, epsilon = 1e-5);
    }

    #[test]
    fn eg_converges_monotonically() {
        let mut t = InWeightTable::new(2, IwBackend::Eg);
        let key = InputKey::Class(0);
        let mut prev = t.predict(&key).get(0);
        assert_eq!(prev, 0.5);
        for _ in 0..2000 {
            t.update(key, 0).unwrap();
            let w = t.predict(&key).get(0);
            assert!(w >= prev);
            prev = w;
        }
        assert!(prev > 1.0 - 1e-9);
    }

    #[test]
    fn eg_survives_extreme_gradients() {
        let mut t = InWeightTable::new(3, IwBackend::Eg);
        let key = InputKey::Class(0);
        for _ in 0..500 {
            t.update(key, 0).unwrap();
        }
        t.update(key, 2).unwrap();
        let p = t.predict(&key);
        assert!(p.probs().iter().all(|x| x.is_finite() && *x >= EG_WEIGHT_FLOOR / 2.0));
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bound_examples() {
        assert_abs_diff_eq!(kt_excess_bound(100, 10).unwrap(), 0.207233, epsilon = 1e-6);
        assert_eq!(kt_excess_bound(1, 2).unwrap(), 0.0);
        assert!(kt_excess_bound(0, 2).is_err());
        let g = generalization_bound(1.0, 10, 10, 0.05, 400).unwrap();
        assert_abs_diff_eq!(g, 0.8640, epsilon = 1e-4);
        let g4 = generalization_bound(1.0, 10, 10, 0.05, 1600).unwrap();
        assert_abs_diff_eq!(g4, g / 2.0, epsilon = 1e-12);
        assert!(generalization_bound(1.0, 1, 2, 4.0, 10).is_err());
        assert!(generalization_bound(0.5, 1, 2, 0.1, 10).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let mut t = InWeightTable::new(3, IwBackend::Kt);
        t.update(InputKey::Class(1), 2).unwrap();
        t.update(InputKey::Exact(42), 0).unwrap();
        let json = t.to_snapshot_json().unwrap();
        assert!(json.contains("\"c1\"") && json.contains("\"total\": 1"));
        let back = InWeightTable::from_snapshot_json(&json, 3, IwBackend::Kt).unwrap();
        assert_eq!(back, t);
        assert!(InWeightTable::from_snapshot_json(r#"{"c0":{"counts":[1,0,0],"total":2}}"#, 3, IwBackend::Kt).is_err());
    }

    proptest! {
        #[test]
        fn kt_is_calibrated(labels in prop::collection::vec(0usize..5, 0..50), extra in 0usize..5) {
            let mut t = InWeightTable::new(5, IwBackend::Kt);
            let key = InputKey::Class(0);
            for &l in &labels {
                t.update(key, l).unwrap();
            }
            let before = t.predict(&key);
            prop_assert!((before.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            t.update(key, extra).unwrap();
            prop_assert!(t.predict(&key).get(extra) > before.get(extra));
        }
    }
}
