//! Per-key gate between the in-weight and in-context predictors.

use crate::error::{Error, Result};
use crate::predictors::keying::InputKey;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Gate value for keys that have never been seen.
pub const INITIAL_ALPHA: f64 = 0.5;

/// Largest f64 strictly below 1; keeps the gate inside the open interval.
const ALPHA_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKeyRule {
    QueryKey,
    /// Query key plus the number of context inputs that share it.
    #[default]
    QueryAndRelevanceKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GateKey {
    pub query: InputKey,
    pub relevant_count: Option<u32>,
}

impl GateKey {
    pub fn new<I: IntoIterator<Item = InputKey>>(rule: GateKeyRule, query: InputKey, context_keys: I) -> Self {
        let relevant_count = match rule {
            GateKeyRule::QueryKey => None,
            GateKeyRule::QueryAndRelevanceKey => Some(context_keys.into_iter().filter(|k| *k == query).count() as u32),
        };
        Self { query, relevant_count }
    }
}

impl fmt::Display for GateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.relevant_count {
            Some(n) => write!(f, "{}/{}", self.query, n),
            None => write!(f, "{}", self.query),
        }
    }
}

impl FromStr for GateKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('/') {
            Some((q, n)) => Ok(Self {
                query: q.parse()?,
                relevant_count: Some(n.parse().map_err(|_| Error::Malformed(format!("bad gate key `{s}`")))?),
            }),
            None => Ok(Self { query: s.parse()?, relevant_count: None }),
        }
    }
}

/// Two-expert exponentiated-gradient step on the linear loss `alpha * loss_diff`:
/// `alpha' = alpha e^{-eta d} / (alpha e^{-eta d} + 1 - alpha)`.
pub fn alpha_update(alpha: f64, loss_diff: f64, eta: f64) -> f64 {
    // logistic form of the same expression, stable for large |eta * d|
    let logit = (alpha / (1.0 - alpha)).ln() - eta * loss_diff;
    logistic(logit)
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `sqrt(8 ln 2 / t)` for the `t`-th update of a key.
pub fn alpha_learning_rate(t: u64) -> f64 {
    (8.0 * std::f64::consts::LN_2 / t.max(1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaEntry {
    pub alpha: f64,
    /// Running sum of `loss_g - loss_h` over this key's steps.
    pub cum_loss_diff: f64,
    pub steps: u64,
}

/// Tabular gate learned by exponentiated gradient with an anytime step size.
///
/// The gate for a key is the EG weight of the in-weight expert after all losses seen for
/// that key, computed from the cumulative loss difference with the current step size.
/// With a constant step size this coincides with iterating [`alpha_update`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlphaTable {
    entries: BTreeMap<GateKey, AlphaEntry>,
}

impl AlphaTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alpha(&self, key: &GateKey) -> f64 {
        self.entries.get(key).map_or(INITIAL_ALPHA, |e| e.alpha)
    }

    pub fn entry(&self, key: &GateKey) -> Option<&AlphaEntry> {
        self.entries.get(key)
    }

    /// Entries in key order.
    pub fn entries(&self) -> impl Iterator<Item = (&GateKey, &AlphaEntry)> {
        self.entries.iter()
    }

    /// Number of distinct gate keys seen.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Feeds one loss difference and returns the gate for the next visit of `key`.
    pub fn observe(&mut self, key: GateKey, loss_diff: f64) -> f64 {
        let e = self.entries.entry(key).or_insert(AlphaEntry { alpha: INITIAL_ALPHA, cum_loss_diff: 0.0, steps: 0 });
        e.cum_loss_diff += loss_diff;
        e.steps += 1;
        let eta = alpha_learning_rate(e.steps);
        e.alpha = alpha_update(INITIAL_ALPHA, e.cum_loss_diff, eta).clamp(f64::MIN_POSITIVE, ALPHA_MAX);
        e.alpha
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn update_examples() {
        assert_eq!(alpha_update(0.3, 0.0, 0.7), 0.3);
        let down = alpha_update(0.5, 1.0, 0.5);
        let hand = (-0.5f64).exp() / ((-0.5f64).exp() + 1.0);
        assert_abs_diff_eq!(down, hand, epsilon = 1e-15);
        assert_abs_diff_eq!(down, 0.37754, epsilon = 1e-5);
        assert_abs_diff_eq!(alpha_update(0.5, -1.0, 0.5), 0.62246, epsilon = 1e-5);
        assert_abs_diff_eq!(alpha_update(0.5, -1.0, 0.5), 1.0 - down, epsilon = 1e-15);
    }

    #[test]
    fn update_matches_multiplicative_form() {
        for &(a, d, eta) in &[(0.2f64, 0.3f64, 1.1f64), (0.9, -2.0, 0.05), (0.5, 4.0, 0.3)] {
            let num = a * (-eta * d).exp();
            assert_abs_diff_eq!(alpha_update(a, d, eta), num / (num + 1.0 - a), epsilon = 1e-14);
        }
    }

    #[test]
    fn equal_losses_keep_initial_gate() {
        let mut t = AlphaTable::new();
        let key = GateKey { query: InputKey::Class(0), relevant_count: Some(1) };
        for _ in 0..100 {
            assert_eq!(t.observe(key, 0.0), INITIAL_ALPHA);
        }
    }

    #[test]
    fn constant_positive_difference_drives_gate_down() {
        let mut t = AlphaTable::new();
        let key = GateKey { query: InputKey::Class(0), relevant_count: None };
        let mut prev = t.alpha(&key);
        for _ in 0..500 {
            let a = t.observe(key, 1.0);
            assert!(a < prev);
            prev = a;
        }
        assert!(prev < 1e-10);
        let other = GateKey { query: InputKey::Class(1), relevant_count: None };
        for _ in 0..500 {
            t.observe(other, -0.5);
        }
        assert!(t.alpha(&other) > 1.0 - 1e-9);
    }

    #[test]
    fn gate_key_text() {
        let k = GateKey::new(GateKeyRule::QueryAndRelevanceKey, InputKey::Class(7), [InputKey::Class(7), InputKey::Class(2), InputKey::Class(7)]);
        assert_eq!(k.relevant_count, Some(2));
        assert_eq!(k.to_string(), "c7/2");
        assert_eq!("c7/2".parse::<GateKey>().unwrap(), k);
        let k = GateKey::new(GateKeyRule::QueryKey, InputKey::Class(3), []);
        assert_eq!("c3".parse::<GateKey>().unwrap(), k);
        assert!("c3/x".parse::<GateKey>().is_err());
    }

    proptest! {
        #[test]
        fn gate_stays_in_open_interval(diffs in prop::collection::vec(-50.0f64..50.0, 1..300)) {
            let mut t = AlphaTable::new();
            let key = GateKey { query: InputKey::Class(0), relevant_count: None };
            for d in diffs {
                let a = t.observe(key, d);
                prop_assert!(a > 0.0 && a < 1.0);
            }
        }

        #[test]
        fn linear_divergence_selects_an_expert(rate in 0.05f64..2.0, noise in prop::collection::vec(-1.0f64..1.0, 4000)) {
            let mut t = AlphaTable::new();
            let down = GateKey { query: InputKey::Class(0), relevant_count: None };
            let up = GateKey { query: InputKey::Class(1), relevant_count: None };
            for n in &noise {
                t.observe(down, -rate + 0.5 * rate * n);
                t.observe(up, rate + 0.5 * rate * n);
            }
            prop_assert!(t.alpha(&down) > 0.99);
            prop_assert!(t.alpha(&up) < 0.01);
        }
    }
}
