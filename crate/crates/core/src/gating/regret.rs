//! Hindsight comparators and the regret decompositions checked on every ledger.

use super::alpha::GateKey;
use super::ledger::RegretLedger;
use crate::datagen::BaseDistributionSpec;
use crate::error::{Error, Result};
use crate::predictors::keying::InputKey;
use crate::simplex::SimplexVector;
use serde::Serialize;

/// Slack used when comparing the two sides of a decomposition.
pub const CHECK_TOLERANCE: f64 = 1e-9;

/// Coordinates of the hindsight in-weight comparator are kept at or above this value.
pub const HINDSIGHT_FLOOR: f64 = 1e-6;

/// Minimum number of visits for the online-to-batch check.
pub const MIN_ONLINE_TO_BATCH_SAMPLES: usize = 100;

const ONLINE_TO_BATCH_CONFIDENCE: f64 = 0.01;

/// Neumaier-compensated running sum; ledgers of 10^6 steps lose digits otherwise.
#[derive(Debug, Clone, Copy, Default)]
struct Sum {
    total: f64,
    carry: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.total + x;
        if self.total.abs() >= x.abs() {
            self.carry += (self.total - t) + x;
        } else {
            self.carry += (x - t) + self.total;
        }
        self.total = t;
    }

    fn value(&self) -> f64 {
        self.total + self.carry
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegretReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl RegretReport {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, holds: lhs <= rhs + CHECK_TOLERANCE }
    }
}

/// Best gate in hindsight: 1 iff the key's cumulative `loss_g - loss_h` is strictly negative.
pub fn alpha_star(ledger: &RegretLedger, key: &GateKey) -> Result<u8> {
    let idx = ledger.gate_index(key).ok_or_else(|| Error::UnknownKey(key.to_string()))?;
    let mut s = Sum::default();
    for r in ledger.records().iter().filter(|r| r.gate == idx) {
        s.add(r.loss_g - r.loss_h);
    }
    Ok(u8::from(s.value() < 0.0))
}

/// Population oracle gate: 1 iff the in-weight risk does not exceed the in-context risk.
pub fn oracle_alpha(g_risk: f64, h_risk: f64) -> u8 {
    u8::from(g_risk <= h_risk)
}

/// `alpha_star` for every gate key, indexed like the ledger's gate table.
fn alpha_star_all(ledger: &RegretLedger) -> Vec<f64> {
    let mut sums = vec![Sum::default(); ledger.gate_keys().len()];
    for r in ledger.records() {
        sums[r.gate as usize].add(r.loss_g - r.loss_h);
    }
    sums.iter().map(|s| if s.value() < 0.0 { 1.0 } else { 0.0 }).collect()
}

/// Hindsight in-weight comparator per key: clamped empirical label frequencies.
pub fn hindsight_weights(ledger: &RegretLedger) -> Vec<SimplexVector> {
    let c = ledger.num_classes();
    let mut counts = vec![vec![0u64; c]; ledger.iw_keys().len()];
    for r in ledger.records() {
        counts[r.iw as usize][r.label as usize] += 1;
    }
    counts
        .into_iter()
        .map(|n| {
            let total: u64 = n.iter().sum();
            let clamped: Vec<f64> = n.iter().map(|&k| (k as f64 / total as f64).max(HINDSIGHT_FLOOR)).collect();
            SimplexVector::normalized(clamped).expect("clamped frequencies are positive")
        })
        .collect()
}

/// Per-record loss of the hindsight in-weight comparator.
fn hindsight_losses(ledger: &RegretLedger) -> Vec<f64> {
    let w = hindsight_weights(ledger);
    ledger.records().iter().map(|r| -w[r.iw as usize].get(r.label as usize).ln()).collect()
}

/// `sum loss_f - sum loss(g*)` against `Regret(alpha) + Regret(g)`.
pub fn check_prop2(ledger: &RegretLedger) -> Result<RegretReport> {
    if ledger.is_empty() {
        return Err(Error::EmptyLedger);
    }
    let a_star = alpha_star_all(ledger);
    let g_star = hindsight_losses(ledger);
    let (mut lhs, mut regret_alpha, mut regret_g) = (Sum::default(), Sum::default(), Sum::default());
    for (r, &gs) in ledger.records().iter().zip(&g_star) {
        lhs.add(r.loss_f - gs);
        regret_alpha.add((r.alpha - a_star[r.gate as usize]) * (r.loss_g - r.loss_h));
        regret_g.add(r.loss_g - gs);
    }
    Ok(RegretReport::new(lhs.value(), regret_alpha.value() + regret_g.value()))
}

/// Decomposition against the best-in-hindsight gated predictor: keys with `alpha* = 1`
/// charge the in-weight regret, the others the in-context regret.
pub fn check_prop_b1(ledger: &RegretLedger) -> Result<RegretReport> {
    if ledger.is_empty() {
        return Err(Error::EmptyLedger);
    }
    let a_star = alpha_star_all(ledger);
    let g_star = hindsight_losses(ledger);
    let (mut lhs, mut regret_alpha, mut regret_iw, mut regret_ic) = (Sum::default(), Sum::default(), Sum::default(), Sum::default());
    for (r, &gs) in ledger.records().iter().zip(&g_star) {
        let a = a_star[r.gate as usize];
        let f_star = a * gs + (1.0 - a) * r.loss_h_star;
        lhs.add(r.loss_f - f_star);
        regret_alpha.add((r.alpha - a) * (r.loss_g - r.loss_h));
        if a == 1.0 {
            regret_iw.add(r.loss_g - gs);
        } else {
            regret_ic.add(r.loss_h - r.loss_h_star);
        }
    }
    Ok(RegretReport::new(lhs.value(), regret_alpha.value() + regret_iw.value() + regret_ic.value()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OnlineToBatchReport {
    pub n_x: usize,
    pub average_loss: f64,
    pub min_risk: f64,
    pub regret: f64,
    pub slack: f64,
    pub margin: f64,
    pub holds: bool,
}

/// `3 sqrt(ln(1/0.01) / n)`.
pub fn online_to_batch_slack(n: usize) -> f64 {
    3.0 * ((1.0 / ONLINE_TO_BATCH_CONFIDENCE).ln() / n as f64).sqrt()
}

/// Average online in-weight loss on one key against the best population risk plus
/// average regret and a deviation slack. The key's class supplies `y*`.
pub fn online_to_batch_check(ledger: &RegretLedger, key: &InputKey, base: &BaseDistributionSpec) -> Result<OnlineToBatchReport> {
    let class = key.class().ok_or_else(|| Error::UnknownKey(format!("{key} does not name a class")))?;
    if class >= base.num_classes() {
        return Err(Error::UnknownKey(key.to_string()));
    }
    online_to_batch_check_with(ledger, key, &base.label_distribution(class))
}

/// As [`online_to_batch_check`] with an explicit label distribution.
pub fn online_to_batch_check_with(ledger: &RegretLedger, key: &InputKey, y_star: &SimplexVector) -> Result<OnlineToBatchReport> {
    let idx = ledger.iw_index(key).ok_or_else(|| Error::UnknownKey(key.to_string()))?;
    let g_star = hindsight_losses(ledger);
    let (mut online, mut best) = (Sum::default(), Sum::default());
    let mut n_x = 0;
    for (r, &gs) in ledger.records().iter().zip(&g_star).filter(|(r, _)| r.iw == idx) {
        online.add(r.loss_g);
        best.add(gs);
        n_x += 1;
    }
    if n_x < MIN_ONLINE_TO_BATCH_SAMPLES {
        return Err(Error::InsufficientSamples { needed: MIN_ONLINE_TO_BATCH_SAMPLES, have: n_x });
    }
    let n = n_x as f64;
    let average_loss = online.value() / n;
    let min_risk = y_star.entropy();
    let regret = online.value() - best.value();
    let slack = online_to_batch_slack(n_x);
    let margin = min_risk + regret / n + slack - average_loss;
    Ok(OnlineToBatchReport { n_x, average_loss, min_risk, regret, slack, margin, holds: margin >= -CHECK_TOLERANCE })
}

#[cfg(test)]
mod tests {
    use super::super::ledger::StepLosses;
    use super::*;
    use approx::assert_abs_diff_eq;

    fn key(c: usize, n: u32) -> GateKey {
        GateKey { query: InputKey::Class(c), relevant_count: Some(n) }
    }

    fn ledger_from(steps: &[(GateKey, f64, f64, f64)]) -> RegretLedger {
        let mut led = RegretLedger::new(2);
        for (t, &(k, a, lg, lh)) in steps.iter().enumerate() {
            let lf = a * lg + (1.0 - a) * lh;
            led.push(t as u64 + 1, k, k.query, 0, StepLosses { alpha: a, loss_f: lf, loss_g: lg, loss_h: lh, loss_h_star: lh }).unwrap();
        }
        led
    }

    #[test]
    fn alpha_star_examples() {
        let k = key(0, 1);
        assert_eq!(alpha_star(&ledger_from(&[(k, 0.5, 0.5, 0.5)]), &k).unwrap(), 0);
        assert_eq!(alpha_star(&ledger_from(&[(k, 0.5, 0.3, 0.5)]), &k).unwrap(), 1);
        assert_eq!(alpha_star(&ledger_from(&[(k, 0.5, 0.4, 0.2), (k, 0.5, 0.1, 0.4)]), &k).unwrap(), 1);
        assert!(alpha_star(&ledger_from(&[(k, 0.5, 0.4, 0.2)]), &key(1, 0)).is_err());
    }

    #[test]
    fn oracle_alpha_ties_go_to_in_weight() {
        assert_eq!(oracle_alpha(0.2, 0.2), 1);
        assert_eq!(oracle_alpha(0.1, 0.3), 1);
        assert_eq!(oracle_alpha(0.3, 0.1), 0);
    }

    #[test]
    fn single_equal_step() {
        let k = key(0, 0);
        let led = ledger_from(&[(k, 0.5, 0.7, 0.7)]);
        let r = check_prop2(&led).unwrap();
        assert!(r.holds);
        assert!(check_prop_b1(&led).unwrap().holds);
        assert!(matches!(check_prop2(&RegretLedger::new(2)), Err(Error::EmptyLedger)));
    }

    #[test]
    fn b1_reduces_to_gate_regret_when_in_context_wins_everywhere() {
        let k = key(0, 0);
        let led = ledger_from(&[(k, 0.5, 1.0, 0.2), (k, 0.4, 0.9, 0.1), (k, 0.3, 1.2, 0.3)]);
        let r = check_prop_b1(&led).unwrap();
        let sum_f: f64 = led.records().iter().map(|r| r.loss_f).sum();
        let sum_h: f64 = led.records().iter().map(|r| r.loss_h).sum();
        let regret_alpha: f64 = led.records().iter().map(|r| r.alpha * (r.loss_g - r.loss_h)).sum();
        assert_abs_diff_eq!(r.lhs, sum_f - sum_h, epsilon = 1e-12);
        assert_abs_diff_eq!(r.rhs, regret_alpha, epsilon = 1e-12);
        assert!(r.holds);
    }

    #[test]
    fn binary_entropy_of_noisy_label() {
        let y = SimplexVector::new(vec![0.9, 0.1]).unwrap();
        assert_abs_diff_eq!(y.entropy(), 0.325083, epsilon = 1e-6);
    }

    #[test]
    fn slack_scales_with_inverse_root() {
        assert_abs_diff_eq!(online_to_batch_slack(400), online_to_batch_slack(100) / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(online_to_batch_slack(100), 3.0 * (100f64.ln() / 100.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn online_to_batch_needs_enough_samples() {
        let k = key(0, 0);
        let led = ledger_from(&vec![(k, 0.5, 0.1, 0.1); 99]);
        let y = SimplexVector::one_hot(0, 2);
        assert!(matches!(
            online_to_batch_check_with(&led, &InputKey::Class(0), &y),
            Err(Error::InsufficientSamples { needed: 100, have: 99 })
        ));
    }
}
