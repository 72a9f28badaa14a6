use iclab::gating::{
    alpha_star, check_prop2, check_prop_b1, gated_predict, online_to_batch_check_with, AlphaTable, GateKey, GateKeyRule, RegretLedger,
    StepLosses,
};
use iclab::predictors::{InWeightTable, InputKey, IwBackend};
use iclab::{cross_entropy, RngSpec, SimplexVector};
use proptest::prelude::*;
use rand::Rng;

fn random_simplex<R: Rng>(c: usize, rng: &mut R) -> SimplexVector {
    // occasional near-degenerate coordinates give large losses
    let w: Vec<f64> = (0..c)
        .map(|_| if rng.random::<f64>() < 0.1 { 1e-9 } else { rng.random::<f64>() + 1e-6 })
        .collect();
    SimplexVector::normalized(w).unwrap()
}

/// Ledger driven by arbitrary in-weight / in-context predictions; the gate follows
/// the real update unless `random_alpha` is set.
fn random_ledger(seed: u64, steps: u64, c: usize, keys: usize, random_alpha: bool) -> (RegretLedger, AlphaTable) {
    let mut rng = RngSpec::new(seed, 0).draw(0);
    let mut ledger = RegretLedger::new(c);
    let mut gate = AlphaTable::new();
    for t in 1..=steps {
        let q = InputKey::Class(rng.random_range(0..keys));
        let key = GateKey { query: q, relevant_count: Some(rng.random_range(0..2)) };
        let label = rng.random_range(0..c);
        let (g, h) = (random_simplex(c, &mut rng), random_simplex(c, &mut rng));
        let alpha = if random_alpha { rng.random::<f64>() } else { gate.alpha(&key) };
        let y = SimplexVector::one_hot(label, c);
        let loss_f = cross_entropy(&gated_predict(alpha, &g, &h).unwrap(), &y).unwrap();
        let loss_g = cross_entropy(&g, &y).unwrap();
        let loss_h = cross_entropy(&h, &y).unwrap();
        let loss_h_star = loss_h * rng.random::<f64>();
        ledger.push(t, key, q, label, StepLosses { alpha, loss_f, loss_g, loss_h, loss_h_star }).unwrap();
        gate.observe(key, loss_g - loss_h);
    }
    (ledger, gate)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decompositions_hold_on_random_ledgers(seed in any::<u64>(), steps in 1u64..400, c in 2usize..6, keys in 1usize..5, random_alpha in any::<bool>()) {
        let (ledger, _) = random_ledger(seed, steps, c, keys, random_alpha);
        let p2 = check_prop2(&ledger).unwrap();
        prop_assert!(p2.holds, "{p2:?}");
        let b1 = check_prop_b1(&ledger).unwrap();
        prop_assert!(b1.holds, "{b1:?}");
    }

    #[test]
    fn hindsight_gate_follows_cumulative_difference(seed in any::<u64>(), steps in 1u64..300) {
        let (ledger, gate) = random_ledger(seed, steps, 3, 3, false);
        for (key, entry) in gate.entries() {
            let expect = u8::from(entry.cum_loss_diff < 0.0);
            prop_assert_eq!(alpha_star(&ledger, key).unwrap(), expect);
        }
    }
}

#[test]
fn gate_key_counts_matching_context_keys() {
    let ctx = [InputKey::Class(2), InputKey::Class(4), InputKey::Class(2)];
    let k = GateKey::new(GateKeyRule::QueryAndRelevanceKey, InputKey::Class(2), ctx);
    assert_eq!(k.to_string(), "c2/2");
    let k = GateKey::new(GateKeyRule::QueryKey, InputKey::Class(2), ctx);
    assert_eq!(k.relevant_count, None);
}

#[test]
fn kt_stream_passes_online_to_batch() {
    let y_star = SimplexVector::new(vec![0.7, 0.2, 0.1]).unwrap();
    let mut rng = RngSpec::new(17, 0).draw(0);
    let mut table = InWeightTable::new(3, IwBackend::Kt);
    let mut ledger = RegretLedger::new(3);
    let key = InputKey::Class(0);
    let gk = GateKey { query: key, relevant_count: None };
    for t in 1..=5000u64 {
        let u = rng.random::<f64>();
        let label = if u < 0.7 { 0 } else if u < 0.9 { 1 } else { 2 };
        let loss = -table.predict(&key).get(label).ln();
        ledger.push(t, gk, key, label, StepLosses { alpha: 1.0, loss_f: loss, loss_g: loss, loss_h: 1.0, loss_h_star: 1.0 }).unwrap();
        table.update(key, label).unwrap();
    }
    let r = online_to_batch_check_with(&ledger, &key, &y_star).unwrap();
    assert!(r.holds, "{r:?}");
    assert!(r.regret > 0.0);
    assert!(r.average_loss > r.min_risk - r.slack);
}
