//! Synthetic base distribution over `(x, y)` and example-sequence sampling.
//!
//! Labels come from a two-component mixture: uniform over the high-frequency classes
//! with mass `p_high`, uniform over the low-frequency classes with the remainder.
//! Inputs are the class prototype plus isotropic Gaussian noise, renormalized onto
//! the unit sphere. Contexts are `L` i.i.d. base pairs, conditioned on whether they
//! contain the query's class.

use crate::error::{Error, Result};
use crate::example::{norm, ExampleSequence, LabeledPair, UNIT_NORM_TOLERANCE};
use crate::rng::{streams, RngSpec};
use crate::simplex::SimplexVector;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_REJECTION: usize = 10_000;

/// Serializable parameters of the base distribution. Prototypes are drawn from a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseParams {
    pub d: usize,
    pub high_classes: Vec<usize>,
    pub low_classes: Vec<usize>,
    pub p_high: f64,
    pub sigma: f64,
    #[serde(default)]
    pub p_label: f64,
    /// Also apply label noise to context labels, not only to the query target.
    #[serde(default)]
    pub noise_context_labels: bool,
}

impl BaseParams {
    pub fn num_classes(&self) -> usize {
        self.high_classes.len() + self.low_classes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.num_classes();
        if c < 2 {
            return Err(Error::InvalidSpec(format!("need at least 2 classes, got {c}")));
        }
        if self.d == 0 {
            return Err(Error::InvalidSpec("input dimension must be positive".into()));
        }
        if self.high_classes.is_empty() || self.low_classes.is_empty() {
            return Err(Error::InvalidSpec("both class groups must be nonempty".into()));
        }
        let mut seen = vec![false; c];
        for &k in self.high_classes.iter().chain(&self.low_classes) {
            if k >= c || seen[k] {
                return Err(Error::InvalidSpec(format!(
                    "class sets must be disjoint and cover 0..{c}; offending class {k}"
                )));
            }
            seen[k] = true;
        }
        if !(0.0..=1.0).contains(&self.p_high) {
            return Err(Error::InvalidSpec(format!("p_high={} outside [0,1]", self.p_high)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidSpec(format!("sigma={} must be nonnegative", self.sigma)));
        }
        if !(0.0..1.0).contains(&self.p_label) {
            return Err(Error::InvalidSpec(format!("p_label={} outside [0,1)", self.p_label)));
        }
        Ok(())
    }
}

/// Which class group a label belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassGroup {
    #[serde(rename = "C_H")]
    High,
    #[serde(rename = "C_L")]
    Low,
}

impl ClassGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassGroup::High => "C_H",
            ClassGroup::Low => "C_L",
        }
    }
}

/// The base distribution with its prototypes fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseDistributionSpec {
    pub params: BaseParams,
    /// Indexed by class.
    pub prototypes: Vec<Vec<f64>>,
}

impl BaseDistributionSpec {
    pub fn new(params: BaseParams, prototypes: Vec<Vec<f64>>) -> Result<Self> {
        params.validate()?;
        if prototypes.len() != params.num_classes() {
            return Err(Error::DimensionMismatch { expected: params.num_classes(), actual: prototypes.len() });
        }
        for p in &prototypes {
            if p.len() != params.d {
                return Err(Error::DimensionMismatch { expected: params.d, actual: p.len() });
            }
            if (norm(p) - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::InvalidSpec("prototype is not unit norm".into()));
            }
        }
        // In one dimension only two unit vectors exist, so collisions are expected there.
        if params.d >= 2 {
            for i in 0..prototypes.len() {
                for j in i + 1..prototypes.len() {
                    if prototypes[i] == prototypes[j] {
                        return Err(Error::InvalidSpec(format!("classes {i} and {j} share a prototype")));
                    }
                }
            }
        }
        Ok(Self { params, prototypes })
    }

    /// Draws prototypes from the `PROTOTYPES` stream of `seed`.
    pub fn from_seed(params: BaseParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let protos = init_prototypes(params.num_classes(), params.d, RngSpec::new(seed, streams::PROTOTYPES));
        Self::new(params, protos)
    }

    pub fn num_classes(&self) -> usize {
        self.params.num_classes()
    }

    pub fn group_of(&self, class: usize) -> Result<ClassGroup> {
        if self.params.high_classes.contains(&class) {
            Ok(ClassGroup::High)
        } else if self.params.low_classes.contains(&class) {
            Ok(ClassGroup::Low)
        } else {
            Err(Error::UnknownLabel(class))
        }
    }

    pub fn classes_in(&self, group: ClassGroup) -> &[usize] {
        match group {
            ClassGroup::High => &self.params.high_classes,
            ClassGroup::Low => &self.params.low_classes,
        }
    }

    /// Marginal probability of a (clean) class.
    pub fn class_prob(&self, class: usize) -> f64 {
        let p = &self.params;
        if p.high_classes.contains(&class) {
            p.p_high / p.high_classes.len() as f64
        } else if p.low_classes.contains(&class) {
            (1.0 - p.p_high) / p.low_classes.len() as f64
        } else {
            0.0
        }
    }

    /// Observed-label distribution given the latent class (the `y*(x)` of that class).
    pub fn label_distribution(&self, class: usize) -> SimplexVector {
        let c = self.num_classes();
        let mut probs = vec![0.0; c];
        probs[class] += 1.0 - self.params.p_label;
        probs[(class + 1) % c] += self.params.p_label;
        SimplexVector::from_raw(probs)
    }

    pub fn sample_label<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let p = &self.params;
        let group = if rng.random::<f64>() < p.p_high { &p.high_classes } else { &p.low_classes };
        group[rng.random_range(0..group.len())]
    }

    /// Exact draw from the label distribution restricted to classes other than `excluded`.
    fn sample_label_excluding<R: Rng + ?Sized>(&self, excluded: usize, rng: &mut R) -> Option<usize> {
        let c = self.num_classes();
        let total: f64 = (0..c).filter(|&k| k != excluded).map(|k| self.class_prob(k)).sum();
        if total <= 0.0 {
            return None;
        }
        let mut u = rng.random::<f64>() * total;
        let mut last = None;
        for k in (0..c).filter(|&k| k != excluded) {
            let pk = self.class_prob(k);
            if pk <= 0.0 {
                continue;
            }
            last = Some(k);
            if u < pk {
                return Some(k);
            }
            u -= pk;
        }
        last
    }

    /// Normalized, perturbed prototype of `class`.
    pub fn sample_input<R: Rng + ?Sized>(&self, class: usize, rng: &mut R) -> Vec<f64> {
        let proto = &self.prototypes[class];
        let sigma = self.params.sigma;
        if sigma == 0.0 {
            return proto.clone();
        }
        loop {
            let v: Vec<f64> = proto.iter().map(|&p| p + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
            let n = norm(&v);
            if n > 0.0 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }

    /// Label shift used for out-of-base-distribution evaluation: next class within its group.
    pub fn oobd_shift(&self, label: usize) -> Result<usize> {
        for group in [&self.params.high_classes, &self.params.low_classes] {
            if let Some(pos) = group.iter().position(|&k| k == label) {
                return Ok(group[(pos + 1) % group.len()]);
            }
        }
        Err(Error::UnknownLabel(label))
    }
}

/// Prototypes drawn uniformly from the unit sphere, one counter-based draw per class.
pub fn init_prototypes(num_classes: usize, d: usize, rng: RngSpec) -> Vec<Vec<f64>> {
    (0..num_classes)
        .map(|class| {
            let mut r = rng.draw(class as u64);
            loop {
                let v: Vec<f64> = (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
                let n = norm(&v);
                if n > 1e-12 {
                    break v.into_iter().map(|x| x / n).collect();
                }
            }
        })
        .collect()
}

/// Keeps `label` with probability `1 - p_label`, otherwise returns `(label + 1) mod C`.
pub fn apply_label_noise<R: Rng + ?Sized>(label: usize, num_classes: usize, p_label: f64, rng: &mut R) -> usize {
    if p_label > 0.0 && rng.random::<f64>() < p_label {
        (label + 1) % num_classes
    } else {
        label
    }
}

/// A single base pair with label noise applied.
pub fn sample_base_pair<R: Rng + ?Sized>(spec: &BaseDistributionSpec, rng: &mut R) -> LabeledPair {
    let class = spec.sample_label(rng);
    let input = spec.sample_input(class, rng);
    let label = apply_label_noise(class, spec.num_classes(), spec.params.p_label, rng);
    LabeledPair { input, label }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSpec {
    #[serde(rename = "L")]
    pub len: usize,
    pub p_relevant: f64,
    /// When set, relevant contexts carry exactly this many query-class pairs.
    #[serde(rename = "L_relevant", default, skip_serializing_if = "Option::is_none")]
    pub relevant_count: Option<usize>,
    #[serde(default = "default_max_rejection")]
    pub max_rejection: usize,
}

fn default_max_rejection() -> usize {
    DEFAULT_MAX_REJECTION
}

impl ContextSpec {
    pub fn validate(&self) -> Result<()> {
        if self.len == 0 {
            return Err(Error::InvalidSpec("context length must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p_relevant) {
            return Err(Error::InvalidSpec(format!("p_relevant={} outside [0,1]", self.p_relevant)));
        }
        if let Some(m) = self.relevant_count {
            if m == 0 || m > self.len {
                return Err(Error::InvalidSpec(format!("L_relevant={m} must lie in 1..={}", self.len)));
            }
        }
        if self.max_rejection == 0 {
            return Err(Error::InvalidSpec("max_rejection must be positive".into()));
        }
        Ok(())
    }
}

/// Optional overrides used by evaluation to condition on a cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Conditioning {
    pub class: Option<usize>,
    pub relevant: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub example: ExampleSequence,
    /// The rejection cap was hit and the context was repaired by force-placement.
    pub fallback: bool,
}

pub fn sample_example<R: Rng + ?Sized>(
    base: &BaseDistributionSpec,
    ctx: &ContextSpec,
    rng: &mut R,
) -> Result<Sampled> {
    sample_example_with(base, ctx, Conditioning::default(), rng)
}

pub fn sample_example_with<R: Rng + ?Sized>(
    base: &BaseDistributionSpec,
    ctx: &ContextSpec,
    cond: Conditioning,
    rng: &mut R,
) -> Result<Sampled> {
    let class = match cond.class {
        Some(c) if c >= base.num_classes() => return Err(Error::UnknownLabel(c)),
        Some(c) => c,
        None => base.sample_label(rng),
    };
    let query = base.sample_input(class, rng);
    let want_relevant = cond.relevant.unwrap_or_else(|| rng.random::<f64>() < ctx.p_relevant);

    let mut fallback = false;
    let labels: Vec<usize> = match (want_relevant, ctx.relevant_count) {
        (true, Some(m)) => {
            let forced = sample_indices(rng, ctx.len, m);
            let mut labels = vec![class; ctx.len];
            let mut is_forced = vec![false; ctx.len];
            forced.iter().for_each(|i| is_forced[i] = true);
            for (slot, label) in labels.iter_mut().enumerate() {
                if !is_forced[slot] {
                    *label = base
                        .sample_label_excluding(class, rng)
                        .ok_or(Error::RejectionCapExceeded { attempts: 0 })?;
                }
            }
            labels
        }
        _ => {
            let mut labels = Vec::with_capacity(ctx.len);
            let mut accepted = false;
            for _ in 0..ctx.max_rejection {
                labels.clear();
                labels.extend((0..ctx.len).map(|_| base.sample_label(rng)));
                if labels.contains(&class) == want_relevant {
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                fallback = true;
                if want_relevant {
                    let slot = rng.random_range(0..ctx.len);
                    labels[slot] = class;
                } else {
                    for label in labels.iter_mut().filter(|l| **l == class) {
                        *label = base
                            .sample_label_excluding(class, rng)
                            .ok_or(Error::RejectionCapExceeded { attempts: ctx.max_rejection })?;
                    }
                }
            }
            labels
        }
    };

    let c = base.num_classes();
    let p_label = base.params.p_label;
    let context: Vec<LabeledPair> = labels
        .into_iter()
        .map(|label| {
            let input = base.sample_input(label, rng);
            let label = if base.params.noise_context_labels {
                apply_label_noise(label, c, p_label, rng)
            } else {
                label
            };
            LabeledPair { input, label }
        })
        .collect();
    let target = apply_label_noise(class, c, p_label, rng);

    Ok(Sampled { example: ExampleSequence::assemble(context, query, target, class), fallback })
}

/// Cyclically shifts every label within its class group. Inputs are untouched.
pub fn make_oobd(ex: &ExampleSequence, base: &BaseDistributionSpec) -> Result<ExampleSequence> {
    let context = ex
        .context
        .iter()
        .map(|p| Ok(LabeledPair { input: p.input.clone(), label: base.oobd_shift(p.label)? }))
        .collect::<Result<Vec<_>>>()?;
    let target = base.oobd_shift(ex.target_label)?;
    Ok(ExampleSequence::assemble(context, ex.query.clone(), target, ex.query_class))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example::dot;
    use proptest::prelude::*;

    pub(crate) fn params(d: usize, sigma: f64) -> BaseParams {
        BaseParams {
            d,
            high_classes: (0..5).collect(),
            low_classes: (5..10).collect(),
            p_high: 0.9,
            sigma,
            p_label: 0.0,
            noise_context_labels: false,
        }
    }

    fn ctx(len: usize, p_relevant: f64) -> ContextSpec {
        ContextSpec { len, p_relevant, relevant_count: None, max_rejection: DEFAULT_MAX_REJECTION }
    }

    #[test]
    fn one_dimensional_prototypes_are_signs() {
        for p in init_prototypes(6, 1, RngSpec::new(3, 0)) {
            assert!(p[0] == 1.0 || p[0] == -1.0);
        }
    }

    #[test]
    fn prototypes_are_unit_and_nearly_orthogonal() {
        let protos = init_prototypes(1000, 64, RngSpec::new(11, streams::PROTOTYPES));
        assert!(protos.iter().all(|p| (norm(p) - 1.0).abs() < 1e-9));
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..protos.len() {
            for j in i + 1..protos.len() {
                sum += dot(&protos[i], &protos[j]);
                count += 1;
            }
        }
        assert!((sum / count as f64).abs() < 0.02);
    }

    #[test]
    fn zero_noise_returns_prototype() {
        let base = BaseDistributionSpec::from_seed(params(16, 0.0), 1).unwrap();
        let mut rng = RngSpec::new(1, 9).draw(0);
        for _ in 0..50 {
            let pair = sample_base_pair(&base, &mut rng);
            assert_eq!(pair.input, base.prototypes[pair.label]);
        }
    }

    #[test]
    fn class_marginals_match_mixture() {
        let base = BaseDistributionSpec::from_seed(params(4, 0.0), 2).unwrap();
        let mut rng = RngSpec::new(2, 9).draw(0);
        let n = 1_000_000;
        let mut counts = [0usize; 10];
        for _ in 0..n {
            counts[base.sample_label(&mut rng)] += 1;
        }
        for (k, &cnt) in counts.iter().enumerate() {
            let expected = if k < 5 { 0.18 } else { 0.02 };
            assert!((cnt as f64 / n as f64 - expected).abs() < 0.002, "class {k}: {cnt}");
        }
    }

    #[test]
    fn degenerate_mixture_never_draws_low() {
        let mut p = params(4, 0.0);
        p.p_high = 1.0;
        let base = BaseDistributionSpec::from_seed(p, 2).unwrap();
        let mut rng = RngSpec::new(2, 9).draw(1);
        assert!((0..10_000).all(|_| base.sample_label(&mut rng) < 5));
    }

    #[test]
    fn label_noise_rate_and_wraparound() {
        let mut rng = RngSpec::new(5, 5).draw(0);
        assert!((0..1000).all(|_| apply_label_noise(3, 10, 0.0, &mut rng) == 3));
        assert!((0..1000).all(|_| apply_label_noise(9, 10, 0.999_999_999, &mut rng) == 0));
        let n = 1_000_000;
        let flips = (0..n).filter(|_| apply_label_noise(2, 10, 0.1, &mut rng) != 2).count();
        assert!((flips as f64 / n as f64 - 0.1).abs() < 0.001);
    }

    #[test]
    fn single_slot_relevant_context_is_target_class() {
        let base = BaseDistributionSpec::from_seed(params(8, 0.2), 3).unwrap();
        let spec = ctx(1, 1.0);
        for i in 0..200 {
            let s = sample_example(&base, &spec, &mut RngSpec::new(3, 2).draw(i)).unwrap();
            assert_eq!(s.example.context.len(), 1);
            assert_eq!(s.example.context[0].label, s.example.target_label);
            assert!(s.example.relevant);
        }
    }

    #[test]
    fn forced_relevant_count_is_exact() {
        let base = BaseDistributionSpec::from_seed(params(8, 0.2), 3).unwrap();
        let spec = ContextSpec { relevant_count: Some(2), ..ctx(4, 1.0) };
        for i in 0..200 {
            let ex = sample_example(&base, &spec, &mut RngSpec::new(3, 2).draw(i)).unwrap().example;
            assert_eq!(ex.context.iter().filter(|p| p.label == ex.target_label).count(), 2);
        }
    }

    #[test]
    fn relevance_rate_matches_p_relevant() {
        let base = BaseDistributionSpec::from_seed(params(4, 0.0), 4).unwrap();
        let spec = ctx(2, 0.9);
        let n = 100_000;
        let relevant = (0..n)
            .filter(|&i| sample_example(&base, &spec, &mut RngSpec::new(4, 2).draw(i)).unwrap().example.relevant)
            .count();
        assert!((relevant as f64 / n as f64 - 0.9).abs() < 0.005);
    }

    #[test]
    fn rejection_cap_falls_back() {
        let base = BaseDistributionSpec::from_seed(params(4, 0.0), 4).unwrap();
        let spec = ContextSpec { max_rejection: 1, ..ctx(1, 1.0) };
        let mut fallbacks = 0;
        for i in 0..500 {
            let s = sample_example_with(&base, &spec, Conditioning { class: Some(7), relevant: None }, &mut RngSpec::new(4, 2).draw(i)).unwrap();
            assert!(s.example.relevant);
            fallbacks += usize::from(s.fallback);
        }
        assert!(fallbacks > 400);
    }

    #[test]
    fn impossible_irrelevant_context_errors() {
        let p = BaseParams { high_classes: vec![0], low_classes: vec![1], p_high: 1.0, ..params(2, 0.0) };
        let base = BaseDistributionSpec::from_seed(p, 1).unwrap();
        let spec = ContextSpec { max_rejection: 10, ..ctx(1, 0.0) };
        let r = sample_example(&base, &spec, &mut RngSpec::new(1, 1).draw(0));
        assert!(matches!(r, Err(Error::RejectionCapExceeded { .. })));
    }

    #[test]
    fn oobd_shift_examples() {
        let base = BaseDistributionSpec::from_seed(params(4, 0.0), 1).unwrap();
        assert_eq!(base.oobd_shift(4).unwrap(), 0);
        assert_eq!(base.oobd_shift(7).unwrap(), 8);
        assert_eq!(base.oobd_shift(9).unwrap(), 5);
        assert!(matches!(base.oobd_shift(10), Err(Error::UnknownLabel(10))));
        let mut label = 3;
        for _ in 0..5 {
            label = base.oobd_shift(label).unwrap();
        }
        assert_eq!(label, 3);
    }

    #[test]
    fn spec_validation() {
        let mut p = params(4, 0.0);
        p.low_classes = vec![4, 5, 6, 7, 8];
        assert!(p.validate().is_err());
        let mut p = params(4, 0.0);
        p.p_label = 1.0;
        assert!(p.validate().is_err());
        let base = BaseDistributionSpec::from_seed(params(4, 0.0), 1).unwrap();
        let mut protos = base.prototypes.clone();
        protos[1] = protos[0].clone();
        assert!(BaseDistributionSpec::new(params(4, 0.0), protos).is_err());
        assert!(ContextSpec { relevant_count: Some(3), ..ctx(2, 0.5) }.validate().is_err());
    }

    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 { a } else { gcd(b, a % b) }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sampled_examples_are_consistent(
            seed in 0u64..1000,
            d in 1usize..12,
            sigma in 0.0f64..1.0,
            n_high in 1usize..5,
            n_low in 1usize..5,
            len in 1usize..5,
            p_relevant in 0.0f64..=1.0,
            p_label in 0.0f64..0.5,
            noisy_ctx: bool,
        ) {
            let p = BaseParams {
                d,
                high_classes: (0..n_high).collect(),
                low_classes: (n_high..n_high + n_low).collect(),
                p_high: 0.8,
                sigma,
                p_label,
                noise_context_labels: noisy_ctx,
            };
            let base = BaseDistributionSpec::new(p, init_prototypes(n_high + n_low, d, RngSpec::new(seed, 1))).unwrap();
            let spec = ctx(len, p_relevant);
            for i in 0..20 {
                let ex = sample_example(&base, &spec, &mut RngSpec::new(seed, 2).draw(i)).unwrap().example;
                prop_assert_eq!(ex.context.len(), len);
                prop_assert_eq!(ex.relevant, ex.context.iter().any(|q| q.label == ex.target_label));
                prop_assert!((norm(&ex.query) - 1.0).abs() < 1e-9);
                for q in &ex.context {
                    prop_assert!((norm(&q.input) - 1.0).abs() < 1e-9);
                }
                let shifted = make_oobd(&ex, &base).unwrap();
                prop_assert_eq!(shifted.relevant, ex.relevant);
                prop_assert_eq!(&shifted.query, &ex.query);
                let cycle = n_high * n_low / gcd(n_high, n_low);
                let mut back = ex.clone();
                for _ in 0..cycle {
                    back = make_oobd(&back, &base).unwrap();
                }
                prop_assert_eq!(back, ex);
            }
        }
    }
}
