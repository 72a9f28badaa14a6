use super::config::ExperimentConfig;
use crate::datagen::{sample_example, BaseDistributionSpec, ContextSpec};
use crate::error::Result;
use crate::example::ExampleSequence;
use crate::gating::{bilevel_step, GatedLearner, ModelVariant};
use crate::predictors::{ic_predict, ICLearner, ICPredictorParams, InWeightTable, KeyingRule};
use crate::rng::{streams, RngSpec};
use crate::simplex::cross_entropy_label;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    #[serde(rename = "N")]
    pub n: u64,
    pub seed: u64,
    pub model: ModelVariant,
    /// Examples whose context hit the rejection cap and was repaired.
    pub fallbacks: u64,
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub learner: GatedLearner,
    pub base: BaseDistributionSpec,
    pub summary: RunSummary,
}

/// The context distribution a variant trains on: the pinned variants see only
/// relevant (in-context) or only irrelevant (in-weight) contexts.
pub fn training_context(config: &ExperimentConfig, variant: ModelVariant) -> ContextSpec {
    let mut ctx = config.ctx.clone();
    match variant {
        ModelVariant::IcOnly => ctx.p_relevant = 1.0,
        ModelVariant::IwOnly => ctx.p_relevant = 0.0,
        ModelVariant::Gated => {}
    }
    ctx
}

pub fn fresh_learner(config: &ExperimentConfig, variant: ModelVariant, base: &BaseDistributionSpec) -> Result<GatedLearner> {
    let m = &config.model;
    let c = base.num_classes();
    let params = ICPredictorParams::identity(config.base.d, m.bound, m.epsilon, c)?;
    let prototypes = match m.keying {
        KeyingRule::NearestPrototype => base.prototypes.clone(),
        KeyingRule::ExactInput => Vec::new(),
    };
    Ok(GatedLearner::new(
        variant,
        InWeightTable::new(c, m.backend),
        ICLearner::new(params, m.h_learning_rate),
        m.learn_h,
        m.keying,
        m.gate_key,
        prototypes,
    ))
}

pub fn training_example(base: &BaseDistributionSpec, ctx: &ContextSpec, seed: u64, t: u64) -> Result<(ExampleSequence, bool)> {
    let mut rng = RngSpec::new(seed, streams::TRAIN).draw(t);
    let s = sample_example(base, ctx, &mut rng)?;
    Ok((s.example, s.fallback))
}

/// Streams `n` fresh examples through the online update. With `keep_ledger`, every
/// step is recorded; when `h` is learned, the comparator losses are filled in by
/// replaying the stream against the final `h`.
pub fn run_training(config: &ExperimentConfig, variant: ModelVariant, n: u64, seed: u64, keep_ledger: bool) -> Result<TrainedRun> {
    config.validate()?;
    let base = BaseDistributionSpec::from_seed(config.base.clone(), seed)?;
    let ctx = training_context(config, variant);
    let mut learner = fresh_learner(config, variant, &base)?;
    if keep_ledger {
        learner = learner.with_ledger();
    }
    let mut fallbacks = 0;
    for t in 0..n {
        let (ex, fallback) = training_example(&base, &ctx, seed, t)?;
        fallbacks += u64::from(fallback);
        bilevel_step(&mut learner, &ex, ex.target_label)?;
    }
    if keep_ledger && learner.learn_h && variant != ModelVariant::IwOnly && n > 0 {
        let mut h_star = Vec::with_capacity(n as usize);
        for t in 0..n {
            let (ex, _) = training_example(&base, &ctx, seed, t)?;
            h_star.push(cross_entropy_label(&ic_predict(&learner.ic.params, &ex)?, ex.target_label)?);
        }
        if let Some(ledger) = learner.ledger.as_mut() {
            ledger.set_h_star_losses(&h_star)?;
        }
    }
    Ok(TrainedRun { learner, base, summary: RunSummary { n, seed, model: variant, fallbacks } })
}
