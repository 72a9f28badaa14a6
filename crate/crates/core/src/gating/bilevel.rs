//! Online training loop for the gated model: predict, observe, then update `g`, `h`, and the gate.

use super::alpha::{AlphaTable, GateKey, GateKeyRule};
use super::ledger::{RegretLedger, StepLosses};
use crate::error::Result;
use crate::example::ExampleSequence;
use crate::predictors::in_context::{ic_predict, ICLearner};
use crate::predictors::in_weight::InWeightTable;
use crate::predictors::keying::{derive_key, InputKey, KeyingRule};
use crate::simplex::{cross_entropy_label, SimplexVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Gate pinned at 0; only `h` is trained.
    IcOnly,
    /// Gate pinned at 1; only `g` is trained.
    IwOnly,
    Gated,
}

impl ModelVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::IcOnly => "ic_only",
            ModelVariant::IwOnly => "iw_only",
            ModelVariant::Gated => "gated",
        }
    }
}

/// `alpha * g + (1 - alpha) * h`.
pub fn gated_predict(alpha: f64, g_pred: &SimplexVector, h_pred: &SimplexVector) -> Result<SimplexVector> {
    g_pred.mix(alpha, h_pred)
}

#[derive(Debug, Clone)]
pub struct GatedLearner {
    pub variant: ModelVariant,
    pub iw: InWeightTable,
    pub ic: ICLearner,
    pub learn_h: bool,
    pub alpha: AlphaTable,
    pub keying: KeyingRule,
    pub gate_rule: GateKeyRule,
    pub ledger: Option<RegretLedger>,
    prototypes: Vec<Vec<f64>>,
    steps: u64,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: u64,
    pub gate_key: GateKey,
    pub iw_key: InputKey,
    pub label: usize,
    pub prediction: SimplexVector,
    pub losses: StepLosses,
}

/// Keys and component predictions for one example under the current parameters.
#[derive(Debug, Clone)]
pub struct Forward {
    pub iw_key: InputKey,
    pub gate_key: GateKey,
    pub alpha: f64,
    pub g: SimplexVector,
    pub h: SimplexVector,
    pub f: SimplexVector,
}

impl GatedLearner {
    /// `prototypes` may be empty unless `keying` is nearest-prototype.
    pub fn new(
        variant: ModelVariant,
        iw: InWeightTable,
        ic: ICLearner,
        learn_h: bool,
        keying: KeyingRule,
        gate_rule: GateKeyRule,
        prototypes: Vec<Vec<f64>>,
    ) -> Self {
        Self {
            variant,
            iw,
            ic,
            learn_h,
            alpha: AlphaTable::new(),
            keying,
            gate_rule,
            ledger: None,
            prototypes,
            steps: 0,
        }
    }

    /// Keep a per-step ledger from now on.
    pub fn with_ledger(mut self) -> Self {
        self.ledger = Some(RegretLedger::new(self.iw.num_classes()));
        self
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn keys(&self, ex: &ExampleSequence) -> Result<(InputKey, GateKey)> {
        let iw_key = derive_key(self.keying, &ex.query, &self.prototypes)?;
        let context_keys = ex
            .context
            .iter()
            .map(|p| derive_key(self.keying, &p.input, &self.prototypes))
            .collect::<Result<Vec<_>>>()?;
        Ok((iw_key, GateKey::new(self.gate_rule, iw_key, context_keys)))
    }

    pub fn forward(&self, ex: &ExampleSequence) -> Result<Forward> {
        let (iw_key, gate_key) = self.keys(ex)?;
        let alpha = match self.variant {
            ModelVariant::IcOnly => 0.0,
            ModelVariant::IwOnly => 1.0,
            ModelVariant::Gated => self.alpha.alpha(&gate_key),
        };
        let g = self.iw.predict(&iw_key);
        let h = ic_predict(&self.ic.params, ex)?;
        let f = gated_predict(alpha, &g, &h)?;
        Ok(Forward { iw_key, gate_key, alpha, g, h, f })
    }

    pub fn predict(&self, ex: &ExampleSequence) -> Result<SimplexVector> {
        Ok(self.forward(ex)?.f)
    }
}

/// One round of the online protocol. Updates run in the order `g`, `h`, gate.
pub fn bilevel_step(state: &mut GatedLearner, ex: &ExampleSequence, observed_label: usize) -> Result<StepRecord> {
    let fw = state.forward(ex)?;
    let loss_f = cross_entropy_label(&fw.f, observed_label)?;
    let loss_g = cross_entropy_label(&fw.g, observed_label)?;
    let loss_h = cross_entropy_label(&fw.h, observed_label)?;

    if state.variant != ModelVariant::IcOnly {
        state.iw.update(fw.iw_key, observed_label)?;
    }
    if state.learn_h && state.variant != ModelVariant::IwOnly {
        state.ic.update(ex, observed_label)?;
    }
    if state.variant == ModelVariant::Gated {
        // gradient of the linear surrogate alpha * (loss_g - loss_h)
        state.alpha.observe(fw.gate_key, loss_g - loss_h);
    }

    state.steps += 1;
    let losses = StepLosses { alpha: fw.alpha, loss_f, loss_g, loss_h, loss_h_star: loss_h };
    if let Some(ledger) = state.ledger.as_mut() {
        ledger.push(state.steps, fw.gate_key, fw.iw_key, observed_label, losses)?;
    }
    Ok(StepRecord { t: state.steps, gate_key: fw.gate_key, iw_key: fw.iw_key, label: observed_label, prediction: fw.f, losses })
}
