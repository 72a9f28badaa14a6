use crate::datagen::{BaseParams, ClassGroup, ContextSpec, DEFAULT_MAX_REJECTION};
use crate::error::{Error, Result};
use crate::gating::{GateKeyRule, ModelVariant};
use crate::predictors::{IwBackend, KeyingRule};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "IBD")]
    Ibd,
    #[serde(rename = "OOBD")]
    Oobd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextKind {
    Relevant,
    Irrelevant,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Ibd => "IBD",
            Split::Oobd => "OOBD",
        }
    }
}

impl ContextKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ContextKind::Relevant => "relevant",
            ContextKind::Irrelevant => "irrelevant",
        }
    }
}

/// One evaluation condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub split: Split,
    pub context: ContextKind,
    pub class_group: ClassGroup,
}

impl Cell {
    /// All eight cells: split-major, then context, then class group.
    pub fn all() -> Vec<Cell> {
        let mut cells = Vec::with_capacity(8);
        for split in [Split::Ibd, Split::Oobd] {
            for context in [ContextKind::Relevant, ContextKind::Irrelevant] {
                for class_group in [ClassGroup::High, ClassGroup::Low] {
                    cells.push(Cell { split, context, class_group });
                }
            }
        }
        cells
    }

    /// Index of the sampling stream; the two splits share draws.
    pub fn stream_index(&self) -> u64 {
        let c = match self.context {
            ContextKind::Relevant => 0,
            ContextKind::Irrelevant => 1,
        };
        let g = match self.class_group {
            ClassGroup::High => 0,
            ClassGroup::Low => 1,
        };
        2 * c + g
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}_{}", self.split.as_str(), self.context.as_str(), self.class_group.as_str())
    }
}

fn default_variants() -> Vec<ModelVariant> {
    vec![ModelVariant::IcOnly, ModelVariant::IwOnly, ModelVariant::Gated]
}

fn default_epsilon() -> f64 {
    0.001
}

fn default_bound() -> f64 {
    1.0
}

fn default_h_learning_rate() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_variants")]
    pub variants: Vec<ModelVariant>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(rename = "B", default = "default_bound")]
    pub bound: f64,
    #[serde(default)]
    pub backend: IwBackend,
    #[serde(default)]
    pub keying: KeyingRule,
    #[serde(default)]
    pub gate_key: GateKeyRule,
    #[serde(default)]
    pub learn_h: bool,
    #[serde(default = "default_h_learning_rate")]
    pub h_learning_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variants: default_variants(),
            epsilon: default_epsilon(),
            bound: default_bound(),
            backend: IwBackend::default(),
            keying: KeyingRule::default(),
            gate_key: GateKeyRule::default(),
            learn_h: false,
            h_learning_rate: default_h_learning_rate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(rename = "N")]
    pub n_values: Vec<u64>,
    pub seeds: Vec<u64>,
}

fn default_samples_per_cell() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_samples_per_cell")]
    pub samples_per_cell: usize,
    #[serde(default = "Cell::all")]
    pub conditions: Vec<Cell>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { samples_per_cell: default_samples_per_cell(), conditions: Cell::all() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub base: BaseParams,
    pub ctx: ContextSpec,
    #[serde(default)]
    pub model: ModelConfig,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    /// d = 64, ten classes split 5/5, sigma = 0.2, L = 1, p_high = p_relevant = 0.9,
    /// N = 2^6, 2^8, ..., 2^20 and five seeds.
    pub fn default_preset() -> Self {
        Self {
            base: BaseParams {
                d: 64,
                high_classes: (0..5).collect(),
                low_classes: (5..10).collect(),
                p_high: 0.9,
                sigma: 0.2,
                p_label: 0.0,
                noise_context_labels: false,
            },
            ctx: ContextSpec { len: 1, p_relevant: 0.9, relevant_count: None, max_rejection: DEFAULT_MAX_REJECTION },
            model: ModelConfig::default(),
            sweep: SweepConfig { n_values: (3..=10).map(|k| 1u64 << (2 * k)).collect(), seeds: (0..5).collect() },
            eval: EvalConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.ctx.validate()?;
        let c = self.base.num_classes();
        let m = &self.model;
        if m.variants.is_empty() || m.variants.iter().collect::<HashSet<_>>().len() != m.variants.len() {
            return Err(Error::InvalidSpec("model variants must be nonempty and distinct".into()));
        }
        if !(m.epsilon > 0.0 && m.epsilon * (c as f64) < 1.0) {
            return Err(Error::InvalidSpec(format!("epsilon={} must lie in (0, 1/C)", m.epsilon)));
        }
        if !(m.bound > 0.0 && m.bound.is_finite()) {
            return Err(Error::InvalidSpec(format!("B={} must be positive", m.bound)));
        }
        if !(m.h_learning_rate > 0.0 && m.h_learning_rate.is_finite()) {
            return Err(Error::InvalidSpec("h_learning_rate must be positive".into()));
        }
        if self.sweep.n_values.contains(&0) {
            return Err(Error::InvalidSpec("sweep N values must be positive".into()));
        }
        if self.sweep.seeds.iter().collect::<HashSet<_>>().len() != self.sweep.seeds.len() {
            return Err(Error::InvalidSpec("sweep seeds must be distinct".into()));
        }
        if self.eval.samples_per_cell == 0 {
            return Err(Error::InvalidSpec("samples_per_cell must be at least 1".into()));
        }
        Ok(())
    }
}
