//! Gated model `f = alpha g + (1 - alpha) h`, its online training step, and the regret ledger.

pub mod alpha;
pub mod bilevel;
pub mod ledger;
pub mod regret;

pub use alpha::{alpha_learning_rate, alpha_update, AlphaTable, GateKey, GateKeyRule};
pub use bilevel::{bilevel_step, gated_predict, GatedLearner, ModelVariant, StepRecord};
pub use ledger::{LedgerRecord, RegretLedger, StepLosses};
pub use regret::{
    alpha_star, check_prop2, check_prop_b1, hindsight_weights, online_to_batch_check, online_to_batch_check_with, oracle_alpha,
    OnlineToBatchReport, RegretReport,
};
