//! The in-context predictor class (kernel softmax over the context) and the
//! in-weight class (a table indexed by the query alone).

pub mod in_context;
pub mod in_weight;
pub mod keying;

pub use in_context::{ic_ce_bounds, ic_l1_bounds, ic_predict, BoundPair, ICLearner, ICPredictorParams};
pub use in_weight::{generalization_bound, kt_excess_bound, InWeightTable, IwBackend};
pub use keying::{derive_key, InputKey, KeyingRule};

use crate::error::Result;
use crate::simplex::SimplexVector;

pub fn iw_update(table: &mut InWeightTable, key: InputKey, observed_label: usize) -> Result<()> {
    table.update(key, observed_label)
}

pub fn iw_predict(table: &InWeightTable, key: &InputKey) -> SimplexVector {
    table.predict(key)
}
