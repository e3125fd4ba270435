//! Deterministic, side-effect-free evaluation: accuracy over labeled
//! datasets, zero-shot transfer matrices, and attention-pattern stability.

mod run;
mod stability;
mod transfer;

pub use run::{evaluate, write_predictions, EvalOutcome, EvalSetting, Prediction, ANCHOR_LANG};
pub use stability::{attention_stability, jsd_base2, StabilityReport};
pub use transfer::{
    in_language_cells, transfer_matrix, zero_shot_cells, TransferCellSummary, TransferReport,
    TransferRow,
};
