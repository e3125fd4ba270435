//! Optimizer, schedule, and training protocols.

mod optim;
mod run;

pub use optim::{adamw_step, lr_at, AdamHyper, AdamState, TrainableSet};
pub use run::{
    apply_mlm_mask, curriculum_plan, finetune, metrics_to_csv, mlm_items_from_examples,
    mlm_items_from_parallel, mlm_train, pretrain_qcross, qcross_for_langs, stream_rng,
    write_metrics_csv, FinetuneOutcome, MetricsRow, MlmOutcome, Phase, Protocol, TrainConfig,
    MLM_MASK_RATE, STREAM_INIT,
};
