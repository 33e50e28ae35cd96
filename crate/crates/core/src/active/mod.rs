//! Acquisition: score the unlabeled pool by mean predicted variance, select
//! under a budget, and run the experimental arms end to end.

mod pipeline;
mod pool;
mod select;

pub use pipeline::{
    evaluate, pretrain, run_arm, run_pipeline, Arm, ArmOutcome, LoadedPool, PipelineConfig, RoundRecord, RunReport,
};
pub use pool::{score_images, score_pool, PoolEntry, PoolManifest, ScoredSample};
pub use select::{select_random, top_k, AcquisitionStrategy, SelectionResult, StrategyKind};
