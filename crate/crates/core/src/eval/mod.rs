//! Datasets, stand-alone training of searched architectures, and the
//! experiment protocols built on top of the search.

mod data;
mod experiments;
mod standalone;

pub use data::{
    encode_idx_images, encode_idx_labels, make_dataset, parse_idx_images, parse_idx_labels,
    Dataset, DatasetSpec, Splits, IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC,
};
pub use experiments::{
    accuracy_non_decreasing, last_quartile_violation, multi_target_experiment, summarize,
    sweep_lambda, write_sweep, write_traces, SweepRow, TargetRun, TargetSummary, SWEEP_HEADER,
    TRACE_HEADER,
};
pub use standalone::{
    train_network, train_standalone, write_reports, EvalConfig, EvalReport, REPORT_HEADER,
};
