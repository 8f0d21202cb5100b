//! Multi-run sweeps, rank and linear correlation, and report files.

mod data;
mod report;
mod stats;
mod sweep;

pub use data::{load_cifar10_dir, load_mnist_dir, load_split, DatasetId, SYNTHETIC_GROUPS, SYNTHETIC_GROUP_SIZE, SYNTHETIC_NOISE};
pub use report::{emit_report, read_records_csv, write_records_csv};
pub use stats::{average_ranks, correlation_p_value, fit_line, pearson, r_squared, spearman};
pub use sweep::{
    flag_outliers, parameter_values, run_sweep, summarize, ConfigSummary, CorrelationSummary, NamedConfig,
    ParameterSummary, RunRecord, RunStatus, SweepSpec, MIN_RECORDS, OUTLIER_ACTIVITY,
};
