//! Metrics, evaluation protocols, robustness sweeps, timing and reports.

mod bench;
mod metrics;
mod protocol;
mod report;
mod robustness;

pub use bench::{efficiency_bench, loglog_slope, BenchOptions, BenchRow, BenchTable, ATTENTION_MODULE, CONV_MODULE};
pub use metrics::{mae, mse, ErrorAccumulator};
pub use protocol::{
    ablation_run, evaluate, evaluate_multivariate, fit_prepared, input_length_sweep, run_global_linear, run_univariate,
    AblationPair, AblationSwitches, EvalReport, PreparedSeries, UnivariateRun,
};
pub use report::{aligned_table, format_bench, format_reports, write_bench_csv, write_reports_csv, LineChart};
pub use robustness::{perturb, robustness_sweep, NoiseSpec, RobustnessPoint};
