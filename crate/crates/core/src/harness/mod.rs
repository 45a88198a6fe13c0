//! Configuration, file formats, repeated experiments and the CLI.

mod cli;
mod config;
mod experiment;
mod files;
mod report;

pub use cli::{cli_main, cli_main_with, exit_code};
pub use config::{ExperimentConfig, DEFAULT_REAL_COUNTS, DEFAULT_SIZES};
pub use experiment::{
    evaluate, load_test_set, pool_config, run_experiment, run_experiment_with, run_once, run_seed,
    surrogate_test_set, sweep_real_count, sweep_total_size, training_baselines,
};
pub use files::{
    dataset_from_csv, dataset_to_csv, export_heatmap, heatmap_from_csv, heatmap_to_csv, heatmap_to_svg,
    load_dataset, load_labeled_signals, load_signal, parse_signal, save_dataset, save_signal, signal_files,
    signal_to_text, HEATMAP_HEADER,
};
pub use report::{accuracy_of, mean_std, sweep_to_csv, sweep_to_text, Confusion, EvalReport, RunResult, SweepRow};
