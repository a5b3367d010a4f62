//! Configuration files, data tables and the subcommand drivers.
//!
//! All floating-point columns are written with 17 significant digits so
//! every table reads back bit-exactly. Node and time indices are 1-based in
//! files and 0-based in memory.

mod config;
mod run;

pub use config::{
    read_matrix_csv, CalibrateConfig, FlowConfig, HyperPrior, OperatorFamily, RunConfig, SampleConfig, SampleModel,
    SummarizeConfig, TestConfig, SCHEMA,
};
pub use run::{
    read_edge_list, run_calibrate, run_flow, run_sample, run_summarize, run_test, write_edge_list, CalibrationRun,
    FlowRun,
};
