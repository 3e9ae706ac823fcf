//! Experiment configuration, trace ingestion and result files.

pub mod config;
pub mod experiment;
pub mod ingest;
pub mod output;

pub use config::{
    validate_config, EtaSpec, ExperimentConfig, GridSpec, MarketKind, MarketSpec, Overrides, RenewableSpec,
    ValidationReport, WmaSpec, SCHEMA_VERSION,
};
pub use experiment::{
    oracle_report, run_experiment, run_file_name, run_single, to_rounded_json, write_json, write_sweep_csv, Experiment,
    OracleReport, SweepResult, SweepRow,
};
pub use ingest::{
    ingest_price_traces, ingest_wind_trace, read_distribution_dump, read_price_trace, write_distribution_dump,
    PriceIngest,
};
pub use output::{fmt_num, round_sig};
