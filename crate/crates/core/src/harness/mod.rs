//! Synthetic generators, seeded experiment drivers and report writers.

pub mod bench;
pub mod proxy_exp;
pub mod rates;
pub mod report;
pub mod seeds;
pub mod synth;

pub use bench::{crossvalidate, run_realdata_benchmark, BenchConfig, BenchReport, CvGrids, HyperParams};
pub use proxy_exp::{run_proxy_scan, ProxyScanConfig, ProxyScanReport};
pub use rates::{run_rate_experiment, RateConfig, RateReport};
pub use seeds::child_seed;
pub use synth::{synth_dataset, CustomLink, Link, SyntheticSpec};
