pub mod config;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod linear;
pub mod mixing;
pub mod noise;
pub mod rng;
pub mod run;
pub mod spectral;

pub use config::{load_config, parse_config, save_config, ExperimentConfig, ExperimentKind};
pub use error::{Error, Result};
pub use run::{run_experiment, RunManifest};
