//! Batch front-end: reads a run configuration, dispatches one simulation
//! scenario and writes CSV results with a `metadata.json` sidecar.

pub mod config;
pub mod run;

pub use config::{parse_config, ConfigError, RunConfig, Scenario};
pub use run::{run, Artifact, RunError, RunSummary};

/// Sizes the global worker pool. `None` keeps rayon's default.
pub fn configure_threads(threads: Option<usize>) -> Result<(), RunError> {
    match threads {
        None => Ok(()),
        Some(0) => Err(RunError::Config(ConfigError {
            problems: vec!["threads: must be at least 1".into()],
        })),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| RunError::Numerical {
                context: "thread pool",
                message: e.to_string(),
            }),
    }
}
