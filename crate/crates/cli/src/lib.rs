//! Library surface of the pipeline CLI: configuration, command
//! implementations, and the error-to-exit-code mapping. The binary in
//! `main.rs` is a thin argument parser over this, so tests can drive whole
//! runs in-process.

pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::CliError;

/// Install the worker-count override before any parallel stage runs.
/// Calling it more than once is fine; later calls keep the first pool.
pub fn init_workers(workers: usize) {
    if workers > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
}
