//! Front end for `gaussmetric`: TOML configs in, JSON reports out.

pub mod cache;
pub mod config;
pub mod run;

pub use config::{RunConfig, Task};
pub use run::{run, Failure, Outcome};
