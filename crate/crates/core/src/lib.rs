//! Quantum Fisher information of Gaussian probes under multi-mode
//! dissipative Gaussian channels, and the min-determinant channel metric
//! built from sampled probes.
//!
//! ```
//! use gaussmetric::channel::ChannelPoint;
//! use gaussmetric::gaussian::two_mode_squeezed;
//! use gaussmetric::qfi;
//!
//! let x = ChannelPoint::single(0.2, 0.5, 0.0, 0.0, 1)?;
//! let j = qfi::qfi(&x, &two_mode_squeezed(0.4))?;
//! println!("{}", j.matrix);
//! # Ok::<(), gaussmetric::Error>(())
//! ```

pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod channel;
pub mod qfi;
pub mod oracle;
pub mod probe;
pub mod metric;

pub use error::{Error, Result};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/states.md")]
    mod states {}
    #[doc = include_str!("../../../book/src/channels.md")]
    mod channels {}
    #[doc = include_str!("../../../book/src/qfi.md")]
    mod qfi {}
    #[doc = include_str!("../../../book/src/probes.md")]
    mod probes {}
    #[doc = include_str!("../../../book/src/metric.md")]
    mod metric {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
