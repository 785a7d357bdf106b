//! Model order reduction and output-error bounds for bilinear control systems.

// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchgen;
pub mod bounds;
pub mod error;
pub mod gramians;
pub mod io;
pub mod krylov;
pub mod linalg;
pub mod lyapunov;
pub mod mor;
pub mod quad;
pub mod simulate;
pub mod stochastic;
pub mod sysmodel;

pub use error::{Error, Result};

/// Library version recorded in generated artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
