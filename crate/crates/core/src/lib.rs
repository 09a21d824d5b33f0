//! Moment kernelization of parameterized control systems, second-order policy
//! search on truncated moment systems, and the filtrated outer loop that
//! grows the truncation order until successive value profiles agree.

// Negated comparisons are how parameter checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod ddp;
pub mod ensemble;
mod error;
pub mod frl;
mod moment;
pub mod ode;
pub mod oracle;
pub mod systems;

pub use error::{Error, Result};
pub use moment::MomentVector;
