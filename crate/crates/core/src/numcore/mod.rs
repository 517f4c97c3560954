//! Dense f64 numerics with reverse-mode automatic differentiation.
//!
//! Everything downstream (encoders, loss, gradient checks) is built on the
//! primitive set in [`tape::Tape`]. 64-bit floats throughout; desk-scale
//! problem sizes make precision cheaper than speed.

pub mod gradcheck;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, grad_check_multi};
pub use rng::Rng;
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
