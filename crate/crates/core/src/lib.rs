//! Long-step gradient descent schedules built from silver-ratio recursions,
//! together with explicit dual certificates that each building block is
//! straightforward, and the numerical machinery to check those certificates.
//!
//! The crate is organised bottom-up:
//!
//! * [`sequence`]: the scalar sequences, building-block patterns and the
//!   repeated schedule.
//! * [`certificate`]: the sparse multipliers and their auxiliary vectors.
//! * [`linalg`]: dense symmetric matrices and an extended-precision eigen-solver.
//! * [`verification`]: matrix assembly, the certificate identities, the spectral
//!   membership test and bisection on its parameter.
//! * [`gd`]: gradient descent runs on test objectives and checks of the
//!   resulting guarantees.

pub mod certificate;
pub mod error;
pub mod gd;
pub mod linalg;
pub mod real;
pub mod sequence;
pub mod verification;

pub use error::{Error, Result};
pub use real::{Precision, Real};
