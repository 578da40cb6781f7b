//! Secrecy capacity of the Gaussian MIMO wiretap channel when the transmitter
//! beamforms along the generalized singular vectors of the two channel matrices.
//!
//! The pipeline is:
//!
//! 1. [`gsvd::gsvd`] jointly factors the legitimate and eavesdropper channels,
//!    `Hr A = Psi_r C` and `He A = Psi_e D` with `C^T C + D^T D = I`.
//! 2. [`gsvd::subchannel_gains`] reduces the factors to per-direction scalars
//!    `(c_i, d_i, a_i)`.
//! 3. [`allocation::solve_mu`] finds the optimal diagonal power allocation by
//!    bisecting on the Lagrange multiplier of the power budget.
//! 4. [`capacity::secrecy_rate`] evaluates the resulting secrecy rate; the
//!    [`capacity`] module also provides the uniform-allocation baseline.
//!
//! [`oracle`] holds an independent brute-force check of the closed form and
//! [`experiments`] runs the seeded Monte Carlo campaigns.

pub mod allocation;
pub mod capacity;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod gsvd;
pub mod linalg;
pub mod oracle;

pub use error::{Error, Result};
pub use linalg::ComplexMatrix;
