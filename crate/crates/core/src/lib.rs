//! Impulsive stochastic evolution equations on a truncated spectral basis.
//!
//! The state lives in the span of the first `d` eigenvectors of a diagonal
//! generator `A`, so the semigroup `T(t)` acts by exact exponential factors.
//! Between scheduled impulse times the state follows the mild (variation of
//! constants) form of
//!
//! ```text
//! dy = (A y + B u + g(t, y)) dt + h(t, y) dW,
//! y(t_k+) = (I + D_k) y(t_k) + E_k v_k,
//! ```
//!
//! driven by a truncated Q-Wiener process. On top of the integrator the crate
//! provides the constants behind the existence and uniqueness conditions, a
//! Picard solver for the discretised mild equation, and a derivative-free
//! search for controls minimising `E ∫ l(t, y, u) dt`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod control_opt;
pub mod dynamics;
pub mod error;
pub mod picard;
pub mod qwiener;
mod rng;
pub mod spectral;
mod stats;
pub mod wellposedness;

pub use control_opt::{AdmissibleSet, ControlSignal, RunningCost};
pub use dynamics::{ImpulseEvent, Path, ProblemSpec};
pub use error::{Error, Result};
pub use qwiener::{NoisePath, NoiseSpec};
pub use spectral::{SemigroupSpec, SpectralState};
pub use wellposedness::{ConstantsReport, LipschitzBundle};
