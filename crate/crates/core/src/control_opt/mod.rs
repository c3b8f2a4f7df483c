//! Lagrange cost `J = E ∫₀ᵀ l(t, y, u) dt`, admissible controls, and a
//! projected derivative-free search for minimisers.
//!
//! The running cost has to satisfy measurability and lower semicontinuity
//! conditions that cannot be checked for a black-box closure; those stay the
//! caller's responsibility. Convexity in `u` and the coercivity bound
//! `l ≥ ξ(t) + d₁‖y‖² + d₂‖u‖²` are audited by sampling.

mod admissible;
mod cost;
mod dependence;
mod signal;
mod spsa;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub use admissible::{project, AdmissibleSet};
pub use cost::{audit_a3, audit_a4, cost, AuditReport, AuditViolation, CostEstimate};
pub use dependence::{continuous_dependence, DependenceReport, DependenceStatus};
pub use signal::ControlSignal;
pub use spsa::{optimize, HistoryRow, OptimizeParams, OptimizeResult};

pub(crate) use cost::cost_on_noises;

type CostFn = dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync;
type LowerFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Running cost `l(t, y, u)` together with its coercivity data `(ξ, d₁, d₂)`.
#[derive(Clone)]
pub struct RunningCost {
    l: Arc<CostFn>,
    xi: Arc<LowerFn>,
    d1: f64,
    d2: f64,
}

impl fmt::Debug for RunningCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RunningCost")
            .field("d1", &self.d1)
            .field("d2", &self.d2)
            .finish_non_exhaustive()
    }
}

impl RunningCost {
    pub fn new(l: Arc<CostFn>, xi: Arc<LowerFn>, d1: f64, d2: f64) -> Result<Self> {
        if !(d1 >= 0.0 && d1.is_finite()) {
            return Err(Error::InvalidArgument(format!("d1 must be finite and >= 0, got {d1}")));
        }
        if !(d2 > 0.0 && d2.is_finite()) {
            return Err(Error::InvalidArgument(format!("d2 must be finite and > 0, got {d2}")));
        }
        Ok(Self { l, xi, d1, d2 })
    }

    /// `l = a‖y‖² + b‖u‖²` with `ξ ≡ 0`, `d₁ = a`, `d₂ = b`.
    pub fn quadratic(state_weight: f64, control_weight: f64) -> Result<Self> {
        Self::new(
            Arc::new(move |_t, y: &[f64], u: &[f64]| {
                state_weight * crate::spectral::norm_sq(y) + control_weight * crate::spectral::norm_sq(u)
            }),
            Arc::new(|_t| 0.0),
            state_weight,
            control_weight,
        )
    }

    pub fn eval(&self, t: f64, y: &[f64], u: &[f64]) -> f64 {
        (self.l)(t, y, u)
    }

    pub fn xi(&self, t: f64) -> f64 {
        (self.xi)(t)
    }

    pub fn d1(&self) -> f64 {
        self.d1
    }

    pub fn d2(&self) -> f64 {
        self.d2
    }

    /// Midpoint-rule integral of `ξ` over `[0, horizon]`; errors if it is not finite.
    pub fn xi_integral(&self, horizon: f64, nodes: usize) -> Result<f64> {
        let n = nodes.max(1);
        let h = horizon / n as f64;
        let total: f64 = (0..n).map(|i| self.xi((i as f64 + 0.5) * h) * h).sum();
        if total.is_finite() {
            Ok(total)
        } else {
            Err(Error::NonFinite("integral of the cost lower bound ξ".into()))
        }
    }
}
