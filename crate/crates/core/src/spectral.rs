//! Truncated eigenbasis representation of the state space and the
//! semigroup generated by a diagonal operator.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Coefficients of a state in the orthonormal eigenbasis of `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpectralState {
    coeffs: Vec<f64>,
}

impl SpectralState {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidArgument("state dimension must be at least 1".into()));
        }
        ensure_finite(&coeffs, "state coefficients")?;
        Ok(Self { coeffs })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            coeffs: vec![0.0; dim.max(1)],
        }
    }

    /// Unit vector along mode `index`, scaled by `value`.
    pub fn unit(dim: usize, index: usize, value: f64) -> Result<Self> {
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, len: dim });
        }
        let mut coeffs = vec![0.0; dim];
        coeffs[index] = value;
        Self::new(coeffs)
    }

    // Internal constructor for buffers produced by the integrator.
    pub(crate) fn from_vec_unchecked(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.coeffs)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `‖self − other‖²`.
    pub fn dist_sq(&self, other: &SpectralState) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}

/// Norm of `y` in H; the basis is orthonormal so this is the Euclidean norm.
pub fn h_norm(y: &SpectralState) -> f64 {
    y.norm()
}

pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Spectrum of the generator together with the uniform bound `M` on `‖T(t)‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemigroupSpec {
    mu: Vec<f64>,
    bound_m: f64,
}

impl SemigroupSpec {
    /// Builds a semigroup with an explicitly supplied bound `M`.
    ///
    /// `M` is only checked for being positive and finite here; whether it
    /// dominates `‖T(t)‖` on a given horizon is checked by
    /// [`crate::ProblemSpec::validate`].
    pub fn new(mu: Vec<f64>, bound_m: f64) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::InvalidArgument("spectrum must have at least one mode".into()));
        }
        ensure_finite(&mu, "semigroup exponents")?;
        if !(bound_m.is_finite() && bound_m > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "semigroup bound M must be positive and finite, got {bound_m}"
            )));
        }
        Ok(Self { mu, bound_m })
    }

    /// Builds a semigroup whose `M` is the tight bound on `[0, horizon]`.
    pub fn for_horizon(mu: Vec<f64>, horizon: f64) -> Result<Self> {
        let probe = Self::new(mu, 1.0)?;
        let m = probe.operator_bound(horizon)?;
        Ok(Self { bound_m: m, ..probe })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn exponents(&self) -> &[f64] {
        &self.mu
    }

    pub fn bound_m(&self) -> f64 {
        self.bound_m
    }

    /// Returns `T(t) y`.
    pub fn apply(&self, t: f64, y: &SpectralState) -> Result<SpectralState> {
        if y.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "semigroup_apply",
                expected: self.dim(),
                got: y.dim(),
            });
        }
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        let mut out = y.coeffs.clone();
        self.apply_in_place(t, &mut out);
        Ok(SpectralState::from_vec_unchecked(out))
    }

    pub(crate) fn apply_in_place(&self, t: f64, y: &mut [f64]) {
        if t == 0.0 {
            return;
        }
        for (c, m) in y.iter_mut().zip(&self.mu) {
            *c *= (m * t).exp();
        }
    }

    /// Diagonal entries of `T(t)`.
    pub fn factors(&self, t: f64) -> Vec<f64> {
        self.mu.iter().map(|m| (m * t).exp()).collect()
    }

    /// `‖T(t)‖` evaluated exactly from the spectrum.
    pub fn exact_norm(&self, t: f64) -> f64 {
        self.mu.iter().map(|m| (m * t).exp()).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `sup_{t ∈ [0, horizon]} ‖T(t)‖`.
    ///
    /// The supremum sits at `t = 0` (value 1) for a dissipative spectrum and
    /// at `t = horizon` on the largest positive exponent otherwise.
    pub fn operator_bound(&self, horizon: f64) -> Result<f64> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        let top = self.mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(if top > 0.0 { (top * horizon).exp() } else { 1.0 })
    }
}

/// Free-function form of [`SemigroupSpec::apply`].
pub fn semigroup_apply(sg: &SemigroupSpec, t: f64, y: &SpectralState) -> Result<SpectralState> {
    sg.apply(t, y)
}

/// Free-function form of [`SemigroupSpec::operator_bound`].
pub fn operator_bound(sg: &SemigroupSpec, horizon: f64) -> Result<f64> {
    sg.operator_bound(horizon)
}

/// Dirichlet spectrum of `u'' − u'` on `(0, 1)`: `μ_k = −(k²π² + 1/4)`, `k = 1..=dim`.
pub fn dirichlet_advection_diffusion_spectrum(dim: usize) -> Vec<f64> {
    (1..=dim)
        .map(|k| {
            let kp = k as f64 * std::f64::consts::PI;
            -(kp * kp + 0.25)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sg(mu: &[f64]) -> SemigroupSpec {
        SemigroupSpec::new(mu.to_vec(), 1.0).unwrap()
    }

    #[test]
    fn identity_at_zero() {
        let y = SpectralState::new(vec![3.0, -1.0]).unwrap();
        let out = sg(&[-1.0, -4.0]).apply(0.0, &y).unwrap();
        assert_eq!(out.as_slice(), &[3.0, -1.0]);
    }

    #[test]
    fn scalar_decay() {
        let y = SpectralState::new(vec![1.0]).unwrap();
        let out = sg(&[-1.0]).apply(1.0, &y).unwrap();
        assert_relative_eq!(out.as_slice()[0], (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(out.as_slice()[0], 0.367_879_441_171_442_3, max_relative = 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = sg(&[-1.0, -2.0]);
        let y = SpectralState::new(vec![1.0]).unwrap();
        assert!(matches!(s.apply(1.0, &y), Err(Error::DimensionMismatch { .. })));
        let y2 = SpectralState::zeros(2);
        assert!(matches!(s.apply(-0.1, &y2), Err(Error::NegativeTime(_))));
        assert!(SpectralState::new(vec![f64::NAN]).is_err());
        assert!(SpectralState::new(vec![]).is_err());
        assert!(SemigroupSpec::new(vec![f64::INFINITY], 1.0).is_err());
    }

    #[test]
    fn operator_bound_cases() {
        assert_eq!(sg(&[-1.0, -4.0]).operator_bound(1.0).unwrap(), 1.0);
        assert_relative_eq!(
            sg(&[0.5]).operator_bound(2.0).unwrap(),
            std::f64::consts::E,
            max_relative = 1e-15
        );
        assert_eq!(sg(&[0.0]).operator_bound(7.5).unwrap(), 1.0);
        assert!(sg(&[0.0]).operator_bound(0.0).is_err());
    }

    #[test]
    fn norms() {
        assert_eq!(h_norm(&SpectralState::zeros(3)), 0.0);
        assert_eq!(h_norm(&SpectralState::new(vec![3.0, 4.0]).unwrap()), 5.0);
        assert_eq!(h_norm(&SpectralState::new(vec![1.0; 4]).unwrap()), 2.0);
    }

    #[test]
    fn preset_spectrum_is_dissipative() {
        let mu = dirichlet_advection_diffusion_spectrum(3);
        assert_relative_eq!(mu[0], -(std::f64::consts::PI.powi(2) + 0.25));
        assert!(mu.windows(2).all(|w| w[1] < w[0]));
    }

    proptest! {
        #[test]
        fn semigroup_law(s in 0.0f64..1.0, tau in 0.0f64..1.0,
                         y in proptest::collection::vec(-10.0f64..10.0, 6),
                         mu in proptest::collection::vec(-50.0f64..2.0, 6)) {
            let g = sg(&mu);
            let y = SpectralState::new(y).unwrap();
            let lhs = g.apply(s, &g.apply(tau, &y).unwrap()).unwrap();
            let rhs = g.apply(s + tau, &y).unwrap();
            for (a, b) in lhs.as_slice().iter().zip(rhs.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300) || a == b);
            }
        }

        #[test]
        fn bounded_by_operator_bound(t in 0.0f64..2.0,
                                     y in proptest::collection::vec(-10.0f64..10.0, 4),
                                     mu in proptest::collection::vec(-5.0f64..1.0, 4)) {
            let g = sg(&mu);
            let y = SpectralState::new(y).unwrap();
            let m = g.operator_bound(2.0).unwrap();
            let out = g.apply(t, &y).unwrap();
            prop_assert!(out.norm() <= m * y.norm() * (1.0 + 1e-12) + 1e-300);
        }
    }
}
