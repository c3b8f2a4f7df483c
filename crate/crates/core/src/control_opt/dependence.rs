use serde::Serialize;

use super::ControlSignal;
use crate::dynamics::{PcAccumulator, ProblemSpec, StepPlan, Workspace};
use crate::error::{Error, Result};
use crate::qwiener;
use crate::stats;
use crate::wellposedness::{self, LipschitzBundle};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum DependenceStatus {
    Applicable,
    /// A denominator of `C*` is not positive.
    Inapplicable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DependenceReport {
    pub status: DependenceStatus,
    /// `sup_t mean ‖y^{u1}(t) − y^{u2}(t)‖²` under common noise.
    pub lhs_pc_sq: f64,
    pub standard_error: f64,
    /// `∫ ‖u1 − u2‖² dt`.
    pub control_dist_sq: f64,
    pub c_star: Option<f64>,
    /// `lhs ≤ C*·dist + 3·SE`; `None` when the bound does not apply.
    pub bound_satisfied: Option<bool>,
}

/// Empirical check of `‖y^{u1} − y^{u2}‖²_PC ≤ C* ‖u1 − u2‖²`.
pub fn continuous_dependence(
    spec: &ProblemSpec,
    lb: &LipschitzBundle,
    u1: &ControlSignal,
    u2: &ControlSignal,
    grid: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<DependenceReport> {
    if n_paths < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 paths, got {n_paths}")));
    }
    let cs = wellposedness::c_star(spec, lb)?;
    let control_dist_sq = u1.l2_distance_sq(u2)?;
    let p1 = StepPlan::new(spec, u1, grid)?;
    let p2 = StepPlan::new(spec, u2, grid)?;
    let width = PcAccumulator::width(grid.len(), p1.impulse_nodes().len());
    let sums = stats::chunked_sum(n_paths, width, |i, acc| {
        let noise = qwiener::sample_increments(&spec.noise, grid, seed, i as u64)?;
        let mut ws = Workspace::new(spec.dim(), spec.noise_modes());
        let a = p1.path(&noise, None, &mut ws)?;
        let b = p2.path(&noise, None, &mut ws)?;
        PcAccumulator::add(&a, &b, acc);
        Ok(())
    })?;
    let (lhs_pc_sq, standard_error) = PcAccumulator::finish(&sums, n_paths);
    let (status, bound_satisfied) = match cs.value {
        Some(c) => (
            DependenceStatus::Applicable,
            Some(lhs_pc_sq <= c * control_dist_sq + 3.0 * standard_error),
        ),
        None => (
            DependenceStatus::Inapplicable(format!(
                "denominators 1 − 3M²(T²L̃g + TL̃h) = {:.6e} and 1 − 6M²(N+1)(T²L̃g + TL̃h) = {:.6e} must both be positive",
                cs.denominator_y1, cs.denominator_y2
            )),
            None,
        ),
    };
    Ok(DependenceReport {
        status,
        lhs_pc_sq,
        standard_error,
        control_dist_sq,
        c_star: cs.value,
        bound_satisfied,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::dynamics::DiffusionFn;
    use crate::qwiener::NoiseSpec;
    use crate::spectral::{SemigroupSpec, SpectralState};
    use nalgebra::DMatrix;

    fn toy() -> ProblemSpec {
        ProblemSpec::new(
            SemigroupSpec::for_horizon(vec![-1.0, -2.0], 0.5).unwrap(),
            NoiseSpec::new(vec![1.0, 0.5]).unwrap(),
            0.5,
            SpectralState::new(vec![1.0, 0.0]).unwrap(),
        )
        .with_control_operator(DMatrix::identity(2, 2))
        .with_drift(Arc::new(|_t: f64, y: &[f64], out: &mut [f64]| {
            out[0] = 0.2 * y[1];
            out[1] = -0.2 * y[0];
        }))
        .with_diffusion(Arc::new(DiffusionFn(|_t: f64, y: &[f64], out: &mut [f64]| {
            out[0] = 0.1 * y[0];
            out[3] = 0.1 * y[1];
        })))
    }

    #[test]
    fn identical_controls() {
        let spec = toy();
        let lb = LipschitzBundle::new(0.04, 0.01, 0.04, 0.01).unwrap();
        let u = ControlSignal::constant(0.5, 4, vec![0.3, -0.1]).unwrap();
        let grid = spec.grid(1.0 / 64.0, Some(&u)).unwrap();
        let r = continuous_dependence(&spec, &lb, &u, &u, &grid, 16, 0).unwrap();
        assert_eq!(r.lhs_pc_sq, 0.0);
        assert_eq!(r.control_dist_sq, 0.0);
        assert_eq!(r.bound_satisfied, Some(true));
    }

    #[test]
    fn inapplicable_when_denominator_negative() {
        let spec = toy();
        let lb = LipschitzBundle::new(1.0, 1.0, 10.0, 10.0).unwrap();
        let u = ControlSignal::constant(0.5, 4, vec![0.3, -0.1]).unwrap();
        let v = ControlSignal::constant(0.5, 4, vec![0.0, 0.0]).unwrap();
        let grid = spec.grid(1.0 / 64.0, Some(&u)).unwrap();
        let r = continuous_dependence(&spec, &lb, &u, &v, &grid, 16, 0).unwrap();
        assert!(matches!(r.status, DependenceStatus::Inapplicable(_)));
        assert_eq!(r.bound_satisfied, None);
        assert!(r.lhs_pc_sq > 0.0);
    }
}
