//! Successive approximation of the discretised mild equation.
//!
//! Sweep `n + 1` integrates every noise realisation with `g` and `h`
//! evaluated on sweep `n` (frozen arguments). Because the quadrature is
//! left-endpoint, the fixed point is exactly the explicit recursion computed
//! by [`crate::dynamics::simulate_path`].

use rayon::prelude::*;
use serde::Serialize;

use crate::control_opt::ControlSignal;
use crate::dynamics::{Path, PcAccumulator, ProblemSpec, StepPlan, Workspace};
use crate::error::{Error, Result};
use crate::qwiener::NoisePath;
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct PicardResult {
    /// Final iterate, one path per noise realisation.
    pub paths: Vec<Path>,
    /// `d(y⁽ⁿ⁾, y⁽ⁿ⁻¹⁾)` for `n = 1, 2, …`: the sup over grid nodes and
    /// right limits of the ensemble mean of `‖Δ‖²`.
    pub distances: Vec<f64>,
    pub converged: bool,
}

impl PicardResult {
    pub fn iterations(&self) -> usize {
        self.distances.len()
    }

    pub fn last_distance(&self) -> f64 {
        self.distances.last().copied().unwrap_or(f64::NAN)
    }
}

/// Runs sweeps from the constant iterate `y⁽⁰⁾(t) ≡ y₀` until the distance
/// drops below `tol` or `max_iter` sweeps are done. Hitting `max_iter` is
/// reported through `converged`, not as an error.
pub fn picard_solve(
    spec: &ProblemSpec,
    control: &ControlSignal,
    noises: &[NoisePath],
    tol: f64,
    max_iter: usize,
) -> Result<PicardResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    let first = noises
        .first()
        .ok_or_else(|| Error::InvalidArgument("noise ensemble is empty".into()))?;
    let grid = first.grid();
    let plan = StepPlan::new(spec, control, grid)?;
    for noise in noises {
        plan.check_noise(noise)?;
    }

    let constant = Path::from_parts(
        grid.to_vec(),
        vec![spec.initial.clone(); grid.len()],
        plan.impulse_nodes().to_vec(),
        vec![spec.initial.clone(); plan.impulse_nodes().len()],
    );
    let mut current: Vec<Path> = vec![constant; noises.len()];
    let width = PcAccumulator::width(grid.len(), plan.impulse_nodes().len());
    let mut distances = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let next: Vec<Path> = noises
            .par_iter()
            .zip(current.par_iter())
            .map(|(noise, prev)| {
                let mut ws = Workspace::new(spec.dim(), spec.noise_modes());
                plan.path(noise, Some(prev), &mut ws)
            })
            .collect::<Result<_>>()?;
        let sums = stats::chunked_sum(noises.len(), width, |i, acc| {
            PcAccumulator::add(&next[i], &current[i], acc);
            Ok(())
        })?;
        let (d, _) = PcAccumulator::finish(&sums, noises.len());
        distances.push(d);
        current = next;
        if d < tol {
            converged = true;
            break;
        }
    }
    Ok(PicardResult {
        paths: current,
        distances,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionStats {
    /// `d_{n+1} / d_n`, skipping zero denominators.
    pub ratios: Vec<f64>,
    /// Maximum over the last half of `ratios`; 0 when there are none.
    pub tail_max: f64,
}

pub fn contraction_ratio(distances: &[f64]) -> Result<ContractionStats> {
    if distances.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 distances, got {}",
            distances.len()
        )));
    }
    let ratios: Vec<f64> = distances
        .windows(2)
        .filter(|w| w[0] != 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    let tail = &ratios[ratios.len() / 2..];
    Ok(ContractionStats {
        tail_max: tail.iter().copied().fold(0.0, f64::max),
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::dynamics::{simulate_path, DiffusionFn, ImpulseEvent};
    use crate::qwiener::{sample_increments, NoiseSpec};
    use crate::spectral::{SemigroupSpec, SpectralState};

    fn base() -> ProblemSpec {
        ProblemSpec::new(
            SemigroupSpec::for_horizon(vec![-1.0, -4.0], 0.25).unwrap(),
            NoiseSpec::new(vec![1.0, 0.5]).unwrap(),
            0.25,
            SpectralState::new(vec![1.0, -0.5]).unwrap(),
        )
        .with_impulses(vec![ImpulseEvent::scaled(0.125, 2, 0.0, vec![0.1, 0.0]).unwrap()])
    }

    #[test]
    fn linear_system_is_fixed_after_one_sweep() {
        let spec = base();
        let u = ControlSignal::zero(0.25, 1, 1).unwrap();
        let grid = spec.grid(1.0 / 64.0, Some(&u)).unwrap();
        let noises: Vec<_> = (0..4)
            .map(|i| sample_increments(&spec.noise, &grid, 1, i).unwrap())
            .collect();
        let r = picard_solve(&spec, &u, &noises, 1e-12, 5).unwrap();
        assert_eq!(r.distances.len(), 2);
        assert_eq!(r.distances[1], 0.0);
        assert!(r.converged);
    }

    #[test]
    fn converges_to_explicit_recursion() {
        let spec = base()
            .with_drift(Arc::new(|_t: f64, y: &[f64], out: &mut [f64]| {
                out[0] = 0.1 * y[1].sin();
                out[1] = 0.1 * y[0];
            }))
            .with_diffusion(Arc::new(DiffusionFn(|_t: f64, y: &[f64], out: &mut [f64]| {
                out[0] = 0.1 * y[0];
                out[3] = 0.05 * y[1].cos();
            })));
        let u = ControlSignal::zero(0.25, 1, 1).unwrap();
        let grid = spec.grid(1.0 / 64.0, Some(&u)).unwrap();
        let noises: Vec<_> = (0..8)
            .map(|i| sample_increments(&spec.noise, &grid, 2, i).unwrap())
            .collect();
        let r = picard_solve(&spec, &u, &noises, 1e-20, 40).unwrap();
        assert!(r.converged);
        for (p, noise) in r.paths.iter().zip(&noises) {
            let direct = simulate_path(&spec, &u, noise).unwrap();
            for (a, b) in p.states().iter().zip(direct.states()) {
                assert!(a.dist_sq(b).sqrt() < 1e-10);
            }
        }
    }

    #[test]
    fn ratio_examples() {
        let s = contraction_ratio(&[1.0, 0.1, 0.01]).unwrap();
        assert_eq!(s.ratios.len(), 2);
        assert!(s.ratios.iter().all(|r| (r - 0.1).abs() < 1e-15));
        let z = contraction_ratio(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(z.tail_max, 0.0);
        let e = contraction_ratio(&[0.0, 0.0, 0.0]).unwrap();
        assert!(e.ratios.is_empty());
        assert!(contraction_ratio(&[1.0, 0.5]).is_err());
    }

    #[test]
    fn rejects_bad_arguments() {
        let spec = base();
        let u = ControlSignal::zero(0.25, 1, 1).unwrap();
        let grid = spec.grid(1.0 / 64.0, Some(&u)).unwrap();
        let noises = vec![sample_increments(&spec.noise, &grid, 1, 0).unwrap()];
        assert!(picard_solve(&spec, &u, &noises, 1e-8, 0).is_err());
        assert!(picard_solve(&spec, &u, &noises, 0.0, 3).is_err());
        assert!(picard_solve(&spec, &u, &[], 1e-8, 3).is_err());
    }
}
