use rand::Rng;
use serde::Serialize;

use super::{ControlSignal, RunningCost};
use crate::dynamics::{ProblemSpec, StepPlan, Workspace};
use crate::error::{Error, Result};
use crate::qwiener::{self, NoisePath};
use crate::rng::{self, DOMAIN_AUDIT};
use crate::stats;

/// Monte-Carlo estimate of `J` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostEstimate {
    pub j_estimate: f64,
    pub standard_error: f64,
    pub n_paths: usize,
}

/// Estimates `J(u) = E ∫₀ᵀ l(t, y, u) dt` with the left-endpoint rule on
/// `grid`. Path `i` uses noise `(seed, i)`, so two controls evaluated with
/// the same seed share their noise.
pub fn cost(
    spec: &ProblemSpec,
    control: &ControlSignal,
    rc: &RunningCost,
    grid: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<CostEstimate> {
    if n_paths < 2 {
        return Err(Error::InvalidArgument(format!(
            "cost needs at least 2 paths, got {n_paths}"
        )));
    }
    let plan = StepPlan::new(spec, control, grid)?;
    let sums = stats::chunked_sum(n_paths, 2, |i, acc| {
        let noise = qwiener::sample_increments(&spec.noise, grid, seed, i as u64)?;
        let v = path_cost(&plan, spec, rc, &noise)?;
        acc[0] += v;
        acc[1] += v * v;
        Ok(())
    })?;
    let (j_estimate, standard_error) = stats::mean_and_se(sums[0], sums[1], n_paths);
    Ok(CostEstimate {
        j_estimate,
        standard_error,
        n_paths,
    })
}

/// Same estimator on a fixed, pre-sampled noise ensemble.
pub(crate) fn cost_on_noises(
    spec: &ProblemSpec,
    control: &ControlSignal,
    rc: &RunningCost,
    noises: &[NoisePath],
) -> Result<CostEstimate> {
    let grid = noises
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty noise ensemble".into()))?
        .grid();
    let plan = StepPlan::new(spec, control, grid)?;
    let sums = stats::chunked_sum(noises.len(), 2, |i, acc| {
        let v = path_cost(&plan, spec, rc, &noises[i])?;
        acc[0] += v;
        acc[1] += v * v;
        Ok(())
    })?;
    let (j_estimate, standard_error) = stats::mean_and_se(sums[0], sums[1], noises.len());
    Ok(CostEstimate {
        j_estimate,
        standard_error,
        n_paths: noises.len(),
    })
}

fn path_cost(plan: &StepPlan<'_>, spec: &ProblemSpec, rc: &RunningCost, noise: &NoisePath) -> Result<f64> {
    let grid = plan.grid();
    let last = grid.len() - 1;
    let mut ws = Workspace::new(spec.dim(), spec.noise_modes());
    let mut total = 0.0;
    plan.run(noise, None, &mut ws, |node, left, plus| {
        if node == last {
            return Ok(());
        }
        let t = grid[node];
        let y = plus.unwrap_or(left);
        let v = rc.eval(t, y, plan.control().value_at(t));
        if !v.is_finite() {
            return Err(Error::NonFiniteCost {
                t,
                path: noise.path_index(),
            });
        }
        total += v * (grid[node + 1] - t);
        Ok(())
    })?;
    Ok(total)
}

/// A sampled point where an audited inequality fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditViolation {
    pub t: f64,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    /// Left side minus right side of the audited inequality (negative).
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub n_samples: usize,
    pub violations: Vec<AuditViolation>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn sample_vec<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    // Magnitudes spread over three decades.
    let scale = 10f64.powf(rng.random_range(-2.0..1.0));
    (0..dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
}

fn audit<F>(spec: &ProblemSpec, n_samples: usize, seed: u64, salt: u64, mut check: F) -> Result<AuditReport>
where
    F: FnMut(&mut rand_chacha::ChaCha8Rng, f64, Vec<f64>, Vec<f64>) -> Option<AuditViolation>,
{
    if n_samples == 0 {
        return Err(Error::InvalidArgument("audit needs at least one sample".into()));
    }
    let mut rng = rng::stream(seed, DOMAIN_AUDIT, salt);
    let mut violations = Vec::new();
    for _ in 0..n_samples {
        let t = rng.random_range(0.0..=spec.horizon);
        let y = sample_vec(&mut rng, spec.dim());
        let u = sample_vec(&mut rng, spec.control_dim());
        if let Some(v) = check(&mut rng, t, y, u) {
            violations.push(v);
        }
    }
    Ok(AuditReport { n_samples, violations })
}

/// Checks `l(t, y, u) ≥ ξ(t) + d₁‖y‖² + d₂‖u‖²` at random points.
pub fn audit_a4(rc: &RunningCost, spec: &ProblemSpec, n_samples: usize, seed: u64) -> Result<AuditReport> {
    audit(spec, n_samples, seed, 4, |_, t, y, u| {
        let lhs = rc.eval(t, &y, &u);
        let rhs = rc.xi(t) + rc.d1() * crate::spectral::norm_sq(&y) + rc.d2() * crate::spectral::norm_sq(&u);
        let margin = lhs - rhs;
        (!(margin >= -1e-12 * (1.0 + rhs.abs()))).then_some(AuditViolation { t, y, u, margin })
    })
}

/// Checks midpoint convexity of `l` in `u`:
/// `l(t, y, (u + w)/2) ≤ (l(t, y, u) + l(t, y, w))/2 + 1e-9`.
pub fn audit_a3(rc: &RunningCost, spec: &ProblemSpec, n_samples: usize, seed: u64) -> Result<AuditReport> {
    audit(spec, n_samples, seed, 3, |rng, t, y, u| {
        let w = sample_vec(rng, u.len());
        let mid: Vec<f64> = u.iter().zip(&w).map(|(a, b)| 0.5 * (a + b)).collect();
        let margin = 0.5 * (rc.eval(t, &y, &u) + rc.eval(t, &y, &w)) + 1e-9 - rc.eval(t, &y, &mid);
        (!(margin >= 0.0)).then_some(AuditViolation { t, y, u, margin })
    })
}
