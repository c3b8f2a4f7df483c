//! Projected simultaneous-perturbation search.
//!
//! Iteration `n` draws a Rademacher direction `Δ`, evaluates the cost at the
//! projections of `θ ± c_n Δ`, forms `ĝ_i = (J⁺ − J⁻) / (2 c_n Δ_i)` and moves
//! to the projection of `θ − a_n ĝ`, with `a_n = a₀/(n + A)^0.602` and
//! `c_n = c₀/n^0.101`. All evaluations share one noise ensemble, so
//! differences between costs carry no sampling noise from the paths.

use std::cell::Cell;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{cost_on_noises, AdmissibleSet, ControlSignal, RunningCost};
use crate::dynamics::ProblemSpec;
use crate::error::{Error, Result};
use crate::qwiener::{self, NoisePath};
use crate::rng::{self, DOMAIN_SPSA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeParams {
    /// Total number of cost evaluations.
    pub budget: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Step gain; picked from the first curvature estimate when absent.
    pub a0: Option<f64>,
    /// Perturbation size; a tenth of the admissible set's width when absent.
    pub c0: Option<f64>,
    /// Stability offset `A`; a tenth of the iteration count when absent.
    pub stability: Option<f64>,
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for OptimizeParams {
    fn default() -> Self {
        Self {
            budget: 2000,
            n_paths: 200,
            seed: 0,
            a0: None,
            c0: None,
            stability: None,
            alpha: 0.602,
            gamma: 0.101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub j_best: f64,
    pub j_current: f64,
    pub step_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeResult {
    pub u_star: ControlSignal,
    pub j_star: f64,
    pub j_star_standard_error: f64,
    pub j_init: f64,
    pub history: Vec<HistoryRow>,
    pub evaluations: usize,
}

/// Width of the admissible set along one coordinate.
fn set_scale(ad: &AdmissibleSet) -> f64 {
    match ad {
        AdmissibleSet::Box { lower, upper } => lower.iter().zip(upper).map(|(l, u)| u - l).fold(0.0, f64::max),
        AdmissibleSet::Ball { radius, .. } => 2.0 * radius,
    }
}

/// Searches `ad` for a control with low cost on `grid`, starting from the
/// projection of `u_init`. Returns the best control evaluated; ties keep the
/// earlier one.
pub fn optimize(
    spec: &ProblemSpec,
    rc: &RunningCost,
    ad: &AdmissibleSet,
    u_init: &ControlSignal,
    grid: &[f64],
    params: &OptimizeParams,
) -> Result<OptimizeResult> {
    if params.budget == 0 {
        return Err(Error::InvalidArgument("budget must be at least 1".into()));
    }
    if params.n_paths < 2 {
        return Err(Error::InvalidArgument("optimisation needs at least 2 paths".into()));
    }
    ad.validate()?;
    let noises: Vec<NoisePath> = (0..params.n_paths as u64)
        .map(|i| qwiener::sample_increments(&spec.noise, grid, params.seed, i))
        .collect::<Result<_>>()?;
    let evaluations = Cell::new(0usize);
    let evaluate = |u: &ControlSignal| -> Result<(f64, f64)> {
        evaluations.set(evaluations.get() + 1);
        let c = cost_on_noises(spec, u, rc, &noises)?;
        Ok((c.j_estimate, c.standard_error))
    };

    let mut theta = ad.project(u_init)?;
    let (j_init, se_init) = evaluate(&theta)?;
    let mut best = (theta.clone(), j_init, se_init);
    let mut history = vec![HistoryRow {
        iteration: 0,
        j_best: j_init,
        j_current: j_init,
        step_norm: 0.0,
    }];

    if !ad.is_singleton() {
        let scale = set_scale(ad).max(1e-12);
        let c0 = params.c0.unwrap_or(0.1 * scale);
        let iterations = ((params.budget - 1) / 3).max(1) as f64;
        let big_a = params.stability.unwrap_or(0.1 * iterations);
        let mut a0 = params.a0;
        let mut j_theta = j_init;
        let mut n = 0usize;
        while evaluations.get() + 3 <= params.budget {
            n += 1;
            let c_n = c0 / (n as f64).powf(params.gamma);
            let mut rng = rng::stream(params.seed, DOMAIN_SPSA, n as u64);
            let flat = theta.to_flat();
            let delta: Vec<f64> = (0..flat.len())
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let shifted = |sign: f64| -> Result<ControlSignal> {
                let v: Vec<f64> = flat.iter().zip(&delta).map(|(x, d)| x + sign * c_n * d).collect();
                ad.project(&theta.with_flat(&v)?)
            };
            let plus = shifted(1.0)?;
            let minus = shifted(-1.0)?;
            let (j_plus, se_plus) = evaluate(&plus)?;
            let (j_minus, se_minus) = evaluate(&minus)?;
            for (u, j, se) in [(plus, j_plus, se_plus), (minus, j_minus, se_minus)] {
                if j < best.1 {
                    best = (u, j, se);
                }
            }
            let grad: Vec<f64> = delta.iter().map(|d| (j_plus - j_minus) / (2.0 * c_n * d)).collect();
            let a = *a0.get_or_insert_with(|| {
                // Half the stable gain along Δ, taken from the second
                // difference ΔᵀHΔ; falls back to a fixed fraction of the set width.
                let curvature = (j_plus + j_minus - 2.0 * j_theta) / (c_n * c_n);
                let lead = (1.0 + big_a).powf(params.alpha);
                let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
                if curvature > 0.0 && curvature.is_finite() {
                    0.5 * lead / curvature
                } else if gmax > 0.0 {
                    0.1 * scale * lead / gmax
                } else {
                    1.0
                }
            });
            let a_n = a / (n as f64 + big_a).powf(params.alpha);
            let moved: Vec<f64> = flat.iter().zip(&grad).map(|(x, g)| x - a_n * g).collect();
            let next = ad.project(&theta.with_flat(&moved)?)?;
            let step_norm = next
                .to_flat()
                .iter()
                .zip(&flat)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            theta = next;
            let (j_current, se) = evaluate(&theta)?;
            j_theta = j_current;
            if j_current < best.1 {
                best = (theta.clone(), j_current, se);
            }
            history.push(HistoryRow {
                iteration: n,
                j_best: best.1,
                j_current,
                step_norm,
            });
        }
    }

    Ok(OptimizeResult {
        u_star: best.0,
        j_star: best.1,
        j_star_standard_error: best.2,
        j_init,
        history,
        evaluations: evaluations.get(),
    })
}
