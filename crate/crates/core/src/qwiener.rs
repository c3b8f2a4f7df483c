//! Truncated Q-Wiener noise.
//!
//! `W(t) = Σ_j √λ_j W_j(t) e_j` is kept to its first `J` modes. Increments
//! over a grid step of length `Δt` are independent `N(0, λ_j Δt)` draws.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::rng::{self, DOMAIN_NOISE};
use crate::stats;

/// Eigenvalues of the covariance operator `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    lambda: Vec<f64>,
    trace: f64,
}

impl NoiseSpec {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::InvalidArgument("noise needs at least one mode".into()));
        }
        ensure_finite(&lambda, "covariance eigenvalues")?;
        if let Some(l) = lambda.iter().find(|l| **l < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "covariance eigenvalues must be nonnegative, got {l}"
            )));
        }
        let trace = lambda.iter().sum();
        Ok(Self { lambda, trace })
    }

    /// `λ_j = amplitude / (j + 1)^exponent` for `j < modes`.
    pub fn power_law(modes: usize, amplitude: f64, exponent: f64) -> Result<Self> {
        Self::new(
            (0..modes)
                .map(|j| amplitude / ((j + 1) as f64).powf(exponent))
                .collect(),
        )
    }

    pub fn modes(&self) -> usize {
        self.lambda.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }
}

/// Brownian increments on a time grid, one row per step, one column per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    grid: Vec<f64>,
    modes: usize,
    increments: Vec<f64>,
    seed: u64,
    path_index: u64,
}

impl NoisePath {
    /// All-zero increments; used for deterministic runs.
    pub fn zero(grid: &[f64], modes: usize) -> Result<Self> {
        validate_grid(grid)?;
        Ok(Self {
            grid: grid.to_vec(),
            modes,
            increments: vec![0.0; (grid.len() - 1) * modes],
            seed: 0,
            path_index: 0,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    /// Increments of step `n` (from `grid[n]` to `grid[n + 1]`).
    pub fn row(&self, n: usize) -> &[f64] {
        &self.increments[n * self.modes..(n + 1) * self.modes]
    }

    /// Sums blocks of `factor` consecutive steps into one, keeping every
    /// `factor`-th grid node. The coarse path is the same Brownian sample.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::InvalidArgument(format!(
                "cannot coarsen {} steps by a factor of {factor}",
                self.steps()
            )));
        }
        let coarse_steps = self.steps() / factor;
        let mut increments = vec![0.0; coarse_steps * self.modes];
        for n in 0..coarse_steps {
            let dst = &mut increments[n * self.modes..(n + 1) * self.modes];
            for fine in n * factor..(n + 1) * factor {
                for (d, s) in dst.iter_mut().zip(self.row(fine)) {
                    *d += s;
                }
            }
        }
        Ok(Self {
            grid: self.grid.iter().step_by(factor).copied().collect(),
            modes: self.modes,
            increments,
            seed: self.seed,
            path_index: self.path_index,
        })
    }
}

/// Checks that `grid` starts at 0, is strictly increasing and finite.
pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidGrid("grid needs at least two nodes".into()));
    }
    if grid[0] != 0.0 {
        return Err(Error::InvalidGrid(format!(
            "grid must start at 0, starts at {}",
            grid[0]
        )));
    }
    ensure_finite(grid, "time grid")?;
    if let Some(w) = grid.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid(format!(
            "grid is not strictly increasing at {} -> {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Draws the increments of path `path_index` under `seed`.
///
/// Mode `j` at step `n` is `√(λ_j Δt_n) ξ` with `ξ ~ N(0, 1)`. The standard
/// normals are drawn row by row for every mode, including modes with
/// `λ_j = 0`, so changing one eigenvalue never shifts the other columns.
pub fn sample_increments(ns: &NoiseSpec, grid: &[f64], seed: u64, path_index: u64) -> Result<NoisePath> {
    validate_grid(grid)?;
    let modes = ns.modes();
    let mut rng = rng::stream(seed, DOMAIN_NOISE, path_index);
    let mut increments = Vec::with_capacity((grid.len() - 1) * modes);
    for w in grid.windows(2) {
        let dt = w[1] - w[0];
        for &lambda in ns.lambda() {
            let z: f64 = StandardNormal.sample(&mut rng);
            increments.push(if lambda == 0.0 { 0.0 } else { (lambda * dt).sqrt() * z });
        }
    }
    Ok(NoisePath {
        grid: grid.to_vec(),
        modes,
        increments,
        seed,
        path_index,
    })
}

/// Integrand of a stochastic integral, acting diagonally: mode `j` of the
/// noise drives state coordinate `j` with coefficient `c_j(s)`. Its squared
/// Hilbert–Schmidt norm is `Σ_j c_j(s)² λ_j`.
#[derive(Debug, Clone, PartialEq)]
pub enum Integrand {
    /// Same coefficients on every step.
    Constant(Vec<f64>),
    /// One coefficient row per grid step.
    PerStep(Vec<Vec<f64>>),
}

impl Integrand {
    fn coeffs(&self, step: usize) -> &[f64] {
        match self {
            Integrand::Constant(c) => c,
            Integrand::PerStep(rows) => &rows[step],
        }
    }

    fn check(&self, steps: usize, modes: usize) -> Result<()> {
        let rows: Vec<&Vec<f64>> = match self {
            Integrand::Constant(c) => vec![c],
            Integrand::PerStep(r) => {
                if r.len() != steps {
                    return Err(Error::DimensionMismatch {
                        context: "integrand rows",
                        expected: steps,
                        got: r.len(),
                    });
                }
                r.iter().collect()
            }
        };
        for r in rows {
            if r.len() != modes {
                return Err(Error::DimensionMismatch {
                    context: "integrand modes",
                    expected: modes,
                    got: r.len(),
                });
            }
            ensure_finite(r, "integrand")?;
        }
        Ok(())
    }
}

/// Monte-Carlo check of `E‖∫χ dW‖² = ∫ ‖χ‖²_{L²₀} ds`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsometryReport {
    pub mc_estimate: f64,
    pub analytic: f64,
    pub standard_error: f64,
    pub z_score: f64,
    pub n_paths: usize,
}

pub fn ito_isometry_check(
    ns: &NoiseSpec,
    grid: &[f64],
    integrand: &Integrand,
    n_paths: usize,
    seed: u64,
) -> Result<IsometryReport> {
    if grid.len() < 2 {
        return Err(Error::InvalidGrid("empty grid".into()));
    }
    validate_grid(grid)?;
    if n_paths < 100 {
        return Err(Error::InvalidArgument(format!(
            "need at least 100 paths, got {n_paths}"
        )));
    }
    let steps = grid.len() - 1;
    let modes = ns.modes();
    integrand.check(steps, modes)?;

    let analytic: f64 = grid
        .windows(2)
        .enumerate()
        .map(|(n, w)| {
            let dt = w[1] - w[0];
            integrand
                .coeffs(n)
                .iter()
                .zip(ns.lambda())
                .map(|(c, l)| c * c * l)
                .sum::<f64>()
                * dt
        })
        .sum();

    let sums = stats::chunked_sum(n_paths, 2, |i, acc| {
        let noise = sample_increments(ns, grid, seed, i as u64)?;
        let mut integral = vec![0.0; modes];
        for n in 0..steps {
            for ((s, c), dw) in integral.iter_mut().zip(integrand.coeffs(n)).zip(noise.row(n)) {
                *s += c * dw;
            }
        }
        let v: f64 = integral.iter().map(|x| x * x).sum();
        acc[0] += v;
        acc[1] += v * v;
        Ok(())
    })?;
    let (mc_estimate, standard_error) = stats::mean_and_se(sums[0], sums[1], n_paths);
    let gap = (mc_estimate - analytic).abs();
    let z_score = if standard_error > 0.0 {
        gap / standard_error
    } else if gap == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(IsometryReport {
        mc_estimate,
        analytic,
        standard_error,
        z_score,
        n_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn uniform(n: usize, horizon: f64) -> Vec<f64> {
        (0..=n).map(|i| horizon * i as f64 / n as f64).collect()
    }

    #[test]
    fn zero_covariance_gives_zero_increments() {
        let ns = NoiseSpec::new(vec![0.0, 0.0]).unwrap();
        let p = sample_increments(&ns, &uniform(10, 1.0), 1, 2).unwrap();
        assert!((0..p.steps()).all(|n| p.row(n).iter().all(|x| *x == 0.0 && x.is_sign_positive())));
    }

    #[test]
    fn deterministic_in_seed_and_index() {
        let ns = NoiseSpec::new(vec![1.0, 0.25]).unwrap();
        let g = uniform(20, 1.0);
        assert_eq!(
            sample_increments(&ns, &g, 7, 3).unwrap(),
            sample_increments(&ns, &g, 7, 3).unwrap()
        );
        assert_ne!(
            sample_increments(&ns, &g, 7, 3).unwrap(),
            sample_increments(&ns, &g, 7, 4).unwrap()
        );
    }

    #[test]
    fn increment_variance_matches_lambda_dt() {
        // 10⁵ samples of one step with Δt = 0.01; Var(dW²) = 2σ⁴ gives the SE.
        let ns = NoiseSpec::new(vec![1.0]).unwrap();
        let g = vec![0.0, 0.01];
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let x = sample_increments(&ns, &g, 11, i).unwrap().row(0)[0];
            s += x * x;
            s2 += x.powi(4);
        }
        let (var, se) = stats::mean_and_se(s, s2, n as usize);
        assert!((var - 0.01).abs() <= 3.0 * se, "var {var} se {se}");
    }

    #[test]
    fn grid_validation() {
        let ns = NoiseSpec::new(vec![1.0]).unwrap();
        assert!(sample_increments(&ns, &[0.0, 0.5, 0.4], 0, 0).is_err());
        assert!(sample_increments(&ns, &[0.1, 0.5], 0, 0).is_err());
        assert!(sample_increments(&ns, &[0.0], 0, 0).is_err());
        assert!(NoiseSpec::new(vec![-1.0]).is_err());
    }

    #[test]
    fn trace_is_sum() {
        let ns = NoiseSpec::power_law(16, 1.0, 2.0).unwrap();
        let s: f64 = (1..=16).map(|j| 1.0 / (j * j) as f64).sum();
        assert!((ns.trace() - s).abs() < 1e-12);
    }

    #[test]
    fn coarsening_preserves_brownian_endpoint() {
        let ns = NoiseSpec::new(vec![1.0, 2.0]).unwrap();
        let fine = sample_increments(&ns, &uniform(16, 1.0), 5, 0).unwrap();
        let coarse = fine.coarsen(4).unwrap();
        assert_eq!(coarse.steps(), 4);
        assert_eq!(coarse.grid(), uniform(4, 1.0).as_slice());
        for j in 0..2 {
            let a: f64 = (0..16).map(|n| fine.row(n)[j]).sum();
            let b: f64 = (0..4).map(|n| coarse.row(n)[j]).sum();
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
        assert!(fine.coarsen(3).is_err());
    }

    #[test]
    fn isometry_analytic_values() {
        let ns = NoiseSpec::new(vec![1.0]).unwrap();
        let g = uniform(10, 1.0);
        let one = ito_isometry_check(&ns, &g, &Integrand::Constant(vec![1.0]), 2000, 0).unwrap();
        assert_relative_eq!(one.analytic, 1.0, max_relative = 1e-12);
        let two = ito_isometry_check(&ns, &g, &Integrand::Constant(vec![2.0]), 2000, 0).unwrap();
        assert_relative_eq!(two.analytic, 4.0, max_relative = 1e-12);
        let zero = ito_isometry_check(&ns, &g, &Integrand::Constant(vec![0.0]), 200, 0).unwrap();
        assert_eq!(zero.mc_estimate, 0.0);
        assert_eq!(zero.analytic, 0.0);
        assert_eq!(zero.z_score, 0.0);
    }

    #[test]
    fn isometry_rejects_small_ensembles() {
        let ns = NoiseSpec::new(vec![1.0]).unwrap();
        let g = uniform(4, 1.0);
        assert!(ito_isometry_check(&ns, &g, &Integrand::Constant(vec![1.0]), 99, 0).is_err());
        assert!(ito_isometry_check(&ns, &[], &Integrand::Constant(vec![1.0]), 100, 0).is_err());
    }

    #[test]
    fn disjoint_steps_are_uncorrelated() {
        let ns = NoiseSpec::new(vec![1.0]).unwrap();
        let g = uniform(2, 1.0);
        let n = 20_000u64;
        let (mut sxy, mut sxy2) = (0.0, 0.0);
        for i in 0..n {
            let p = sample_increments(&ns, &g, 3, i).unwrap();
            let v = p.row(0)[0] * p.row(1)[0];
            sxy += v;
            sxy2 += v * v;
        }
        let (m, se) = stats::mean_and_se(sxy, sxy2, n as usize);
        assert!(m.abs() <= 3.0 * se);
    }
}
