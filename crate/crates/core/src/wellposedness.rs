//! Constants of the existence, uniqueness and continuous-dependence
//! conditions, and sampling audits of user-supplied Lipschitz data.
//!
//! Every verdict here is a sufficient condition. A `false` verdict means the
//! certificate does not apply, not that a solution fails to exist.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Diffusion, Drift, ProblemSpec};
use crate::error::{Error, Result};
use crate::qwiener::NoiseSpec;
use crate::rng::{self, DOMAIN_AUDIT};
use crate::spectral::norm_sq;

/// Growth constants `L_g, L_h` and Lipschitz constants `L̃_g, L̃_h`:
/// `‖g(t,y)‖² ≤ L_g(1 + ‖y‖²)`, `‖g(t,y) − g(t,z)‖² ≤ L̃_g‖y − z‖²`, and
/// likewise for `h` in the Hilbert–Schmidt norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzBundle {
    pub growth_g: f64,
    pub growth_h: f64,
    pub lipschitz_g: f64,
    pub lipschitz_h: f64,
}

impl LipschitzBundle {
    pub fn new(growth_g: f64, growth_h: f64, lipschitz_g: f64, lipschitz_h: f64) -> Result<Self> {
        let b = Self {
            growth_g,
            growth_h,
            lipschitz_g,
            lipschitz_h,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("growth_g", self.growth_g),
            ("growth_h", self.growth_h),
            ("lipschitz_g", self.lipschitz_g),
            ("lipschitz_h", self.lipschitz_h),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// `C_i` for `i = 1..=k` and `N = Σ C_i²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Composition {
    pub c: Vec<f64>,
    pub n: f64,
}

/// Norm data pulled out of a spec once.
struct Data {
    m: f64,
    horizon: f64,
    norm_b: f64,
    jump: Vec<f64>,
    input_map: Vec<f64>,
    input: Vec<f64>,
    // ‖T(t_j − t_{j−1})‖ for j = 1..=k.
    gap_norm: Vec<f64>,
}

impl Data {
    fn new(spec: &ProblemSpec, m: f64) -> Self {
        let mut prev = 0.0;
        let gap_norm = spec
            .impulses
            .iter()
            .map(|e| {
                let g = spec.semigroup.exact_norm(e.time - prev);
                prev = e.time;
                g
            })
            .collect();
        Self {
            m,
            horizon: spec.horizon,
            norm_b: spec.control_operator_norm(),
            jump: spec.impulses.iter().map(|e| e.jump_norm()).collect(),
            input_map: spec.impulses.iter().map(|e| e.input_map_norm()).collect(),
            input: spec.impulses.iter().map(|e| e.input.norm()).collect(),
            gap_norm,
        }
    }

    fn k(&self) -> usize {
        self.jump.len()
    }

    /// `C_i = Π_{j=i+1..k} (1 + ‖D_j‖) τ_j · (1 + ‖D_i‖)` with `τ_j` either the
    /// exact `‖T(t_j − t_{j−1})‖` or the bound `M`.
    fn composition(&self, use_bound: bool) -> Composition {
        let k = self.k();
        let c: Vec<f64> = (1..=k)
            .map(|i| {
                let tail: f64 = (i + 1..=k)
                    .map(|j| {
                        let tau = if use_bound { self.m } else { self.gap_norm[j - 1] };
                        (1.0 + self.jump[j - 1]) * tau
                    })
                    .product();
                tail * (1.0 + self.jump[i - 1])
            })
            .collect();
        let n = c.iter().map(|x| x * x).sum();
        Composition { c, n }
    }

    fn jump_product_sq(&self) -> f64 {
        self.jump.iter().map(|d| (1.0 + d).powi(2)).product()
    }

    fn theorem1(&self, lb: &LipschitzBundle, n: f64) -> Theorem1 {
        let m = self.m;
        let m2 = m * m;
        let m4 = m2 * m2;
        let t = self.horizon;
        let k = self.k();
        let growth = t * t * lb.growth_g + t * lb.growth_h;
        let b2 = self.norm_b * self.norm_b;
        let m_pow = m.powi(2 * k as i32 + 2);
        let prod = self.jump_product_sq();
        let control_term = (m4 + m2) * b2 * n * growth;

        let script_n = m2 + m2 * growth;
        let script_s = m2 * t * t * lb.growth_g + m2 * t * lb.growth_h;
        let k0 = m_pow * prod + control_term;
        let inputs = |i: usize| (self.input_map[i - 1] * self.input[i - 1]).powi(2);
        let mut k1 = control_term;
        if k > 0 {
            let sum: f64 = (2..=k)
                .map(|i| {
                    let p: f64 = (i..=k).map(|j| (1.0 + self.jump[j - 1]).powi(2)).product();
                    p * inputs(i - 1)
                })
                .sum();
            k1 += m2 * sum + m2 * inputs(k);
        }
        let k2 = (m4 * n + m2) * b2 * t;
        let kk = 3.0 * m_pow * prod + 3.0 * m4 * n * growth;

        let ninth = 1.0 / 9.0;
        let binding = if !(script_n < ninth) {
            Some("𝒩 < 1/9")
        } else if !(k0 < ninth) {
            Some("K₀ < 1/9")
        } else if !(m2 < 1.0) {
            Some("M² < 1")
        } else if !(kk < 1.0) {
            Some("k < 1")
        } else {
            None
        };
        Theorem1 {
            script_n,
            script_s,
            k0,
            k1,
            k2,
            k: kk,
            verdict: binding.is_none(),
            binding_constraint: binding.map(str::to_string),
        }
    }

    fn theorem2(&self, lb: &LipschitzBundle, n: f64) -> Theorem2 {
        let m2 = self.m * self.m;
        let t2 = self.horizon * self.horizon;
        let lt = lb.lipschitz_g + lb.lipschitz_h;
        let k1 = 2.0 * m2 * t2 * lt;
        let k2 = 4.0 * m2 * m2 * (n + t2) * lt;
        let k = k1.max(k2);
        let verdict = k < 1.0;
        Theorem2 {
            k1,
            k2,
            k,
            verdict,
            binding_constraint: (!verdict).then(|| "k = max{k₁, k₂} < 1".to_string()),
        }
    }

    fn c_star(&self, lb: &LipschitzBundle, n: f64) -> CStar {
        let m2 = self.m * self.m;
        let t = self.horizon;
        let b2 = self.norm_b * self.norm_b;
        let lip = t * t * lb.lipschitz_g + t * lb.lipschitz_h;
        let denominator_y1 = 1.0 - 3.0 * m2 * lip;
        let denominator_y2 = 1.0 - 6.0 * m2 * (n + 1.0) * lip;
        let applicable = denominator_y1 > 0.0 && denominator_y2 > 0.0;
        let (y1, y2) = if applicable {
            (
                Some(3.0 * m2 * b2 / denominator_y1),
                Some(6.0 * m2 * t * (n + 1.0) * b2 / denominator_y2),
            )
        } else {
            (None, None)
        };
        CStar {
            value: y1.zip(y2).map(|(a, b)| a.max(b)),
            y1,
            y2,
            denominator_y1,
            denominator_y2,
            applicable,
        }
    }
}

/// Existence conditions `max{𝒩, K₀} < 1/9` and `max{M², k} < 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem1 {
    pub script_n: f64,
    pub script_s: f64,
    #[serde(rename = "K0")]
    pub k0: f64,
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    pub k: f64,
    pub verdict: bool,
    /// First violated inequality, if any.
    pub binding_constraint: Option<String>,
}

/// Uniqueness condition `k = max{k₁, k₂} < 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem2 {
    pub k1: f64,
    pub k2: f64,
    pub k: f64,
    pub verdict: bool,
    pub binding_constraint: Option<String>,
}

/// Continuous-dependence constant `C* = max{y1, y2}` with
/// `y1 = 3M²‖B‖² / (1 − 3M²(T²L̃_g + TL̃_h))` and
/// `y2 = 6M²T(N + 1)‖B‖² / (1 − 6M²(N + 1)(T²L̃_g + TL̃_h))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CStar {
    pub value: Option<f64>,
    pub y1: Option<f64>,
    pub y2: Option<f64>,
    pub denominator_y1: f64,
    pub denominator_y2: f64,
    /// Both denominators positive.
    pub applicable: bool,
}

/// Constants recomputed with `M` in place of every exact `‖T(t_j − t_{j−1})‖`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundVariant {
    pub c: Vec<f64>,
    pub n: f64,
    pub theorem1: Theorem1,
    pub theorem2: Theorem2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub m: f64,
    pub horizon: f64,
    pub control_operator_norm: f64,
    pub jump_norms: Vec<f64>,
    pub c: Vec<f64>,
    pub n: f64,
    pub theorem1: Theorem1,
    pub theorem2: Theorem2,
    pub c_star: CStar,
    pub m_bound: BoundVariant,
    pub lipschitz: LipschitzBundle,
    /// Every violated inequality, or `"none"`.
    pub binding_constraint: String,
    pub r0_formula: String,
    pub notes: Vec<String>,
}

/// `C_i` and `N` with exact semigroup norms.
pub fn composition_constants(spec: &ProblemSpec) -> Composition {
    Data::new(spec, spec.semigroup.bound_m()).composition(false)
}

pub fn theorem1_check(spec: &ProblemSpec, lb: &LipschitzBundle) -> Result<Theorem1> {
    theorem1_check_with_bound(spec, lb, spec.semigroup.bound_m())
}

pub fn theorem2_check(spec: &ProblemSpec, lb: &LipschitzBundle) -> Result<Theorem2> {
    theorem2_check_with_bound(spec, lb, spec.semigroup.bound_m())
}

/// Diagnostic form with a caller-chosen `M`; it is not checked against
/// `sup ‖T(t)‖`.
pub fn theorem1_check_with_bound(spec: &ProblemSpec, lb: &LipschitzBundle, m: f64) -> Result<Theorem1> {
    let data = checked(spec, lb, m)?;
    let n = data.composition(false).n;
    Ok(data.theorem1(lb, n))
}

/// Diagnostic form with a caller-chosen `M`.
pub fn theorem2_check_with_bound(spec: &ProblemSpec, lb: &LipschitzBundle, m: f64) -> Result<Theorem2> {
    let data = checked(spec, lb, m)?;
    let n = data.composition(false).n;
    Ok(data.theorem2(lb, n))
}

pub fn c_star(spec: &ProblemSpec, lb: &LipschitzBundle) -> Result<CStar> {
    let data = checked(spec, lb, spec.semigroup.bound_m())?;
    let n = data.composition(false).n;
    Ok(data.c_star(lb, n))
}

fn checked(spec: &ProblemSpec, lb: &LipschitzBundle, m: f64) -> Result<Data> {
    spec.validate()?;
    lb.validate()?;
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidArgument(format!("M must be positive, got {m}")));
    }
    Ok(Data::new(spec, m))
}

/// Full report with exact and M-bound variants.
pub fn constants_report(spec: &ProblemSpec, lb: &LipschitzBundle) -> Result<ConstantsReport> {
    let data = checked(spec, lb, spec.semigroup.bound_m())?;
    let exact = data.composition(false);
    let bound = data.composition(true);
    let theorem1 = data.theorem1(lb, exact.n);
    let theorem2 = data.theorem2(lb, exact.n);
    let mut violated: Vec<String> = Vec::new();
    violated.extend(theorem1.binding_constraint.iter().map(|b| format!("theorem 1: {b}")));
    violated.extend(theorem2.binding_constraint.iter().map(|b| format!("theorem 2: {b}")));
    let mut notes = vec![
        "verdicts are sufficient conditions only; false means the certificate does not apply, not that no solution exists"
            .to_string(),
    ];
    if data.m >= 1.0 {
        notes.push(format!(
            "M = {} ≥ 1, so max{{M², k}} < 1 and 𝒩 ≥ M² > 1/9 cannot hold",
            data.m
        ));
    }
    let r0_formula = format!(
        "r0 >= ({:.6e} + {:.6e}·E‖u‖²_L2 + Σ_k E‖v_k‖²-weighted terms) / (1 − 9·max{{𝒩, K₀}})",
        theorem1.k0, theorem1.k2
    );
    Ok(ConstantsReport {
        m: data.m,
        horizon: data.horizon,
        control_operator_norm: data.norm_b,
        jump_norms: data.jump.clone(),
        c_star: data.c_star(lb, exact.n),
        m_bound: BoundVariant {
            theorem1: data.theorem1(lb, bound.n),
            theorem2: data.theorem2(lb, bound.n),
            c: bound.c,
            n: bound.n,
        },
        c: exact.c,
        n: exact.n,
        theorem1,
        theorem2,
        lipschitz: *lb,
        binding_constraint: if violated.is_empty() {
            "none".into()
        } else {
            violated.join("; ")
        },
        r0_formula,
        notes,
    })
}

/// Largest horizon in `(0, t_max]` for which the uniqueness verdict holds,
/// found by bisection to width `tol`. Impulses at or beyond a trial horizon
/// are dropped and `M` is tightened to that horizon. Returns `None` when the
/// verdict fails already at `tol`.
pub fn largest_certified_horizon(
    spec: &ProblemSpec,
    lb: &LipschitzBundle,
    t_max: f64,
    tol: f64,
) -> Result<Option<f64>> {
    if !(t_max > 0.0 && tol > 0.0) {
        return Err(Error::InvalidArgument("t_max and tol must be positive".into()));
    }
    let passes = |t: f64| -> Result<bool> {
        let mut s = spec.clone();
        s.horizon = t;
        s.impulses.retain(|e| e.time < t);
        let m = s.semigroup.operator_bound(t)?;
        Ok(theorem2_check_with_bound(&s, lb, m)?.verdict)
    };
    if passes(t_max)? {
        return Ok(Some(t_max));
    }
    if !passes(tol)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (tol, t_max);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if passes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Which coefficient an audit samples.
pub enum AuditTarget<'a> {
    Drift(&'a dyn Drift),
    /// Diffusion measured in the Hilbert–Schmidt norm weighted by the noise
    /// eigenvalues, `Σ_ij h_ij² λ_j`.
    Diffusion(&'a dyn Diffusion, &'a NoiseSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzViolation {
    pub t: f64,
    pub ratio: f64,
    pub kind: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzAudit {
    /// `max ‖f(t,y) − f(t,z)‖² / ‖y − z‖²` over the samples.
    pub max_observed_ratio: f64,
    /// `max ‖f(t,y)‖² / (1 + ‖y‖²)` over the samples.
    pub max_growth_ratio: f64,
    pub violations: Vec<LipschitzViolation>,
    pub n_samples: usize,
}

/// Samples `t ∈ [0, horizon]` and pairs `y, z` with `‖y‖², ‖z‖² ≤ radius`.
/// Half of the pairs are independent, half are close together. A sample
/// counts as a violation when a ratio exceeds its claimed constant by more
/// than rounding. Pass `f64::INFINITY` to skip a claim.
#[allow(clippy::too_many_arguments)]
pub fn audit_lipschitz(
    target: AuditTarget<'_>,
    dim: usize,
    horizon: f64,
    claimed_lipschitz: f64,
    claimed_growth: f64,
    n_samples: usize,
    radius: f64,
    seed: u64,
) -> Result<LipschitzAudit> {
    if n_samples == 0 || !(radius > 0.0) || dim == 0 || !(horizon >= 0.0) {
        return Err(Error::InvalidArgument(
            "audit needs n_samples >= 1, radius > 0, dim >= 1 and horizon >= 0".into(),
        ));
    }
    let (width, weights): (usize, Vec<f64>) = match &target {
        AuditTarget::Drift(_) => (dim, vec![1.0; dim]),
        AuditTarget::Diffusion(_, ns) => {
            let modes = ns.modes();
            let w = (0..dim * modes).map(|i| ns.lambda()[i % modes]).collect();
            (dim * modes, w)
        }
    };
    let eval = |t: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        out.fill(0.0);
        catch_unwind(AssertUnwindSafe(|| match &target {
            AuditTarget::Drift(g) => g.eval(t, y, out),
            AuditTarget::Diffusion(h, _) => h.eval(t, y, out),
        }))
        .map_err(|_| Error::Callback(format!("coefficient panicked at t = {t}")))?;
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Callback(format!(
                "coefficient returned a non-finite value at t = {t}"
            )))
        }
    };
    let weighted = |a: &[f64], b: Option<&[f64]>| -> f64 {
        match b {
            Some(b) => a
                .iter()
                .zip(b)
                .zip(&weights)
                .map(|((x, y), w)| (x - y) * (x - y) * w)
                .sum(),
            None => a.iter().zip(&weights).map(|(x, w)| x * x * w).sum(),
        }
    };

    let mut rng = rng::stream(seed, DOMAIN_AUDIT, 0x11);
    let r = radius.sqrt();
    let in_ball = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let len = norm_sq(&dir).sqrt().max(f64::MIN_POSITIVE);
        let rad = r * rng.random::<f64>().powf(1.0 / dim as f64);
        dir.into_iter().map(|x| x / len * rad).collect()
    };
    let (mut fy, mut fz) = (vec![0.0; width], vec![0.0; width]);
    let mut report = LipschitzAudit {
        max_observed_ratio: 0.0,
        max_growth_ratio: 0.0,
        violations: Vec::new(),
        n_samples,
    };
    let exceeds = |ratio: f64, claim: f64| ratio > claim * (1.0 + 1e-9) + 1e-15;
    for s in 0..n_samples {
        let t = rng.random_range(0.0..=horizon);
        let y = in_ball(&mut rng);
        let z = if s % 2 == 0 {
            in_ball(&mut rng)
        } else {
            let eps = r * 10f64.powf(rng.random_range(-6.0..-1.0));
            let mut z: Vec<f64> = y
                .iter()
                .map(|v| v + eps * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let n = norm_sq(&z).sqrt();
            if n > r {
                z.iter_mut().for_each(|v| *v *= r / n);
            }
            z
        };
        eval(t, &y, &mut fy)?;
        eval(t, &z, &mut fz)?;
        let dist = y.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        if dist > 0.0 {
            let ratio = weighted(&fy, Some(&fz)) / dist;
            report.max_observed_ratio = report.max_observed_ratio.max(ratio);
            if exceeds(ratio, claimed_lipschitz) {
                report.violations.push(LipschitzViolation {
                    t,
                    ratio,
                    kind: "lipschitz",
                });
            }
        }
        let growth = weighted(&fy, None) / (1.0 + norm_sq(&y));
        report.max_growth_ratio = report.max_growth_ratio.max(growth);
        if exceeds(growth, claimed_growth) {
            report.violations.push(LipschitzViolation {
                t,
                ratio: growth,
                kind: "growth",
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{DiffusionFn, ImpulseEvent};
    use crate::spectral::{SemigroupSpec, SpectralState};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn spec(mu: Vec<f64>, horizon: f64, impulses: Vec<ImpulseEvent>) -> ProblemSpec {
        let d = mu.len();
        ProblemSpec::new(
            SemigroupSpec::for_horizon(mu, horizon).unwrap(),
            NoiseSpec::new(vec![1.0]).unwrap(),
            horizon,
            SpectralState::zeros(d),
        )
        .with_control_operator(DMatrix::identity(d, d))
        .with_impulses(impulses)
    }

    #[test]
    fn composition_examples() {
        let s = spec(vec![-1.0], 1.0, vec![]);
        assert_eq!(composition_constants(&s), Composition { c: vec![], n: 0.0 });

        let one = spec(
            vec![-1.0],
            1.0,
            vec![ImpulseEvent::scaled(0.5, 1, 1.0, vec![0.0]).unwrap()],
        );
        let c = composition_constants(&one);
        assert_relative_eq!(c.c[0], 2.0, max_relative = 1e-14);
        assert_relative_eq!(c.n, 4.0, max_relative = 1e-14);

        let two = spec(
            vec![0.0],
            1.0,
            vec![
                ImpulseEvent::scaled(0.3, 1, 0.0, vec![0.0]).unwrap(),
                ImpulseEvent::scaled(0.6, 1, 0.0, vec![0.0]).unwrap(),
            ],
        );
        let c = composition_constants(&two);
        assert_eq!(c.c, vec![1.0, 1.0]);
        assert_eq!(c.n, 2.0);
    }

    #[test]
    fn theorem_two_example() {
        let s = spec(
            vec![-1.0],
            0.25,
            vec![ImpulseEvent::scaled(0.1, 1, 0.0, vec![0.0]).unwrap()],
        );
        let lb = LipschitzBundle::new(0.0, 0.0, 0.01, 0.01).unwrap();
        let r = theorem2_check(&s, &lb).unwrap();
        assert_relative_eq!(r.k1, 0.0025, max_relative = 1e-12);
        assert_relative_eq!(r.k2, 0.085, max_relative = 1e-12);
        assert!(r.verdict);
        assert!(r.binding_constraint.is_none());

        let zero = LipschitzBundle::new(0.0, 0.0, 0.0, 0.0).unwrap();
        let r = theorem2_check(&s, &zero).unwrap();
        assert_eq!(r.k, 0.0);
        assert!(r.verdict);
    }

    #[test]
    fn theorem_one_floor_and_diagnostic_bound() {
        let mut s = spec(vec![-1.0], 1.0, vec![]);
        s.control_operator = DMatrix::zeros(1, 1);
        let lb = LipschitzBundle::new(0.0, 0.0, 0.0, 0.0).unwrap();
        let r = theorem1_check(&s, &lb).unwrap();
        assert_eq!(r.script_n, 1.0);
        assert!(!r.verdict);
        assert_eq!(r.binding_constraint.as_deref(), Some("𝒩 < 1/9"));

        let r = theorem1_check_with_bound(&s, &lb, 0.1).unwrap();
        assert_relative_eq!(r.script_n, 0.01, max_relative = 1e-12);
        assert!(r.verdict);
    }

    #[test]
    fn c_star_routes_negative_denominators() {
        let s = spec(vec![-1.0], 1.0, vec![]);
        let big = LipschitzBundle::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let c = c_star(&s, &big).unwrap();
        assert!(!c.applicable);
        assert!(c.value.is_none());
        let small = LipschitzBundle::new(0.0, 0.0, 0.01, 0.01).unwrap();
        let c = c_star(&s, &small).unwrap();
        assert!(c.applicable);
        assert_relative_eq!(c.y1.unwrap(), 3.0 / (1.0 - 3.0 * 0.02), max_relative = 1e-12);
        assert_relative_eq!(c.y2.unwrap(), 6.0 / (1.0 - 6.0 * 0.02), max_relative = 1e-12);
    }

    #[test]
    fn verdicts_are_monotone() {
        let s = spec(
            vec![-1.0],
            0.25,
            vec![ImpulseEvent::scaled(0.1, 1, 0.0, vec![0.0]).unwrap()],
        );
        let mut prev = true;
        for i in 0..40 {
            let l = 0.005 * i as f64;
            let v = theorem2_check(&s, &LipschitzBundle::new(l, l, l, l).unwrap())
                .unwrap()
                .verdict;
            assert!(prev || !v);
            prev = v;
        }
        assert!(!prev);
    }

    #[test]
    fn certified_horizon() {
        let s = spec(vec![-1.0], 1.0, vec![]);
        let lb = LipschitzBundle::new(0.0, 0.0, 0.04, 0.04).unwrap();
        let t = largest_certified_horizon(&s, &lb, 10.0, 1e-9).unwrap().unwrap();
        // No impulses: k = max(2, 4)·T²·0.08 = 0.32·T², so T* = 1/√0.32.
        assert_relative_eq!(t, 1.0 / 0.32f64.sqrt(), epsilon = 1e-8);
    }

    #[test]
    fn lipschitz_audit_examples() {
        let constant = |_t: f64, _y: &[f64], out: &mut [f64]| out.fill(0.7);
        let r = audit_lipschitz(AuditTarget::Drift(&constant), 3, 1.0, 0.0, f64::INFINITY, 500, 4.0, 1).unwrap();
        assert_eq!(r.max_observed_ratio, 0.0);
        assert!(r.violations.is_empty());

        let linear = |_t: f64, y: &[f64], out: &mut [f64]| {
            out.iter_mut().zip(y).for_each(|(o, v)| *o = v / 5.0);
        };
        let r = audit_lipschitz(AuditTarget::Drift(&linear), 3, 1.0, 0.04, 0.04, 2000, 4.0, 1).unwrap();
        assert!(r.violations.is_empty(), "{:?}", r.violations.first());
        assert!(r.max_observed_ratio <= 0.04 * (1.0 + 1e-9));
        assert!(r.max_observed_ratio > 0.04 * (1.0 - 1e-9));

        let r = audit_lipschitz(AuditTarget::Drift(&linear), 3, 1.0, 0.0, f64::INFINITY, 50, 4.0, 1).unwrap();
        assert!(!r.violations.is_empty());
    }

    #[test]
    fn diffusion_audit_and_callback_failures() {
        let ns = NoiseSpec::new(vec![0.5, 0.0]).unwrap();
        let h = DiffusionFn(|_t: f64, y: &[f64], out: &mut [f64]| {
            out[0] = y[0];
            out[1] = 100.0 * y[0];
        });
        let r = audit_lipschitz(AuditTarget::Diffusion(&h, &ns), 1, 1.0, 0.5, 0.5, 500, 1.0, 3).unwrap();
        assert!(r.violations.is_empty());
        assert!((r.max_observed_ratio - 0.5).abs() < 1e-9);

        let boom = |_t: f64, _y: &[f64], _out: &mut [f64]| panic!("boom");
        let r = audit_lipschitz(AuditTarget::Drift(&boom), 2, 1.0, 1.0, 1.0, 5, 1.0, 0);
        assert!(matches!(r, Err(Error::Callback(_))));
        let nan = |_t: f64, _y: &[f64], out: &mut [f64]| out.fill(f64::NAN);
        assert!(matches!(
            audit_lipschitz(AuditTarget::Drift(&nan), 2, 1.0, 1.0, 1.0, 5, 1.0, 0),
            Err(Error::Callback(_))
        ));
    }
}
