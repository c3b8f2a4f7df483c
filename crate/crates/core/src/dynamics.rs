//! Pathwise simulation of the mild solution with scheduled impulses.
//!
//! One step of the scheme is the left-endpoint quadrature of the mild form
//! over `[t, t + dt]`:
//!
//! ```text
//! y(t + dt) = T(dt) [ y(t) + (B u(t) + g(t, y(t))) dt + h(t, y(t)) ΔW ]
//! ```
//!
//! Impulse times are grid nodes. The state stored at an impulse node is the
//! left limit; the right limit `(I + D_k) y(t_k) + E_k v_k` is kept alongside
//! and is where integration restarts.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::control_opt::ControlSignal;
use crate::error::{ensure_finite, Error, Result};
use crate::qwiener::{self, NoisePath, NoiseSpec};
use crate::spectral::{norm_sq, SemigroupSpec, SpectralState};
use crate::stats;

/// Nonlinear drift `g(t, y)`.
pub trait Drift: Send + Sync {
    /// Writes `g(t, y)` into `out` (same length as `y`).
    fn eval(&self, t: f64, y: &[f64], out: &mut [f64]);
}

/// Diffusion `h(t, y)` as a `d × J` coefficient matrix: column `j` is the
/// image of the `j`-th noise direction.
pub trait Diffusion: Send + Sync {
    /// Writes the coefficients row-major, `out[i * J + j]`. `out` arrives zeroed.
    fn eval(&self, t: f64, y: &[f64], out: &mut [f64]);
}

impl<F> Drift for F
where
    F: Fn(f64, &[f64], &mut [f64]) + Send + Sync,
{
    fn eval(&self, t: f64, y: &[f64], out: &mut [f64]) {
        self(t, y, out)
    }
}

/// Wrapper to use a closure as a [`Diffusion`].
pub struct DiffusionFn<F>(pub F);

impl<F> Diffusion for DiffusionFn<F>
where
    F: Fn(f64, &[f64], &mut [f64]) + Send + Sync,
{
    fn eval(&self, t: f64, y: &[f64], out: &mut [f64]) {
        (self.0)(t, y, out)
    }
}

/// The zero map, usable as drift or diffusion.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroField;

impl Drift for ZeroField {
    fn eval(&self, _t: f64, _y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

impl Diffusion for ZeroField {
    fn eval(&self, _t: f64, _y: &[f64], _out: &mut [f64]) {}
}

/// Scheduled jump `y(t_k+) = (I + D_k) y(t_k) + E_k v_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseEvent {
    pub time: f64,
    pub jump: DMatrix<f64>,
    pub input_map: DMatrix<f64>,
    pub input: DVector<f64>,
}

impl ImpulseEvent {
    pub fn new(time: f64, jump: DMatrix<f64>, input_map: DMatrix<f64>, input: DVector<f64>) -> Result<Self> {
        let ev = Self {
            time,
            jump,
            input_map,
            input,
        };
        ev.check_shape()?;
        Ok(ev)
    }

    /// Jump with `D = jump_scale · I` and `E v = effect`.
    pub fn scaled(time: f64, dim: usize, jump_scale: f64, effect: Vec<f64>) -> Result<Self> {
        let m = effect.len();
        Self::new(
            time,
            DMatrix::identity(dim, dim) * jump_scale,
            DMatrix::identity(dim, m),
            DVector::from_vec(effect),
        )
    }

    fn check_shape(&self) -> Result<()> {
        let d = self.jump.nrows();
        if self.jump.ncols() != d {
            return Err(Error::InvalidSpec("impulse jump operator must be square".into()));
        }
        if self.input_map.nrows() != d || self.input_map.ncols() != self.input.len() {
            return Err(Error::InvalidSpec(format!(
                "impulse input map is {}x{} but the state has {d} modes and the input {} entries",
                self.input_map.nrows(),
                self.input_map.ncols(),
                self.input.len()
            )));
        }
        ensure_finite(self.jump.as_slice(), "impulse jump operator")?;
        ensure_finite(self.input_map.as_slice(), "impulse input map")?;
        ensure_finite(self.input.as_slice(), "impulse input")?;
        if !self.time.is_finite() {
            return Err(Error::NonFinite("impulse time".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.jump.nrows()
    }

    /// `‖D_k‖` (spectral norm).
    pub fn jump_norm(&self) -> f64 {
        operator_norm(&self.jump)
    }

    /// `‖E_k‖` (spectral norm).
    pub fn input_map_norm(&self) -> f64 {
        operator_norm(&self.input_map)
    }

    /// `E_k v_k`.
    pub fn input_effect(&self) -> DVector<f64> {
        &self.input_map * &self.input
    }

    pub(crate) fn apply_slice(&self, y: &[f64]) -> Vec<f64> {
        let y = DVector::from_column_slice(y);
        let out = &y + &self.jump * &y + self.input_effect();
        out.as_slice().to_vec()
    }
}

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Returns `(I + D_k) y⁻ + E_k v_k`.
pub fn apply_impulse(y_minus: &SpectralState, ev: &ImpulseEvent) -> Result<SpectralState> {
    if y_minus.dim() != ev.dim() {
        return Err(Error::DimensionMismatch {
            context: "apply_impulse",
            expected: ev.dim(),
            got: y_minus.dim(),
        });
    }
    SpectralState::new(ev.apply_slice(y_minus.as_slice()))
}

/// Full description of an impulsive stochastic system on `[0, horizon]`.
#[derive(Clone)]
pub struct ProblemSpec {
    pub semigroup: SemigroupSpec,
    /// `B`, a `d × m` matrix.
    pub control_operator: DMatrix<f64>,
    pub impulses: Vec<ImpulseEvent>,
    pub drift: Arc<dyn Drift>,
    pub diffusion: Arc<dyn Diffusion>,
    pub noise: NoiseSpec,
    pub horizon: f64,
    pub initial: SpectralState,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("semigroup", &self.semigroup)
            .field("control_operator", &self.control_operator)
            .field("impulses", &self.impulses)
            .field("noise", &self.noise)
            .field("horizon", &self.horizon)
            .field("initial", &self.initial)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// Linear system with `B = 0` (one control column), no impulses and zero
    /// drift and diffusion. Use the `with_*` methods to fill in the rest.
    pub fn new(semigroup: SemigroupSpec, noise: NoiseSpec, horizon: f64, initial: SpectralState) -> Self {
        let d = semigroup.dim();
        Self {
            semigroup,
            control_operator: DMatrix::zeros(d, 1),
            impulses: Vec::new(),
            drift: Arc::new(ZeroField),
            diffusion: Arc::new(ZeroField),
            noise,
            horizon,
            initial,
        }
    }

    pub fn with_control_operator(mut self, b: DMatrix<f64>) -> Self {
        self.control_operator = b;
        self
    }

    pub fn with_impulses(mut self, impulses: Vec<ImpulseEvent>) -> Self {
        self.impulses = impulses;
        self
    }

    pub fn with_drift(mut self, g: Arc<dyn Drift>) -> Self {
        self.drift = g;
        self
    }

    pub fn with_diffusion(mut self, h: Arc<dyn Diffusion>) -> Self {
        self.diffusion = h;
        self
    }

    pub fn dim(&self) -> usize {
        self.semigroup.dim()
    }

    pub fn control_dim(&self) -> usize {
        self.control_operator.ncols()
    }

    pub fn noise_modes(&self) -> usize {
        self.noise.modes()
    }

    pub fn impulse_times(&self) -> Vec<f64> {
        self.impulses.iter().map(|e| e.time).collect()
    }

    /// `‖B‖` (spectral norm).
    pub fn control_operator_norm(&self) -> f64 {
        operator_norm(&self.control_operator)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.initial.dim() != d {
            return Err(Error::DimensionMismatch {
                context: "initial state",
                expected: d,
                got: self.initial.dim(),
            });
        }
        if self.control_operator.nrows() != d || self.control_operator.ncols() == 0 {
            return Err(Error::InvalidSpec(format!(
                "control operator must be {d} x m with m >= 1, got {}x{}",
                self.control_operator.nrows(),
                self.control_operator.ncols()
            )));
        }
        ensure_finite(self.control_operator.as_slice(), "control operator")?;
        let m_needed = self.semigroup.operator_bound(self.horizon)?;
        if self.semigroup.bound_m() < m_needed * (1.0 - 1e-12) {
            return Err(Error::InvalidSpec(format!(
                "semigroup bound M = {} is below sup ‖T(t)‖ = {m_needed} on [0, T]",
                self.semigroup.bound_m()
            )));
        }
        let mut prev = 0.0;
        for (k, ev) in self.impulses.iter().enumerate() {
            ev.check_shape()?;
            if ev.dim() != d {
                return Err(Error::DimensionMismatch {
                    context: "impulse jump operator",
                    expected: d,
                    got: ev.dim(),
                });
            }
            if !(ev.time > 0.0 && ev.time < self.horizon) {
                return Err(Error::InvalidSpec(format!(
                    "impulse time {} outside (0, T) with T = {}",
                    ev.time, self.horizon
                )));
            }
            if k > 0 && !(ev.time > prev) {
                return Err(Error::InvalidSpec("impulse times must be strictly increasing".into()));
            }
            prev = ev.time;
        }
        Ok(())
    }

    /// Uniform grid of step about `dt` refined with the impulse times and,
    /// if given, the control breakpoints.
    pub fn grid(&self, dt: f64, control: Option<&ControlSignal>) -> Result<Vec<f64>> {
        let mut required = self.impulse_times();
        if let Some(u) = control {
            required.extend_from_slice(u.breakpoints());
        }
        build_grid(self.horizon, dt, &required)
    }
}

/// Grid `0 = t_0 < … < t_N = horizon` with `N = ⌈horizon / dt⌉` equal steps,
/// then every time in `required` that lies strictly inside is made a node.
/// Existing nodes within `1e-9` of a step from a required time are moved onto it.
pub fn build_grid(horizon: f64, dt: f64, required: &[f64]) -> Result<Vec<f64>> {
    if !(horizon > 0.0 && horizon.is_finite()) || !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidGrid(format!("bad horizon {horizon} or step {dt}")));
    }
    let n = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    let step = horizon / n as f64;
    let mut grid: Vec<f64> = (0..=n)
        .map(|i| if i == n { horizon } else { i as f64 * step })
        .collect();
    let snap = 1e-9 * step;
    for &r in required {
        if !(r > 0.0 && r < horizon) {
            continue;
        }
        let pos = grid.partition_point(|g| *g < r);
        if (grid[pos] - r).abs() <= snap {
            grid[pos] = r;
        } else if pos > 0 && (r - grid[pos - 1]).abs() <= snap {
            grid[pos - 1] = r;
        } else {
            grid.insert(pos, r);
        }
    }
    qwiener::validate_grid(&grid)?;
    Ok(grid)
}

fn locate_node(grid: &[f64], t: f64) -> Option<usize> {
    let tol = 1e-12 * grid.last().copied().unwrap_or(1.0).max(1.0);
    let pos = grid.partition_point(|g| *g < t - tol);
    (pos < grid.len() && (grid[pos] - t).abs() <= tol).then_some(pos)
}

/// Piecewise trajectory with both one-sided limits at impulse times.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: Vec<f64>,
    states: Vec<SpectralState>,
    impulse_nodes: Vec<usize>,
    plus_states: Vec<SpectralState>,
}

impl Path {
    pub(crate) fn from_parts(
        grid: Vec<f64>,
        states: Vec<SpectralState>,
        impulse_nodes: Vec<usize>,
        plus_states: Vec<SpectralState>,
    ) -> Self {
        Self {
            grid,
            states,
            impulse_nodes,
            plus_states,
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// State at every grid node; left limits at impulse nodes.
    pub fn states(&self) -> &[SpectralState] {
        &self.states
    }

    /// Grid index of each impulse time.
    pub fn impulse_nodes(&self) -> &[usize] {
        &self.impulse_nodes
    }

    /// `y(t_k+)` for each impulse, in schedule order.
    pub fn plus_states(&self) -> &[SpectralState] {
        &self.plus_states
    }

    pub fn final_state(&self) -> &SpectralState {
        self.states.last().unwrap()
    }

    /// The state integration continues from at `node`: the right limit at
    /// impulse nodes, the stored state elsewhere.
    pub fn right_state(&self, node: usize) -> &SpectralState {
        match self.impulse_nodes.binary_search(&node) {
            Ok(k) => &self.plus_states[k],
            Err(_) => &self.states[node],
        }
    }
}

/// Precomputed per-step data shared by every path on one grid.
pub(crate) struct StepPlan<'a> {
    spec: &'a ProblemSpec,
    control: &'a ControlSignal,
    grid: &'a [f64],
    decay: Vec<Vec<f64>>,
    step_decay: Vec<usize>,
    step_control: Vec<usize>,
    control_effect: Vec<Vec<f64>>,
    impulse_nodes: Vec<usize>,
}

pub(crate) struct Workspace {
    g: Vec<f64>,
    h: Vec<f64>,
    next: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(d: usize, modes: usize) -> Self {
        Self {
            g: vec![0.0; d],
            h: vec![0.0; d * modes],
            next: vec![0.0; d],
        }
    }
}

impl<'a> StepPlan<'a> {
    pub(crate) fn new(spec: &'a ProblemSpec, control: &'a ControlSignal, grid: &'a [f64]) -> Result<Self> {
        spec.validate()?;
        qwiener::validate_grid(grid)?;
        let tol = 1e-12 * spec.horizon.max(1.0);
        if (grid.last().unwrap() - spec.horizon).abs() > tol {
            return Err(Error::InvalidGrid(format!(
                "grid ends at {} but the horizon is {}",
                grid.last().unwrap(),
                spec.horizon
            )));
        }
        if control.dim() != spec.control_dim() {
            return Err(Error::DimensionMismatch {
                context: "control signal",
                expected: spec.control_dim(),
                got: control.dim(),
            });
        }
        if (control.horizon() - spec.horizon).abs() > tol {
            return Err(Error::InvalidArgument(format!(
                "control horizon {} differs from problem horizon {}",
                control.horizon(),
                spec.horizon
            )));
        }
        let mut impulse_nodes = Vec::with_capacity(spec.impulses.len());
        for (index, ev) in spec.impulses.iter().enumerate() {
            let node = locate_node(grid, ev.time).ok_or(Error::ImpulseNotOnGrid { index, time: ev.time })?;
            impulse_nodes.push(node);
        }
        for &b in control.breakpoints() {
            if locate_node(grid, b).is_none() {
                return Err(Error::BreakpointNotOnGrid(b));
            }
        }

        let mut decay: Vec<Vec<f64>> = Vec::new();
        let mut dts: Vec<f64> = Vec::new();
        let mut step_decay = Vec::with_capacity(grid.len() - 1);
        let mut step_control = Vec::with_capacity(grid.len() - 1);
        for w in grid.windows(2) {
            let dt = w[1] - w[0];
            let idx = match dts.iter().position(|d| *d == dt) {
                Some(i) => i,
                None => {
                    dts.push(dt);
                    decay.push(spec.semigroup.factors(dt));
                    dts.len() - 1
                }
            };
            step_decay.push(idx);
            step_control.push(control.interval_index(w[0]));
        }
        let control_effect = control
            .values()
            .iter()
            .map(|v| {
                (&spec.control_operator * DVector::from_column_slice(v))
                    .as_slice()
                    .to_vec()
            })
            .collect();
        Ok(Self {
            spec,
            control,
            grid,
            decay,
            step_decay,
            step_control,
            control_effect,
            impulse_nodes,
        })
    }

    pub(crate) fn grid(&self) -> &[f64] {
        self.grid
    }

    pub(crate) fn impulse_nodes(&self) -> &[usize] {
        &self.impulse_nodes
    }

    pub(crate) fn check_noise(&self, noise: &NoisePath) -> Result<()> {
        if noise.modes() != self.spec.noise_modes() {
            return Err(Error::DimensionMismatch {
                context: "noise modes",
                expected: self.spec.noise_modes(),
                got: noise.modes(),
            });
        }
        if noise.grid() != self.grid {
            return Err(Error::InvalidGrid("noise path is sampled on a different grid".into()));
        }
        Ok(())
    }

    /// Integrates one path. With `frozen = Some(p)`, `g` and `h` are evaluated
    /// on `p` (right limits at impulse nodes) instead of the current iterate;
    /// this is one sweep of the Picard map.
    ///
    /// `visit(node, left_state, plus_state)` is called for node 0 and after
    /// every step.
    pub(crate) fn run<V>(
        &self,
        noise: &NoisePath,
        frozen: Option<&Path>,
        ws: &mut Workspace,
        mut visit: V,
    ) -> Result<()>
    where
        V: FnMut(usize, &[f64], Option<&[f64]>) -> Result<()>,
    {
        self.check_noise(noise)?;
        let spec = self.spec;
        let d = spec.dim();
        let modes = spec.noise_modes();
        let mut y = spec.initial.as_slice().to_vec();
        visit(0, &y, None)?;
        let mut next_impulse = 0;
        for n in 0..self.grid.len() - 1 {
            let t = self.grid[n];
            let dt = self.grid[n + 1] - t;
            let arg = match frozen {
                Some(p) => p.right_state(n).as_slice(),
                None => &y,
            };
            spec.drift.eval(t, arg, &mut ws.g);
            ws.h.fill(0.0);
            spec.diffusion.eval(t, arg, &mut ws.h);
            let decay = &self.decay[self.step_decay[n]];
            let bu = &self.control_effect[self.step_control[n]];
            let dw = noise.row(n);
            for i in 0..d {
                let row = &ws.h[i * modes..(i + 1) * modes];
                let stoch: f64 = row.iter().zip(dw).map(|(a, b)| a * b).sum();
                ws.next[i] = decay[i] * (y[i] + (bu[i] + ws.g[i]) * dt + stoch);
            }
            std::mem::swap(&mut y, &mut ws.next);
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("state at t = {}", self.grid[n + 1])));
            }
            let node = n + 1;
            if next_impulse < self.impulse_nodes.len() && self.impulse_nodes[next_impulse] == node {
                let plus = spec.impulses[next_impulse].apply_slice(&y);
                visit(node, &y, Some(&plus))?;
                y = plus;
                next_impulse += 1;
            } else {
                visit(node, &y, None)?;
            }
        }
        Ok(())
    }

    pub(crate) fn path(&self, noise: &NoisePath, frozen: Option<&Path>, ws: &mut Workspace) -> Result<Path> {
        let mut states = Vec::with_capacity(self.grid.len());
        let mut plus_states = Vec::with_capacity(self.impulse_nodes.len());
        self.run(noise, frozen, ws, |_, left, plus| {
            states.push(SpectralState::from_vec_unchecked(left.to_vec()));
            if let Some(p) = plus {
                plus_states.push(SpectralState::from_vec_unchecked(p.to_vec()));
            }
            Ok(())
        })?;
        Ok(Path::from_parts(
            self.grid.to_vec(),
            states,
            self.impulse_nodes.clone(),
            plus_states,
        ))
    }

    pub(crate) fn control(&self) -> &ControlSignal {
        self.control
    }
}

/// One exponential-Euler step of the mild form from `t` to `t + dt`.
pub fn step_exponential_euler(
    spec: &ProblemSpec,
    t: f64,
    dt: f64,
    u_t: &[f64],
    y: &SpectralState,
    dw_row: &[f64],
) -> Result<SpectralState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {dt}")));
    }
    let d = spec.dim();
    let modes = spec.noise_modes();
    for (context, expected, got) in [
        ("step state", d, y.dim()),
        ("step control", spec.control_dim(), u_t.len()),
        ("step noise row", modes, dw_row.len()),
    ] {
        if expected != got {
            return Err(Error::DimensionMismatch { context, expected, got });
        }
    }
    let mut g = vec![0.0; d];
    let mut h = vec![0.0; d * modes];
    spec.drift.eval(t, y.as_slice(), &mut g);
    spec.diffusion.eval(t, y.as_slice(), &mut h);
    let bu = &spec.control_operator * DVector::from_column_slice(u_t);
    let decay = spec.semigroup.factors(dt);
    let out: Vec<f64> = (0..d)
        .map(|i| {
            let stoch: f64 = h[i * modes..(i + 1) * modes]
                .iter()
                .zip(dw_row)
                .map(|(a, b)| a * b)
                .sum();
            decay[i] * (y.as_slice()[i] + (bu[i] + g[i]) * dt + stoch)
        })
        .collect();
    SpectralState::new(out)
}

/// Integrates one realisation of the mild solution on the noise grid.
pub fn simulate_path(spec: &ProblemSpec, control: &ControlSignal, noise: &NoisePath) -> Result<Path> {
    let plan = StepPlan::new(spec, control, noise.grid())?;
    let mut ws = Workspace::new(spec.dim(), spec.noise_modes());
    plan.path(noise, None, &mut ws)
}

/// `y(t_k+)` for impulse `index` (0-based) from the unrolled product formula
///
/// ```text
/// y(t_k+) = Π_{j=k..1} (I + D_j) T(t_j − t_{j−1}) y₀
///         + Σ_{i=1..k} Π_{j=k..i+1} (I + D_j) T(t_j − t_{j−1}) (I + D_i) [∫ T(t_i − τ) (B u + g) dτ + ∫ T(t_i − τ) h dW]
///         + Σ_{i=2..k} Π_{j=k..i} (I + D_j) T(t_j − t_{j−1}) E_{i−1} v_{i−1} + E_k v_k,
/// ```
///
/// with each interval integral taken by the same left-endpoint quadrature
/// and noise increments as [`simulate_path`], and `g`, `h` evaluated on the
/// simulated path. Agreement with the recursive jump map is an identity up to
/// rounding.
pub fn closed_form_plus_state(
    spec: &ProblemSpec,
    control: &ControlSignal,
    noise: &NoisePath,
    index: usize,
) -> Result<SpectralState> {
    if index >= spec.impulses.len() {
        return Err(Error::IndexOutOfRange {
            index,
            len: spec.impulses.len(),
        });
    }
    let path = simulate_path(spec, control, noise)?;
    let grid = noise.grid();
    let d = spec.dim();
    let modes = spec.noise_modes();
    let k = index + 1;
    let mut times = vec![0.0];
    times.extend(spec.impulses[..k].iter().map(|e| e.time));
    let mut nodes = vec![0usize];
    nodes.extend_from_slice(&path.impulse_nodes()[..k]);

    let sg = &spec.semigroup;
    let one_plus_d = |j: usize, v: &DVector<f64>| -> DVector<f64> { v + &spec.impulses[j - 1].jump * v };
    let propagate_from = |start: usize, v: DVector<f64>| -> DVector<f64> {
        let mut v = v;
        for j in start..=k {
            let f = sg.factors(times[j] - times[j - 1]);
            v.iter_mut().zip(&f).for_each(|(c, e)| *c *= e);
            v = one_plus_d(j, &v);
        }
        v
    };

    let mut g = vec![0.0; d];
    let mut h = vec![0.0; d * modes];
    let mut total = propagate_from(1, DVector::from_column_slice(spec.initial.as_slice()));
    for i in 1..=k {
        let mut control_part = DVector::zeros(d);
        let mut drift_part = DVector::zeros(d);
        let mut noise_part = DVector::zeros(d);
        for n in nodes[i - 1]..nodes[i] {
            let t = grid[n];
            let dt = grid[n + 1] - t;
            let arg = path.right_state(n).as_slice();
            let lag = sg.factors(times[i] - t);
            let bu = &spec.control_operator * DVector::from_column_slice(control.value_at(t));
            spec.drift.eval(t, arg, &mut g);
            h.fill(0.0);
            spec.diffusion.eval(t, arg, &mut h);
            let dw = noise.row(n);
            for r in 0..d {
                control_part[r] += lag[r] * bu[r] * dt;
                drift_part[r] += lag[r] * g[r] * dt;
                let stoch: f64 = h[r * modes..(r + 1) * modes].iter().zip(dw).map(|(a, b)| a * b).sum();
                noise_part[r] += lag[r] * stoch;
            }
        }
        for part in [control_part, drift_part, noise_part] {
            total += propagate_from(i + 1, one_plus_d(i, &part));
        }
    }
    for i in 2..=k {
        total += propagate_from(i, spec.impulses[i - 2].input_effect());
    }
    total += spec.impulses[k - 1].input_effect();
    SpectralState::new(total.as_slice().to_vec())
}

/// Ensemble second moments `E‖y(t)‖²` on the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleReport {
    pub grid: Vec<f64>,
    pub mean_sq_norm: Vec<f64>,
    pub std_error: Vec<f64>,
    pub impulse_nodes: Vec<usize>,
    /// `E‖y(t_k+)‖²` per impulse.
    pub plus_mean_sq_norm: Vec<f64>,
    pub plus_std_error: Vec<f64>,
    /// `sup_t E‖y(t)‖²` over nodes and right limits.
    pub sup_mean_sq_norm: f64,
    pub seed: u64,
    /// `(seed, path_index)` of every path in the ensemble.
    pub path_seeds: Vec<(u64, u64)>,
}

/// Monte-Carlo ensemble of `n_paths` realisations; path `i` uses noise
/// `(seed, i)`, and the result does not depend on the thread count.
pub fn monte_carlo(
    spec: &ProblemSpec,
    control: &ControlSignal,
    grid: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<EnsembleReport> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    let plan = StepPlan::new(spec, control, grid)?;
    let nodes = grid.len();
    let n_imp = plan.impulse_nodes().len();
    let width = 2 * (nodes + n_imp);
    let sums = stats::chunked_sum(n_paths, width, |i, acc| {
        let noise = qwiener::sample_increments(&spec.noise, grid, seed, i as u64)?;
        let mut ws = Workspace::new(spec.dim(), spec.noise_modes());
        let mut k = 0;
        plan.run(&noise, None, &mut ws, |node, left, plus| {
            let s = norm_sq(left);
            acc[node] += s;
            acc[nodes + node] += s * s;
            if let Some(p) = plus {
                let s = norm_sq(p);
                acc[2 * nodes + k] += s;
                acc[2 * nodes + n_imp + k] += s * s;
                k += 1;
            }
            Ok(())
        })
    })?;
    let (mean_sq_norm, std_error): (Vec<f64>, Vec<f64>) = (0..nodes)
        .map(|n| stats::mean_and_se(sums[n], sums[nodes + n], n_paths))
        .unzip();
    let (plus_mean_sq_norm, plus_std_error): (Vec<f64>, Vec<f64>) = (0..n_imp)
        .map(|k| stats::mean_and_se(sums[2 * nodes + k], sums[2 * nodes + n_imp + k], n_paths))
        .unzip();
    let sup_mean_sq_norm = mean_sq_norm
        .iter()
        .chain(&plus_mean_sq_norm)
        .copied()
        .fold(0.0, f64::max);
    Ok(EnsembleReport {
        grid: grid.to_vec(),
        mean_sq_norm,
        std_error,
        impulse_nodes: plan.impulse_nodes().to_vec(),
        plus_mean_sq_norm,
        plus_std_error,
        sup_mean_sq_norm,
        seed,
        path_seeds: (0..n_paths as u64).map(|i| (seed, i)).collect(),
    })
}

/// Accumulates `‖a − b‖²` per PC slot (every node, then every right limit)
/// across an ensemble of path pairs.
pub(crate) struct PcAccumulator;

impl PcAccumulator {
    pub(crate) fn width(nodes: usize, impulses: usize) -> usize {
        2 * (nodes + impulses)
    }

    pub(crate) fn add(a: &Path, b: &Path, acc: &mut [f64]) {
        let slots = a.states.len() + a.plus_states.len();
        let pairs = a
            .states
            .iter()
            .zip(&b.states)
            .chain(a.plus_states.iter().zip(&b.plus_states));
        for (s, (x, y)) in pairs.enumerate() {
            let v = x.dist_sq(y);
            acc[s] += v;
            acc[slots + s] += v * v;
        }
    }

    /// `(sup_slot mean, standard error at the maximising slot)`.
    pub(crate) fn finish(sums: &[f64], n: usize) -> (f64, f64) {
        let slots = sums.len() / 2;
        let mut best = (0.0, 0.0);
        for s in 0..slots {
            let (m, se) = stats::mean_and_se(sums[s], sums[slots + s], n);
            if m > best.0 {
                best = (m, se);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_spec(mu: f64, horizon: f64, y0: f64) -> ProblemSpec {
        ProblemSpec::new(
            SemigroupSpec::for_horizon(vec![mu], horizon).unwrap(),
            NoiseSpec::new(vec![1.0]).unwrap(),
            horizon,
            SpectralState::new(vec![y0]).unwrap(),
        )
    }

    #[test]
    fn no_op_impulse() {
        let ev = ImpulseEvent::scaled(0.5, 2, 0.0, vec![0.0, 0.0]).unwrap();
        let y = SpectralState::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(apply_impulse(&y, &ev).unwrap().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn identity_jump_with_input() {
        let ev = ImpulseEvent::scaled(0.5, 2, 1.0, vec![0.5, 0.0]).unwrap();
        let y = SpectralState::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(apply_impulse(&y, &ev).unwrap().as_slice(), &[2.5, 4.0]);
        let bad = SpectralState::new(vec![1.0]).unwrap();
        assert!(apply_impulse(&bad, &ev).is_err());
    }

    #[test]
    fn impulse_residual_is_dy_plus_ev() {
        let d = DMatrix::from_row_slice(3, 3, &[0.1, -0.4, 0.3, 0.7, 0.2, -0.5, 0.0, 0.9, -0.8]);
        let e = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 0.2, 0.0, 2.0]);
        let v = DVector::from_vec(vec![0.25, -1.5]);
        let ev = ImpulseEvent::new(0.3, d.clone(), e.clone(), v.clone()).unwrap();
        let y = SpectralState::new(vec![0.4, -1.1, 2.2]).unwrap();
        let out = apply_impulse(&y, &ev).unwrap();
        let yv = DVector::from_column_slice(y.as_slice());
        let expected = &d * &yv + &e * &v;
        for i in 0..3 {
            assert_relative_eq!(out.as_slice()[i] - y.as_slice()[i], expected[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn step_pure_decay() {
        let spec = scalar_spec(-1.0, 1.0, 1.0);
        let y = SpectralState::new(vec![1.0]).unwrap();
        let out = step_exponential_euler(&spec, 0.0, 0.5, &[0.0], &y, &[0.0]).unwrap();
        assert_relative_eq!(out.as_slice()[0], (-0.5f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(out.as_slice()[0], 0.606_530_659_712_633_4, max_relative = 1e-14);
    }

    #[test]
    fn step_with_control_only() {
        let spec = scalar_spec(-2.0, 1.0, 0.0).with_control_operator(DMatrix::identity(1, 1));
        let y = SpectralState::new(vec![0.3]).unwrap();
        let c = 1.7;
        let dt = 0.1;
        let out = step_exponential_euler(&spec, 0.0, dt, &[c], &y, &[0.0]).unwrap();
        assert_relative_eq!(
            out.as_slice()[0],
            (-2.0 * dt).exp() * (0.3 + c * dt),
            max_relative = 1e-15
        );
        assert!(step_exponential_euler(&spec, 0.0, 0.0, &[c], &y, &[0.0]).is_err());
        assert!(step_exponential_euler(&spec, 0.0, dt, &[c, c], &y, &[0.0]).is_err());
    }

    #[test]
    fn half_steps_match_full_step_for_linear_drift() {
        // Zero-noise linear drift g = a·y: one step of dt and two of dt/2
        // differ only at second order in dt.
        let a = 0.7;
        let spec = scalar_spec(-1.3, 1.0, 1.0).with_drift(Arc::new(move |_t: f64, y: &[f64], out: &mut [f64]| {
            out[0] = a * y[0];
        }));
        let dt = 1e-3;
        let y = SpectralState::new(vec![1.0]).unwrap();
        let full = step_exponential_euler(&spec, 0.0, dt, &[0.0], &y, &[0.0]).unwrap();
        let half = step_exponential_euler(&spec, 0.0, dt / 2.0, &[0.0], &y, &[0.0]).unwrap();
        let two = step_exponential_euler(&spec, dt / 2.0, dt / 2.0, &[0.0], &half, &[0.0]).unwrap();
        let gap = (full.as_slice()[0] - two.as_slice()[0]).abs();
        assert!(gap < 1e-6, "gap {gap}");
        assert!(gap > 0.0);
    }

    #[test]
    fn pure_decay_path_is_exact() {
        let spec = scalar_spec(-1.0, 1.0, 1.0);
        let u = ControlSignal::zero(1.0, 1, 1).unwrap();
        let grid = spec.grid(1.0 / 64.0, Some(&u)).unwrap();
        let noise = NoisePath::zero(&grid, 1).unwrap();
        let path = simulate_path(&spec, &u, &noise).unwrap();
        assert!((path.final_state().as_slice()[0] - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn identity_jump_doubles_constant_path() {
        let spec =
            scalar_spec(0.0, 1.0, 1.0).with_impulses(vec![ImpulseEvent::scaled(0.5, 1, 1.0, vec![0.0]).unwrap()]);
        let u = ControlSignal::zero(1.0, 1, 1).unwrap();
        let grid = spec.grid(0.1, Some(&u)).unwrap();
        let noise = NoisePath::zero(&grid, 1).unwrap();
        let path = simulate_path(&spec, &u, &noise).unwrap();
        assert_eq!(path.final_state().as_slice(), &[2.0]);
        let node = path.impulse_nodes()[0];
        assert_eq!(path.grid()[node], 0.5);
        assert_eq!(path.states()[node].as_slice(), &[1.0]);
        assert_eq!(path.plus_states()[0].as_slice(), &[2.0]);
    }

    #[test]
    fn impulse_must_be_on_grid() {
        let spec =
            scalar_spec(0.0, 1.0, 1.0).with_impulses(vec![ImpulseEvent::scaled(0.33, 1, 1.0, vec![0.0]).unwrap()]);
        let u = ControlSignal::zero(1.0, 1, 1).unwrap();
        let grid = build_grid(1.0, 0.25, &[]).unwrap();
        let noise = NoisePath::zero(&grid, 1).unwrap();
        assert!(matches!(
            simulate_path(&spec, &u, &noise),
            Err(Error::ImpulseNotOnGrid { index: 0, .. })
        ));
    }

    #[test]
    fn impulse_times_must_be_interior() {
        for t in [0.0, 1.0, 1.5] {
            let spec =
                scalar_spec(0.0, 1.0, 1.0).with_impulses(vec![ImpulseEvent::scaled(t, 1, 1.0, vec![0.0]).unwrap()]);
            assert!(spec.validate().is_err(), "t = {t}");
        }
    }

    #[test]
    fn grid_contains_required_nodes() {
        let g = build_grid(1.0, 0.1, &[0.5, 0.33, 0.0, 1.0]).unwrap();
        assert!(g.contains(&0.5));
        assert!(g.contains(&0.33));
        assert_eq!(*g.last().unwrap(), 1.0);
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn closed_form_single_impulse_zero_dynamics() {
        let spec = ProblemSpec::new(
            SemigroupSpec::for_horizon(vec![-1.0, -3.0], 1.0).unwrap(),
            NoiseSpec::new(vec![1.0]).unwrap(),
            1.0,
            SpectralState::new(vec![1.0, -2.0]).unwrap(),
        )
        .with_impulses(vec![ImpulseEvent::scaled(0.4, 2, 0.0, vec![0.3, 0.1]).unwrap()]);
        let u = ControlSignal::zero(1.0, 1, 1).unwrap();
        let grid = spec.grid(0.05, Some(&u)).unwrap();
        let noise = NoisePath::zero(&grid, 1).unwrap();
        let cf = closed_form_plus_state(&spec, &u, &noise, 0).unwrap();
        let expected = [(-0.4f64).exp() + 0.3, -2.0 * (-1.2f64).exp() + 0.1];
        for (a, b) in cf.as_slice().iter().zip(expected) {
            assert_relative_eq!(*a, b, max_relative = 1e-12);
        }
        assert!(matches!(
            closed_form_plus_state(&spec, &u, &noise, 1),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn monte_carlo_null_system_is_zero() {
        let spec = scalar_spec(-1.0, 1.0, 0.0);
        let u = ControlSignal::zero(1.0, 1, 1).unwrap();
        let grid = spec.grid(0.1, Some(&u)).unwrap();
        let rep = monte_carlo(&spec, &u, &grid, 10, 0).unwrap();
        assert!(rep.mean_sq_norm.iter().all(|v| *v == 0.0));
        assert_eq!(rep.sup_mean_sq_norm, 0.0);
        assert_eq!(rep.path_seeds.len(), 10);
    }

    #[test]
    fn deterministic_system_paths_do_not_depend_on_index() {
        let spec = scalar_spec(-0.5, 1.0, 1.0);
        let u = ControlSignal::constant(1.0, 2, vec![0.0]).unwrap();
        let grid = spec.grid(0.1, Some(&u)).unwrap();
        let a = simulate_path(
            &spec,
            &u,
            &qwiener::sample_increments(&spec.noise, &grid, 1, 0).unwrap(),
        )
        .unwrap();
        let b = simulate_path(
            &spec,
            &u,
            &qwiener::sample_increments(&spec.noise, &grid, 1, 9).unwrap(),
        )
        .unwrap();
        assert_eq!(a, b);
        let rep = monte_carlo(&spec, &u, &grid, 5, 3).unwrap();
        for (m, y) in rep.mean_sq_norm.iter().zip(a.states()) {
            assert!((m - y.norm_sq()).abs() <= 1e-15 * m.max(1.0));
        }
        assert!(rep.std_error.iter().all(|s| *s < 1e-6));
    }
}
