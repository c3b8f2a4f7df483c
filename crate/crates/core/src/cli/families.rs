//! Built-in coefficient families selectable from a scenario file.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Diffusion, DiffusionFn, Drift, ZeroField};
use crate::spectral::norm_sq;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftFamily {
    Zero,
    /// `g(t, y) = gain · y`.
    Linear {
        gain: f64,
    },
    /// `g(t, y) = y / (t + shift) + forcing · cos(t) e_{forcing_mode}`.
    AffineDrift {
        forcing: f64,
        forcing_mode: usize,
        shift: f64,
    },
    /// `g(t, y)_i = scale · y_i / (1 + |y_i|)`.
    Saturation {
        scale: f64,
    },
    /// `g(t, y) = amplitude · cos(frequency · t) e_mode`.
    TrigForcing {
        amplitude: f64,
        frequency: f64,
        mode: usize,
    },
}

impl DriftFamily {
    pub fn check(&self, dim: usize) -> Result<(), String> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            DriftFamily::Zero => Ok(()),
            DriftFamily::Linear { gain } if finite(&[*gain]) => Ok(()),
            DriftFamily::Saturation { scale } if finite(&[*scale]) => Ok(()),
            DriftFamily::AffineDrift {
                forcing,
                forcing_mode,
                shift,
            } => {
                if !finite(&[*forcing, *shift]) || !(*shift > 0.0) {
                    Err("affine_drift needs finite forcing and shift > 0".into())
                } else if *forcing_mode >= dim {
                    Err(format!("forcing_mode {forcing_mode} out of range for {dim} modes"))
                } else {
                    Ok(())
                }
            }
            DriftFamily::TrigForcing {
                amplitude,
                frequency,
                mode,
            } => {
                if !finite(&[*amplitude, *frequency]) {
                    Err("trig_forcing parameters must be finite".into())
                } else if *mode >= dim {
                    Err(format!("mode {mode} out of range for {dim} modes"))
                } else {
                    Ok(())
                }
            }
            _ => Err("parameters must be finite".into()),
        }
    }

    pub fn build(&self, _dim: usize) -> Arc<dyn Drift> {
        match *self {
            DriftFamily::Zero => Arc::new(ZeroField),
            DriftFamily::Linear { gain } => Arc::new(move |_t: f64, y: &[f64], out: &mut [f64]| {
                out.iter_mut().zip(y).for_each(|(o, v)| *o = gain * v);
            }),
            DriftFamily::AffineDrift {
                forcing,
                forcing_mode,
                shift,
            } => Arc::new(move |t: f64, y: &[f64], out: &mut [f64]| {
                let gain = 1.0 / (t + shift);
                out.iter_mut().zip(y).for_each(|(o, v)| *o = gain * v);
                out[forcing_mode] += forcing * t.cos();
            }),
            DriftFamily::Saturation { scale } => Arc::new(move |_t: f64, y: &[f64], out: &mut [f64]| {
                out.iter_mut()
                    .zip(y)
                    .for_each(|(o, v)| *o = scale * v / (1.0 + v.abs()));
            }),
            DriftFamily::TrigForcing {
                amplitude,
                frequency,
                mode,
            } => Arc::new(move |t: f64, _y: &[f64], out: &mut [f64]| {
                out.fill(0.0);
                out[mode] = amplitude * (frequency * t).cos();
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionFamily {
    Zero,
    /// Noise mode `i` drives state mode `i` with coefficient `sigma`.
    Additive {
        sigma: f64,
    },
    /// Noise mode `i` drives state mode `i` with coefficient `sigma · y_i`.
    Multiplicative {
        sigma: f64,
    },
    /// `scale · (2/(1 + eᵗ) + ‖y‖/(1 + ‖y‖))` from noise mode 0 into state mode `mode`.
    LogisticSaturation {
        scale: f64,
        mode: usize,
    },
}

impl DiffusionFamily {
    pub fn check(&self, dim: usize, modes: usize) -> Result<(), String> {
        match self {
            DiffusionFamily::Zero => Ok(()),
            DiffusionFamily::Additive { sigma } | DiffusionFamily::Multiplicative { sigma } => {
                if sigma.is_finite() {
                    Ok(())
                } else {
                    Err("sigma must be finite".into())
                }
            }
            DiffusionFamily::LogisticSaturation { scale, mode } => {
                if !scale.is_finite() {
                    Err("scale must be finite".into())
                } else if *mode >= dim {
                    Err(format!("mode {mode} out of range for {dim} modes"))
                } else if modes == 0 {
                    Err("needs at least one noise mode".into())
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn build(&self, dim: usize, modes: usize) -> Arc<dyn Diffusion> {
        let diag = dim.min(modes);
        match *self {
            DiffusionFamily::Zero => Arc::new(ZeroField),
            DiffusionFamily::Additive { sigma } => {
                Arc::new(DiffusionFn(move |_t: f64, _y: &[f64], out: &mut [f64]| {
                    (0..diag).for_each(|i| out[i * modes + i] = sigma);
                }))
            }
            DiffusionFamily::Multiplicative { sigma } => {
                Arc::new(DiffusionFn(move |_t: f64, y: &[f64], out: &mut [f64]| {
                    (0..diag).for_each(|i| out[i * modes + i] = sigma * y[i]);
                }))
            }
            DiffusionFamily::LogisticSaturation { scale, mode } => {
                Arc::new(DiffusionFn(move |t: f64, y: &[f64], out: &mut [f64]| {
                    let r = norm_sq(y).sqrt();
                    out[mode * modes] = scale * (2.0 / (1.0 + t.exp()) + r / (1.0 + r));
                }))
            }
        }
    }
}
