use serde::{Deserialize, Serialize};

use super::ControlSignal;
use crate::error::{ensure_finite, Error, Result};

/// Closed, bounded, convex set `Y ⊂ U` of allowed control values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdmissibleSet {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl AdmissibleSet {
    pub fn validate(&self) -> Result<()> {
        match self {
            AdmissibleSet::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(Error::DimensionMismatch {
                        context: "box bounds",
                        expected: lower.len(),
                        got: upper.len(),
                    });
                }
                ensure_finite(lower, "box lower bound")?;
                ensure_finite(upper, "box upper bound")?;
                if lower.iter().zip(upper).any(|(l, u)| l > u) {
                    return Err(Error::InvalidArgument("box lower bound exceeds upper bound".into()));
                }
            }
            AdmissibleSet::Ball { center, radius } => {
                if center.is_empty() {
                    return Err(Error::InvalidArgument("ball center must be nonempty".into()));
                }
                ensure_finite(center, "ball center")?;
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "ball radius must be >= 0, got {radius}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn symmetric_box(dim: usize, half_width: f64) -> Self {
        AdmissibleSet::Box {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            AdmissibleSet::Box { lower, .. } => lower.len(),
            AdmissibleSet::Ball { center, .. } => center.len(),
        }
    }

    /// True when the set is a single point.
    pub fn is_singleton(&self) -> bool {
        match self {
            AdmissibleSet::Box { lower, upper } => lower == upper,
            AdmissibleSet::Ball { radius, .. } => *radius == 0.0,
        }
    }

    /// Euclidean projection of one control value.
    pub fn project_value(&self, v: &[f64]) -> Vec<f64> {
        match self {
            AdmissibleSet::Box { lower, upper } => v
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(x, (l, u))| x.clamp(*l, *u))
                .collect(),
            AdmissibleSet::Ball { center, radius } => {
                let dist = v.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum::<f64>().sqrt();
                if dist <= *radius {
                    v.to_vec()
                } else {
                    let s = radius / dist;
                    v.iter().zip(center).map(|(x, c)| c + s * (x - c)).collect()
                }
            }
        }
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        match self {
            AdmissibleSet::Box { lower, upper } => v
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(x, (l, u))| *x >= l - tol && *x <= u + tol),
            AdmissibleSet::Ball { center, radius } => {
                v.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum::<f64>().sqrt() <= radius + tol
            }
        }
    }

    pub fn contains_signal(&self, u: &ControlSignal, tol: f64) -> bool {
        u.values().iter().all(|v| self.contains(v, tol))
    }

    /// Projects every interval value onto the set.
    pub fn project(&self, u: &ControlSignal) -> Result<ControlSignal> {
        if u.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "admissible set",
                expected: self.dim(),
                got: u.dim(),
            });
        }
        ControlSignal::new(
            u.breakpoints().to_vec(),
            u.values().iter().map(|v| self.project_value(v)).collect(),
        )
    }
}

/// Free-function form of [`AdmissibleSet::project`].
pub fn project(ad: &AdmissibleSet, u: &ControlSignal) -> Result<ControlSignal> {
    ad.project(u)
}
