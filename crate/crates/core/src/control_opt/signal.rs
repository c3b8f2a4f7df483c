use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Piecewise-constant control `u(t) = values[i]` for `t ∈ [b_i, b_{i+1})`.
/// The last interval is closed at the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    breakpoints: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl ControlSignal {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidArgument("control needs at least one interval".into()));
        }
        ensure_finite(&breakpoints, "control breakpoints")?;
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "control breakpoints must start at 0, start at {}",
                breakpoints[0]
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "control breakpoints must be strictly increasing".into(),
            ));
        }
        if values.len() != breakpoints.len() - 1 {
            return Err(Error::DimensionMismatch {
                context: "control intervals",
                expected: breakpoints.len() - 1,
                got: values.len(),
            });
        }
        let dim = values[0].len();
        if dim == 0 {
            return Err(Error::InvalidArgument("control dimension must be at least 1".into()));
        }
        for v in &values {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "control value",
                    expected: dim,
                    got: v.len(),
                });
            }
            ensure_finite(v, "control values")?;
        }
        Ok(Self { breakpoints, values })
    }

    /// `intervals` equal pieces on `[0, horizon]`, all holding `value`.
    pub fn constant(horizon: f64, intervals: usize, value: Vec<f64>) -> Result<Self> {
        if intervals == 0 || !(horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need a positive horizon and at least one interval (got {horizon}, {intervals})"
            )));
        }
        let breakpoints = uniform_breakpoints(horizon, intervals);
        Self::new(breakpoints, vec![value; intervals])
    }

    pub fn zero(horizon: f64, intervals: usize, dim: usize) -> Result<Self> {
        Self::constant(horizon, intervals, vec![0.0; dim])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn intervals(&self) -> usize {
        self.values.len()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Index of the interval containing `t`. Times within rounding distance
    /// of a breakpoint belong to the interval starting there.
    pub fn interval_index(&self, t: f64) -> usize {
        let tol = 1e-12 * self.horizon().max(1.0);
        let pos = self.breakpoints.partition_point(|b| *b <= t + tol);
        pos.saturating_sub(1).min(self.values.len() - 1)
    }

    pub fn value_at(&self, t: f64) -> &[f64] {
        &self.values[self.interval_index(t)]
    }

    /// `∫₀ᵀ ‖u(t)‖² dt`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.breakpoints
            .windows(2)
            .zip(&self.values)
            .map(|(w, v)| (w[1] - w[0]) * v.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    /// `∫₀ᵀ ‖u(t) − w(t)‖² dt` over the common refinement of both partitions.
    pub fn l2_distance_sq(&self, other: &ControlSignal) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                context: "control distance",
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let tol = 1e-12 * self.horizon().max(1.0);
        if (self.horizon() - other.horizon()).abs() > tol {
            return Err(Error::InvalidArgument("controls have different horizons".into()));
        }
        let mut nodes: Vec<f64> = self.breakpoints.iter().chain(&other.breakpoints).copied().collect();
        nodes.sort_by(f64::total_cmp);
        nodes.dedup_by(|a, b| (*a - *b).abs() <= tol);
        Ok(nodes
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let d: f64 = self
                    .value_at(mid)
                    .iter()
                    .zip(other.value_at(mid))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                d * (w[1] - w[0])
            })
            .sum())
    }

    /// All values concatenated interval by interval.
    pub fn to_flat(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    /// Same partition as `self`, values taken from `flat`.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        let m = self.dim();
        if flat.len() != m * self.intervals() {
            return Err(Error::DimensionMismatch {
                context: "flat control",
                expected: m * self.intervals(),
                got: flat.len(),
            });
        }
        ensure_finite(flat, "control values")?;
        Ok(Self {
            breakpoints: self.breakpoints.clone(),
            values: flat.chunks(m).map(|c| c.to_vec()).collect(),
        })
    }
}

pub(crate) fn uniform_breakpoints(horizon: f64, intervals: usize) -> Vec<f64> {
    (0..=intervals)
        .map(|i| {
            if i == intervals {
                horizon
            } else {
                horizon * i as f64 / intervals as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lookup_is_right_open() {
        let u = ControlSignal::new(vec![0.0, 0.5, 1.0], vec![vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(u.value_at(0.0), &[1.0]);
        assert_eq!(u.value_at(0.499), &[1.0]);
        assert_eq!(u.value_at(0.5), &[2.0]);
        assert_eq!(u.value_at(0.5 - 1e-15), &[2.0]);
        assert_eq!(u.value_at(1.0), &[2.0]);
    }

    #[test]
    fn rejects_malformed() {
        assert!(ControlSignal::new(vec![0.0], vec![]).is_err());
        assert!(ControlSignal::new(vec![0.1, 1.0], vec![vec![1.0]]).is_err());
        assert!(ControlSignal::new(vec![0.0, 1.0, 1.0], vec![vec![1.0], vec![1.0]]).is_err());
        assert!(ControlSignal::new(vec![0.0, 1.0], vec![vec![f64::NAN]]).is_err());
        assert!(ControlSignal::new(vec![0.0, 0.5, 1.0], vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn l2_distance_on_refined_partition() {
        let a = ControlSignal::new(vec![0.0, 0.5, 1.0], vec![vec![1.0], vec![0.0]]).unwrap();
        let b = ControlSignal::constant(1.0, 4, vec![0.0]).unwrap();
        assert_relative_eq!(a.l2_distance_sq(&b).unwrap(), 0.5);
        assert_relative_eq!(a.l2_norm_sq(), 0.5);
        assert_eq!(a.l2_distance_sq(&a).unwrap(), 0.0);
    }

    #[test]
    fn flat_round_trip() {
        let a = ControlSignal::new(vec![0.0, 0.25, 1.0], vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let flat = a.to_flat();
        assert_eq!(flat, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(a.with_flat(&flat).unwrap(), a);
        assert!(a.with_flat(&flat[..3]).is_err());
    }
}
