use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Discretization {
    /// `t_p = t + (p/P)·ΔT`
    #[default]
    Uniform,
    /// `t_p = t + ΔT − δ(P − p)`
    Last,
}

impl std::str::FromStr for Discretization {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "last" => Ok(Self::Last),
            other => Err(CoreError::InvalidConfig(format!(
                "unknown discretization `{other}` (expected uniform or last)"
            ))),
        }
    }
}

/// Decoding offsets `Δt_1 < … < Δt_P` in frame units, with the index fed to
/// the time embedding at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    offsets: Vec<f64>,
    indices: Vec<f64>,
}

impl TimeGrid {
    pub fn new(offsets: Vec<f64>, indices: Vec<f64>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(CoreError::InvalidGrid("empty grid".into()));
        }
        if offsets.len() != indices.len() {
            return Err(CoreError::InvalidGrid(format!(
                "{} offsets but {} indices",
                offsets.len(),
                indices.len()
            )));
        }
        if offsets.iter().chain(&indices).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CoreError::InvalidGrid("offsets and indices must be finite and nonnegative".into()));
        }
        if offsets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CoreError::InvalidGrid(format!("offsets not strictly increasing: {offsets:?}")));
        }
        Ok(Self { offsets, indices })
    }

    /// Training grid over a window of `window` frames with embedding
    /// indices `1..=P`.
    pub fn discretize(mode: Discretization, window: usize, p: usize, delta: usize) -> Result<Self> {
        if p == 0 || window == 0 {
            return Err(CoreError::InvalidGrid("P and ΔT must be positive".into()));
        }
        let offsets: Vec<f64> = match mode {
            Discretization::Uniform => {
                if !window.is_multiple_of(p) {
                    return Err(CoreError::InvalidGrid(format!(
                        "uniform offsets need ΔT divisible by P, got ΔT={window}, P={p}"
                    )));
                }
                (1..=p).map(|s| (s * window / p) as f64).collect()
            }
            Discretization::Last => {
                if delta == 0 {
                    return Err(CoreError::InvalidGrid("δ must be at least 1".into()));
                }
                if delta * (p - 1) >= window {
                    return Err(CoreError::InvalidGrid(format!(
                        "last-P offsets fall before the window start: ΔT={window}, P={p}, δ={delta}"
                    )));
                }
                (1..=p).map(|s| (window - delta * (p - s)) as f64).collect()
            }
        };
        Self::new(offsets, (1..=p).map(|s| s as f64).collect())
    }

    /// Inserts `factor − 1` evenly spaced points before each offset, taking
    /// the window start as the offset preceding the first.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor < 1 {
            return Err(CoreError::InvalidGrid("refinement factor must be at least 1".into()));
        }
        let f = factor as f64;
        let mut offsets = Vec::with_capacity(self.len() * factor);
        let mut indices = Vec::with_capacity(self.len() * factor);
        let (mut prev_t, mut prev_i) = (0.0, 0.0);
        for (&t, &i) in self.offsets.iter().zip(&self.indices) {
            for j in 1..=factor {
                let a = j as f64 / f;
                offsets.push(prev_t + a * (t - prev_t));
                indices.push(prev_i + a * (i - prev_i));
            }
            (prev_t, prev_i) = (t, i);
        }
        Self::new(offsets, indices)
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn indices(&self) -> &[f64] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Offsets as frame numbers; fails if any offset is fractional.
    pub fn integer_offsets(&self) -> Result<Vec<usize>> {
        self.offsets
            .iter()
            .map(|&o| {
                if o.fract() == 0.0 {
                    Ok(o as usize)
                } else {
                    Err(CoreError::InvalidGrid(format!(
                        "offset {o} is not a recorded frame; ground truth is never interpolated"
                    )))
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_and_last_offsets() {
        let u = TimeGrid::discretize(Discretization::Uniform, 10, 5, 1).unwrap();
        assert_eq!(u.offsets(), &[2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(u.indices(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let l = TimeGrid::discretize(Discretization::Last, 10, 5, 1).unwrap();
        assert_eq!(l.offsets(), &[6.0, 7.0, 8.0, 9.0, 10.0]);
        for mode in [Discretization::Uniform, Discretization::Last] {
            assert_eq!(TimeGrid::discretize(mode, 10, 1, 1).unwrap().offsets(), &[10.0]);
        }
        assert!(TimeGrid::discretize(Discretization::Uniform, 10, 3, 1).is_err());
        assert!(TimeGrid::discretize(Discretization::Last, 10, 5, 3).is_err());
        assert!(TimeGrid::discretize(Discretization::Last, 10, 5, 0).is_err());
    }

    #[test]
    fn refine_doubles_uniform_grid() {
        let g = TimeGrid::discretize(Discretization::Uniform, 10, 5, 1).unwrap().refine(2).unwrap();
        let want: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(g.offsets(), want.as_slice());
        let idx: Vec<f64> = (1..=10).map(|i| i as f64 / 2.0).collect();
        assert_eq!(g.indices(), idx.as_slice());
        assert!(g.integer_offsets().is_ok());
        assert!(TimeGrid::discretize(Discretization::Uniform, 10, 5, 1).unwrap().refine(0).is_err());
    }

    #[test]
    fn fractional_offsets_are_rejected_as_frames() {
        let g = TimeGrid::new(vec![0.5, 1.0], vec![0.5, 1.0]).unwrap();
        assert!(g.integer_offsets().is_err());
        assert!(TimeGrid::new(vec![1.0, 1.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn parses_mode_names() {
        assert_eq!("last".parse::<Discretization>().unwrap(), Discretization::Last);
        assert!("middle".parse::<Discretization>().is_err());
    }
}
