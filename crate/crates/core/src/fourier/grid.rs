use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniform samples of `[0, T]` together with the tent weight `β(t)`.
///
/// `β` rises linearly from 0 at `t = 0` to `alpha` at `t = T/2` and falls back
/// to 0 at `t = T`. The sample count is even so that the peak is always a
/// sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    alpha: f64,
    steps: usize,
    times: Vec<f64>,
    beta: Vec<f64>,
}

impl TimeGrid {
    pub fn new(horizon: f64, alpha: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "horizon T must be positive and finite, got {horizon}"
            )));
        }
        if !(alpha.is_finite() && alpha > 0.0 && alpha < horizon / 2.0) {
            return Err(Error::InvalidGrid(format!(
                "alpha must lie in (0, T/2) = (0, {}), got {alpha}",
                horizon / 2.0
            )));
        }
        if steps < 2 || steps % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "sample count N must be even and at least 2, got {steps}"
            )));
        }
        let times = (0..=steps)
            .map(|i| horizon * i as f64 / steps as f64)
            .collect();
        // min(i, N - i) keeps the weight exactly symmetric about T/2.
        let beta = (0..=steps)
            .map(|i| 2.0 * alpha * i.min(steps - i) as f64 / steps as f64)
            .collect();
        Ok(Self {
            horizon,
            alpha,
            steps,
            times,
            beta,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of subintervals `N`; there are `N + 1` samples.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn beta_at(&self, i: usize) -> f64 {
        self.beta[i]
    }

    /// Index of the sample at `t = T/2`.
    pub fn midpoint(&self) -> usize {
        self.steps / 2
    }

    /// Tent weight at an arbitrary time in `[0, T]`.
    pub fn weight(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.horizon);
        if t <= self.horizon / 2.0 {
            2.0 * self.alpha * t / self.horizon
        } else {
            2.0 * self.alpha - 2.0 * self.alpha * t / self.horizon
        }
    }

    /// Same `T` and `α` with `N` replaced; used by refinement studies.
    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        Self::new(self.horizon, self.alpha, steps)
    }
}
