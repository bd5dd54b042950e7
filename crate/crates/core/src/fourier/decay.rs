use serde::{Deserialize, Serialize};

use super::{Snapshot, SpectralField};
use crate::{Error, Result};

/// Modes below this fraction of the largest coefficient are treated as noise.
pub const NOISE_FLOOR: f64 = 1e-13;

/// Least-squares fit `ln|f̂(k)| ≈ intercept + slope·|k|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub intercept: f64,
    pub slope: f64,
    pub modes_used: usize,
}

impl DecayFit {
    /// Coefficients decaying at least like `e^{-β|k|}` (up to `tolerance`)
    /// indicate analyticity in a strip of width `β`.
    pub fn supports_strip(&self, beta: f64, tolerance: f64) -> bool {
        self.slope <= -beta + tolerance
    }
}

pub fn decay_fit(f: &SpectralField, i: usize) -> Result<DecayFit> {
    decay_fit_snapshot(&f.snapshot(i))
}

pub fn decay_fit_snapshot(s: &Snapshot) -> Result<DecayFit> {
    let modes = s.modes();
    let floor = NOISE_FLOOR * s.max_abs();
    let points: Vec<(f64, f64)> = s
        .coeffs()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm() > floor && c.norm() > 0.0)
        .map(|(idx, c)| (modes.norm(idx), c.norm().ln()))
        .collect();
    if points.len() < 3 {
        return Err(Error::DegenerateFit {
            modes: points.len(),
        });
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= f64::EPSILON * n {
        // every surviving mode has the same |k|
        return Err(Error::DegenerateFit {
            modes: points.len(),
        });
    }
    let slope = sxy / sxx;
    Ok(DecayFit {
        intercept: my - slope * mx,
        slope,
        modes_used: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::Modes;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    #[test]
    fn exact_exponential_decay() {
        let m = Modes::new(1, 10).unwrap();
        let coeffs = (0..m.len())
            .map(|i| Complex64::new((-0.5 * m.norm(i)).exp(), 0.0))
            .collect();
        let fit = decay_fit_snapshot(&Snapshot::from_coeffs(m, coeffs).unwrap()).unwrap();
        assert_abs_diff_eq!(fit.slope, -0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.intercept, 0.0, epsilon = 1e-6);
        assert!(fit.supports_strip(0.5, 1e-6));
        assert!(!fit.supports_strip(0.6, 0.05));
    }

    #[test]
    fn zero_snapshot_is_degenerate() {
        let m = Modes::new(1, 4).unwrap();
        assert!(matches!(
            decay_fit_snapshot(&Snapshot::zeros(m)),
            Err(Error::DegenerateFit { modes: 0 })
        ));
    }

    #[test]
    fn single_shell_is_degenerate() {
        let m = Modes::new(2, 4).unwrap();
        // four modes with |k| = 1 only
        let s = &Snapshot::cosine(m, &[1, 0], 1.0).unwrap() + &Snapshot::cosine(m, &[0, 1], 1.0).unwrap();
        assert!(decay_fit_snapshot(&s).is_err());
    }
}
