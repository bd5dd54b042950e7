//! Weighted Wiener-algebra norms.
//!
//! `|s|_{B^j} = Σ_k (1 + |k|^j) |ŝ(k)|` for a single snapshot, and the
//! space-time version `Σ_k sup_t (1 + |k|^j) e^{β(t)|k|} |f̂(t, k)|` where the
//! supremum runs over the grid samples. `|k|` is Euclidean and `|0|^0 = 1`.

use super::{Snapshot, SpectralField, VectorField};

fn weight(norm: f64, j: u32) -> f64 {
    1.0 + norm.powi(j as i32)
}

pub fn norm_bj(s: &Snapshot, j: u32) -> f64 {
    let modes = s.modes();
    s.coeffs()
        .iter()
        .enumerate()
        .map(|(idx, c)| weight(modes.norm(idx), j) * c.norm())
        .sum()
}

pub fn norm_balpha(f: &SpectralField, j: u32) -> f64 {
    let modes = f.modes();
    let grid = f.grid();
    (0..modes.len())
        .map(|idx| {
            let kn = modes.norm(idx);
            let w = weight(kn, j);
            (0..grid.len())
                .map(|i| w * (grid.beta_at(i) * kn).exp() * f.slice(i)[idx].norm())
                .fold(0.0, f64::max)
        })
        .sum()
}

/// `(𝓑_α^j)ⁿ` norm: sum of the component norms.
pub fn norm_balpha_vector(v: &VectorField, j: u32) -> f64 {
    v.components().iter().map(|c| norm_balpha(c, j)).sum()
}

/// Per-time `B^j` norms, used for plotting series.
pub fn norm_bj_series(f: &SpectralField, j: u32) -> Vec<f64> {
    (0..f.grid().len()).map(|i| norm_bj(&f.snapshot(i), j)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::{Modes, TimeGrid};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use std::sync::Arc;

    #[test]
    fn bj_of_trig_polynomials() {
        let m = Modes::new(1, 4).unwrap();
        assert_abs_diff_eq!(norm_bj(&Snapshot::cosine(m, &[1], 1.0).unwrap(), 2), 2.0, epsilon = 1e-15);
        assert_eq!(norm_bj(&Snapshot::zeros(m), 3), 0.0);
        let s = &Snapshot::cosine(m, &[1], 1.0).unwrap() + &Snapshot::sine(m, &[2], 1.0).unwrap();
        assert_abs_diff_eq!(norm_bj(&s, 1), 5.0, epsilon = 1e-15);
    }

    #[test]
    fn zeroth_weight_counts_mean_twice() {
        let m = Modes::new(1, 2).unwrap();
        assert_abs_diff_eq!(norm_bj(&Snapshot::constant(m, 1.5), 0), 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(norm_bj(&Snapshot::constant(m, 1.5), 2), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn space_time_norm_takes_sup_at_peak() {
        let g = Arc::new(TimeGrid::new(2.0, 0.5, 4).unwrap());
        let m = Modes::new(1, 3).unwrap();
        let cos = SpectralField::constant_in_time(g.clone(), &Snapshot::cosine(m, &[1], 1.0).unwrap());
        // two modes, weight (1 + 1) each, amplitude 1/2, sup of e^{β} = e^{α}
        assert_abs_diff_eq!(norm_balpha(&cos, 0), 2.0 * 0.5f64.exp(), epsilon = 1e-14);
        assert_eq!(norm_balpha(&SpectralField::zeros(g.clone(), m), 2), 0.0);
    }

    #[test]
    fn decaying_profile_sup_at_start() {
        let g = Arc::new(TimeGrid::new(2.0, 0.5, 4).unwrap());
        let m = Modes::new(1, 3).unwrap();
        let f = SpectralField::from_fn(g.clone(), m, |_, t, k| {
            if k[0].abs() == 1 {
                Complex64::new(0.5 * (-t).exp(), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        // brute force over the five samples
        let best = (0..5)
            .map(|i| (g.beta_at(i) - g.time(i)).exp())
            .fold(f64::MIN, f64::max);
        assert_abs_diff_eq!(best, 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(norm_balpha(&f, 2), 2.0, epsilon = 1e-14);
    }
}
