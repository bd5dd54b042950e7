//! Random real fields for property tests and norm estimators.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use super::{Modes, Snapshot, SpectralField, TimeGrid};

/// Random real snapshot with `|ĉ(k)| ≲ e^{-rate|k|}`.
pub fn random_snapshot<R: Rng + ?Sized>(modes: Modes, rate: f64, rng: &mut R) -> Snapshot {
    let mut coeffs = vec![Complex64::new(0.0, 0.0); modes.len()];
    let zero = modes.zero_index();
    for idx in zero..modes.len() {
        let amp = (-rate * modes.norm(idx)).exp();
        let c = if idx == zero {
            Complex64::new(amp * rng.gen_range(-1.0..1.0), 0.0)
        } else {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * amp
        };
        coeffs[idx] = c;
        coeffs[modes.conj_index(idx)] = c.conj();
    }
    Snapshot::from_coeffs(modes, coeffs).expect("length matches modes")
}

/// Random real field, smooth in time: each mode carries a random combination
/// of `1`, `t/T`, `cos(πt/T)` and `sin(2πt/T)`.
pub fn random_field<R: Rng + ?Sized>(
    grid: Arc<TimeGrid>,
    modes: Modes,
    rate: f64,
    mean_zero: bool,
    rng: &mut R,
) -> SpectralField {
    let zero = modes.zero_index();
    let horizon = grid.horizon();
    let mut profiles = vec![[Complex64::new(0.0, 0.0); 4]; modes.len()];
    for idx in zero..modes.len() {
        if idx == zero && mean_zero {
            continue;
        }
        let amp = (-rate * modes.norm(idx)).exp();
        for p in profiles[idx].iter_mut() {
            *p = if idx == zero {
                Complex64::new(rng.gen_range(-1.0..1.0), 0.0)
            } else {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            } * (amp / 4.0);
        }
    }
    SpectralField::from_fn(grid, modes, |_, t, k| {
        let idx = modes.index_of(k).expect("k from the same box");
        let (src, conj) = if idx >= zero {
            (idx, false)
        } else {
            (modes.conj_index(idx), true)
        };
        let s = t / horizon;
        let basis = [1.0, s, (PI * s).cos(), (2.0 * PI * s).sin()];
        let v: Complex64 = profiles[src].iter().zip(basis).map(|(c, b)| c * b).sum();
        if conj {
            v.conj()
        } else {
            v
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_fields_are_real_and_respect_mean_flag() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = Arc::new(TimeGrid::new(1.0, 0.25, 8).unwrap());
        for dim in 1..=2 {
            let m = Modes::new(dim, 3).unwrap();
            let f = random_field(g.clone(), m, 0.3, true, &mut rng);
            assert_eq!(f.hermitian_defect(), 0.0);
            assert!(f.mean_zero_flag());
            let h = random_field(g.clone(), m, 0.3, false, &mut rng);
            assert!(!h.zero_modes_vanish());
            assert_eq!(random_snapshot(m, 0.1, &mut rng).hermitian_defect(), 0.0);
        }
    }
}
