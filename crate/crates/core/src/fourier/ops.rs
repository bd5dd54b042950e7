use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Modes, Snapshot, SpectralField, VectorField};
use crate::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Removes the spatial mean at every time.
pub fn project_mean_zero(f: &SpectralField) -> SpectralField {
    let mut out = f.clone();
    let z = f.modes().zero_index();
    for i in 0..f.grid().len() {
        out.slice_mut(i)[z] = ZERO;
    }
    out.set_mean_zero_flag(true);
    out
}

/// Spectral gradient: component `j` has coefficients `i k_j ĉ(t, k)`.
pub fn gradient(f: &SpectralField) -> VectorField {
    let modes = f.modes();
    let components = (0..modes.dim())
        .map(|j| {
            let mut c = f.clone();
            for i in 0..f.grid().len() {
                for (idx, k) in modes.iter() {
                    let v = c.slice(i)[idx];
                    c.slice_mut(i)[idx] = Complex64::new(0.0, k[j] as f64) * v;
                }
            }
            c.set_mean_zero_flag(true);
            c
        })
        .collect();
    VectorField::new(components).expect("gradient components share one space")
}

/// Spectral divergence `Σ_j i k_j v̂_j(t, k)`; the result is mean-zero.
pub fn divergence(v: &VectorField) -> SpectralField {
    let modes = v.modes();
    let mut out = SpectralField::zeros(v.grid_arc().clone(), modes);
    for (j, comp) in v.components().iter().enumerate() {
        for i in 0..comp.grid().len() {
            let src = comp.slice(i);
            let dst = out.slice_mut(i);
            for (idx, k) in modes.iter() {
                dst[idx] += Complex64::new(0.0, k[j] as f64) * src[idx];
            }
        }
    }
    out.set_mean_zero_flag(true);
    out
}

/// Spectral Laplacian, symbol `-|k|²`.
pub fn laplacian(f: &SpectralField) -> SpectralField {
    let modes = f.modes();
    let mut out = f.clone();
    for i in 0..f.grid().len() {
        let s = out.slice_mut(i);
        for idx in 0..modes.len() {
            s[idx] *= -modes.norm_sq(idx);
        }
    }
    out.set_mean_zero_flag(true);
    out
}

/// Truncated product of two real fields.
///
/// Both factors are synthesized on a zero-padded grid of `M ≥ 3K + 1` points
/// per axis, multiplied pointwise and transformed back, so every retained
/// coefficient equals the exact convolution `Σ_j f̂(k-j) ĝ(j)`.
pub fn product(f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
    f.check_compatible(g)?;
    let modes = f.modes();
    let transform = PaddedTransform::new(modes);
    let mut out = SpectralField::zeros(f.grid_arc().clone(), modes);
    let mut pf = vec![ZERO; transform.size()];
    let mut pg = vec![ZERO; transform.size()];
    for i in 0..f.grid().len() {
        transform.multiply(f.slice(i), g.slice(i), &mut pf, &mut pg, out.slice_mut(i));
    }
    out.set_mean_zero_flag(false);
    out.symmetrize();
    Ok(out)
}

/// Snapshot version of [`product`].
pub fn product_snapshot(a: &Snapshot, b: &Snapshot) -> Result<Snapshot> {
    if a.modes() != b.modes() {
        return Err(Error::Mismatch);
    }
    let transform = PaddedTransform::new(a.modes());
    let mut out = Snapshot::zeros(a.modes());
    let mut pf = vec![ZERO; transform.size()];
    let mut pg = vec![ZERO; transform.size()];
    transform.multiply(a.coeffs(), b.coeffs(), &mut pf, &mut pg, out.coeffs_mut());
    out.symmetrize();
    Ok(out)
}

/// Sum of componentwise products `Σ_j a_j b_j`.
pub fn dot(a: &VectorField, b: &VectorField) -> Result<SpectralField> {
    if a.dim() != b.dim() {
        return Err(Error::Mismatch);
    }
    let mut acc = product(a.component(0), b.component(0))?;
    for j in 1..a.dim() {
        acc = &acc + &product(a.component(j), b.component(j))?;
    }
    Ok(acc)
}

/// Multiplies every component of `v` by the scalar field `f`.
pub fn scale_vector(f: &SpectralField, v: &VectorField) -> Result<VectorField> {
    VectorField::new(
        v.components()
            .iter()
            .map(|c| product(f, c))
            .collect::<Result<Vec<_>>>()?,
    )
}

struct PaddedTransform {
    dim: usize,
    points: usize,
    pad_index: Vec<usize>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl PaddedTransform {
    fn new(modes: Modes) -> Self {
        let points = (3 * modes.cutoff() + 1).next_power_of_two().max(4);
        let dim = modes.dim();
        let pad_index = modes
            .iter()
            .map(|(_, k)| {
                k[..dim].iter().fold(0usize, |acc, &kd| {
                    acc * points + kd.rem_euclid(points as i64) as usize
                })
            })
            .collect();
        let (forward, inverse) = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            (p.plan_fft_forward(points), p.plan_fft_inverse(points))
        });
        Self {
            dim,
            points,
            pad_index,
            forward,
            inverse,
        }
    }

    fn size(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    fn to_physical(&self, coeffs: &[Complex64], buf: &mut [Complex64]) {
        buf.fill(ZERO);
        for (c, &p) in coeffs.iter().zip(&self.pad_index) {
            buf[p] = *c;
        }
        transform_axes(buf, self.points, self.dim, self.inverse.as_ref());
    }

    fn multiply(
        &self,
        f: &[Complex64],
        g: &[Complex64],
        pf: &mut [Complex64],
        pg: &mut [Complex64],
        out: &mut [Complex64],
    ) {
        self.to_physical(f, pf);
        self.to_physical(g, pg);
        for (a, b) in pf.iter_mut().zip(pg.iter()) {
            *a *= b;
        }
        transform_axes(pf, self.points, self.dim, self.forward.as_ref());
        let norm = 1.0 / self.size() as f64;
        for (o, &p) in out.iter_mut().zip(&self.pad_index) {
            *o = pf[p] * norm;
        }
    }
}

fn transform_axes(buf: &mut [Complex64], points: usize, dim: usize, fft: &dyn Fft<f64>) {
    if dim == 1 {
        fft.process(buf);
        return;
    }
    let mut line = vec![ZERO; points];
    for axis in 0..dim {
        let stride = points.pow((dim - 1 - axis) as u32);
        let outer = points.pow(axis as u32);
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * points * stride + inner;
                for (j, l) in line.iter_mut().enumerate() {
                    *l = buf[base + j * stride];
                }
                fft.process(&mut line);
                for (j, l) in line.iter().enumerate() {
                    buf[base + j * stride] = *l;
                }
            }
        }
    }
}

/// Values of a snapshot on the uniform grid `x_j = 2πj/points` in each axis,
/// row-major. Separable direct summation, so any `points ≥ 1` is allowed.
pub fn sample_physical(s: &Snapshot, points: usize) -> Vec<f64> {
    let modes = s.modes();
    let dim = modes.dim();
    let side = modes.side();
    let cut = modes.cutoff() as i64;
    // phase[p][k + K] = e^{i k x_p}
    let phase: Vec<Complex64> = (0..points)
        .flat_map(|p| {
            let x = 2.0 * std::f64::consts::PI * p as f64 / points as f64;
            (-cut..=cut).map(move |k| Complex64::from_polar(1.0, k as f64 * x))
        })
        .collect();
    // Contract one axis at a time: shape (points^a, side^(dim-a)).
    let mut cur: Vec<Complex64> = s.coeffs().to_vec();
    for axis in 0..dim {
        let done = points.pow(axis as u32);
        let rest = side.pow((dim - axis - 1) as u32);
        let mut next = vec![ZERO; done * points * rest];
        for a in 0..done {
            for p in 0..points {
                for r in 0..rest {
                    let mut acc = ZERO;
                    for k in 0..side {
                        acc += cur[(a * side + k) * rest + r] * phase[p * side + k];
                    }
                    next[(a * points + p) * rest + r] = acc;
                }
            }
        }
        cur = next;
    }
    cur.into_iter().map(|c| c.re).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::TimeGrid;
    use approx::assert_abs_diff_eq;

    fn space(dim: usize, k: usize) -> (Arc<TimeGrid>, Modes) {
        (Arc::new(TimeGrid::new(1.0, 0.25, 4).unwrap()), Modes::new(dim, k).unwrap())
    }

    fn steady(g: &Arc<TimeGrid>, s: Snapshot) -> SpectralField {
        SpectralField::constant_in_time(g.clone(), &s)
    }

    fn assert_field_close(a: &SpectralField, b: &SpectralField, tol: f64) {
        let d = (a - b).max_abs();
        assert!(d <= tol, "fields differ by {d}");
    }

    #[test]
    fn projection_removes_mean() {
        let (g, m) = space(1, 4);
        let f = steady(&g, &Snapshot::cosine(m, &[1], 1.0).unwrap() + &Snapshot::constant(m, 3.0));
        let p = project_mean_zero(&f);
        assert_field_close(&p, &steady(&g, Snapshot::cosine(m, &[1], 1.0).unwrap()), 0.0);
        assert_eq!(project_mean_zero(&p), p);
        let five = SpectralField::constant(g.clone(), m, 5.0);
        assert_eq!(project_mean_zero(&five).max_abs(), 0.0);
    }

    #[test]
    fn gradient_of_trig_functions() {
        let (g, m) = space(1, 4);
        let sin = steady(&g, Snapshot::sine(m, &[1], 1.0).unwrap());
        let grad = gradient(&sin);
        assert_field_close(grad.component(0), &steady(&g, Snapshot::cosine(m, &[1], 1.0).unwrap()), 1e-16);
        let cos2 = steady(&g, Snapshot::cosine(m, &[2], 1.0).unwrap());
        assert_field_close(
            gradient(&cos2).component(0),
            &steady(&g, Snapshot::sine(m, &[2], -2.0).unwrap()),
            1e-15,
        );
        assert_eq!(gradient(&SpectralField::constant(g, m, 4.0)).max_abs(), 0.0);
    }

    #[test]
    fn divergence_of_cosine_and_laplacian_identity() {
        let (g, m) = space(1, 4);
        let cos = steady(&g, Snapshot::cosine(m, &[1], 1.0).unwrap());
        let v = VectorField::new(vec![cos.clone()]).unwrap();
        assert_field_close(&divergence(&v), &steady(&g, Snapshot::sine(m, &[1], -1.0).unwrap()), 1e-16);
        assert_field_close(&divergence(&gradient(&cos)), &cos.scale(-1.0), 1e-16);
        let c = VectorField::new(vec![SpectralField::constant(g, m, 2.0)]).unwrap();
        assert_eq!(divergence(&c).max_abs(), 0.0);
    }

    #[test]
    fn cosine_squared() {
        let (g, m) = space(1, 4);
        let cos = steady(&g, Snapshot::cosine(m, &[1], 1.0).unwrap());
        let sq = product(&cos, &cos).unwrap();
        let expect = steady(&g, &Snapshot::constant(m, 0.5) + &Snapshot::cosine(m, &[2], 0.5).unwrap());
        assert_field_close(&sq, &expect, 1e-15);
        let zero = SpectralField::zeros(g, m);
        assert_eq!(product(&cos, &zero).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn product_truncates_without_aliasing() {
        // cos(3x)·cos(3x) = 1/2 + cos(6x)/2; with K = 3 the cos(6x) part
        // must vanish rather than fold back onto retained modes.
        let (g, m) = space(1, 3);
        let c3 = steady(&g, Snapshot::cosine(m, &[3], 1.0).unwrap());
        let sq = product(&c3, &c3).unwrap();
        assert_field_close(&sq, &SpectralField::constant(g, m, 0.5), 1e-15);
    }

    #[test]
    fn two_dimensional_product() {
        let (g, m) = space(2, 3);
        let a = steady(&g, Snapshot::cosine(m, &[1, 0], 1.0).unwrap());
        let b = steady(&g, Snapshot::cosine(m, &[0, 2], 1.0).unwrap());
        // cos x cos 2y = (cos(x+2y) + cos(x-2y)) / 2
        let expect = steady(
            &g,
            &Snapshot::cosine(m, &[1, 2], 0.5).unwrap() + &Snapshot::cosine(m, &[1, -2], 0.5).unwrap(),
        );
        assert_field_close(&product(&a, &b).unwrap(), &expect, 1e-15);
    }

    #[test]
    fn mismatched_spaces_rejected() {
        let (g, m) = space(1, 3);
        let a = SpectralField::zeros(g.clone(), m);
        let b = SpectralField::zeros(g, Modes::new(1, 4).unwrap());
        assert!(matches!(product(&a, &b), Err(Error::Mismatch)));
    }

    #[test]
    fn physical_samples_match_pointwise_evaluation() {
        let m = Modes::new(2, 2).unwrap();
        let s = &Snapshot::cosine(m, &[1, -2], 0.7).unwrap() + &Snapshot::sine(m, &[2, 1], 0.2).unwrap();
        let vals = sample_physical(&s, 6);
        for p in 0..6 {
            for q in 0..6 {
                let x = [
                    2.0 * std::f64::consts::PI * p as f64 / 6.0,
                    2.0 * std::f64::consts::PI * q as f64 / 6.0,
                ];
                assert_abs_diff_eq!(vals[p * 6 + q], s.evaluate(&x), epsilon = 1e-13);
            }
        }
    }
}
