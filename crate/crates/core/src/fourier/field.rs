use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;

use super::{Modes, TimeGrid};
use crate::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Fourier coefficients of a real function on `𝕋ⁿ` at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    modes: Modes,
    coeffs: Vec<Complex64>,
}

impl Snapshot {
    pub fn zeros(modes: Modes) -> Self {
        Self {
            modes,
            coeffs: vec![ZERO; modes.len()],
        }
    }

    pub fn from_coeffs(modes: Modes, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != modes.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                modes.len(),
                coeffs.len()
            )));
        }
        Ok(Self { modes, coeffs })
    }

    /// Builds a real snapshot from a list of `(k, ĉ(k))`; `ĉ(-k)` is filled in
    /// as the conjugate. Listing both `k` and `-k` with inconsistent values is
    /// an error, as is a purely imaginary mean.
    pub fn from_modes(modes: Modes, entries: &[(Vec<i64>, Complex64)]) -> Result<Self> {
        let mut coeffs = vec![ZERO; modes.len()];
        let mut set = vec![false; modes.len()];
        for (k, c) in entries {
            let idx = modes.index_of(k).ok_or_else(|| {
                Error::InvalidArgument(format!("wavevector {k:?} outside the retained box"))
            })?;
            let cj = modes.conj_index(idx);
            if idx == cj && c.im != 0.0 {
                return Err(Error::InvalidArgument(
                    "mean coefficient of a real function must be real".into(),
                ));
            }
            if set[idx] && coeffs[idx] != *c {
                return Err(Error::InvalidArgument(format!(
                    "conflicting coefficients for wavevector {k:?}"
                )));
            }
            coeffs[idx] = *c;
            coeffs[cj] = c.conj();
            set[idx] = true;
            set[cj] = true;
        }
        Ok(Self { modes, coeffs })
    }

    /// `amplitude · cos(k·x)`.
    pub fn cosine(modes: Modes, k: &[i64], amplitude: f64) -> Result<Self> {
        Self::from_modes(modes, &[(k.to_vec(), Complex64::new(amplitude / 2.0, 0.0))])
    }

    /// `amplitude · sin(k·x)`.
    pub fn sine(modes: Modes, k: &[i64], amplitude: f64) -> Result<Self> {
        Self::from_modes(modes, &[(k.to_vec(), Complex64::new(0.0, -amplitude / 2.0))])
    }

    pub fn constant(modes: Modes, value: f64) -> Self {
        let mut s = Self::zeros(modes);
        s.coeffs[modes.zero_index()] = Complex64::new(value, 0.0);
        s
    }

    pub fn modes(&self) -> Modes {
        self.modes
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn coeff(&self, k: &[i64]) -> Complex64 {
        self.modes.index_of(k).map_or(ZERO, |i| self.coeffs[i])
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[self.modes.zero_index()].re
    }

    pub fn is_mean_zero(&self) -> bool {
        self.coeffs[self.modes.zero_index()] == ZERO
    }

    pub fn project_mean_zero(&self) -> Self {
        let mut out = self.clone();
        out.coeffs[self.modes.zero_index()] = ZERO;
        out
    }

    /// Largest violation of `ĉ(-k) = conj(ĉ(k))`.
    pub fn hermitian_defect(&self) -> f64 {
        hermitian_defect(self.modes, &self.coeffs)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            modes: self.modes,
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
        }
    }

    /// Real part of `Σ ĉ(k) e^{ik·x}`.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        evaluate_slice(self.modes, &self.coeffs, x)
    }

    pub(crate) fn symmetrize(&mut self) {
        symmetrize(self.modes, &mut self.coeffs);
    }
}

impl Add for &Snapshot {
    type Output = Snapshot;

    fn add(self, rhs: &Snapshot) -> Snapshot {
        assert_eq!(self.modes, rhs.modes, "snapshot mode sets differ");
        Snapshot {
            modes: self.modes,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Snapshot {
    type Output = Snapshot;

    fn sub(self, rhs: &Snapshot) -> Snapshot {
        assert_eq!(self.modes, rhs.modes, "snapshot mode sets differ");
        Snapshot {
            modes: self.modes,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
}

pub(crate) fn hermitian_defect(modes: Modes, coeffs: &[Complex64]) -> f64 {
    (0..modes.len())
        .map(|i| (coeffs[i] - coeffs[modes.conj_index(i)].conj()).norm())
        .fold(0.0, f64::max)
}

pub(crate) fn symmetrize(modes: Modes, coeffs: &mut [Complex64]) {
    let zero = modes.zero_index();
    for i in 0..zero {
        let j = modes.conj_index(i);
        let avg = (coeffs[i] + coeffs[j].conj()) * 0.5;
        coeffs[i] = avg;
        coeffs[j] = avg.conj();
    }
    coeffs[zero].im = 0.0;
}

pub(crate) fn evaluate_slice(modes: Modes, coeffs: &[Complex64], x: &[f64]) -> f64 {
    let dim = modes.dim();
    modes
        .iter()
        .map(|(i, k)| {
            let phase: f64 = (0..dim).map(|d| k[d] as f64 * x[d]).sum();
            (coeffs[i] * Complex64::from_polar(1.0, phase)).re
        })
        .sum()
}

/// Time-sampled Fourier coefficients of a real function on `[0,T] × 𝕋ⁿ`.
///
/// Storage is time-major: slice `i` holds the coefficients at `t_i` in the
/// layout of [`Modes`].
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: Arc<TimeGrid>,
    modes: Modes,
    data: Vec<Complex64>,
    mean_zero: bool,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.same_space(other) && self.data == other.data
    }
}

impl SpectralField {
    pub fn zeros(grid: Arc<TimeGrid>, modes: Modes) -> Self {
        let n = grid.len() * modes.len();
        Self {
            grid,
            modes,
            data: vec![ZERO; n],
            mean_zero: true,
        }
    }

    /// Coefficients from `f(time_index, t, k)`; only `k[..dim]` is meaningful.
    /// The caller is responsible for Hermitian symmetry.
    pub fn from_fn(
        grid: Arc<TimeGrid>,
        modes: Modes,
        mut f: impl FnMut(usize, f64, &[i64]) -> Complex64,
    ) -> Self {
        let mut out = Self::zeros(grid, modes);
        let len = modes.len();
        let dim = modes.dim();
        for i in 0..out.grid.len() {
            let t = out.grid.time(i);
            for (idx, k) in modes.iter() {
                out.data[i * len + idx] = f(i, t, &k[..dim]);
            }
        }
        out.mean_zero = out.zero_modes_vanish();
        out
    }

    pub fn from_data(grid: Arc<TimeGrid>, modes: Modes, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() * modes.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                grid.len() * modes.len(),
                data.len()
            )));
        }
        let mut out = Self {
            grid,
            modes,
            data,
            mean_zero: false,
        };
        out.mean_zero = out.zero_modes_vanish();
        Ok(out)
    }

    pub fn constant_in_time(grid: Arc<TimeGrid>, s: &Snapshot) -> Self {
        let modes = s.modes();
        let mut out = Self::zeros(grid, modes);
        for i in 0..out.grid.len() {
            out.slice_mut(i).copy_from_slice(s.coeffs());
        }
        out.mean_zero = s.is_mean_zero();
        out
    }

    /// The constant function `value` on every slice.
    pub fn constant(grid: Arc<TimeGrid>, modes: Modes, value: f64) -> Self {
        Self::constant_in_time(grid, &Snapshot::constant(modes, value))
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn modes(&self) -> Modes {
        self.modes
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn slice(&self, i: usize) -> &[Complex64] {
        let len = self.modes.len();
        &self.data[i * len..(i + 1) * len]
    }

    pub(crate) fn slice_mut(&mut self, i: usize) -> &mut [Complex64] {
        let len = self.modes.len();
        &mut self.data[i * len..(i + 1) * len]
    }

    pub fn snapshot(&self, i: usize) -> Snapshot {
        Snapshot {
            modes: self.modes,
            coeffs: self.slice(i).to_vec(),
        }
    }

    pub fn final_snapshot(&self) -> Snapshot {
        self.snapshot(self.grid.steps())
    }

    pub fn coeff(&self, i: usize, k: &[i64]) -> Complex64 {
        self.modes.index_of(k).map_or(ZERO, |idx| self.slice(i)[idx])
    }

    /// Flag set by operations whose image is mean-zero.
    pub fn mean_zero_flag(&self) -> bool {
        self.mean_zero
    }

    pub(crate) fn set_mean_zero_flag(&mut self, flag: bool) {
        self.mean_zero = flag;
    }

    pub fn zero_modes_vanish(&self) -> bool {
        let z = self.modes.zero_index();
        (0..self.grid.len()).all(|i| self.slice(i)[z] == ZERO)
    }

    pub fn is_mean_zero(&self) -> bool {
        self.mean_zero || self.zero_modes_vanish()
    }

    /// First time index with a nonzero mean, if any.
    pub fn first_nonzero_mean(&self) -> Option<usize> {
        let z = self.modes.zero_index();
        (0..self.grid.len()).find(|&i| self.slice(i)[z] != ZERO)
    }

    pub fn same_space(&self, other: &Self) -> bool {
        self.modes == other.modes && (Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid)
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.same_space(other) {
            Ok(())
        } else {
            Err(Error::Mismatch)
        }
    }

    pub fn hermitian_defect(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| hermitian_defect(self.modes, self.slice(i)))
            .fold(0.0, f64::max)
    }

    pub(crate) fn symmetrize(&mut self) {
        for i in 0..self.grid.len() {
            let modes = self.modes;
            symmetrize(modes, self.slice_mut(i));
        }
    }

    /// `max |ĉ(t_i, k)|` over all samples and modes.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|c| *c *= a);
        out
    }

    /// `self + a · other`.
    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        assert!(self.same_space(other), "field spaces differ");
        let mut out = self.clone();
        for (o, b) in out.data.iter_mut().zip(&other.data) {
            *o += b * a;
        }
        out.mean_zero = self.mean_zero && other.mean_zero;
        out
    }

    /// Adds `value` to the mean at every time.
    pub fn add_constant(&self, value: f64) -> Self {
        let mut out = self.clone();
        let z = self.modes.zero_index();
        for i in 0..self.grid.len() {
            out.slice_mut(i)[z] += value;
        }
        out.mean_zero = out.zero_modes_vanish();
        out
    }

    /// The time-reversed field `t ↦ f(T - t)` on the same grid.
    pub fn reversed_in_time(&self) -> Self {
        let mut out = self.clone();
        let n = self.grid.len();
        for i in 0..n {
            out.slice_mut(i).copy_from_slice(self.slice(n - 1 - i));
        }
        out
    }

    /// Real part of `Σ_k ĉ(t_i, k) e^{ik·x}`.
    pub fn evaluate(&self, i: usize, x: &[f64]) -> f64 {
        evaluate_slice(self.modes, self.slice(i), x)
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;

    fn add(self, rhs: &SpectralField) -> SpectralField {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;

    fn sub(self, rhs: &SpectralField) -> SpectralField {
        self.axpy(-1.0, rhs)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;

    fn neg(self) -> SpectralField {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;

    fn mul(self, a: f64) -> SpectralField {
        self.scale(a)
    }
}

/// `n` scalar fields on a shared grid and mode set (gradients, `ℋ_p`).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<SpectralField>,
}

impl VectorField {
    pub fn new(components: Vec<SpectralField>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("vector field needs components".into()))?;
        if components.len() != first.modes().dim() {
            return Err(Error::InvalidArgument(format!(
                "vector field on a {}-torus needs {} components, got {}",
                first.modes().dim(),
                first.modes().dim(),
                components.len()
            )));
        }
        if components.iter().any(|c| !c.same_space(first)) {
            return Err(Error::Mismatch);
        }
        Ok(Self { components })
    }

    pub fn zeros(grid: Arc<TimeGrid>, modes: Modes) -> Self {
        Self {
            components: (0..modes.dim())
                .map(|_| SpectralField::zeros(grid.clone(), modes))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[SpectralField] {
        &self.components
    }

    pub fn component(&self, j: usize) -> &SpectralField {
        &self.components[j]
    }

    pub fn into_components(self) -> Vec<SpectralField> {
        self.components
    }

    pub fn modes(&self) -> Modes {
        self.components[0].modes()
    }

    pub fn grid_arc(&self) -> &Arc<TimeGrid> {
        self.components[0].grid_arc()
    }

    pub fn check_scalar(&self, f: &SpectralField) -> Result<()> {
        self.components[0].check_compatible(f)
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().map(|c| c.max_abs()).fold(0.0, f64::max)
    }

    pub fn hermitian_defect(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.hermitian_defect())
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            components: self.components.iter().map(|c| c.scale(a)).collect(),
        }
    }
}

impl Sub for &VectorField {
    type Output = VectorField;

    fn sub(self, rhs: &VectorField) -> VectorField {
        VectorField {
            components: self
                .components
                .iter()
                .zip(&rhs.components)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}
