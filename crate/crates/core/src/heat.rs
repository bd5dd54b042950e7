//! Heat semigroup and the Duhamel integral operators.
//!
//! `I⁺h(t) = ∫₀ᵗ e^{Δ(t-s)} h(s) ds`, `I⁻h(t) = ∫ₜᵀ e^{Δ(s-t)} h(s) ds` and
//! `I_T h = I⁺h(T)`. Per mode the kernel is `e^{-|k|²τ}`; the data is
//! interpolated linearly between samples and integrated against the kernel in
//! closed form, so the rule is exact for data affine in time on every
//! subinterval no matter how stiff `|k|²Δt` is.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fourier::{norm_balpha, random, Modes, Snapshot, SpectralField, TimeGrid};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// `I⁺`, integrating forward from `t = 0`.
    Forward,
    /// `I⁻`, integrating backward from `t = T`.
    Backward,
}

/// One of `I⁺`, `I⁻` bound to a grid.
#[derive(Debug, Clone)]
pub struct DuhamelOperator {
    direction: Direction,
    grid: Arc<TimeGrid>,
}

impl DuhamelOperator {
    pub fn new(direction: Direction, grid: Arc<TimeGrid>) -> Self {
        Self { direction, grid }
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn apply(&self, h: &SpectralField) -> Result<SpectralField> {
        if *h.grid() != *self.grid {
            return Err(Error::Mismatch);
        }
        match self.direction {
            Direction::Forward => i_plus(h),
            Direction::Backward => i_minus(h),
        }
    }
}

/// `e^{Δt}s` sampled on the grid.
pub fn heat_forward(s: &Snapshot, grid: &Arc<TimeGrid>) -> SpectralField {
    propagate(s, grid, |t| t)
}

/// `e^{Δ(T-t)}s` sampled on the grid.
pub fn heat_backward(s: &Snapshot, grid: &Arc<TimeGrid>) -> SpectralField {
    let horizon = grid.horizon();
    propagate(s, grid, |t| horizon - t)
}

fn propagate(s: &Snapshot, grid: &Arc<TimeGrid>, elapsed: impl Fn(f64) -> f64) -> SpectralField {
    let modes = s.modes();
    let mut out = SpectralField::zeros(grid.clone(), modes);
    for i in 0..grid.len() {
        let tau = elapsed(grid.time(i));
        let dst = out.slice_mut(i);
        for (idx, c) in s.coeffs().iter().enumerate() {
            dst[idx] = c * (-modes.norm_sq(idx) * tau).exp();
        }
    }
    out.set_mean_zero_flag(s.is_mean_zero());
    out
}

/// `(1 - e^{-z}) / z`.
fn phi(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        -(-z).exp_m1() / z
    }
}

/// `(1 - e^{-z}(1 + z)) / z²`, by series where the direct form cancels.
fn psi(z: f64) -> f64 {
    if z < 0.1 {
        // Σ_{n≥2} (-1)^n (n-1) z^{n-2} / n!
        let mut sum = 0.0;
        let mut fact = 1.0;
        let mut zp = 1.0;
        for n in 2..18u32 {
            fact *= n as f64;
            let term = (n - 1) as f64 * zp / fact;
            sum += if n % 2 == 0 { term } else { -term };
            zp *= z;
        }
        sum
    } else {
        (-(-z).exp_m1() - z * (-z).exp()) / (z * z)
    }
}

/// Weights `(near, far)` for one subinterval of length `dt`: the integral of
/// `e^{-λτ}` against the linear interpolant, `τ` measured from the endpoint
/// where the kernel equals one. `near` multiplies the value at that endpoint.
fn step_weights(lambda: f64, dt: f64) -> (f64, f64) {
    let z = lambda * dt;
    let w0 = dt * phi(z);
    let w1 = dt * psi(z);
    (w0 - w1, w1)
}

fn check_mean_zero(h: &SpectralField) -> Result<()> {
    if h.is_mean_zero() {
        Ok(())
    } else {
        Err(Error::NotMeanZero {
            time_index: h.first_nonzero_mean().unwrap_or(0),
        })
    }
}

pub fn i_plus(h: &SpectralField) -> Result<SpectralField> {
    check_mean_zero(h)?;
    let modes = h.modes();
    let grid = h.grid();
    let dt = grid.dt();
    let mut out = SpectralField::zeros(h.grid_arc().clone(), modes);
    for idx in 0..modes.len() {
        let lambda = modes.norm_sq(idx);
        let decay = (-lambda * dt).exp();
        let (near, far) = step_weights(lambda, dt);
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..grid.steps() {
            acc = acc * decay + h.slice(m)[idx] * far + h.slice(m + 1)[idx] * near;
            out.slice_mut(m + 1)[idx] = acc;
        }
    }
    out.set_mean_zero_flag(true);
    Ok(out)
}

pub fn i_minus(h: &SpectralField) -> Result<SpectralField> {
    check_mean_zero(h)?;
    let modes = h.modes();
    let grid = h.grid();
    let dt = grid.dt();
    let mut out = SpectralField::zeros(h.grid_arc().clone(), modes);
    for idx in 0..modes.len() {
        let lambda = modes.norm_sq(idx);
        let decay = (-lambda * dt).exp();
        let (near, far) = step_weights(lambda, dt);
        let mut acc = Complex64::new(0.0, 0.0);
        for m in (0..grid.steps()).rev() {
            acc = acc * decay + h.slice(m + 1)[idx] * far + h.slice(m)[idx] * near;
            out.slice_mut(m)[idx] = acc;
        }
    }
    out.set_mean_zero_flag(true);
    Ok(out)
}

/// `I⁺h` at `t = T`.
pub fn i_terminal(h: &SpectralField) -> Result<Snapshot> {
    Ok(i_plus(h)?.final_snapshot())
}

/// Upper bound `2T/(T - 2α) + 2` on `‖I^±‖` from `𝓑_α^j` to `𝓑_α^{j+2}`.
pub fn operator_norm_bound(grid: &TimeGrid) -> f64 {
    let t = grid.horizon();
    2.0 * t / (t - 2.0 * grid.alpha()) + 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorNormEstimate {
    /// Largest ratio over random mean-zero inputs.
    pub random: f64,
    /// Largest ratio over inputs supported on a single `±k` pair.
    pub sweep: f64,
}

impl OperatorNormEstimate {
    pub fn value(&self) -> f64 {
        self.random.max(self.sweep)
    }
}

/// Lower bound on the discrete norm of `I^±: 𝓑_α^j → 𝓑_α^{j+2}` on
/// mean-zero fields.
///
/// Takes the max of `‖I^±h‖_{j+2} / ‖h‖_j` over `trials` random inputs and
/// over a sweep of every `±k` pair with two time profiles: constant, and
/// `e^{-β(t)|k|}`, which saturates the weighted supremum at every sample.
pub fn estimate_operator_norm(
    direction: Direction,
    grid: &Arc<TimeGrid>,
    modes: Modes,
    j: u32,
    trials: usize,
    seed: u64,
) -> Result<OperatorNormEstimate> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let op = DuhamelOperator::new(direction, grid.clone());
    let ratio = |h: &SpectralField| -> Result<f64> {
        let denom = norm_balpha(h, j);
        Ok(norm_balpha(&op.apply(h)?, j + 2) / denom)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_random: f64 = 0.0;
    for _ in 0..trials {
        let rate = rng.gen_range(0.0..1.5);
        let h = random::random_field(grid.clone(), modes, rate, true, &mut rng);
        best_random = best_random.max(ratio(&h)?);
    }

    let mut best_sweep: f64 = 0.0;
    for idx in modes.zero_index() + 1..modes.len() {
        let kn = modes.norm(idx);
        let conj = modes.conj_index(idx);
        for profile in [SweepProfile::Constant, SweepProfile::Weighted] {
            let h = SpectralField::from_fn(grid.clone(), modes, |i, _, k| {
                let at = modes.index_of(k).expect("k from the same box");
                if at != idx && at != conj {
                    return Complex64::new(0.0, 0.0);
                }
                let v = match profile {
                    SweepProfile::Constant => 1.0,
                    SweepProfile::Weighted => (-grid.beta_at(i) * kn).exp(),
                };
                Complex64::new(v, 0.0)
            });
            best_sweep = best_sweep.max(ratio(&h)?);
        }
    }
    Ok(OperatorNormEstimate {
        random: best_random,
        sweep: best_sweep,
    })
}

#[derive(Clone, Copy)]
enum SweepProfile {
    Constant,
    Weighted,
}
