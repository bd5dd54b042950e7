//! Independent checks on computed solutions.
//!
//! - [`residual_pde`] plugs a solution into `u_t + Δu + εℋ = 0` and
//!   `m_t - Δm + div(m εℋ_p) = 0` directly.
//! - [`oracle_time_stepper`] re-solves the problem by forward-backward sweeps
//!   with an exponential Runge–Kutta integrator; it shares only the spectral
//!   primitives and the Hamiltonian evaluation with the Duhamel solver.
//! - [`convolution_oracle`] is the textbook double sum behind every product.

use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::fixed_point::{ProblemData, Solution, Terminal};
use crate::fourier::{
    decay_fit, divergence, gradient, sample_physical, scale_vector, Modes, Snapshot, SpectralField, TimeGrid,
};
use crate::{Error, Result};

/// Sampling resolution per axis for the positivity check.
pub const POSITIVITY_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySample {
    pub time: f64,
    pub beta: f64,
    /// Fitted `ln|ĉ(k)|` slope for `μ` and `w`; `None` when too few modes
    /// rise above the noise floor for a fit.
    pub slope_mu: Option<f64>,
    pub slope_w: Option<f64>,
}

impl DecaySample {
    /// Every available slope is at most `-β + tolerance`.
    pub fn passes(&self, tolerance: f64) -> bool {
        [self.slope_mu, self.slope_w]
            .into_iter()
            .flatten()
            .all(|s| s <= -self.beta + tolerance)
    }
}

/// Mass, positivity and analyticity diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    /// `max_i |m̂(t_i, 0) - m̄|`.
    pub mass_deviation: f64,
    /// Minimum of `m` over the `64ⁿ` grid and all time samples.
    pub positivity_min: f64,
    /// One sample per interior time.
    pub decay: Vec<DecaySample>,
}

impl Audit {
    /// The decay sample closest to `t`.
    pub fn decay_at(&self, t: f64) -> Option<&DecaySample> {
        self.decay
            .iter()
            .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Sup over interior samples and modes of the `u` equation residual.
    pub hjb_residual: f64,
    /// Same for the `m` equation.
    pub fp_residual: f64,
    /// `sup |μ̂(0) - μ̂₀|`.
    pub initial_error: f64,
    /// `sup |ŵ(T) - Ŵ_T|` together with the mismatch of the mean of `u(T)`.
    pub terminal_error: f64,
    pub audit: Audit,
}

/// `(1 - e^{-2λΔt}) / λ`, the exact weight of a constant source over two steps.
fn two_step_weight(lambda: f64, dt: f64) -> f64 {
    if lambda == 0.0 {
        2.0 * dt
    } else {
        -(-2.0 * lambda * dt).exp_m1() / lambda
    }
}

/// PDE residuals of `sol` for the Hamiltonian `εℋ`.
///
/// Each mode `k` is differenced across two steps in the frame of its own
/// heat factor: for the `u` equation
/// `r_i = (û_{i-1} - e^{-2|k|²Δt} û_{i+1}) / W - εĤ_i` with
/// `W = (1 - e^{-2|k|²Δt}) / |k|²`. This is the centered difference
/// `-(u_t + Δu + εℋ)` up to `O(Δt²)`, vanishes identically on heat flows,
/// and stays bounded for stiff modes.
pub fn residual_pde(sol: &Solution, data: &ProblemData, eps: f64) -> Result<ResidualReport> {
    let grid = data.grid();
    if grid.steps() < 4 {
        return Err(Error::InvalidArgument("residuals need at least 4 time steps".into()));
    }
    if sol.w.grid() != &**grid || sol.modes() != data.modes() {
        return Err(Error::Mismatch);
    }
    let model = data.model().scaled(eps);
    let u = sol.u();
    let m = sol.m();
    let dw = gradient(&sol.w);
    let h = model.eval_hamiltonian(&dw, &sol.mu)?;
    let theta = model.eval_theta(&dw, &sol.mu)?;
    let transport = divergence(&scale_vector(&m, &theta)?);

    let modes = data.modes();
    let dt = grid.dt();
    let mut hjb: f64 = 0.0;
    let mut fp: f64 = 0.0;
    for i in 1..grid.steps() {
        for idx in 0..modes.len() {
            let lambda = modes.norm_sq(idx);
            let decay = (-2.0 * lambda * dt).exp();
            let w = two_step_weight(lambda, dt);
            let ru = (u.slice(i - 1)[idx] - u.slice(i + 1)[idx] * decay) / w - h.slice(i)[idx];
            let rm = (m.slice(i + 1)[idx] - m.slice(i - 1)[idx] * decay) / w + transport.slice(i)[idx];
            hjb = hjb.max(ru.norm());
            fp = fp.max(rm.norm());
        }
    }

    let initial_error = (&sol.mu.snapshot(0) - data.mu0()).max_abs();
    let mu_t = sol.mu.final_snapshot();
    let (target, mean) = match data.terminal() {
        Terminal::Payoff(g) => (g.eval(&mu_t)?, g.eval_full(&mu_t)?.mean()),
        Terminal::Planning { w_terminal, mean } => (w_terminal.clone(), *mean),
    };
    let last = *sol.u_mean.last().unwrap_or(&f64::NAN);
    let terminal_error = (&sol.w.final_snapshot() - &target).max_abs().max((last - mean).abs());

    Ok(ResidualReport {
        hjb_residual: hjb,
        fp_residual: fp,
        initial_error,
        terminal_error,
        audit: audit(sol, data)?,
    })
}

/// Mass conservation, positivity of `m` and Fourier decay rates.
pub fn audit(sol: &Solution, data: &ProblemData) -> Result<Audit> {
    let grid = data.grid();
    let m = sol.m();
    let mbar = data.mbar();
    let z = data.modes().zero_index();
    let mut mass_deviation: f64 = 0.0;
    let mut positivity_min = f64::INFINITY;
    for i in 0..grid.len() {
        mass_deviation = mass_deviation.max((m.slice(i)[z] - mbar).norm());
        let min = sample_physical(&m.snapshot(i), POSITIVITY_POINTS)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        positivity_min = positivity_min.min(min);
    }
    let decay = (1..grid.steps())
        .map(|i| DecaySample {
            time: grid.time(i),
            beta: grid.beta_at(i),
            slope_mu: decay_fit(&sol.mu, i).ok().map(|f| f.slope),
            slope_w: decay_fit(&sol.w, i).ok().map(|f| f.slope),
        })
        .collect();
    Ok(Audit {
        mass_deviation,
        positivity_min,
        decay,
    })
}

/// `Σ_j f̂(k - j) ĝ(j)` over the retained box, by direct summation.
pub fn convolution_oracle(f: &Snapshot, g: &Snapshot) -> Result<Snapshot> {
    let modes = f.modes();
    if g.modes() != modes {
        return Err(Error::Mismatch);
    }
    let dim = modes.dim();
    let mut out = vec![Complex64::new(0.0, 0.0); modes.len()];
    for (ik, k) in modes.iter() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (ij, j) in modes.iter() {
            let diff: Vec<i64> = (0..dim).map(|d| k[d] - j[d]).collect();
            if let Some(id) = modes.index_of(&diff) {
                acc += f.coeffs()[id] * g.coeffs()[ij];
            }
        }
        out[ik] = acc;
    }
    Snapshot::from_coeffs(modes, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    /// Fine steps per coarse step.
    pub refinement: usize,
    /// Fraction of each sweep's change that is accepted.
    pub damping: f64,
    /// Stop when successive sweeps differ by less than this (sup over
    /// coefficients).
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            refinement: 4,
            damping: 0.5,
            tol: 1e-12,
            max_sweeps: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub sweeps: usize,
    /// Sup-norm change per sweep.
    pub differences: Vec<f64>,
}

/// `(1 - e^{-z}) / z` and `(e^{-z} - 1 + z) / z²`.
fn etd_weights(z: f64) -> (f64, f64) {
    if z < 0.5 {
        // Σ (-z)ⁿ/(n+1)! and Σ (-z)ⁿ/(n+2)!
        let (mut p1, mut p2) = (0.0, 0.0);
        let mut term = 1.0;
        for n in 0..16 {
            p1 += term / (n + 1) as f64;
            p2 += term / ((n + 1) * (n + 2)) as f64;
            term *= -z / (n + 1) as f64;
        }
        (p1, p2)
    } else {
        let e = (-z).exp_m1();
        (-e / z, (e + z) / (z * z))
    }
}

fn snapshot_gradient(s: &Snapshot) -> Vec<Snapshot> {
    let modes = s.modes();
    (0..modes.dim())
        .map(|j| {
            let coeffs = modes
                .iter()
                .map(|(idx, k)| Complex64::new(0.0, k[j] as f64) * s.coeffs()[idx])
                .collect();
            Snapshot::from_coeffs(modes, coeffs).expect("same length")
        })
        .collect()
}

fn snapshot_divergence(v: &[Snapshot]) -> Snapshot {
    let modes = v[0].modes();
    let coeffs = modes
        .iter()
        .map(|(idx, k)| {
            v.iter()
                .enumerate()
                .map(|(j, c)| Complex64::new(0.0, k[j] as f64) * c.coeffs()[idx])
                .sum()
        })
        .collect();
    Snapshot::from_coeffs(modes, coeffs).expect("same length")
}

/// One exponential RK2 step of `y' = -|k|²y + N(y)` per mode.
struct Stepper {
    decay: Vec<f64>,
    w1: Vec<f64>,
    w2: Vec<f64>,
}

impl Stepper {
    fn new(modes: Modes, h: f64) -> Self {
        let mut s = Self {
            decay: vec![],
            w1: vec![],
            w2: vec![],
        };
        for idx in 0..modes.len() {
            let z = modes.norm_sq(idx) * h;
            let (p1, p2) = etd_weights(z);
            s.decay.push((-z).exp());
            s.w1.push(h * p1);
            s.w2.push(h * p2);
        }
        s
    }

    fn predict(&self, y: &Snapshot, n: &Snapshot) -> Snapshot {
        let c = (0..self.decay.len())
            .map(|i| y.coeffs()[i] * self.decay[i] + n.coeffs()[i] * self.w1[i])
            .collect();
        Snapshot::from_coeffs(y.modes(), c).expect("same length")
    }

    fn correct(&self, a: &Snapshot, n0: &Snapshot, n1: &Snapshot) -> Snapshot {
        let c = (0..self.decay.len())
            .map(|i| a.coeffs()[i] + (n1.coeffs()[i] - n0.coeffs()[i]) * self.w2[i])
            .collect();
        Snapshot::from_coeffs(a.modes(), c).expect("same length")
    }
}

fn sup_diff(a: &[Snapshot], b: &[Snapshot]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).max_abs()).fold(0.0, f64::max)
}

fn blend(old: &mut [Snapshot], new: &[Snapshot], theta: f64) {
    for (o, n) in old.iter_mut().zip(new) {
        *o = &o.scale(1.0 - theta) + &n.scale(theta);
    }
}

/// Solves the MFG system with Hamiltonian `εℋ` by damped forward-backward
/// sweeps on a grid `refinement` times finer than `data`'s: `μ` is advanced
/// forward with `u` frozen, then `u` (mean included) backward with `μ` frozen,
/// each by an exponential RK2 scheme that is exact for the diffusion.
pub fn oracle_time_stepper(data: &ProblemData, eps: f64, opts: OracleOptions) -> Result<(Solution, OracleReport)> {
    if opts.refinement == 0 || !(opts.damping > 0.0 && opts.damping <= 1.0) || !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("invalid oracle options".into()));
    }
    let coarse = data.grid();
    let fine = TimeGrid::new(coarse.horizon(), coarse.alpha(), coarse.steps() * opts.refinement)?;
    let model = data.model().scaled(eps);
    let modes = data.modes();
    let mbar = data.mbar();
    let stepper = Stepper::new(modes, fine.dt());
    let n = fine.len();

    // μ_t = Δμ - div((μ + m̄)Θ)
    let fp_source = |t: f64, mu: &Snapshot, u: &Snapshot| -> Result<Snapshot> {
        let theta = model.eval_theta_at(t, &snapshot_gradient(u), mu)?;
        let m = mu + &Snapshot::constant(modes, mbar);
        let flux = theta
            .iter()
            .map(|c| crate::fourier::product_snapshot(&m, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(snapshot_divergence(&flux).scale(-1.0))
    };
    // in reversed time τ = T - t: u_τ = Δu + ℋ
    let hjb_source = |t: f64, u: &Snapshot, mu: &Snapshot| model.eval_hamiltonian_at(t, &snapshot_gradient(u), mu);

    let forward = |u: &[Snapshot]| -> Result<Vec<Snapshot>> {
        let mut mu = vec![data.mu0().clone()];
        for k in 0..n - 1 {
            let (t0, t1) = (fine.time(k), fine.time(k + 1));
            let n0 = fp_source(t0, &mu[k], &u[k])?;
            let a = stepper.predict(&mu[k], &n0);
            let n1 = fp_source(t1, &a, &u[k + 1])?;
            mu.push(stepper.correct(&a, &n0, &n1));
        }
        Ok(mu)
    };
    let backward = |mu: &[Snapshot]| -> Result<Vec<Snapshot>> {
        let mu_t = &mu[n - 1];
        let terminal = match data.terminal() {
            Terminal::Payoff(g) => g.eval_full(mu_t)?,
            Terminal::Planning { w_terminal, mean } => w_terminal + &Snapshot::constant(modes, *mean),
        };
        let mut u = vec![Snapshot::zeros(modes); n];
        u[n - 1] = terminal;
        for k in (0..n - 1).rev() {
            let (t1, t0) = (fine.time(k + 1), fine.time(k));
            let n0 = hjb_source(t1, &u[k + 1], &mu[k + 1])?;
            let a = stepper.predict(&u[k + 1], &n0);
            let n1 = hjb_source(t0, &a, &mu[k])?;
            u[k] = stepper.correct(&a, &n0, &n1);
        }
        Ok(u)
    };

    let mut u = vec![Snapshot::zeros(modes); n];
    let mut mu = forward(&u)?;
    u = backward(&mu)?;
    let mut report = OracleReport {
        sweeps: 1,
        differences: vec![],
    };
    loop {
        if report.sweeps >= opts.max_sweeps {
            return Err(Error::OracleNotConverged {
                sweeps: report.sweeps,
                difference: report.differences.last().copied().unwrap_or(f64::NAN),
            });
        }
        let mu_new = forward(&u)?;
        let u_new = backward(&mu_new)?;
        let diff = sup_diff(&mu_new, &mu).max(sup_diff(&u_new, &u));
        report.sweeps += 1;
        report.differences.push(diff);
        if !diff.is_finite() || diff > 1e8 {
            return Err(Error::OracleNotConverged {
                sweeps: report.sweeps,
                difference: diff,
            });
        }
        if diff < opts.tol {
            mu = mu_new;
            u = u_new;
            break;
        }
        blend(&mut mu, &mu_new, opts.damping);
        blend(&mut u, &u_new, opts.damping);
    }

    let z = modes.zero_index();
    let pick = |v: &[Snapshot], project: bool| -> Result<SpectralField> {
        let mut out = Vec::with_capacity(coarse.len() * modes.len());
        for i in 0..coarse.len() {
            let mut s = v[i * opts.refinement].coeffs().to_vec();
            if project {
                s[z] = Complex64::new(0.0, 0.0);
            }
            out.extend(s);
        }
        SpectralField::from_data(coarse.clone(), modes, out)
    };
    let u_mean = (0..coarse.len()).map(|i| u[i * opts.refinement].coeffs()[z].re).collect();
    let sol = Solution {
        w: pick(&u, true)?,
        mu: pick(&mu, false)?,
        u_mean,
    };
    Ok((sol, report))
}
