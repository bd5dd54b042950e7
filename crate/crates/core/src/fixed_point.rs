//! The Duhamel map `𝒯 = (𝒯₁, 𝒯₂)` and Picard iteration to its fixed point.
//!
//! With `D(w, μ) = -I⁺ div((μ + m̄) Θ(Dw, μ))` the map reads
//!
//! ```text
//! 𝒯₁(w, μ) = e^{Δt}μ₀ + D(w, μ)
//! 𝒯₂(w, μ) = e^{Δ(T-t)} W_T + I⁻(ℙΥ) + I⁻ℙ(b e^{Δ·}μ₀) + I⁻ℙ(b D(w, μ))
//! ```
//!
//! where `W_T = G̃(𝒯₁(w, μ)(T))` for the payoff problem and `W_T = w_T` for the
//! planning problem. Fixed points solve `u_t + Δu + ℋ = 0`,
//! `m_t - Δm + div(mℋ_p) = 0` in the mean-zero variables `w = ℙu`, `μ = m - m̄`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::fourier::{
    divergence, gradient, norm_balpha, product, project_mean_zero, sample_physical, scale_vector,
    Modes, Snapshot, SpectralField, TimeGrid,
};
use crate::hamiltonian::{HamiltonianModel, PayoffOperator};
use crate::heat::{heat_backward, heat_forward, i_minus, i_plus};
use crate::{Error, Result};

/// Update norms above this are treated as blow-up.
const DIVERGENCE_THRESHOLD: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Payoff,
    Planning,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Terminal {
    /// `u(T) = G(m(T))`.
    Payoff(PayoffOperator),
    /// `u(T) = u_T` with `ℙu_T = w_T` and spatial mean `mean`.
    Planning { w_terminal: Snapshot, mean: f64 },
}

#[derive(Debug, Clone)]
pub struct ProblemData {
    model: HamiltonianModel,
    grid: Arc<TimeGrid>,
    mu0: Snapshot,
    terminal: Terminal,
}

impl ProblemData {
    pub fn payoff(
        model: HamiltonianModel,
        grid: Arc<TimeGrid>,
        mu0: Snapshot,
        payoff: PayoffOperator,
    ) -> Result<Self> {
        Self::new(model, grid, mu0, Terminal::Payoff(payoff))
    }

    pub fn planning(
        model: HamiltonianModel,
        grid: Arc<TimeGrid>,
        mu0: Snapshot,
        w_terminal: Snapshot,
    ) -> Result<Self> {
        Self::new(
            model,
            grid,
            mu0,
            Terminal::Planning {
                w_terminal,
                mean: 0.0,
            },
        )
    }

    pub fn new(model: HamiltonianModel, grid: Arc<TimeGrid>, mu0: Snapshot, terminal: Terminal) -> Result<Self> {
        let modes = mu0.modes();
        if model.dim() != modes.dim() {
            return Err(Error::InvalidData(format!(
                "model is {}-dimensional but the data lives on a {}-torus",
                model.dim(),
                modes.dim()
            )));
        }
        check_real_mean_zero("mu0", &mu0)?;
        if let Terminal::Planning { w_terminal, mean } = &terminal {
            if w_terminal.modes() != modes {
                return Err(Error::Mismatch);
            }
            check_real_mean_zero("w_terminal", w_terminal)?;
            if !mean.is_finite() {
                return Err(Error::InvalidData("terminal mean must be finite".into()));
            }
        }
        for t in model.terms() {
            if let crate::hamiltonian::Coefficient::Field(a) = &t.coefficient {
                if a.grid() != &*grid || a.modes() != modes {
                    return Err(Error::Mismatch);
                }
            }
        }
        Ok(Self {
            model,
            grid,
            mu0,
            terminal,
        })
    }

    /// Sets the spatial mean of `u_T` (planning problems only).
    pub fn with_terminal_mean(mut self, value: f64) -> Result<Self> {
        match &mut self.terminal {
            Terminal::Planning { mean, .. } if value.is_finite() => {
                *mean = value;
                Ok(self)
            }
            Terminal::Planning { .. } => Err(Error::InvalidData("terminal mean must be finite".into())),
            Terminal::Payoff(_) => Err(Error::InvalidArgument(
                "the terminal mean is determined by the payoff".into(),
            )),
        }
    }

    /// Same data with a different Hamiltonian (used for `εℋ`).
    pub fn with_model(&self, model: HamiltonianModel) -> Result<Self> {
        Self::new(model, self.grid.clone(), self.mu0.clone(), self.terminal.clone())
    }

    pub fn kind(&self) -> ProblemKind {
        match self.terminal {
            Terminal::Payoff(_) => ProblemKind::Payoff,
            Terminal::Planning { .. } => ProblemKind::Planning,
        }
    }

    pub fn model(&self) -> &HamiltonianModel {
        &self.model
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn modes(&self) -> Modes {
        self.mu0.modes()
    }

    pub fn mu0(&self) -> &Snapshot {
        &self.mu0
    }

    pub fn terminal(&self) -> &Terminal {
        &self.terminal
    }

    pub fn mbar(&self) -> f64 {
        self.model.mbar()
    }

    /// Minimum of `m₀ = μ₀ + m̄` over a uniform `pointsⁿ` sampling grid.
    pub fn initial_density_min(&self, points: usize) -> f64 {
        let m0 = &self.mu0 + &Snapshot::constant(self.modes(), self.mbar());
        sample_physical(&m0, points).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Rejects initial data that is not a probability density.
    pub fn require_probability(&self) -> Result<()> {
        let min = self.initial_density_min(64);
        if min < 0.0 {
            Err(Error::InvalidData(format!(
                "initial density is negative somewhere (minimum {min:.3e})"
            )))
        } else {
            Ok(())
        }
    }
}

fn check_real_mean_zero(name: &str, s: &Snapshot) -> Result<()> {
    if !s.is_mean_zero() {
        return Err(Error::InvalidData(format!("{name} must be mean-zero")));
    }
    if s.hermitian_defect() > 1e-14 * (1.0 + s.max_abs()) {
        return Err(Error::InvalidData(format!("{name} is not a real function")));
    }
    if s.coeffs().iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::InvalidData(format!("{name} has non-finite coefficients")));
    }
    Ok(())
}

/// Converged `(w, μ)` together with the spatial mean of `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub w: SpectralField,
    pub mu: SpectralField,
    /// `ū(t_i)`, one value per time sample.
    pub u_mean: Vec<f64>,
}

impl Solution {
    pub fn grid(&self) -> &Arc<TimeGrid> {
        self.w.grid_arc()
    }

    pub fn modes(&self) -> Modes {
        self.w.modes()
    }

    /// `m = μ + m̄`.
    pub fn m(&self) -> SpectralField {
        self.mu.add_constant(crate::hamiltonian::uniform_density(self.modes().dim()))
    }

    /// `u = w + ū(t)`.
    pub fn u(&self) -> SpectralField {
        let mut u = self.w.clone();
        let z = self.modes().zero_index();
        for (i, v) in self.u_mean.iter().enumerate() {
            u.slice_mut(i)[z] += v;
        }
        u.set_mean_zero_flag(u.zero_modes_vanish());
        u
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `‖x_i - x_{i-1}‖` in `𝓑_α² × 𝓑_α²`, one per iteration.
    pub update_norms: Vec<f64>,
    /// `λ_i = ‖Δ_{i+1}‖ / ‖Δ_i‖`.
    pub ratios: Vec<f64>,
    /// `‖𝒯(x) - x‖` at the returned iterate.
    pub final_residual: f64,
    /// `‖a₀‖_{𝓑_α²}` and `‖b₀‖_{𝓑_α²}` of the starting center.
    pub center_norms: (f64, f64),
    /// Largest distance of the orbit from the center.
    pub orbit_radius: f64,
    pub tolerance: f64,
    pub converged: bool,
}

impl SolveReport {
    pub fn last_update(&self) -> f64 {
        self.update_norms.last().copied().unwrap_or(0.0)
    }
}

/// `‖(w, μ)‖ = ‖w‖_{𝓑_α²} + ‖μ‖_{𝓑_α²}`.
pub fn pair_norm(w: &SpectralField, mu: &SpectralField) -> f64 {
    norm_balpha(w, 2) + norm_balpha(mu, 2)
}

/// `(a₀, b₀)`: the image of `(0, 0)` under `𝒯` for models with `Θ(0,0) = 0`,
/// `Υ(0,0) = 0`.
pub fn ball_center(data: &ProblemData) -> Result<(SpectralField, SpectralField)> {
    let grid = data.grid();
    let a0 = heat_forward(data.mu0(), grid);
    let terminal = match data.terminal() {
        Terminal::Payoff(g) => g.eval(&a0.final_snapshot())?,
        Terminal::Planning { w_terminal, .. } => w_terminal.clone(),
    };
    let b = data.model().linear_coefficient(grid, data.modes());
    let mut b0 = heat_backward(&terminal, grid);
    if b.max_abs() > 0.0 {
        b0 = &b0 + &i_minus(&project_mean_zero(&product(&b, &a0)?))?;
    }
    Ok((a0, b0))
}

fn check_iterate(w: &SpectralField, mu: &SpectralField, data: &ProblemData) -> Result<()> {
    w.check_compatible(mu)?;
    if w.grid() != &**data.grid() || w.modes() != data.modes() {
        return Err(Error::Mismatch);
    }
    for (f, name) in [(w, "w"), (mu, "mu")] {
        if !f.is_mean_zero() {
            return Err(Error::InvalidArgument(format!("{name} must be mean-zero")));
        }
    }
    Ok(())
}

/// `-I⁺ div((μ + m̄) Θ(Dw, μ))`.
fn transport_term(w: &SpectralField, mu: &SpectralField, model: &HamiltonianModel) -> Result<SpectralField> {
    let theta = model.eval_theta(&gradient(w), mu)?;
    let flux = scale_vector(&mu.add_constant(model.mbar()), &theta)?;
    Ok(i_plus(&divergence(&flux))?.scale(-1.0))
}

/// Both components of `𝒯`, sharing the `Θ` evaluation.
pub fn apply_t(w: &SpectralField, mu: &SpectralField, data: &ProblemData) -> Result<(SpectralField, SpectralField)> {
    check_iterate(w, mu, data)?;
    let grid = data.grid();
    let model = data.model();
    let t1 = &heat_forward(data.mu0(), grid) + &transport_term(w, mu, model)?;
    let terminal = match data.terminal() {
        Terminal::Payoff(g) => g.eval(&t1.final_snapshot())?,
        Terminal::Planning { w_terminal, .. } => w_terminal.clone(),
    };
    let (b, upsilon) = model.eval_upsilon_b(&gradient(w), mu)?;
    // ℙ(b e^{Δ·}μ₀) + ℙ(b D) = ℙ(b 𝒯₁): the linear term with μ back-substituted.
    let mut source = project_mean_zero(&upsilon);
    if b.max_abs() > 0.0 {
        source = &source + &project_mean_zero(&product(&b, &t1)?);
    }
    let t2 = &heat_backward(&terminal, grid) + &i_minus(&source)?;
    Ok((t2, t1))
}

pub fn apply_t1(w: &SpectralField, mu: &SpectralField, data: &ProblemData) -> Result<SpectralField> {
    check_iterate(w, mu, data)?;
    Ok(&heat_forward(data.mu0(), data.grid()) + &transport_term(w, mu, data.model())?)
}

pub fn apply_t2(w: &SpectralField, mu: &SpectralField, data: &ProblemData) -> Result<SpectralField> {
    Ok(apply_t(w, mu, data)?.0)
}

/// Picard iteration from the ball center.
pub fn picard_solve(data: &ProblemData, tol: f64, max_iter: usize) -> Result<(Solution, SolveReport)> {
    let (a0, b0) = ball_center(data)?;
    picard_solve_from(data, (b0, a0), tol, max_iter)
}

/// Picard iteration from an arbitrary mean-zero start `(w, μ)`.
pub fn picard_solve_from(
    data: &ProblemData,
    start: (SpectralField, SpectralField),
    tol: f64,
    max_iter: usize,
) -> Result<(Solution, SolveReport)> {
    let (a0, b0) = ball_center(data)?;
    let ((w, mu), report) = iterate(|w, mu| apply_t(w, mu, data), start, &(b0, a0), tol, max_iter)?;
    let u_mean = recover_mean_u(&w, &mu, data)?;
    Ok((Solution { w, mu, u_mean }, report))
}

/// Generic fixed-point loop on pairs `(w, μ)`; shared with the ε-continuation.
pub(crate) fn iterate(
    map: impl Fn(&SpectralField, &SpectralField) -> Result<(SpectralField, SpectralField)>,
    start: (SpectralField, SpectralField),
    // (w, μ) order, like `start`
    center: &(SpectralField, SpectralField),
    tol: f64,
    max_iter: usize,
) -> Result<((SpectralField, SpectralField), SolveReport)> {
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::InvalidArgument("need tol > 0 and max_iter ≥ 1".into()));
    }
    let distance = |w: &SpectralField, mu: &SpectralField| pair_norm(&(w - &center.0), &(mu - &center.1));
    let mut report = SolveReport {
        iterations: 0,
        update_norms: vec![],
        ratios: vec![],
        final_residual: f64::NAN,
        center_norms: (norm_balpha(&center.1, 2), norm_balpha(&center.0, 2)),
        orbit_radius: distance(&start.0, &start.1),
        tolerance: tol,
        converged: false,
    };
    let (mut w, mut mu) = start;
    for _ in 0..max_iter {
        let (w_next, mu_next) = map(&w, &mu)?;
        let d = pair_norm(&(&w_next - &w), &(&mu_next - &mu));
        if let Some(&prev) = report.update_norms.last() {
            report.ratios.push(if d == 0.0 { 0.0 } else { d / prev });
        }
        report.update_norms.push(d);
        report.iterations += 1;
        w = w_next;
        mu = mu_next;
        if !d.is_finite() || d > DIVERGENCE_THRESHOLD {
            break;
        }
        report.orbit_radius = report.orbit_radius.max(distance(&w, &mu));
        if d < tol {
            report.converged = true;
            break;
        }
    }
    if !report.converged {
        return Err(Error::NotConverged {
            report: Box::new(report),
        });
    }
    let (w_check, mu_check) = map(&w, &mu)?;
    report.final_residual = pair_norm(&(&w_check - &w), &(&mu_check - &mu));
    Ok(((w, mu), report))
}

/// Largest observed contraction ratio; `Some(0)` for an orbit that hit its
/// fixed point on the first step, `None` when there is nothing to compare.
pub fn contraction_ratio(report: &SolveReport) -> Option<f64> {
    if report.ratios.is_empty() {
        return (report.update_norms.first() == Some(&0.0)).then_some(0.0);
    }
    Some(report.ratios.iter().copied().fold(0.0, f64::max))
}

/// Spatial mean of `u`: `ū(t) = ū(T) + ∫ₜᵀ ⟨ℋ(s)⟩ ds` by the trapezoid rule.
pub fn recover_mean_u(w: &SpectralField, mu: &SpectralField, data: &ProblemData) -> Result<Vec<f64>> {
    let h = data.model().eval_hamiltonian(&gradient(w), mu)?;
    let z = data.modes().zero_index();
    let terminal = match data.terminal() {
        Terminal::Payoff(g) => g.eval_full(&mu.final_snapshot())?.mean(),
        Terminal::Planning { mean, .. } => *mean,
    };
    let grid = data.grid();
    let n = grid.len();
    let mut out = vec![0.0; n];
    out[n - 1] = terminal;
    for i in (0..n - 1).rev() {
        let avg = 0.5 * (h.slice(i)[z].re + h.slice(i + 1)[z].re);
        out[i] = out[i + 1] + grid.dt() * avg;
    }
    Ok(out)
}

/// `‖w - (e^{Δ(T-t)}G̃(μ(T)) + I⁻ℙΥ + I⁻ℙ(bμ))‖_{𝓑_α²}`: how far a payoff
/// solution is from the Duhamel formula written before back-substitution.
/// For planning data `w_T` replaces `G̃(μ(T))`.
pub fn formulation_gap(sol: &Solution, data: &ProblemData) -> Result<f64> {
    let grid = data.grid();
    let terminal = match data.terminal() {
        Terminal::Payoff(g) => g.eval(&sol.mu.final_snapshot())?,
        Terminal::Planning { w_terminal, .. } => w_terminal.clone(),
    };
    let (b, upsilon) = data.model().eval_upsilon_b(&gradient(&sol.w), &sol.mu)?;
    let source = &project_mean_zero(&upsilon) + &project_mean_zero(&product(&b, &sol.mu)?);
    let rhs = &heat_backward(&terminal, grid) + &i_minus(&source)?;
    Ok(norm_balpha(&(&sol.w - &rhs), 2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::{random, Modes};
    use crate::hamiltonian::uniform_density;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(steps: usize) -> Arc<TimeGrid> {
        Arc::new(TimeGrid::new(1.0, 0.25, steps).unwrap())
    }

    fn cos(m: Modes, a: f64) -> Snapshot {
        Snapshot::cosine(m, &[1], a).unwrap()
    }

    fn closed_form(g: &Arc<TimeGrid>, m: Modes, amp: f64, backward: bool) -> SpectralField {
        let t_end = g.horizon();
        SpectralField::from_fn(g.clone(), m, |_, t, k| {
            let tau = if backward { t_end - t } else { t };
            if k[0].abs() == 1 {
                Complex64::new(0.5 * amp * (-tau).exp(), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    #[test]
    fn heat_flow_in_one_iteration() {
        let g = grid(16);
        let m = Modes::new(1, 8).unwrap();
        let data = ProblemData::planning(HamiltonianModel::zero(1), g.clone(), cos(m, 0.05), cos(m, 0.1)).unwrap();
        let (sol, report) = picard_solve(&data, 1e-12, 10).unwrap();
        assert_eq!(report.iterations, 1, "{report:?}");
        assert_eq!(contraction_ratio(&report), Some(0.0));
        assert!((&sol.mu - &closed_form(&g, m, 0.05, false)).max_abs() < 1e-15);
        assert!((&sol.w - &closed_form(&g, m, 0.1, true)).max_abs() < 1e-15);
        assert!(sol.u_mean.iter().all(|&v| v == 0.0));
        assert_eq!(report.final_residual, 0.0);
    }

    #[test]
    fn ball_center_examples() {
        let g = grid(8);
        let m = Modes::new(1, 6).unwrap();
        let zero = Snapshot::zeros(m);
        let data = ProblemData::payoff(HamiltonianModel::quartic_example(1), g.clone(), zero.clone(), PayoffOperator::square())
            .unwrap();
        let (a0, b0) = ball_center(&data).unwrap();
        assert_eq!((a0.max_abs(), b0.max_abs()), (0.0, 0.0));

        let data = ProblemData::planning(HamiltonianModel::quartic_example(1), g.clone(), zero, cos(m, 0.1)).unwrap();
        let (a0, b0) = ball_center(&data).unwrap();
        assert_eq!(a0.max_abs(), 0.0);
        assert!((&b0 - &closed_form(&g, m, 0.1, true)).max_abs() < 1e-16);
    }

    #[test]
    fn ball_center_single_mode_closed_form() {
        // μ₀ = δ cos x, b = 3m̄², G(a) = a:
        //   b₀(t) = e^{-(2T-t)}δ cos x + b δ cos x ∫ₜᵀ e^{-(s-t)} e^{-s} ds
        //         = δ cos x e^{-t} [e^{-2(T-t)} + b (1 - e^{-2(T-t)})/2]
        let g = grid(32);
        let m = Modes::new(1, 6).unwrap();
        let d = 0.05;
        let data = ProblemData::payoff(HamiltonianModel::quartic_example(1), g.clone(), cos(m, d), PayoffOperator::identity())
            .unwrap();
        let (_, b0) = ball_center(&data).unwrap();
        let b = 3.0 * uniform_density(1).powi(2);
        for i in 0..g.len() {
            let t = g.time(i);
            let s = 2.0 * (1.0 - t);
            let exact = 0.5 * d * (-t).exp() * ((-s).exp() + b * (1.0 - (-s).exp()) / 2.0);
            // the quadrature is second order; this grid resolves it to ~1e-6 relative
            assert!((b0.coeff(i, &[1]).re - exact).abs() < 1e-5 * d, "t = {t}");
        }
    }

    #[test]
    fn zero_model_map_ignores_iterate() {
        let g = grid(8);
        let m = Modes::new(1, 5).unwrap();
        let data = ProblemData::payoff(HamiltonianModel::zero(1), g.clone(), cos(m, 0.2), PayoffOperator::identity()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random::random_field(g.clone(), m, 0.5, true, &mut rng);
        let mu = random::random_field(g.clone(), m, 0.5, true, &mut rng);
        let t1 = apply_t1(&w, &mu, &data).unwrap();
        assert_eq!(t1, heat_forward(&cos(m, 0.2), &g));
        let t2 = apply_t2(&w, &mu, &data).unwrap();
        let expect = heat_backward(&heat_forward(&cos(m, 0.2), &g).final_snapshot(), &g);
        assert!((&t2 - &expect).max_abs() < 1e-17);
    }

    #[test]
    fn map_at_origin_is_center() {
        let g = grid(8);
        let m = Modes::new(1, 6).unwrap();
        let data = ProblemData::payoff(HamiltonianModel::quartic_example(1), g.clone(), cos(m, 0.05), PayoffOperator::square())
            .unwrap();
        let z = SpectralField::zeros(g.clone(), m);
        let (t2, t1) = apply_t(&z, &z, &data).unwrap();
        let (a0, b0) = ball_center(&data).unwrap();
        assert!((&t1 - &a0).max_abs() < 1e-18);
        assert!((&t2 - &b0).max_abs() < 1e-17);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = grid(8);
        let m = Modes::new(1, 4).unwrap();
        let model = HamiltonianModel::zero(1);
        let with_mean = &cos(m, 0.1) + &Snapshot::constant(m, 0.1);
        assert!(ProblemData::planning(model.clone(), g.clone(), with_mean, cos(m, 0.1)).is_err());
        assert!(ProblemData::planning(HamiltonianModel::zero(2), g.clone(), cos(m, 0.1), cos(m, 0.1)).is_err());
        let data = ProblemData::planning(model, g.clone(), cos(m, 0.1), cos(m, 0.1)).unwrap();
        assert!(picard_solve(&data, 0.0, 10).is_err());
        let not_mean_zero = SpectralField::constant(g.clone(), m, 1.0);
        assert!(apply_t1(&not_mean_zero, &SpectralField::zeros(g, m), &data).is_err());
        assert!(ProblemData::payoff(HamiltonianModel::zero(1), grid(8), cos(m, 0.1), PayoffOperator::identity())
            .unwrap()
            .with_terminal_mean(1.0)
            .is_err());
    }

    #[test]
    fn probability_check() {
        let g = grid(8);
        let m = Modes::new(1, 4).unwrap();
        let ok = ProblemData::planning(HamiltonianModel::zero(1), g.clone(), cos(m, 0.1), cos(m, 0.0)).unwrap();
        assert!(ok.require_probability().is_ok());
        let bad = ProblemData::planning(HamiltonianModel::zero(1), g, cos(m, 0.3), cos(m, 0.0)).unwrap();
        assert!(bad.initial_density_min(64) < 0.0);
        assert!(bad.require_probability().is_err());
    }

    #[test]
    fn mean_of_u_for_pure_density_hamiltonian() {
        let g = grid(8);
        let m = Modes::new(1, 4).unwrap();
        let data = ProblemData::planning(HamiltonianModel::density_power(1, 1.0, 3), g.clone(), Snapshot::zeros(m), Snapshot::zeros(m))
            .unwrap()
            .with_terminal_mean(0.7)
            .unwrap();
        let z = SpectralField::zeros(g.clone(), m);
        let means = recover_mean_u(&z, &z, &data).unwrap();
        let mb3 = uniform_density(1).powi(3);
        for i in 0..g.len() {
            assert_abs_diff_eq!(means[i], 0.7 + mb3 * (1.0 - g.time(i)), epsilon = 1e-15);
        }
    }

    #[test]
    fn small_payoff_problem_converges_and_is_consistent() {
        let g = grid(16);
        let m = Modes::new(1, 8).unwrap();
        let data = ProblemData::payoff(HamiltonianModel::quartic_example(1), g.clone(), cos(m, 0.05), PayoffOperator::square())
            .unwrap();
        let (sol, report) = picard_solve(&data, 1e-12, 60).unwrap();
        assert!(report.converged && report.final_residual < 1e-11);
        assert!(contraction_ratio(&report).unwrap() < 6.0 / 7.0);
        assert_eq!(sol.mu.snapshot(0), cos(m, 0.05));
        assert!(formulation_gap(&sol, &data).unwrap() < 1e-10);
        let mass = sol.m();
        for i in 0..g.len() {
            assert_eq!(mass.coeff(i, &[0]).re, uniform_density(1));
        }
        // payoff mean at T is ⟨m(T)²⟩
        let mt = mass.final_snapshot();
        let expect = crate::fourier::product_snapshot(&mt, &mt).unwrap().mean();
        assert_abs_diff_eq!(*sol.u_mean.last().unwrap(), expect, epsilon = 1e-15);
        assert_eq!(sol.u().coeff(3, &[0]).re, sol.u_mean[3]);
    }

    #[test]
    fn large_data_reports_divergence() {
        let g = grid(16);
        let m = Modes::new(1, 8).unwrap();
        let data = ProblemData::payoff(HamiltonianModel::quartic_example(1), g, cos(m, 10.0), PayoffOperator::identity())
            .unwrap();
        match picard_solve(&data, 1e-9, 50) {
            Err(Error::NotConverged { report }) => {
                assert!(!report.converged);
                assert!(report.ratios.iter().any(|&r| r >= 1.0));
            }
            other => panic!("expected divergence, got {:?}", other.map(|r| r.1)),
        }
    }

    #[test]
    fn distinct_starts_reach_the_same_point() {
        let g = grid(16);
        let m = Modes::new(1, 8).unwrap();
        let data = ProblemData::planning(HamiltonianModel::quartic_example(1), g.clone(), cos(m, 0.02), cos(m, 0.02))
            .unwrap();
        let (a0, b0) = ball_center(&data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let solve = |rng: &mut ChaCha8Rng| {
            let pw = random::random_field(g.clone(), m, 1.0, true, rng).scale(0.01);
            let pm = random::random_field(g.clone(), m, 1.0, true, rng).scale(0.01);
            picard_solve_from(&data, (&b0 + &pw, &a0 + &pm), 1e-12, 100).unwrap().0
        };
        let s1 = solve(&mut rng);
        let s2 = solve(&mut rng);
        assert!(pair_norm(&(&s1.w - &s2.w), &(&s1.mu - &s2.mu)) < 1e-11);
    }
}
