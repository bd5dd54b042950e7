//! Weak coupling: the planning problem with Hamiltonian `εℋ`.
//!
//! `F((w, μ), ε) = (w - e^{Δ(T-·)}w_T - εI⁻Ξ, μ - e^{Δ·}μ₀ + εI⁺div((μ + m̄)Θ))`
//! vanishes at `ε = 0` on the heat flow and has derivative `Id` there, so the
//! rearranged Picard map converges for small `|ε|` with rate `O(ε)` whatever
//! the size of the data. The sweep follows the branch outward in both
//! directions with warm starts.

use serde::{Deserialize, Serialize};

use crate::fixed_point::{iterate, pair_norm, recover_mean_u, ProblemData, ProblemKind, Solution, SolveReport, Terminal};
use crate::fourier::{divergence, gradient, scale_vector, SpectralField};
use crate::heat::{heat_backward, heat_forward, i_minus, i_plus};
use crate::{Error, Result};

fn planning_terminal(data: &ProblemData) -> Result<&crate::fourier::Snapshot> {
    match data.terminal() {
        Terminal::Planning { w_terminal, .. } => Ok(w_terminal),
        Terminal::Payoff(_) => Err(Error::InvalidArgument(
            "the ε-formulation is stated for planning data".into(),
        )),
    }
}

/// `(e^{Δ(T-t)}w_T, e^{Δt}μ₀)`, the `ε = 0` solution.
pub fn heat_flow(data: &ProblemData) -> Result<(SpectralField, SpectralField)> {
    let wt = planning_terminal(data)?;
    Ok((heat_backward(wt, data.grid()), heat_forward(data.mu0(), data.grid())))
}

/// `(εI⁻Ξ, -εI⁺div((μ + m̄)Θ))`.
fn coupling_terms(
    w: &SpectralField,
    mu: &SpectralField,
    eps: f64,
    data: &ProblemData,
) -> Result<(SpectralField, SpectralField)> {
    let model = data.model();
    let dw = gradient(w);
    let xi = model.eval_xi(&dw, mu)?;
    let theta = model.eval_theta(&dw, mu)?;
    let flux = scale_vector(&mu.add_constant(model.mbar()), &theta)?;
    Ok((i_minus(&xi)?.scale(eps), i_plus(&divergence(&flux))?.scale(-eps)))
}

pub fn apply_f(
    w: &SpectralField,
    mu: &SpectralField,
    eps: f64,
    data: &ProblemData,
) -> Result<(SpectralField, SpectralField)> {
    let (hw, hm) = heat_flow(data)?;
    w.check_compatible(&hw)?;
    mu.check_compatible(&hm)?;
    let (cw, cm) = coupling_terms(w, mu, eps, data)?;
    Ok((&(w - &hw) - &cw, &(mu - &hm) - &cm))
}

/// Solves `F(·, ε) = 0` by Picard iteration from `warm_start` (heat flow if
/// `None`).
pub fn solve_at_epsilon(
    eps: f64,
    data: &ProblemData,
    warm_start: Option<&Solution>,
    tol: f64,
    max_iter: usize,
) -> Result<(Solution, SolveReport)> {
    if !eps.is_finite() {
        return Err(Error::InvalidArgument("ε must be finite".into()));
    }
    let heat = heat_flow(data)?;
    let start = match warm_start {
        Some(s) => (s.w.clone(), s.mu.clone()),
        None => heat.clone(),
    };
    let map = |w: &SpectralField, mu: &SpectralField| {
        let (cw, cm) = coupling_terms(w, mu, eps, data)?;
        Ok((&heat.0 + &cw, &heat.1 + &cm))
    };
    let ((w, mu), report) = iterate(map, start, &heat, tol, max_iter)?;
    let scaled = data.with_model(data.model().scaled(eps))?;
    let u_mean = recover_mean_u(&w, &mu, &scaled)?;
    Ok((Solution { w, mu, u_mean }, report))
}

#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub epsilon: f64,
    pub solution: Solution,
    pub report: SolveReport,
    /// `‖F(sol, ε)‖` in `𝓑_α² × 𝓑_α²`.
    pub residual: f64,
    /// `‖sol - heat flow‖` in `𝓑_α² × 𝓑_α²`.
    pub distance: f64,
}

/// First `ε` in a direction at which the solve failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchFailure {
    pub epsilon: f64,
    pub report: Option<SolveReport>,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct EpsilonBranch {
    /// Converged points, increasing in `ε`.
    pub points: Vec<BranchPoint>,
    pub failures: Vec<BranchFailure>,
}

impl EpsilonBranch {
    pub fn epsilons(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.epsilon).collect()
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.residual).collect()
    }

    pub fn point(&self, eps: f64) -> Option<&BranchPoint> {
        self.points.iter().find(|p| (p.epsilon - eps).abs() <= 1e-12 * (1.0 + eps.abs()))
    }

    /// Least-squares `C` in `distance ≈ C|ε|` (a line through the origin).
    pub fn fit_constant(&self) -> Option<f64> {
        let (num, den) = self
            .points
            .iter()
            .filter(|p| p.epsilon != 0.0)
            .fold((0.0, 0.0), |(n, d), p| (n + p.epsilon.abs() * p.distance, d + p.epsilon * p.epsilon));
        (den > 0.0).then(|| num / den)
    }

    /// `max distance / |ε|` over the converged non-zero points.
    pub fn max_slope(&self) -> Option<f64> {
        self.points
            .iter()
            .filter(|p| p.epsilon != 0.0)
            .map(|p| p.distance / p.epsilon.abs())
            .reduce(f64::max)
    }

    /// Smallest failing `|ε|` in either direction.
    pub fn failure_radius(&self) -> Option<f64> {
        self.failures.iter().map(|f| f.epsilon.abs()).reduce(f64::min)
    }
}

/// Marches `ε = 0, ±h, ±2h, …, ±eps_max` with `h = eps_max / steps`,
/// warm-starting from the previous point and stopping each direction at its
/// first failure.
pub fn continuation_sweep(
    data: &ProblemData,
    eps_max: f64,
    steps: usize,
    tol: f64,
    max_iter: usize,
) -> Result<EpsilonBranch> {
    if steps == 0 || !(eps_max > 0.0) || !eps_max.is_finite() {
        return Err(Error::InvalidArgument("need steps ≥ 1 and eps_max > 0".into()));
    }
    if data.kind() != ProblemKind::Planning {
        return Err(Error::InvalidArgument(
            "the ε-formulation is stated for planning data".into(),
        ));
    }
    let h = eps_max / steps as f64;
    let mut branch = EpsilonBranch::default();
    let origin = branch_point(0.0, data, None, tol, max_iter)?;
    let mut negative = vec![];
    let mut positive = vec![];
    for (sign, out) in [(-1.0, &mut negative), (1.0, &mut positive)] {
        let mut previous = origin.solution.clone();
        for i in 1..=steps {
            let eps = sign * h * i as f64;
            match branch_point(eps, data, Some(&previous), tol, max_iter) {
                Ok(p) => {
                    previous = p.solution.clone();
                    out.push(p);
                }
                Err(Error::NotConverged { report }) => {
                    branch.failures.push(BranchFailure {
                        epsilon: eps,
                        message: format!("no convergence after {} iterations", report.iterations),
                        report: Some(*report),
                    });
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }
    negative.reverse();
    branch.points = negative;
    branch.points.push(origin);
    branch.points.extend(positive);
    Ok(branch)
}

fn branch_point(
    eps: f64,
    data: &ProblemData,
    warm: Option<&Solution>,
    tol: f64,
    max_iter: usize,
) -> Result<BranchPoint> {
    let (solution, report) = solve_at_epsilon(eps, data, warm, tol, max_iter)?;
    let (fw, fm) = apply_f(&solution.w, &solution.mu, eps, data)?;
    let (hw, hm) = heat_flow(data)?;
    Ok(BranchPoint {
        epsilon: eps,
        residual: pair_norm(&fw, &fm),
        distance: pair_norm(&(&solution.w - &hw), &(&solution.mu - &hm)),
        solution,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed_point::picard_solve;
    use crate::fourier::{Modes, Snapshot, TimeGrid};
    use crate::hamiltonian::{HamiltonianModel, PayoffOperator};
    use std::sync::Arc;

    fn setup(model: HamiltonianModel, delta: f64, wt: f64) -> ProblemData {
        let g = Arc::new(TimeGrid::new(1.0, 0.25, 16).unwrap());
        let m = Modes::new(1, 8).unwrap();
        ProblemData::planning(
            model,
            g,
            Snapshot::cosine(m, &[1], delta).unwrap(),
            Snapshot::cosine(m, &[1], wt).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn f_vanishes_on_heat_flow_at_zero() {
        let data = setup(HamiltonianModel::density_quadratic(1, 1), 0.3, 1.0);
        let (hw, hm) = heat_flow(&data).unwrap();
        let (fw, fm) = apply_f(&hw, &hm, 0.0, &data).unwrap();
        assert_eq!((fw.max_abs(), fm.max_abs()), (0.0, 0.0));
        // away from the heat flow, F(·, 0) is the displacement
        let shifted = hw.scale(2.0);
        let (fw, _) = apply_f(&shifted, &hm, 0.0, &data).unwrap();
        assert!((&fw - &hw).max_abs() < 1e-16);
    }

    #[test]
    fn zero_epsilon_returns_heat_flow() {
        let data = setup(HamiltonianModel::density_quadratic(1, 1), 0.3, 1.0);
        let (sol, report) = solve_at_epsilon(0.0, &data, None, 1e-12, 5).unwrap();
        assert_eq!(report.iterations, 1);
        let (hw, hm) = heat_flow(&data).unwrap();
        assert_eq!((sol.w, sol.mu), (hw, hm));
    }

    #[test]
    fn large_data_both_signs() {
        let data = setup(HamiltonianModel::density_quadratic(1, 1), 0.3, 1.0);
        for eps in [0.05, -0.05] {
            let (sol, _) = solve_at_epsilon(eps, &data, None, 1e-11, 200).unwrap();
            let (fw, fm) = apply_f(&sol.w, &sol.mu, eps, &data).unwrap();
            assert!(pair_norm(&fw, &fm) < 1e-10);
        }
    }

    #[test]
    fn agrees_with_picard_on_scaled_model() {
        let data = setup(HamiltonianModel::quartic_example(1), 0.02, 0.02);
        let eps = 0.5;
        let (a, _) = solve_at_epsilon(eps, &data, None, 1e-12, 100).unwrap();
        let scaled = data.with_model(data.model().scaled(eps)).unwrap();
        let (b, _) = picard_solve(&scaled, 1e-12, 100).unwrap();
        assert!(pair_norm(&(&a.w - &b.w), &(&a.mu - &b.mu)) < 1e-11);
        for (x, y) in a.u_mean.iter().zip(&b.u_mean) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_model_branch_is_flat() {
        let data = setup(HamiltonianModel::zero(1), 0.3, 1.0);
        let branch = continuation_sweep(&data, 1.0, 4, 1e-12, 10).unwrap();
        assert_eq!(branch.points.len(), 9);
        assert!(branch.failures.is_empty());
        assert!(branch.points.iter().all(|p| p.distance == 0.0 && p.residual == 0.0));
        assert_eq!(branch.fit_constant(), Some(0.0));
        assert_eq!(branch.epsilons()[0], -1.0);
    }

    #[test]
    fn sweep_reports_failure_for_large_epsilon() {
        let data = setup(HamiltonianModel::density_quadratic(1, 1), 0.3, 1.0);
        let branch = continuation_sweep(&data, 20.0, 4, 1e-10, 60).unwrap();
        assert!(!branch.failures.is_empty());
        let r = branch.failure_radius().unwrap();
        assert!(branch.points.iter().all(|p| p.epsilon.abs() < r));
    }

    #[test]
    fn payoff_data_rejected() {
        let g = Arc::new(TimeGrid::new(1.0, 0.25, 8).unwrap());
        let m = Modes::new(1, 4).unwrap();
        let data = ProblemData::payoff(HamiltonianModel::zero(1), g, Snapshot::zeros(m), PayoffOperator::identity()).unwrap();
        assert!(continuation_sweep(&data, 0.1, 1, 1e-10, 10).is_err());
        assert!(solve_at_epsilon(0.1, &data, None, 1e-10, 10).is_err());
    }
}
