//! Run configuration: one TOML document, validated into solver inputs before
//! any computation starts.

use std::path::PathBuf;
use std::sync::Arc;

use mfg_core::fixed_point::{ProblemData, ProblemKind, Terminal};
use mfg_core::fourier::{Modes, Snapshot, SpectralField, TimeGrid};
use mfg_core::hamiltonian::{Coefficient, HamiltonianModel, PayoffOperator};
use num_complex::Complex64;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub hamiltonian: HamiltonianSection,
    pub data: DataSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub continuation: Option<ContinuationSection>,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub kind: ProblemKind,
    pub horizon: f64,
    pub alpha: f64,
    #[serde(default = "one")]
    pub dim: usize,
    pub cutoff: usize,
    pub steps: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Zero,
    QuarticExample,
    SeparableQuartic,
    SeparableCubic,
    MixedCubic,
    MixedQuartic,
    DensityQuadratic,
    DensityPower,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSection {
    pub name: ModelName,
    pub a: Option<CoefficientSpec>,
    pub a1: Option<CoefficientSpec>,
    pub a2: Option<CoefficientSpec>,
    pub indices: Option<[usize; 3]>,
    pub ell: Option<u32>,
    pub sigma: Option<u32>,
    pub j: Option<u32>,
    pub c: Option<f64>,
}

/// A constant, or a time-independent field given by its Fourier modes.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSpec {
    Constant(f64),
    Field { modes: Vec<ModeEntry> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeEntry {
    pub k: Vec<i64>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// `δ cos x₁`.
    DeltaCos,
    /// `δ cos x₁ + (δ/2) sin 2x₁`.
    TwoMode,
    Zero,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DataSpec {
    Preset {
        preset: Preset,
        #[serde(default)]
        delta: f64,
    },
    Modes {
        modes: Vec<ModeEntry>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PayoffSpec {
    Named(String),
    Polynomial { polynomial: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub mu0: DataSpec,
    pub w_terminal: Option<DataSpec>,
    #[serde(default)]
    pub u_terminal_mean: f64,
    pub payoff: Option<PayoffSpec>,
    #[serde(default = "yes")]
    pub require_probability: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Solve the weak-coupling problem with `εℋ` instead.
    pub epsilon: Option<f64>,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    200
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            epsilon: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationSection {
    pub eps_max: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Delta,
    Epsilon,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub name: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default = "default_max_residual")]
    pub max_residual: f64,
    #[serde(default = "default_max_boundary")]
    pub max_boundary_error: f64,
    #[serde(default = "default_max_mass")]
    pub max_mass_deviation: f64,
    /// `None`: require positivity exactly when the data are probability data.
    pub require_positive: Option<bool>,
    #[serde(default = "default_decay_tol")]
    pub decay_tolerance: f64,
}

fn default_max_residual() -> f64 {
    1e-5
}
fn default_max_boundary() -> f64 {
    1e-8
}
fn default_max_mass() -> f64 {
    1e-12
}
fn default_decay_tol() -> f64 {
    0.05
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            max_residual: default_max_residual(),
            max_boundary_error: default_max_boundary(),
            max_mass_deviation: default_max_mass(),
            require_positive: None,
            decay_tolerance: default_decay_tol(),
        }
    }
}

/// Everything a command needs, checked.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: ProblemData,
    pub tol: f64,
    pub max_iter: usize,
    pub epsilon: Option<f64>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    fn grid(&self) -> Result<Arc<TimeGrid>, CliError> {
        let p = &self.problem;
        let g = TimeGrid::new(p.horizon, p.alpha, p.steps).map_err(|e| invalid(e.to_string()))?;
        Ok(Arc::new(g))
    }

    fn modes(&self) -> Result<Modes, CliError> {
        let p = &self.problem;
        if p.cutoff > 64 {
            return Err(invalid(format!("cutoff K = {} is above the supported 64", p.cutoff)));
        }
        Modes::new(p.dim, p.cutoff).map_err(|e| invalid(e.to_string()))
    }

    /// Validates every section and builds the solver inputs. `delta` overrides
    /// the amplitude of a preset `mu0`.
    pub fn prepare_with(&self, delta: Option<f64>) -> Result<Prepared, CliError> {
        let grid = self.grid()?;
        let modes = self.modes()?;
        let model = self.model(&grid, modes)?;
        let mut mu0_spec = self.data.mu0.clone();
        if let Some(d) = delta {
            match &mut mu0_spec {
                DataSpec::Preset { delta, .. } => *delta = d,
                DataSpec::Modes { .. } => {
                    return Err(invalid("a δ-sweep needs mu0 given as a preset"));
                }
            }
        }
        let mu0 = snapshot_from_spec(&mu0_spec, modes, "data.mu0")?;
        let terminal = match self.problem.kind {
            ProblemKind::Payoff => {
                if self.data.w_terminal.is_some() {
                    return Err(invalid("data.w_terminal is only used by planning problems"));
                }
                Terminal::Payoff(payoff(self.data.payoff.as_ref())?)
            }
            ProblemKind::Planning => {
                if self.data.payoff.is_some() {
                    return Err(invalid("data.payoff is only used by payoff problems"));
                }
                let spec = self
                    .data
                    .w_terminal
                    .as_ref()
                    .ok_or_else(|| invalid("planning problems need data.w_terminal"))?;
                let w_terminal = snapshot_from_spec(spec, modes, "data.w_terminal")?;
                if !self.data.u_terminal_mean.is_finite() {
                    return Err(invalid("data.u_terminal_mean must be finite"));
                }
                Terminal::Planning {
                    w_terminal,
                    mean: self.data.u_terminal_mean,
                }
            }
        };
        let data = ProblemData::new(model, grid, mu0, terminal).map_err(|e| invalid(e.to_string()))?;
        if self.data.require_probability {
            data.require_probability().map_err(|e| {
                invalid(format!("{e}; set data.require_probability = false for signed data"))
            })?;
        }

        let s = &self.solver;
        if !(s.tol > 0.0 && s.tol.is_finite()) {
            return Err(invalid("solver.tol must be positive"));
        }
        if s.max_iter == 0 {
            return Err(invalid("solver.max_iter must be at least 1"));
        }
        if let Some(eps) = s.epsilon {
            if !eps.is_finite() {
                return Err(invalid("solver.epsilon must be finite"));
            }
            if self.problem.kind != ProblemKind::Planning {
                return Err(invalid("solver.epsilon requires a planning problem"));
            }
        }
        if let Some(c) = &self.continuation {
            if !(c.eps_max > 0.0 && c.eps_max.is_finite()) || c.steps == 0 {
                return Err(invalid("continuation needs eps_max > 0 and steps ≥ 1"));
            }
            if self.problem.kind != ProblemKind::Planning {
                return Err(invalid("continuation requires a planning problem"));
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(invalid("sweep.values is empty"));
            }
            if sw.values.iter().any(|v| !v.is_finite()) {
                return Err(invalid("sweep.values must be finite"));
            }
            if sw.parameter == SweepParameter::Epsilon && self.problem.kind != ProblemKind::Planning {
                return Err(invalid("an ε-sweep requires a planning problem"));
            }
            if sw.parameter == SweepParameter::Delta && !matches!(self.data.mu0, DataSpec::Preset { .. }) {
                return Err(invalid("a δ-sweep needs mu0 given as a preset"));
            }
        }
        let v = &self.verify;
        for (name, x) in [
            ("verify.max_residual", v.max_residual),
            ("verify.max_boundary_error", v.max_boundary_error),
            ("verify.max_mass_deviation", v.max_mass_deviation),
            ("verify.decay_tolerance", v.decay_tolerance),
        ] {
            if !(x >= 0.0) {
                return Err(invalid(format!("{name} must be nonnegative")));
            }
        }
        Ok(Prepared {
            data,
            tol: s.tol,
            max_iter: s.max_iter,
            epsilon: s.epsilon,
        })
    }

    pub fn prepare(&self) -> Result<Prepared, CliError> {
        if let Some(sw) = &self.sweep {
            // the sweep values are checked here too so `solve` and `sweep` agree
            if sw.values.is_empty() {
                return Err(invalid("sweep.values is empty"));
            }
        }
        self.prepare_with(None)
    }

    pub fn require_positive(&self) -> bool {
        self.verify.require_positive.unwrap_or(self.data.require_probability)
    }

    fn model(&self, grid: &Arc<TimeGrid>, modes: Modes) -> Result<HamiltonianModel, CliError> {
        let h = &self.hamiltonian;
        let dim = self.problem.dim;
        let coef = |spec: &Option<CoefficientSpec>, name: &str| -> Result<Coefficient, CliError> {
            match spec {
                None => Ok(Coefficient::Constant(1.0)),
                Some(CoefficientSpec::Constant(c)) if c.is_finite() => Ok(Coefficient::Constant(*c)),
                Some(CoefficientSpec::Constant(_)) => Err(invalid(format!("hamiltonian.{name} must be finite"))),
                Some(CoefficientSpec::Field { modes: entries }) => {
                    let s = snapshot_from_entries(entries, modes, &format!("hamiltonian.{name}"), false)?;
                    Ok(Coefficient::Field(SpectralField::constant_in_time(grid.clone(), &s)))
                }
            }
        };
        let indices = || h.indices.ok_or_else(|| invalid("hamiltonian.indices is required for this model"));
        let power = |v: Option<u32>, name: &str, default: u32| -> Result<u32, CliError> {
            let p = v.unwrap_or(default);
            if p > 8 {
                return Err(invalid(format!("hamiltonian.{name} = {p} is above the supported 8")));
            }
            Ok(p)
        };
        let built = match h.name {
            ModelName::Zero => Ok(HamiltonianModel::zero(dim)),
            ModelName::QuarticExample => Ok(HamiltonianModel::quartic_example(dim)),
            ModelName::SeparableQuartic => HamiltonianModel::separable_quartic(dim, coef(&h.a, "a")?),
            ModelName::SeparableCubic => HamiltonianModel::separable_cubic(dim, coef(&h.a, "a")?, indices()?),
            ModelName::MixedCubic => HamiltonianModel::mixed_cubic(
                dim,
                coef(&h.a1, "a1")?,
                indices()?,
                power(h.ell, "ell", 1)?,
                coef(&h.a2, "a2")?,
                power(h.sigma, "sigma", 3)?,
            ),
            ModelName::MixedQuartic => HamiltonianModel::mixed_quartic(
                dim,
                coef(&h.a1, "a1")?,
                power(h.ell, "ell", 2)?,
                coef(&h.a2, "a2")?,
                power(h.sigma, "sigma", 3)?,
            ),
            ModelName::DensityQuadratic => Ok(HamiltonianModel::density_quadratic(dim, power(h.j, "j", 1)?)),
            ModelName::DensityPower => {
                let c = h.c.unwrap_or(1.0);
                if !c.is_finite() {
                    return Err(invalid("hamiltonian.c must be finite"));
                }
                Ok(HamiltonianModel::density_power(dim, c, power(h.sigma, "sigma", 3)?))
            }
        };
        built.map_err(|e| invalid(format!("hamiltonian: {e}")))
    }
}

fn payoff(spec: Option<&PayoffSpec>) -> Result<PayoffOperator, CliError> {
    match spec {
        None => Err(invalid("payoff problems need data.payoff")),
        Some(PayoffSpec::Named(n)) => match n.as_str() {
            "identity" => Ok(PayoffOperator::identity()),
            "square" => Ok(PayoffOperator::square()),
            other => Err(invalid(format!("unknown payoff {other:?} (identity, square or a polynomial)"))),
        },
        Some(PayoffSpec::Polynomial { polynomial }) => {
            if polynomial.is_empty() || polynomial.len() > 9 || polynomial.iter().any(|c| !c.is_finite()) {
                return Err(invalid("data.payoff.polynomial needs 1 to 9 finite coefficients"));
            }
            Ok(PayoffOperator::polynomial("polynomial", polynomial.clone()))
        }
    }
}

fn snapshot_from_entries(entries: &[ModeEntry], modes: Modes, name: &str, mean_zero: bool) -> Result<Snapshot, CliError> {
    let list: Vec<(Vec<i64>, Complex64)> = entries
        .iter()
        .map(|e| {
            if !(e.re.is_finite() && e.im.is_finite()) {
                return Err(invalid(format!("{name}: non-finite coefficient at k = {:?}", e.k)));
            }
            if mean_zero && e.k.iter().all(|&x| x == 0) {
                return Err(invalid(format!("{name}: data must be mean-zero (k = 0 given)")));
            }
            Ok((e.k.clone(), Complex64::new(e.re, e.im)))
        })
        .collect::<Result<_, _>>()?;
    Snapshot::from_modes(modes, &list).map_err(|e| invalid(format!("{name}: {e}")))
}

/// Builds mean-zero data from a preset or mode list.
pub fn snapshot_from_spec(spec: &DataSpec, modes: Modes, name: &str) -> Result<Snapshot, CliError> {
    match spec {
        DataSpec::Modes { modes: entries } => snapshot_from_entries(entries, modes, name, true),
        DataSpec::Preset { preset, delta } => {
            if !delta.is_finite() {
                return Err(invalid(format!("{name}: delta must be finite")));
            }
            let mut e1 = vec![0i64; modes.dim()];
            e1[0] = 1;
            let cos = Snapshot::cosine(modes, &e1, *delta).map_err(|e| invalid(e.to_string()))?;
            match preset {
                Preset::Zero => Ok(Snapshot::zeros(modes)),
                Preset::DeltaCos => Ok(cos),
                Preset::TwoMode => {
                    e1[0] = 2;
                    let sin2 = Snapshot::sine(modes, &e1, delta / 2.0)
                        .map_err(|_| invalid(format!("{name}: two_mode needs cutoff ≥ 2")))?;
                    Ok(&cos + &sin2)
                }
            }
        }
    }
}
