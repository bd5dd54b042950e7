//! The four subcommands. Each returns `Ok` on success and a [`CliError`]
//! whose [`exit_code`](CliError::exit_code) the binary reports otherwise.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mfg_core::continuation::{continuation_sweep, heat_flow, solve_at_epsilon};
use mfg_core::fixed_point::{contraction_ratio, pair_norm, picard_solve, ProblemData, Solution, SolveReport};
use mfg_core::fourier::{decay_fit, norm_bj_series, sample_physical};
use mfg_core::verification::{residual_pde, ResidualReport};
use rayon::prelude::*;
use serde::Serialize;

use crate::archive::SolutionArchive;
use crate::config::{Prepared, RunConfig, SweepParameter};
use crate::error::CliError;

fn read_config(path: &Path) -> Result<(String, RunConfig), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let cfg = RunConfig::from_toml(&text)?;
    Ok((text, cfg))
}

/// `--out` (or `MFG_OUTPUT_DIR`), then `[output] dir`, then the working directory.
fn output_dir(flag: Option<&Path>, cfg: Option<&RunConfig>) -> Result<PathBuf, CliError> {
    let dir = flag
        .map(Path::to_path_buf)
        .or_else(|| cfg.and_then(|c| c.output.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn run_name(cfg: &RunConfig, config_path: &Path) -> String {
    cfg.output.name.clone().unwrap_or_else(|| {
        config_path
            .file_stem()
            .map_or("run".into(), |s| s.to_string_lossy().into_owned())
    })
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or("archive".into(), |s| s.to_string_lossy().into_owned())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

/// Two aligned columns.
fn key_values(rows: &[(&str, String)]) -> String {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<width$}  {v}");
    }
    out
}

fn solve_prepared(p: &Prepared) -> Result<(Solution, SolveReport), mfg_core::Error> {
    match p.epsilon {
        Some(eps) => solve_at_epsilon(eps, &p.data, None, p.tol, p.max_iter),
        None => picard_solve(&p.data, p.tol, p.max_iter),
    }
}

#[derive(Debug)]
pub struct SolveOutcome {
    pub archive: PathBuf,
    pub report: SolveReport,
}

/// Solves the configured problem and writes `<name>.mfg` and
/// `<name>.report.json`. On non-convergence only the report is written.
pub fn cmd_solve(config: &Path, out: Option<&Path>) -> Result<SolveOutcome, CliError> {
    let (text, cfg) = read_config(config)?;
    let prepared = cfg.prepare()?;
    let dir = output_dir(out, Some(&cfg))?;
    let name = run_name(&cfg, config);
    let report_path = dir.join(format!("{name}.report.json"));
    match solve_prepared(&prepared) {
        Ok((solution, report)) => {
            write_json(&report_path, &report)?;
            let archive_path = dir.join(format!("{name}.mfg"));
            SolutionArchive::new(text, report.clone(), solution, prepared.data.kind(), prepared.epsilon)
                .write(&archive_path)?;
            print!(
                "{}",
                key_values(&[
                    ("converged", report.converged.to_string()),
                    ("iterations", report.iterations.to_string()),
                    ("contraction ratio", fmt_opt(contraction_ratio(&report))),
                    ("final residual", format!("{:.3e}", report.final_residual)),
                    ("orbit radius", format!("{:.3e}", report.orbit_radius)),
                    ("archive", archive_path.display().to_string()),
                ])
            );
            Ok(SolveOutcome {
                archive: archive_path,
                report,
            })
        }
        Err(mfg_core::Error::NotConverged { report }) => {
            write_json(&report_path, &report)?;
            eprintln!("report written to {}", report_path.display());
            Err(CliError::NotConverged(report))
        }
        Err(e) => Err(e.into()),
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{v:.3e}"))
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct VerifyOutcome {
    pub archive: PathBuf,
    pub epsilon: f64,
    pub residuals: ResidualReport,
    pub checks: Vec<Check>,
}

impl VerifyOutcome {
    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Re-derives residuals and audits of an archived solution and compares
/// them with the `[verify]` thresholds of its configuration.
pub fn verify_archive(path: &Path) -> Result<VerifyOutcome, CliError> {
    let archive = SolutionArchive::read(path)?;
    let cfg = RunConfig::from_toml(&archive.config)?;
    let prepared = cfg.prepare()?;
    let data: &ProblemData = &prepared.data;
    let meta = &archive.metadata;
    let grid = data.grid();
    if meta.kind != data.kind()
        || meta.dim != data.modes().dim()
        || meta.cutoff != data.modes().cutoff()
        || meta.steps != grid.steps()
        || meta.horizon != grid.horizon()
        || meta.alpha != grid.alpha()
    {
        return Err(CliError::Archive("metadata disagrees with the embedded configuration".into()));
    }
    let epsilon = meta.epsilon.unwrap_or(1.0);
    let residuals = residual_pde(&archive.solution, data, epsilon)?;

    let v = &cfg.verify;
    let below = |name: &str, value: f64, threshold: f64| Check {
        name: name.into(),
        value,
        threshold,
        passed: value <= threshold,
    };
    let mut checks = vec![
        below("hjb_residual", residuals.hjb_residual, v.max_residual),
        below("fp_residual", residuals.fp_residual, v.max_residual),
        below("initial_error", residuals.initial_error, v.max_boundary_error),
        below("terminal_error", residuals.terminal_error, v.max_boundary_error),
        below("mass_deviation", residuals.audit.mass_deviation, v.max_mass_deviation),
    ];
    if cfg.require_positive() {
        let m = residuals.audit.positivity_min;
        checks.push(Check {
            name: "positivity_min".into(),
            value: m,
            threshold: 0.0,
            passed: m >= 0.0,
        });
    }
    // The strip is only asserted on the first half of the horizon; later
    // samples are reported in the JSON but not gated.
    let half = grid.horizon() / 2.0;
    let margin = residuals
        .audit
        .decay
        .iter()
        .filter(|d| d.time <= half + 1e-12)
        .flat_map(|d| [d.slope_mu, d.slope_w].into_iter().flatten().map(move |s| s + d.beta))
        .fold(f64::NEG_INFINITY, f64::max);
    if margin.is_finite() {
        checks.push(below("decay_margin", margin, v.decay_tolerance));
    }
    let nonfinite = !(residuals.hjb_residual.is_finite() && residuals.fp_residual.is_finite());
    if nonfinite {
        for c in checks.iter_mut().filter(|c| c.name.ends_with("residual")) {
            c.passed = false;
        }
    }
    Ok(VerifyOutcome {
        archive: path.to_path_buf(),
        epsilon,
        residuals,
        checks,
    })
}

/// `verify_archive`, writing `<stem>.verify.json`; exit 3 lists the failing checks.
pub fn cmd_verify(archive: &Path, out: Option<&Path>) -> Result<VerifyOutcome, CliError> {
    let outcome = verify_archive(archive)?;
    let dir = match out {
        Some(d) => output_dir(Some(d), None)?,
        None => archive.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    };
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    write_json(&dir.join(format!("{}.verify.json", stem(archive))), &outcome)?;
    let rows: Vec<(&str, String)> = outcome
        .checks
        .iter()
        .map(|c| {
            let status = if c.passed { "ok" } else { "FAIL" };
            (c.name.as_str(), format!("{:.3e}  (limit {:.1e})  {status}", c.value, c.threshold))
        })
        .collect();
    print!("{}", key_values(&rows));
    let failing: Vec<String> = outcome
        .failures()
        .iter()
        .map(|c| format!("{} = {:.3e} (limit {:.1e})", c.name, c.value, c.threshold))
        .collect();
    if failing.is_empty() {
        Ok(outcome)
    } else {
        Err(CliError::VerificationFailed(failing))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub ratio: Option<f64>,
    pub final_residual: Option<f64>,
    /// Distance from the heat flow, for ε rows.
    pub distance: Option<f64>,
    pub note: String,
}

impl SweepRow {
    fn failed(parameter: &str, value: f64, report: Option<&SolveReport>, note: String) -> Self {
        Self {
            parameter: parameter.into(),
            value,
            converged: false,
            iterations: report.map_or(0, |r| r.iterations),
            ratio: report.and_then(contraction_ratio),
            final_residual: None,
            distance: None,
            note,
        }
    }

    fn from_report(parameter: &str, value: f64, report: &SolveReport, distance: Option<f64>) -> Self {
        Self {
            parameter: parameter.into(),
            value,
            converged: report.converged,
            iterations: report.iterations,
            ratio: contraction_ratio(report),
            final_residual: Some(report.final_residual),
            distance,
            note: String::new(),
        }
    }
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// Least-squares `C` in `distance ≈ C|ε|`, for ε rows.
    pub fit_constant: Option<f64>,
    pub table: PathBuf,
}

fn sweep_row(cfg: &RunConfig, base: &Prepared, parameter: SweepParameter, value: f64) -> SweepRow {
    let (name, outcome) = match parameter {
        SweepParameter::Delta => (
            "delta",
            cfg.prepare_with(Some(value)).and_then(|p| {
                solve_prepared(&p)
                    .map(|(_, r)| (r, None))
                    .map_err(CliError::from)
            }),
        ),
        SweepParameter::Epsilon => (
            "epsilon",
            solve_at_epsilon(value, &base.data, None, base.tol, base.max_iter)
                .and_then(|(s, r)| {
                    let (hw, hm) = heat_flow(&base.data)?;
                    Ok((r, Some(pair_norm(&(&s.w - &hw), &(&s.mu - &hm)))))
                })
                .map_err(CliError::from),
        ),
    };
    match outcome {
        Ok((report, distance)) => SweepRow::from_report(name, value, &report, distance),
        Err(CliError::Core(mfg_core::Error::NotConverged { report })) => {
            SweepRow::failed(name, value, Some(&report), "no convergence".into())
        }
        Err(e) => SweepRow::failed(name, value, None, e.to_string()),
    }
}

fn fit_constant(rows: &[SweepRow]) -> Option<f64> {
    let (num, den) = rows
        .iter()
        .filter(|r| r.converged && r.value != 0.0)
        .filter_map(|r| r.distance.map(|d| (r.value, d)))
        .fold((0.0, 0.0), |(n, d), (e, dist)| (n + e.abs() * dist, d + e * e));
    (den > 0.0).then(|| num / den)
}

/// One solve per `[sweep]` value, run concurrently; without `[sweep]`, a
/// continuation branch from `[continuation]`. Failed rows are recorded and
/// the sweep continues.
pub fn cmd_sweep(config: &Path, out: Option<&Path>) -> Result<SweepOutcome, CliError> {
    let (_, cfg) = read_config(config)?;
    let base = cfg.prepare()?;
    let dir = output_dir(out, Some(&cfg))?;
    let name = run_name(&cfg, config);

    let rows: Vec<SweepRow> = match (&cfg.sweep, &cfg.continuation) {
        (Some(sw), _) => sw
            .values
            .par_iter()
            .map(|&v| sweep_row(&cfg, &base, sw.parameter, v))
            .collect(),
        (None, Some(c)) => {
            let branch = continuation_sweep(&base.data, c.eps_max, c.steps, base.tol, base.max_iter)?;
            let mut rows: Vec<SweepRow> = branch
                .points
                .iter()
                .map(|p| SweepRow::from_report("epsilon", p.epsilon, &p.report, Some(p.distance)))
                .collect();
            rows.extend(
                branch
                    .failures
                    .iter()
                    .map(|f| SweepRow::failed("epsilon", f.epsilon, f.report.as_ref(), f.message.clone())),
            );
            rows.sort_by(|a, b| a.value.total_cmp(&b.value));
            rows
        }
        (None, None) => {
            return Err(CliError::Config("sweep needs a [sweep] or [continuation] section".into()));
        }
    };
    let fit = fit_constant(&rows);

    let mut table = String::from("parameter\tvalue\tconverged\titerations\tratio\tfinal_residual\tdistance\tnote\n");
    for r in &rows {
        let _ = writeln!(
            table,
            "{}\t{:.16e}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.parameter,
            r.value,
            r.converged,
            r.iterations,
            r.ratio.map_or(String::new(), |x| format!("{x:.6e}")),
            r.final_residual.map_or(String::new(), |x| format!("{x:.6e}")),
            r.distance.map_or(String::new(), |x| format!("{x:.6e}")),
            r.note
        );
    }
    let path = dir.join(format!("{name}.sweep.tsv"));
    write_text(&path, &table)?;

    println!(
        "{:>10}  {:>9}  {:>5}  {:>10}  {:>10}  {:>10}  note",
        "value", "converged", "iter", "ratio", "residual", "distance"
    );
    for r in &rows {
        println!(
            "{:>10.4}  {:>9}  {:>5}  {:>10}  {:>10}  {:>10}  {}",
            r.value,
            r.converged,
            r.iterations,
            fmt_opt(r.ratio),
            fmt_opt(r.final_residual),
            fmt_opt(r.distance),
            r.note
        );
    }
    if let Some(c) = fit {
        println!("fitted distance/|ε| constant: {c:.4e}");
    }
    println!("table: {}", path.display());
    Ok(SweepOutcome {
        rows,
        fit_constant: fit,
        table: path,
    })
}

pub const EXPORT_FIELDS: [&str; 5] = ["u", "m", "decay", "norms", "u_mean"];

/// Delimited text for one quantity of an archived solution.
pub fn export_table(archive: &SolutionArchive, field: &str, points: usize) -> Result<String, CliError> {
    let sol = &archive.solution;
    let grid = sol.grid();
    let dim = sol.modes().dim();
    let mut out = String::new();
    match field {
        "u" | "m" => {
            if points == 0 {
                return Err(CliError::Usage("--points must be positive".into()));
            }
            let f = if field == "u" { sol.u() } else { sol.m() };
            out.push_str("time_index\tt");
            for j in 1..=dim {
                let _ = write!(out, "\tx{j}");
            }
            let _ = writeln!(out, "\t{field}");
            let h = 2.0 * std::f64::consts::PI / points as f64;
            for i in 0..grid.len() {
                let values = sample_physical(&f.snapshot(i), points);
                for (flat, v) in values.iter().enumerate() {
                    let _ = write!(out, "{i}\t{:.16e}", grid.time(i));
                    // row-major: the last axis varies fastest
                    for axis in 0..dim {
                        let p = (flat / points.pow((dim - 1 - axis) as u32)) % points;
                        let _ = write!(out, "\t{:.16e}", h * p as f64);
                    }
                    let _ = writeln!(out, "\t{v:.16e}");
                }
            }
        }
        "decay" => {
            out.push_str("time_index\tt\tbeta\tslope_mu\tslope_w\n");
            for i in 0..grid.len() {
                let slope = |f| decay_fit(f, i).map_or(String::new(), |d| format!("{:.16e}", d.slope));
                let _ = writeln!(
                    out,
                    "{i}\t{:.16e}\t{:.16e}\t{}\t{}",
                    grid.time(i),
                    grid.beta_at(i),
                    slope(&sol.mu),
                    slope(&sol.w)
                );
            }
        }
        "norms" => {
            out.push_str("time_index\tt\tnorm_w\tnorm_mu\n");
            let nw = norm_bj_series(&sol.w, 2);
            let nm = norm_bj_series(&sol.mu, 2);
            for i in 0..grid.len() {
                let _ = writeln!(out, "{i}\t{:.16e}\t{:.16e}\t{:.16e}", grid.time(i), nw[i], nm[i]);
            }
        }
        "u_mean" => {
            out.push_str("time_index\tt\tu_mean\n");
            for (i, v) in sol.u_mean.iter().enumerate() {
                let _ = writeln!(out, "{i}\t{:.16e}\t{v:.16e}", grid.time(i));
            }
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown field {other:?}; expected one of {}",
                EXPORT_FIELDS.join(", ")
            )))
        }
    }
    Ok(out)
}

/// Writes `<stem>.<field>.tsv`.
pub fn cmd_export(archive: &Path, field: &str, points: usize, out: Option<&Path>) -> Result<PathBuf, CliError> {
    if !EXPORT_FIELDS.contains(&field) {
        return Err(CliError::Usage(format!(
            "unknown field {field:?}; expected one of {}",
            EXPORT_FIELDS.join(", ")
        )));
    }
    let a = SolutionArchive::read(archive)?;
    let table = export_table(&a, field, points)?;
    let dir = match out {
        Some(d) => output_dir(Some(d), None)?,
        None => archive.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    };
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    let path = dir.join(format!("{}.{field}.tsv", stem(archive)));
    write_text(&path, &table)?;
    println!("{}", path.display());
    Ok(path)
}
