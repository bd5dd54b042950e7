//! End-to-end runs of the `mfg` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mfg_cli::archive::SolutionArchive;
use num_complex::Complex64;

const HEAT: &str = r#"
[problem]
kind = "planning"
horizon = 1.0
alpha = 0.25
cutoff = 8
steps = 16

[hamiltonian]
name = "zero"

[data]
mu0 = { preset = "two_mode", delta = 0.05 }
w_terminal = { modes = [{ k = [1], re = 0.05 }, { k = [2], re = 0.01, im = 0.02 }] }
u_terminal_mean = 0.5
"#;

const SMALL_PAYOFF: &str = r#"
[problem]
kind = "payoff"
horizon = 1.0
alpha = 0.25
cutoff = 16
steps = 32

[hamiltonian]
name = "quartic_example"

[data]
mu0 = { preset = "delta_cos", delta = 0.01 }
payoff = "identity"

[solver]
tol = 1e-12
"#;

fn mfg(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfg"))
        .args(args)
        .current_dir(dir)
        .env_remove("MFG_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn solve_heat(dir: &Path) -> PathBuf {
    let cfg = write_config(dir, "heat.toml", HEAT);
    let o = mfg(&["solve", "--config", cfg.to_str().unwrap(), "--out", "out"], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join("out/heat.mfg")
}

#[test]
fn heat_flow_solve_matches_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let path = solve_heat(tmp.path());
    assert!(tmp.path().join("out/heat.report.json").exists());
    let a = SolutionArchive::read(&path).unwrap();
    assert!(a.report.converged);
    let sol = &a.solution;
    let grid = sol.grid();
    let t_end = grid.horizon();
    for i in 0..grid.len() {
        let t = grid.time(i);
        let mu1 = sol.mu.coeff(i, &[1]);
        let mu2 = sol.mu.coeff(i, &[2]);
        let w1 = sol.w.coeff(i, &[1]);
        let w2 = sol.w.coeff(i, &[2]);
        assert!((mu1 - Complex64::new(0.025 * (-t).exp(), 0.0)).norm() < 1e-15);
        assert!((mu2 - Complex64::new(0.0, -0.0125 * (-4.0 * t).exp())).norm() < 1e-15);
        assert!((w1 - Complex64::new(0.05 * (-(t_end - t)).exp(), 0.0)).norm() < 1e-15);
        assert!((w2 - Complex64::new(0.01, 0.02) * (-4.0 * (t_end - t)).exp()).norm() < 1e-15);
        // no Hamiltonian: the mean of u stays at its terminal value
        assert!((sol.u_mean[i] - 0.5).abs() < 1e-15);
    }
}

#[test]
fn alpha_at_half_horizon_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", &HEAT.replace("alpha = 0.25", "alpha = 0.5"));
    let o = mfg(&["solve", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("T/2"), "{}", stderr(&o));
    assert!(!tmp.path().join("bad.report.json").exists());
}

#[test]
fn malformed_config_and_usage_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "junk.toml", "[problem\nkind = 3");
    assert_eq!(code(&mfg(&["solve", "--config", cfg.to_str().unwrap()], tmp.path())), 1);
    assert_eq!(code(&mfg(&["solve", "--config", "missing.toml"], tmp.path())), 1);
    assert_eq!(code(&mfg(&["frobnicate"], tmp.path())), 1);
    assert_eq!(code(&mfg(&["--help"], tmp.path())), 0);
}

#[test]
fn verify_accepts_heat_archive() {
    let tmp = tempfile::tempdir().unwrap();
    let path = solve_heat(tmp.path());
    let o = mfg(&["verify", "--archive", path.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 0, "{}{}", stderr(&o), String::from_utf8_lossy(&o.stdout));
    let json = std::fs::read_to_string(tmp.path().join("out/heat.verify.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(v["residuals"]["hjb_residual"].as_f64().unwrap() < 1e-13);
}

#[test]
fn verify_flags_edited_coefficient() {
    let tmp = tempfile::tempdir().unwrap();
    let path = solve_heat(tmp.path());
    let text = std::fs::read_to_string(&path).unwrap();
    // nudge μ̂(t_8, 1) by 1e-3
    let mut a = SolutionArchive::parse(&text).unwrap();
    let grid = a.solution.grid().clone();
    let modes = a.solution.modes();
    let mut data = a.solution.mu.data().to_vec();
    data[8 * modes.len() + modes.index_of(&[1]).unwrap()] += Complex64::new(1e-3, 0.0);
    a.solution.mu = mfg_core::fourier::SpectralField::from_data(grid, modes, data).unwrap();
    let bad = tmp.path().join("edited.mfg");
    a.write(&bad).unwrap();
    let o = mfg(&["verify", "--archive", bad.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("fp_residual"), "{}", stderr(&o));
}

#[test]
fn verify_rejects_truncated_archive() {
    let tmp = tempfile::tempdir().unwrap();
    let path = solve_heat(tmp.path());
    let text = std::fs::read_to_string(&path).unwrap();
    let cut = tmp.path().join("cut.mfg");
    std::fs::write(&cut, &text[..text.len() * 2 / 3]).unwrap();
    let o = mfg(&["verify", "--archive", cut.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("truncated"), "{}", stderr(&o));
}

#[test]
fn nonlinear_payoff_solution_verifies() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL_PAYOFF);
    let o = mfg(&["solve", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = mfg(&["verify", "--archive", "small.mfg"], tmp.path());
    assert_eq!(code(&o), 0, "{}{}", stderr(&o), String::from_utf8_lossy(&o.stdout));
}

#[test]
fn empty_sweep_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{HEAT}\n[sweep]\nparameter = \"epsilon\"\nvalues = []\n");
    let cfg = write_config(tmp.path(), "empty.toml", &text);
    let o = mfg(&["sweep", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("empty"), "{}", stderr(&o));
}

#[test]
fn zero_model_epsilon_sweep_rows_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{HEAT}\n[sweep]\nparameter = \"epsilon\"\nvalues = [-1.0, -0.25, 0.0, 0.5, 2.0]\n");
    let cfg = write_config(tmp.path(), "eps.toml", &text);
    let o = mfg(&["--threads", "2", "sweep", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = std::fs::read_to_string(tmp.path().join("eps.sweep.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 5);
    // values in input order; everything after the value column identical
    let values: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(values, [-1.0, -0.25, 0.0, 0.5, 2.0]);
    for r in &rows {
        assert_eq!(r[2..], rows[0][2..]);
        assert_eq!(r[2], "true");
        assert_eq!(r[6].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn delta_sweep_records_failures_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL_PAYOFF.replace("steps = 32", "steps = 16").replace("cutoff = 16", "cutoff = 8")
        + "\n[sweep]\nparameter = \"delta\"\nvalues = [0.005, 0.02, 0.3]\n";
    let cfg = write_config(tmp.path(), "delta.toml", &text);
    let o = mfg(&["sweep", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = std::fs::read_to_string(tmp.path().join("delta.sweep.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][2], "true");
    assert_eq!(rows[1][2], "true");
    // δ = 0.3 makes m₀ negative somewhere: a failed row, not an aborted sweep
    assert_eq!(rows[2][2], "false");
    assert!(rows[2][7].contains("negative") || rows[2][7].contains("probability"), "{:?}", rows[2]);
}

#[test]
fn continuation_fallback_writes_branch() {
    let tmp = tempfile::tempdir().unwrap();
    let text = HEAT.replace("name = \"zero\"", "name = \"density_quadratic\"")
        + "\n[continuation]\neps_max = 0.5\nsteps = 2\n";
    let cfg = write_config(tmp.path(), "branch.toml", &text);
    let o = mfg(&["sweep", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = std::fs::read_to_string(tmp.path().join("branch.sweep.tsv")).unwrap();
    let values: Vec<f64> = table.lines().skip(1).map(|l| l.split('\t').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values, [-0.5, -0.25, 0.0, 0.25, 0.5]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("fitted"));
}

#[test]
fn export_tables_have_expected_shapes() {
    let tmp = tempfile::tempdir().unwrap();
    let path = solve_heat(tmp.path());
    let archive = path.to_str().unwrap();
    let rows = |field: &str, extra: &[&str]| -> Vec<Vec<String>> {
        let mut args = vec!["export", "--archive", archive, "--field", field];
        args.extend_from_slice(extra);
        let o = mfg(&args, tmp.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let text = std::fs::read_to_string(tmp.path().join(format!("out/heat.{field}.tsv"))).unwrap();
        text.lines().map(|l| l.split('\t').map(String::from).collect()).collect()
    };
    let u = rows("u", &["--points", "8"]);
    assert_eq!(u.len(), 1 + 17 * 8);
    assert_eq!(u[0], ["time_index", "t", "x1", "u"]);
    // u(T, 0) = w_T(0) + ū(T) = 2·(0.05 + 0.01) + 0.5
    let last = &u[1 + 16 * 8];
    assert!((last[3].parse::<f64>().unwrap() - 0.62).abs() < 1e-14);

    let m = rows("m", &["--points", "4"]);
    assert_eq!(m.len(), 1 + 17 * 4);
    let decay = rows("decay", &[]);
    assert_eq!(decay.len(), 18);
    assert_eq!(decay[0].len(), 5);
    let norms = rows("norms", &[]);
    assert_eq!(norms.len(), 18);
    let u_mean = rows("u_mean", &[]);
    assert_eq!(u_mean.len(), 18);
    assert_eq!(u_mean[17][2].parse::<f64>().unwrap(), 0.5);

    let o = mfg(&["export", "--archive", archive, "--field", "pressure"], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("unknown field"));
}

#[test]
fn output_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "heat.toml", HEAT);
    let o = Command::new(env!("CARGO_BIN_EXE_mfg"))
        .args(["solve", "--config", cfg.to_str().unwrap()])
        .current_dir(tmp.path())
        .env("MFG_OUTPUT_DIR", tmp.path().join("envdir"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(tmp.path().join("envdir/heat.mfg").exists());
}

#[test]
fn large_data_run_reports_non_convergence() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL_PAYOFF
        .replace("delta = 0.01", "delta = 10.0")
        .replace("payoff = \"identity\"", "payoff = \"identity\"\nrequire_probability = false")
        .replace("tol = 1e-12", "tol = 1e-9\nmax_iter = 50");
    let cfg = write_config(tmp.path(), "large.toml", &text);
    let o = mfg(&["solve", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("large.report.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], false);
    assert!(!tmp.path().join("large.mfg").exists());
}
