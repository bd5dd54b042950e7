//! Solution archives: a sectioned text file holding everything needed to
//! re-verify a run.
//!
//! ```text
//! %% mfg-archive 1
//! %% metadata
//! key = value
//! %% config
//! <the run configuration, verbatim>
//! %% report
//! <solve report as JSON>
//! %% field w
//! time_index  k1 .. kn  real  imag
//! %% field mu
//! ...
//! %% u_mean
//! time_index  value
//! %% end
//! ```
//!
//! Floats are written with 17 significant digits (NaNs as their raw bits),
//! which round-trips every `f64` exactly. A missing `%% end` marks a truncated file.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use mfg_core::fixed_point::{ProblemKind, Solution, SolveReport};
use mfg_core::fourier::{Modes, SpectralField, TimeGrid};
use num_complex::Complex64;

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "%% mfg-archive";
const END: &str = "%% end";

#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub solver_version: String,
    pub created_unix: u64,
    pub kind: ProblemKind,
    pub dim: usize,
    pub cutoff: usize,
    pub steps: usize,
    pub horizon: f64,
    pub alpha: f64,
    /// Coupling strength of a weak-coupling solve; `None` for the full problem.
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SolutionArchive {
    pub metadata: Metadata,
    pub config: String,
    pub report: SolveReport,
    pub solution: Solution,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Archive(msg.into())
}

fn float(x: f64) -> String {
    if x.is_nan() {
        // keep sign and payload
        format!("nan:{:016x}", x.to_bits())
    } else {
        format!("{x:.16e}")
    }
}

fn kind_name(kind: ProblemKind) -> &'static str {
    match kind {
        ProblemKind::Payoff => "payoff",
        ProblemKind::Planning => "planning",
    }
}

impl SolutionArchive {
    pub fn new(config: String, report: SolveReport, solution: Solution, kind: ProblemKind, epsilon: Option<f64>) -> Self {
        let grid = solution.grid();
        let modes = solution.modes();
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Self {
            metadata: Metadata {
                solver_version: env!("CARGO_PKG_VERSION").to_string(),
                created_unix,
                kind,
                dim: modes.dim(),
                cutoff: modes.cutoff(),
                steps: grid.steps(),
                horizon: grid.horizon(),
                alpha: grid.alpha(),
                epsilon,
            },
            config,
            report,
            solution,
        }
    }

    pub fn render(&self) -> Result<String, CliError> {
        let m = &self.metadata;
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {FORMAT_VERSION}");
        out.push_str("%% metadata\n");
        let _ = writeln!(out, "solver_version = {}", m.solver_version);
        let _ = writeln!(out, "created_unix = {}", m.created_unix);
        let _ = writeln!(out, "kind = {}", kind_name(m.kind));
        let _ = writeln!(out, "dim = {}", m.dim);
        let _ = writeln!(out, "cutoff = {}", m.cutoff);
        let _ = writeln!(out, "steps = {}", m.steps);
        let _ = writeln!(out, "horizon = {}", float(m.horizon));
        let _ = writeln!(out, "alpha = {}", float(m.alpha));
        let _ = writeln!(out, "epsilon = {}", m.epsilon.map_or("none".to_string(), float));

        out.push_str("%% config\n");
        for line in self.config.lines() {
            if line.starts_with("%%") {
                return Err(bad("configuration text contains a line starting with %%"));
            }
            out.push_str(line);
            out.push('\n');
        }

        out.push_str("%% report\n");
        let json = serde_json::to_string_pretty(&self.report).map_err(|e| bad(e.to_string()))?;
        out.push_str(&json);
        out.push('\n');

        write_field(&mut out, "w", &self.solution.w);
        write_field(&mut out, "mu", &self.solution.mu);

        out.push_str("%% u_mean\ntime_index\tvalue\n");
        for (i, v) in self.solution.u_mean.iter().enumerate() {
            let _ = writeln!(out, "{i}\t{}", float(*v));
        }
        out.push_str(END);
        out.push('\n');
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = self.render()?;
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        let version = header
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| bad("missing archive header"))?;
        if version != FORMAT_VERSION.to_string() {
            return Err(bad(format!("unsupported format version {version}")));
        }

        // Split into (section name, body lines); sections must appear in order.
        let mut sections: Vec<(String, Vec<&str>)> = Vec::new();
        let mut ended = false;
        for line in lines {
            if ended {
                if !line.trim().is_empty() {
                    return Err(bad("content after end marker"));
                }
                continue;
            }
            if line == END {
                ended = true;
            } else if let Some(name) = line.strip_prefix("%% ") {
                sections.push((name.trim().to_string(), Vec::new()));
            } else {
                let (_, body) = sections.last_mut().ok_or_else(|| bad("content before first section"))?;
                body.push(line);
            }
        }
        if !ended {
            return Err(bad("missing end marker (file truncated?)"));
        }
        let names: Vec<&str> = sections.iter().map(|(n, _)| n.as_str()).collect();
        if names != ["metadata", "config", "report", "field w", "field mu", "u_mean"] {
            return Err(bad(format!("unexpected sections {names:?}")));
        }

        let metadata = parse_metadata(&sections[0].1)?;
        let mut config = sections[1].1.join("\n");
        if !sections[1].1.is_empty() {
            config.push('\n');
        }
        let report: SolveReport =
            serde_json::from_str(&sections[2].1.join("\n")).map_err(|e| bad(format!("report: {e}")))?;

        let grid = Arc::new(
            TimeGrid::new(metadata.horizon, metadata.alpha, metadata.steps).map_err(|e| bad(e.to_string()))?,
        );
        let modes = Modes::new(metadata.dim, metadata.cutoff).map_err(|e| bad(e.to_string()))?;
        let w = parse_field(&sections[3].1, &grid, modes, "w")?;
        let mu = parse_field(&sections[4].1, &grid, modes, "mu")?;
        let u_mean = parse_u_mean(&sections[5].1, grid.len())?;
        Ok(Self {
            metadata,
            config,
            report,
            solution: Solution { w, mu, u_mean },
        })
    }
}

fn write_field(out: &mut String, name: &str, f: &SpectralField) {
    let modes = f.modes();
    let dim = modes.dim();
    let _ = writeln!(out, "%% field {name}");
    out.push_str("time_index");
    for j in 1..=dim {
        let _ = write!(out, "\tk{j}");
    }
    out.push_str("\treal\timag\n");
    for i in 0..f.grid().len() {
        for ((_, k), c) in modes.iter().zip(f.slice(i)) {
            let _ = write!(out, "{i}");
            for kj in &k[..dim] {
                let _ = write!(out, "\t{kj}");
            }
            let _ = writeln!(out, "\t{}\t{}", float(c.re), float(c.im));
        }
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64, CliError> {
    let s = s.trim();
    let parsed = match s.strip_prefix("nan:") {
        Some(hex) => u64::from_str_radix(hex, 16).ok().map(f64::from_bits).filter(|x| x.is_nan()),
        None => s.parse().ok(),
    };
    parsed.ok_or_else(|| bad(format!("{what}: not a number: {s:?}")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize, CliError> {
    s.trim().parse().map_err(|_| bad(format!("{what}: not an integer: {s:?}")))
}

fn parse_metadata(body: &[&str]) -> Result<Metadata, CliError> {
    let mut map = std::collections::HashMap::new();
    for line in body {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("metadata line {line:?}")))?;
        map.insert(k.trim(), v.trim());
    }
    let get = |k: &str| map.get(k).copied().ok_or_else(|| bad(format!("metadata is missing {k}")));
    let kind = match get("kind")? {
        "payoff" => ProblemKind::Payoff,
        "planning" => ProblemKind::Planning,
        other => return Err(bad(format!("unknown problem kind {other:?}"))),
    };
    let epsilon = match get("epsilon")? {
        "none" => None,
        s => Some(parse_f64(s, "epsilon")?),
    };
    Ok(Metadata {
        solver_version: get("solver_version")?.to_string(),
        created_unix: get("created_unix")?
            .parse()
            .map_err(|_| bad("created_unix is not an integer"))?,
        kind,
        dim: parse_usize(get("dim")?, "dim")?,
        cutoff: parse_usize(get("cutoff")?, "cutoff")?,
        steps: parse_usize(get("steps")?, "steps")?,
        horizon: parse_f64(get("horizon")?, "horizon")?,
        alpha: parse_f64(get("alpha")?, "alpha")?,
        epsilon,
    })
}

fn parse_field(body: &[&str], grid: &Arc<TimeGrid>, modes: Modes, name: &str) -> Result<SpectralField, CliError> {
    let dim = modes.dim();
    let len = modes.len();
    let mut rows = body.iter().filter(|l| !l.trim().is_empty());
    let header = rows.next().ok_or_else(|| bad(format!("field {name}: missing header")))?;
    if header.split('\t').count() != dim + 3 {
        return Err(bad(format!("field {name}: header has the wrong number of columns")));
    }
    let mut data = vec![Complex64::new(0.0, 0.0); grid.len() * len];
    let mut seen = vec![false; data.len()];
    let mut k = vec![0i64; dim];
    for row in rows {
        let cols: Vec<&str> = row.split('\t').collect();
        if cols.len() != dim + 3 {
            return Err(bad(format!("field {name}: row {row:?} has {} columns", cols.len())));
        }
        let i = parse_usize(cols[0], name)?;
        for (j, kj) in k.iter_mut().enumerate() {
            *kj = cols[1 + j]
                .trim()
                .parse()
                .map_err(|_| bad(format!("field {name}: bad wavevector in {row:?}")))?;
        }
        let idx = modes
            .index_of(&k)
            .ok_or_else(|| bad(format!("field {name}: wavevector {k:?} outside the cutoff")))?;
        if i >= grid.len() {
            return Err(bad(format!("field {name}: time index {i} out of range")));
        }
        let slot = i * len + idx;
        if seen[slot] {
            return Err(bad(format!("field {name}: duplicate entry ({i}, {k:?})")));
        }
        seen[slot] = true;
        data[slot] = Complex64::new(parse_f64(cols[dim + 1], name)?, parse_f64(cols[dim + 2], name)?);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(bad(format!(
            "field {name}: missing entry at time index {}",
            missing / len
        )));
    }
    SpectralField::from_data(grid.clone(), modes, data).map_err(|e| bad(e.to_string()))
}

fn parse_u_mean(body: &[&str], n: usize) -> Result<Vec<f64>, CliError> {
    let mut rows = body.iter().filter(|l| !l.trim().is_empty());
    rows.next().ok_or_else(|| bad("u_mean: missing header"))?;
    let mut out = Vec::with_capacity(n);
    for (expected, row) in rows.enumerate() {
        let (i, v) = row.split_once('\t').ok_or_else(|| bad(format!("u_mean row {row:?}")))?;
        if parse_usize(i, "u_mean")? != expected {
            return Err(bad("u_mean rows out of order"));
        }
        out.push(parse_f64(v, "u_mean")?);
    }
    if out.len() != n {
        return Err(bad(format!("u_mean has {} rows, expected {n}", out.len())));
    }
    Ok(out)
}
