//! Tabular results, acceptance checks and the files a run leaves behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Shortest string that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// What a gnuplot script should draw from a table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Plot {
    pub x: String,
    pub y: Vec<String>,
    pub log_y: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    #[serde(skip)]
    pub plot: Option<Plot>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new(), plot: None }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    pub fn with_plot(mut self, x: &str, y: &[&str], log_y: bool) -> Self {
        self.plot = Some(Plot { x: x.into(), y: y.iter().map(|c| c.to_string()).collect(), log_y });
        self
    }

    pub fn column_index(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == column)
    }

    pub fn column(&self, column: &str) -> Vec<&str> {
        let i = self.column_index(column).unwrap_or_else(|| panic!("table {} has no column {column}", self.name));
        self.rows.iter().map(|r| r[i].as_str()).collect()
    }

    /// Column parsed as numbers; unparseable cells become NaN.
    pub fn f64s(&self, column: &str) -> Vec<f64> {
        self.column(column).iter().map(|s| s.parse().unwrap_or(f64::NAN)).collect()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&self.columns).map_err(|e| CliError::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn gnuplot(&self) -> Option<String> {
        let p = self.plot.as_ref()?;
        let mut s = String::new();
        s.push_str("set datafile separator ','\n");
        s.push_str("set key autotitle columnhead\n");
        s.push_str(&format!("set xlabel '{}'\n", p.x));
        if p.log_y {
            s.push_str("set logscale y\n");
        }
        s.push_str(&format!("set terminal pngcairo size 900,600\nset output '{}.png'\n", self.name));
        let series: Vec<String> = p
            .y
            .iter()
            .enumerate()
            .map(|(i, y)| {
                let file = if i == 0 { format!("'{}.csv'", self.name) } else { "''".into() };
                format!("{file} using '{}':'{y}' with linespoints", p.x)
            })
            .collect();
        s.push_str(&format!("plot {}\n", series.join(", \\\n     ")));
        Some(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// Everything a subcommand produced.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    /// Non-tabular files such as datasets and checkpoints.
    pub artifacts: Vec<(String, Vec<u8>)>,
    pub summary: serde_json::Value,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn table(&self, name: &str) -> &Table {
        self.tables.iter().find(|t| t.name == name).unwrap_or_else(|| panic!("no table {name}"))
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub const FAILED_MARKER: &str = "FAILED";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Run directory: `<root>/<command>-<first 16 hex digits of the config hash>`.
pub fn run_dir(root: &Path, command: &str, config_hash: &str) -> PathBuf {
    root.join(format!("{command}-{}", &config_hash[..16]))
}

/// Claims a fresh run directory, refusing to touch an existing one unless
/// `force` is set. A FAILED marker stays until the run completes.
pub fn prepare_run_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        if !force {
            return Err(CliError::Config(format!("{} already exists; pass --force to overwrite", dir.display())));
        }
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join(FAILED_MARKER), "run did not complete\n")?;
    Ok(())
}

pub fn mark_failed(dir: &Path, err: &CliError) {
    // best effort: the error itself is what gets reported
    let _ = fs::write(dir.join(FAILED_MARKER), format!("{err}\n"));
}

/// Provenance shared by every sidecar of a run.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub rng: String,
    pub config: serde_json::Value,
    pub inputs: Vec<(String, String)>,
}

pub fn version_string() -> String {
    option_env!("QSHIELD_GIT_DESCRIBE").map(str::to_string).unwrap_or_else(|| format!("v{}", env!("CARGO_PKG_VERSION")))
}

#[derive(Serialize)]
struct Sidecar<'a> {
    table: &'a str,
    columns: &'a [String],
    rows: usize,
    provenance: &'a Provenance,
    wall_clock_seconds: f64,
    summary: &'a serde_json::Value,
    checks: &'a [Check],
}

/// Writes tables (CSV, JSON sidecar, gnuplot script), artifacts and the
/// resolved config, then removes the FAILED marker.
pub fn write_outcome(dir: &Path, config_toml: &str, prov: &Provenance, outcome: &Outcome, elapsed: Duration) -> Result<(), CliError> {
    fs::write(dir.join("config.toml"), config_toml)?;
    for t in &outcome.tables {
        fs::write(dir.join(format!("{}.csv", t.name)), t.to_csv()?)?;
        let side = Sidecar {
            table: &t.name,
            columns: &t.columns,
            rows: t.rows.len(),
            provenance: prov,
            wall_clock_seconds: elapsed.as_secs_f64(),
            summary: &outcome.summary,
            checks: &outcome.checks,
        };
        let json = serde_json::to_string_pretty(&side).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(dir.join(format!("{}.json", t.name)), json + "\n")?;
        if let Some(gp) = t.gnuplot() {
            fs::write(dir.join(format!("{}.gp", t.name)), gp)?;
        }
    }
    for (name, bytes) in &outcome.artifacts {
        fs::write(dir.join(name), bytes)?;
    }
    fs::remove_file(dir.join(FAILED_MARKER))?;
    Ok(())
}
