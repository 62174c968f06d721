//! Artifact writing: experiment directories, CSV tables, JSON and plot scripts.

use crate::error::{io, CliError};
use lorentz_core::Point3;
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::Path;

/// Creates `dir`, refusing to reuse a directory that already holds files.
pub fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    if dir.exists() {
        let mut entries = std::fs::read_dir(dir).map_err(|e| io(e, dir))?;
        if entries.next().is_some() {
            return Err(CliError::validation(format!(
                "output directory {} is not empty; each experiment needs a fresh directory",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| io(e, dir))
}

pub fn write(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|e| io(e, &path))
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON value serializes");
    s.push('\n');
    s
}

/// Shortest round-trip decimal; `NaN` and infinities as text.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

/// `None` for non-finite values, so JSON never carries `inf`.
pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// In-memory CSV table.
pub struct CsvTable {
    w: csv::Writer<Vec<u8>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Self { w }
    }

    pub fn row(&mut self, fields: impl Iterator<Item = String>) {
        self.w.write_record(fields.collect::<Vec<_>>()).expect("in-memory write");
    }

    pub fn finish(self) -> String {
        String::from_utf8(self.w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
    }
}

/// Reads an `x,y,z` configuration file; `#` lines are skipped.
pub fn read_points(path: &Path) -> Result<Vec<Point3<f64>>, CliError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<(f64, f64, f64)>().enumerate() {
        let (x, y, z) = rec.map_err(|e| CliError::validation(format!("{} row {}: {e}", path.display(), i + 1)))?;
        out.push([x, y, z]);
    }
    if out.is_empty() {
        return Err(CliError::validation(format!("{} holds no points", path.display())));
    }
    Ok(out)
}

pub fn convergence_plot_script(columns: &[&str]) -> String {
    let cols = columns.iter().map(|c| format!("\"{c}\"")).collect::<Vec<_>>().join(", ");
    format!(
        r#"# Log-log error plot for trials.csv; run from the experiment directory.
import csv
import math
from collections import defaultdict

import matplotlib.pyplot as plt

COLUMNS = [{cols}]

rows = list(csv.DictReader(open("trials.csv")))
fig, ax = plt.subplots()
for col in COLUMNS:
    by_n = defaultdict(list)
    for r in rows:
        v = float(r[col]) if r[col] else math.nan
        if math.isfinite(v) and v > 0:
            by_n[int(r["n"])].append(v)
    ns = sorted(by_n)
    med = [sorted(by_n[n])[len(by_n[n]) // 2] for n in ns]
    for n in ns:
        ax.scatter([n] * len(by_n[n]), by_n[n], s=4, alpha=0.3)
    ax.plot(ns, med, marker="o", label=col)
ax.set_xscale("log")
ax.set_yscale("log")
ax.set_xlabel("N")
ax.set_ylabel("error")
ax.legend()
fig.savefig("convergence.png", dpi=150)
"#
    )
}

pub const FLUCTUATION_PLOT_SCRIPT: &str = r#"# Histogram of eta per N against the fitted Gaussian; run from the experiment directory.
import csv
import math
from collections import defaultdict

import matplotlib.pyplot as plt

by_n = defaultdict(list)
for r in csv.DictReader(open("eta.csv")):
    by_n[int(r["n"])].append(float(r["eta"]))
fig, axes = plt.subplots(1, len(by_n), squeeze=False)
for ax, n in zip(axes[0], sorted(by_n)):
    x = by_n[n]
    m = sum(x) / len(x)
    s = math.sqrt(sum((v - m) ** 2 for v in x) / (len(x) - 1)) if len(x) > 1 else 1.0
    ax.hist(x, bins=60, density=True, alpha=0.6)
    grid = [m + s * (k / 50.0 - 4.0) for k in range(401)]
    ax.plot(grid, [math.exp(-((g - m) / s) ** 2 / 2) / (s * math.sqrt(2 * math.pi)) for g in grid])
    ax.set_title(f"N = {n}")
fig.savefig("fluctuations.png", dpi=150)
"#;
