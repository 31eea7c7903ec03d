//! CSV emission and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

/// C-style `%.12e`: `1.234567890123e-05`.
pub fn fmt_e(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

/// Compact number for file names: `180`, `-90`, `0.5`.
pub fn label(x: f64) -> String {
    format!("{x}")
}

/// Files written under one run directory, in emission order.
#[derive(Debug)]
pub struct Output {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    pub fn create(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Output { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `rows` under `header`; `rel` may contain one subdirectory.
    pub fn csv(&mut self, rel: impl AsRef<Path>, header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> io::Result<()> {
        let mut text = String::with_capacity(1 << 16);
        text.push_str(header);
        text.push('\n');
        for row in rows {
            let cells: Vec<String> = row.into_iter().map(fmt_e).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        self.text(rel, &text)
    }

    pub fn text(&mut self, rel: impl AsRef<Path>, body: &str) -> io::Result<()> {
        let rel = rel.as_ref();
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, body)?;
        self.files.push(rel.to_path_buf());
        Ok(())
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }
}

/// One invariant check recorded in the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub limit: f64,
}

impl Gate {
    pub fn passed(&self) -> bool {
        self.value < self.limit
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config_text: String,
    pub version: String,
    /// `(key, value)` pairs describing the grids actually used.
    pub grid: Vec<(String, String)>,
    pub wall_clock: f64,
    pub gates: Vec<Gate>,
    pub notes: Vec<String>,
    /// `(relative path, sha256 hex)`.
    pub files: Vec<(PathBuf, String)>,
}

pub const MANIFEST_NAME: &str = "manifest.txt";

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn all_gates_pass(&self) -> bool {
        self.gates.iter().all(Gate::passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "version = {}", self.version);
        let _ = writeln!(s, "wall_clock_s = {:.3}", self.wall_clock);
        for (k, v) in &self.grid {
            let _ = writeln!(s, "grid.{k} = {v}");
        }
        for g in &self.gates {
            let verdict = if g.passed() { "pass" } else { "fail" };
            let _ = writeln!(s, "gate.{} = {} < {} {verdict}", g.name, fmt_e(g.value), fmt_e(g.limit));
        }
        for n in &self.notes {
            let _ = writeln!(s, "note = {n}");
        }
        for (p, d) in &self.files {
            let _ = writeln!(s, "file {} sha256 = {d}", p.display());
        }
        let _ = writeln!(s, "\n[config]");
        s.push_str(&self.config_text);
        s
    }

    /// Digests every emitted file and writes the manifest last.
    pub fn finish(mut self, out: &Output) -> io::Result<Self> {
        self.files = out
            .files()
            .iter()
            .map(|p| Ok((p.clone(), sha256_file(&out.root().join(p))?)))
            .collect::<io::Result<_>>()?;
        fs::write(out.root().join(MANIFEST_NAME), self.render())?;
        Ok(self)
    }
}

/// Splits a manifest into its header lines and the echoed config text.
pub fn split_manifest(text: &str) -> (Vec<&str>, &str) {
    match text.split_once("\n[config]\n") {
        Some((head, cfg)) => (head.lines().collect(), cfg),
        None => (text.lines().collect(), ""),
    }
}

/// Reads a CSV written by [`Output::csv`].
pub fn read_csv(path: &Path) -> io::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap_or("").split(',').map(str::to_owned).collect();
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|c| c.trim().parse::<f64>().map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display()))))
                .collect()
        })
        .collect::<io::Result<_>>()?;
    Ok((header, rows))
}
