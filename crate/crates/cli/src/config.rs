//! `key = value` run configuration.
//!
//! ```text
//! mode = run1d            # run1d | run2d | oracle | analyze | compare
//! [packet]
//! delta = 0.5
//! q = 0.5, 1, 1.5         # lists expand into one run per value
//! [potential]
//! width = 2
//! [evolution]
//! t_final = 300
//! [output]
//! profiles = 0, 90, 180@150
//! ```

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use wellscatter::core1d::{default_dt, default_dx, default_half_width, EvolutionParams};
use wellscatter::model::{PacketShape, PacketSpec, PotentialShape, PotentialSpec};
use wellscatter::radial2d::{default_r_max, ProfileKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}, key `{k}`: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "key `{k}`: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

fn err<T>(line: Option<usize>, key: Option<&str>, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, key: key.map(str::to_owned), message: message.into() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Run1d,
    Run2d,
    Oracle,
    Analyze,
    Compare,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Run1d => "run1d",
            Mode::Run2d => "run2d",
            Mode::Oracle => "oracle",
            Mode::Analyze => "analyze",
            Mode::Compare => "compare",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "run1d" => Ok(Mode::Run1d),
            "run2d" => Ok(Mode::Run2d),
            "oracle" => Ok(Mode::Oracle),
            "analyze" => Ok(Mode::Analyze),
            "compare" => Ok(Mode::Compare),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// `long` runs are excluded from the default test tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Tier {
    #[default]
    Default,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observables {
    pub norm: bool,
    pub energy: bool,
    pub center_amplitude: bool,
    pub per_l_norm: bool,
}

impl Observables {
    fn names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        for (on, name) in [
            (self.norm, "norm"),
            (self.energy, "energy"),
            (self.center_amplitude, "center_amplitude"),
            (self.per_l_norm, "per_l_norm"),
        ] {
            if on {
                v.push(name);
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub dx: f64,
    /// Half-width of the symmetric 1D box.
    pub half_width: f64,
    pub r_max: f64,
    pub l_max: usize,
    /// Second truncation for the convergence gate.
    pub l_max_check: Option<usize>,
    pub sample_interval: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptions {
    /// `None` uses the default cutoff for the packet.
    pub p_max: Option<f64>,
    pub contour_nodes: usize,
    /// x range written by oracle and compare runs.
    pub window: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub tier: Tier,
    /// One entry per run; more than one when `q` or `y0` lists values.
    pub packets: Vec<PacketSpec>,
    pub potential: PotentialSpec,
    pub evolution: EvolutionParams,
    pub discretization: Discretization,
    pub oracle: OracleOptions,
    pub snapshots: Vec<f64>,
    /// `(angle in degrees, time)`.
    pub profiles: Vec<(f64, f64)>,
    pub profile_kind: ProfileKind,
    pub observables: Observables,
    pub output_dir: PathBuf,
    /// Run directory read by `analyze`.
    pub source_dir: Option<PathBuf>,
    pub seed_label: String,
}

impl RunConfig {
    pub fn packet(&self) -> &PacketSpec {
        &self.packets[0]
    }
}

const SECTIONS: [&str; 5] = ["", "packet", "potential", "evolution", "output"];

fn allowed_keys(section: &str) -> &'static [&'static str] {
    match section {
        "" => &["mode", "tier", "seed_label"],
        "packet" => &["shape", "q", "x0", "y0", "delta"],
        "potential" => &["shape", "depth", "width"],
        "evolution" => &[
            "mass",
            "dt",
            "t_final",
            "dx",
            "half_width",
            "r_max",
            "l_max",
            "l_max_check",
            "sample_interval",
            "p_max",
            "contour_nodes",
        ],
        "output" => &["dir", "source", "snapshots", "profiles", "profile_kind", "observables", "window"],
        _ => &[],
    }
}

#[derive(Debug, Clone)]
struct Entry {
    section: String,
    key: String,
    value: String,
    line: Option<usize>,
}

/// Parsed but not yet interpreted document.
#[derive(Debug, Clone, Default)]
pub struct Document {
    entries: Vec<Entry>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut doc = Document::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = Some(i + 1);
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[') {
                let name = name.strip_suffix(']').map(str::trim);
                match name {
                    Some(n) if SECTIONS[1..].contains(&n) => section = n.to_owned(),
                    Some(n) => return err(line, None, format!("unknown section [{n}]")),
                    None => return err(line, None, "unterminated section header"),
                }
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return err(line, None, format!("expected `key = value`, got `{body}`"));
            };
            doc.insert(&section, key.trim(), value.trim(), line)?;
        }
        Ok(doc)
    }

    fn insert(&mut self, section: &str, key: &str, value: &str, line: Option<usize>) -> Result<(), ConfigError> {
        if !allowed_keys(section).contains(&key) {
            let place = if section.is_empty() { "top level".to_owned() } else { format!("[{section}]") };
            return err(line, Some(key), format!("unknown key in {place}"));
        }
        if let Some(prev) = self.entries.iter().find(|e| e.section == section && e.key == key) {
            let at = prev.line.map_or("an override".to_owned(), |l| format!("line {l}"));
            return err(line, Some(key), format!("duplicate key, first set on {at}"));
        }
        self.entries.push(Entry { section: section.to_owned(), key: key.to_owned(), value: value.to_owned(), line });
        Ok(())
    }

    /// Applies `section.key=value` (or `key=value` for top-level keys),
    /// replacing any value from the file.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let Some((path, value)) = spec.split_once('=') else {
            return err(None, None, format!("override `{spec}` is not `section.key=value`"));
        };
        let (section, key) = match path.trim().split_once('.') {
            Some((s, k)) => (s.trim(), k.trim()),
            None => ("", path.trim()),
        };
        if !SECTIONS.contains(&section) {
            return err(None, Some(key), format!("unknown section `{section}` in override"));
        }
        self.entries.retain(|e| !(e.section == section && e.key == key));
        self.insert(section, key, value.trim(), None)
    }

    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.section == section && e.key == key)
    }
}

fn parse_value<T: FromStr>(e: &Entry) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    e.value.parse::<T>().map_err(|x| ConfigError {
        line: e.line,
        key: Some(e.key.clone()),
        message: format!("cannot parse `{}`: {x}", e.value),
    })
}

fn parse_list(e: &Entry) -> Result<Vec<f64>, ConfigError> {
    e.value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>().map_err(|x| ConfigError {
                line: e.line,
                key: Some(e.key.clone()),
                message: format!("cannot parse `{s}`: {x}"),
            })
        })
        .collect()
}

struct Reader<'a> {
    doc: &'a Document,
    section: &'static str,
}

impl Reader<'_> {
    fn f64(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.doc.get(self.section, key) {
            Some(e) => {
                let v: f64 = parse_value(e)?;
                if !v.is_finite() {
                    return err(e.line, Some(key), "must be finite");
                }
                Ok(v)
            }
            None => Ok(default),
        }
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.doc.get(self.section, key).map(|_| self.f64(key, 0.0)).transpose()
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.f64(key, default)?;
        if !(v > 0.0) {
            return err(self.line(key), Some(key), format!("must be positive, got {v}"));
        }
        Ok(v)
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.doc.get(self.section, key).map(parse_list).transpose()
    }

    fn usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.doc.get(self.section, key).map(parse_value::<usize>).transpose()
    }

    fn str(&self, key: &str) -> Option<&str> {
        self.doc.get(self.section, key).map(|e| e.value.as_str())
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.doc.get(self.section, key).and_then(|e| e.line)
    }

    fn fail<T>(&self, key: &str, message: impl Into<String>) -> Result<T, ConfigError> {
        err(self.line(key), Some(key), message)
    }
}

/// Default snapshot ladder `{t/4, t/2, 3t/4, t}`.
pub fn snapshot_ladder(t_final: f64) -> Vec<f64> {
    (1..=4).map(|k| t_final * k as f64 / 4.0).collect()
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    build(&Document::parse(text)?)
}

/// Interprets a parsed document, filling defaults and validating.
pub fn build(doc: &Document) -> Result<RunConfig, ConfigError> {
    let top = Reader { doc, section: "" };
    let Some(mode_entry) = doc.get("", "mode") else {
        return err(None, Some("mode"), "missing mode");
    };
    let mode: Mode = mode_entry.value.parse().map_err(|m| ConfigError {
        line: mode_entry.line,
        key: Some("mode".into()),
        message: m,
    })?;
    let tier = match top.str("tier") {
        None | Some("default") => Tier::Default,
        Some("long") => Tier::Long,
        Some(other) => return top.fail("tier", format!("expected `default` or `long`, got `{other}`")),
    };
    let seed_label = top.str("seed_label").unwrap_or("").to_owned();

    let pk = Reader { doc, section: "packet" };
    let shape = match pk.str("shape") {
        Some(s) => s.parse::<PacketShape>().or_else(|e| pk.fail("shape", e.to_string()))?,
        None if mode == Mode::Oracle || mode == Mode::Compare => PacketShape::Square,
        None => PacketShape::Gaussian,
    };
    let delta = pk.positive("delta", 0.5)?;
    let x0 = pk.f64("x0", -10.0)?;
    let qs = pk.list("q")?.unwrap_or_else(|| vec![1.0]);
    let y0s = pk.list("y0")?.unwrap_or_else(|| vec![0.0]);
    if qs.is_empty() || y0s.is_empty() {
        return pk.fail(if qs.is_empty() { "q" } else { "y0" }, "empty list");
    }
    let mut packets = Vec::new();
    for &q in &qs {
        for &y0 in &y0s {
            packets.push(PacketSpec { shape, q, x0, y0, width: delta });
        }
    }

    let pot = Reader { doc, section: "potential" };
    let pshape = match pot.str("shape") {
        Some(s) => s.parse::<PotentialShape>().or_else(|e| pot.fail("shape", e.to_string()))?,
        None if mode == Mode::Oracle || mode == Mode::Compare => PotentialShape::Square,
        None => PotentialShape::Gaussian,
    };
    let potential = PotentialSpec { shape: pshape, depth: pot.f64("depth", 1.0)?, width: pot.positive("width", 1.0)? };
    if potential.depth < 0.0 {
        return pot.fail("depth", format!("well depth must be non-negative, got {}", potential.depth));
    }

    let ev = Reader { doc, section: "evolution" };
    let mass = ev.positive("mass", 20.0)?;
    let t_final = ev.f64("t_final", 200.0)?;
    if t_final < 0.0 {
        return ev.fail("t_final", format!("must be non-negative, got {t_final}"));
    }
    let dx = ev.positive("dx", default_dx(&potential, &packets[0]))?;
    let dt = ev.positive("dt", default_dt(mass, dx))?;
    let evolution = EvolutionParams::new(mass, dt, t_final).or_else(|e| ev.fail("dt", e.to_string()))?;
    let widest = |f: &dyn Fn(&PacketSpec) -> f64| packets.iter().map(f).fold(0.0, f64::max);
    let half_width = ev.positive("half_width", widest(&|p| default_half_width(p, mass, t_final)))?;
    let r_max = ev.positive("r_max", widest(&|p| default_r_max(p, mass, t_final)))?;
    let l_max = ev.usize("l_max")?.unwrap_or(50);
    let l_max_check = ev.usize("l_max_check")?;
    if let Some(c) = l_max_check {
        if c <= l_max {
            return ev.fail("l_max_check", format!("must exceed l_max = {l_max}, got {c}"));
        }
    }
    let sample_interval = ev.positive("sample_interval", 1.0)?;
    let oracle = OracleOptions {
        p_max: match ev.opt_f64("p_max")? {
            Some(v) if !(v > 0.0) => return ev.fail("p_max", format!("must be positive, got {v}")),
            v => v,
        },
        contour_nodes: ev.usize("contour_nodes")?.unwrap_or(4096),
        window: (-150.0, 150.0),
    };

    let out = Reader { doc, section: "output" };
    let snapshots = out.list("snapshots")?.unwrap_or_else(|| snapshot_ladder(t_final));
    for &t in &snapshots {
        if !(0.0..=t_final).contains(&t) {
            return out.fail("snapshots", format!("time {t} outside [0, {t_final}]"));
        }
    }
    let profiles = match out.str("profiles") {
        Some(text) => parse_profiles(text, t_final).or_else(|m| out.fail("profiles", m))?,
        None if mode == Mode::Run2d => vec![(0.0, t_final), (90.0, t_final), (180.0, t_final)],
        None => Vec::new(),
    };
    for &(a, t) in &profiles {
        if !(0.0..=t_final).contains(&t) {
            return out.fail("profiles", format!("profile at {a} deg has time {t} outside [0, {t_final}]"));
        }
    }
    let profile_kind = match out.str("profile_kind") {
        None | Some("reduced") => ProfileKind::Reduced,
        Some("full") => ProfileKind::Full,
        Some(other) => return out.fail("profile_kind", format!("expected `reduced` or `full`, got `{other}`")),
    };
    let observables = match out.str("observables") {
        Some(text) => {
            let mut o = Observables { norm: false, energy: false, center_amplitude: false, per_l_norm: false };
            for name in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                match name {
                    "norm" => o.norm = true,
                    "energy" => o.energy = true,
                    "center_amplitude" => o.center_amplitude = true,
                    "per_l_norm" => o.per_l_norm = true,
                    other => return out.fail("observables", format!("unknown observable `{other}`")),
                }
            }
            o
        }
        None if mode == Mode::Run2d => Observables { norm: true, energy: false, center_amplitude: false, per_l_norm: false },
        None => Observables { norm: true, energy: true, center_amplitude: true, per_l_norm: false },
    };
    let window = match out.list("window")? {
        Some(v) if v.len() == 2 && v[0] < v[1] => (v[0], v[1]),
        Some(_) => return out.fail("window", "expected `x_min, x_max` with x_min < x_max"),
        None => oracle.window,
    };
    let output_dir = PathBuf::from(out.str("dir").unwrap_or("out"));
    let source_dir = out.str("source").map(PathBuf::from);

    // Cross-key consistency.
    match mode {
        Mode::Run2d => {
            if shape != PacketShape::Gaussian {
                return pk.fail("shape", format!("{shape} packets are not available in run2d"));
            }
            if observables.energy || observables.center_amplitude {
                return out.fail("observables", "run2d records only norm and per_l_norm");
            }
        }
        Mode::Oracle | Mode::Compare => {
            if shape != PacketShape::Square {
                return pk.fail("shape", format!("{} mode needs a square packet, got {shape}", mode.name()));
            }
            if pshape != PotentialShape::Square {
                return pot.fail("shape", format!("{} mode needs a square well, got {pshape}", mode.name()));
            }
            if packets.len() > 1 {
                return pk.fail("q", "oracle and compare runs take a single packet");
            }
        }
        Mode::Analyze => {
            if source_dir.is_none() {
                return out.fail("source", "analyze needs `source` naming a run directory");
            }
        }
        Mode::Run1d => {
            if y0s.iter().any(|&y| y != 0.0) {
                return pk.fail("y0", "impact parameters only apply to run2d");
            }
        }
    }
    if mode != Mode::Run2d && !profiles.is_empty() {
        return out.fail("profiles", "angular profiles only apply to run2d");
    }
    if mode != Mode::Run2d && observables.per_l_norm {
        return out.fail("observables", "per_l_norm only applies to run2d");
    }

    Ok(RunConfig {
        mode,
        tier,
        packets,
        potential,
        evolution,
        discretization: Discretization { dx, half_width, r_max, l_max, l_max_check, sample_interval },
        oracle: OracleOptions { window, ..oracle },
        snapshots,
        profiles,
        profile_kind,
        observables,
        output_dir,
        source_dir,
        seed_label,
    })
}

/// `angle` or `angle@time` entries; a bare angle means `t_final`.
fn parse_profiles(text: &str, t_final: f64) -> Result<Vec<(f64, f64)>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (a, t) = match item.split_once('@') {
                Some((a, t)) => (a.trim(), t.trim().parse::<f64>().map_err(|e| format!("bad time in `{item}`: {e}"))?),
                None => (item, t_final),
            };
            Ok((a.parse::<f64>().map_err(|e| format!("bad angle in `{item}`: {e}"))?, t))
        })
        .collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

impl RunConfig {
    /// Canonical text form; every field written explicitly, so
    /// `parse_config(c.to_text()) == c`.
    pub fn to_text(&self) -> String {
        let p = self.packet();
        let d = &self.discretization;
        let mut s = String::new();
        let _ = writeln!(s, "mode = {}", self.mode.name());
        let _ = writeln!(s, "tier = {}", if self.tier == Tier::Long { "long" } else { "default" });
        if !self.seed_label.is_empty() {
            let _ = writeln!(s, "seed_label = {}", self.seed_label);
        }
        let _ = writeln!(s, "\n[packet]");
        let _ = writeln!(s, "shape = {}", p.shape);
        let _ = writeln!(s, "q = {}", join(&distinct(self.packets.iter().map(|p| p.q))));
        let _ = writeln!(s, "x0 = {}", p.x0);
        let _ = writeln!(s, "y0 = {}", join(&distinct(self.packets.iter().map(|p| p.y0))));
        let _ = writeln!(s, "delta = {}", p.width);
        let _ = writeln!(s, "\n[potential]");
        let _ = writeln!(s, "shape = {}", self.potential.shape);
        let _ = writeln!(s, "depth = {}", self.potential.depth);
        let _ = writeln!(s, "width = {}", self.potential.width);
        let _ = writeln!(s, "\n[evolution]");
        let _ = writeln!(s, "mass = {}", self.evolution.mass);
        let _ = writeln!(s, "t_final = {}", self.evolution.t_final);
        let _ = writeln!(s, "dx = {}", d.dx);
        let _ = writeln!(s, "dt = {}", self.evolution.dt);
        let _ = writeln!(s, "half_width = {}", d.half_width);
        let _ = writeln!(s, "r_max = {}", d.r_max);
        let _ = writeln!(s, "l_max = {}", d.l_max);
        if let Some(c) = d.l_max_check {
            let _ = writeln!(s, "l_max_check = {c}");
        }
        let _ = writeln!(s, "sample_interval = {}", d.sample_interval);
        if let Some(pm) = self.oracle.p_max {
            let _ = writeln!(s, "p_max = {pm}");
        }
        let _ = writeln!(s, "contour_nodes = {}", self.oracle.contour_nodes);
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "dir = {}", self.output_dir.display());
        if let Some(src) = &self.source_dir {
            let _ = writeln!(s, "source = {}", src.display());
        }
        let _ = writeln!(s, "snapshots = {}", join(&self.snapshots));
        if !self.profiles.is_empty() {
            let items: Vec<String> = self.profiles.iter().map(|(a, t)| format!("{a}@{t}")).collect();
            let _ = writeln!(s, "profiles = {}", items.join(", "));
        }
        let _ = writeln!(s, "profile_kind = {}", if self.profile_kind == ProfileKind::Full { "full" } else { "reduced" });
        let _ = writeln!(s, "observables = {}", self.observables.names().join(", "));
        let _ = writeln!(s, "window = {}, {}", self.oracle.window.0, self.oracle.window.1);
        s
    }
}
