//! Dispatch of a validated [`RunConfig`] to the solvers.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use wellscatter::analysis::{
    default_power_law_window, detect_peaks, fit_envelope, fit_exponential, fit_power_law, reflected_region_1d,
    reflected_region_2d, DEFAULT_PROMINENCE,
};
use wellscatter::core1d::{evolve, ComplexField1D, Grid1D, Observers, Quantity};
use wellscatter::model::{make_packet_1d, make_packet_2d, PacketSpec};
use wellscatter::oracle::{band_limited_packet, evolve_analytic, in_gibbs_zone, ContourSpec, SquareWellStates};
use wellscatter::radial2d::{evolve_2d, profile_deviation, radial_grid, ray_values, Evolution2D, Observers2D};
use wellscatter::Error;

use crate::config::{parse_config, Mode, RunConfig};
use crate::output::{fmt_e, label, read_csv, split_manifest, Gate, Output, RunManifest, MANIFEST_NAME};

pub const NORM_DRIFT_LIMIT: f64 = 1e-4;
pub const LMAX_DEVIATION_LIMIT: f64 = 0.01;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Numeric { context: String, source: Error },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl RunError {
    /// Process exit status: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Numeric { source: Error::Config(_), .. } => 2,
            _ => 3,
        }
    }
}

fn ctx(context: impl Into<String>) -> impl FnOnce(Error) -> RunError {
    let context = context.into();
    move |source| RunError::Numeric { context, source }
}

/// Largest `|n - n0| / n0` over the samples, computed from values as they
/// are written to disk.
fn written_drift(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.map(|x| fmt_e(x).parse().unwrap_or(f64::NAN)).collect();
    match v.first() {
        Some(&n0) if n0 > 0.0 => v.iter().map(|n| ((n - n0) / n0).abs()).fold(0.0, f64::max),
        _ => 0.0,
    }
}

fn variant_dir(cfg: &RunConfig, p: &PacketSpec) -> PathBuf {
    if cfg.packets.len() == 1 {
        PathBuf::new()
    } else {
        PathBuf::from(format!("q{}_y{}", label(p.q), label(p.y0)))
    }
}

/// Runs `config`, writing into `config.output_dir`. The manifest is written
/// last and only when every stage completed; gate failures still produce a
/// manifest, with the failing gates marked.
pub fn execute(config: &RunConfig) -> Result<RunManifest, RunError> {
    let start = Instant::now();
    let mut out = Output::create(&config.output_dir)?;
    let mut manifest = RunManifest {
        config_text: config.to_text(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        grid: Vec::new(),
        wall_clock: 0.0,
        gates: Vec::new(),
        notes: Vec::new(),
        files: Vec::new(),
    };
    match config.mode {
        Mode::Run1d => run1d(config, &mut out, &mut manifest)?,
        Mode::Run2d => run2d(config, &mut out, &mut manifest)?,
        Mode::Oracle => oracle(config, &mut out, &mut manifest, false)?,
        Mode::Compare => oracle(config, &mut out, &mut manifest, true)?,
        Mode::Analyze => analyze(config, &mut out, &mut manifest)?,
    }
    manifest.wall_clock = start.elapsed().as_secs_f64();
    Ok(manifest.finish(&out)?)
}

fn field_rows(psi: &ComplexField1D) -> impl Iterator<Item = Vec<f64>> + '_ {
    psi.grid().nodes().zip(psi.values()).map(|(x, z)| vec![x, z.re, z.im, z.norm()])
}

fn run1d(cfg: &RunConfig, out: &mut Output, m: &mut RunManifest) -> Result<(), RunError> {
    let d = &cfg.discretization;
    let grid = Grid1D::symmetric(d.half_width, d.dx).map_err(ctx("1D grid"))?;
    m.grid.push(("dx".into(), grid.dx().to_string()));
    m.grid.push(("dt".into(), cfg.evolution.dt.to_string()));
    m.grid.push(("extent".into(), format!("[{}, {}]", grid.x_min(), grid.x_max())));
    m.grid.push(("n_points".into(), grid.n_points().to_string()));
    let mut quantities = Vec::new();
    for (on, q) in [
        (cfg.observables.norm, Quantity::Norm),
        (cfg.observables.energy, Quantity::Energy),
        (cfg.observables.center_amplitude, Quantity::CenterAmplitude),
    ] {
        if on {
            quantities.push(q);
        }
    }
    for p in &cfg.packets {
        let dir = variant_dir(cfg, p);
        let psi = make_packet_1d(p, &grid).map_err(ctx("initial packet"))?;
        let obs = Observers::sampling(&quantities, d.sample_interval).with_snapshots(&cfg.snapshots);
        let ev = evolve(&psi, &cfg.potential, &cfg.evolution, &obs).map_err(ctx(format!("run1d q = {}", p.q)))?;
        for (t, snap) in &ev.snapshots {
            out.csv(dir.join(format!("snapshot_t{}.csv", label(*t))), "x,re,im,abs", field_rows(snap))?;
        }
        if !ev.series.is_empty() {
            let header = std::iter::once("t").chain(ev.series.iter().map(|s| s.quantity.name())).collect::<Vec<_>>().join(",");
            let n = ev.series[0].samples.len();
            let rows = (0..n).map(|i| {
                std::iter::once(ev.series[0].samples[i].0).chain(ev.series.iter().map(|s| s.samples[i].1)).collect()
            });
            out.csv(dir.join("observables.csv"), &header, rows)?;
        }
        if let Some(s) = ev.series(Quantity::Norm) {
            m.gates.push(Gate {
                name: gate_name(&dir, "norm_drift"),
                value: written_drift(s.values()),
                limit: NORM_DRIFT_LIMIT,
            });
        }
    }
    Ok(())
}

fn gate_name(dir: &Path, base: &str) -> String {
    if dir.as_os_str().is_empty() {
        base.to_owned()
    } else {
        format!("{}.{base}", dir.display())
    }
}

fn evolve_radial(cfg: &RunConfig, p: &PacketSpec, l_max: usize, with_series: bool) -> Result<(Evolution2D, Grid1D), RunError> {
    let d = &cfg.discretization;
    let grid = radial_grid(d.r_max, d.dx).map_err(ctx("radial grid"))?;
    let set = make_packet_2d(p, &grid, l_max).map_err(ctx(format!("2D packet at l_max = {l_max}")))?;
    let obs = Observers2D {
        interval: Some(d.sample_interval),
        total_norm: with_series && cfg.observables.norm,
        per_l_norm: with_series && cfg.observables.per_l_norm,
        profiles: cfg.profiles.clone(),
        profile_kind: cfg.profile_kind,
        snapshot_times: if with_series { cfg.snapshots.clone() } else { Vec::new() },
    };
    let ev = evolve_2d(&set, &cfg.potential, &cfg.evolution, &obs).map_err(ctx(format!("run2d q = {}, y0 = {}", p.q, p.y0)))?;
    Ok((ev, grid))
}

fn profile_angles(cfg: &RunConfig) -> Vec<f64> {
    let mut a: Vec<f64> = Vec::new();
    for &(angle, _) in &cfg.profiles {
        if !a.contains(&angle) {
            a.push(angle);
        }
    }
    a
}

fn run2d(cfg: &RunConfig, out: &mut Output, m: &mut RunManifest) -> Result<(), RunError> {
    let d = &cfg.discretization;
    for p in &cfg.packets {
        let dir = variant_dir(cfg, p);
        let (ev, grid) = evolve_radial(cfg, p, d.l_max, true)?;
        if m.grid.is_empty() {
            m.grid.push(("dr".into(), grid.dx().to_string()));
            m.grid.push(("dt".into(), cfg.evolution.dt.to_string()));
            m.grid.push(("r_max".into(), grid.x_max().to_string()));
            m.grid.push(("n_radial".into(), grid.n_points().to_string()));
            m.grid.push(("l_max".into(), d.l_max.to_string()));
        }
        for prof in &ev.profiles {
            let name = format!("profile_a{}_t{}.csv", label(prof.angle), label(prof.time));
            out.csv(dir.join(name), "r,abs", prof.samples.iter().map(|&(r, v)| vec![r, v]))?;
        }
        for (t, set) in &ev.snapshots {
            for a in profile_angles(cfg) {
                let ray = ray_values(set, a, cfg.profile_kind);
                let name = format!("field_a{}_t{}.csv", label(a), label(*t));
                out.csv(dir.join(name), "r,re,im", ray.iter().map(|(r, z)| vec![*r, z.re, z.im]))?;
            }
        }
        if let Some(s) = &ev.total_norm {
            out.csv(dir.join("observables.csv"), "t,norm", s.samples.iter().map(|&(t, v)| vec![t, v]))?;
            m.gates.push(Gate { name: gate_name(&dir, "norm_drift"), value: written_drift(s.values()), limit: NORM_DRIFT_LIMIT });
        }
        if !ev.per_l_norm.is_empty() {
            let rows = ev.per_l_norm.iter().flat_map(|(l, s)| s.samples.iter().map(move |&(t, v)| vec![t, *l as f64, v]));
            out.csv(dir.join("per_l_norm.csv"), "t,l,norm", rows)?;
        }
        if let Some(check) = d.l_max_check {
            let (cev, _) = evolve_radial(cfg, p, check, false)?;
            let dev = profile_deviation(&cev.profiles, &ev.profiles).map_err(ctx("l_max convergence"))?;
            let mut rows = Vec::new();
            for (a, b) in ev.profiles.iter().zip(&cev.profiles) {
                for (x, y) in a.samples.iter().zip(&b.samples) {
                    rows.push(vec![a.angle, a.time, x.0, x.1, y.1]);
                }
            }
            out.csv(dir.join("lmax_check.csv"), "angle,time,r,abs_base,abs_check", rows)?;
            m.gates.push(Gate { name: gate_name(&dir, "lmax_deviation"), value: dev, limit: LMAX_DEVIATION_LIMIT });
            m.notes.push(format!("l_max check {} vs {check}", d.l_max));
        }
    }
    Ok(())
}

/// Oracle on the window; with `compare` also the grid solver from the
/// same band-limited packet, and a deviation report.
fn oracle(cfg: &RunConfig, out: &mut Output, m: &mut RunManifest, compare: bool) -> Result<(), RunError> {
    let p = cfg.packet();
    let d = &cfg.discretization;
    let states = SquareWellStates::new(cfg.potential.depth, cfg.potential.width, cfg.evolution.mass).map_err(ctx("bound states"))?;
    let mut contour = ContourSpec::default_for(p, &states);
    if let Some(pm) = cfg.oracle.p_max {
        contour.p_max = pm;
    }
    contour.n_nodes = cfg.oracle.contour_nodes;
    contour.validate(p, &states).map_err(ctx("contour"))?;
    let box_grid = Grid1D::symmetric(d.half_width, d.dx).map_err(ctx("1D grid"))?;
    let (lo, hi) = cfg.oracle.window;
    let j0 = (0..box_grid.n_points()).find(|&j| box_grid.x(j) >= lo).unwrap_or(0);
    let j1 = (0..box_grid.n_points()).rev().find(|&j| box_grid.x(j) <= hi).unwrap_or(box_grid.n_points() - 1);
    if j1 < j0 + 2 {
        return Err(RunError::Config(format!("window [{lo}, {hi}] holds fewer than 3 grid nodes")));
    }
    let window = Grid1D::new(box_grid.x(j0), box_grid.x(j1), j1 - j0 + 1).map_err(ctx("window grid"))?;
    m.grid.push(("dx".into(), box_grid.dx().to_string()));
    m.grid.push(("window".into(), format!("[{}, {}]", window.x_min(), window.x_max())));
    m.grid.push(("p_max".into(), contour.p_max.to_string()));
    m.grid.push(("bound_states".into(), states.bound_states.len().to_string()));

    let numeric = if compare {
        m.grid.push(("dt".into(), cfg.evolution.dt.to_string()));
        m.grid.push(("extent".into(), format!("[{}, {}]", box_grid.x_min(), box_grid.x_max())));
        let psi = band_limited_packet(p, &contour, &box_grid).map_err(ctx("band-limited packet"))?;
        let obs = Observers::sampling(&[Quantity::Norm], d.sample_interval).with_snapshots(&cfg.snapshots);
        let ev = evolve(&psi, &cfg.potential, &cfg.evolution, &obs).map_err(ctx("numeric run"))?;
        let norms = ev.series(Quantity::Norm).expect("norm sampled");
        out.csv("observables.csv", "t,norm", norms.samples.iter().map(|&(t, v)| vec![t, v]))?;
        m.gates.push(Gate { name: "norm_drift".into(), value: written_drift(norms.values()), limit: NORM_DRIFT_LIMIT });
        Some(ev.snapshots)
    } else {
        None
    };

    let mut report = Vec::new();
    for (k, &t) in cfg.snapshots.iter().enumerate() {
        let exact = evolve_analytic(&states, p, &contour, &window, t).map_err(ctx(format!("oracle at t = {t}")))?;
        out.csv(format!("oracle_t{}.csv", label(t)), "x,re,im,abs", field_rows(&exact))?;
        if let Some(snaps) = &numeric {
            let num = &snaps[k].1;
            let scale = exact.max_abs();
            let (mut worst, mut sq, mut count) = (0.0f64, 0.0, 0usize);
            let mut rows = Vec::with_capacity(window.n_points());
            for (i, x) in window.nodes().enumerate() {
                let a = num.values()[j0 + i].norm();
                let b = exact.values()[i].norm();
                let gibbs = in_gibbs_zone(p, &contour, x);
                if !gibbs {
                    worst = worst.max((a - b).abs());
                    sq += (a - b) * (a - b);
                    count += 1;
                }
                rows.push(vec![x, a, b, (a - b).abs(), if gibbs { 1.0 } else { 0.0 }]);
            }
            out.csv(format!("compare_t{}.csv", label(t)), "x,abs_numeric,abs_oracle,abs_diff,gibbs", rows)?;
            let rms = (sq / count.max(1) as f64).sqrt();
            report.push(vec![t, worst, rms, if scale > 0.0 { worst / scale } else { 0.0 }, scale]);
        }
    }
    if compare {
        out.csv("diff_report.csv", "time,max_deviation,rms_deviation,relative_max_deviation,max_oracle", report)?;
    }
    Ok(())
}

fn csv_files(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    fn walk(base: &Path, rel: &Path, found: &mut Vec<PathBuf>) -> io::Result<()> {
        for entry in fs::read_dir(base.join(rel))? {
            let entry = entry?;
            let name = rel.join(entry.file_name());
            if entry.file_type()?.is_dir() {
                walk(base, &name, found)?;
            } else if name.extension().is_some_and(|e| e == "csv") {
                found.push(name);
            }
        }
        Ok(())
    }
    walk(dir, Path::new(""), &mut found)?;
    found.sort();
    Ok(found)
}

/// Peak lists and fits from an existing run directory.
fn analyze(cfg: &RunConfig, out: &mut Output, m: &mut RunManifest) -> Result<(), RunError> {
    let src = cfg.source_dir.as_ref().expect("validated");
    let manifest_text = fs::read_to_string(src.join(MANIFEST_NAME))
        .map_err(|e| RunError::Config(format!("{} has no manifest ({e}); the run is incomplete", src.display())))?;
    let (_, echoed) = split_manifest(&manifest_text);
    let run = parse_config(echoed).map_err(|e| RunError::Config(format!("source manifest config: {e}")))?;
    m.notes.push(format!("source = {}", src.display()));
    let w = run.potential.width;
    let mut fits: Vec<(String, f64, f64)> = Vec::new();
    for rel in csv_files(src)? {
        let name = rel.file_name().and_then(|n| n.to_str()).unwrap_or("").to_owned();
        let stem = rel.with_extension("").display().to_string();
        let region = if name.starts_with("snapshot_t") {
            reflected_region_1d(w)
        } else if name.starts_with("profile_a") {
            reflected_region_2d(w)
        } else if name == "observables.csv" {
            let (header, rows) = read_csv(&src.join(&rel))?;
            if let Some(col) = header.iter().position(|h| h == "center_amplitude") {
                let series: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[col])).collect();
                let t_final = series.last().map_or(0.0, |s| s.0);
                let p = run.packet();
                let window = default_power_law_window(p.x0, p.q.abs() / run.evolution.mass, t_final);
                match (fit_power_law(&series, window), fit_exponential(&series, window)) {
                    (Ok(pl), Ok(ex)) => {
                        fits.push((format!("{stem}.power_law_exponent"), pl.exponent, pl.residual));
                        fits.push((format!("{stem}.power_law_prefactor"), pl.prefactor, pl.residual));
                        fits.push((format!("{stem}.exponential_rate"), ex.rate, ex.residual));
                        fits.push((format!("{stem}.exponential_prefactor"), ex.prefactor, ex.residual));
                    }
                    (Err(e), _) | (_, Err(e)) => m.notes.push(format!("{stem}: decay fit not applicable: {e}")),
                }
            }
            continue;
        } else {
            continue;
        };
        let (header, rows) = read_csv(&src.join(&rel))?;
        let col = header.iter().position(|h| h == "abs").ok_or_else(|| RunError::Config(format!("{stem} has no abs column")))?;
        let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r[col]).collect();
        let train = match detect_peaks(&xs, &ys, region, DEFAULT_PROMINENCE) {
            Ok(t) => t,
            Err(e) => {
                m.notes.push(format!("{stem}: peaks not applicable: {e}"));
                continue;
            }
        };
        let peak_rows = train.positions.iter().zip(&train.heights).enumerate().map(|(i, (x, h))| vec![i as f64, *x, *h]);
        out.csv(format!("{}_peaks.csv", stem), "index,position,height", peak_rows)?;
        match fit_envelope(&xs, &ys, region) {
            Ok(f) => {
                fits.push((format!("{stem}.envelope_lambda"), f.lambda, f.residual));
                fits.push((format!("{stem}.envelope_k"), f.k, f.residual));
                fits.push((format!("{stem}.envelope_amplitude"), f.amplitude, f.residual));
            }
            Err(e) => m.notes.push(format!("{stem}: envelope not applicable: {e}")),
        }
    }
    let mut text = String::from("quantity,value,residual\n");
    for (q, v, r) in &fits {
        text.push_str(&format!("{q},{},{}\n", fmt_e(*v), fmt_e(*r)));
    }
    out.text("fits.csv", &text)?;
    Ok(())
}
