//! Diagnostics extracted from simulated profiles and time series: peak
//! trains, the `exp(-lambda |x|) sin^2(k x)` envelope, power-law decay of the
//! central amplitude, train speeds and the wavenumber inside the well.

use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector4};

use crate::core1d::ComplexField1D;
use crate::error::{config, Error, Result};

/// Default peak prominence, as a fraction of the regional maximum.
pub const DEFAULT_PROMINENCE: f64 = 0.05;
/// Reflected-norm fraction that marks the emergence of the reflected train.
pub const FORMATION_FRACTION: f64 = 0.1;

/// Left edge of the 1D reflected region is `-inf`; the right edge is `-5 w`.
pub fn reflected_region_1d(well_width: f64) -> (f64, f64) {
    (f64::NEG_INFINITY, -5.0 * well_width)
}

/// In 2D the backward ray is analyzed for `r > 2.5 w`.
pub fn reflected_region_2d(well_width: f64) -> (f64, f64) {
    (2.5 * well_width, f64::INFINITY)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakTrain {
    /// Peak locations, ascending.
    pub positions: Vec<f64>,
    pub heights: Vec<f64>,
    /// Topographic prominence of each peak.
    pub prominences: Vec<f64>,
    /// `None` with fewer than two peaks.
    pub mean_spacing: Option<f64>,
    /// Standard deviation over mean of the spacings; `None` with fewer than
    /// two peaks.
    pub spacing_cv: Option<f64>,
}

impl PeakTrain {
    pub fn count(&self) -> usize {
        self.positions.len()
    }
}

fn region_indices(xs: &[f64], region: (f64, f64)) -> Result<(usize, usize)> {
    let lo = xs.iter().position(|&x| x >= region.0);
    let hi = xs.iter().rposition(|&x| x <= region.1);
    match (lo, hi) {
        (Some(a), Some(b)) if b >= a + 2 => Ok((a, b + 1)),
        _ => config(format!("region [{}, {}] holds fewer than three samples", region.0, region.1)),
    }
}

/// Local maxima of `ys` inside `region` whose height and topographic
/// prominence both exceed `prominence` times the regional maximum.
///
/// Prominence is measured as in `scipy.signal.find_peaks`: the drop from
/// the peak to the higher of the two lowest points separating it from
/// taller terrain (or the region edge). Maxima on the region boundary are
/// not peaks.
pub fn detect_peaks(xs: &[f64], ys: &[f64], region: (f64, f64), prominence: f64) -> Result<PeakTrain> {
    if xs.len() != ys.len() {
        return config("profile abscissa and values differ in length");
    }
    if !(prominence > 0.0 && prominence < 1.0) {
        return config(format!("prominence must lie in (0, 1), got {prominence}"));
    }
    let (a, b) = region_indices(xs, region)?;
    let x = &xs[a..b];
    let y = &ys[a..b];
    let peak_max = y.iter().copied().fold(0.0, f64::max);
    let threshold = prominence * peak_max;

    let mut candidates = Vec::new();
    let mut i = 1;
    while i + 1 < y.len() {
        if y[i] > y[i - 1] {
            // Walk across a plateau.
            let mut j = i;
            while j + 1 < y.len() && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < y.len() && y[j + 1] < y[i] {
                candidates.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }

    let mut train = PeakTrain {
        positions: Vec::new(),
        heights: Vec::new(),
        prominences: Vec::new(),
        mean_spacing: None,
        spacing_cv: None,
    };
    for p in candidates {
        let h = y[p];
        if h <= threshold {
            continue;
        }
        let mut left_min = h;
        for k in (0..p).rev() {
            if y[k] > h {
                break;
            }
            left_min = left_min.min(y[k]);
        }
        let mut right_min = h;
        for &v in &y[p + 1..] {
            if v > h {
                break;
            }
            right_min = right_min.min(v);
        }
        let prom = h - left_min.max(right_min);
        if prom > threshold {
            train.positions.push(x[p]);
            train.heights.push(h);
            train.prominences.push(prom);
        }
    }
    if train.positions.len() >= 2 {
        let spacings: Vec<f64> = train.positions.windows(2).map(|w| w[1] - w[0]).collect();
        let mean = spacings.iter().sum::<f64>() / spacings.len() as f64;
        let var = spacings.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / spacings.len() as f64;
        train.mean_spacing = Some(mean);
        train.spacing_cv = Some(var.sqrt() / mean);
    }
    Ok(train)
}

/// Least-squares fit of `amplitude * exp(-lambda |x|) * sin^2(k x + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeFit {
    pub lambda: f64,
    pub k: f64,
    pub amplitude: f64,
    /// Offset of the train's nodes from `x = 0`.
    pub phase: f64,
    /// RMS misfit relative to the regional maximum.
    pub residual: f64,
    pub iterations: usize,
}

fn envelope_model(p: &Vector4<f64>, x: f64) -> (f64, Vector4<f64>) {
    let (amp, lambda, k, phase) = (p[0], p[1], p[2], p[3]);
    let decay = (-lambda * x.abs()).exp();
    let arg = k * x + phase;
    let s = arg.sin();
    let s2 = s * s;
    let ds2 = 2.0 * s * arg.cos();
    let f = amp * decay * s2;
    let grad = Vector4::new(decay * s2, -x.abs() * f, amp * decay * ds2 * x, amp * decay * ds2);
    (f, grad)
}

/// Fits the reflected-train envelope over `region`. Requires at least three
/// peaks (at the default prominence); fewer yields [`Error::NotApplicable`],
/// which marks the wide-packet regime rather than a failure.
pub fn fit_envelope(xs: &[f64], ys: &[f64], region: (f64, f64)) -> Result<EnvelopeFit> {
    let train = detect_peaks(xs, ys, region, DEFAULT_PROMINENCE)?;
    if train.count() < 3 {
        return Err(Error::NotApplicable(format!("{} peaks in region, envelope needs 3", train.count())));
    }
    let (a, b) = region_indices(xs, region)?;
    let x = &xs[a..b];
    let y = &ys[a..b];
    let scale = y.iter().copied().fold(0.0, f64::max);

    // Seeds: k from the spacing, lambda and amplitude from a log-linear fit of
    // the peak heights, phase placing the tallest peak on a maximum of sin^2.
    let k0 = PI / train.mean_spacing.expect("three peaks have a spacing");
    let ax: Vec<f64> = train.positions.iter().map(|p| p.abs()).collect();
    let ly: Vec<f64> = train.heights.iter().map(|h| h.ln()).collect();
    let (slope, intercept) = linear_regression(&ax, &ly);
    let lambda0 = (-slope).max(1e-6);
    let amp0 = intercept.exp();
    let tallest = train
        .heights
        .iter()
        .enumerate()
        .max_by(|p, q| p.1.total_cmp(q.1))
        .map(|(i, _)| train.positions[i])
        .unwrap();
    let phase0 = (0.5 * PI - k0 * tallest).rem_euclid(PI);
    let mut p = Vector4::new(amp0, lambda0, k0, phase0);

    let cost = |p: &Vector4<f64>| -> f64 { x.iter().zip(y).map(|(&xi, &yi)| (envelope_model(p, xi).0 - yi).powi(2)).sum() };
    let mut current = cost(&p);
    let mut mu = 1e-3;
    let mut iterations = 0;
    for it in 0..500 {
        iterations = it + 1;
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for (&xi, &yi) in x.iter().zip(y) {
            let (f, g) = envelope_model(&p, xi);
            jtj += g * g.transpose();
            jtr += g * (f - yi);
        }
        let mut improved = false;
        while mu < 1e12 {
            let mut damped = jtj;
            for d in 0..4 {
                damped[(d, d)] += mu * jtj[(d, d)].max(1e-300);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                mu *= 10.0;
                continue;
            };
            let trial = p + step;
            let c = cost(&trial);
            if c < current {
                let rel = (current - c) / current.max(1e-300);
                p = trial;
                current = c;
                mu = (mu / 10.0).max(1e-12);
                improved = true;
                if rel < 1e-15 || step.norm() < 1e-14 * p.norm() {
                    improved = false;
                }
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let residual = (current / x.len() as f64).sqrt() / scale;
    let mut k = p[2];
    let mut phase = p[3];
    if k < 0.0 {
        // sin^2 is even: (k, phase) and (-k, -phase) describe the same curve.
        k = -k;
        phase = -phase;
    }
    Ok(EnvelopeFit { lambda: p[1], k, amplitude: p[0], phase: phase.rem_euclid(PI), residual, iterations })
}

fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `|psi(0)| = prefactor / t^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub fit_window: (f64, f64),
    pub samples: usize,
    /// RMS of the residuals of `ln |psi(0)|`.
    pub residual: f64,
}

/// `value = prefactor * exp(-rate * t)`, the competing decay model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFit {
    pub rate: f64,
    pub prefactor: f64,
    pub fit_window: (f64, f64),
    pub residual: f64,
}

pub const MIN_FIT_SAMPLES: usize = 20;

fn window_samples(series: &[(f64, f64)], window: (f64, f64)) -> Result<(Vec<f64>, Vec<f64>)> {
    let picked: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t >= window.0 && *t <= window.1).collect();
    if picked.len() < MIN_FIT_SAMPLES {
        return Err(Error::Window(format!(
            "{} samples in [{}, {}], need at least {MIN_FIT_SAMPLES}",
            picked.len(),
            window.0,
            window.1
        )));
    }
    if let Some((t, v)) = picked.iter().find(|(t, v)| !(*v > 0.0) || !(*t > 0.0)) {
        return Err(Error::Window(format!("non-positive sample ({t}, {v}) in fit window")));
    }
    Ok(picked.into_iter().unzip())
}

fn rms_residual(x: &[f64], y: &[f64], slope: f64, intercept: f64) -> f64 {
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - (intercept + slope * a)).powi(2)).sum();
    (ss / x.len() as f64).sqrt()
}

/// Ordinary least squares of `ln value` against `ln t` over `window`.
pub fn fit_power_law(series: &[(f64, f64)], window: (f64, f64)) -> Result<PowerLawFit> {
    let (t, v) = window_samples(series, window)?;
    let lt: Vec<f64> = t.iter().map(|a| a.ln()).collect();
    let lv: Vec<f64> = v.iter().map(|a| a.ln()).collect();
    let (slope, intercept) = linear_regression(&lt, &lv);
    Ok(PowerLawFit {
        exponent: -slope,
        prefactor: intercept.exp(),
        fit_window: window,
        samples: t.len(),
        residual: rms_residual(&lt, &lv, slope, intercept),
    })
}

/// Ordinary least squares of `ln value` against `t` over `window`.
pub fn fit_exponential(series: &[(f64, f64)], window: (f64, f64)) -> Result<ExponentialFit> {
    let (t, v) = window_samples(series, window)?;
    let lv: Vec<f64> = v.iter().map(|a| a.ln()).collect();
    let (slope, intercept) = linear_regression(&t, &lv);
    Ok(ExponentialFit {
        rate: -slope,
        prefactor: intercept.exp(),
        fit_window: window,
        residual: rms_residual(&t, &lv, slope, intercept),
    })
}

/// Default power-law window: from twice the transit time to the end.
pub fn default_power_law_window(x0: f64, speed: f64, t_final: f64) -> (f64, f64) {
    (2.0 * x0.abs() / speed, t_final)
}

/// A profile sampled at one time.
#[derive(Debug, Clone, Copy)]
pub struct TimedProfile<'a> {
    pub time: f64,
    pub xs: &'a [f64],
    pub ys: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpeed {
    /// Velocity of the `|psi|^2`-weighted centroid over the region.
    pub speed: f64,
    pub centroids: (f64, f64),
    /// `k / m` from the envelope fit of the later profile, when one applies.
    pub k_over_m: Option<f64>,
    pub warning: Option<String>,
}

fn centroid(xs: &[f64], ys: &[f64], region: (f64, f64)) -> Result<f64> {
    let (a, b) = region_indices(xs, region)?;
    let (mut w, mut wx) = (0.0, 0.0);
    for (x, y) in xs[a..b].iter().zip(&ys[a..b]) {
        let p = y * y;
        w += p;
        wx += p * x;
    }
    if !(w > 0.0) {
        return Err(Error::NotApplicable("no amplitude in region".into()));
    }
    Ok(wx / w)
}

/// Centroid speed of the part of the profile inside `region` between two
/// times.
pub fn train_speed(first: TimedProfile<'_>, second: TimedProfile<'_>, region: (f64, f64), mass: f64) -> Result<TrainSpeed> {
    if !(second.time > first.time) {
        return config(format!("train speed needs t1 < t2, got {} and {}", first.time, second.time));
    }
    let c1 = centroid(first.xs, first.ys, region)?;
    let c2 = centroid(second.xs, second.ys, region)?;
    let speed = (c2 - c1) / (second.time - first.time);
    let n1 = detect_peaks(first.xs, first.ys, region, DEFAULT_PROMINENCE)?.count();
    let n2 = detect_peaks(second.xs, second.ys, region, DEFAULT_PROMINENCE)?.count();
    let warning = (n1 < 2 || n2 < 2).then(|| format!("peak trains not matchable ({n1} and {n2} peaks)"));
    let k_over_m = fit_envelope(second.xs, second.ys, region).ok().map(|f| f.k / mass);
    Ok(TrainSpeed { speed, centroids: (c1, c2), k_over_m, warning })
}

/// Fraction of the norm of `psi` lying within `region`.
pub fn region_fraction(psi: &ComplexField1D, region: (f64, f64)) -> f64 {
    let g = psi.grid();
    let (mut inside, mut total) = (0.0, 0.0);
    for (j, z) in psi.values().iter().enumerate() {
        let w = g.trapezoid_weight(j) * z.norm_sqr();
        total += w;
        if (region.0..=region.1).contains(&g.x(j)) {
            inside += w;
        }
    }
    if total > 0.0 {
        inside / total
    } else {
        0.0
    }
}

/// First time at which a `(t, reflected fraction)` series reaches
/// `threshold`.
pub fn formation_time(fractions: &[(f64, f64)], threshold: f64) -> Option<f64> {
    fractions.iter().find(|(_, f)| *f >= threshold).map(|(t, _)| *t)
}

/// `v = k(t_formation) / m`.
pub fn formation_speed(k_at_formation: f64, mass: f64) -> f64 {
    k_at_formation / mass
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorWavenumber {
    pub k_prime: f64,
    /// `k' w / pi`, rounded.
    pub n_wavelengths: i64,
    /// `k'^2 - 2 m V0`; may be negative and is reported as is.
    pub implied_k_squared: f64,
    pub zero_crossings: usize,
}

pub const MIN_INTERIOR_SAMPLES: usize = 40;

/// Wavenumber of the standing wave inside a well of width `w`, from the zero
/// crossings of `Re Phi` on `0 < r < 2 w`.
pub fn interior_wavenumber(rs: &[f64], re_phi: &[f64], well_width: f64, mass: f64, depth: f64) -> Result<InteriorWavenumber> {
    if rs.len() != re_phi.len() {
        return config("radii and values differ in length");
    }
    let limit = 2.0 * well_width;
    let pts: Vec<(f64, f64)> = rs.iter().copied().zip(re_phi.iter().copied()).filter(|(r, _)| *r > 0.0 && *r < limit).collect();
    if pts.len() < MIN_INTERIOR_SAMPLES {
        return config(format!("{} samples inside (0, {limit}), need {MIN_INTERIOR_SAMPLES}", pts.len()));
    }
    let mut crossings = Vec::new();
    for w in pts.windows(2) {
        let ((r0, f0), (r1, f1)) = (w[0], w[1]);
        if f0 == 0.0 {
            crossings.push(r0);
        } else if f0 * f1 < 0.0 {
            crossings.push(r0 + (r1 - r0) * f0 / (f0 - f1));
        }
    }
    if crossings.len() < 2 {
        return Err(Error::NotApplicable(format!("{} zero crossings inside the well", crossings.len())));
    }
    let spacing = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
    let k_prime = PI / spacing;
    Ok(InteriorWavenumber {
        k_prime,
        n_wavelengths: (k_prime * well_width / PI).round() as i64,
        implied_k_squared: k_prime * k_prime - 2.0 * mass * depth,
        zero_crossings: crossings.len(),
    })
}
