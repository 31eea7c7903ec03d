//! Initial packets and potential wells.
//!
//! Wells are stored with a positive `depth` and evaluated with a minus sign,
//! so every potential here is attractive, bounded in `[-depth, 0]` and decays
//! to zero away from the origin.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::core1d::{norm, ComplexField1D, Grid1D};
use crate::error::{config, Error, Result};
use crate::radial2d::PartialWaveSet;

/// Tail mass a 1D packet may leave outside the grid.
pub const MAX_TAIL_MASS_1D: f64 = 1e-10;
/// Tail mass a 2D packet may leave beyond the radial grid.
pub const MAX_TAIL_MASS_2D: f64 = 1e-8;
/// Largest acceptable norm fraction lost to the angular truncation.
pub const MAX_TRUNCATION_RESIDUAL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketShape {
    Gaussian,
    Square,
    Lorentzian,
    /// `exp(-|x - x0| / width)` envelope. The exact form used in the
    /// literature for this shape is not known; this one is a stand-in.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PotentialShape {
    Gaussian,
    Square,
    Lorentzian,
}

impl PacketShape {
    pub fn name(self) -> &'static str {
        match self {
            PacketShape::Gaussian => "gaussian",
            PacketShape::Square => "square",
            PacketShape::Lorentzian => "lorentzian",
            PacketShape::Exponential => "exponential",
        }
    }
}

impl PotentialShape {
    pub fn name(self) -> &'static str {
        match self {
            PotentialShape::Gaussian => "gaussian",
            PotentialShape::Square => "square",
            PotentialShape::Lorentzian => "lorentzian",
        }
    }
}

impl fmt::Display for PacketShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for PotentialShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PacketShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(PacketShape::Gaussian),
            "square" => Ok(PacketShape::Square),
            "lorentzian" => Ok(PacketShape::Lorentzian),
            "exponential" => Ok(PacketShape::Exponential),
            other => config(format!("unknown packet shape `{other}`")),
        }
    }
}

impl FromStr for PotentialShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(PotentialShape::Gaussian),
            "square" => Ok(PotentialShape::Square),
            "lorentzian" => Ok(PotentialShape::Lorentzian),
            other => config(format!("unknown potential shape `{other}`")),
        }
    }
}

/// Initial wave packet. `width` is the Gaussian width Δ, the half-width d of
/// a square packet, or the scale length of the Lorentzian and exponential
/// envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketSpec {
    pub shape: PacketShape,
    /// Mean wavenumber, q = m v.
    pub q: f64,
    pub x0: f64,
    /// Impact parameter; only used in two dimensions.
    pub y0: f64,
    pub width: f64,
}

impl PacketSpec {
    pub fn gaussian(q: f64, x0: f64, width: f64) -> Self {
        PacketSpec { shape: PacketShape::Gaussian, q, x0, y0: 0.0, width }
    }

    pub fn square(q: f64, x0: f64, half_width: f64) -> Self {
        PacketSpec { shape: PacketShape::Square, q, x0, y0: 0.0, width: half_width }
    }

    pub fn with_impact(mut self, y0: f64) -> Self {
        self.y0 = y0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.width.is_finite()) {
            return config(format!("packet width must be positive, got {}", self.width));
        }
        if !(self.q.is_finite() && self.x0.is_finite() && self.y0.is_finite()) {
            return config("packet q, x0 and y0 must be finite");
        }
        Ok(())
    }

    /// Unnormalized amplitude at `x`.
    pub fn amplitude(&self, x: f64) -> Complex64 {
        let s = x - self.x0;
        let phase = Complex64::from_polar(1.0, self.q * s);
        let envelope = match self.shape {
            PacketShape::Gaussian => (-s * s / (4.0 * self.width * self.width)).exp(),
            PacketShape::Square => {
                let d = self.width;
                let edge_tol = 1e-9 * d;
                if (s.abs() - d).abs() <= edge_tol {
                    // Theta(0) = 1/2, the value a Fourier synthesis converges to.
                    0.5
                } else if s.abs() < d {
                    1.0
                } else {
                    0.0
                }
            }
            PacketShape::Lorentzian => 1.0 / (1.0 + s * s / (self.width * self.width)),
            PacketShape::Exponential => (-s.abs() / self.width).exp(),
        };
        phase * envelope
    }

    /// Fraction of the packet's probability lying farther than `distance`
    /// from its center on one side. Gaussian uses the bound
    /// erfc(z) <= exp(-z^2); the others are exact.
    fn one_sided_tail(&self, distance: f64) -> f64 {
        if distance <= 0.0 {
            return 0.5;
        }
        let w = self.width;
        match self.shape {
            PacketShape::Gaussian => 0.5 * (-distance * distance / (2.0 * w * w)).exp(),
            PacketShape::Square => {
                if distance >= w {
                    0.0
                } else {
                    0.5 * (w - distance) / w
                }
            }
            PacketShape::Exponential => 0.5 * (-2.0 * distance / w).exp(),
            PacketShape::Lorentzian => {
                // Antiderivative of 1/(1+u^2)^2 is (u/(1+u^2) + atan u)/2.
                let f = |u: f64| 0.5 * (u / (1.0 + u * u) + u.atan());
                let total = f(f64::INFINITY);
                let u = distance / w;
                0.5 * (total - f(u)) / total
            }
        }
    }
}

/// Attractive well centered at the origin. `width` is the Gaussian and
/// Lorentzian scale w or the half-width a of the square well.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec {
    pub shape: PotentialShape,
    pub depth: f64,
    pub width: f64,
}

impl PotentialSpec {
    pub fn gaussian(depth: f64, width: f64) -> Self {
        PotentialSpec { shape: PotentialShape::Gaussian, depth, width }
    }

    pub fn square(depth: f64, half_width: f64) -> Self {
        PotentialSpec { shape: PotentialShape::Square, depth, width: half_width }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.depth >= 0.0 && self.depth.is_finite()) {
            return config(format!("well depth must be non-negative, got {}", self.depth));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return config(format!("well width must be positive, got {}", self.width));
        }
        Ok(())
    }

    /// Potential energy at `x` (or radius `r`).
    pub fn eval(&self, x: f64) -> f64 {
        eval_potential(self, x)
    }

    /// Potential sampled at every node of `grid`.
    pub fn sample(&self, grid: &Grid1D) -> Vec<f64> {
        grid.nodes().map(|x| self.eval(x)).collect()
    }
}

pub fn eval_potential(spec: &PotentialSpec, x: f64) -> f64 {
    let v0 = spec.depth;
    let w = spec.width;
    match spec.shape {
        PotentialShape::Gaussian => -v0 * (-x * x / (w * w)).exp(),
        PotentialShape::Square => {
            if (x.abs() - w).abs() <= 1e-9 * w {
                -0.5 * v0
            } else if x.abs() < w {
                -v0
            } else {
                0.0
            }
        }
        PotentialShape::Lorentzian => -v0 / (1.0 + x * x / (w * w)),
    }
}

/// Samples `spec` on `grid` and normalizes the result to unit norm by
/// trapezoidal quadrature.
pub fn make_packet_1d(spec: &PacketSpec, grid: &Grid1D) -> Result<ComplexField1D> {
    spec.validate()?;
    if spec.x0 < grid.x_min() || spec.x0 > grid.x_max() {
        return config(format!(
            "packet center {} outside grid [{}, {}]",
            spec.x0,
            grid.x_min(),
            grid.x_max()
        ));
    }
    let tail = spec.one_sided_tail(spec.x0 - grid.x_min()) + spec.one_sided_tail(grid.x_max() - spec.x0);
    if tail > MAX_TAIL_MASS_1D {
        return config(format!(
            "packet tail mass {tail:.3e} outside grid exceeds {MAX_TAIL_MASS_1D:.0e}; enlarge the box"
        ));
    }
    let mut values: Vec<Complex64> = grid.nodes().map(|x| spec.amplitude(x)).collect();
    // Hard-wall nodes carry no amplitude.
    let last = values.len() - 1;
    values[0] = Complex64::new(0.0, 0.0);
    values[last] = Complex64::new(0.0, 0.0);
    let mut field = ComplexField1D::new(grid.clone(), values)?;
    let n = norm(&field);
    if !(n > 0.0) {
        return config("packet has no amplitude on the grid (narrower than one cell?)");
    }
    field.scale(1.0 / n.sqrt());
    Ok(field)
}

/// Number of angular quadrature points used for a given truncation.
pub fn angular_points(l_max: usize) -> usize {
    (8 * l_max).max(256)
}

/// Radial amplitudes of the initial 2D Gaussian packet projected onto
/// angular momenta `-l_max..=l_max`.
///
/// Each `psi_l(r) = sqrt(r) (1/2pi) \int Phi_0(r, phi) e^{-i l phi} dphi`,
/// computed with a uniform angular rule (FFT). The set is normalized so that
/// the untruncated field carries `sum_l \int |psi_l|^2 dr = 1`; the norm
/// fraction beyond `l_max` is the truncation residual.
pub fn make_packet_2d(spec: &PacketSpec, radial_grid: &Grid1D, l_max: usize) -> Result<PartialWaveSet> {
    let (set, residual) = project_packet_2d(spec, radial_grid, l_max)?;
    if residual > MAX_TRUNCATION_RESIDUAL {
        return Err(Error::LmaxInsufficient { l_max, residual, limit: MAX_TRUNCATION_RESIDUAL });
    }
    Ok(set)
}

/// Like [`make_packet_2d`] but returns the truncation residual instead of
/// failing on it.
pub fn project_packet_2d(spec: &PacketSpec, radial_grid: &Grid1D, l_max: usize) -> Result<(PartialWaveSet, f64)> {
    spec.validate()?;
    if spec.shape != PacketShape::Gaussian {
        return Err(Error::UnsupportedShape(format!(
            "{} packets are not available in two dimensions",
            spec.shape
        )));
    }
    crate::radial2d::check_radial_grid(radial_grid)?;
    let center = spec.x0.hypot(spec.y0);
    let tail = spec.one_sided_tail(radial_grid.x_max() - center);
    if tail > MAX_TAIL_MASS_2D {
        return config(format!(
            "packet tail mass {tail:.3e} beyond r_max = {} exceeds {MAX_TAIL_MASS_2D:.0e}",
            radial_grid.x_max()
        ));
    }

    let n_phi = angular_points(l_max);
    let n_r = radial_grid.n_points();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_phi);
    let cos_sin: Vec<(f64, f64)> = (0..n_phi)
        .map(|k| {
            let phi = 2.0 * PI * k as f64 / n_phi as f64;
            (phi.cos(), phi.sin())
        })
        .collect();

    let n_waves = 2 * l_max + 1;
    let mut waves = vec![vec![Complex64::new(0.0, 0.0); n_r]; n_waves];
    let mut full_norm = 0.0;
    let mut buf = vec![Complex64::new(0.0, 0.0); n_phi];
    let four_delta_sq = 4.0 * spec.width * spec.width;
    for (j, r) in radial_grid.nodes().enumerate() {
        if j == n_r - 1 {
            continue;
        }
        for (slot, &(c, s)) in buf.iter_mut().zip(&cos_sin) {
            let x = r * c - spec.x0;
            let y = r * s - spec.y0;
            *slot = Complex64::from_polar((-(x * x + y * y) / four_delta_sq).exp(), spec.q * x);
        }
        fft.process(&mut buf);
        let sqrt_r = r.sqrt();
        let scale = sqrt_r / n_phi as f64;
        // Discrete Parseval: (1/n) sum_k |f_k|^2 = sum_all_l |c_l|^2.
        let all_modes: f64 = buf.iter().map(|z| z.norm_sqr()).sum::<f64>() * scale * scale;
        full_norm += radial_grid.dx() * all_modes;
        for (idx, wave) in waves.iter_mut().enumerate() {
            let l = idx as i64 - l_max as i64;
            let bin = l.rem_euclid(n_phi as i64) as usize;
            wave[j] = buf[bin] * scale;
        }
    }
    if !(full_norm > 0.0) {
        return config("2D packet has no amplitude on the radial grid");
    }
    let c = 1.0 / full_norm.sqrt();
    for wave in &mut waves {
        for z in wave.iter_mut() {
            *z *= c;
        }
    }
    if spec.y0 == 0.0 {
        // On-axis packets are mirror symmetric, psi_{-l} = psi_l; remove the
        // rounding-level asymmetry so the symmetry is exact.
        for l in 1..=l_max {
            let (lo, hi) = waves.split_at_mut(l_max + l);
            let minus = &mut lo[l_max - l];
            let plus = &mut hi[0];
            for (a, b) in minus.iter_mut().zip(plus.iter_mut()) {
                let mean = (*a + *b) * 0.5;
                *a = mean;
                *b = mean;
            }
        }
    }
    let set = PartialWaveSet::from_waves(radial_grid.clone(), l_max, waves)?;
    let residual = 1.0 - set.total_norm();
    Ok((set, residual))
}
