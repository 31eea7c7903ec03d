//! Semi-analytic evolution of a square packet on a square well by
//! superposition of stationary scattering states along a momentum contour
//! that passes above the bound-state poles.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::core1d::{ComplexField1D, Grid1D};
use crate::error::{config, Error, Result};
use crate::model::{PacketShape, PacketSpec};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundState {
    pub kappa: f64,
    /// Binding energy, `-kappa^2 / 2m`.
    pub energy: f64,
    pub parity: Parity,
}

/// Square well of depth `depth` on `|x| < half_width` together with its
/// bound-state ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareWellStates {
    pub depth: f64,
    pub half_width: f64,
    pub mass: f64,
    pub bound_states: Vec<BoundState>,
}

/// Coefficients of the left-incident state `e^{ipx} + R e^{-ipx}` (left),
/// `A e^{iKx} + B e^{-iKx}` (inside), `T e^{ipx}` (right).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringCoefficients {
    pub r: Complex64,
    pub t: Complex64,
    pub a: Complex64,
    pub b: Complex64,
    pub k_inside: Complex64,
}

impl SquareWellStates {
    pub fn new(depth: f64, half_width: f64, mass: f64) -> Result<Self> {
        if !(depth >= 0.0 && depth.is_finite()) {
            return config(format!("well depth must be non-negative, got {depth}"));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return config(format!("well half-width must be positive, got {half_width}"));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return config(format!("mass must be positive, got {mass}"));
        }
        let mut states = SquareWellStates { depth, half_width, mass, bound_states: Vec::new() };
        states.bound_states = states.find_bound_states();
        Ok(states)
    }

    /// `floor(1 + 2 a sqrt(2 m V0) / pi)`, or zero for a flat well.
    pub fn analytic_count(&self) -> usize {
        if self.depth == 0.0 {
            return 0;
        }
        (1.0 + 2.0 * self.half_width * (2.0 * self.mass * self.depth).sqrt() / PI).floor() as usize
    }

    pub fn max_kappa(&self) -> f64 {
        self.bound_states.iter().map(|b| b.kappa).fold(0.0, f64::max)
    }

    fn kappa_max(&self) -> f64 {
        (2.0 * self.mass * self.depth).sqrt()
    }

    /// Real form of the matching determinant at `p = i kappa`; its zeros are
    /// the bound states of both parities.
    fn bound_determinant(&self, kappa: f64) -> f64 {
        let k = (self.kappa_max().powi(2) - kappa * kappa).max(0.0).sqrt();
        let two_ka = 2.0 * k * self.half_width;
        2.0 * kappa * k * two_ka.cos() - (k * k - kappa * kappa) * two_ka.sin()
    }

    fn find_bound_states(&self) -> Vec<BoundState> {
        let kmax = self.kappa_max();
        if kmax == 0.0 {
            return Vec::new();
        }
        // The determinant oscillates with period pi / (2a) in K; scan finely
        // enough to separate neighboring roots.
        let n_scan = 200 * (self.analytic_count() + 1) * 4;
        let f = |kappa: f64| self.bound_determinant(kappa);
        let mut roots = Vec::new();
        let mut prev_k = 0.0;
        let mut prev_f = f(1e-14 * kmax);
        for i in 1..=n_scan {
            let kappa = kmax * i as f64 / n_scan as f64;
            let val = f(kappa);
            if val == 0.0 {
                if i < n_scan {
                    roots.push(kappa);
                }
            } else if prev_f * val < 0.0 {
                roots.push(bisect(&f, prev_k, kappa));
            }
            if val != 0.0 {
                prev_f = val;
            }
            prev_k = kappa;
        }
        let mut states: Vec<BoundState> = roots
            .into_iter()
            .filter(|&kappa| kappa > 0.0 && kappa < kmax)
            .map(|kappa| {
                let k = (kmax * kmax - kappa * kappa).sqrt();
                let ka = k * self.half_width;
                let even = (k * ka.sin() - kappa * ka.cos()).abs();
                let odd = (k * ka.cos() + kappa * ka.sin()).abs();
                BoundState {
                    kappa,
                    energy: -kappa * kappa / (2.0 * self.mass),
                    parity: if even <= odd { Parity::Even } else { Parity::Odd },
                }
            })
            .collect();
        states.sort_by(|a, b| b.kappa.total_cmp(&a.kappa));
        states
    }

    /// Residual of the parity-specific matching condition, normalized by the
    /// interior wavenumber scale.
    pub fn bound_state_residual(&self, state: &BoundState) -> f64 {
        let kmax = self.kappa_max();
        let k = (kmax * kmax - state.kappa * state.kappa).max(0.0).sqrt();
        let ka = k * self.half_width;
        let r = match state.parity {
            Parity::Even => k * ka.sin() - state.kappa * ka.cos(),
            Parity::Odd => k * ka.cos() + state.kappa * ka.sin(),
        };
        r.abs() / kmax
    }

    pub fn k_inside(&self, p: Complex64) -> Complex64 {
        (p * p + 2.0 * self.mass * self.depth).sqrt()
    }

    /// Denominator shared by every scattering coefficient.
    pub fn denominator(&self, p: Complex64) -> Complex64 {
        let k = self.k_inside(p);
        let two_ka = 2.0 * k * self.half_width;
        2.0 * p * k * two_ka.cos() - I * (p * p + k * k) * two_ka.sin()
    }

    /// Derivative of [`Self::denominator`] with respect to `p`.
    pub fn denominator_derivative(&self, p: Complex64) -> Complex64 {
        let a = self.half_width;
        let k = self.k_inside(p);
        let (c, s) = ((2.0 * k * a).cos(), (2.0 * k * a).sin());
        2.0 * c * (k + p * p / k) - 4.0 * a * p * p * s - 4.0 * I * p * s - 2.0 * I * a * (p * p + k * k) * (p / k) * c
    }

    /// Coefficients multiplied by the denominator: entire functions of `p`.
    fn scaled_coefficients(&self, p: Complex64) -> (Complex64, Complex64, Complex64, Complex64, Complex64) {
        let a = self.half_width;
        let k = self.k_inside(p);
        let e_pa = (-I * p * a).exp();
        let t = 2.0 * p * k * e_pa * e_pa;
        let r = I * e_pa * e_pa * (k * k - p * p) * (2.0 * k * a).sin();
        let amp_a = p * e_pa * (-I * k * a).exp() * (k + p);
        let amp_b = p * e_pa * (I * k * a).exp() * (k - p);
        (r, t, amp_a, amp_b, k)
    }

    /// Scattering coefficients at complex momentum `p`. At `p = 0` these are
    /// the finite limits `R = -1`, `T = 0`; a zero-energy resonance is a
    /// domain error.
    pub fn coefficients(&self, p: Complex64) -> Result<ScatteringCoefficients> {
        let d = self.denominator(p);
        if d.norm() == 0.0 || !d.is_finite() {
            return Err(Error::Domain(format!("scattering denominator vanishes at p = {p}")));
        }
        let (r, t, a, b, k) = self.scaled_coefficients(p);
        Ok(ScatteringCoefficients { r: r / d, t: t / d, a: a / d, b: b / d, k_inside: k })
    }

    pub fn reflection(&self, p: f64) -> Result<Complex64> {
        Ok(self.coefficients(p.into())?.r)
    }

    pub fn transmission(&self, p: f64) -> Result<Complex64> {
        Ok(self.coefficients(p.into())?.t)
    }
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn region_value(states: &SquareWellStates, c: &ScatteringCoefficients, p: Complex64, x: f64) -> Complex64 {
    let a = states.half_width;
    if x < -a {
        (I * p * x).exp() + c.r * (-I * p * x).exp()
    } else if x > a {
        c.t * (I * p * x).exp()
    } else {
        c.a * (I * c.k_inside * x).exp() + c.b * (-I * c.k_inside * x).exp()
    }
}

/// [`region_value`] for real `p` above the well bottom, where both
/// exponentials are pure phases.
fn region_value_real(half_width: f64, c: &ScatteringCoefficients, p: f64, k: f64, x: f64) -> Complex64 {
    if x < -half_width {
        let e = Complex64::cis(p * x);
        e + c.r * e.conj()
    } else if x > half_width {
        c.t * Complex64::cis(p * x)
    } else {
        let e = Complex64::cis(k * x);
        c.a * e + c.b * e.conj()
    }
}

/// Left-incident stationary scattering state at energy `p^2 / 2m`.
pub fn stationary_state(states: &SquareWellStates, p: f64, x: f64) -> Result<Complex64> {
    let c = states.coefficients(p.into())?;
    Ok(region_value(states, &c, p.into(), x))
}

/// Fourier amplitude of a normalized square packet,
/// `psi(x, 0) = (2 pi)^{-1/2} \int a(p) e^{ipx} dp`, in the packet's phase
/// convention `e^{iq(x - x0)}`.
pub fn packet_fourier_amplitude(packet: &PacketSpec, p: Complex64) -> Result<Complex64> {
    if packet.shape != PacketShape::Square {
        return Err(Error::UnsupportedShape(format!(
            "contour oracle needs a square packet, got {}",
            packet.shape
        )));
    }
    packet.validate()?;
    Ok(square_amplitude(packet, p))
}

fn square_amplitude(packet: &PacketSpec, p: Complex64) -> Complex64 {
    let d = packet.width;
    let c = (2.0 / PI).sqrt() / (2.0 * d).sqrt();
    let u = p - packet.q;
    let sinc = if u.norm() < 1e-8 { d * (1.0 - (u * d).powi(2) / 6.0) } else { (u * d).sin() / u };
    c * (-I * p * packet.x0).exp() * sinc
}

/// Momentum contour for [`evolve_analytic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourSpec {
    pub p_max: f64,
    /// Quadrature nodes on the first pass; doubled until converged.
    pub n_nodes: usize,
    /// Height of the rectangular detour above the real axis.
    pub detour_height: f64,
    /// Half-width of the lifted segment of the detour.
    pub detour_half_width: f64,
    /// Accepted change under node doubling, relative to max |psi|.
    pub tolerance: f64,
    /// Kaiser taper `I0(beta sqrt(1 - u^2/P^2)) / I0(beta)` on the packet
    /// spectrum, `u = p - q`, `P = p_max - |q|`. Zero disables it.
    pub taper_beta: f64,
    pub max_nodes: usize,
}

pub const DEFAULT_NODES: usize = 4096;
pub const DEFAULT_TOLERANCE: f64 = 0.005;
pub const DEFAULT_TAPER_BETA: f64 = 5.0;
const GL_ORDER: usize = 16;

impl ContourSpec {
    /// `p_max = q + 30/d`, a detour 25% above the deepest pole.
    pub fn default_for(packet: &PacketSpec, states: &SquareWellStates) -> Self {
        ContourSpec {
            p_max: packet.q.abs() + 30.0 / packet.width,
            n_nodes: DEFAULT_NODES,
            detour_height: 1.25 * states.max_kappa() + 0.5,
            detour_half_width: 1.0,
            tolerance: DEFAULT_TOLERANCE,
            taper_beta: DEFAULT_TAPER_BETA,
            max_nodes: 1 << 22,
        }
    }

    pub fn validate(&self, packet: &PacketSpec, states: &SquareWellStates) -> Result<()> {
        if !(self.p_max > packet.q.abs() + 10.0 / packet.width) {
            return config(format!("p_max {} must exceed |q| + 10/d = {}", self.p_max, packet.q.abs() + 10.0 / packet.width));
        }
        if !(self.detour_height > states.max_kappa()) {
            return config(format!(
                "detour height {} must exceed the deepest pole kappa = {}",
                self.detour_height,
                states.max_kappa()
            ));
        }
        let band = self.band(packet);
        if !(self.detour_half_width > 0.0 && packet.q - band < -self.detour_half_width && packet.q + band > self.detour_half_width) {
            return config("detour half-width must lie inside the integration band");
        }
        if !(self.taper_beta >= 0.0 && self.taper_beta <= 30.0) {
            return config(format!("taper beta must lie in [0, 30], got {}", self.taper_beta));
        }
        if self.n_nodes < GL_ORDER || self.max_nodes < self.n_nodes {
            return config(format!("need {GL_ORDER} <= n_nodes <= max_nodes"));
        }
        if !(self.tolerance > 0.0) {
            return config("contour tolerance must be positive");
        }
        Ok(())
    }

    /// Half-width `P` of the integration band `[q - P, q + P]`.
    pub fn band(&self, packet: &PacketSpec) -> f64 {
        self.p_max - packet.q.abs()
    }

    /// Spectral taper at `p`; entire in `p`, so contour deformation is
    /// unaffected.
    pub fn taper(&self, packet: &PacketSpec, p: Complex64) -> Complex64 {
        if self.taper_beta == 0.0 {
            return Complex64::from(1.0);
        }
        let u = (p - packet.q) / self.band(packet);
        let z = self.taper_beta * self.taper_beta * (1.0 - u * u);
        i0_sqrt(z) / i0_sqrt(Complex64::from(self.taper_beta * self.taper_beta)).re
    }
}

/// `I0(sqrt(z))` from its power series `sum (z/4)^k / (k!)^2`.
fn i0_sqrt(z: Complex64) -> Complex64 {
    let q = z / 4.0;
    let mut term = Complex64::from(1.0);
    let mut sum = term;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term.norm() < 1e-17 * sum.norm() {
            break;
        }
    }
    sum
}

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Weighted quadrature node on a straight segment of the contour.
struct Node {
    p: Complex64,
    weight: Complex64,
}

fn segment_nodes(from: Complex64, to: Complex64, panels: usize, out: &mut Vec<Node>) {
    let (z, w) = gauss_legendre(GL_ORDER);
    let h = (to - from) / panels as f64;
    for k in 0..panels {
        let mid = from + h * (k as f64 + 0.5);
        for (zi, wi) in z.iter().zip(&w) {
            out.push(Node { p: mid + h * (0.5 * zi), weight: h * (0.5 * wi) });
        }
    }
}

fn panels_for(length: f64, total_length: f64, n_nodes: usize) -> usize {
    ((n_nodes as f64 * length / total_length / GL_ORDER as f64).ceil() as usize).max(1)
}

fn real_axis_nodes(lo: f64, hi: f64, n_nodes: usize) -> Vec<Node> {
    let mut out = Vec::with_capacity(n_nodes + GL_ORDER);
    segment_nodes(lo.into(), hi.into(), panels_for(1.0, 1.0, n_nodes), &mut out);
    out
}

fn detour_nodes(spec: &ContourSpec, packet: &PacketSpec, n_nodes: usize) -> Vec<Node> {
    let band = spec.band(packet);
    let (lo, hi) = (packet.q - band, packet.q + band);
    let (pd, h) = (spec.detour_half_width, spec.detour_height);
    let total = (hi - lo) + 2.0 * h;
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let legs = [
        (c(lo, 0.0), c(-pd, 0.0), -pd - lo),
        (c(-pd, 0.0), c(-pd, h), h),
        (c(-pd, h), c(pd, h), 2.0 * pd),
        (c(pd, h), c(pd, 0.0), h),
        (c(pd, 0.0), c(hi, 0.0), hi - pd),
    ];
    let mut out = Vec::with_capacity(n_nodes + 5 * GL_ORDER);
    for (from, to, len) in legs {
        segment_nodes(from, to, panels_for(len, total, n_nodes), &mut out);
    }
    out
}

/// Per-node data independent of `x`.
struct Component {
    p: Complex64,
    weight: Complex64,
    coeffs: ScatteringCoefficients,
}

fn components(
    states: &SquareWellStates,
    packet: &PacketSpec,
    contour: &ContourSpec,
    nodes: &[Node],
    t: f64,
) -> Result<Vec<Component>> {
    let norm = 1.0 / (2.0 * PI).sqrt();
    nodes
        .iter()
        .map(|n| {
            let phase = (-I * n.p * n.p * (t / (2.0 * states.mass))).exp();
            Ok(Component {
                p: n.p,
                weight: n.weight * square_amplitude(packet, n.p) * contour.taper(packet, n.p) * phase * norm,
                coeffs: states.coefficients(n.p)?,
            })
        })
        .collect()
}

fn synthesize(states: &SquareWellStates, comps: &[Component], xs: &[f64]) -> Vec<Complex64> {
    xs.par_iter()
        .map(|&x| {
            comps
                .iter()
                .map(|c| {
                    let v = if c.p.im == 0.0 && c.coeffs.k_inside.im == 0.0 {
                        region_value_real(states.half_width, &c.coeffs, c.p.re, c.coeffs.k_inside.re, x)
                    } else {
                        region_value(states, &c.coeffs, c.p, x)
                    };
                    c.weight * v
                })
                .sum()
        })
        .collect()
}

/// Contribution of the bound-state poles enclosed between the real axis and
/// the detour: `-2 pi i` times the residues at `p = i kappa_n`.
fn pole_terms(states: &SquareWellStates, packet: &PacketSpec, contour: &ContourSpec, xs: &[f64], t: f64) -> Vec<Complex64> {
    let norm = 1.0 / (2.0 * PI).sqrt();
    let poles: Vec<(Complex64, Complex64, (Complex64, Complex64, Complex64, Complex64, Complex64))> = states
        .bound_states
        .iter()
        .map(|b| {
            let p = Complex64::new(0.0, b.kappa);
            let phase = (-I * p * p * (t / (2.0 * states.mass))).exp();
            let spectrum = square_amplitude(packet, p) * contour.taper(packet, p);
            let w = -2.0 * PI * I * norm * spectrum * phase / states.denominator_derivative(p);
            (p, w, states.scaled_coefficients(p))
        })
        .collect();
    xs.iter()
        .map(|&x| {
            poles
                .iter()
                .map(|&(p, w, (r, tr, a, b, k))| {
                    // The denominator vanishes at the pole, so only the
                    // scaled reflected/transmitted/interior parts survive.
                    let scaled = ScatteringCoefficients { r, t: tr, a, b, k_inside: k };
                    let v = if x < -states.half_width {
                        r * (-I * p * x).exp()
                    } else {
                        region_value(states, &scaled, p, x)
                    };
                    w * v
                })
                .sum()
        })
        .collect()
}

fn relative_change(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let diff = a.iter().zip(b).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn check_inputs(states: &SquareWellStates, packet: &PacketSpec, contour: &ContourSpec, t: f64) -> Result<()> {
    if packet.shape != PacketShape::Square {
        return Err(Error::UnsupportedShape(format!("contour oracle needs a square packet, got {}", packet.shape)));
    }
    packet.validate()?;
    contour.validate(packet, states)?;
    if packet.x0 + packet.width >= -states.half_width {
        return Err(Error::Domain("initial packet must lie entirely left of the well".into()));
    }
    if !t.is_finite() {
        return config("time must be finite");
    }
    Ok(())
}

fn converge(contour: &ContourSpec, mut eval: impl FnMut(usize) -> Result<Vec<Complex64>>) -> Result<Vec<Complex64>> {
    let mut n = contour.n_nodes;
    let mut coarse = eval(n)?;
    loop {
        let fine_n = 2 * n;
        if fine_n > contour.max_nodes {
            let change = f64::INFINITY;
            return Err(Error::NotConverged { change, nodes: n });
        }
        let fine = eval(fine_n)?;
        let change = relative_change(&coarse, &fine);
        if change <= contour.tolerance {
            return Ok(fine);
        }
        if 2 * fine_n > contour.max_nodes {
            return Err(Error::NotConverged { change, nodes: fine_n });
        }
        coarse = fine;
        n = fine_n;
    }
}

/// `psi(x, t)` on the nodes of `grid`, from the real-axis integral plus the
/// enclosed pole residues. This equals the integral along the lifted detour
/// but stays well conditioned at large `t`, where the detour integrand grows
/// like `exp(p h t / m)`.
pub fn evolve_analytic(
    states: &SquareWellStates,
    packet: &PacketSpec,
    contour: &ContourSpec,
    grid: &Grid1D,
    t: f64,
) -> Result<ComplexField1D> {
    check_inputs(states, packet, contour, t)?;
    let xs: Vec<f64> = grid.nodes().collect();
    let poles = pole_terms(states, packet, contour, &xs, t);
    let band = contour.band(packet);
    let values = converge(contour, |n| {
        let nodes = real_axis_nodes(packet.q - band, packet.q + band, n);
        let comps = components(states, packet, contour, &nodes, t)?;
        let mut v = synthesize(states, &comps, &xs);
        for (z, pole) in v.iter_mut().zip(&poles) {
            *z += pole;
        }
        Ok(v)
    })?;
    ComplexField1D::new(grid.clone(), values)
}

/// The same integral evaluated literally along the rectangular detour.
/// Accurate only while `exp(detour_half_width * detour_height * t / m)`
/// stays moderate.
pub fn evolve_analytic_detour(
    states: &SquareWellStates,
    packet: &PacketSpec,
    contour: &ContourSpec,
    grid: &Grid1D,
    t: f64,
) -> Result<ComplexField1D> {
    check_inputs(states, packet, contour, t)?;
    let xs: Vec<f64> = grid.nodes().collect();
    let values = converge(contour, |n| {
        let comps = components(states, packet, contour, &detour_nodes(contour, packet, n), t)?;
        Ok(synthesize(states, &comps, &xs))
    })?;
    ComplexField1D::new(grid.clone(), values)
}

/// `packet` sampled on `grid` and passed through the contour's spectral
/// window, so a grid solver starts from the state the contour integral
/// represents at `t = 0`. Momenta outside the integration band are removed.
pub fn band_limited_packet(packet: &PacketSpec, contour: &ContourSpec, grid: &Grid1D) -> Result<ComplexField1D> {
    use rustfft::FftPlanner;
    if packet.shape != PacketShape::Square {
        return Err(Error::UnsupportedShape(format!("contour oracle needs a square packet, got {}", packet.shape)));
    }
    let psi = crate::model::make_packet_1d(packet, grid)?;
    let n = grid.n_points();
    let mut buf = psi.into_values();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let band = contour.band(packet);
    let dk = 2.0 * PI / (n as f64 * grid.dx());
    for (j, z) in buf.iter_mut().enumerate() {
        let k = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 } * dk;
        let f = if (k - packet.q).abs() < band { contour.taper(packet, k.into()).re } else { 0.0 };
        *z *= f / n as f64;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    // The FFT grid is periodic with period n dx; the packet sits far from
    // the edges, so pinning the wall nodes changes nothing of note.
    buf[0] = Complex64::from(0.0);
    buf[n - 1] = Complex64::from(0.0);
    ComplexField1D::new(grid.clone(), buf)
}

/// Gibbs windows `|x - x0 -+ d| <= 5 / p_max` around the initial edges.
pub fn in_gibbs_zone(packet: &PacketSpec, contour: &ContourSpec, x: f64) -> bool {
    let w = 5.0 / contour.p_max;
    (x - packet.x0 - packet.width).abs() <= w || (x - packet.x0 + packet.width).abs() <= w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core1d::norm;
    use nalgebra::{Matrix4, Vector4};

    fn fig5_well() -> SquareWellStates {
        SquareWellStates::new(1.0, 1.0, 20.0).unwrap()
    }

    fn fig5_packet() -> PacketSpec {
        PacketSpec::square(1.0, -10.0, 0.5)
    }

    fn matching_solve(s: &SquareWellStates, p: f64) -> Vector4<Complex64> {
        let p = Complex64::from(p);
        let k = s.k_inside(p);
        let a = s.half_width;
        let e = |z: Complex64| z.exp();
        // Unknowns (R, A, B, T); continuity of value and slope at -a and a.
        let m = Matrix4::new(
            -e(I * p * a), e(-I * k * a), e(I * k * a), Complex64::from(0.0),
            I * p * e(I * p * a), I * k * e(-I * k * a), -I * k * e(I * k * a), Complex64::from(0.0),
            Complex64::from(0.0), e(I * k * a), e(-I * k * a), -e(I * p * a),
            Complex64::from(0.0), I * k * e(I * k * a), -I * k * e(-I * k * a), -I * p * e(I * p * a),
        );
        let rhs = Vector4::new(e(-I * p * a), I * p * e(-I * p * a), Complex64::from(0.0), Complex64::from(0.0));
        m.lu().solve(&rhs).unwrap()
    }

    #[test]
    fn closed_form_matches_matching_solve() {
        let s = fig5_well();
        for p in [0.05, 0.3, 1.0, 2.7, 4.657, 9.0, -1.3] {
            let c = s.coefficients(p.into()).unwrap();
            let v = matching_solve(&s, p);
            for (a, b) in [(c.r, v[0]), (c.a, v[1]), (c.b, v[2]), (c.t, v[3])] {
                assert!((a - b).norm() < 1e-10, "p={p}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn flat_well_is_transparent() {
        let s = SquareWellStates::new(0.0, 1.0, 20.0).unwrap();
        assert!(s.bound_states.is_empty());
        for p in [0.2, 1.0, 3.0] {
            assert!(s.reflection(p).unwrap().norm() < 1e-15);
            assert!((s.transmission(p).unwrap() - 1.0).norm() < 1e-14);
            for x in [-3.0, 0.2, 4.0] {
                let v = stationary_state(&s, p, x).unwrap();
                assert!((v - (I * p * x).exp()).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn flux_is_conserved() {
        let s = fig5_well();
        for i in 0..2000 {
            let p = -30.0 + 60.0 * (i as f64 + 0.31) / 2000.0;
            let r = s.reflection(p).unwrap().norm_sqr();
            let t = s.transmission(p).unwrap().norm_sqr();
            assert!((r + t - 1.0).abs() < 1e-12, "p={p}");
        }
    }

    #[test]
    fn zero_momentum_limits() {
        let s = fig5_well();
        assert!((s.reflection(0.0).unwrap() + 1.0).norm() < 1e-14);
        assert!(s.transmission(0.0).unwrap().norm() < 1e-14);
    }

    #[test]
    fn first_transmission_resonance() {
        let s = fig5_well();
        let n = (2.0 * (40.0f64).sqrt() / PI).floor() + 1.0;
        assert_eq!(n, 5.0);
        let p = ((n * PI / 2.0).powi(2) - 40.0).sqrt();
        assert!((p - 4.657).abs() < 1e-3);
        assert!((s.transmission(p).unwrap().norm() - 1.0).abs() < 1e-10);
        assert!((s.transmission(p * 0.9).unwrap().norm() - 1.0).abs() > 1e-3);
    }

    #[test]
    fn bound_state_ladder() {
        let s = fig5_well();
        assert_eq!(s.analytic_count(), 5);
        assert_eq!(s.bound_states.len(), 5);
        let mut parity = Parity::Even;
        for b in &s.bound_states {
            assert_eq!(b.parity, parity);
            parity = if parity == Parity::Even { Parity::Odd } else { Parity::Even };
            assert!(s.bound_state_residual(b) < 1e-10);
            assert!(s.denominator(Complex64::new(0.0, b.kappa)).norm() < 1e-9);
            assert!(((2.0 * s.mass * b.energy.abs()).sqrt() - b.kappa).abs() < 1e-12);
        }
        for (depth, a, m) in [(0.3, 0.7, 5.0), (2.0, 1.5, 20.0), (1e-4, 1.0, 1.0)] {
            let s = SquareWellStates::new(depth, a, m).unwrap();
            assert_eq!(s.bound_states.len(), s.analytic_count(), "{depth} {a} {m}");
        }
    }

    #[test]
    fn denominator_derivative_matches_residue_circle() {
        let s = fig5_well();
        for b in &s.bound_states {
            let p0 = Complex64::new(0.0, b.kappa);
            // (1 / 2 pi i) \oint dz / D(z) = 1 / D'(p0).
            let r = 1e-3;
            let n = 64;
            let mut sum = Complex64::from(0.0);
            for j in 0..n {
                let th = 2.0 * PI * j as f64 / n as f64;
                let dz = I * r * Complex64::from_polar(1.0, th) * (2.0 * PI / n as f64);
                sum += dz / s.denominator(p0 + r * Complex64::from_polar(1.0, th));
            }
            let numeric = sum / (2.0 * PI * I);
            let analytic = 1.0 / s.denominator_derivative(p0);
            assert!((numeric - analytic).norm() < 1e-8 * analytic.norm(), "{numeric} vs {analytic}");
        }
    }

    #[test]
    fn fourier_amplitude_special_values() {
        let pk = fig5_packet();
        let c = (2.0 / PI).sqrt() / (2.0 * pk.width).sqrt();
        let at_q = packet_fourier_amplitude(&pk, pk.q.into()).unwrap();
        assert!((at_q.norm() - c * pk.width).abs() < 1e-15);
        let zero = packet_fourier_amplitude(&pk, (pk.q + PI / pk.width).into()).unwrap();
        assert!(zero.norm() < 1e-15);
        let g = PacketSpec::gaussian(1.0, -10.0, 0.5);
        assert!(matches!(packet_fourier_amplitude(&g, 1.0.into()), Err(Error::UnsupportedShape(_))));
    }

    #[test]
    fn parseval_with_tail_correction() {
        let pk = fig5_packet();
        let big = 1e4;
        let nodes = real_axis_nodes(pk.q - big, pk.q + big, 1 << 20);
        let mut sum = 0.0;
        for n in &nodes {
            let p = n.p;
            sum += n.weight.re * packet_fourier_amplitude(&pk, p).unwrap().norm_sqr();
        }
        // Each tail beyond |p - q| = P holds (2 / pi) C^2 (1/(2P) - sin(2Pd)/(4dP^2)).
        let d = pk.width;
        let c2 = 1.0 / (2.0 * d) * 2.0 / PI;
        let tail = 2.0 * c2 * (0.5 / big - (2.0 * big * d).sin() / (4.0 * d * big * big));
        assert!((sum + tail - 1.0).abs() < 1e-8, "{}", sum + tail - 1.0);
    }

    #[test]
    fn contour_validation() {
        let s = fig5_well();
        let pk = fig5_packet();
        let mut c = ContourSpec::default_for(&pk, &s);
        assert!(c.validate(&pk, &s).is_ok());
        c.detour_height = 0.5 * s.max_kappa();
        assert!(matches!(c.validate(&pk, &s), Err(Error::Config(_))));
        let mut c = ContourSpec::default_for(&pk, &s);
        c.p_max = 5.0;
        assert!(matches!(c.validate(&pk, &s), Err(Error::Config(_))));
    }

    #[test]
    fn reproduces_initial_packet() {
        let s = fig5_well();
        let pk = fig5_packet();
        let c = ContourSpec::default_for(&pk, &s);
        let grid = Grid1D::new(-12.0, 3.0, 1501).unwrap();
        let psi = evolve_analytic(&s, &pk, &c, &grid, 0.0).unwrap();
        let plateau = 1.0 / (2.0 * pk.width).sqrt();
        let mut worst: f64 = 0.0;
        for (x, z) in grid.nodes().zip(psi.values()) {
            if in_gibbs_zone(&pk, &c, x) {
                continue;
            }
            let exact = pk.amplitude(x) * plateau;
            worst = worst.max((z - exact).norm());
        }
        assert!(worst < 0.01 * plateau, "worst deviation {worst}");
    }

    #[test]
    fn detour_and_pole_forms_agree_and_are_contour_independent() {
        let s = fig5_well();
        let pk = fig5_packet();
        // Left of the packet the detour integrand carries exp(h (x0 + d - x)),
        // so the literal contour is only conditioned for x > x0 + d.
        let grid = Grid1D::new(-9.0, 4.0, 131).unwrap();
        let t = 5.0;
        let mut c = ContourSpec::default_for(&pk, &s);
        c.tolerance = 1e-9;
        let poles = evolve_analytic(&s, &pk, &c, &grid, t).unwrap();
        let low = evolve_analytic_detour(&s, &pk, &c, &grid, t).unwrap();
        let mut raised = c;
        raised.detour_height += 2.0;
        let high = evolve_analytic_detour(&s, &pk, &raised, &grid, t).unwrap();
        let scale = poles.max_abs();
        let dev = |a: &ComplexField1D, b: &ComplexField1D| relative_change(a.values(), b.values()) * b.max_abs() / scale;
        assert!(dev(&low, &high) < 1e-6, "{}", dev(&low, &high));
        assert!(dev(&low, &poles) < 1e-6, "{}", dev(&low, &poles));
    }

    #[test]
    fn norm_is_preserved() {
        let s = fig5_well();
        let pk = fig5_packet();
        let c = ContourSpec::default_for(&pk, &s);
        let grid = Grid1D::new(-60.0, 60.0, 4801).unwrap();
        let n0 = norm(&evolve_analytic(&s, &pk, &c, &grid, 0.0).unwrap());
        // The taper removes a few percent of the sharp packet's spectrum.
        assert!(n0 > 0.9 && n0 < 1.0);
        let n1 = norm(&evolve_analytic(&s, &pk, &c, &grid, 15.0).unwrap());
        assert!((n1 / n0 - 1.0).abs() < 0.005, "{n0} {n1}");
    }

    #[test]
    fn rejects_overlapping_packet() {
        let s = fig5_well();
        let pk = PacketSpec::square(1.0, -1.2, 0.5);
        let c = ContourSpec::default_for(&pk, &s);
        let grid = Grid1D::new(-3.0, 3.0, 11).unwrap();
        assert!(matches!(evolve_analytic(&s, &pk, &c, &grid, 1.0), Err(Error::Domain(_))));
    }
}
