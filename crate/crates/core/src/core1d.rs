//! Uniform grids, complex fields and the unitary Cayley time step for the 1D
//! Schrödinger equation `i dpsi/dt = -(1/2m) psi'' + V psi` (hbar = 1).
//!
//! The step solves `(1 + i H dt/2) psi_new = (1 - i H dt/2) psi_old` with the
//! three-point Laplacian and hard walls at both grid ends. The implicit
//! matrix does not change between steps, so [`CayleyPropagator`] factors it
//! once and each step costs one fused forward sweep and one back
//! substitution.

use num_complex::Complex64;

use crate::error::{config, Error, Result};
use crate::model::{PacketSpec, PotentialSpec};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Uniformly spaced nodes `x_min + j dx`, `j = 0..n_points`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    n_points: usize,
    dx: f64,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if n_points < 3 {
            return config(format!("grid needs at least 3 points, got {n_points}"));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return config(format!("invalid grid extent [{x_min}, {x_max}]"));
        }
        let dx = (x_max - x_min) / (n_points - 1) as f64;
        Ok(Grid1D { x_min, x_max, n_points, dx })
    }

    /// Smallest grid on `[x_min, x_max]` whose spacing does not exceed
    /// `max_dx`.
    pub fn with_max_spacing(x_min: f64, x_max: f64, max_dx: f64) -> Result<Self> {
        if !(max_dx > 0.0) {
            return config(format!("grid spacing must be positive, got {max_dx}"));
        }
        let cells = ((x_max - x_min) / max_dx * (1.0 - 1e-12)).ceil().max(2.0) as usize;
        Grid1D::new(x_min, x_max, cells + 1)
    }

    /// Symmetric grid `[-half_width, half_width]` with an odd node count, so
    /// that `x = 0` is a node.
    pub fn symmetric(half_width: f64, max_dx: f64) -> Result<Self> {
        if !(max_dx > 0.0) {
            return config(format!("grid spacing must be positive, got {max_dx}"));
        }
        let half_cells = (half_width / max_dx * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Grid1D::new(-half_width, half_width, 2 * half_cells + 1)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        if j + 1 == self.n_points {
            self.x_max
        } else {
            self.x_min + j as f64 * self.dx
        }
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n_points).map(move |j| self.x(j))
    }

    /// Index of the node closest to `x`, clamped to the grid.
    pub fn nearest_index(&self, x: f64) -> usize {
        let j = ((x - self.x_min) / self.dx).round();
        j.clamp(0.0, (self.n_points - 1) as f64) as usize
    }

    pub fn trapezoid_weight(&self, j: usize) -> f64 {
        if j == 0 || j + 1 == self.n_points {
            0.5 * self.dx
        } else {
            self.dx
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }
}

/// Complex wave-function samples on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField1D {
    grid: Grid1D,
    values: Vec<Complex64>,
}

impl ComplexField1D {
    pub fn new(grid: Grid1D, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return config(format!(
                "field has {} values but grid has {} nodes",
                values.len(),
                grid.n_points()
            ));
        }
        Ok(ComplexField1D { grid, values })
    }

    pub fn zeros(grid: Grid1D) -> Self {
        let values = vec![ZERO; grid.n_points()];
        ComplexField1D { grid, values }
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid.nodes().map(f).collect();
        ComplexField1D { grid, values }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn scale(&mut self, factor: f64) {
        for z in &mut self.values {
            *z *= factor;
        }
    }

    pub fn abs(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Linear interpolation of the complex amplitude at `x`.
    pub fn interpolate(&self, x: f64) -> Complex64 {
        let g = &self.grid;
        if !g.contains(x) {
            return ZERO;
        }
        let s = (x - g.x_min()) / g.dx();
        let j = (s.floor() as usize).min(g.n_points() - 2);
        let frac = s - j as f64;
        self.values[j] * (1.0 - frac) + self.values[j + 1] * frac
    }

    /// Pointwise sum of two fields on the same grid.
    pub fn add(&self, other: &ComplexField1D) -> Result<ComplexField1D> {
        if self.grid != other.grid {
            return config("cannot add fields on different grids");
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(ComplexField1D { grid: self.grid.clone(), values })
    }

    pub fn conj(&self) -> ComplexField1D {
        let values = self.values.iter().map(|z| z.conj()).collect();
        ComplexField1D { grid: self.grid.clone(), values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    #[default]
    HardWall,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionParams {
    pub mass: f64,
    pub dt: f64,
    pub t_final: f64,
    pub boundary: Boundary,
}

impl EvolutionParams {
    pub fn new(mass: f64, dt: f64, t_final: f64) -> Result<Self> {
        let p = EvolutionParams { mass, dt, t_final, boundary: Boundary::HardWall };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return config(format!("mass must be positive, got {}", self.mass));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return config(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return config(format!("t_final must be non-negative, got {}", self.t_final));
        }
        Ok(())
    }

    /// Number of steps reaching `t_final`.
    pub fn step_count(&self) -> Result<usize> {
        steps_for(self.t_final, self.dt)
    }
}

pub(crate) fn steps_for(t: f64, dt: f64) -> Result<usize> {
    let n = (t / dt).round();
    if !n.is_finite() || (n * dt - t).abs() > 0.5 * dt * (1.0 + 1e-9) {
        return config(format!("time {t} is not reachable with dt = {dt}"));
    }
    Ok(n as usize)
}

/// Factored Cayley propagator for one grid, potential, mass and time step.
///
/// The implicit matrix is factored from both ends toward a middle row (a
/// twisted factorization), which gives each step two independent
/// elimination chains instead of one long one.
///
/// Any nonzero `dt` is accepted, including negative steps: the implicit
/// matrix `1 + i K` with real symmetric `K` has a positive definite
/// Hermitian part, so elimination without pivoting never meets a zero pivot.
#[derive(Debug, Clone)]
pub struct CayleyPropagator {
    n: usize,
    /// First active row: 1 when node 0 is a hard wall, 0 when it is free.
    first: usize,
    /// Twist row where the two elimination chains meet.
    twist: usize,
    /// Diagonal of `1 + i H dt/2` is `1 + i * diag_im[j]`.
    diag_im: Vec<f64>,
    /// Entry `(j - 1, j)` of `1 + i H dt/2` is `i * left[j]`; `left[first] = 0`.
    left: Vec<f64>,
    /// Reciprocal pivots of both chains and of the twist row.
    inv_pivot: Vec<Complex64>,
    /// `i * left[j] * inv_pivot_j`.
    link_prev: Vec<Complex64>,
    /// `i * left[j + 1] * inv_pivot_j`.
    link_next: Vec<Complex64>,
    /// Common value of all interior couplings, when they agree.
    uniform: Option<f64>,
}

#[inline(always)]
fn times_i(a: f64, z: Complex64) -> Complex64 {
    Complex64::new(-a * z.im, a * z.re)
}

impl CayleyPropagator {
    /// Standard three-point Laplacian on a uniform grid with both end nodes
    /// held at zero.
    pub fn new(grid: &Grid1D, potential: &[f64], mass: f64, dt: f64) -> Result<Self> {
        if potential.len() != grid.n_points() {
            return config(format!(
                "potential has {} samples but grid has {} nodes",
                potential.len(),
                grid.n_points()
            ));
        }
        if !(mass > 0.0) {
            return config(format!("invalid mass {mass}"));
        }
        let n = grid.n_points();
        let kinetic = 1.0 / (mass * grid.dx() * grid.dx());
        let mut diag = vec![0.0; n];
        for j in 1..n - 1 {
            diag[j] = kinetic + potential[j];
        }
        CayleyPropagator::from_hamiltonian(&diag, &vec![-0.5 * kinetic; n - 1], dt, true)
    }

    /// Propagator for a real symmetric tridiagonal Hamiltonian with diagonal
    /// `diag` and off-diagonal `off[j] = H_{j, j+1}`. The last node is always
    /// held at zero; node 0 is held at zero when `pin_first` is set.
    pub fn from_hamiltonian(diag: &[f64], off: &[f64], dt: f64, pin_first: bool) -> Result<Self> {
        let n = diag.len();
        let first = usize::from(pin_first);
        if n < first + 4 || off.len() + 1 != n {
            return config(format!("tridiagonal system needs at least {} nodes and n - 1 couplings", first + 4));
        }
        if !dt.is_finite() || dt == 0.0 {
            return config(format!("invalid time step {dt}"));
        }
        for (j, &v) in diag.iter().enumerate().take(n - 1).skip(first) {
            if !v.is_finite() {
                return Err(Error::NumericState(format!("non-finite potential at node {j}")));
            }
        }
        if let Some(j) = off.iter().position(|c| !c.is_finite()) {
            return Err(Error::NumericState(format!("non-finite coupling at node {j}")));
        }
        let half = 0.5 * dt;
        let mut diag_im = vec![0.0; n];
        let mut left = vec![0.0; n];
        for j in first..n - 1 {
            diag_im[j] = half * diag[j];
            if j > first {
                left[j] = half * off[j - 1];
            }
        }
        left[n - 1] = half * off[n - 2];
        let twist = (first + n - 2) / 2;
        let d = |j: usize| Complex64::new(1.0, diag_im[j]);
        let ic = |a: f64| Complex64::new(0.0, a);
        let mut inv_pivot = vec![ZERO; n];
        let mut link_prev = vec![ZERO; n];
        let mut link_next = vec![ZERO; n];
        // Pivot recurrence: p_j = D_j - (i c)(i c / p_prev).
        let mut carry = ZERO;
        for j in first..twist {
            let inv = (d(j) - ic(left[j]) * carry).inv();
            inv_pivot[j] = inv;
            link_prev[j] = ic(left[j]) * inv;
            link_next[j] = ic(left[j + 1]) * inv;
            carry = link_next[j];
        }
        let from_top = ic(left[twist]) * carry;
        carry = ZERO;
        for j in (twist + 1..n - 1).rev() {
            let out = if j == n - 2 { 0.0 } else { left[j + 1] };
            let inv = (d(j) - ic(out) * carry).inv();
            inv_pivot[j] = inv;
            link_prev[j] = ic(left[j]) * inv;
            link_next[j] = ic(left[j + 1]) * inv;
            carry = link_prev[j];
        }
        let from_bottom = ic(left[twist + 1]) * carry;
        let inv = (d(twist) - from_top - from_bottom).inv();
        inv_pivot[twist] = inv;
        link_prev[twist] = ic(left[twist]) * inv;
        link_next[twist] = ic(left[twist + 1]) * inv;
        let interior = &left[first + 1..n];
        let uniform = interior.iter().all(|&c| c == interior[0]).then_some(interior[0]);
        Ok(CayleyPropagator { n, first, twist, diag_im, left, inv_pivot, link_prev, link_next, uniform })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Advances the samples by one step in place. The last node, and node 0
    /// when pinned, are held at zero.
    pub fn step(&self, psi: &mut [Complex64]) {
        assert_eq!(psi.len(), self.n, "state length does not match propagator");
        match self.uniform {
            Some(c) => self.run(psi, Uniform { c, link: &self.link_next }),
            None => self.run(psi, Varying { left: &self.left, prev: &self.link_prev, next: &self.link_next }),
        }
    }

    #[inline(always)]
    fn run<R: Rows>(&self, psi: &mut [Complex64], rows: R) {
        let n = self.n;
        let k = self.twist;
        let f = self.first;
        let diag_im = &self.diag_im[..n];
        let inv_pivot = &self.inv_pivot[..n];
        if f == 1 {
            psi[0] = ZERO;
        }
        psi[n - 1] = ZERO;

        // Row j of the explicit side:
        //   rhs_j = psi_j - i (b_j psi_j + c_out psi_out + c_in psi_in)
        // and of the elimination, from either end:
        //   d_j = rhs_j / pivot_j - link_j d_out
        // `*_old` keep pre-step values of the neighbour just overwritten.
        #[inline(always)]
        #[allow(clippy::too_many_arguments)]
        fn eliminate(
            psi: &mut [Complex64],
            j: usize,
            outer_old: &mut Complex64,
            outer_new: &mut Complex64,
            coupled: Complex64,
            diag_im: f64,
            inv: Complex64,
            link: Complex64,
        ) {
            let old = psi[j];
            let rhs = old - times_i(diag_im, old) - times_i(1.0, coupled);
            let d = rhs * inv - link * *outer_new;
            psi[j] = d;
            *outer_old = old;
            *outer_new = d;
        }

        let top_rows = k - f;
        let bottom_rows = n - 2 - k;
        let common = top_rows.min(bottom_rows);
        let (mut t_old, mut t_new) = (ZERO, ZERO);
        let (mut b_old, mut b_new) = (ZERO, ZERO);
        for i in 0..common {
            let j = f + i;
            let c = rows.mix(j, t_old, psi[j + 1]);
            eliminate(psi, j, &mut t_old, &mut t_new, c, diag_im[j], inv_pivot[j], rows.prev(j));
            let m = n - 2 - i;
            let c = rows.mix(m, psi[m - 1], b_old);
            eliminate(psi, m, &mut b_old, &mut b_new, c, diag_im[m], inv_pivot[m], rows.next(m));
        }
        for j in f + common..k {
            let c = rows.mix(j, t_old, psi[j + 1]);
            eliminate(psi, j, &mut t_old, &mut t_new, c, diag_im[j], inv_pivot[j], rows.prev(j));
        }
        for m in (k + 1..n - 1 - common).rev() {
            let c = rows.mix(m, psi[m - 1], b_old);
            eliminate(psi, m, &mut b_old, &mut b_new, c, diag_im[m], inv_pivot[m], rows.next(m));
        }

        let old = psi[k];
        let rhs = old - times_i(diag_im[k], old) - times_i(1.0, rows.mix(k, t_old, b_old));
        let x_k = rhs * inv_pivot[k] - rows.prev(k) * t_new - rows.next(k) * b_new;
        psi[k] = x_k;

        // Back substitution outward from the twist row.
        let (mut up, mut down) = (x_k, x_k);
        for i in 0..common {
            let j = k - 1 - i;
            up = psi[j] - rows.next(j) * up;
            psi[j] = up;
            let m = k + 1 + i;
            down = psi[m] - rows.prev(m) * down;
            psi[m] = down;
        }
        for j in (f..k - common).rev() {
            up = psi[j] - rows.next(j) * up;
            psi[j] = up;
        }
        for m in k + 1 + common..n - 1 {
            down = psi[m] - rows.prev(m) * down;
            psi[m] = down;
        }
    }
}

/// Row couplings seen by the kernel.
trait Rows: Copy {
    /// `left[j] * below + left[j + 1] * above`.
    fn mix(self, j: usize, below: Complex64, above: Complex64) -> Complex64;
    fn prev(self, j: usize) -> Complex64;
    fn next(self, j: usize) -> Complex64;
}

#[derive(Clone, Copy)]
struct Uniform<'a> {
    c: f64,
    link: &'a [Complex64],
}

impl Rows for Uniform<'_> {
    #[inline(always)]
    fn mix(self, _: usize, below: Complex64, above: Complex64) -> Complex64 {
        (below + above) * self.c
    }
    #[inline(always)]
    fn prev(self, j: usize) -> Complex64 {
        self.link[j]
    }
    #[inline(always)]
    fn next(self, j: usize) -> Complex64 {
        self.link[j]
    }
}

#[derive(Clone, Copy)]
struct Varying<'a> {
    left: &'a [f64],
    prev: &'a [Complex64],
    next: &'a [Complex64],
}

impl Rows for Varying<'_> {
    #[inline(always)]
    fn mix(self, j: usize, below: Complex64, above: Complex64) -> Complex64 {
        below * self.left[j] + above * self.left[j + 1]
    }
    #[inline(always)]
    fn prev(self, j: usize) -> Complex64 {
        self.prev[j]
    }
    #[inline(always)]
    fn next(self, j: usize) -> Complex64 {
        self.next[j]
    }
}

/// One Cayley step of `psi` under the sampled potential.
pub fn cayley_step(psi: &ComplexField1D, potential: &[f64], params: &EvolutionParams) -> Result<ComplexField1D> {
    params.validate()?;
    if !psi.is_finite() {
        return Err(Error::NumericState("non-finite amplitude in input state".into()));
    }
    let prop = CayleyPropagator::new(psi.grid(), potential, params.mass, params.dt)?;
    let mut out = psi.clone();
    prop.step(out.values_mut());
    Ok(out)
}

/// Trapezoidal `\int |psi|^2 dx`.
pub fn norm(psi: &ComplexField1D) -> f64 {
    let g = psi.grid();
    psi.values().iter().enumerate().map(|(j, z)| g.trapezoid_weight(j) * z.norm_sqr()).sum()
}

/// Result of [`energy_expectation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyEstimate {
    /// `Re <psi|H|psi>`, divided by the norm only when `normalized` is set.
    pub value: f64,
    /// Whether the input norm was within 1e-6 of one.
    pub normalized: bool,
}

/// `Re <psi|H|psi>` with the discrete Hamiltonian used by the propagator.
pub fn energy_expectation(psi: &ComplexField1D, potential: &[f64], mass: f64) -> Result<EnergyEstimate> {
    let g = psi.grid();
    if potential.len() != g.n_points() {
        return config(format!(
            "potential has {} samples but grid has {} nodes",
            potential.len(),
            g.n_points()
        ));
    }
    let v = psi.values();
    let kinetic = 1.0 / (mass * g.dx() * g.dx());
    let mut acc = 0.0;
    for j in 1..v.len() - 1 {
        let h_psi = v[j] * (kinetic + potential[j]) - (v[j - 1] + v[j + 1]) * (0.5 * kinetic);
        acc += (v[j].conj() * h_psi).re;
    }
    acc *= g.dx();
    let n = norm(psi);
    Ok(EnergyEstimate { value: acc, normalized: (n - 1.0).abs() <= 1e-6 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantity {
    Norm,
    Energy,
    /// `|psi(0)|`, interpolated to `x = 0`.
    CenterAmplitude,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::Norm => "norm",
            Quantity::Energy => "energy",
            Quantity::CenterAmplitude => "center_amplitude",
        }
    }
}

/// What to record while evolving.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Observers {
    pub quantities: Vec<Quantity>,
    /// Sampling interval for `quantities`; `None` samples only `t = 0` and
    /// `t_final`.
    pub interval: Option<f64>,
    /// Restricts scalar sampling to `[t_min, t_max]`.
    pub window: Option<(f64, f64)>,
    pub snapshot_times: Vec<f64>,
}

impl Observers {
    pub fn none() -> Self {
        Observers::default()
    }

    pub fn sampling(quantities: &[Quantity], interval: f64) -> Self {
        Observers { quantities: quantities.to_vec(), interval: Some(interval), ..Default::default() }
    }

    pub fn with_window(mut self, t_min: f64, t_max: f64) -> Self {
        self.window = Some((t_min, t_max));
        self
    }

    pub fn with_snapshots(mut self, times: &[f64]) -> Self {
        self.snapshot_times = times.to_vec();
        self
    }
}

/// Time-stamped scalar diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSeries {
    pub quantity: Quantity,
    pub samples: Vec<(f64, f64)>,
}

impl ObservableSeries {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.0)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.1)
    }

    pub fn first(&self) -> Option<f64> {
        self.samples.first().map(|s| s.1)
    }

    pub fn last(&self) -> Option<f64> {
        self.samples.last().map(|s| s.1)
    }

    /// Largest `|value/value(0) - 1|` over the series.
    pub fn max_relative_drift(&self) -> f64 {
        let Some(v0) = self.first() else { return 0.0 };
        self.values().map(|v| (v / v0 - 1.0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct Evolution1D {
    pub state: ComplexField1D,
    pub series: Vec<ObservableSeries>,
    pub snapshots: Vec<(f64, ComplexField1D)>,
    pub steps: usize,
}

impl Evolution1D {
    pub fn series(&self, q: Quantity) -> Option<&ObservableSeries> {
        self.series.iter().find(|s| s.quantity == q)
    }

    pub fn snapshot(&self, t: f64) -> Option<&ComplexField1D> {
        self.snapshots.iter().find(|(ts, _)| (ts - t).abs() < 1e-9 * t.abs().max(1.0)).map(|(_, f)| f)
    }
}

/// Step schedule shared by the 1D and radial drivers.
#[derive(Debug, Clone)]
pub(crate) struct Schedule {
    pub steps: usize,
    pub sample_every: Option<usize>,
    pub window: Option<(f64, f64)>,
    pub snapshot_steps: Vec<(usize, f64)>,
}

impl Schedule {
    pub fn new(params: &EvolutionParams, interval: Option<f64>, window: Option<(f64, f64)>, snapshots: &[f64]) -> Result<Self> {
        params.validate()?;
        let steps = params.step_count()?;
        let sample_every = match interval {
            Some(iv) if !(iv > 0.0) => return config(format!("sampling interval must be positive, got {iv}")),
            Some(iv) => Some(((iv / params.dt).round() as usize).max(1)),
            None => None,
        };
        let mut snapshot_steps = Vec::with_capacity(snapshots.len());
        for &t in snapshots {
            if !(0.0..=params.t_final).contains(&t) {
                return config(format!("snapshot time {t} outside [0, {}]", params.t_final));
            }
            snapshot_steps.push((steps_for(t, params.dt)?.min(steps), t));
        }
        Ok(Schedule { steps, sample_every, window, snapshot_steps })
    }

    pub fn samples_at(&self, step: usize, dt: f64) -> bool {
        let due = match self.sample_every {
            Some(k) => step % k == 0 || step == self.steps,
            None => step == 0 || step == self.steps,
        };
        if !due {
            return false;
        }
        match self.window {
            Some((a, b)) => {
                let t = step as f64 * dt;
                let eps = 1e-9 * dt;
                t >= a - eps && t <= b + eps
            }
            None => true,
        }
    }

    pub fn snapshots_at(&self, step: usize) -> impl Iterator<Item = f64> + '_ {
        self.snapshot_steps.iter().filter(move |(s, _)| *s == step).map(|(_, t)| *t)
    }
}

fn measure(q: Quantity, psi: &ComplexField1D, potential: &[f64], mass: f64) -> Result<f64> {
    Ok(match q {
        Quantity::Norm => norm(psi),
        Quantity::Energy => energy_expectation(psi, potential, mass)?.value,
        Quantity::CenterAmplitude => psi.interpolate(0.0).norm(),
    })
}

/// Evolves `psi` to `params.t_final` under `potential`, recording the
/// requested observables and snapshots.
pub fn evolve(
    psi: &ComplexField1D,
    potential: &PotentialSpec,
    params: &EvolutionParams,
    observers: &Observers,
) -> Result<Evolution1D> {
    potential.validate()?;
    let samples = potential.sample(psi.grid());
    evolve_sampled(psi, &samples, params, observers)
}

/// [`evolve`] with an explicitly sampled potential.
pub fn evolve_sampled(
    psi: &ComplexField1D,
    potential: &[f64],
    params: &EvolutionParams,
    observers: &Observers,
) -> Result<Evolution1D> {
    let schedule = Schedule::new(params, observers.interval, observers.window, &observers.snapshot_times)?;
    if !psi.is_finite() {
        return Err(Error::NumericState("non-finite amplitude in initial state".into()));
    }
    let prop = CayleyPropagator::new(psi.grid(), potential, params.mass, params.dt)?;
    let mut state = psi.clone();
    let mut series: Vec<ObservableSeries> = observers
        .quantities
        .iter()
        .map(|&quantity| ObservableSeries { quantity, samples: Vec::new() })
        .collect();
    let mut snapshots = Vec::new();

    let mut record = |step: usize, state: &ComplexField1D, series: &mut Vec<ObservableSeries>| -> Result<()> {
        let t = step as f64 * params.dt;
        if !series.is_empty() && schedule.samples_at(step, params.dt) {
            for s in series.iter_mut() {
                let v = measure(s.quantity, state, potential, params.mass)?;
                if !v.is_finite() {
                    return Err(Error::NumericState(format!("{} became non-finite at t = {t}", s.quantity.name())));
                }
                s.samples.push((t, v));
            }
        }
        for ts in schedule.snapshots_at(step) {
            snapshots.push((ts, state.clone()));
        }
        Ok(())
    };

    record(0, &state, &mut series)?;
    for step in 1..=schedule.steps {
        prop.step(state.values_mut());
        record(step, &state, &mut series)?;
    }
    if !state.is_finite() {
        return Err(Error::NumericState("non-finite amplitude after evolution".into()));
    }
    Ok(Evolution1D { state, series, snapshots, steps: schedule.steps })
}

/// Default grid spacing, `min(w, width) / 20`.
pub fn default_dx(potential: &PotentialSpec, packet: &PacketSpec) -> f64 {
    potential.width.min(packet.width) / 20.0
}

/// Default time step, `m dx^2 / 2`.
pub fn default_dt(mass: f64, dx: f64) -> f64 {
    0.5 * mass * dx * dx
}

/// Half-width of the default symmetric box.
///
/// The fastest tracked component moves at `(|q| + 3.5/width) / m`; the wall
/// sits far enough out that its echo cannot travel back to the packet's
/// starting region before `t_final`.
pub fn default_half_width(packet: &PacketSpec, mass: f64, t_final: f64) -> f64 {
    packet.x0.abs() + 10.0 * packet.width + t_final * (packet.q.abs() + 3.5 / packet.width) / (2.0 * mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_packet_1d, PacketSpec};

    fn packet(grid: &Grid1D) -> ComplexField1D {
        make_packet_1d(&PacketSpec::gaussian(1.0, -3.0, 0.5), grid).unwrap()
    }

    #[test]
    fn default_discretization_for_reference_setup() {
        let packet = PacketSpec::gaussian(1.0, -10.0, 0.5);
        let dx = default_dx(&PotentialSpec::gaussian(1.0, 1.0), &packet);
        assert_eq!(dx, 0.025);
        assert!((default_dt(20.0, dx) - 0.00625).abs() < 1e-15);
        assert!((default_half_width(&packet, 20.0, 200.0) - 55.0).abs() < 1e-12);
    }

    #[test]
    fn grid_reproduces_endpoint() {
        let g = Grid1D::new(-7.3, 11.9, 1237).unwrap();
        let j = g.n_points() - 1;
        assert_eq!(g.x(j), 11.9);
        let raw = g.x_min() + j as f64 * g.dx();
        assert!((raw - 11.9).abs() <= f64::EPSILON * 16.0);
    }

    #[test]
    fn grid_rejects_degenerate_input() {
        assert!(Grid1D::new(0.0, 1.0, 2).is_err());
        assert!(Grid1D::new(1.0, 1.0, 10).is_err());
        assert!(Grid1D::new(0.0, f64::NAN, 10).is_err());
    }

    #[test]
    fn symmetric_grid_has_node_at_origin() {
        let g = Grid1D::symmetric(10.0, 0.03).unwrap();
        assert_eq!(g.n_points() % 2, 1);
        assert!(g.x(g.n_points() / 2).abs() < 1e-12);
        assert!(g.dx() <= 0.03);
    }

    #[test]
    fn norm_of_zero_field_is_zero() {
        let g = Grid1D::new(-1.0, 1.0, 11).unwrap();
        assert_eq!(norm(&ComplexField1D::zeros(g)), 0.0);
    }

    #[test]
    fn disjoint_packets_add_norms() {
        let g = Grid1D::symmetric(30.0, 0.02).unwrap();
        let a = make_packet_1d(&PacketSpec::gaussian(1.0, -10.0, 0.5), &g).unwrap();
        let b = make_packet_1d(&PacketSpec::gaussian(-2.0, 10.0, 0.7), &g).unwrap();
        assert!((norm(&a.add(&b).unwrap()) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let g = Grid1D::symmetric(10.0, 0.05).unwrap();
        let psi = packet(&g);
        let params = EvolutionParams::new(20.0, 0.01, 1.0).unwrap();
        let err = cayley_step(&psi, &[0.0; 5], &params).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(matches!(energy_expectation(&psi, &[0.0; 5], 20.0), Err(Error::Config(_))));
    }

    #[test]
    fn non_finite_input_is_a_numeric_error() {
        let g = Grid1D::symmetric(10.0, 0.05).unwrap();
        let mut psi = packet(&g);
        psi.values_mut()[17] = Complex64::new(f64::NAN, 0.0);
        let params = EvolutionParams::new(20.0, 0.01, 1.0).unwrap();
        let v = vec![0.0; g.n_points()];
        assert!(matches!(cayley_step(&psi, &v, &params), Err(Error::NumericState(_))));
    }

    #[test]
    fn free_step_preserves_norm() {
        let g = Grid1D::symmetric(20.0, 0.025).unwrap();
        let psi = packet(&g);
        let params = EvolutionParams::new(20.0, 0.00625, 1.0).unwrap();
        let v = vec![0.0; g.n_points()];
        let out = cayley_step(&psi, &v, &params).unwrap();
        assert!((norm(&out) / norm(&psi) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_duration_is_identity() {
        let g = Grid1D::symmetric(20.0, 0.025).unwrap();
        let psi = packet(&g);
        let params = EvolutionParams::new(20.0, 0.00625, 0.0).unwrap();
        let out = evolve(&psi, &PotentialSpec::gaussian(1.0, 1.0), &params, &Observers::none()).unwrap();
        assert_eq!(out.state, psi);
        assert_eq!(out.steps, 0);
    }

    #[test]
    fn negative_step_inverts_positive_step() {
        let g = Grid1D::symmetric(15.0, 0.025).unwrap();
        let psi = packet(&g);
        let v = PotentialSpec::gaussian(1.0, 1.0).sample(&g);
        let fwd = CayleyPropagator::new(&g, &v, 20.0, 0.01).unwrap();
        let back = CayleyPropagator::new(&g, &v, 20.0, -0.01).unwrap();
        let mut z = psi.values().to_vec();
        for _ in 0..50 {
            fwd.step(&mut z);
        }
        for _ in 0..50 {
            back.step(&mut z);
        }
        let err = z.iter().zip(psi.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-11, "{err}");
    }

    #[test]
    fn snapshot_outside_run_is_rejected() {
        let g = Grid1D::symmetric(15.0, 0.05).unwrap();
        let psi = packet(&g);
        let params = EvolutionParams::new(20.0, 0.01, 1.0).unwrap();
        let obs = Observers::none().with_snapshots(&[2.0]);
        let err = evolve(&psi, &PotentialSpec::gaussian(1.0, 1.0), &params, &obs).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn sampling_respects_interval_and_window() {
        let g = Grid1D::symmetric(15.0, 0.05).unwrap();
        let psi = packet(&g);
        let params = EvolutionParams::new(20.0, 0.01, 1.0).unwrap();
        let obs = Observers::sampling(&[Quantity::Norm, Quantity::CenterAmplitude], 0.1)
            .with_window(0.25, 0.75)
            .with_snapshots(&[0.5, 1.0]);
        let out = evolve(&psi, &PotentialSpec::gaussian(1.0, 1.0), &params, &obs).unwrap();
        let times: Vec<f64> = out.series(Quantity::Norm).unwrap().times().collect();
        assert_eq!(times.len(), 5);
        assert!((times[0] - 0.3).abs() < 1e-12 && (times[4] - 0.7).abs() < 1e-12);
        assert!(out.snapshot(0.5).is_some() && out.snapshot(1.0).is_some());
        assert_eq!(out.snapshot(1.0).unwrap(), &out.state);
    }

    #[test]
    fn free_packet_energy_matches_gaussian_expectation() {
        let g = Grid1D::symmetric(30.0, 0.0125).unwrap();
        let psi = make_packet_1d(&PacketSpec::gaussian(1.0, -10.0, 0.5), &g).unwrap();
        let v = vec![0.0; g.n_points()];
        let e = energy_expectation(&psi, &v, 20.0).unwrap();
        assert!(e.normalized);
        // q^2/2m + 1/(8 m Delta^2)
        assert!((e.value - 0.05).abs() < 0.02 * 0.05, "{}", e.value);
    }

    #[test]
    fn bound_like_state_has_negative_energy() {
        let g = Grid1D::symmetric(10.0, 0.01).unwrap();
        let psi = make_packet_1d(&PacketSpec::gaussian(0.0, 0.0, 0.3), &g).unwrap();
        let v = PotentialSpec::gaussian(5.0, 1.0).sample(&g);
        assert!(energy_expectation(&psi, &v, 20.0).unwrap().value < 0.0);
    }

    #[test]
    fn unnormalized_energy_is_flagged() {
        let g = Grid1D::symmetric(10.0, 0.01).unwrap();
        let mut psi = make_packet_1d(&PacketSpec::gaussian(0.0, 0.0, 0.3), &g).unwrap();
        psi.scale(2.0);
        let v = vec![0.0; g.n_points()];
        assert!(!energy_expectation(&psi, &v, 20.0).unwrap().normalized);
    }

    fn dense_cayley(diag: &[f64], off: &[f64], dt: f64, first: usize, psi: &[Complex64]) -> Vec<Complex64> {
        use nalgebra::{DMatrix, DVector};
        let n = diag.len();
        let active = first..n - 1;
        let m = active.len();
        let mut h = DMatrix::<Complex64>::zeros(m, m);
        for (a, j) in active.clone().enumerate() {
            h[(a, a)] = diag[j].into();
            if a + 1 < m {
                h[(a, a + 1)] = off[j].into();
                h[(a + 1, a)] = off[j].into();
            }
        }
        let i_half = Complex64::new(0.0, 0.5 * dt);
        let id = DMatrix::<Complex64>::identity(m, m);
        let lhs = &id + &h * i_half;
        let rhs = (&id - &h * i_half) * DVector::from_iterator(m, active.clone().map(|j| psi[j]));
        let x = lhs.lu().solve(&rhs).unwrap();
        let mut out = vec![ZERO; n];
        for (a, j) in active.enumerate() {
            out[j] = x[a];
        }
        out
    }

    #[test]
    fn kernel_matches_dense_solve_for_variable_couplings() {
        for &(n, pin_first) in &[(9usize, true), (10, true), (9, false), (12, false), (40, false), (11, true)] {
            let diag: Vec<f64> = (0..n).map(|j| 1.0 + 0.3 * (j as f64).sin()).collect();
            let wobble = if n == 11 { 0.0 } else { 0.1 };
            let off: Vec<f64> = (0..n - 1).map(|j| -0.5 - wobble * (j as f64 * 0.7).cos()).collect();
            let mut psi: Vec<Complex64> =
                (0..n).map(|j| Complex64::new((j as f64 * 0.4).cos(), (j as f64 * 0.9).sin())).collect();
            psi[n - 1] = ZERO;
            if pin_first {
                psi[0] = ZERO;
            }
            let expect = dense_cayley(&diag, &off, 0.7, usize::from(pin_first), &psi);
            let prop = CayleyPropagator::from_hamiltonian(&diag, &off, 0.7, pin_first).unwrap();
            prop.step(&mut psi);
            for (a, b) in psi.iter().zip(&expect) {
                assert!((a - b).norm() < 1e-12, "n = {n}, pin_first = {pin_first}: {a} vs {b}");
            }
        }
    }
}
