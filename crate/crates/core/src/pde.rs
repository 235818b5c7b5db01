//! Finite-difference simulation of `z_tt = Δz + f(z, x, t)` on `[0,1]`
//! and `[0,1]²` with `z = 0` on Γ_D (some `x_p = 0`) and a Neumann or
//! output-injection condition on Γ_N (some `x_p = 1`).
//!
//! Time stepping is leapfrog written in velocity form: two half kicks
//! around a drift. The first step of this form is exactly the Taylor
//! start `z¹ = z⁰ + dt·z₁ + dt²/2·(Δz⁰ + f(z⁰))`. The injection term
//! `k(y − z_t)` is averaged over the two ends of the step, which keeps the
//! update explicit (the end-of-step velocity appears linearly and is solved
//! in closed form) and makes the observer error obey the discrete damped
//! error system exactly.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fmt_f64;

/// Courant numbers. In 1-D the leapfrog scheme is dispersion-free at exactly 1,
/// which lets boundary absorption remove grid-scale content on time.
pub const CFL_1D: f64 = 1.0;
pub const CFL_2D: f64 = 0.9 * std::f64::consts::FRAC_1_SQRT_2;
/// Slope bound above which a 1-D step at Courant 1 can lose stability.
pub const MAX_SLOPE_AT_UNIT_CFL: f64 = 2.0;
pub const DEFAULT_POINTS_1D: usize = 201;
pub const DEFAULT_POINTS_2D: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Plant,
    /// Luenberger observer `∂ẑ/∂ν = k(y − ẑ_t)`.
    ObserverForward { k: f64 },
    /// Observer run backward in time from a terminal state,
    /// `∂ẑ/∂ν = −k(y − ẑ_t)`.
    ObserverBackward { k: f64 },
}

impl Mode {
    pub fn gain(&self) -> f64 {
        match *self {
            Mode::Plant => 0.0,
            Mode::ObserverForward { k } | Mode::ObserverBackward { k } => k,
        }
    }

    fn is_observer(&self) -> bool {
        !matches!(self, Mode::Plant)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    dx: f64,
    dt: f64,
    mode: Mode,
    neumann: Vec<(usize, u8)>,
}

impl Grid {
    pub fn cfl(dim: usize) -> f64 {
        if dim == 1 {
            CFL_1D
        } else {
            CFL_2D
        }
    }

    /// Grid with an explicit time step.
    pub fn new(dim: usize, points_per_axis: usize, dt: f64, mode: Mode) -> Result<Grid> {
        if dim != 1 && dim != 2 {
            return Err(Error::Unsupported(format!("simulation supports dim 1 or 2, got {dim}")));
        }
        if points_per_axis < 16 {
            return Err(Error::Config(format!("points_per_axis must be >= 16, got {points_per_axis}")));
        }
        let dx = 1.0 / (points_per_axis - 1) as f64;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        let limit = Self::cfl(dim) * dx;
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::Config(format!("CFL violated: dt = {dt} > {limit}")));
        }
        let k = mode.gain();
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::Config(format!("injection gain must be finite and >= 0, got {k}")));
        }
        let n = points_per_axis;
        let neumann = match dim {
            1 => vec![(n - 1, 1)],
            _ => {
                let mut v = Vec::with_capacity(2 * n - 3);
                for i in 1..n {
                    for j in 1..n {
                        let faces = u8::from(i == n - 1) + u8::from(j == n - 1);
                        if faces > 0 {
                            v.push((i * n + j, faces));
                        }
                    }
                }
                v
            }
        };
        Ok(Grid {
            dim,
            n,
            dx,
            dt,
            mode,
            neumann,
        })
    }

    /// Largest CFL-admissible step that divides `horizon` evenly.
    pub fn for_horizon(dim: usize, points_per_axis: usize, horizon: f64, mode: Mode) -> Result<Grid> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        let dx = 1.0 / (points_per_axis.max(2) - 1) as f64;
        let steps = (horizon / (Self::cfl(dim) * dx)).ceil().max(1.0);
        Self::new(dim, points_per_axis, horizon / steps, mode)
    }

    pub fn with_mode(&self, mode: Mode) -> Result<Grid> {
        Grid::new(self.dim, self.n, self.dt, mode)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn points_per_axis(&self) -> usize {
        self.n
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn node_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Coordinates of a flat node index (`i·N + j` in 2-D).
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        match self.dim {
            1 => [idx as f64 * self.dx, 0.0],
            _ => [(idx / self.n) as f64 * self.dx, (idx % self.n) as f64 * self.dx],
        }
    }

    pub fn is_dirichlet(&self, idx: usize) -> bool {
        match self.dim {
            1 => idx == 0,
            _ => idx / self.n == 0 || idx % self.n == 0,
        }
    }

    /// Γ_N nodes in increasing flat index.
    pub fn neumann_nodes(&self) -> Vec<usize> {
        self.neumann.iter().map(|&(i, _)| i).collect()
    }

    /// Quadrature weights on Γ_N aligned with `neumann_nodes`; face
    /// trapezoid rules, so the 2-D corner collects half a cell from each.
    pub fn trace_weights(&self) -> Vec<f64> {
        match self.dim {
            1 => vec![1.0],
            // interior face nodes carry dx; the corner gets dx/2 from each face
            _ => vec![self.dx; self.neumann.len()],
        }
    }

    fn axis_weights(&self) -> Vec<f64> {
        let mut w = vec![self.dx; self.n];
        w[0] *= 0.5;
        w[self.n - 1] *= 0.5;
        w
    }

    /// Trapezoid weights on Ω.
    pub fn volume_weights(&self) -> Vec<f64> {
        let w = self.axis_weights();
        match self.dim {
            1 => w,
            _ => {
                let mut out = Vec::with_capacity(self.n * self.n);
                for wi in &w {
                    for wj in &w {
                        out.push(wi * wj);
                    }
                }
                out
            }
        }
    }

    /// Number of steps covering `horizon`; errors unless it is a multiple of dt.
    pub fn steps_for(&self, horizon: f64) -> Result<usize> {
        let m = (horizon / self.dt).round();
        if !(horizon >= 0.0) || (m * self.dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::Config(format!(
                "horizon {horizon} is not a multiple of dt = {}",
                self.dt
            )));
        }
        Ok(m as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    pub z: Vec<f64>,
    pub zt: Vec<f64>,
    pub t: f64,
}

impl WaveField {
    pub fn zeros(grid: &Grid) -> WaveField {
        WaveField {
            z: vec![0.0; grid.node_count()],
            zt: vec![0.0; grid.node_count()],
            t: 0.0,
        }
    }

    /// Samples `z₀` and `z₁` at the nodes. Values on Γ_D must vanish to
    /// within 1e-12 and are then set to exactly zero.
    pub fn from_fn<F0, F1>(grid: &Grid, z0: F0, z1: F1) -> Result<WaveField>
    where
        F0: Fn(&[f64]) -> f64,
        F1: Fn(&[f64]) -> f64,
    {
        let mut f = WaveField::zeros(grid);
        for idx in 0..grid.node_count() {
            let c = grid.coords(idx);
            let x = &c[..grid.dim];
            f.z[idx] = z0(x);
            f.zt[idx] = z1(x);
        }
        for idx in 0..grid.node_count() {
            if grid.is_dirichlet(idx) {
                if f.z[idx].abs() > 1e-12 || f.zt[idx].abs() > 1e-12 {
                    return Err(Error::invalid(format!(
                        "initial data does not vanish on the Dirichlet boundary at {:?}",
                        &grid.coords(idx)[..grid.dim]
                    )));
                }
                f.z[idx] = 0.0;
                f.zt[idx] = 0.0;
            }
        }
        f.validate(grid)?;
        Ok(f)
    }

    pub fn at_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let n = grid.node_count();
        if self.z.len() != n || self.zt.len() != n {
            return Err(Error::invalid(format!(
                "field has {} / {} values, grid has {n} nodes",
                self.z.len(),
                self.zt.len()
            )));
        }
        if !self.z.iter().chain(&self.zt).all(|v| v.is_finite()) {
            return Err(Error::invalid("field contains non-finite values"));
        }
        check_dirichlet(&self.z, grid)
    }

    pub fn scaled(&self, c: f64) -> WaveField {
        WaveField {
            z: self.z.iter().map(|v| c * v).collect(),
            zt: self.zt.iter().map(|v| c * v).collect(),
            t: self.t,
        }
    }

    /// `self − other`, keeping `self.t`.
    pub fn diff(&self, other: &WaveField) -> WaveField {
        WaveField {
            z: self.z.iter().zip(&other.z).map(|(a, b)| a - b).collect(),
            zt: self.zt.iter().zip(&other.zt).map(|(a, b)| a - b).collect(),
            t: self.t,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.z.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

fn check_dirichlet(z: &[f64], grid: &Grid) -> Result<()> {
    for (idx, &v) in z.iter().enumerate() {
        if grid.is_dirichlet(idx) && v != 0.0 {
            return Err(Error::invalid(format!(
                "field does not vanish on the Dirichlet boundary at {:?} (value {v})",
                &grid.coords(idx)[..grid.dim]
            )));
        }
    }
    Ok(())
}

/// Samples of `z_t` on Γ_N at uniform times `t0 + i·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub t0: f64,
    pub dt: f64,
    pub nodes: Vec<usize>,
    pub samples: Vec<Vec<f64>>,
}

impl BoundaryTrace {
    pub fn new(t0: f64, dt: f64, nodes: Vec<usize>, samples: Vec<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0) || samples.is_empty() {
            return Err(Error::invalid("trace needs dt > 0 and at least one sample"));
        }
        if samples.iter().any(|s| s.len() != nodes.len()) {
            return Err(Error::invalid("trace sample width does not match its node list"));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("trace contains non-finite values"));
        }
        Ok(BoundaryTrace {
            t0,
            dt,
            nodes,
            samples,
        })
    }

    pub fn zeros(grid: &Grid, t0: f64, steps: usize) -> Self {
        let nodes = grid.neumann_nodes();
        let w = nodes.len();
        BoundaryTrace {
            t0,
            dt: grid.dt,
            nodes,
            samples: vec![vec![0.0; w]; steps + 1],
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + (self.len() - 1) as f64 * self.dt
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// Linear interpolation between samples; `t` may exceed the span by
    /// 1e-9·dt of rounding.
    pub fn value_at(&self, t: f64) -> Result<Vec<f64>> {
        let s = (t - self.t0) / self.dt;
        let last = (self.len() - 1) as f64;
        let slack = 1e-9;
        if s < -slack || s > last + slack {
            return Err(Error::invalid(format!(
                "trace spans [{}, {}], requested t = {t}",
                self.t0,
                self.t_end()
            )));
        }
        let s = s.clamp(0.0, last);
        let r = s.round();
        if (s - r).abs() <= slack {
            return Ok(self.samples[r as usize].clone());
        }
        let i = s.floor() as usize;
        let w = s - i as f64;
        Ok(self.samples[i]
            .iter()
            .zip(&self.samples[i + 1])
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect())
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.nodes != grid.neumann_nodes() {
            return Err(Error::invalid(format!(
                "trace has {} boundary nodes, grid has {}",
                self.nodes.len(),
                grid.neumann.len()
            )));
        }
        Ok(())
    }

    /// Pointwise sum; shapes must agree.
    pub fn added(&self, other: &BoundaryTrace) -> Result<BoundaryTrace> {
        if self.nodes != other.nodes || self.len() != other.len() || (self.dt - other.dt).abs() > 1e-12 * self.dt {
            return Err(Error::invalid("traces differ in shape"));
        }
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        Ok(BoundaryTrace {
            samples,
            ..self.clone()
        })
    }

    pub fn scaled(&self, c: f64) -> BoundaryTrace {
        BoundaryTrace {
            samples: self.samples.iter().map(|s| s.iter().map(|v| c * v).collect()).collect(),
            ..self.clone()
        }
    }

    /// `∫∫ y² dΓ dt` with trapezoid rules in time and on Γ_N.
    pub fn l2_squared(&self, grid: &Grid) -> Result<f64> {
        self.check_grid(grid)?;
        let w = grid.trace_weights();
        let m = self.len();
        Ok(self
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let wt = if m == 1 {
                    0.0
                } else if i == 0 || i == m - 1 {
                    0.5 * self.dt
                } else {
                    self.dt
                };
                wt * s.iter().zip(&w).map(|(v, wg)| wg * v * v).sum::<f64>()
            })
            .sum())
    }
}

type NonlinearFn = dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync;

/// Right-hand side `f(z, x, t)` with its declared slope bound g₁ and the
/// radius on which that bound holds (`None` for a global bound).
#[derive(Clone)]
pub struct Nonlinearity {
    f: Arc<NonlinearFn>,
    pub g1: f64,
    pub local_radius: Option<f64>,
}

impl std::fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("g1", &self.g1)
            .field("local_radius", &self.local_radius)
            .finish_non_exhaustive()
    }
}

impl Nonlinearity {
    pub fn custom<F>(f: F, g1: f64, local_radius: Option<f64>) -> Self
    where
        F: Fn(f64, &[f64], f64) -> f64 + Send + Sync + 'static,
    {
        Nonlinearity {
            f: Arc::new(f),
            g1,
            local_radius,
        }
    }

    pub fn zero() -> Self {
        Self::custom(|_, _, _| 0.0, 0.0, None)
    }

    /// `f = g·z`.
    pub fn linear(g: f64) -> Self {
        Self::custom(move |z, _, _| g * z, g.abs(), None)
    }

    /// `f = c·z²`, slope bound `2|c|d` on `|z| ≤ d`.
    pub fn quadratic(c: f64, d: f64) -> Self {
        Self::custom(move |z, _, _| c * z * z, 2.0 * c.abs() * d, Some(d))
    }

    #[inline]
    pub fn eval(&self, z: f64, x: &[f64], t: f64) -> f64 {
        (self.f)(z, x, t)
    }

    /// Central-difference slope samples on `|z| ≤ radius` (or `[-1, 1]`
    /// without a radius) must stay within g₁ up to `tol`.
    pub fn check_slope_bound(&self, x: &[f64], t: f64, samples: usize, tol: f64) -> Result<()> {
        let r = self.local_radius.unwrap_or(1.0);
        let h = 1e-6 * r.max(1e-3);
        for s in 0..=samples {
            let z = -r + 2.0 * r * s as f64 / samples.max(1) as f64;
            let slope = (self.eval(z + h, x, t) - self.eval(z - h, x, t)) / (2.0 * h);
            if slope.abs() > self.g1 + tol {
                return Err(Error::invalid(format!(
                    "|df/dz| = {} exceeds g1 = {} at z = {z}",
                    slope.abs(),
                    self.g1
                )));
            }
        }
        Ok(())
    }
}

/// `Δz + f(z)` with the homogeneous ghost-node closure on Γ_N; zero on Γ_D.
fn base_accel(grid: &Grid, nl: &Nonlinearity, z: &[f64], t: f64, out: &mut [f64]) {
    let n = grid.n;
    let inv = 1.0 / (grid.dx * grid.dx);
    match grid.dim {
        1 => {
            out[0] = 0.0;
            for i in 1..n {
                let right = if i == n - 1 { z[i - 1] } else { z[i + 1] };
                let x = [i as f64 * grid.dx];
                out[i] = (z[i - 1] - 2.0 * z[i] + right) * inv + nl.eval(z[i], &x, t);
            }
        }
        _ => {
            for i in 0..n {
                for j in 0..n {
                    let idx = i * n + j;
                    if i == 0 || j == 0 {
                        out[idx] = 0.0;
                        continue;
                    }
                    let xp = if i == n - 1 { z[idx - n] } else { z[idx + n] };
                    let yp = if j == n - 1 { z[idx - 1] } else { z[idx + 1] };
                    let lap = (z[idx - n] + xp + z[idx - 1] + yp - 4.0 * z[idx]) * inv;
                    let x = [i as f64 * grid.dx, j as f64 * grid.dx];
                    out[idx] = lap + nl.eval(z[idx], &x, t);
                }
            }
        }
    }
}

/// One step of the forward-in-time scheme with injection gain `k` and
/// boundary data `y_now`, `y_next` on Γ_N. `t_now`, `t_next` are the
/// physical times passed to `f`.
#[allow(clippy::too_many_arguments)]
fn advance(
    grid: &Grid,
    nl: &Nonlinearity,
    z: &[f64],
    v: &[f64],
    t_now: f64,
    t_next: f64,
    k: f64,
    y_now: &[f64],
    y_next: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let len = z.len();
    let dt = grid.dt;
    let flux = 2.0 * k / grid.dx;
    let mut a = vec![0.0; len];
    base_accel(grid, nl, z, t_now, &mut a);
    for (m, &(idx, faces)) in grid.neumann.iter().enumerate() {
        a[idx] += f64::from(faces) * flux * (y_now[m] - v[idx]);
    }
    let mut vh = vec![0.0; len];
    let mut z1 = vec![0.0; len];
    for i in 0..len {
        if grid.is_dirichlet(i) {
            continue;
        }
        vh[i] = v[i] + 0.5 * dt * a[i];
        z1[i] = z[i] + dt * vh[i];
    }
    base_accel(grid, nl, &z1, t_next, &mut a);
    let mut v1 = vec![0.0; len];
    for i in 0..len {
        if !grid.is_dirichlet(i) {
            v1[i] = vh[i] + 0.5 * dt * a[i];
        }
    }
    for (m, &(idx, faces)) in grid.neumann.iter().enumerate() {
        let c = f64::from(faces);
        v1[idx] = (vh[idx] + 0.5 * dt * (a[idx] + c * flux * y_next[m])) / (1.0 + 0.5 * dt * c * flux);
    }
    (z1, v1)
}

/// Advances `field` by one step: to `t + dt` in plant and forward
/// observer mode, to `t − dt` in backward mode. `input` holds the
/// measured Γ_N velocities at the current and the next solver time.
pub fn step(field: &WaveField, grid: &Grid, nl: &Nonlinearity, input: Option<(&[f64], &[f64])>) -> Result<WaveField> {
    let width = grid.neumann.len();
    let zeros;
    let (y0, y1) = match (grid.mode.is_observer(), input) {
        (true, Some((a, b))) => {
            if a.len() != width || b.len() != width {
                return Err(Error::invalid(format!("boundary input must have {width} values")));
            }
            (a, b)
        }
        (false, None) => {
            zeros = vec![0.0; width];
            (&zeros[..], &zeros[..])
        }
        (true, None) => return Err(Error::invalid("observer step needs boundary input")),
        (false, Some(_)) => return Err(Error::invalid("plant step takes no boundary input")),
    };
    let dt = grid.dt;
    let (z, zt, t) = match grid.mode {
        Mode::Plant | Mode::ObserverForward { .. } => {
            let (z, v) = advance(grid, nl, &field.z, &field.zt, field.t, field.t + dt, grid.mode.gain(), y0, y1);
            (z, v, field.t + dt)
        }
        Mode::ObserverBackward { k } => {
            // τ = t₀ + T − t turns the backward observer into a forward
            // observer for (z, −z_t) driven by −y.
            let w: Vec<f64> = field.zt.iter().map(|v| -v).collect();
            let ny0: Vec<f64> = y0.iter().map(|v| -v).collect();
            let ny1: Vec<f64> = y1.iter().map(|v| -v).collect();
            let (z, v) = advance(grid, nl, &field.z, &w, field.t, field.t - dt, k, &ny0, &ny1);
            (z, v.into_iter().map(|x| -x).collect(), field.t - dt)
        }
    };
    if !z.iter().chain(&zt).all(|v| v.is_finite()) {
        return Err(Error::Divergence { t });
    }
    Ok(WaveField { z, zt, t })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub field: WaveField,
    /// Γ_N velocities of the simulated field, ascending in time.
    pub trace: BoundaryTrace,
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
}

pub fn run(
    initial: &WaveField,
    horizon: f64,
    grid: &Grid,
    nl: &Nonlinearity,
    trace_in: Option<&BoundaryTrace>,
) -> Result<RunOutput> {
    run_with(initial, horizon, grid, nl, trace_in, |_| Ok(()))
}

/// Runs `horizon / dt` steps (backward in time for the backward observer)
/// and calls `on_level` on the initial field and after every step.
pub fn run_with<F>(
    initial: &WaveField,
    horizon: f64,
    grid: &Grid,
    nl: &Nonlinearity,
    trace_in: Option<&BoundaryTrace>,
    mut on_level: F,
) -> Result<RunOutput>
where
    F: FnMut(&WaveField) -> Result<()>,
{
    initial.validate(grid)?;
    let steps = grid.steps_for(horizon)?;
    if grid.dim == 1 && nl.g1 > MAX_SLOPE_AT_UNIT_CFL && grid.dt > 0.95 * grid.dx {
        return Err(Error::Config(format!(
            "slope bound g1 = {} needs dt <= 0.95 dx in one dimension",
            nl.g1
        )));
    }
    if let Some(tr) = trace_in {
        tr.check_grid(grid)?;
    }
    if grid.mode.is_observer() != trace_in.is_some() {
        return Err(Error::invalid("a boundary trace is required exactly in observer modes"));
    }
    let sign = if matches!(grid.mode, Mode::ObserverBackward { .. }) { -1.0 } else { 1.0 };
    let t_start = initial.t;
    let time_at = |i: usize| t_start + sign * i as f64 * grid.dt;

    let mut field = initial.clone();
    let mut samples = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    let mut energies = Vec::with_capacity(steps + 1);
    let record = |f: &WaveField, samples: &mut Vec<Vec<f64>>, times: &mut Vec<f64>, energies: &mut Vec<f64>| {
        samples.push(grid.neumann.iter().map(|&(i, _)| f.zt[i]).collect::<Vec<f64>>());
        times.push(f.t);
        energies.push(energy(f, grid));
    };
    record(&field, &mut samples, &mut times, &mut energies);
    on_level(&field)?;
    let mut y_now = match trace_in {
        Some(tr) => Some(tr.value_at(time_at(0))?),
        None => None,
    };
    for i in 0..steps {
        let t_next = time_at(i + 1);
        let y_next = match trace_in {
            Some(tr) => Some(tr.value_at(t_next)?),
            None => None,
        };
        let input = y_now.as_deref().zip(y_next.as_deref());
        let mut next = step(&field, grid, nl, input)?;
        next.t = t_next;
        field = next;
        record(&field, &mut samples, &mut times, &mut energies);
        on_level(&field)?;
        y_now = y_next;
    }
    if sign < 0.0 {
        samples.reverse();
        times.reverse();
        energies.reverse();
    }
    let trace = BoundaryTrace {
        t0: times[0],
        dt: grid.dt,
        nodes: grid.neumann_nodes(),
        samples,
    };
    Ok(RunOutput {
        field,
        trace,
        times,
        energy: energies,
    })
}

/// Fourth-order first derivative along a line of `n` samples with stride `s`.
fn derivative_line(v: &[f64], start: usize, stride: usize, n: usize, dx: f64, out: &mut [f64]) {
    let at = |i: usize| v[start + i * stride];
    let c = 1.0 / (12.0 * dx);
    for i in 0..n {
        let d = if i == 0 {
            -25.0 * at(0) + 48.0 * at(1) - 36.0 * at(2) + 16.0 * at(3) - 3.0 * at(4)
        } else if i == 1 {
            -3.0 * at(0) - 10.0 * at(1) + 18.0 * at(2) - 6.0 * at(3) + at(4)
        } else if i == n - 2 {
            3.0 * at(n - 1) + 10.0 * at(n - 2) - 18.0 * at(n - 3) + 6.0 * at(n - 4) - at(n - 5)
        } else if i == n - 1 {
            25.0 * at(n - 1) - 48.0 * at(n - 2) + 36.0 * at(n - 3) - 16.0 * at(n - 4) + 3.0 * at(n - 5)
        } else {
            at(i - 2) - 8.0 * at(i - 1) + 8.0 * at(i + 1) - at(i + 2)
        };
        out[start + i * stride] = c * d;
    }
}

/// Gradient components of `z`; the second is empty in 1-D.
pub fn gradient(z: &[f64], grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n;
    let mut gx = vec![0.0; z.len()];
    match grid.dim {
        1 => {
            derivative_line(z, 0, 1, n, grid.dx, &mut gx);
            (gx, Vec::new())
        }
        _ => {
            let mut gy = vec![0.0; z.len()];
            for j in 0..n {
                derivative_line(z, j, n, n, grid.dx, &mut gx);
            }
            for i in 0..n {
                derivative_line(z, i * n, 1, n, grid.dx, &mut gy);
            }
            (gx, gy)
        }
    }
}

fn grad_sq(grid: &Grid, z: &[f64]) -> Vec<f64> {
    let (gx, gy) = gradient(z, grid);
    if gy.is_empty() {
        gx.iter().map(|v| v * v).collect()
    } else {
        gx.iter().zip(&gy).map(|(a, b)| a * a + b * b).collect()
    }
}

fn integrate(weights: &[f64], values: impl Iterator<Item = f64>) -> f64 {
    weights.iter().zip(values).map(|(w, v)| w * v).sum()
}

fn boundary_integral_sq(grid: &Grid, z: &[f64]) -> f64 {
    grid.neumann
        .iter()
        .zip(grid.trace_weights())
        .map(|(&(i, _), w)| w * z[i] * z[i])
        .sum()
}

/// `½∫(|∇z|² + z_t²)`.
pub fn energy(field: &WaveField, grid: &Grid) -> f64 {
    let w = grid.volume_weights();
    let g2 = grad_sq(grid, &field.z);
    0.5 * integrate(&w, g2.iter().zip(&field.zt).map(|(g, v)| g + v * v))
}

/// `E + χ∫[2(x·∇z) + (n−1)z]z_t + χk(n−1)/2 ∫_{Γ_N} z²`.
pub fn lyapunov(field: &WaveField, grid: &Grid, chi: f64, k: f64) -> f64 {
    let e = energy(field, grid);
    if chi == 0.0 {
        return e;
    }
    let w = grid.volume_weights();
    let (gx, gy) = gradient(&field.z, grid);
    let n1 = (grid.dim - 1) as f64;
    let cross = integrate(
        &w,
        (0..field.z.len()).map(|idx| {
            let c = grid.coords(idx);
            let xg = if gy.is_empty() {
                c[0] * gx[idx]
            } else {
                c[0] * gx[idx] + c[1] * gy[idx]
            };
            (2.0 * xg + n1 * field.z[idx]) * field.zt[idx]
        }),
    );
    let boundary = if grid.dim > 1 {
        0.5 * chi * k * n1 * boundary_integral_sq(grid, &field.z)
    } else {
        0.0
    };
    e + chi * cross + boundary
}

/// `∫[4/(π²n)|∇e|² − e²]`; non-negative in exact arithmetic.
pub fn wirtinger_check(field: &WaveField, grid: &Grid) -> Result<f64> {
    check_dirichlet(&field.z, grid)?;
    let w = grid.volume_weights();
    let c = 4.0 / (std::f64::consts::PI.powi(2) * grid.dim as f64);
    let g2 = grad_sq(grid, &field.z);
    Ok(integrate(&w, g2.iter().zip(&field.z).map(|(g, e)| c * g - e * e)))
}

/// `∫_Ω|∇e|² − ∫_{Γ_N} e²`; non-negative in exact arithmetic.
pub fn trace_check(field: &WaveField, grid: &Grid) -> Result<f64> {
    check_dirichlet(&field.z, grid)?;
    let w = grid.volume_weights();
    let g2 = grad_sq(grid, &field.z);
    Ok(integrate(&w, g2.into_iter()) - boundary_integral_sq(grid, &field.z))
}

/// `∫₀¹ z_x² − max z²` in one dimension.
pub fn sobolev_check(field: &WaveField, grid: &Grid) -> Result<f64> {
    if grid.dim != 1 {
        return Err(Error::Unsupported("Sobolev bound is one-dimensional".into()));
    }
    check_dirichlet(&field.z, grid)?;
    let w = grid.volume_weights();
    let g2 = grad_sq(grid, &field.z);
    let max = field.z.iter().fold(0.0f64, |m, v| m.max(v * v));
    Ok(integrate(&w, g2.into_iter()) - max)
}

pub fn trajectory_header(grid: &Grid) -> String {
    let mut h = String::from("t,E,V");
    for idx in grid.neumann_nodes() {
        let c = grid.coords(idx);
        if grid.dim == 1 {
            h.push_str(&format!(",trace_{}", fmt_coord(c[0])));
        } else {
            h.push_str(&format!(",trace_{}_{}", fmt_coord(c[0]), fmt_coord(c[1])));
        }
    }
    h
}

fn fmt_coord(x: f64) -> String {
    format!("{x:.6}")
}

pub fn trajectory_row(field: &WaveField, grid: &Grid, chi: f64, k: f64) -> String {
    let mut row = format!(
        "{},{},{}",
        fmt_f64(field.t),
        fmt_f64(energy(field, grid)),
        fmt_f64(lyapunov(field, grid, chi, k))
    );
    for (idx, _) in &grid.neumann {
        row.push(',');
        row.push_str(&fmt_f64(field.zt[*idx]));
    }
    row
}

/// Snapshot CSV `x,z,zt` (1-D) or `x,y,z,zt` (2-D).
pub fn snapshot_csv(field: &WaveField, grid: &Grid) -> String {
    let mut out = String::from(if grid.dim == 1 { "x,z,zt\n" } else { "x,y,z,zt\n" });
    for idx in 0..grid.node_count() {
        let c = grid.coords(idx);
        let pos = if grid.dim == 1 {
            fmt_f64(c[0])
        } else {
            format!("{},{}", fmt_f64(c[0]), fmt_f64(c[1]))
        };
        out.push_str(&format!("{pos},{},{}\n", fmt_f64(field.z[idx]), fmt_f64(field.zt[idx])));
    }
    out
}
