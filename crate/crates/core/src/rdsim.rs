//! Explicit Euler integration of the linear Turing and Gray-Scott reaction-diffusion models on a
//! periodic grid.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{variance, SeededRng};

/// Two morphogen fields on a periodic `height × width` grid, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RDGrid {
    pub height: usize,
    pub width: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub time: f64,
}

impl RDGrid {
    pub fn uniform(height: usize, width: usize, u: f64, v: f64) -> Result<Self> {
        if height < 3 || width < 3 {
            return Err(Error::InvalidParameter(format!("grid must be at least 3x3, got {height}x{width}")));
        }
        Ok(Self { height, width, u: vec![u; height * width], v: vec![v; height * width], time: 0.0 })
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// Cyclic shift of both fields by `(dr, dc)` cells.
    pub fn shifted(&self, dr: usize, dc: usize) -> RDGrid {
        let (h, w) = (self.height, self.width);
        let mut out = self.clone();
        for r in 0..h {
            for c in 0..w {
                let dst = ((r + dr) % h) * w + (c + dc) % w;
                out.u[dst] = self.u[r * w + c];
                out.v[dst] = self.v[r * w + c];
            }
        }
        out
    }
}

/// Five-point stencil with periodic wraparound and unit spacing at `(r, c)`.
pub fn laplacian(field: &[f64], height: usize, width: usize, r: usize, c: usize) -> f64 {
    let up = if r == 0 { height - 1 } else { r - 1 };
    let down = if r + 1 == height { 0 } else { r + 1 };
    let left = if c == 0 { width - 1 } else { c - 1 };
    let right = if c + 1 == width { 0 } else { c + 1 };
    field[up * width + c] + field[down * width + c] + field[r * width + left] + field[r * width + right]
        - 4.0 * field[r * width + c]
}

/// [`laplacian`] at every cell.
pub fn laplacian_field(field: &[f64], height: usize, width: usize) -> Vec<f64> {
    let mut out = vec![0.0; height * width];
    laplacian_into(field, height, width, &mut out);
    out
}

fn laplacian_into(field: &[f64], height: usize, width: usize, out: &mut [f64]) {
    for r in 0..height {
        for c in 0..width {
            out[r * width + c] = laplacian(field, height, width, r, c);
        }
    }
}

/// `u' = a(u−h) + b(v−k) + μ∇²u`, `v' = c(u−h) + d(v−k) + ν∇²v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuringParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub h: f64,
    pub k: f64,
    pub mu: f64,
    pub nu: f64,
    pub dt: f64,
    /// Grid spacing; the discrete Laplacian is divided by `dx²`.
    pub dx: f64,
}

impl TuringParams {
    /// The published parameter set on a 100×100 unit square.
    pub fn paper() -> Self {
        Self { a: 1.0, b: -1.0, c: 3.0, d: -1.5, h: 1.0, k: 1.0, mu: 1e-4, nu: 6e-4, dt: 0.02, dx: 0.01 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.dx > 0.0) {
            return Err(Error::InvalidParameter("dt and dx must be positive".into()));
        }
        Ok(())
    }
}

/// `u' = F(1−u) − uv² + μ∇²u`, `v' = −(F+k)v + uv² + ν∇²v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrayScottParams {
    pub f: f64,
    pub k: f64,
    pub mu: f64,
    pub nu: f64,
    pub dt: f64,
    pub dx: f64,
}

/// Feed and kill rates of the four published Gray-Scott runs.
pub const GRAY_SCOTT_PRESETS: [(f64, f64); 4] = [(0.025, 0.055), (0.025, 0.060), (0.040, 0.060), (0.035, 0.065)];

impl GrayScottParams {
    pub fn paper(f: f64, k: f64) -> Self {
        Self { f, k, mu: 2e-5, nu: 1e-5, dt: 1.0, dx: 0.01 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.dx > 0.0) {
            return Err(Error::InvalidParameter("dt and dx must be positive".into()));
        }
        if self.f < 0.0 || self.k < 0.0 {
            return Err(Error::InvalidParameter("feed and kill rates must be non-negative".into()));
        }
        Ok(())
    }
}

/// `u = h + U(−amp, amp)`, `v = k + U(−amp, amp)` per cell; all `u` draws precede the `v` draws.
pub fn init_turing(height: usize, width: usize, h: f64, k: f64, amplitude: f64, rng: &mut SeededRng) -> Result<RDGrid> {
    if !(amplitude >= 0.0) {
        return Err(Error::InvalidParameter(format!("amplitude must be non-negative, got {amplitude}")));
    }
    let mut g = RDGrid::uniform(height, width, h, k)?;
    if amplitude > 0.0 {
        g.u.iter_mut().for_each(|x| *x += rng.uniform(-amplitude, amplitude));
        g.v.iter_mut().for_each(|x| *x += rng.uniform(-amplitude, amplitude));
    }
    Ok(g)
}

/// `u ≡ 1`, `v ≡ 0` with a central `patch × patch` square inverted.
pub fn init_grayscott(height: usize, width: usize, patch: usize) -> Result<RDGrid> {
    if patch > height || patch > width {
        return Err(Error::InvalidParameter(format!("patch {patch} exceeds the {height}x{width} grid")));
    }
    let mut g = RDGrid::uniform(height, width, 1.0, 0.0)?;
    let (r0, c0) = ((height - patch) / 2, (width - patch) / 2);
    for r in r0..r0 + patch {
        for c in c0..c0 + patch {
            g.u[r * width + c] = 0.0;
            g.v[r * width + c] = 1.0;
        }
    }
    Ok(g)
}

/// Reusable Laplacian buffers so stepping does not allocate.
#[derive(Default)]
pub struct Workspace {
    lu: Vec<f64>,
    lv: Vec<f64>,
}

impl Workspace {
    fn prepare(&mut self, g: &RDGrid) {
        self.lu.resize(g.cells(), 0.0);
        self.lv.resize(g.cells(), 0.0);
        laplacian_into(&g.u, g.height, g.width, &mut self.lu);
        laplacian_into(&g.v, g.height, g.width, &mut self.lv);
    }
}

pub fn step_turing(grid: &RDGrid, p: &TuringParams) -> Result<RDGrid> {
    let mut next = grid.clone();
    step_turing_in_place(&mut next, p, &mut Workspace::default(), 0)?;
    Ok(next)
}

pub fn step_grayscott(grid: &RDGrid, p: &GrayScottParams) -> Result<RDGrid> {
    let mut next = grid.clone();
    step_grayscott_in_place(&mut next, p, &mut Workspace::default(), 0)?;
    Ok(next)
}

fn step_turing_in_place(g: &mut RDGrid, p: &TuringParams, ws: &mut Workspace, step: usize) -> Result<()> {
    ws.prepare(g);
    let (du, dv) = (p.mu / (p.dx * p.dx), p.nu / (p.dx * p.dx));
    for i in 0..g.cells() {
        let (u, v) = (g.u[i] - p.h, g.v[i] - p.k);
        g.u[i] += p.dt * (p.a * u + p.b * v + du * ws.lu[i]);
        g.v[i] += p.dt * (p.c * u + p.d * v + dv * ws.lv[i]);
    }
    g.time += p.dt;
    if !g.is_finite() {
        return Err(Error::NonFinite { step });
    }
    Ok(())
}

fn step_grayscott_in_place(g: &mut RDGrid, p: &GrayScottParams, ws: &mut Workspace, step: usize) -> Result<()> {
    ws.prepare(g);
    let (du, dv) = (p.mu / (p.dx * p.dx), p.nu / (p.dx * p.dx));
    for i in 0..g.cells() {
        let (u, v) = (g.u[i], g.v[i]);
        let uvv = u * v * v;
        g.u[i] += p.dt * (p.f * (1.0 - u) - uvv + du * ws.lu[i]);
        g.v[i] += p.dt * (-(p.f + p.k) * v + uvv + dv * ws.lv[i]);
    }
    g.time += p.dt;
    if !g.is_finite() {
        return Err(Error::NonFinite { step });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum RdModel {
    Turing(TuringParams),
    GrayScott(GrayScottParams),
}

impl RdModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            RdModel::Turing(p) => p.validate(),
            RdModel::GrayScott(p) => p.validate(),
        }
    }

    /// Advances `grid` by one step, reusing `ws`.
    pub fn step(&self, grid: &mut RDGrid, ws: &mut Workspace, step: usize) -> Result<()> {
        match self {
            RdModel::Turing(p) => step_turing_in_place(grid, p, ws, step),
            RdModel::GrayScott(p) => step_grayscott_in_place(grid, p, ws, step),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialStats {
    pub var_u: f64,
    pub var_v: f64,
    /// Smallest value over both fields.
    pub min: f64,
    /// Largest value over both fields.
    pub max: f64,
}

pub fn spatial_stats(grid: &RDGrid) -> SpatialStats {
    let (min, max) =
        grid.u.iter().chain(&grid.v).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    SpatialStats { var_u: variance(&grid.u), var_v: variance(&grid.v), min, max }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub step: usize,
    pub time: f64,
    pub stats: SpatialStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdRun {
    /// `(step, grid)` at every multiple of `snapshot_every`, including step 0.
    pub snapshots: Vec<(usize, RDGrid)>,
    pub stats: Vec<StatsRow>,
    pub final_grid: RDGrid,
}

impl RdRun {
    pub fn write_stats_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "time", "var_u", "var_v", "min", "max"])?;
        for row in &self.stats {
            let s = row.stats;
            w.write_record([
                row.step.to_string(),
                row.time.to_string(),
                s.var_u.to_string(),
                s.var_v.to_string(),
                s.min.to_string(),
                s.max.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `steps` updates from `grid`, recording a snapshot and statistics every `snapshot_every`
/// steps (`floor(steps / snapshot_every) + 1` records).
pub fn run_rd(model: &RdModel, grid: RDGrid, steps: usize, snapshot_every: usize) -> Result<RdRun> {
    model.validate()?;
    if snapshot_every == 0 {
        return Err(Error::InvalidParameter("snapshot_every must be positive".into()));
    }
    let mut g = grid;
    let mut ws = Workspace::default();
    let mut snapshots = vec![(0, g.clone())];
    let mut stats = vec![StatsRow { step: 0, time: g.time, stats: spatial_stats(&g) }];
    for s in 1..=steps {
        model.step(&mut g, &mut ws, s)?;
        if s % snapshot_every == 0 {
            stats.push(StatsRow { step: s, time: g.time, stats: spatial_stats(&g) });
            snapshots.push((s, g.clone()));
        }
    }
    Ok(RdRun { snapshots, stats, final_grid: g })
}
