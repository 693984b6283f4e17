//! Periodic grids on `[0, L)^d`, derivatives, mollification and Sobolev norms.
//!
//! Grid points are stored with `x` varying fastest: point `p = ix + N·iy`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("points per axis must be a power of two and at least 8, got {0}")]
    BadSize(usize),
    #[error("spatial dimension must be 1 or 2, got {0}")]
    BadDimension(usize),
    #[error("domain length must be positive and finite, got {0}")]
    BadLength(f64),
    #[error("field has {got} values, grid has {expected} points")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("component {comp} is not positive at point {point} (value {value})")]
    NotPositive { comp: usize, point: usize, value: f64 },
    #[error("snapshot format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    pub n: usize,
    pub length: f64,
}

impl Grid {
    pub fn new(d: usize, n: usize, length: f64) -> Result<Self, GridError> {
        if !(1..=2).contains(&d) {
            return Err(GridError::BadDimension(d));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(GridError::BadSize(n));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(GridError::BadLength(length));
        }
        Ok(Self { d, n, length })
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Total number of grid points, `N^d`.
    pub fn points(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(self.d as i32)
    }

    /// Multi-index of point `p`.
    pub fn index(&self, p: usize) -> [usize; 2] {
        [p % self.n, p / self.n]
    }

    pub fn coords(&self, p: usize) -> [f64; 2] {
        let [ix, iy] = self.index(p);
        [ix as f64 * self.dx(), iy as f64 * self.dx()]
    }

    /// Neighbour of `p` shifted by `offset` along `axis`, with periodic wrap.
    #[inline]
    pub fn shift(&self, p: usize, axis: usize, offset: isize) -> usize {
        let n = self.n as isize;
        let [ix, iy] = self.index(p);
        if axis == 0 {
            let j = (ix as isize + offset).rem_euclid(n) as usize;
            j + self.n * iy
        } else {
            let j = (iy as isize + offset).rem_euclid(n) as usize;
            ix + self.n * j
        }
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.points())
            .map(|p| {
                let c = self.coords(p);
                f(&c[..self.d])
            })
            .collect()
    }

    /// Riemann sum `Σ f · dx^d`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        (f.iter().map(|v| v * v).sum::<f64>() * self.cell_volume()).sqrt()
    }

    /// Angular wavenumber for FFT index `j`.
    pub fn wavenumber(&self, j: usize) -> f64 {
        let n = self.n as isize;
        let j = j as isize;
        let m = if j <= n / 2 { j } else { j - n };
        2.0 * std::f64::consts::PI / self.length * m as f64
    }
}

/// Which variables a [`FieldState`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    U,
    WRank1,
    WGeneral,
    WAlt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub grid: Grid,
    /// One array per component, each over all grid points.
    pub comps: Vec<Vec<f64>>,
    pub space: Space,
    pub time: f64,
}

impl FieldState {
    pub fn new(grid: Grid, comps: Vec<Vec<f64>>, space: Space, time: f64) -> Result<Self, GridError> {
        for c in &comps {
            if c.len() != grid.points() {
                return Err(GridError::ShapeMismatch {
                    expected: grid.points(),
                    got: c.len(),
                });
            }
        }
        if space == Space::U {
            for (comp, c) in comps.iter().enumerate() {
                if let Some((point, &value)) = c.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                    return Err(GridError::NotPositive { comp, point, value });
                }
            }
        }
        Ok(Self {
            grid,
            comps,
            space,
            time,
        })
    }

    pub fn n_comps(&self) -> usize {
        self.comps.len()
    }

    pub fn point(&self, p: usize) -> Vec<f64> {
        self.comps.iter().map(|c| c[p]).collect()
    }

    pub fn min(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeScheme {
    #[default]
    Central2,
    Spectral,
}

/// FFT plans and wavenumbers for one grid.
#[derive(Clone)]
pub struct Spectral {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid,
            forward: planner.plan_fft_forward(grid.n),
            inverse: planner.plan_fft_inverse(grid.n),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn transform(&self, data: &mut [Complex<f64>], inverse: bool) {
        let n = self.grid.n;
        let plan = if inverse { &self.inverse } else { &self.forward };
        // x lines are contiguous
        plan.process(data);
        if self.grid.d == 2 {
            let mut line = vec![Complex::new(0.0, 0.0); n];
            for ix in 0..n {
                for iy in 0..n {
                    line[iy] = data[ix + n * iy];
                }
                plan.process(&mut line);
                for iy in 0..n {
                    data[ix + n * iy] = line[iy];
                }
            }
        }
    }

    /// Normalised coefficients `v̂ = DFT(v) / N^d`.
    pub fn forward(&self, f: &[f64]) -> Vec<Complex<f64>> {
        let mut data: Vec<Complex<f64>> = f.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        let scale = 1.0 / self.grid.points() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        data
    }

    pub fn inverse(&self, mut coeffs: Vec<Complex<f64>>) -> Vec<f64> {
        self.transform(&mut coeffs, true);
        coeffs.iter().map(|c| c.re).collect()
    }

    /// Applies the Fourier multiplier `m(ξ_x, ξ_y)`; `m` must be real and even.
    pub fn apply_multiplier(&self, f: &[f64], m: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut c = self.forward(f);
        for (p, v) in c.iter_mut().enumerate() {
            let [ix, iy] = self.grid.index(p);
            let ky = if self.grid.d == 2 { self.grid.wavenumber(iy) } else { 0.0 };
            *v *= m(self.grid.wavenumber(ix), ky);
        }
        self.inverse(c)
    }

    /// Spectral derivative along `axis`; the Nyquist mode is dropped.
    pub fn derivative(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let n = self.grid.n;
        let mut c = self.forward(f);
        for (p, v) in c.iter_mut().enumerate() {
            let j = self.grid.index(p)[axis];
            let k = if j == n / 2 { 0.0 } else { self.grid.wavenumber(j) };
            *v *= Complex::new(0.0, k);
        }
        self.inverse(c)
    }

    /// Sum of `|ξ^α|²` over multi-indices `|α| ≤ s`.
    pub fn sobolev_weight(&self, s: u32, kx: f64, ky: f64) -> f64 {
        let mut total = 0.0;
        for a in 0..=s {
            let bmax = if self.grid.d == 2 { s - a } else { 0 };
            for b in 0..=bmax {
                total += kx.powi(2 * a as i32) * ky.powi(2 * b as i32);
            }
        }
        total
    }

    pub fn sobolev_norm(&self, f: &[f64], s: u32) -> f64 {
        let c = self.forward(f);
        let mut acc = 0.0;
        for (p, v) in c.iter().enumerate() {
            let [ix, iy] = self.grid.index(p);
            let ky = if self.grid.d == 2 { self.grid.wavenumber(iy) } else { 0.0 };
            acc += v.norm_sqr() * self.sobolev_weight(s, self.grid.wavenumber(ix), ky);
        }
        (acc * self.grid.volume()).sqrt()
    }
}

/// Periodic first derivative along `axis`.
pub fn derivative(grid: &Grid, f: &[f64], axis: usize, scheme: DerivativeScheme) -> Vec<f64> {
    match scheme {
        DerivativeScheme::Central2 => {
            let mut out = vec![0.0; f.len()];
            central2_into(grid, f, axis, &mut out);
            out
        }
        DerivativeScheme::Spectral => Spectral::new(*grid).derivative(f, axis),
    }
}

pub fn central2_into(grid: &Grid, f: &[f64], axis: usize, out: &mut [f64]) {
    let inv = 0.5 / grid.dx();
    for (p, o) in out.iter_mut().enumerate() {
        *o = (f[grid.shift(p, axis, 1)] - f[grid.shift(p, axis, -1)]) * inv;
    }
}

/// Heat-kernel width at mollification level `ℓ`: `h_ℓ = 0.1 L 2^{-ℓ}`.
pub fn mollifier_width(grid: &Grid, level: u32) -> f64 {
    0.1 * grid.length * 0.5f64.powi(level as i32)
}

/// Convolution with the periodic heat kernel of width `h_ℓ`.
pub fn mollify(grid: &Grid, f: &[f64], level: u32) -> Vec<f64> {
    mollify_with(&Spectral::new(*grid), f, level)
}

pub fn mollify_with(sp: &Spectral, f: &[f64], level: u32) -> Vec<f64> {
    let h = mollifier_width(sp.grid(), level);
    sp.apply_multiplier(f, |kx, ky| (-0.5 * h * h * (kx * kx + ky * ky)).exp())
}

pub fn sobolev_norm(grid: &Grid, f: &[f64], s: u32) -> f64 {
    Spectral::new(*grid).sobolev_norm(f, s)
}

/// Writes one row per grid point: coordinates then components.
pub fn write_csv(path: &Path, state: &FieldState, names: &[String]) -> Result<(), GridError> {
    let mut out = BufWriter::new(File::create(path)?);
    let axes = ["x", "y"];
    let mut header: Vec<String> = axes[..state.grid.d].iter().map(|s| s.to_string()).collect();
    for (i, _) in state.comps.iter().enumerate() {
        header.push(names.get(i).cloned().unwrap_or_else(|| format!("c{i}")));
    }
    writeln!(out, "# t={:e}", state.time)?;
    writeln!(out, "{}", header.join(","))?;
    for p in 0..state.grid.points() {
        let c = state.grid.coords(p);
        let mut row: Vec<String> = c[..state.grid.d].iter().map(|v| format!("{v:e}")).collect();
        row.extend(state.comps.iter().map(|comp| format!("{:e}", comp[p])));
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a file written by [`write_csv`] for a known grid.
pub fn read_csv(path: &Path, grid: Grid, space: Space) -> Result<FieldState, GridError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let first = lines.next().ok_or_else(|| GridError::Format("empty file".into()))??;
    let time = first
        .strip_prefix("# t=")
        .and_then(|t| t.trim().parse::<f64>().ok())
        .ok_or_else(|| GridError::Format("missing time line".into()))?;
    let header = lines.next().ok_or_else(|| GridError::Format("missing header".into()))??;
    let ncomp = header.split(',').count() - grid.d;
    let mut comps = vec![Vec::with_capacity(grid.points()); ncomp];
    for line in lines {
        let line = line?;
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| GridError::Format(e.to_string()))?;
        if vals.len() != grid.d + ncomp {
            return Err(GridError::Format(format!("row has {} columns", vals.len())));
        }
        for (c, v) in comps.iter_mut().zip(&vals[grid.d..]) {
            c.push(*v);
        }
    }
    FieldState::new(grid, comps, space, time)
}

/// Binary layout: `d, N, n` as little-endian `u64`, `time` as `f64`, then
/// `N^d × n` doubles, point-major.
pub fn write_binary(path: &Path, state: &FieldState) -> Result<(), GridError> {
    let mut out = BufWriter::new(File::create(path)?);
    for v in [state.grid.d, state.grid.n, state.n_comps()] {
        out.write_all(&(v as u64).to_le_bytes())?;
    }
    out.write_all(&state.time.to_le_bytes())?;
    for p in 0..state.grid.points() {
        for c in &state.comps {
            out.write_all(&c[p].to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_binary(path: &Path, length: f64, space: Space) -> Result<FieldState, GridError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let word = |i: usize| -> Result<[u8; 8], GridError> {
        bytes
            .get(8 * i..8 * i + 8)
            .map(|s| s.try_into().expect("slice of length 8"))
            .ok_or_else(|| GridError::Format("truncated file".into()))
    };
    let d = u64::from_le_bytes(word(0)?) as usize;
    let n = u64::from_le_bytes(word(1)?) as usize;
    let ncomp = u64::from_le_bytes(word(2)?) as usize;
    let time = f64::from_le_bytes(word(3)?);
    let grid = Grid::new(d, n, length)?;
    let expected = 4 + grid.points() * ncomp;
    if bytes.len() != 8 * expected {
        return Err(GridError::Format(format!(
            "expected {} bytes, found {}",
            8 * expected,
            bytes.len()
        )));
    }
    let mut comps = vec![vec![0.0; grid.points()]; ncomp];
    for p in 0..grid.points() {
        for (c, comp) in comps.iter_mut().enumerate() {
            comp[p] = f64::from_le_bytes(word(4 + p * ncomp + c)?);
        }
    }
    FieldState::new(grid, comps, space, time)
}
