//! Shared discrete operators on periodic grids.

use crate::grid::{DerivativeScheme, Grid, Spectral};

/// Adds `div(c ∇f)` to `out`.
///
/// `Central2` uses the conservative stencil with arithmetic-mean coefficients at
/// half points, so the grid sum of the result telescopes to zero.
pub fn add_flux_divergence(
    grid: &Grid,
    spectral: Option<&Spectral>,
    c: &[f64],
    f: &[f64],
    out: &mut [f64],
    scale: f64,
) {
    match spectral {
        None => {
            let inv = scale / (grid.dx() * grid.dx());
            for axis in 0..grid.d {
                for p in 0..grid.points() {
                    let pp = grid.shift(p, axis, 1);
                    let pm = grid.shift(p, axis, -1);
                    let right = 0.5 * (c[p] + c[pp]) * (f[pp] - f[p]);
                    let left = 0.5 * (c[pm] + c[p]) * (f[p] - f[pm]);
                    out[p] += (right - left) * inv;
                }
            }
        }
        Some(sp) => {
            for axis in 0..grid.d {
                let df = sp.derivative(f, axis);
                let flux: Vec<f64> = df.iter().zip(c).map(|(d, ci)| d * ci).collect();
                let div = sp.derivative(&flux, axis);
                for (o, v) in out.iter_mut().zip(&div) {
                    *o += scale * v;
                }
            }
        }
    }
}

/// First derivatives of `f` along every axis.
pub fn gradient(grid: &Grid, spectral: Option<&Spectral>, f: &[f64]) -> Vec<Vec<f64>> {
    (0..grid.d)
        .map(|axis| match spectral {
            Some(sp) => sp.derivative(f, axis),
            None => crate::grid::derivative(grid, f, axis, DerivativeScheme::Central2),
        })
        .collect()
}

/// Adds `-ε dx³ ∂⁴ f` per axis, discretised as `-(ε/dx) δ⁴ f`.
pub fn add_hyperdissipation(grid: &Grid, eps: f64, f: &[f64], out: &mut [f64]) {
    if eps == 0.0 {
        return;
    }
    let coef = eps / grid.dx();
    for axis in 0..grid.d {
        for p in 0..grid.points() {
            let d4 = f[grid.shift(p, axis, 2)] - 4.0 * f[grid.shift(p, axis, 1)] + 6.0 * f[p]
                - 4.0 * f[grid.shift(p, axis, -1)]
                + f[grid.shift(p, axis, -2)];
            out[p] -= coef * d4;
        }
    }
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
