//! Tabulated forces for repeated evaluation at fixed `(R, w₁, w*)`.
//!
//! `f(s, σ)` and `g(m, σ)` are stored on a uniform grid in the overlap and in
//! `log σ`, and read back with tensor-product cubic Lagrange interpolation.
//! Points outside the grid fall back to quadrature.

use rayon::prelude::*;

use super::forces::ForceParams;
use crate::error::{Error, Result};

/// Overlap range covered by the grid; slightly wider than `[-1, 1]` so that
/// intermediate Runge-Kutta stages stay inside. The `f` grid stops at `s = 1`,
/// where the clamp `f = w₁w₂` leaves the function non-smooth.
const X_LIMIT: f64 = 1.02;

/// Common interface of direct and tabulated force evaluation.
pub trait Forces: Sync {
    fn params(&self) -> &ForceParams;
    fn f(&self, s: f64, sigma: f64) -> f64;
    fn g(&self, m: f64, sigma: f64) -> f64;
}

impl Forces for ForceParams {
    fn params(&self) -> &ForceParams {
        self
    }

    fn f(&self, s: f64, sigma: f64) -> f64 {
        self.f_unchecked(s, sigma)
    }

    fn g(&self, m: f64, sigma: f64) -> f64 {
        self.g_unchecked(m, sigma)
    }
}

#[derive(Debug, Clone)]
struct Grid {
    x_lo: f64,
    nx: usize,
    hx: f64,
    values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForceTable {
    params: ForceParams,
    nl: usize,
    hl: f64,
    f: Grid,
    g: Grid,
}

impl ForceTable {
    /// Grid with `nx` overlap nodes and `log σ` spacing `hl` on `[0, log σ_max]`.
    pub fn with_resolution(params: ForceParams, sigma_max: f64, nx: usize, hl: f64) -> Result<Self> {
        if !(sigma_max >= 1.0 && sigma_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma_max must be at least 1, got {sigma_max}"
            )));
        }
        if nx < 8 || !(hl > 0.0) {
            return Err(Error::InvalidArgument("force table resolution too coarse".into()));
        }
        // two extra nodes on each side of the σ range keep the stencil interior
        let nl = ((sigma_max.ln() / hl).ceil() as usize).max(1) + 6;
        let build = |x_lo: f64, x_hi: f64, force: &(dyn Fn(f64, f64) -> f64 + Sync)| -> Grid {
            let hx = (x_hi - x_lo) / (nx - 1) as f64;
            let values = (0..nl)
                .into_par_iter()
                .flat_map_iter(|il| {
                    let sigma = ((il as f64 - 2.0) * hl).exp();
                    (0..nx).map(move |ix| force(x_lo + ix as f64 * hx, sigma))
                })
                .collect();
            Grid { x_lo, nx, hx, values }
        };
        let f = build(-X_LIMIT, 1.0, &|s, sigma| params.f_unchecked(s, sigma));
        let g = build(-X_LIMIT, X_LIMIT, &|m, sigma| params.g_unchecked(m, sigma));
        Ok(ForceTable { params, nl, hl, f, g })
    }

    /// Default resolution: below 1e-8 absolute interpolation error for `R ≲ 5`.
    pub fn new(params: ForceParams, sigma_max: f64) -> Result<Self> {
        Self::with_resolution(params, sigma_max, 2049, 0.04)
    }

    /// Largest `σ` inside the grid.
    pub fn sigma_max(&self) -> f64 {
        ((self.nl as f64 - 5.0) * self.hl).exp()
    }

    fn interpolate(&self, grid: &Grid, x: f64, sigma: f64) -> Option<f64> {
        let ux = (x - grid.x_lo) / grid.hx;
        let ul = sigma.ln() / self.hl + 2.0;
        if !(ux >= 0.0 && ux <= (grid.nx - 1) as f64 && ul >= 2.0 && ul <= (self.nl - 4) as f64) {
            return None;
        }
        let ix = (ux.floor() as usize).clamp(1, grid.nx - 3);
        let il = (ul.floor() as usize).min(self.nl - 4);
        let wx = lagrange_weights(ux - ix as f64);
        let wl = quintic_weights(ul - il as f64);
        let mut acc = 0.0;
        for (j, wlj) in wl.iter().enumerate() {
            let base = (il + j - 2) * grid.nx + ix - 1;
            let r = &grid.values[base..base + 4];
            acc += wlj * (wx[0] * r[0] + wx[1] * r[1] + wx[2] * r[2] + wx[3] * r[3]);
        }
        Some(acc)
    }
}

/// Cubic Lagrange weights for nodes at -1, 0, 1, 2 evaluated at `t`.
#[inline]
fn lagrange_weights(t: f64) -> [f64; 4] {
    let (tm, t1, t2) = (t + 1.0, t - 1.0, t - 2.0);
    [
        -t * t1 * t2 / 6.0,
        tm * t1 * t2 / 2.0,
        -tm * t * t2 / 2.0,
        tm * t * t1 / 6.0,
    ]
}

/// Quintic Lagrange weights for nodes at -2, ..., 3 evaluated at `t`.
#[inline]
fn quintic_weights(t: f64) -> [f64; 6] {
    let d = [t + 2.0, t + 1.0, t, t - 1.0, t - 2.0, t - 3.0];
    const DENOM: [f64; 6] = [-120.0, 24.0, -12.0, 12.0, -24.0, 120.0];
    let mut w = [0.0; 6];
    for (k, wk) in w.iter_mut().enumerate() {
        let mut p = 1.0;
        for (j, dj) in d.iter().enumerate() {
            if j != k {
                p *= dj;
            }
        }
        *wk = p / DENOM[k];
    }
    w
}

impl Forces for ForceTable {
    fn params(&self) -> &ForceParams {
        &self.params
    }

    fn f(&self, s: f64, sigma: f64) -> f64 {
        self.interpolate(&self.f, s, sigma)
            .unwrap_or_else(|| self.params.f_unchecked(s, sigma))
    }

    fn g(&self, m: f64, sigma: f64) -> f64 {
        self.interpolate(&self.g, m, sigma)
            .unwrap_or_else(|| self.params.g_unchecked(m, sigma))
    }
}
