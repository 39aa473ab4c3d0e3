//! Real branches of the Lambert W function by Halley iteration.

use std::f64::consts::E;

use crate::error::{Error, Result};

const BRANCH_POINT: f64 = -1.0 / E;
const MAX_ITERATIONS: usize = 64;

fn halley(x: f64, mut w: f64) -> f64 {
    for _ in 0..MAX_ITERATIONS {
        let ew = w.exp();
        let residual = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let step = residual / (ew * wp1 - (w + 2.0) * residual / (2.0 * wp1));
        w -= step;
        if step.abs() <= 1e-16 * (1.0 + w.abs()) {
            break;
        }
    }
    w
}

/// Series about the branch point in `p = ±√(2(e·x + 1))`.
fn branch_point_guess(p: f64) -> f64 {
    -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
}

/// Principal branch `W₀(x)` for `x ≥ -1/e`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() || x < BRANCH_POINT {
        return Err(Error::Domain { function: "lambert_w0", x });
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let q = E * x + 1.0;
    if q <= 1e-30 {
        return Ok(-1.0);
    }
    let guess = if x < -0.25 {
        branch_point_guess((2.0 * q).sqrt())
    } else if x < E {
        x.ln_1p() * 0.7
    } else {
        let l = x.ln();
        l - l.ln()
    };
    Ok(halley(x, guess))
}

/// Lower branch `W₋₁(x)` for `x ∈ [-1/e, 0)`.
pub fn lambert_wm1(x: f64) -> Result<f64> {
    if x.is_nan() || !(BRANCH_POINT..0.0).contains(&x) {
        return Err(Error::Domain { function: "lambert_wm1", x });
    }
    let q = E * x + 1.0;
    if q <= 1e-30 {
        return Ok(-1.0);
    }
    let guess = if x < -0.25 {
        branch_point_guess(-(2.0 * q).sqrt())
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };
    Ok(halley(x, guess))
}
