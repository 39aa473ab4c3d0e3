//! Mode-collapse probability from the linearized saddle dynamics.
//!
//! While `β < α/R²` the difference `m₁ - m₂` grows like
//! `exp(∫ √(R²β/2π))`; the exposure integral `I` is that exponent
//! accumulated until the transition. Collapse happens when the initial
//! `m₁ + m₂` falls within `±2ε e^{-I}`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::schedule::AnnealSchedule;
use crate::special::{epsilon_bias, erf, lambert_w0, lambert_wm1};

pub const DEFAULT_ALPHA: f64 = 0.608;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    pub d: usize,
    pub r: f64,
    pub w_star: f64,
    pub alpha: f64,
}

impl TheoryParams {
    pub fn new(d: usize, r: f64, w_star: f64, alpha: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!("R must be positive, got {r}")));
        }
        if !(w_star > 0.0 && w_star < 1.0) {
            return Err(Error::InvalidArgument(format!("w_star must lie in (0,1), got {w_star}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        Ok(TheoryParams { d, r, w_star, alpha })
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_bias(self.r, self.w_star)
    }

    /// Inverse temperature `α/R²` at which the high-temperature regime ends.
    pub fn beta_transition(&self) -> f64 {
        self.alpha / (self.r * self.r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exposure {
    pub value: f64,
    /// `t₁`, or the horizon when the transition is never reached.
    pub t1: f64,
    pub regime_exited: bool,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    (fa, fm, fb): (f64, f64, f64),
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_simpson(f, a, m, (fa, flm, fm), left, 0.5 * tol, depth - 1)
        + adaptive_simpson(f, m, b, (fm, frm, fb), right, 0.5 * tol, depth - 1)
}

/// `∫_a^b f` by adaptive Simpson to absolute tolerance `tol`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    // a few panels first so that kinks are not missed by the coarse estimate
    let panels = 16;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * h, if k + 1 == panels { b } else { a + (k + 1) as f64 * h });
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = simpson(lo, hi, fa, fm, fb);
            adaptive_simpson(&f, lo, hi, (fa, fm, fb), whole, tol / panels as f64, 40)
        })
        .sum()
}

/// `I = ∫₀^{t₁} √(R²β(s)/2π) ds` with `β(t₁) = α/R²`.
///
/// When the schedule never reaches `α/R²` before `t_horizon` (or before the
/// end of a tabulated schedule), the integral runs to the horizon and
/// `regime_exited` is false.
pub fn exposure_integral(
    schedule: &AnnealSchedule,
    theory: &TheoryParams,
    t_horizon: f64,
) -> Result<Exposure> {
    schedule.validate()?;
    let horizon = t_horizon.min(schedule.horizon());
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be finite, got {t_horizon}")));
    }
    let target = theory.beta_transition();
    let (t1, exited) = match schedule.first_time_at(target, horizon)? {
        Some(t) => (t, true),
        None => (horizon, false),
    };
    if t1 <= 0.0 {
        return Ok(Exposure { value: 0.0, t1: 0.0, regime_exited: exited });
    }
    let r2 = theory.r * theory.r;
    let integrand = |s: f64| (r2 * schedule.beta(s).unwrap_or(1.0) / (2.0 * PI)).sqrt();
    let value = integrate_adaptive(integrand, 0.0, t1, 1e-12 * t1.max(1.0));
    Ok(Exposure { value, t1, regime_exited: exited })
}

/// `I` for the exponential schedule:
/// `√(2/π) t0/log(1/β_i) (√α - √(R²β_i))`, zero once `β_i ≥ α/R²`.
pub fn closed_form_i(beta_i: f64, t0: f64, theory: &TheoryParams) -> Result<f64> {
    if !(beta_i > 0.0 && beta_i < 1.0) {
        return Err(Error::Domain { function: "closed_form_i", x: beta_i });
    }
    if !(t0 > 0.0) {
        return Err(Error::InvalidArgument(format!("t0 must be positive, got {t0}")));
    }
    let bracket = theory.alpha.sqrt() - theory.r * beta_i.sqrt();
    if bracket <= 0.0 {
        return Ok(0.0);
    }
    Ok((2.0 / PI).sqrt() * t0 / (1.0 / beta_i).ln() * bracket)
}

/// `p = erf(√d |ε| e^{-I})`.
pub fn collapse_probability(i: f64, theory: &TheoryParams) -> Result<f64> {
    if !(i >= 0.0) {
        return Err(Error::InvalidArgument(format!("I must be non-negative, got {i}")));
    }
    let eps = theory.epsilon().abs();
    Ok(erf((theory.d as f64).sqrt() * eps * (-i).exp()))
}

/// Theoretical collapse probability of the exponential schedule.
pub fn exponential_collapse_probability(beta_i: f64, t0: f64, theory: &TheoryParams) -> Result<f64> {
    if beta_i >= 1.0 {
        return collapse_probability(0.0, theory);
    }
    collapse_probability(closed_form_i(beta_i, t0, theory)?, theory)
}

/// `β_i` maximizing `I` for the exponential schedule.
pub fn optimal_beta_i(theory: &TheoryParams) -> Result<f64> {
    let hi_beta = theory.beta_transition();
    if hi_beta >= 1.0 {
        return Err(Error::InvalidArgument("alpha/R^2 must be below 1".into()));
    }
    // I ∝ (√α - R√β)/log(1/β); unimodal in log β
    let objective = |lb: f64| {
        let b = lb.exp();
        (theory.alpha.sqrt() - theory.r * b.sqrt()) / (-lb)
    };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (-700.0, hi_beta.ln());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    while b - a > 1e-11 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
        }
    }
    // the maximum is flat to first order, so golden section alone stalls near
    // √ε relative accuracy; finish by bisection on the sign of the slope
    let slope_sign = |lb: f64| {
        let u = (0.5 * lb).exp();
        theory.r * u * (0.5 * lb) + theory.alpha.sqrt() - theory.r * u
    };
    let (mut lo, mut hi) = (a - 1e-6, b + 1e-6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope_sign(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let best = (0.5 * (lo + hi)).exp();
    let h = 1e-5;
    let i = |x: f64| closed_form_i(x, 1.0, theory);
    let slope = (i(best * (1.0 + h))? - i(best * (1.0 - h))?) / (2.0 * h);
    debug_assert!(slope.abs() <= 1e-6 * i(best)?, "stationarity check failed: {slope}");
    Ok(best)
}

/// Lambert-W expressions for the optimum, for comparison with
/// [`optimal_beta_i`]. With `c = √α/R`, stationarity reads
/// `u(1 - log u) = c` for `u = √β_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambertCandidates {
    /// `e² W₀(-c/e)²`.
    pub principal_squared: f64,
    /// `exp(2(1 + W₋₁(-c/e)))`, which solves the stationarity condition.
    pub lower_branch: f64,
}

pub fn lambert_candidates(theory: &TheoryParams) -> Result<LambertCandidates> {
    let c = theory.alpha.sqrt() / theory.r;
    let x = -c / std::f64::consts::E;
    let w0 = lambert_w0(x)?;
    let wm1 = lambert_wm1(x)?;
    Ok(LambertCandidates {
        principal_squared: std::f64::consts::E.powi(2) * w0 * w0,
        lower_branch: (2.0 * (1.0 + wm1)).exp(),
    })
}

/// Larger `β_i` with `p(β_i, t0) = level` for the exponential schedule.
pub fn iso_probability_beta(t0: f64, level: f64, theory: &TheoryParams) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0,1), got {level}")));
    }
    let hi = theory.beta_transition();
    let p_max = collapse_probability(0.0, theory)?;
    if level > p_max {
        return Err(Error::NoSolution { level, t0 });
    }
    if level == p_max {
        return Ok(hi.min(1.0));
    }
    let lo = optimal_beta_i(theory)?;
    let p = |b: f64| exponential_collapse_probability(b, t0, theory);
    if p(lo)? > level {
        return Err(Error::NoSolution { level, t0 });
    }
    // p increases from p(β_i*) to p_max on [β_i*, α/R²]
    let (mut a, mut b) = (lo.ln(), hi.ln());
    while b - a > 1e-8 {
        let m = 0.5 * (a + b);
        if p(m.exp())? > level {
            b = m;
        } else {
            a = m;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

/// Small-`β_i` limit of [`closed_form_i`]: `√(2/π) t0 √α / log(1/β_i)`.
pub fn rate_asymptote_i(beta_i: f64, t0: f64, theory: &TheoryParams) -> Result<f64> {
    if !(beta_i > 0.0 && beta_i < 1.0) {
        return Err(Error::Domain { function: "rate_asymptote_i", x: beta_i });
    }
    Ok((2.0 / PI).sqrt() * t0 * theory.alpha.sqrt() / (1.0 / beta_i).ln())
}
