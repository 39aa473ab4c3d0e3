//! Entropic force `f`, cross-entropic force `g` and their asymptotics.
//!
//! With `r = R/σ`,
//!
//! ```text
//! f(s, σ) = E[w₁ expit(r√(2(1-s)) x + r²(s-1) + log(w₂/w₁))²
//!           + w₂ expit(r√(2(1-s)) x + r²(s-1) + log(w₁/w₂))²]
//! g(m, σ) = E[1 - 2 expit(2σR x + 2R² m + log(w*/(1-w*)))]
//! ```
//!
//! with `x ~ N(0, 1)`.

use std::f64::consts::PI;

use super::quadrature::{
    default_rules, doubled_rules, expit, logistic_expectation, Logistic, RulePair,
};
use crate::error::{Error, Result};

/// Smallest value `1 - s` is allowed to take.
pub const ONE_MINUS_S_FLOOR: f64 = 1e-12;

/// Beyond this value of `r²(1-s)` the entropic force is below `e^{-300}`
/// and the low-temperature closed form is used instead of quadrature.
pub const F_ASYMPTOTIC_SWITCH: f64 = 1200.0;

/// Maximum change under node doubling before a result is rejected.
pub const CONVERGENCE_TOL: f64 = 1e-8;

/// Parameters shared by the force functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceParams {
    pub r: f64,
    pub w1: f64,
    pub w_star: f64,
}

impl ForceParams {
    pub fn new(r: f64, w1: f64, w_star: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!("R must be positive, got {r}")));
        }
        if !(w1 > 0.0 && w1 < 1.0) {
            return Err(Error::InvalidArgument(format!("w1 must lie in (0,1), got {w1}")));
        }
        if !(w_star > 0.0 && w_star < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "w_star must lie in (0,1), got {w_star}"
            )));
        }
        Ok(ForceParams { r, w1, w_star })
    }

    pub fn w2(&self) -> f64 {
        1.0 - self.w1
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_bias(self.r, self.w_star)
    }

    fn f_with(&self, s: f64, sigma: f64, rules: &RulePair) -> f64 {
        let one_minus_s = 1.0 - s;
        if one_minus_s <= 0.0 {
            return self.w1 * self.w2();
        }
        let one_minus_s = one_minus_s.max(ONE_MINUS_S_FLOOR);
        let rr = (self.r / sigma).powi(2);
        if rr * one_minus_s > F_ASYMPTOTIC_SWITCH {
            return f_low_temp(s, sigma, self);
        }
        let a = (2.0 * rr * one_minus_s).sqrt();
        let b = -rr * one_minus_s;
        let c = (self.w2() / self.w1).ln();
        self.w1 * logistic_expectation(Logistic::ExpitSquared, a, b + c, rules)
            + self.w2() * logistic_expectation(Logistic::ExpitSquared, a, b - c, rules)
    }

    fn g_args(&self, m: f64, sigma: f64) -> (f64, f64) {
        let log_odds = (self.w_star / (1.0 - self.w_star)).ln();
        (2.0 * sigma * self.r, 2.0 * self.r * self.r * m + log_odds)
    }

    fn g_with(&self, m: f64, sigma: f64, rules: &RulePair) -> f64 {
        let (a, b) = self.g_args(m, sigma);
        1.0 - 2.0 * logistic_expectation(Logistic::Expit, a, b, rules)
    }

    fn g_prime_with(&self, m: f64, sigma: f64, rules: &RulePair) -> f64 {
        let (a, b) = self.g_args(m, sigma);
        -4.0 * self.r * self.r * logistic_expectation(Logistic::ExpitPrime, a, b, rules)
    }

    /// `f(s, σ)` with the default rule and no convergence check.
    #[inline]
    pub fn f_unchecked(&self, s: f64, sigma: f64) -> f64 {
        self.f_with(s, sigma, default_rules())
    }

    /// `g(m, σ)` with the default rule and no convergence check.
    #[inline]
    pub fn g_unchecked(&self, m: f64, sigma: f64) -> f64 {
        self.g_with(m, sigma, default_rules())
    }

    /// `∂g/∂m` with the default rule and no convergence check.
    #[inline]
    pub fn g_prime_unchecked(&self, m: f64, sigma: f64) -> f64 {
        self.g_prime_with(m, sigma, default_rules())
    }

    /// `f(s, σ)` evaluated with twice the nodes.
    pub fn f_doubled(&self, s: f64, sigma: f64) -> f64 {
        self.f_with(s, sigma, doubled_rules())
    }

    /// `g(m, σ)` evaluated with twice the nodes.
    pub fn g_doubled(&self, m: f64, sigma: f64) -> f64 {
        self.g_with(m, sigma, doubled_rules())
    }
}

fn checked(value: f64, doubled: f64) -> Result<f64> {
    let change = (value - doubled).abs();
    if change > CONVERGENCE_TOL || !value.is_finite() {
        Err(Error::Accuracy { change })
    } else {
        Ok(value)
    }
}

/// Bias `ε = log(w*/(1-w*)) / (2R²)`; the low-temperature basin boundary
/// sits at `m = -ε`.
pub fn epsilon_bias(r: f64, w_star: f64) -> f64 {
    (w_star / (1.0 - w_star)).ln() / (2.0 * r * r)
}

/// Entropic (repulsive) force `f(s, σ)`.
pub fn force_f(s: f64, sigma: f64, params: &ForceParams) -> Result<f64> {
    check_sigma(sigma)?;
    checked(params.f_unchecked(s, sigma), params.f_doubled(s, sigma))
}

/// Cross-entropic (attractive) force `g(m, σ)`.
pub fn force_g(m: f64, sigma: f64, params: &ForceParams) -> Result<f64> {
    check_sigma(sigma)?;
    checked(params.g_unchecked(m, sigma), params.g_doubled(m, sigma))
}

/// `∂g/∂m = -4R² E[expit'(2σR x + 2R² m + log(w*/(1-w*)))]`; always negative.
pub fn force_g_prime(m: f64, sigma: f64, params: &ForceParams) -> Result<f64> {
    check_sigma(sigma)?;
    checked(
        params.g_prime_unchecked(m, sigma),
        params.g_prime_with(m, sigma, doubled_rules()),
    )
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")))
    }
}

/// Low-temperature (`σ ≪ R`) form of `f`:
/// `(√π/2) √(w₁w₂) / (r√(1-s)) · exp(-r²(1-s)/4)`.
pub fn f_low_temp(s: f64, sigma: f64, params: &ForceParams) -> f64 {
    let one_minus_s = (1.0 - s).max(ONE_MINUS_S_FLOOR);
    let r = params.r / sigma;
    0.5 * PI.sqrt() * (params.w1 * params.w2()).sqrt() / (r * one_minus_s.sqrt())
        * (-r * r * one_minus_s / 4.0).exp()
}

/// Low-temperature form of `g`: `1 - 2 expit(2R²(m + ε)) = -tanh(R²(m + ε))`.
pub fn g_low_temp(m: f64, params: &ForceParams) -> f64 {
    1.0 - 2.0 * expit(2.0 * params.r * params.r * (m + params.epsilon()))
}

/// High-temperature limit of `f`: `w₁w₂`.
pub fn f_high_temp(params: &ForceParams) -> f64 {
    params.w1 * params.w2()
}

/// High-temperature form of `g`: `-√(2/π) (R/σ) (m + ε)`.
pub fn g_high_temp(m: f64, sigma: f64, params: &ForceParams) -> f64 {
    -(2.0 / PI).sqrt() * (params.r / sigma) * (m + params.epsilon())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(r: f64, w1: f64, w_star: f64) -> ForceParams {
        ForceParams::new(r, w1, w_star).unwrap()
    }

    #[test]
    fn epsilon_values() {
        assert_eq!(epsilon_bias(3.0, 0.5), 0.0);
        assert!((epsilon_bias(3.0, 0.8) - 4f64.ln() / 18.0).abs() < 1e-15);
        assert!((epsilon_bias(3.0, 0.8) - 0.0770164).abs() < 1e-7);
        for r in [0.5, 1.0, 3.0, 10.0] {
            assert!(epsilon_bias(r, 0.9) > epsilon_bias(r, 0.8));
        }
    }

    #[test]
    fn f_at_s_one_is_w1_w2() {
        for w1 in [0.5, 0.3, 0.8] {
            let p = params(3.0, w1, 0.8);
            for sigma in [0.05, 1.0, 20.0] {
                let f = force_f(1.0, sigma, &p).unwrap();
                assert!((f - w1 * (1.0 - w1)).abs() < 1e-15);
                // just below 1 goes through the clamp and quadrature
                let f = force_f(1.0 - 1e-15, sigma, &p).unwrap();
                assert!((f - w1 * (1.0 - w1)).abs() < 1e-8, "w1={w1} σ={sigma}: {f}");
            }
        }
    }

    #[test]
    fn g_vanishes_at_minus_epsilon() {
        for (r, ws) in [(3.0, 0.8), (1.0, 0.6), (5.0, 0.95), (2.0, 0.3)] {
            let p = params(r, 0.5, ws);
            for sigma in [0.05, 0.5, 1.0, 9.0, 300.0] {
                let g = force_g(-p.epsilon(), sigma, &p).unwrap();
                assert!(g.abs() < 1e-10, "R={r} σ={sigma}: {g}");
            }
        }
    }

    #[test]
    fn g_prime_is_negative_and_matches_finite_differences() {
        let p = params(3.0, 0.5, 0.8);
        for sigma in [0.3, 1.0, 3.0, 30.0] {
            for m in [-0.9, -0.2, 0.0, 0.4] {
                let gp = force_g_prime(m, sigma, &p).unwrap();
                assert!(gp < 0.0);
                let h = 1e-5;
                let fd = (force_g(m + h, sigma, &p).unwrap() - force_g(m - h, sigma, &p).unwrap())
                    / (2.0 * h);
                assert!((gp - fd).abs() < 1e-6, "σ={sigma} m={m}: {gp} vs {fd}");
            }
        }
    }

    #[test]
    fn g_low_temp_is_minus_tanh() {
        let p = params(3.0, 0.5, 0.8);
        for m in [-0.5, 0.0, 0.3] {
            let want = -(9.0 * (m + p.epsilon())).tanh();
            assert!((g_low_temp(m, &p) - want).abs() < 1e-14);
        }
        assert!(g_low_temp(-p.epsilon(), &p).abs() < 1e-15);
    }

    #[test]
    fn f_high_temp_quarter() {
        assert_eq!(f_high_temp(&params(3.0, 0.5, 0.8)), 0.25);
    }

    #[test]
    fn bounds_hold() {
        for w1 in [0.2, 0.5, 0.7] {
            let p = params(3.0, w1, 0.8);
            for sigma in [0.05, 0.2, 1.0, 5.0, 100.0] {
                for k in 0..=20 {
                    let x = -1.0 + 0.1 * k as f64;
                    let f = p.f_unchecked(x, sigma);
                    let g = p.g_unchecked(x, sigma);
                    assert!(f < w1.max(1.0 - w1), "f={f}");
                    // positive unless exp(-r²(1-s)/4) underflows
                    let rr = (3.0f64 / sigma).powi(2) * (1.0 - x);
                    assert!(if rr / 4.0 < 700.0 { f > 0.0 } else { f >= 0.0 });
                    assert!(g.abs() < 1.0);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_sigma() {
        let p = params(3.0, 0.5, 0.8);
        assert!(force_f(0.0, 0.0, &p).is_err());
        assert!(force_g(0.0, -1.0, &p).is_err());
        assert!(ForceParams::new(3.0, 1.0, 0.8).is_err());
    }
}
