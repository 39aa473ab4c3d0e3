//! Gaussian expectations of logistic-type functions.
//!
//! Every force in the summary-statistics dynamics reduces to
//! `E[h(a·x + b)]` with `x ~ N(0, 1)` and `h` one of `expit`, `expit²` or
//! `expit'`. When `a` is moderate the integrand is smooth in `x` and
//! probabilists' Gauss–Hermite quadrature converges geometrically. When `a`
//! is large the integrand is step-like on the scale of the Gaussian, so the
//! integral is instead taken in `y = a·x + b` over `[-L, L]` with a break at
//! the origin, plus the exact Gaussian tail beyond `L` where `h` has
//! saturated.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::sync::OnceLock;

/// Default number of Gauss–Hermite nodes.
pub const DEFAULT_NODES: usize = 129;

/// Above this slope the expectation is integrated in `y` space.
const SLOPE_SWITCH: f64 = 1.5;

/// Half-width of the `y` window; `expit` saturates to within `e^{-40}`.
const Y_WINDOW: f64 = 40.0;

/// A quadrature rule: nodes and weights.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Probabilists' Gauss–Hermite rule: `Σ wᵢ h(xᵢ) ≈ E[h(x)]`, `x ~ N(0,1)`.
    /// Weights sum to one.
    pub fn hermite(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let half = n.div_ceil(2);
        let mut z_phys = vec![0.0; n];
        let mut w_phys = vec![0.0; n];
        let pim4 = PI.powf(-0.25);
        let nf = n as f64;
        let mut z = 0.0_f64;
        for i in 0..half {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * z_phys[0],
                3 => 1.91 * z - 0.91 * z_phys[1],
                _ => 2.0 * z - z_phys[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            z_phys[i] = z;
            z_phys[n - 1 - i] = -z;
            w_phys[i] = 2.0 / (pp * pp);
            w_phys[n - 1 - i] = w_phys[i];
        }
        if n % 2 == 1 {
            z_phys[half - 1] = 0.0;
        }
        let norm = PI.sqrt();
        let mut nodes: Vec<f64> = z_phys.iter().map(|z| z * SQRT_2).collect();
        let mut weights: Vec<f64> = w_phys.iter().map(|w| w / norm).collect();
        nodes.reverse();
        weights.reverse();
        GaussRule { nodes, weights }
    }

    /// Gauss–Legendre rule on `[-1, 1]`.
    pub fn legendre(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        let half = n.div_ceil(2);
        for i in 0..half {
            let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
                }
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() <= 1e-16 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        if n % 2 == 1 {
            nodes[half - 1] = 0.0;
        }
        GaussRule { nodes, weights }
    }
}

/// Pair of rules used at a given node count.
#[derive(Debug)]
pub struct RulePair {
    pub hermite: GaussRule,
    pub legendre: GaussRule,
}

impl RulePair {
    fn new(n: usize) -> Self {
        RulePair {
            hermite: GaussRule::hermite(n),
            legendre: GaussRule::legendre(n),
        }
    }
}

static DEFAULT_RULES: OnceLock<RulePair> = OnceLock::new();
static DOUBLED_RULES: OnceLock<RulePair> = OnceLock::new();

/// Shared rules with [`DEFAULT_NODES`] nodes.
pub fn default_rules() -> &'static RulePair {
    DEFAULT_RULES.get_or_init(|| RulePair::new(DEFAULT_NODES))
}

/// Shared rules with `2 · DEFAULT_NODES` nodes, used for convergence checks.
pub fn doubled_rules() -> &'static RulePair {
    DOUBLED_RULES.get_or_init(|| RulePair::new(2 * DEFAULT_NODES))
}

/// Logistic sigmoid, stable for large |y|.
#[inline]
pub fn expit(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

/// Functions of the logistic sigmoid that appear in the forces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Logistic {
    Expit,
    ExpitSquared,
    /// Derivative `expit(y)·expit(-y)`.
    ExpitPrime,
}

impl Logistic {
    #[inline]
    pub fn eval(self, y: f64) -> f64 {
        match self {
            Logistic::Expit => expit(y),
            Logistic::ExpitSquared => {
                let e = expit(y);
                e * e
            }
            Logistic::ExpitPrime => expit(y) * expit(-y),
        }
    }

    /// Limit as `y → +∞`.
    fn upper_limit(self) -> f64 {
        match self {
            Logistic::Expit | Logistic::ExpitSquared => 1.0,
            Logistic::ExpitPrime => 0.0,
        }
    }
}

/// Upper Gaussian tail `P(N(0,1) > z)`.
#[inline]
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

/// `E[h(a·x + b)]` for `x ~ N(0, 1)` using the given rule pair.
pub fn logistic_expectation(h: Logistic, a: f64, b: f64, rules: &RulePair) -> f64 {
    let a = a.abs();
    if a <= SLOPE_SWITCH {
        let rule = &rules.hermite;
        return rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| w * h.eval(a * x + b))
            .sum();
    }
    // y-space: density of y = a x + b is φ((y - b)/a)/a.
    let inv_a = 1.0 / a;
    let norm = inv_a / (2.0 * PI).sqrt();
    let density = |y: f64| {
        let u = (y - b) * inv_a;
        norm * (-0.5 * u * u).exp()
    };
    let half = 0.5 * Y_WINDOW;
    let rule = &rules.legendre;
    let mut acc = 0.0;
    for (t, w) in rule.nodes.iter().zip(&rule.weights) {
        // left half [-L, 0] and right half [0, L]
        let yl = half * (t - 1.0);
        let yr = half * (t + 1.0);
        acc += w * (h.eval(yl) * density(yl) + h.eval(yr) * density(yr));
    }
    acc *= half;
    acc + h.upper_limit() * normal_sf((Y_WINDOW - b) * inv_a)
}
