//! Summary-statistics ODE for the overlaps `(m₁, m₂, s)`.
//!
//! ```text
//! ṁ₁ = -β [(m₂ - m₁s) f(s) + w₁(1 - m₁²) g(m₁)]
//! ṁ₂ = -β [(m₁ - m₂s) f(s) + w₂(1 - m₂²) g(m₂)]
//! ṡ  = -β [2(1 - s²) f(s) + w₁(m₂ - m₁s) g(m₁) + w₂(m₁ - m₂s) g(m₂)]
//! ```
//!
//! with `σ = β^{-1/2}` inside `f` and `g`.
//!
//! Two clocks are supported. On the flow clock the system above is integrated
//! as written. On the adapted clock (the default) the right-hand side is
//! divided by `β`, which is what gradient descent with learning rate `η/β`
//! follows when one step advances time by `η`. The linearized saddle solution
//! and the exposure integral both live on the adapted clock.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mixture::{dot, uniform_on_sphere, SummaryStats};
use crate::schedule::AnnealSchedule;
use crate::special::{force_f, force_g, ForceParams, ForceTable, Forces};

/// Integration aborts once an overlap leaves `[-LIMIT, LIMIT]`.
pub const INSTABILITY_LIMIT: f64 = 1.01;

#[derive(Debug, Clone)]
pub struct OdeConfig {
    pub params: ForceParams,
    pub schedule: AnnealSchedule,
    pub t_end: f64,
    /// RK4 step.
    pub dt: f64,
    /// Divide the right-hand side by `β(t)`.
    pub rate_adapted: bool,
    /// Flow clock only: integrate in `t' = ∫β` and map back to `t`.
    pub reparameterized: bool,
    /// Keep every n-th step in the trace (the final point is always kept).
    pub record_every: usize,
    /// Interpolated forces; quadrature is used when absent.
    pub table: Option<Arc<ForceTable>>,
}

impl OdeConfig {
    pub fn new(params: ForceParams, schedule: AnnealSchedule, t_end: f64, dt: f64) -> Result<Self> {
        let c = OdeConfig {
            params,
            schedule,
            t_end,
            dt,
            rate_adapted: true,
            reparameterized: false,
            record_every: 1,
            table: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "t_end must be at least dt, got {}",
                self.t_end
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be at least 1".into()));
        }
        if let Some(t) = &self.table {
            if t.params() != &self.params {
                return Err(Error::InvalidArgument("force table built for other parameters".into()));
            }
        }
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdePoint {
    pub t: f64,
    pub beta: f64,
    pub stats: SummaryStats,
}

/// Right-hand side without the leading factor `β`.
fn drift<F: Forces>(x: [f64; 3], beta: f64, forces: &F) -> [f64; 3] {
    let [m1, m2, s] = x;
    let sigma = beta.powf(-0.5);
    let f = forces.f(s, sigma);
    let g1 = forces.g(m1, sigma);
    let g2 = forces.g(m2, sigma);
    let p = forces.params();
    let (w1, w2) = (p.w1, p.w2());
    let a1 = m2 - m1 * s;
    let a2 = m1 - m2 * s;
    [
        -(a1 * f + w1 * (1.0 - m1 * m1) * g1),
        -(a2 * f + w2 * (1.0 - m2 * m2) * g2),
        -(2.0 * (1.0 - s * s) * f + w1 * a1 * g1 + w2 * a2 * g2),
    ]
}

/// Time derivative of `(m₁, m₂, s)` on the flow clock, with checked forces.
pub fn ode_rhs(stats: SummaryStats, beta: f64, params: &ForceParams) -> Result<[f64; 3]> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidArgument(format!("beta must lie in (0,1], got {beta}")));
    }
    let SummaryStats { m1, m2, s } = stats;
    let sigma = beta.powf(-0.5);
    let f = force_f(s, sigma, params)?;
    let g1 = force_g(m1, sigma, params)?;
    let g2 = force_g(m2, sigma, params)?;
    let (w1, w2) = (params.w1, params.w2());
    let a1 = m2 - m1 * s;
    let a2 = m1 - m2 * s;
    Ok([
        -beta * (a1 * f + w1 * (1.0 - m1 * m1) * g1),
        -beta * (a2 * f + w2 * (1.0 - m2 * m2) * g2),
        -beta * (2.0 * (1.0 - s * s) * f + w1 * a1 * g1 + w2 * a2 * g2),
    ])
}

fn axpy(x: [f64; 3], h: f64, k: [f64; 3]) -> [f64; 3] {
    [x[0] + h * k[0], x[1] + h * k[1], x[2] + h * k[2]]
}

fn rk4<F: Fn(f64, [f64; 3]) -> Result<[f64; 3]>>(rhs: &F, t: f64, x: [f64; 3], h: f64) -> Result<[f64; 3]> {
    let k1 = rhs(t, x)?;
    let k2 = rhs(t + 0.5 * h, axpy(x, 0.5 * h, k1))?;
    let k3 = rhs(t + 0.5 * h, axpy(x, 0.5 * h, k2))?;
    let k4 = rhs(t + h, axpy(x, h, k3))?;
    Ok([
        x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        x[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    ])
}

fn check(x: [f64; 3], t: f64) -> Result<()> {
    if x.iter().all(|v| v.abs() <= INSTABILITY_LIMIT) {
        Ok(())
    } else {
        Err(Error::Instability { t })
    }
}

/// Cumulative table of `t' = ∫₀ᵗ β` on a uniform grid, used to map
/// reparameterized time back to schedule time.
struct ClockTable {
    h: f64,
    cumulative: Vec<f64>,
}

impl ClockTable {
    fn new(schedule: &AnnealSchedule, t_end: f64, h: f64) -> Result<Self> {
        let n = (t_end / h).ceil() as usize;
        let h = t_end / n as f64;
        let mut cumulative = Vec::with_capacity(n + 1);
        cumulative.push(0.0);
        let mut prev = schedule.beta(0.0)?;
        for k in 1..=n {
            let t = (k as f64 * h).min(t_end);
            let mid = schedule.beta(t - 0.5 * h)?;
            let b = schedule.beta(t)?;
            let last = cumulative[k - 1];
            cumulative.push(last + h / 6.0 * (prev + 4.0 * mid + b));
            prev = b;
        }
        Ok(ClockTable { h, cumulative })
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Schedule time at reparameterized time `tp`.
    fn invert(&self, tp: f64) -> f64 {
        let c = &self.cumulative;
        let k = c.partition_point(|&v| v <= tp).clamp(1, c.len() - 1);
        let (lo, hi) = (c[k - 1], c[k]);
        let frac = if hi > lo { ((tp - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
        (k - 1) as f64 * self.h + frac * self.h
    }
}

/// Integrates from `init`, calling `sink` after every step with
/// `(step index, t, β, state)`. Step 0 is the initial point.
fn drive<S: FnMut(usize, f64, f64, [f64; 3])>(
    init: SummaryStats,
    config: &OdeConfig,
    sink: S,
) -> Result<usize> {
    config.validate()?;
    match &config.table {
        Some(table) => drive_with(init, config, table.as_ref(), sink),
        None => drive_with(init, config, &config.params, sink),
    }
}

fn drive_with<F: Forces, S: FnMut(usize, f64, f64, [f64; 3])>(
    init: SummaryStats,
    config: &OdeConfig,
    p: &F,
    mut sink: S,
) -> Result<usize> {
    let sched = &config.schedule;
    let mut x = init.as_array();
    sink(0, 0.0, sched.beta(0.0)?, x);

    if config.reparameterized && !config.rate_adapted {
        let table = ClockTable::new(sched, config.t_end, config.dt / 10.0)?;
        let total = table.total();
        let n = (total / config.dt - 1e-9).ceil().max(1.0) as usize;
        let rhs = |tp: f64, y: [f64; 3]| -> Result<[f64; 3]> {
            let b = sched.beta(table.invert(tp).min(config.t_end))?;
            Ok(drift(y, b, p))
        };
        for k in 0..n {
            let tp = k as f64 * config.dt;
            let h = (total - tp).min(config.dt);
            x = rk4(&rhs, tp, x, h)?;
            let t = if k + 1 == n { config.t_end } else { table.invert(tp + h) };
            check(x, t)?;
            sink(k + 1, t, sched.beta(t)?, x);
        }
        return Ok(n);
    }

    let adapted = config.rate_adapted;
    let rhs = |t: f64, y: [f64; 3]| -> Result<[f64; 3]> {
        let b = sched.beta(t)?;
        let k = drift(y, b, p);
        Ok(if adapted { k } else { [b * k[0], b * k[1], b * k[2]] })
    };
    let n = (config.t_end / config.dt - 1e-9).ceil().max(1.0) as usize;
    for k in 0..n {
        let t = k as f64 * config.dt;
        let h = (config.t_end - t).min(config.dt);
        x = rk4(&rhs, t, x, h)?;
        let t_next = if k + 1 == n { config.t_end } else { (k + 1) as f64 * config.dt };
        check(x, t_next)?;
        sink(k + 1, t_next, sched.beta(t_next)?, x);
    }
    Ok(n)
}

/// RK4 trajectory of the overlaps.
pub fn integrate(init: SummaryStats, config: &OdeConfig) -> Result<Vec<OdePoint>> {
    let mut out = Vec::new();
    let every = config.record_every;
    let mut last = None;
    let n = drive(init, config, |k, t, beta, x| {
        let p = OdePoint { t, beta, stats: SummaryStats::from_array(x) };
        if k % every == 0 {
            out.push(p);
        }
        last = Some((k, p));
    })?;
    if let Some((k, p)) = last {
        if k == n && k % every != 0 {
            out.push(p);
        }
    }
    Ok(out)
}

/// Final point of [`integrate`] without storing the trajectory.
pub fn integrate_final(init: SummaryStats, config: &OdeConfig) -> Result<OdePoint> {
    let mut last = OdePoint { t: 0.0, beta: 0.0, stats: init };
    drive(init, config, |_, t, beta, x| {
        last = OdePoint { t, beta, stats: SummaryStats::from_array(x) };
    })?;
    Ok(last)
}

/// Overlaps of two independent uniform points on the sphere of radius `r` in
/// dimension `d` with the fixed axis `e₁`. Consumes the random stream exactly
/// as the trainer does when it initializes its means.
pub fn sample_initial_stats<R: Rng + ?Sized>(d: usize, r: f64, rng: &mut R) -> Result<SummaryStats> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("dimension must be at least 2, got {d}")));
    }
    let mu1 = uniform_on_sphere(d, r, rng);
    let mu2 = uniform_on_sphere(d, r, rng);
    let r2 = r * r;
    Ok(SummaryStats {
        m1: mu1[0] * r / r2,
        m2: mu2[0] * r / r2,
        s: dot(&mu1, &mu2) / r2,
    })
}

/// Point of the linearized saddle solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPoint {
    pub t: f64,
    pub sum: f64,
    pub diff: f64,
}

/// Closed-form solution of the dynamics linearized around `(0, 0, -1)` with
/// equal student weights, on the adapted clock:
///
/// ```text
/// d(m₁+m₂)/dt = -a(t)(m₁+m₂) - b(t),   a = 2f(-1) + g'(0)/2,  b = g(0)
/// d(m₁-m₂)/dt = -g'(0)/2 · (m₁-m₂)
/// ```
///
/// The time integrals are evaluated with the trapezoid rule on `n_grid`
/// intervals.
pub fn linearized_solution(
    init_sum: f64,
    init_diff: f64,
    schedule: &AnnealSchedule,
    t_end: f64,
    params: &ForceParams,
    n_grid: usize,
) -> Result<Vec<LinearPoint>> {
    if !(t_end > 0.0) {
        return Err(Error::InvalidArgument(format!("t_end must be positive, got {t_end}")));
    }
    let n = n_grid.max(1);
    let h = t_end / n as f64;
    let coeffs = |t: f64| -> Result<(f64, f64, f64)> {
        let sigma = schedule.beta(t)?.powf(-0.5);
        let gp = params.g_prime_unchecked(0.0, sigma);
        let a = 2.0 * params.f_unchecked(-1.0, sigma) + 0.5 * gp;
        Ok((a, params.g_unchecked(0.0, sigma), -0.5 * gp))
    };
    let mut out = Vec::with_capacity(n + 1);
    let (mut sum, mut log_growth) = (init_sum, 0.0);
    let (mut a0, mut b0, mut c0) = coeffs(0.0)?;
    out.push(LinearPoint { t: 0.0, sum, diff: init_diff });
    for k in 1..=n {
        let t = k as f64 * h;
        let (a1, b1, c1) = coeffs(t)?;
        // S(t+h) = e^{-ΔA} S(t) - ∫ b(u) e^{-(A(t+h) - A(u))} du
        let da = 0.5 * h * (a0 + a1);
        sum = (-da).exp() * sum - 0.5 * h * (b0 * (-da).exp() + b1);
        log_growth += 0.5 * h * (c0 + c1);
        out.push(LinearPoint { t, sum, diff: init_diff * log_growth.exp() });
        (a0, b0, c0) = (a1, b1, c1);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn params() -> ForceParams {
        ForceParams::new(3.0, 0.5, 0.8).unwrap()
    }

    #[test]
    fn algebraic_fixed_points() {
        for beta in [1e-4, 0.1, 1.0] {
            for st in [SummaryStats::new(1.0, -1.0, -1.0), SummaryStats::new(1.0, 1.0, 1.0)] {
                let r = ode_rhs(st, beta, &params()).unwrap();
                assert_eq!(r, [0.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn low_temperature_reduces_to_decoupled_flow() {
        // near s = -1 the entropic coupling vanishes
        let p = params();
        let st = SummaryStats::new(0.3, -0.2, -1.0 + 1e-9);
        let r = ode_rhs(st, 1.0, &p).unwrap();
        let decoupled = -0.5 * (1.0 - 0.09) * p.g_unchecked(0.3, 1.0);
        assert!((r[0] - decoupled).abs() < 0.01 * decoupled.abs(), "{} vs {decoupled}", r[0]);
        // and with σ ≪ R the force itself becomes -tanh(R²(m+ε))
        let p = ForceParams::new(20.0, 0.5, 0.8).unwrap();
        let r = ode_rhs(st, 1.0, &p).unwrap();
        let reduced = 0.5 * (1.0 - 0.09) * (400.0 * (0.3 + p.epsilon())).tanh();
        assert!((r[0] - reduced).abs() < 0.01 * reduced.abs(), "{} vs {reduced}", r[0]);
    }

    #[test]
    fn fixed_points_are_stationary() {
        let sched = AnnealSchedule::exponential(1.0 / 90.0, 50.0).unwrap();
        for clock in [true, false] {
            let mut c = OdeConfig::new(params(), sched.clone(), 100.0, 0.05).unwrap();
            c.rate_adapted = clock;
            for st in [SummaryStats::new(1.0, -1.0, -1.0), SummaryStats::new(1.0, 1.0, 1.0)] {
                let tr = integrate(st, &c).unwrap();
                for p in &tr {
                    assert!((p.stats.m1 - st.m1).abs() < 1e-12);
                    assert!((p.stats.m2 - st.m2).abs() < 1e-12);
                    assert!((p.stats.s - st.s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn reparameterized_matches_flow_clock() {
        let sched = AnnealSchedule::exponential(0.05, 20.0).unwrap();
        let init = SummaryStats::new(0.05, -0.02, 0.01);
        let mut c = OdeConfig::new(params(), sched, 40.0, 0.01).unwrap();
        c.rate_adapted = false;
        let direct = integrate_final(init, &c).unwrap();
        c.reparameterized = true;
        let rep = integrate_final(init, &c).unwrap();
        assert_eq!(rep.t, 40.0);
        for (a, b) in direct.stats.as_array().iter().zip(rep.stats.as_array()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn record_every_keeps_final_point() {
        let sched = AnnealSchedule::constant(0.5).unwrap();
        let mut c = OdeConfig::new(params(), sched, 1.05, 0.1).unwrap();
        c.record_every = 4;
        let tr = integrate(SummaryStats::new(0.1, 0.0, 0.0), &c).unwrap();
        let ts: Vec<f64> = tr.iter().map(|p| p.t).collect();
        assert_eq!(ts.len(), 4);
        assert_eq!(ts[3], 1.05);
        assert!((ts[2] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn unstable_step_is_reported() {
        let sched = AnnealSchedule::constant(1.0).unwrap();
        let c = OdeConfig::new(params(), sched, 50.0, 5.0).unwrap();
        let r = integrate(SummaryStats::new(0.5, 0.4, 0.0), &c);
        assert!(matches!(r, Err(Error::Instability { .. })));
    }

    #[test]
    fn initial_stats_are_gram_consistent() {
        let mut g = Xoshiro256PlusPlus::seed_from_u64(4);
        for _ in 0..200 {
            let st = sample_initial_stats(16, 3.0, &mut g).unwrap();
            // Gram matrix of (μ*, μ₁, μ₂)/R
            let det = 1.0 + 2.0 * st.m1 * st.m2 * st.s - st.m1.powi(2) - st.m2.powi(2) - st.s.powi(2);
            assert!(det >= -1e-12);
            assert!(1.0 - st.m1 * st.m1 >= 0.0);
        }
        assert!(sample_initial_stats(1, 3.0, &mut g).is_err());
    }

    #[test]
    fn linearized_zero_difference_stays_zero() {
        let sched = AnnealSchedule::exponential(1e-3, 30.0).unwrap();
        let tr = linearized_solution(1e-3, 0.0, &sched, 20.0, &params(), 400).unwrap();
        assert!(tr.iter().all(|p| p.diff == 0.0));
    }

    fn jacobian(at: [f64; 3], beta: f64, p: &ForceParams) -> [[f64; 3]; 3] {
        let h = 1e-6;
        let mut j = [[0.0; 3]; 3];
        for k in 0..3 {
            let (mut up, mut dn) = (at, at);
            up[k] += h;
            dn[k] -= h;
            let fu = ode_rhs(SummaryStats::from_array(up), beta, p).unwrap();
            let fd = ode_rhs(SummaryStats::from_array(dn), beta, p).unwrap();
            for i in 0..3 {
                j[i][k] = (fu[i] - fd[i]) / (2.0 * h);
            }
        }
        j
    }

    #[test]
    fn saddle_has_one_unstable_direction() {
        let p = params();
        let beta = 1e-4 / 9.0;
        let j = jacobian([0.0, 0.0, -1.0], beta, &p);
        let v = [1.0, -1.0, 0.0];
        let jv: Vec<f64> = (0..3).map(|i| (0..3).map(|k| j[i][k] * v[k]).sum()).collect();
        let lambda = jv[0];
        assert!(lambda > 0.0);
        for i in 0..3 {
            assert!((jv[i] - lambda * v[i]).abs() < 1e-6 * lambda, "{jv:?}");
        }
        // remaining pair from the trace and determinant
        let tr = j[0][0] + j[1][1] + j[2][2];
        let det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
            - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
            + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
        let (sum, prod) = (tr - lambda, det / lambda);
        assert!(sum < 0.0 && prod > 0.0, "sum {sum} prod {prod}");
    }

    #[test]
    fn linearized_growth_matches_exposure() {
        // diff growth over a constant high temperature versus exp(√(βR²/2π) t)
        let p = params();
        for br2 in [1e-4, 1e-3, 1e-2] {
            let beta = br2 / 9.0;
            let t_end = 1.0 / (br2 / (2.0 * std::f64::consts::PI)).sqrt();
            let sched = AnnealSchedule::constant(beta).unwrap();
            let tr = linearized_solution(0.0, 1.0, &sched, t_end, &p, 50).unwrap();
            let growth = tr.last().unwrap().diff;
            assert!((growth.ln() - 1.0).abs() < 0.02, "βR² = {br2}: log growth {}", growth.ln());
        }
    }

    #[test]
    fn linearized_solution_tracks_full_dynamics() {
        let p = params();
        let sched = AnnealSchedule::constant(1e-3).unwrap();
        let init = SummaryStats::new(1.5e-3, -0.5e-3, -1.0);
        let c = OdeConfig::new(p, sched.clone(), 20.0, 0.05).unwrap();
        let full = integrate(init, &c).unwrap();
        let lin = linearized_solution(init.m1 + init.m2, init.m1 - init.m2, &sched, 20.0, &p, 400).unwrap();
        let (a, b) = (full.last().unwrap().stats, lin.last().unwrap());
        assert!(((a.m1 - a.m2) - b.diff).abs() < 0.02 * b.diff.abs(), "{} vs {}", a.m1 - a.m2, b.diff);
        assert!(((a.m1 + a.m2) - b.sum).abs() < 0.02 * b.sum.abs().max(1e-4), "{} vs {}", a.m1 + a.m2, b.sum);
    }

    #[test]
    fn step_halving_converges() {
        let sched = AnnealSchedule::exponential(1.0 / 90.0, 50.0).unwrap();
        let init = SummaryStats::new(0.04, -0.01, 0.02);
        let run = |dt: f64| {
            let c = OdeConfig::new(params(), sched.clone(), 60.0, dt).unwrap();
            integrate_final(init, &c).unwrap().stats.as_array()
        };
        let (a, b, c) = (run(0.2), run(0.1), run(0.05));
        let e1: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let e2: f64 = b.iter().zip(&c).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(e2 < 1e-6, "{e2}");
        assert!(e2 <= e1 / 8.0 || e1 < 1e-12, "{e1} {e2}");
    }

    #[test]
    fn high_temperature_anti_aligns_means() {
        let mut g = Xoshiro256PlusPlus::seed_from_u64(12);
        let init = sample_initial_stats(512, 3.0, &mut g).unwrap();
        let c = OdeConfig::new(params(), AnnealSchedule::constant(1e-4).unwrap(), 10.0, 0.05).unwrap();
        let last = integrate_final(init, &c).unwrap().stats;
        assert!(last.s < -0.99, "{}", last.s);
        assert!(last.m1.abs() < 0.2 && last.m2.abs() < 0.2);
    }

    #[test]
    fn escape_is_faster_at_lower_temperature() {
        // time for |m₁ - m₂| to reach 0.5 from the same point
        let init = SummaryStats::new(0.02, -0.01, -0.99);
        let escape = |beta: f64| {
            let c = OdeConfig::new(params(), AnnealSchedule::constant(beta).unwrap(), 400.0, 0.1).unwrap();
            integrate(init, &c)
                .unwrap()
                .iter()
                .find(|p| (p.stats.m1 - p.stats.m2).abs() > 0.5)
                .map(|p| p.t)
                .unwrap()
        };
        let times: Vec<f64> = [0.002, 0.01, 0.05].iter().map(|&b| escape(b)).collect();
        assert!(times.windows(2).all(|w| w[1] < w[0]), "{times:?}");
    }

    #[test]
    fn initial_overlaps_are_exchangeable() {
        let mut g = Xoshiro256PlusPlus::seed_from_u64(99);
        let n = 2000;
        let (mut a, mut b): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|_| {
                let st = sample_initial_stats(64, 3.0, &mut g).unwrap();
                (st.m1, st.m2)
            })
            .unzip();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        // two-sample Kolmogorov-Smirnov statistic
        let (mut i, mut j, mut ks) = (0, 0, 0.0f64);
        while i < n && j < n {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            ks = ks.max((i as f64 - j as f64).abs() / n as f64);
        }
        // 1% critical value for equal sample sizes
        assert!(ks < 1.63 * (2.0 / n as f64).sqrt(), "{ks}");
    }
}
