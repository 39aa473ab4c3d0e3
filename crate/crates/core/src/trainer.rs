//! Annealed stochastic gradient descent on the student mixture.
//!
//! Means take a Euclidean gradient step followed by retraction onto the
//! sphere; variances follow the JKO rule
//! `σ² ← (1 - (2η/d) ∂L/∂σ²)² σ²`. One step at learning rate `η` advances
//! the schedule clock by `η`.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mixture::{dot, norm, summary_stats, StudentState, SummaryStats, TargetMixture};
use crate::schedule::AnnealSchedule;

pub const DEFAULT_M_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub d: usize,
    pub r: f64,
    pub w_star: f64,
    pub w1: f64,
    pub eta: f64,
    pub batch_size: usize,
    /// Steps under the schedule.
    pub steps: usize,
    /// Further steps at `β = 1` before classification.
    pub post_steps: usize,
    pub schedule: AnnealSchedule,
    pub sigma_init: f64,
    pub freeze_sigma: bool,
    pub freeze_mu: bool,
    /// Use `η/β(t)` as the step size.
    pub adapt_lr: bool,
    pub estimator: Estimator,
    /// Pair each draw with its mirror image `-z`.
    pub antithetic: bool,
    pub record_every: usize,
    pub m_threshold: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults for the two-mode problem with `d = 512`, `R = 3`, `w* = 0.8`.
    pub fn new(schedule: AnnealSchedule) -> Self {
        let mut c = TrainConfig {
            d: 512,
            r: 3.0,
            w_star: 0.8,
            w1: 0.5,
            eta: 0.05,
            batch_size: 512,
            steps: 0,
            post_steps: 500,
            sigma_init: schedule.beta_initial().powf(-0.5),
            schedule,
            freeze_sigma: false,
            freeze_mu: false,
            adapt_lr: true,
            estimator: Estimator::PathOnly,
            antithetic: true,
            record_every: 1,
            m_threshold: DEFAULT_M_THRESHOLD,
            seed: 0,
        };
        c.steps = c.default_steps();
        c
    }

    /// Enough steps for the schedule to reach `β = 1` (500 for schedules that
    /// start there).
    pub fn default_steps(&self) -> usize {
        match self.schedule.time_to_unity() {
            Some(t) if t > 0.0 => (t / self.eta - 1e-9).ceil() as usize,
            _ => 500,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidArgument("d must be at least 1".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta must be positive, got {}", self.eta)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if !(self.sigma_init > 0.0 && self.sigma_init.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma_init must be positive, got {}",
                self.sigma_init
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be at least 1".into()));
        }
        self.schedule.validate()?;
        if let AnnealSchedule::Exponential { t0, .. } = self.schedule {
            if (self.steps as f64) * self.eta < t0 * (1.0 - 1e-12) {
                return Err(Error::InvalidArgument(format!(
                    "steps * eta = {} does not reach t0 = {t0}",
                    self.steps as f64 * self.eta
                )));
            }
        }
        if self.steps as f64 * self.eta > self.schedule.horizon() {
            return Err(Error::InvalidArgument("run extends past the tabulated schedule".into()));
        }
        TargetMixture::new(self.d, self.r, self.w_star)?;
        if !(self.w1 > 0.0 && self.w1 < 1.0) {
            return Err(Error::InvalidArgument(format!("w1 must lie in (0,1), got {}", self.w1)));
        }
        Ok(())
    }

    /// Schedule value at step `k`; post steps run at `β = 1`.
    pub fn beta_at(&self, k: usize) -> Result<f64> {
        if k >= self.steps {
            return Ok(1.0);
        }
        self.schedule.beta(k as f64 * self.eta)
    }
}

/// Euclidean gradient of the tempered loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub var1: f64,
    pub var2: f64,
    /// Mean of `log q - β log π` over the batch.
    pub loss: f64,
}

impl Gradient {
    pub fn zeros(d: usize) -> Self {
        Gradient { mu1: vec![0.0; d], mu2: vec![0.0; d], var1: 0.0, var2: 0.0, loss: 0.0 }
    }
}

/// Reusable buffers for [`reparam_gradient_into`].
#[derive(Debug, Clone)]
pub struct Workspace {
    z: Vec<f64>,
}

impl Workspace {
    pub fn new(d: usize) -> Self {
        Workspace { z: vec![0.0; d] }
    }
}

fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Source of the per-sample noise: fresh draws or a replayed tape.
pub trait NoiseSource {
    /// True when the next draw is the mirror image `-z` of the previous one.
    fn mirrored_next(&self) -> bool {
        false
    }

    /// Returns `true` for component 1. Fills `z` with fresh noise, or leaves
    /// it untouched for a mirrored draw.
    fn next(&mut self, w1: f64, z: &mut [f64]) -> bool;
}

/// Draws component indicators and Gaussian noise from a random stream.
/// With `antithetic` set, every second draw repeats the previous component
/// with negated noise.
pub struct Fresh<'a, R: Rng + ?Sized> {
    rng: &'a mut R,
    antithetic: bool,
    pending: Option<bool>,
}

impl<'a, R: Rng + ?Sized> Fresh<'a, R> {
    pub fn new(rng: &'a mut R, antithetic: bool) -> Self {
        Fresh { rng, antithetic, pending: None }
    }
}

impl<R: Rng + ?Sized> NoiseSource for Fresh<'_, R> {
    fn mirrored_next(&self) -> bool {
        self.pending.is_some()
    }

    fn next(&mut self, w1: f64, z: &mut [f64]) -> bool {
        if let Some(first) = self.pending.take() {
            return first;
        }
        let first = self.rng.random::<f64>() < w1;
        for v in z.iter_mut() {
            *v = self.rng.sample(StandardNormal);
        }
        if self.antithetic {
            self.pending = Some(first);
        }
        first
    }
}

/// Replays a [`crate::mixture::NoiseTape`].
pub struct Replay<'a> {
    pub tape: &'a crate::mixture::NoiseTape,
    pub index: usize,
}

impl NoiseSource for Replay<'_> {
    fn next(&mut self, _w1: f64, z: &mut [f64]) -> bool {
        z.copy_from_slice(self.tape.row(self.index));
        let first = self.tape.first[self.index];
        self.index += 1;
        first
    }
}

/// Which terms of the pathwise derivative enter the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Estimator {
    /// Derivative through the sample path only; the score of `log q`, which
    /// has zero mean under `q`, is left out.
    #[default]
    PathOnly,
    /// Exact derivative of the per-sample loss, score included.
    Full,
}

impl std::str::FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "path" => Ok(Estimator::PathOnly),
            "full" => Ok(Estimator::Full),
            _ => Err(Error::Config(format!("unknown estimator '{s}' (expected path or full)"))),
        }
    }
}

/// Pathwise estimate of the gradient of `E_q[log q] - β E_q[log π]` with
/// respect to `(μ₁, μ₂, σ₁², σ₂²)`.
///
/// Each draw is `x = μ_c + σ_c z`. All vectors are expanded on `z`, `μ₁`,
/// `μ₂`, `μ*` so that each draw costs four dot products and at most two axpy
/// updates.
#[allow(clippy::too_many_arguments)]
pub fn reparam_gradient_into<N: NoiseSource>(
    state: &StudentState,
    target: &TargetMixture,
    beta: f64,
    batch_size: usize,
    estimator: Estimator,
    noise: &mut N,
    work: &mut Workspace,
    out: &mut Gradient,
) -> Result<()> {
    let d = state.d();
    if target.d != d {
        return Err(Error::DimensionMismatch { expected: target.d, got: d });
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
    }
    if work.z.len() != d {
        work.z = vec![0.0; d];
    }
    out.mu1.clear();
    out.mu1.resize(d, 0.0);
    out.mu2.clear();
    out.mu2.resize(d, 0.0);

    let df = d as f64;
    let (mu1, mu2, mus) = (&state.mu1, &state.mu2, &target.mu_star);
    let r1sq = dot(mu1, mu1);
    let r2sq = dot(mu2, mu2);
    let rssq = dot(mus, mus);
    let s12 = dot(mu1, mu2);
    let big_m = [dot(mu1, mus), dot(mu2, mus)];
    let v = [state.sigma1 * state.sigma1, state.sigma2 * state.sigma2];
    let sig = [state.sigma1, state.sigma2];
    let lw = [state.w1.ln(), state.w2().ln()];
    let log_norm = [
        -0.5 * df * (2.0 * std::f64::consts::PI * v[0]).ln(),
        -0.5 * df * (2.0 * std::f64::consts::PI * v[1]).ln(),
    ];
    let log_odds_star = (target.w_star / (1.0 - target.w_star)).ln();
    let base_pi = -0.5 * df * (2.0 * std::f64::consts::PI).ln();

    // coefficients of μ₁, μ₂, μ* in each mean gradient
    let mut coef = [[0.0f64; 3]; 2];
    let (mut gv, mut loss) = ([0.0f64; 2], 0.0);

    // z-coefficients not yet added to the mean gradients, for the current z
    let mut pending = [0.0f64; 2];
    let (mut zz, mut zm, mut zs) = (0.0, [0.0; 2], 0.0);

    for _ in 0..batch_size {
        let mirrored = noise.mirrored_next();
        if !mirrored {
            flush(&mut pending, &work.z, &mut out.mu1, &mut out.mu2);
        }
        let first = noise.next(state.w1, &mut work.z);
        let sign = if mirrored { -1.0 } else { 1.0 };
        if !mirrored {
            (zz, zm[0], zm[1], zs) = dots4(&work.z, mu1, mu2, mus);
        }
        let zm = [sign * zm[0], sign * zm[1]];
        let zs = sign * zs;
        let (c, o) = if first { (0, 1) } else { (1, 0) };
        let (sc, vc) = (sig[c], v[c]);
        let rc2 = if c == 0 { r1sq } else { r2sq };
        let ro2 = if c == 0 { r2sq } else { r1sq };

        // squared distances from x = μ_c + σ_c z
        let mut dist = [0.0; 2];
        dist[c] = vc * zz;
        dist[o] = rc2 + ro2 - 2.0 * s12 + 2.0 * sc * (zm[c] - zm[o]) + vc * zz;
        let x2 = rc2 + 2.0 * sc * zm[c] + vc * zz;
        let x_dot_star = big_m[c] + sc * zs;
        let x_dot_z = zm[c] + sc * zz;

        let l = [
            lw[0] + log_norm[0] - 0.5 * dist[0] / v[0],
            lw[1] + log_norm[1] - 0.5 * dist[1] / v[1],
        ];
        let r0 = expit(l[0] - l[1]);
        let resp = [r0, 1.0 - r0];
        let log_q = l[0].max(l[1]) + (-(l[0] - l[1]).abs()).exp().ln_1p();
        // log π = base - (|x|² + R²)/2 + log(w* e^{x·μ*} + (1-w*) e^{-x·μ*})
        let a = log_odds_star + 2.0 * x_dot_star;
        let log_pi = base_pi - 0.5 * (x2 + rssq) + (1.0 - target.w_star).ln() - x_dot_star + softplus(a);
        let rho = expit(a);
        loss += log_q - beta * log_pi;

        let u = [resp[0] / v[0], resp[1] / v[1]];
        // G = ∇ₓ log q - β ∇ₓ log π = κ x + u₁μ₁ + u₂μ₂ - β(2ρ-1)μ*
        let kappa = beta - u[0] - u[1];
        let star = -beta * (2.0 * rho - 1.0);

        // ∂/∂μ_c: G, plus the score u_c(x - μ_c)
        coef[c][c] += kappa + u[c];
        coef[c][o] += u[o];
        coef[c][2] += star;
        match estimator {
            Estimator::PathOnly => pending[c] += sign * sc * kappa,
            Estimator::Full => {
                pending[c] += sign * sc * (u[c] + kappa);
                // ∂/∂μ_o score: u_o(x - μ_o)
                pending[o] += sign * sc * u[o];
                coef[o][c] += u[o];
                coef[o][o] -= u[o];
            }
        }

        // path term G·(x - μ_c)/(2v_c), plus the score of log q in v_k
        if estimator == Estimator::Full {
            for k in 0..2 {
                gv[k] += resp[k] * (-0.5 * df / v[k] + 0.5 * dist[k] / (v[k] * v[k]));
            }
        }
        let g_dot_dx = sc * (kappa * x_dot_z + u[0] * zm[0] + u[1] * zm[1] + star * zs);
        gv[c] += g_dot_dx / (2.0 * vc);
    }
    flush(&mut pending, &work.z, &mut out.mu1, &mut out.mu2);

    let inv_b = 1.0 / batch_size as f64;
    for (k, acc) in [&mut out.mu1, &mut out.mu2].into_iter().enumerate() {
        let [a1, a2, a3] = coef[k];
        for j in 0..d {
            acc[j] = (acc[j] + a1 * mu1[j] + a2 * mu2[j] + a3 * mus[j]) * inv_b;
        }
    }
    out.var1 = gv[0] * inv_b;
    out.var2 = gv[1] * inv_b;
    out.loss = loss * inv_b;
    Ok(())
}

fn flush(pending: &mut [f64; 2], z: &[f64], acc1: &mut [f64], acc2: &mut [f64]) {
    for (k, acc) in [acc1, acc2].into_iter().enumerate() {
        let a = pending[k];
        if a != 0.0 {
            acc.iter_mut().zip(z).for_each(|(g, zj)| *g += a * zj);
        }
    }
    *pending = [0.0; 2];
}

/// `(z·z, z·a, z·b, z·c)` with four independent partial sums per product.
fn dots4(z: &[f64], a: &[f64], b: &[f64], c: &[f64]) -> (f64, f64, f64, f64) {
    let mut acc = [[0.0f64; 4]; 4];
    let n = z.len() / 4 * 4;
    for j in (0..n).step_by(4) {
        for l in 0..4 {
            let zj = z[j + l];
            acc[0][l] += zj * zj;
            acc[1][l] += zj * a[j + l];
            acc[2][l] += zj * b[j + l];
            acc[3][l] += zj * c[j + l];
        }
    }
    let mut out = [0.0; 4];
    for (k, o) in out.iter_mut().enumerate() {
        *o = acc[k].iter().sum();
    }
    for j in n..z.len() {
        out[0] += z[j] * z[j];
        out[1] += z[j] * a[j];
        out[2] += z[j] * b[j];
        out[3] += z[j] * c[j];
    }
    (out[0], out[1], out[2], out[3])
}

/// Allocating wrapper around [`reparam_gradient_into`] with fresh noise.
pub fn reparam_gradient<R: Rng + ?Sized>(
    state: &StudentState,
    target: &TargetMixture,
    beta: f64,
    batch_size: usize,
    estimator: Estimator,
    antithetic: bool,
    rng: &mut R,
) -> Result<Gradient> {
    let mut out = Gradient::zeros(state.d());
    let mut work = Workspace::new(state.d());
    let mut noise = Fresh::new(rng, antithetic);
    reparam_gradient_into(state, target, beta, batch_size, estimator, &mut noise, &mut work, &mut out)?;
    Ok(out)
}

/// One JKO update, in place. Means are retracted onto the sphere of their
/// current radius.
pub fn jko_step_in_place(
    state: &mut StudentState,
    grads: &Gradient,
    eta: f64,
    freeze_sigma: bool,
    freeze_mu: bool,
) -> Result<()> {
    let d = state.d();
    if grads.mu1.len() != d || grads.mu2.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: grads.mu1.len() });
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    let mut next_sigma = [state.sigma1, state.sigma2];
    if !freeze_sigma {
        for (k, g) in [grads.var1, grads.var2].into_iter().enumerate() {
            let mult = 1.0 - 2.0 * eta / d as f64 * g;
            if !(mult > 0.0) {
                return Err(Error::StepSize { multiplier: mult });
            }
            next_sigma[k] *= mult;
        }
    }
    if !freeze_mu {
        for (mu, g) in [(&mut state.mu1, &grads.mu1), (&mut state.mu2, &grads.mu2)] {
            let radius = norm(mu);
            let mut next: Vec<f64> = mu.iter().zip(g).map(|(m, gj)| m - eta * gj).collect();
            let n = norm(&next);
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::DegenerateState);
            }
            let scale = radius / n;
            next.iter_mut().for_each(|v| *v *= scale);
            *mu = next;
        }
    }
    state.sigma1 = next_sigma[0];
    state.sigma2 = next_sigma[1];
    Ok(())
}

/// Functional form of [`jko_step_in_place`].
pub fn jko_step(
    state: &StudentState,
    grads: &Gradient,
    eta: f64,
    freeze_sigma: bool,
    freeze_mu: bool,
) -> Result<StudentState> {
    let mut next = state.clone();
    jko_step_in_place(&mut next, grads, eta, freeze_sigma, freeze_mu)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Collapsed,
    Separated,
    Unconverged,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Collapsed => "collapsed",
            Outcome::Separated => "separated",
            Outcome::Unconverged => "unconverged",
        }
    }
}

/// Classifies final overlaps: both `|m| ≥ threshold` and equal signs means
/// collapse, opposite signs separation; anything else is unconverged.
pub fn classify_stats(stats: &SummaryStats, m_threshold: f64) -> Outcome {
    let (m1, m2) = (stats.m1, stats.m2);
    if m1.abs() >= m_threshold && m2.abs() >= m_threshold {
        if m1.signum() == m2.signum() {
            Outcome::Collapsed
        } else {
            Outcome::Separated
        }
    } else {
        Outcome::Unconverged
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub beta: f64,
    pub stats: SummaryStats,
    pub sigma1: f64,
    pub sigma2: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub final_state: StudentState,
    pub outcome: Outcome,
}

/// Classifies the last record of a trace.
pub fn classify_collapse(trace: &RunTrace, m_threshold: f64) -> Outcome {
    match trace.records.last() {
        Some(r) => classify_stats(&r.stats, m_threshold),
        None => Outcome::Unconverged,
    }
}

/// Runs `steps + post_steps` updates from means drawn uniformly on the sphere.
pub fn run_annealed_sgd<R: Rng + ?Sized>(config: &TrainConfig, rng: &mut R) -> Result<RunTrace> {
    config.validate()?;
    let target = TargetMixture::new(config.d, config.r, config.w_star)?;
    let state = StudentState::random_on_sphere(config.d, config.r, config.sigma_init, config.w1, rng)?;
    run_from_state(config, &target, state, rng)
}

/// Runs the trainer from a given initial state.
pub fn run_from_state<R: Rng + ?Sized>(
    config: &TrainConfig,
    target: &TargetMixture,
    mut state: StudentState,
    rng: &mut R,
) -> Result<RunTrace> {
    config.validate()?;
    let total = config.steps + config.post_steps;
    let mut records = Vec::with_capacity(total / config.record_every + 2);
    let mut grad = Gradient::zeros(config.d);
    let mut work = Workspace::new(config.d);
    let mut last_loss = f64::NAN;
    let record = |k: usize, beta: f64, state: &StudentState, loss: f64| TraceRecord {
        step: k,
        beta,
        stats: summary_stats(state, target),
        sigma1: state.sigma1,
        sigma2: state.sigma2,
        loss,
    };
    for k in 0..total {
        let beta = config.beta_at(k)?;
        let mut noise = Fresh::new(&mut *rng, config.antithetic);
        reparam_gradient_into(&state, target, beta, config.batch_size, config.estimator, &mut noise, &mut work, &mut grad)?;
        if k % config.record_every == 0 {
            records.push(record(k, beta, &state, grad.loss));
        }
        last_loss = grad.loss;
        let eta = if config.adapt_lr { config.eta / beta } else { config.eta };
        jko_step_in_place(&mut state, &grad, eta, config.freeze_sigma, config.freeze_mu)?;
    }
    records.push(record(total, config.beta_at(total)?, &state, last_loss));
    let outcome = classify_stats(&records.last().unwrap().stats, config.m_threshold);
    Ok(RunTrace { records, final_state: state, outcome })
}

pub const TRACE_HEADER: &str = "step,beta,m1,m2,s,sigma1,sigma2,loss";

/// Shortest representation that round-trips, which never needs more than 17
/// significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_trace_csv<W: Write>(trace: &RunTrace, mut out: W) -> Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in &trace.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.step,
            fmt_float(r.beta),
            fmt_float(r.stats.m1),
            fmt_float(r.stats.m2),
            fmt_float(r.stats.s),
            fmt_float(r.sigma1),
            fmt_float(r.sigma2),
            fmt_float(r.loss)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{tempered_loss_on_tape, uniform_on_sphere, NoiseTape};
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn rng(seed: u64) -> Xoshiro256PlusPlus {
        Xoshiro256PlusPlus::seed_from_u64(seed)
    }

    fn tape_gradient(state: &StudentState, target: &TargetMixture, beta: f64, tape: &NoiseTape) -> Gradient {
        tape_gradient_with(state, target, beta, tape, Estimator::Full)
    }

    fn tape_gradient_with(
        state: &StudentState,
        target: &TargetMixture,
        beta: f64,
        tape: &NoiseTape,
        estimator: Estimator,
    ) -> Gradient {
        let mut out = Gradient::zeros(state.d());
        let mut work = Workspace::new(state.d());
        let mut src = Replay { tape, index: 0 };
        reparam_gradient_into(state, target, beta, tape.len(), estimator, &mut src, &mut work, &mut out).unwrap();
        out
    }

    #[test]
    fn gradient_is_exact_derivative_of_tape_loss() {
        // common random numbers make the tape loss a smooth function of θ
        let mut g = rng(1);
        let d = 3;
        let target = TargetMixture::with_mean(uniform_on_sphere(d, 2.0, &mut g), 0.7).unwrap();
        let state = StudentState::new(
            uniform_on_sphere(d, 2.0, &mut g),
            uniform_on_sphere(d, 2.0, &mut g),
            0.8,
            1.3,
            0.4,
        )
        .unwrap();
        let beta = 0.6;
        let tape = NoiseTape::draw(50, d, state.w1, &mut g);
        let grad = tape_gradient(&state, &target, beta, &tape);
        let loss = |s: &StudentState| tempered_loss_on_tape(s, &target, beta, &tape).unwrap();
        assert!((grad.loss - loss(&state)).abs() < 1e-10);
        let h = 1e-6;
        for j in 0..d {
            for k in 0..2 {
                let (mut up, mut dn) = (state.clone(), state.clone());
                let (u, w) = if k == 0 { (&mut up.mu1, &mut dn.mu1) } else { (&mut up.mu2, &mut dn.mu2) };
                u[j] += h;
                w[j] -= h;
                let fd = (loss(&up) - loss(&dn)) / (2.0 * h);
                let an = if k == 0 { grad.mu1[j] } else { grad.mu2[j] };
                assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "mu{} [{j}]: {fd} vs {an}", k + 1);
            }
        }
        for k in 0..2 {
            let (mut up, mut dn) = (state.clone(), state.clone());
            let v = if k == 0 { state.sigma1 } else { state.sigma2 }.powi(2);
            let set = |s: &mut StudentState, v: f64| {
                if k == 0 { s.sigma1 = v.sqrt() } else { s.sigma2 = v.sqrt() }
            };
            set(&mut up, v + h);
            set(&mut dn, v - h);
            let fd = (loss(&up) - loss(&dn)) / (2.0 * h);
            let an = if k == 0 { grad.var1 } else { grad.var2 };
            assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "var{}: {fd} vs {an}", k + 1);
        }
    }

    #[test]
    fn path_only_estimator_has_same_mean() {
        // the dropped score term averages to zero; compare both estimators on
        // shared tapes so the difference is pure score noise
        let mut g = rng(4);
        let d = 4;
        let target = TargetMixture::new(d, 2.0, 0.8).unwrap();
        let state = StudentState::new(
            uniform_on_sphere(d, 2.0, &mut g),
            uniform_on_sphere(d, 2.0, &mut g),
            0.9,
            1.4,
            0.35,
        )
        .unwrap();
        let reps = 400;
        let diffs: Vec<[f64; 4]> = (0..reps)
            .map(|_| {
                let tape = NoiseTape::draw(64, d, state.w1, &mut g);
                let full = tape_gradient_with(&state, &target, 0.7, &tape, Estimator::Full);
                let path = tape_gradient_with(&state, &target, 0.7, &tape, Estimator::PathOnly);
                assert_eq!(full.loss, path.loss);
                [full.mu1[0] - path.mu1[0], full.mu2[1] - path.mu2[1], full.var1 - path.var1, full.var2 - path.var2]
            })
            .collect();
        for k in 0..4 {
            let xs: Vec<f64> = diffs.iter().map(|v| v[k]).collect();
            let mean = xs.iter().sum::<f64>() / reps as f64;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
            assert!(sd > 0.0);
            assert!(mean.abs() < 4.0 * sd / (reps as f64).sqrt(), "component {k}: {mean} ± {sd}");
        }
    }

    #[test]
    fn path_only_vanishes_at_exact_fit() {
        // q = π^β normalized with β = 1: every per-sample path gradient is zero
        let target = TargetMixture::new(3, 2.0, 0.5).unwrap();
        let neg: Vec<f64> = target.mu_star.iter().map(|v| -v).collect();
        let state = StudentState::new(target.mu_star.clone(), neg, 1.0, 1.0, 0.5).unwrap();
        let tape = NoiseTape::draw(32, 3, 0.5, &mut rng(6));
        let grad = tape_gradient_with(&state, &target, 1.0, &tape, Estimator::PathOnly);
        assert!(grad.mu1.iter().chain(&grad.mu2).all(|v| v.abs() < 1e-12));
        assert!(grad.var1.abs() < 1e-12 && grad.var2.abs() < 1e-12);
    }

    #[test]
    fn gradient_is_affine_in_beta() {
        let mut g = rng(2);
        let target = TargetMixture::new(6, 3.0, 0.8).unwrap();
        let state = StudentState::random_on_sphere(6, 3.0, 2.0, 0.5, &mut g).unwrap();
        let tape = NoiseTape::draw(40, 6, 0.5, &mut g);
        let g0 = tape_gradient(&state, &target, 0.0, &tape);
        let g1 = tape_gradient(&state, &target, 1.0, &tape);
        let gh = tape_gradient(&state, &target, 0.25, &tape);
        for j in 0..6 {
            assert!((gh.mu1[j] - (0.75 * g0.mu1[j] + 0.25 * g1.mu1[j])).abs() < 1e-12);
        }
        assert!((gh.var2 - (0.75 * g0.var2 + 0.25 * g1.var2)).abs() < 1e-10);
    }

    #[test]
    fn jko_arithmetic() {
        let state = StudentState::new(vec![3.0, 0.0], vec![0.0, 3.0], 2.0, 1.0, 0.5).unwrap();
        let zero = Gradient::zeros(2);
        assert_eq!(jko_step(&state, &zero, 0.1, false, false).unwrap(), state);
        let mut g = Gradient::zeros(2);
        let eta = 0.05;
        g.var1 = 2.0 / (4.0 * eta);
        let next = jko_step(&state, &g, eta, false, false).unwrap();
        assert!((next.sigma1 * next.sigma1 - 1.0).abs() < 1e-15);
        g.var1 = 2.0 / eta;
        assert!(matches!(jko_step(&state, &g, eta, false, false), Err(Error::StepSize { .. })));
        let mut g = Gradient::zeros(2);
        g.mu1 = vec![3.0 / 0.5, 0.0];
        assert_eq!(jko_step(&state, &g, 0.5, false, false), Err(Error::DegenerateState));
        assert!(jko_step(&state, &g, 0.5, false, true).is_ok());
    }

    #[test]
    fn sigma_update_is_gradient_step_on_sigma() {
        let d = 8;
        let state = StudentState::new(vec![1.0; d], vec![-1.0; d], 1.7, 1.0, 0.5).unwrap();
        let mut g = Gradient::zeros(d);
        g.var1 = 3.0;
        let err = |eta: f64| {
            let next = jko_step(&state, &g, eta, false, true).unwrap();
            let plain = 1.7 - eta / d as f64 * 2.0 * 1.7 * g.var1;
            (next.sigma1 - plain).abs()
        };
        // the σ update is exactly linear in η: σ(1 - 2ηg/d)
        assert!(err(1e-3) < 1e-15 && err(1e-4) < 1e-15);
    }

    #[test]
    fn classification() {
        let c = |m1, m2| classify_stats(&SummaryStats::new(m1, m2, 0.0), 0.9);
        assert_eq!(c(0.99, -0.99), Outcome::Separated);
        assert_eq!(c(0.99, 0.98), Outcome::Collapsed);
        assert_eq!(c(0.5, 0.99), Outcome::Unconverged);
        assert_eq!(c(-0.95, -0.91), Outcome::Collapsed);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::new(AnnealSchedule::exponential(1.0 / 90.0, 500.0).unwrap());
        assert_eq!(c.steps, 10_000);
        assert!((c.sigma_init - 90f64.sqrt()).abs() < 1e-12);
        c.validate().unwrap();
        c.steps = 9_999;
        assert!(c.validate().is_err());
        let c = TrainConfig::new(AnnealSchedule::constant(1.0).unwrap());
        assert_eq!((c.steps, c.sigma_init), (500, 1.0));
        assert_eq!(c.beta_at(10_000).unwrap(), 1.0);
    }
}
