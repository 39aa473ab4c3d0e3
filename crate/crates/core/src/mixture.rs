//! Target and student Gaussian mixtures.
//!
//! The target is `π = w* N(μ*, I) + (1-w*) N(-μ*, I)`; the student is
//! `q = w₁ N(μ₁, σ₁² I) + w₂ N(μ₂, σ₂² I)` with both means on the sphere of
//! radius `R`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetMixture {
    pub d: usize,
    pub r: f64,
    pub w_star: f64,
    pub mu_star: Vec<f64>,
}

impl TargetMixture {
    /// Target with `μ* = R e₁`.
    pub fn new(d: usize, r: f64, w_star: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        let mut mu_star = vec![0.0; d];
        mu_star[0] = r;
        Self::with_mean(mu_star, w_star)
    }

    /// Target with an explicit mean; `R` is taken as its norm.
    pub fn with_mean(mu_star: Vec<f64>, w_star: f64) -> Result<Self> {
        if mu_star.is_empty() {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if !(w_star > 0.0 && w_star < 1.0) {
            return Err(Error::InvalidArgument(format!("w_star must lie in (0,1), got {w_star}")));
        }
        let r = norm(&mu_star);
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument("target mean must be finite".into()));
        }
        Ok(TargetMixture { d: mu_star.len(), r, w_star, mu_star })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentState {
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub sigma1: f64,
    pub sigma2: f64,
    pub w1: f64,
}

impl StudentState {
    pub fn new(mu1: Vec<f64>, mu2: Vec<f64>, sigma1: f64, sigma2: f64, w1: f64) -> Result<Self> {
        if mu1.len() != mu2.len() {
            return Err(Error::DimensionMismatch { expected: mu1.len(), got: mu2.len() });
        }
        if !(sigma1 > 0.0 && sigma2 > 0.0) {
            return Err(Error::InvalidArgument("student standard deviations must be positive".into()));
        }
        if !(w1 > 0.0 && w1 < 1.0) {
            return Err(Error::InvalidArgument(format!("w1 must lie in (0,1), got {w1}")));
        }
        Ok(StudentState { mu1, mu2, sigma1, sigma2, w1 })
    }

    /// Two independent means drawn uniformly on the sphere of radius `r`.
    pub fn random_on_sphere<R: Rng + ?Sized>(
        d: usize,
        r: f64,
        sigma: f64,
        w1: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mu1 = uniform_on_sphere(d, r, rng);
        let mu2 = uniform_on_sphere(d, r, rng);
        Self::new(mu1, mu2, sigma, sigma, w1)
    }

    pub fn d(&self) -> usize {
        self.mu1.len()
    }

    pub fn w2(&self) -> f64 {
        1.0 - self.w1
    }
}

/// Normalized overlaps `m₁ = μ₁·μ*/R²`, `m₂ = μ₂·μ*/R²`, `s = μ₁·μ₂/R²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub m1: f64,
    pub m2: f64,
    pub s: f64,
}

impl SummaryStats {
    pub fn new(m1: f64, m2: f64, s: f64) -> Self {
        SummaryStats { m1, m2, s }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.m1, self.m2, self.s]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        SummaryStats { m1: a[0], m2: a[1], s: a[2] }
    }

    /// True when every overlap lies in `[-1 - slack, 1 + slack]`.
    pub fn within(&self, slack: f64) -> bool {
        self.as_array().iter().all(|v| v.abs() <= 1.0 + slack)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dist2_neg(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x + y) * (x + y)).sum()
}

/// `log(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (-(a - b).abs()).exp().ln_1p()
}

/// A vector drawn uniformly on the sphere of radius `r` in dimension `d`.
pub fn uniform_on_sphere<R: Rng + ?Sized>(d: usize, r: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 0.0 {
            return v.into_iter().map(|x| r * x / n).collect();
        }
    }
}

/// `log π(x)`.
pub fn log_target_density(x: &[f64], target: &TargetMixture) -> Result<f64> {
    if x.len() != target.d {
        return Err(Error::DimensionMismatch { expected: target.d, got: x.len() });
    }
    let base = -0.5 * target.d as f64 * LN_2PI;
    let a = target.w_star.ln() - 0.5 * dist2(x, &target.mu_star);
    let b = (1.0 - target.w_star).ln() - 0.5 * dist2_neg(x, &target.mu_star);
    Ok(base + log_add_exp(a, b))
}

/// `log q(x)`.
pub fn log_student_density(x: &[f64], state: &StudentState) -> Result<f64> {
    let d = state.d();
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    let comp = |w: f64, mu: &[f64], sigma: f64| {
        let v = sigma * sigma;
        w.ln() - 0.5 * d as f64 * (2.0 * PI * v).ln() - 0.5 * dist2(x, mu) / v
    };
    Ok(log_add_exp(
        comp(state.w1, &state.mu1, state.sigma1),
        comp(state.w2(), &state.mu2, state.sigma2),
    ))
}

/// Component indicators and standard-normal noise for `n` draws. Replaying a
/// tape against different states gives common-random-number estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTape {
    pub d: usize,
    /// `true` for component 1.
    pub first: Vec<bool>,
    /// Row-major `n × d` noise.
    pub z: Vec<f64>,
}

impl NoiseTape {
    pub fn draw<R: Rng + ?Sized>(n: usize, d: usize, w1: f64, rng: &mut R) -> Self {
        let mut first = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n * d);
        for _ in 0..n {
            first.push(rng.random::<f64>() < w1);
            z.extend((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        }
        NoiseTape { d, first, z }
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.d..(i + 1) * self.d]
    }

    /// The `i`-th sample under `state`: `μ_c + σ_c z_i`.
    pub fn sample(&self, i: usize, state: &StudentState) -> Vec<f64> {
        let (mu, sigma) = if self.first[i] {
            (&state.mu1, state.sigma1)
        } else {
            (&state.mu2, state.sigma2)
        };
        mu.iter().zip(self.row(i)).map(|(m, z)| m + sigma * z).collect()
    }
}

/// Draws `n` samples from the student, one per row.
pub fn sample_student<R: Rng + ?Sized>(
    state: &StudentState,
    n: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let tape = NoiseTape::draw(n, state.d(), state.w1, rng);
    (0..n).map(|i| tape.sample(i, state)).collect()
}

/// Per-sample values `log q(x) - β log π(x)` on a fixed tape.
pub fn tempered_loss_terms(
    state: &StudentState,
    target: &TargetMixture,
    beta: f64,
    tape: &NoiseTape,
) -> Result<Vec<f64>> {
    if tape.d != state.d() {
        return Err(Error::DimensionMismatch { expected: state.d(), got: tape.d });
    }
    (0..tape.len())
        .map(|i| {
            let x = tape.sample(i, state);
            Ok(log_student_density(&x, state)? - beta * log_target_density(&x, target)?)
        })
        .collect()
}

/// Mean of [`tempered_loss_terms`].
pub fn tempered_loss_on_tape(
    state: &StudentState,
    target: &TargetMixture,
    beta: f64,
    tape: &NoiseTape,
) -> Result<f64> {
    let terms = tempered_loss_terms(state, target, beta, tape)?;
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// Monte Carlo estimate of `E_q[log q] - β E_q[log π]`.
pub fn tempered_loss_estimate<R: Rng + ?Sized>(
    state: &StudentState,
    target: &TargetMixture,
    beta: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let tape = NoiseTape::draw(n_samples, state.d(), state.w1, rng);
    tempered_loss_on_tape(state, target, beta, &tape)
}

pub fn summary_stats(state: &StudentState, target: &TargetMixture) -> SummaryStats {
    let r2 = target.r * target.r;
    SummaryStats {
        m1: dot(&state.mu1, &target.mu_star) / r2,
        m2: dot(&state.mu2, &target.mu_star) / r2,
        s: dot(&state.mu1, &state.mu2) / r2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn rng(seed: u64) -> Xoshiro256PlusPlus {
        Xoshiro256PlusPlus::seed_from_u64(seed)
    }

    #[test]
    fn target_density_simple_cases() {
        let t = TargetMixture::new(1, 0.0, 0.3).unwrap();
        let v = log_target_density(&[0.0], &t).unwrap();
        assert!((v + 0.5 * LN_2PI).abs() < 1e-15);
        let t = TargetMixture::new(1, 1.0, 0.5).unwrap();
        let v = log_target_density(&[0.0], &t).unwrap();
        assert!((v - (-0.5 * LN_2PI - 0.5)).abs() < 1e-15);
        assert!(log_target_density(&[0.0, 1.0], &t).is_err());
    }

    #[test]
    fn target_density_at_mode() {
        // two-term sum evaluated directly; the far term is e^{-18} smaller
        let t = TargetMixture::new(2, 3.0, 0.8).unwrap();
        let x = t.mu_star.clone();
        let direct = (0.8 / (2.0 * PI) + 0.2 / (2.0 * PI) * (-18.0f64).exp()).ln();
        assert!((log_target_density(&x, &t).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn student_density_identities() {
        let mu = vec![0.3, -1.2, 0.5];
        let s = StudentState::new(mu.clone(), mu.clone(), 1.0, 1.0, 0.27).unwrap();
        let x = [1.0, 0.0, -2.0];
        let want = -1.5 * LN_2PI - 0.5 * dist2(&x, &mu);
        assert!((log_student_density(&x, &s).unwrap() - want).abs() < 1e-14);

        let (mu1, mu2) = (vec![1.0, 2.0, 0.0], vec![-2.0, 0.5, 1.0]);
        let sigma: f64 = 0.7;
        let s = StudentState::new(mu1.clone(), mu2.clone(), sigma, sigma, 0.5).unwrap();
        let v = sigma * sigma;
        let want = (0.5 * (2.0 * PI * v).powf(-1.5) * (1.0 + (-dist2(&mu1, &mu2) / (2.0 * v)).exp())).ln();
        assert!((log_student_density(&mu1, &s).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn student_density_matches_direct_sum() {
        let mut g = rng(3);
        let s = StudentState::new(
            uniform_on_sphere(4, 2.0, &mut g),
            uniform_on_sphere(4, 2.0, &mut g),
            0.8,
            1.3,
            0.35,
        )
        .unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..4).map(|_| 2.0 * g.sample::<f64, _>(StandardNormal)).collect();
            let n = |mu: &[f64], sig: f64| {
                (2.0 * PI * sig * sig).powf(-2.0) * (-dist2(&x, mu) / (2.0 * sig * sig)).exp()
            };
            let direct = (0.35 * n(&s.mu1, 0.8) + 0.65 * n(&s.mu2, 1.3)).ln();
            assert!((log_student_density(&x, &s).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn densities_finite_far_away() {
        let t = TargetMixture::new(3, 3.0, 0.8).unwrap();
        let s = StudentState::new(vec![3.0, 0.0, 0.0], vec![0.0, 3.0, 0.0], 0.1, 2.0, 0.5).unwrap();
        let x = [1e6, -3e5, 2e5];
        assert!(log_target_density(&x, &t).unwrap().is_finite());
        assert!(log_student_density(&x, &s).unwrap().is_finite());
    }

    #[test]
    fn sampling_statistics() {
        let mut g = rng(11);
        let d = 3;
        let mu1 = vec![1.0, 0.0, 0.0];
        let mu2 = vec![0.0, 1.0, 0.0];
        let s = StudentState::new(mu1.clone(), mu2, 1e-6, 1e-6, 0.5).unwrap();
        let n = 100_000;
        let tape = NoiseTape::draw(n, d, 0.5, &mut g);
        let n1 = tape.first.iter().filter(|&&b| b).count() as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((n1 / n as f64 - 0.5).abs() < 5.0 * se);
        let first = (0..n).find(|&i| tape.first[i]).unwrap();
        let x = tape.sample(first, &s);
        assert!(dist2(&x, &mu1).sqrt() < 1e-4);

        // variance along e₃ is w₁σ₁² + w₂σ₂²
        let s = StudentState::new(vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], 0.5, 2.0, 0.3).unwrap();
        let xs = sample_student(&s, n, &mut g);
        let proj: Vec<f64> = xs.iter().map(|x| x[2]).collect();
        let mean = proj.iter().sum::<f64>() / n as f64;
        let var = proj.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let want = 0.3 * 0.25 + 0.7 * 4.0;
        let m4 = proj.iter().map(|p| p.powi(4)).sum::<f64>() / n as f64;
        let se = ((m4 - var * var) / n as f64).sqrt();
        assert!((var - want).abs() < 3.0 * se, "{var} vs {want} ± {se}");
    }

    #[test]
    fn loss_is_zero_for_matched_distribution() {
        let mut g = rng(5);
        let t = TargetMixture::new(6, 3.0, 0.5).unwrap();
        let mut mu2 = t.mu_star.clone();
        mu2.iter_mut().for_each(|v| *v = -*v);
        let s = StudentState::new(t.mu_star.clone(), mu2, 1.0, 1.0, 0.5).unwrap();
        let est: Vec<f64> = (0..50)
            .map(|_| tempered_loss_estimate(&s, &t, 1.0, 64, &mut g).unwrap())
            .collect();
        let mean = est.iter().sum::<f64>() / 50.0;
        let sd = (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 49.0).sqrt();
        assert!(mean.abs() < 5.0 * sd / 50f64.sqrt() + 1e-12);
    }

    #[test]
    fn loss_is_affine_in_beta() {
        let mut g = rng(8);
        let t = TargetMixture::new(5, 3.0, 0.8).unwrap();
        let s = StudentState::random_on_sphere(5, 3.0, 1.4, 0.5, &mut g).unwrap();
        let tape = NoiseTape::draw(200, 5, 0.5, &mut g);
        let l0 = tempered_loss_on_tape(&s, &t, 1e-300, &tape).unwrap();
        let l1 = tempered_loss_on_tape(&s, &t, 1.0, &tape).unwrap();
        let mean_log_pi = (0..tape.len())
            .map(|i| log_target_density(&tape.sample(i, &s), &t).unwrap())
            .sum::<f64>()
            / tape.len() as f64;
        let mean_log_q = (0..tape.len())
            .map(|i| log_student_density(&tape.sample(i, &s), &s).unwrap())
            .sum::<f64>()
            / tape.len() as f64;
        assert!((l0 - mean_log_q).abs() < 1e-12);
        assert!(((l1 - l0) + mean_log_pi).abs() < 1e-10);
        let lh = tempered_loss_on_tape(&s, &t, 0.5, &tape).unwrap();
        assert!((lh - 0.5 * (l0 + l1)).abs() < 1e-10);
    }

    #[test]
    fn summary_stats_basics() {
        let t = TargetMixture::new(4, 2.0, 0.8).unwrap();
        let mut mu2 = t.mu_star.clone();
        mu2.iter_mut().for_each(|v| *v = -*v);
        let s = StudentState::new(t.mu_star.clone(), mu2, 1.0, 1.0, 0.5).unwrap();
        let st = summary_stats(&s, &t);
        assert_eq!((st.m1, st.m2, st.s), (1.0, -1.0, -1.0));
    }

    #[test]
    fn equator_concentration() {
        let mut g = rng(21);
        let d = 512;
        let t = TargetMixture::new(d, 3.0, 0.8).unwrap();
        let n = 10_000;
        let m1: Vec<f64> = (0..n)
            .map(|_| {
                let s = StudentState::random_on_sphere(d, 3.0, 1.0, 0.5, &mut g).unwrap();
                summary_stats(&s, &t).m1
            })
            .collect();
        let mean = m1.iter().sum::<f64>() / n as f64;
        let var = m1.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 5.0 * (1.0 / (d as f64 * n as f64)).sqrt());
        assert!((var * d as f64 - 1.0).abs() < 0.05, "{}", var * d as f64);
    }
}
