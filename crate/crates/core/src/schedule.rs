//! Inverse-temperature schedules `β(t)`.
//!
//! Time is measured on the gradient-flow clock: one optimizer step at
//! learning rate `η` advances it by `η`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum AnnealSchedule {
    /// `β(t) = min(β_i^{1 - t/t0}, 1)`.
    Exponential { beta_i: f64, t0: f64 },
    /// `β(t) = β` for all `t`.
    Constant { beta: f64 },
    /// Piecewise-linear interpolation through `(t, β)` points.
    Tabulated { points: Vec<(f64, f64)> },
}

impl AnnealSchedule {
    pub fn exponential(beta_i: f64, t0: f64) -> Result<Self> {
        let s = AnnealSchedule::Exponential { beta_i, t0 };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(beta: f64) -> Result<Self> {
        let s = AnnealSchedule::Constant { beta };
        s.validate()?;
        Ok(s)
    }

    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self> {
        let s = AnnealSchedule::Tabulated { points };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| b > 0.0 && b <= 1.0;
        match self {
            AnnealSchedule::Exponential { beta_i, t0 } => {
                if !in_unit(*beta_i) {
                    return Err(Error::InvalidArgument(format!(
                        "beta_i must lie in (0,1], got {beta_i}"
                    )));
                }
                if !(*t0 > 0.0 && t0.is_finite()) {
                    return Err(Error::InvalidArgument(format!("t0 must be positive, got {t0}")));
                }
            }
            AnnealSchedule::Constant { beta } => {
                if !in_unit(*beta) {
                    return Err(Error::InvalidArgument(format!(
                        "beta must lie in (0,1], got {beta}"
                    )));
                }
            }
            AnnealSchedule::Tabulated { points } => {
                if points.is_empty() {
                    return Err(Error::InvalidArgument("empty schedule table".into()));
                }
                if points.iter().any(|&(t, b)| !t.is_finite() || !in_unit(b)) {
                    return Err(Error::InvalidArgument(
                        "tabulated beta values must lie in (0,1]".into(),
                    ));
                }
                for w in points.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(Error::InvalidArgument(
                            "tabulated times must be strictly increasing".into(),
                        ));
                    }
                    if w[1].1 < w[0].1 {
                        return Err(Error::InvalidArgument(
                            "tabulated beta must be non-decreasing".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// `β(t)`.
    pub fn beta(&self, t: f64) -> Result<f64> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::InvalidArgument(format!("time must be non-negative, got {t}")));
        }
        match self {
            AnnealSchedule::Exponential { beta_i, t0 } => {
                Ok(beta_i.powf(1.0 - t / t0).min(1.0))
            }
            AnnealSchedule::Constant { beta } => Ok(*beta),
            AnnealSchedule::Tabulated { points } => {
                let (lo, hi) = (points[0].0, points[points.len() - 1].0);
                if t < lo || t > hi {
                    return Err(Error::ScheduleDomain { t, lo, hi });
                }
                let k = points.partition_point(|&(ti, _)| ti <= t);
                if k == points.len() {
                    return Ok(points[k - 1].1);
                }
                let (t_a, b_a) = points[k - 1];
                let (t_b, b_b) = points[k];
                Ok(b_a + (b_b - b_a) * (t - t_a) / (t_b - t_a))
            }
        }
    }

    /// Initial inverse temperature `β(0)` (first table entry for tables).
    pub fn beta_initial(&self) -> f64 {
        match self {
            AnnealSchedule::Exponential { beta_i, .. } => *beta_i,
            AnnealSchedule::Constant { beta } => *beta,
            AnnealSchedule::Tabulated { points } => points[0].1,
        }
    }

    /// Time from which `β ≡ 1`, if the schedule reaches 1.
    pub fn time_to_unity(&self) -> Option<f64> {
        match self {
            AnnealSchedule::Exponential { beta_i, t0 } => {
                Some(if *beta_i >= 1.0 { 0.0 } else { *t0 })
            }
            AnnealSchedule::Constant { beta } => (*beta >= 1.0).then_some(0.0),
            AnnealSchedule::Tabulated { points } => {
                points.iter().find(|&&(_, b)| b >= 1.0).map(|&(t, _)| t)
            }
        }
    }

    /// Last time at which the schedule can be evaluated.
    pub fn horizon(&self) -> f64 {
        match self {
            AnnealSchedule::Tabulated { points } => points[points.len() - 1].0,
            _ => f64::INFINITY,
        }
    }

    /// First time `t` with `β(t) ≥ target`, by bisection on `[0, t_max]`.
    /// Returns `None` when the target is not reached before `t_max`.
    pub fn first_time_at(&self, target: f64, t_max: f64) -> Result<Option<f64>> {
        if self.beta(0.0)? >= target {
            return Ok(Some(0.0));
        }
        if let AnnealSchedule::Exponential { beta_i, t0 } = self {
            // β_i^{1 - t/t0} = target
            if target > 1.0 {
                return Ok(None);
            }
            let t = t0 * (1.0 - target.ln() / beta_i.ln());
            return Ok((t <= t_max).then_some(t));
        }
        if self.beta(t_max)? < target {
            return Ok(None);
        }
        let (mut lo, mut hi) = (0.0, t_max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.beta(mid)? >= target {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-14 * hi.max(1.0) {
                break;
            }
        }
        Ok(Some(hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_values() {
        let s = AnnealSchedule::exponential(0.1, 500.0).unwrap();
        assert_eq!(s.beta(500.0).unwrap(), 1.0);
        assert_eq!(s.beta(900.0).unwrap(), 1.0);
        assert!((s.beta(250.0).unwrap() - 0.1f64.sqrt()).abs() < 1e-15);
        assert!((s.beta(250.0).unwrap() - 0.31623).abs() < 1e-5);
        let s = AnnealSchedule::exponential(1.0 / 90.0, 500.0).unwrap();
        assert!((s.beta(0.0).unwrap() - 0.011111).abs() < 1e-6);
    }

    #[test]
    fn exponential_is_monotone_and_clamped() {
        let s = AnnealSchedule::exponential(1e-4, 37.0).unwrap();
        let mut prev = 0.0;
        for k in 0..=1000 {
            let b = s.beta(k as f64 * 0.05).unwrap();
            assert!(b >= prev && b <= 1.0);
            prev = b;
        }
        assert_eq!(s.time_to_unity(), Some(37.0));
    }

    #[test]
    fn constant_and_table() {
        let c = AnnealSchedule::constant(0.3).unwrap();
        assert_eq!(c.beta(1e9).unwrap(), 0.3);
        let t = AnnealSchedule::tabulated(vec![(0.0, 0.1), (10.0, 0.5), (20.0, 1.0)]).unwrap();
        assert!((t.beta(5.0).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(t.beta(20.0).unwrap(), 1.0);
        assert!(matches!(t.beta(20.5), Err(Error::ScheduleDomain { .. })));
        assert!(AnnealSchedule::tabulated(vec![(0.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(AnnealSchedule::tabulated(vec![(0.0, 0.5), (0.0, 0.6)]).is_err());
        assert!(AnnealSchedule::exponential(0.0, 1.0).is_err());
        assert!(AnnealSchedule::exponential(0.5, 0.0).is_err());
    }

    #[test]
    fn first_time_at_matches_bisection() {
        let e = AnnealSchedule::exponential(1.0 / 90.0, 500.0).unwrap();
        let target = 0.608 / 9.0;
        let t1 = e.first_time_at(target, 1e9).unwrap().unwrap();
        assert!((e.beta(t1).unwrap() - target).abs() < 1e-14);
        let pts: Vec<(f64, f64)> = (0..=100)
            .map(|k| {
                let t = 5.0 * k as f64;
                (t, e.beta(t).unwrap())
            })
            .collect();
        let tab = AnnealSchedule::tabulated(pts).unwrap();
        let t1_tab = tab.first_time_at(target, 500.0).unwrap().unwrap();
        assert!((t1_tab - t1).abs() < 0.5);
        assert_eq!(AnnealSchedule::constant(0.01).unwrap().first_time_at(0.5, 100.0).unwrap(), None);
    }
}
