//! Flat `key=value` experiment configuration.
//!
//! Lines are `key=value`; blank lines and lines starting with `#` are
//! ignored. Unknown keys are rejected. Values set later override earlier ones,
//! so a file followed by command-line overrides behaves as expected.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{Engine, SweepConfig};
use crate::schedule::AnnealSchedule;
use crate::theory::{TheoryParams, DEFAULT_ALPHA};
use crate::trainer::{Estimator, TrainConfig, DEFAULT_M_THRESHOLD};

/// Every accepted key, in documentation order.
pub const KEYS: &[&str] = &[
    "d",
    "R",
    "w_star",
    "w1",
    "eta",
    "batch_size",
    "steps",
    "post_steps",
    "schedule.kind",
    "schedule.beta_i",
    "schedule.t0",
    "schedule.beta",
    "schedule.points",
    "sigma_init",
    "freeze_sigma",
    "freeze_mu",
    "adapt_lr",
    "estimator",
    "antithetic",
    "record_every",
    "m_threshold",
    "alpha",
    "seed",
    "ode.dt",
    "sweep.beta_i",
    "sweep.t0",
    "sweep.replicates",
    "sweep.engine",
    "iso.level",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Exponential,
    Constant,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub d: usize,
    pub r: f64,
    pub w_star: f64,
    pub w1: f64,
    pub eta: f64,
    pub batch_size: usize,
    /// `None` means enough steps to reach `β = 1`.
    pub steps: Option<usize>,
    pub post_steps: usize,
    pub schedule_kind: ScheduleKind,
    pub beta_i: f64,
    pub t0: f64,
    pub beta: f64,
    pub points: Vec<(f64, f64)>,
    /// `None` means `β(0)^{-1/2}`.
    pub sigma_init: Option<f64>,
    pub freeze_sigma: bool,
    pub freeze_mu: bool,
    pub adapt_lr: bool,
    pub estimator: Estimator,
    pub antithetic: bool,
    pub record_every: usize,
    pub m_threshold: f64,
    pub alpha: f64,
    pub seed: u64,
    pub ode_dt: f64,
    pub sweep_beta_i: Vec<f64>,
    pub sweep_t0: Vec<f64>,
    pub replicates: usize,
    pub engine: Engine,
    pub iso_level: f64,
    /// Keys assigned by [`ExperimentConfig::set`].
    pub explicit: BTreeSet<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let hi = DEFAULT_ALPHA / 9.0;
        let lo: f64 = 1e-4;
        let sweep_beta_i = (0..5).map(|k| lo * (hi / lo).powf(k as f64 / 4.0)).collect();
        ExperimentConfig {
            d: 512,
            r: 3.0,
            w_star: 0.8,
            w1: 0.5,
            eta: 0.05,
            batch_size: 512,
            steps: None,
            post_steps: 500,
            schedule_kind: ScheduleKind::Exponential,
            beta_i: 1.0 / 90.0,
            t0: 500.0,
            beta: 1.0,
            points: Vec::new(),
            sigma_init: None,
            freeze_sigma: false,
            freeze_mu: false,
            adapt_lr: true,
            estimator: Estimator::PathOnly,
            antithetic: true,
            record_every: 1,
            m_threshold: DEFAULT_M_THRESHOLD,
            alpha: DEFAULT_ALPHA,
            seed: 1,
            ode_dt: 0.05,
            sweep_beta_i,
            sweep_t0: vec![50.0, 150.0, 500.0, 1500.0],
            replicates: 50,
            engine: Engine::Ode,
            iso_level: 0.5,
            explicit: BTreeSet::new(),
        }
    }
}

fn bad(key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("{key}={value}: expected {what}"))
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value.parse().map_err(|_| bad(key, value, "a number"))?;
    if !v.is_finite() {
        return Err(bad(key, value, "a finite number"));
    }
    Ok(v)
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value.parse().map_err(|_| bad(key, value, "a non-negative integer"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(key, value, "true or false")),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = value
        .split(',')
        .map(|s| parse_f64(key, s.trim()))
        .collect::<Result<_>>()?;
    if v.is_empty() {
        return Err(bad(key, value, "a comma-separated list"));
    }
    Ok(v)
}

/// `t:β` pairs separated by commas.
fn parse_points(key: &str, value: &str) -> Result<Vec<(f64, f64)>> {
    value
        .split(',')
        .map(|pair| {
            let (t, b) = pair.split_once(':').ok_or_else(|| bad(key, value, "t:beta pairs"))?;
            Ok((parse_f64(key, t.trim())?, parse_f64(key, b.trim())?))
        })
        .collect()
}

impl ExperimentConfig {
    /// Assigns one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "d" => self.d = parse_usize(key, value)?,
            "R" => self.r = parse_f64(key, value)?,
            "w_star" => self.w_star = parse_f64(key, value)?,
            "w1" => self.w1 = parse_f64(key, value)?,
            "eta" => self.eta = parse_f64(key, value)?,
            "batch_size" => self.batch_size = parse_usize(key, value)?,
            "steps" => {
                self.steps = if value == "auto" { None } else { Some(parse_usize(key, value)?) }
            }
            "post_steps" => self.post_steps = parse_usize(key, value)?,
            "schedule.kind" => {
                self.schedule_kind = match value {
                    "exponential" => ScheduleKind::Exponential,
                    "constant" => ScheduleKind::Constant,
                    "tabulated" => ScheduleKind::Tabulated,
                    _ => return Err(bad(key, value, "exponential, constant or tabulated")),
                }
            }
            "schedule.beta_i" => self.beta_i = parse_f64(key, value)?,
            "schedule.t0" => self.t0 = parse_f64(key, value)?,
            "schedule.beta" => self.beta = parse_f64(key, value)?,
            "schedule.points" => self.points = parse_points(key, value)?,
            "sigma_init" => {
                self.sigma_init = if value == "auto" { None } else { Some(parse_f64(key, value)?) }
            }
            "freeze_sigma" => self.freeze_sigma = parse_bool(key, value)?,
            "freeze_mu" => self.freeze_mu = parse_bool(key, value)?,
            "adapt_lr" => self.adapt_lr = parse_bool(key, value)?,
            "estimator" => self.estimator = value.parse()?,
            "antithetic" => self.antithetic = parse_bool(key, value)?,
            "record_every" => self.record_every = parse_usize(key, value)?,
            "m_threshold" => self.m_threshold = parse_f64(key, value)?,
            "alpha" => self.alpha = parse_f64(key, value)?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key, value, "a 64-bit integer"))?,
            "ode.dt" => self.ode_dt = parse_f64(key, value)?,
            "sweep.beta_i" => self.sweep_beta_i = parse_list(key, value)?,
            "sweep.t0" => self.sweep_t0 = parse_list(key, value)?,
            "sweep.replicates" => self.replicates = parse_usize(key, value)?,
            "sweep.engine" => self.engine = value.parse()?,
            "iso.level" => self.iso_level = parse_f64(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        self.explicit.insert(key.to_string());
        Ok(())
    }

    /// Applies one `key=value` string.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("'{assignment}' is not of the form key=value")))?;
        self.set(k.trim(), v)
    }

    /// Applies every assignment in a config text.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.apply(line).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_str(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    pub fn schedule(&self) -> Result<AnnealSchedule> {
        match self.schedule_kind {
            ScheduleKind::Exponential => AnnealSchedule::exponential(self.beta_i, self.t0),
            ScheduleKind::Constant => AnnealSchedule::constant(self.beta),
            ScheduleKind::Tabulated => AnnealSchedule::tabulated(self.points.clone()),
        }
    }

    pub fn theory(&self) -> Result<TheoryParams> {
        TheoryParams::new(self.d, self.r, self.w_star, self.alpha)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let schedule = self.schedule()?;
        let mut c = TrainConfig::new(schedule);
        c.d = self.d;
        c.r = self.r;
        c.w_star = self.w_star;
        c.w1 = self.w1;
        c.eta = self.eta;
        c.batch_size = self.batch_size;
        c.post_steps = self.post_steps;
        c.freeze_sigma = self.freeze_sigma;
        c.freeze_mu = self.freeze_mu;
        c.adapt_lr = self.adapt_lr;
        c.estimator = self.estimator;
        c.antithetic = self.antithetic;
        c.record_every = self.record_every;
        c.m_threshold = self.m_threshold;
        c.seed = self.seed;
        if let Some(s) = self.sigma_init {
            c.sigma_init = s;
        }
        c.steps = self.steps.unwrap_or_else(|| c.default_steps());
        c.validate()?;
        Ok(c)
    }

    pub fn sweep_config(&self, workers: usize) -> Result<SweepConfig> {
        let s = SweepConfig {
            base: self.train_config()?,
            beta_i_grid: self.sweep_beta_i.clone(),
            t0_grid: self.sweep_t0.clone(),
            n_replicates: self.replicates,
            engine: self.engine,
            theory: self.theory()?,
            base_seed: self.seed,
            workers,
            ode_dt: self.ode_dt,
        };
        s.validate()?;
        Ok(s)
    }
}
