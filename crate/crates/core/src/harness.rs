//! Seeded Monte Carlo sweeps, fixed experiment scenarios and trainer/ODE comparison.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ode::{integrate, integrate_final, sample_initial_stats, OdeConfig, OdePoint};
use crate::schedule::AnnealSchedule;
use crate::special::{ForceParams, ForceTable};
use crate::theory::{
    closed_form_i, collapse_probability, exposure_integral, iso_probability_beta, TheoryParams,
};
use crate::trainer::{classify_stats, fmt_float, run_annealed_sgd, Outcome, RunTrace, TrainConfig};

/// Random stream used for every run with the given seed.
pub fn seeded_rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of replicate `replicate` in grid cell `cell`.
pub fn mix_seed(base_seed: u64, cell: u64, replicate: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ cell) ^ replicate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Sgd,
    Ode,
}

impl std::str::FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Engine::Sgd),
            "ode" => Ok(Engine::Ode),
            _ => Err(Error::Config(format!("unknown engine '{s}' (expected sgd or ode)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Template for every cell; the schedule, step count and initial
    /// standard deviation are replaced per cell.
    pub base: TrainConfig,
    pub beta_i_grid: Vec<f64>,
    pub t0_grid: Vec<f64>,
    pub n_replicates: usize,
    pub engine: Engine,
    pub theory: TheoryParams,
    pub base_seed: u64,
    pub workers: usize,
    /// RK4 step of the ODE engine.
    pub ode_dt: f64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta_i_grid.is_empty() || self.t0_grid.is_empty() {
            return Err(Error::InvalidArgument("sweep grids must be nonempty".into()));
        }
        if self.n_replicates == 0 {
            return Err(Error::InvalidArgument("n_replicates must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidArgument("workers must be at least 1".into()));
        }
        if self.beta_i_grid.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::InvalidArgument("beta_i values must be positive".into()));
        }
        if self.t0_grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidArgument("t0 values must be positive".into()));
        }
        if !(self.ode_dt > 0.0) {
            return Err(Error::InvalidArgument("ode_dt must be positive".into()));
        }
        Ok(())
    }

    /// Trainer configuration of one cell: `β_i ≥ 1` is the constant schedule
    /// `β = 1`; `σ_init = β_i^{-1/2}`.
    pub fn cell_config(&self, beta_i: f64, t0: f64) -> Result<TrainConfig> {
        let mut c = self.base.clone();
        c.schedule = if beta_i >= 1.0 {
            AnnealSchedule::constant(1.0)?
        } else {
            AnnealSchedule::exponential(beta_i, t0)?
        };
        c.sigma_init = beta_i.min(1.0).powf(-0.5);
        c.steps = c.default_steps();
        c.record_every = c.steps + c.post_steps + 1;
        c.validate()?;
        Ok(c)
    }

    fn cells(&self) -> Vec<(f64, f64)> {
        self.beta_i_grid
            .iter()
            .flat_map(|&b| self.t0_grid.iter().map(move |&t| (b, t)))
            .collect()
    }
}

/// Theoretical collapse probability of a cell.
pub fn cell_theory(beta_i: f64, t0: f64, theory: &TheoryParams) -> Result<(f64, f64)> {
    let i = if beta_i >= 1.0 { 0.0 } else { closed_form_i(beta_i, t0, theory)? };
    Ok((i, collapse_probability(i, theory)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub beta_i: f64,
    pub t0: f64,
    pub n_runs: usize,
    pub n_collapsed: usize,
    /// Includes runs that failed with an error.
    pub n_unconverged: usize,
    pub n_errors: usize,
    /// Missing when every run is unconverged.
    pub p_empirical: Option<f64>,
    pub p_theory: f64,
    /// Summed run time of the cell.
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, beta_i: f64, t0: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.beta_i == beta_i && r.t0 == t0)
    }
}

/// Outcome of one replicate of a cell.
pub fn run_replicate(
    cell: &TrainConfig,
    engine: Engine,
    seed: u64,
    ode_dt: f64,
    table: Option<&Arc<ForceTable>>,
) -> Result<Outcome> {
    let mut rng = seeded_rng(seed);
    match engine {
        Engine::Sgd => Ok(run_annealed_sgd(cell, &mut rng)?.outcome),
        Engine::Ode => {
            let init = sample_initial_stats(cell.d, cell.r, &mut rng)?;
            let params = ForceParams::new(cell.r, cell.w1, cell.w_star)?;
            let t_end = (cell.steps + cell.post_steps) as f64 * cell.eta;
            let mut oc = OdeConfig::new(params, cell.schedule.clone(), t_end, ode_dt)?;
            oc.rate_adapted = cell.adapt_lr;
            oc.table = table.cloned();
            let last = integrate_final(init, &oc)?;
            Ok(classify_stats(&last.stats, cell.m_threshold))
        }
    }
}

/// Runs every replicate of every cell. Cells are ordered `β_i`-major; results
/// do not depend on the number of workers.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let cells = config.cells();
    let cell_configs: Vec<TrainConfig> = cells
        .iter()
        .map(|&(b, t)| config.cell_config(b, t))
        .collect::<Result<_>>()?;
    let table = match config.engine {
        Engine::Ode => {
            let beta_min = config.beta_i_grid.iter().cloned().fold(1.0, f64::min);
            let params = ForceParams::new(config.base.r, config.base.w1, config.base.w_star)?;
            Some(Arc::new(ForceTable::new(params, 1.05 * beta_min.powf(-0.5))?))
        }
        Engine::Sgd => None,
    };
    let n_rep = config.n_replicates;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let runs: Vec<(Result<Outcome>, f64)> = pool.install(|| {
        (0..cells.len() * n_rep)
            .into_par_iter()
            .map(|job| {
                let (cell, rep) = (job / n_rep, job % n_rep);
                let seed = mix_seed(config.base_seed, cell as u64, rep as u64);
                let start = Instant::now();
                let out = run_replicate(&cell_configs[cell], config.engine, seed, config.ode_dt, table.as_ref());
                (out, start.elapsed().as_secs_f64() * 1e3)
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(cells.len());
    for (k, &(beta_i, t0)) in cells.iter().enumerate() {
        let chunk = &runs[k * n_rep..(k + 1) * n_rep];
        let mut row = SweepRow {
            beta_i,
            t0,
            n_runs: n_rep,
            n_collapsed: 0,
            n_unconverged: 0,
            n_errors: 0,
            p_empirical: None,
            p_theory: cell_theory(beta_i, t0, &config.theory)?.1,
            wall_ms: 0.0,
        };
        for (out, ms) in chunk {
            row.wall_ms += ms;
            match out {
                Ok(Outcome::Collapsed) => row.n_collapsed += 1,
                Ok(Outcome::Separated) => {}
                Ok(Outcome::Unconverged) => row.n_unconverged += 1,
                Err(_) => {
                    row.n_errors += 1;
                    row.n_unconverged += 1;
                }
            }
        }
        let decided = row.n_runs - row.n_unconverged;
        row.p_empirical = (decided > 0).then(|| row.n_collapsed as f64 / decided as f64);
        rows.push(row);
    }
    Ok(SweepResult { rows })
}

pub const SWEEP_HEADER: &str = "beta_i,t0,n_runs,n_collapsed,n_unconverged,p_empirical,p_theory,wall_ms";
pub const ISO_HEADER: &str = "t0,beta_i_iso,level";
pub const THEORY_HEADER: &str = "beta_i,t0,I,p_theory";

/// Writes the sweep table. Without `timing` the `wall_ms` column is zero so
/// that the output depends on the inputs only.
pub fn write_sweep_csv<W: Write>(result: &SweepResult, timing: bool, mut out: W) -> Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in &result.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_float(r.beta_i),
            fmt_float(r.t0),
            r.n_runs,
            r.n_collapsed,
            r.n_unconverged,
            r.p_empirical.map(fmt_float).unwrap_or_default(),
            fmt_float(r.p_theory),
            if timing { format!("{:.0}", r.wall_ms) } else { "0".into() },
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsoPoint {
    pub t0: f64,
    /// Missing when the level cannot be reached at this `t0`.
    pub beta_i: Option<f64>,
    pub level: f64,
}

pub fn iso_line(t0_grid: &[f64], level: f64, theory: &TheoryParams) -> Result<Vec<IsoPoint>> {
    t0_grid
        .iter()
        .map(|&t0| match iso_probability_beta(t0, level, theory) {
            Ok(b) => Ok(IsoPoint { t0, beta_i: Some(b), level }),
            Err(Error::NoSolution { .. }) => Ok(IsoPoint { t0, beta_i: None, level }),
            Err(e) => Err(e),
        })
        .collect()
}

pub fn write_iso_csv<W: Write>(points: &[IsoPoint], mut out: W) -> Result<()> {
    writeln!(out, "{ISO_HEADER}")?;
    for p in points {
        writeln!(
            out,
            "{},{},{}",
            fmt_float(p.t0),
            p.beta_i.map(fmt_float).unwrap_or_default(),
            fmt_float(p.level)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryPoint {
    pub beta_i: f64,
    pub t0: f64,
    pub i: f64,
    pub p: f64,
}

pub fn theory_grid(beta_i: &[f64], t0: &[f64], theory: &TheoryParams) -> Result<Vec<TheoryPoint>> {
    let mut out = Vec::with_capacity(beta_i.len() * t0.len());
    for &b in beta_i {
        for &t in t0 {
            let (i, p) = cell_theory(b, t, theory)?;
            out.push(TheoryPoint { beta_i: b, t0: t, i, p });
        }
    }
    Ok(out)
}

/// Theory point of an arbitrary schedule, through the exposure integral.
pub fn schedule_theory(schedule: &AnnealSchedule, t_horizon: f64, theory: &TheoryParams) -> Result<(f64, f64, bool)> {
    let e = exposure_integral(schedule, theory, t_horizon)?;
    Ok((e.value, collapse_probability(e.value, theory)?, e.regime_exited))
}

pub fn write_theory_csv<W: Write>(points: &[TheoryPoint], mut out: W) -> Result<()> {
    writeln!(out, "{THEORY_HEADER}")?;
    for p in points {
        writeln!(out, "{},{},{},{}", fmt_float(p.beta_i), fmt_float(p.t0), fmt_float(p.i), fmt_float(p.p))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// No annealing, `σ = 1`.
    Fig1Row1,
    /// No annealing, `σ² = 10R²`.
    Fig1Row2,
    /// Exponential schedule from `β_i = 1/(10R²)` with `t0 = 500`.
    Fig1Row3,
    /// No annealing, variances frozen at `σ² = 10R²`.
    FrozenSigma,
    /// No annealing, means frozen, `σ² = 10R²` initially.
    FrozenMu,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Fig1Row1,
        Scenario::Fig1Row2,
        Scenario::Fig1Row3,
        Scenario::FrozenSigma,
        Scenario::FrozenMu,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Fig1Row1 => "fig1_row1",
            Scenario::Fig1Row2 => "fig1_row2",
            Scenario::Fig1Row3 => "fig1_row3",
            Scenario::FrozenSigma => "appB_frozen_sigma",
            Scenario::FrozenMu => "appB_frozen_mu",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))
    }
}

/// Protocol of a scenario: `d = 512`, `R = 3`, `w* = 0.8`, `w₁ = 0.5`,
/// `η = 0.05`.
pub fn scenario_config(which: Scenario, seed: u64) -> Result<TrainConfig> {
    let r: f64 = 3.0;
    let beta_i = 1.0 / (10.0 * r * r);
    let wide = beta_i.powf(-0.5);
    let schedule = match which {
        Scenario::Fig1Row3 => AnnealSchedule::exponential(beta_i, 500.0)?,
        _ => AnnealSchedule::constant(1.0)?,
    };
    let mut c = TrainConfig::new(schedule);
    c.sigma_init = if which == Scenario::Fig1Row1 { 1.0 } else { wide };
    c.freeze_sigma = which == Scenario::FrozenSigma;
    c.freeze_mu = which == Scenario::FrozenMu;
    c.seed = seed;
    c.validate()?;
    Ok(c)
}

/// Runs a scenario; the seed fixes the initial means, so every scenario with
/// the same seed starts from the same point.
pub fn scenario_suite(which: Scenario, seed: u64) -> Result<RunTrace> {
    let c = scenario_config(which, seed)?;
    run_annealed_sgd(&c, &mut seeded_rng(seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    /// Sup-norm deviations of `m₁`, `m₂`, `s`.
    pub dev_m1: f64,
    pub dev_m2: f64,
    pub dev_s: f64,
    pub sgd: RunTrace,
    pub ode: Vec<OdePoint>,
}

impl CompareReport {
    pub fn max_deviation(&self) -> f64 {
        self.dev_m1.max(self.dev_m2).max(self.dev_s)
    }
}

/// One trainer run against the ODE started from its initial overlaps, on the
/// trainer's recording grid.
pub fn compare_ode_sgd(config: &TrainConfig, seed: u64) -> Result<CompareReport> {
    let sgd = run_annealed_sgd(config, &mut seeded_rng(seed))?;
    let total = config.steps + config.post_steps;
    let init = sgd.records[0].stats;
    let ode = if total == 0 {
        vec![OdePoint { t: 0.0, beta: config.beta_at(0)?, stats: init }]
    } else {
        let params = ForceParams::new(config.r, config.w1, config.w_star)?;
        let mut oc = OdeConfig::new(params, config.schedule.clone(), total as f64 * config.eta, config.eta)?;
        oc.rate_adapted = config.adapt_lr;
        oc.record_every = config.record_every;
        let mut pts = vec![OdePoint { t: 0.0, beta: config.beta_at(0)?, stats: init }];
        pts.extend(integrate(init, &oc)?);
        pts
    };
    let (mut d1, mut d2, mut ds) = (0.0f64, 0.0f64, 0.0f64);
    for rec in &sgd.records {
        let t = rec.step as f64 * config.eta;
        let Some(p) = ode.iter().find(|p| (p.t - t).abs() <= 1e-9 * t.max(1.0)) else {
            continue;
        };
        d1 = d1.max((rec.stats.m1 - p.stats.m1).abs());
        d2 = d2.max((rec.stats.m2 - p.stats.m2).abs());
        ds = ds.max((rec.stats.s - p.stats.s).abs());
    }
    Ok(CompareReport { dev_m1: d1, dev_m2: d2, dev_s: ds, sgd, ode })
}

pub const COMPARE_HEADER: &str = "t,m1_sgd,m2_sgd,s_sgd,m1_ode,m2_ode,s_ode";

pub fn write_compare_csv<W: Write>(report: &CompareReport, eta: f64, mut out: W) -> Result<()> {
    writeln!(out, "{COMPARE_HEADER}")?;
    for rec in &report.sgd.records {
        let t = rec.step as f64 * eta;
        if let Some(p) = report.ode.iter().find(|p| (p.t - t).abs() <= 1e-9 * t.max(1.0)) {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                fmt_float(t),
                fmt_float(rec.stats.m1),
                fmt_float(rec.stats.m2),
                fmt_float(rec.stats.s),
                fmt_float(p.stats.m1),
                fmt_float(p.stats.m2),
                fmt_float(p.stats.s)
            )?;
        }
    }
    Ok(())
}

pub const ODE_HEADER: &str = "t,beta,m1,m2,s";

pub fn write_ode_csv<W: Write>(points: &[OdePoint], mut out: W) -> Result<()> {
    writeln!(out, "{ODE_HEADER}")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_float(p.t),
            fmt_float(p.beta),
            fmt_float(p.stats.m1),
            fmt_float(p.stats.m2),
            fmt_float(p.stats.s)
        )?;
    }
    Ok(())
}
