use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use annealed_vi::config::ExperimentConfig;
use annealed_vi::harness::{
    compare_ode_sgd, iso_line, run_sweep, scenario_config, schedule_theory, seeded_rng, theory_grid,
    write_compare_csv, write_iso_csv, write_ode_csv, write_sweep_csv, write_theory_csv, Scenario,
};
use annealed_vi::ode::{integrate, sample_initial_stats, OdeConfig, OdePoint};
use annealed_vi::special::ForceParams;
use annealed_vi::trainer::{fmt_float, run_annealed_sgd, write_trace_csv};
use annealed_vi::Error;

#[derive(Parser, Debug)]
#[command(name = "annealed-vi", version, about = "Annealed variational inference on a bimodal Gaussian mixture")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the student with annealed SGD and write its trace.
    Simulate(Common),
    /// Integrate the summary-statistics ODE from a random initialization.
    Ode(Common),
    /// Monte Carlo collapse probabilities over a (beta_i, t0) grid.
    Sweep(Common),
    /// Exposure integral and collapse probability of the configured schedule.
    Theory(TheoryArgs),
    /// Theoretical iso-probability line over the sweep t0 grid.
    Iso(Common),
    /// Run one of the fixed experiment protocols.
    Scenario(ScenarioArgs),
    /// Compare one SGD run with the ODE started from its initial overlaps.
    Compare(Common),
}

#[derive(Args, Debug)]
struct TheoryArgs {
    /// Tabulate the sweep grid instead of the single configured schedule.
    #[arg(long)]
    grid: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// fig1_row1, fig1_row2, fig1_row3, appB_frozen_sigma or appB_frozen_mu.
    which: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Config file of key=value lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra key=value assignment, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Print a one-line JSON summary to standard output.
    #[arg(long)]
    json_summary: bool,
    /// Record measured run times in the sweep table.
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    keys: KeyFlags,
}

/// One flag per config key, with dashes in place of dots and underscores.
#[derive(Args, Debug, Default)]
struct KeyFlags {
    #[arg(long)]
    d: Option<String>,
    #[arg(long = "R")]
    r: Option<String>,
    #[arg(long)]
    w_star: Option<String>,
    #[arg(long)]
    w1: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    post_steps: Option<String>,
    #[arg(long = "schedule-kind")]
    schedule_kind: Option<String>,
    #[arg(long = "beta-i", alias = "schedule-beta-i")]
    beta_i: Option<String>,
    #[arg(long = "t0", alias = "schedule-t0")]
    t0: Option<String>,
    #[arg(long = "beta", alias = "schedule-beta")]
    beta: Option<String>,
    #[arg(long = "points", alias = "schedule-points")]
    points: Option<String>,
    #[arg(long)]
    sigma_init: Option<String>,
    #[arg(long)]
    freeze_sigma: Option<String>,
    #[arg(long)]
    freeze_mu: Option<String>,
    #[arg(long)]
    adapt_lr: Option<String>,
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    antithetic: Option<String>,
    #[arg(long)]
    record_every: Option<String>,
    #[arg(long)]
    m_threshold: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long = "ode-dt")]
    ode_dt: Option<String>,
    #[arg(long = "sweep-beta-i")]
    sweep_beta_i: Option<String>,
    #[arg(long = "sweep-t0")]
    sweep_t0: Option<String>,
    #[arg(long = "sweep-replicates")]
    sweep_replicates: Option<String>,
    #[arg(long = "sweep-engine")]
    sweep_engine: Option<String>,
    #[arg(long = "iso-level")]
    iso_level: Option<String>,
}

impl KeyFlags {
    fn assignments(&self) -> Vec<(&'static str, &str)> {
        let pairs: [(&'static str, &Option<String>); 28] = [
            ("d", &self.d),
            ("R", &self.r),
            ("w_star", &self.w_star),
            ("w1", &self.w1),
            ("eta", &self.eta),
            ("batch_size", &self.batch_size),
            ("steps", &self.steps),
            ("post_steps", &self.post_steps),
            ("schedule.kind", &self.schedule_kind),
            ("schedule.beta_i", &self.beta_i),
            ("schedule.t0", &self.t0),
            ("schedule.beta", &self.beta),
            ("schedule.points", &self.points),
            ("sigma_init", &self.sigma_init),
            ("freeze_sigma", &self.freeze_sigma),
            ("freeze_mu", &self.freeze_mu),
            ("adapt_lr", &self.adapt_lr),
            ("estimator", &self.estimator),
            ("antithetic", &self.antithetic),
            ("record_every", &self.record_every),
            ("m_threshold", &self.m_threshold),
            ("alpha", &self.alpha),
            ("ode.dt", &self.ode_dt),
            ("sweep.beta_i", &self.sweep_beta_i),
            ("sweep.t0", &self.sweep_t0),
            ("sweep.replicates", &self.sweep_replicates),
            ("sweep.engine", &self.sweep_engine),
            ("iso.level", &self.iso_level),
        ];
        pairs.into_iter().filter_map(|(k, v)| v.as_deref().map(|v| (k, v))).collect()
    }
}

/// Failure with its exit status.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Usage(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn load_config(c: &Common) -> std::result::Result<ExperimentConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for o in &c.overrides {
        cfg.apply(o)?;
    }
    for (k, v) in c.keys.assignments() {
        cfg.set(k, v)?;
    }
    if let Some(s) = c.seed {
        cfg.set("seed", &s.to_string())?;
    }
    Ok(cfg)
}

fn with_output(c: &Common, f: impl FnOnce(&mut dyn Write) -> annealed_vi::Result<()>) -> Outcome {
    match &c.out {
        Some(p) => {
            let file = File::create(p).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", p.display())))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
        }
    }
    Ok(())
}

/// Prints a summary on standard output, unless the CSV itself goes there.
fn summary(c: &Common, json: String) {
    if c.json_summary {
        if c.out.is_none() {
            eprintln!("{json}");
        } else {
            println!("{json}");
        }
    }
}

fn simulate(c: &Common) -> Outcome {
    let cfg = load_config(c)?;
    let train = cfg.train_config()?;
    let trace = run_annealed_sgd(&train, &mut seeded_rng(cfg.seed))?;
    with_output(c, |w| write_trace_csv(&trace, w))?;
    let last = trace.records.last().expect("trace has a final record");
    summary(
        c,
        format!(
            "{{\"outcome\":\"{}\",\"m1\":{},\"m2\":{},\"s\":{},\"sigma1\":{},\"sigma2\":{}}}",
            trace.outcome.as_str(),
            fmt_float(last.stats.m1),
            fmt_float(last.stats.m2),
            fmt_float(last.stats.s),
            fmt_float(last.sigma1),
            fmt_float(last.sigma2)
        ),
    );
    Ok(())
}

fn ode(c: &Common) -> Outcome {
    let cfg = load_config(c)?;
    let train = cfg.train_config()?;
    let init = sample_initial_stats(train.d, train.r, &mut seeded_rng(cfg.seed))?;
    let t_end = (train.steps + train.post_steps) as f64 * train.eta;
    let params = ForceParams::new(train.r, train.w1, train.w_star)?;
    let mut oc = OdeConfig::new(params, train.schedule.clone(), t_end, cfg.ode_dt)?;
    oc.rate_adapted = train.adapt_lr;
    oc.record_every = train.record_every;
    let mut pts = vec![OdePoint { t: 0.0, beta: train.beta_at(0)?, stats: init }];
    pts.extend(integrate(init, &oc)?);
    with_output(c, |w| write_ode_csv(&pts, w))?;
    let last = pts.last().expect("nonempty trajectory").stats;
    let outcome = annealed_vi::trainer::classify_stats(&last, train.m_threshold);
    summary(
        c,
        format!(
            "{{\"outcome\":\"{}\",\"m1\":{},\"m2\":{},\"s\":{}}}",
            outcome.as_str(),
            fmt_float(last.m1),
            fmt_float(last.m2),
            fmt_float(last.s)
        ),
    );
    Ok(())
}

fn sweep(c: &Common) -> Outcome {
    let cfg = load_config(c)?;
    let sc = cfg.sweep_config(c.workers)?;
    let result = run_sweep(&sc)?;
    with_output(c, |w| write_sweep_csv(&result, c.timing, w))?;
    let cells: Vec<String> = result
        .rows
        .iter()
        .map(|r| {
            format!(
                "{{\"beta_i\":{},\"t0\":{},\"p_empirical\":{},\"p_theory\":{},\"errors\":{}}}",
                fmt_float(r.beta_i),
                fmt_float(r.t0),
                r.p_empirical.map(fmt_float).unwrap_or_else(|| "null".into()),
                fmt_float(r.p_theory),
                r.n_errors
            )
        })
        .collect();
    summary(c, format!("{{\"cells\":[{}]}}", cells.join(",")));
    Ok(())
}

fn theory(args: &TheoryArgs) -> Outcome {
    let c = &args.common;
    let cfg = load_config(c)?;
    let th = cfg.theory()?;
    let points = if args.grid {
        theory_grid(&cfg.sweep_beta_i, &cfg.sweep_t0, &th)?
    } else {
        let schedule = cfg.schedule()?;
        let (i, p, exited) = schedule_theory(&schedule, schedule.horizon().min(1e9), &th)?;
        if !exited {
            eprintln!("warning: the schedule never leaves the high-temperature regime");
        }
        let (beta_i, t0) = match schedule {
            annealed_vi::schedule::AnnealSchedule::Exponential { beta_i, t0 } => (beta_i, t0),
            _ => (schedule.beta_initial(), f64::NAN),
        };
        vec![annealed_vi::harness::TheoryPoint { beta_i, t0, i, p }]
    };
    if c.out.is_some() || args.grid {
        with_output(c, |w| write_theory_csv(&points, w))?;
    } else {
        println!("I = {}", fmt_float(points[0].i));
        println!("p = {}", fmt_float(points[0].p));
    }
    if let [p] = points.as_slice() {
        summary(c, format!("{{\"I\":{},\"p_theory\":{}}}", fmt_float(p.i), fmt_float(p.p)));
    }
    Ok(())
}

fn iso(c: &Common) -> Outcome {
    let cfg = load_config(c)?;
    let pts = iso_line(&cfg.sweep_t0, cfg.iso_level, &cfg.theory()?)?;
    with_output(c, |w| write_iso_csv(&pts, w))?;
    Ok(())
}

fn scenario(args: &ScenarioArgs) -> Outcome {
    let c = &args.common;
    let which: Scenario = args.which.parse()?;
    let cfg = load_config(c)?;
    let mut train = scenario_config(which, cfg.seed)?;
    // only keys given explicitly change the fixed protocol
    for key in &cfg.explicit {
        match key.as_str() {
            "batch_size" => train.batch_size = cfg.batch_size,
            "post_steps" => train.post_steps = cfg.post_steps,
            "record_every" => train.record_every = cfg.record_every,
            "estimator" => train.estimator = cfg.estimator,
            "antithetic" => train.antithetic = cfg.antithetic,
            "m_threshold" => train.m_threshold = cfg.m_threshold,
            "seed" => {}
            other => {
                return Err(Failure::Usage(format!("key '{other}' is fixed by scenario {}", which.name())))
            }
        }
    }
    train.validate()?;
    let trace = run_annealed_sgd(&train, &mut seeded_rng(cfg.seed))?;
    with_output(c, |w| write_trace_csv(&trace, w))?;
    summary(c, format!("{{\"scenario\":\"{}\",\"outcome\":\"{}\"}}", which.name(), trace.outcome.as_str()));
    Ok(())
}

fn compare(c: &Common) -> Outcome {
    let cfg = load_config(c)?;
    let train = cfg.train_config()?;
    let rep = compare_ode_sgd(&train, cfg.seed)?;
    with_output(c, |w| write_compare_csv(&rep, train.eta, w))?;
    eprintln!("sup deviation: m1 {:.4}  m2 {:.4}  s {:.4}", rep.dev_m1, rep.dev_m2, rep.dev_s);
    summary(
        c,
        format!(
            "{{\"dev_m1\":{},\"dev_m2\":{},\"dev_s\":{}}}",
            fmt_float(rep.dev_m1),
            fmt_float(rep.dev_m2),
            fmt_float(rep.dev_s)
        ),
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Ode(c) => ode(c),
        Command::Sweep(c) => sweep(c),
        Command::Theory(a) => theory(a),
        Command::Iso(c) => iso(c),
        Command::Scenario(a) => scenario(a),
        Command::Compare(c) => compare(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
