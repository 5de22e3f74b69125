//! `mcwm`: reproducible experiment runner for the MCwM samplers and the
//! perturbation bounds. Every command writes CSV files whose header comments
//! record the full configuration, prints one PASS/FAIL line per check and
//! exits nonzero iff a check fails.

mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use mcwm_core::diagnostics::{GridSpec, DEFAULT_GRID};
use mcwm_core::experiments::{
    moment_checks, run_lognormal, run_normal_normal, two_state_checks, two_state_table, Check, LogNormalConfig,
    NormalNormalConfig,
};
use mcwm_core::finite_validation::{sweep_instance, validate_bounds, BOUND_NAMES};
use mcwm_core::models::CertificateCheck;
use mcwm_core::perturbation_bounds::r_grid;

use config::{parse_interval, FileConfig};
use report::{Report, Table};

#[derive(Debug, Parser)]
#[command(name = "mcwm", version, about = "MCwM samplers and Markov chain perturbation bounds")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Master RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Flat TOML config file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Estimator sample size N.
    #[arg(long, global = true)]
    particles: Option<usize>,
    #[arg(long, global = true)]
    restricted: bool,
    /// Restriction interval `a,b`.
    #[arg(long, global = true, value_parser = parse_interval, allow_hyphen_values = true)]
    radius_interval: Option<[f64; 2]>,
    /// Number of replicate seeds starting at --seed.
    #[arg(long, global = true)]
    replicates: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Two-state chain: exact TV against the time-uniform and weighted bounds.
    TwoState,
    /// Random finite chain pairs: every bound against the exact n-step TV.
    ValidateBounds {
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        states: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Log-normal doubly-intractable model: MCwM or restricted MCwM run.
    Lognormal {
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        proposal_sd: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<f64>,
        /// Fail unless the grid-TV to the target is at most this value.
        #[arg(long)]
        expect_tv_below: Option<f64>,
        /// Fail unless the grid-TV to the target is at least this value.
        #[arg(long)]
        expect_tv_above: Option<f64>,
    },
    /// Normal-normal latent-variable model: MCwM run and feasibility check.
    NormalNormal {
        #[arg(long, allow_hyphen_values = true)]
        z: Option<f64>,
        #[arg(long)]
        gamma_z: Option<f64>,
        #[arg(long)]
        gamma_y: Option<f64>,
        #[arg(long)]
        proposal_sd: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<f64>,
    },
    /// Monte Carlo checks of the estimator moments and inverse-moment inequalities.
    MomentChecks {
        #[arg(long)]
        draws: Option<usize>,
    },
    /// Bound values over n and r on one random finite chain pair.
    BoundSweep {
        #[arg(long)]
        states: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
    },
}

/// Flags merged over the config file.
struct Settings {
    file: FileConfig,
    common: Common,
}

impl Settings {
    fn seed(&self) -> Result<u64> {
        self.common.seed.or(self.file.seed).context("this command is stochastic: pass --seed or set `seed` in the config")
    }

    fn out(&self) -> PathBuf {
        self.common.out.clone().or_else(|| self.file.out.clone()).unwrap_or_else(|| PathBuf::from("out"))
    }

    fn steps(&self, default: usize) -> usize {
        self.common.steps.or(self.file.steps).unwrap_or(default)
    }

    fn particles(&self, default: usize) -> usize {
        self.common.particles.or(self.file.particles).unwrap_or(default)
    }

    fn replicates(&self) -> u64 {
        self.common.replicates.or(self.file.replicates).unwrap_or(1).max(1)
    }

    fn restricted(&self) -> bool {
        self.common.restricted || self.file.restricted.unwrap_or(false)
    }

    fn interval(&self) -> Option<[f64; 2]> {
        self.common.radius_interval.or(self.file.radius_interval)
    }

    fn grid(&self) -> Result<GridSpec> {
        let lo = self.file.grid_lo.unwrap_or(DEFAULT_GRID.lo);
        let hi = self.file.grid_hi.unwrap_or(DEFAULT_GRID.hi);
        let points = self.file.grid_points.unwrap_or(DEFAULT_GRID.points);
        Ok(GridSpec::new(lo, hi, points)?)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let file = match &cli.common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let s = Settings { file, common: cli.common };
    let out = s.out();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut report = Report::new(out);
    match cli.command {
        Command::TwoState => two_state(&mut report)?,
        Command::ValidateBounds { seeds, states, horizon } => {
            let seeds = seeds.or(s.file.seeds).unwrap_or(100);
            let states = states.or(s.file.states).unwrap_or(5);
            let horizon = horizon.or(s.file.horizon).unwrap_or(50);
            validate(&mut report, seeds, states, horizon)?
        }
        Command::Lognormal { q, proposal_sd, x0, expect_tv_below, expect_tv_above } => {
            let cfg = LogNormalConfig {
                q: q.or(s.file.q).unwrap_or(1.8),
                particles: s.particles(1000),
                steps: s.steps(100_000),
                proposal_sd: proposal_sd.or(s.file.proposal_sd).unwrap_or(1.0),
                x0: x0.or(s.file.x0).unwrap_or(0.0),
                half_width: restriction_half_width(&s)?,
                grid: s.grid()?,
            };
            lognormal(&mut report, &cfg, s.seed()?, s.replicates(), expect_tv_below, expect_tv_above)?
        }
        Command::NormalNormal { z, gamma_z, gamma_y, proposal_sd, x0 } => {
            let z = z.or(s.file.z).unwrap_or(0.0);
            let interval = match (s.restricted(), s.interval()) {
                (true, None) => bail!("--restricted requires --radius-interval"),
                (true, Some([a, b])) => Some((a, b)),
                (false, _) => None,
            };
            let cfg = NormalNormalConfig {
                z_obs: z,
                gamma_z: gamma_z.or(s.file.gamma_z).unwrap_or(1.0),
                gamma_y: gamma_y.or(s.file.gamma_y).unwrap_or(4.0),
                particles: s.particles(1000),
                steps: s.steps(100_000),
                proposal_sd: proposal_sd.or(s.file.proposal_sd).unwrap_or(1.0),
                x0: x0.or(s.file.x0).unwrap_or(z),
                interval,
                grid: s.grid()?,
            };
            normal_normal(&mut report, &cfg, s.seed()?, s.replicates())?
        }
        Command::MomentChecks { draws } => {
            let draws = draws.or(s.file.draws).unwrap_or(1_000_000);
            let seed = s.seed()?;
            report.config("command", "moment-checks");
            report.config("seed", seed);
            report.config("draws", draws);
            let checks = moment_checks(seed, draws)?;
            let mut t = Table::new(&["check", "passed", "detail"]);
            for c in &checks {
                t.row([c.name.clone(), c.passed.to_string(), format!("\"{}\"", c.detail.replace('"', "'"))]);
            }
            report.write_table("moment_checks.csv", &t)?;
            report.checks(checks);
        }
        Command::BoundSweep { states, horizon } => {
            let states = states.or(s.file.states).unwrap_or(5);
            let horizon = horizon.or(s.file.horizon).unwrap_or(50);
            let seed = s.seed()?;
            report.config("command", "bound-sweep");
            report.config("seed", seed);
            report.config("states", states);
            report.config("horizon", horizon);
            let rs: Vec<f64> = r_grid().collect();
            let rows = sweep_instance(seed, states, horizon, &rs)?;
            let mut t = Table::new(&["n", "r", "bound_name", "value", "exact_tv_if_available"]);
            for r in &rows {
                t.row([r.n.to_string(), r.r.to_string(), r.bound.to_string(), r.value.to_string(), r.exact_tv.to_string()]);
            }
            report.write_table("bound_sweep.csv", &t)?;
            let violations = rows.iter().filter(|r| r.violated()).count();
            report.checks([Check::new("bound-sweep: every bound dominates the exact TV", violations == 0, format!("{violations} violations in {} rows", rows.len()))]);
        }
    }
    report.finish()
}

fn restriction_half_width(s: &Settings) -> Result<Option<f64>> {
    if !s.restricted() {
        return Ok(None);
    }
    match s.interval() {
        None => bail!("--restricted requires --radius-interval"),
        Some([a, b]) if (a + b).abs() > 1e-12 * b.abs().max(1.0) => {
            bail!("the log-normal restriction set is a sublevel set of exp(x^2/4), so the interval must be symmetric; got [{a}, {b}]")
        }
        Some([_, b]) => Ok(Some(b)),
    }
}

fn two_state(report: &mut Report) -> Result<()> {
    report.config("command", "two-state");
    let rows = two_state_table(20)?;
    let mut t = Table::new(&["n", "exact_tv", "simple_bound", "general_bound_v63", "general_bound_limit"]);
    for r in &rows {
        t.row([r.n.to_string(), r.exact_tv.to_string(), r.simple_bound.to_string(), r.general_v63.to_string(), r.general_limit.to_string()]);
    }
    report.write_table("two_state.csv", &t)?;
    report.checks(two_state_checks(&rows, 1e-12));
    Ok(())
}

fn validate(report: &mut Report, seeds: u64, states: usize, horizon: usize) -> Result<()> {
    if !(2..=10).contains(&states) {
        bail!("--states must lie in [2, 10], got {states}");
    }
    report.config("command", "validate-bounds");
    report.config("seeds", seeds);
    report.config("states", states);
    report.config("horizon", horizon);
    let summary = validate_bounds(seeds, states, horizon)?;
    let mut t = Table::new(&["bound", "checks", "violations", "mean_slack"]);
    for (name, b) in &summary.per_bound {
        t.row([name.to_string(), b.checks.to_string(), b.violations.to_string(), b.mean_slack.to_string()]);
    }
    report.config("regenerated_instances", summary.regenerated);
    report.write_table("validate_bounds.csv", &t)?;
    report.checks(BOUND_NAMES.iter().zip(&summary.per_bound).map(|(name, (_, b))| {
        Check::new(format!("{name} bound dominates exact TV"), b.violations == 0, format!("{} violations in {} checks", b.violations, b.checks))
    }));
    Ok(())
}

fn lognormal(
    report: &mut Report,
    cfg: &LogNormalConfig,
    seed: u64,
    replicates: u64,
    below: Option<f64>,
    above: Option<f64>,
) -> Result<()> {
    if cfg.steps < 1000 {
        bail!("--steps must be at least 1000");
    }
    report.config("command", "lognormal");
    report.config("seed", seed);
    report.config("replicates", replicates);
    report.config("q", cfg.q);
    report.config("particles", cfg.particles);
    report.config("steps", cfg.steps);
    report.config("proposal_sd", cfg.proposal_sd);
    report.config("x0", cfg.x0);
    report.config("restriction_half_width", cfg.half_width.map_or("none".into(), |b| b.to_string()));
    report.grid(cfg.grid);
    let seeds: Vec<u64> = (0..replicates).map(|i| seed + i).collect();
    let runs = seeds.par_iter().map(|&s| run_lognormal(cfg, s)).collect::<Result<Vec<_>, _>>()?;
    let tvs = figure_outputs(report, &seeds, &runs)?;
    let mean = tvs.iter().sum::<f64>() / tvs.len() as f64;
    if let Some(x) = below {
        report.checks([Check::new(format!("mean grid-TV <= {x} (threshold is ours)"), mean <= x, format!("mean grid-TV {mean}"))]);
    }
    if let Some(x) = above {
        report.checks([Check::new(format!("mean grid-TV >= {x} (threshold is ours)"), mean >= x, format!("mean grid-TV {mean}"))]);
    }
    Ok(())
}

fn normal_normal(report: &mut Report, cfg: &NormalNormalConfig, seed: u64, replicates: u64) -> Result<()> {
    report.config("command", "normal-normal");
    report.config("seed", seed);
    report.config("replicates", replicates);
    report.config("z", cfg.z_obs);
    report.config("gamma_z", cfg.gamma_z);
    report.config("gamma_y", cfg.gamma_y);
    report.config("particles", cfg.particles);
    report.config("steps", cfg.steps);
    report.config("proposal_sd", cfg.proposal_sd);
    report.config("x0", cfg.x0);
    report.config("interval", cfg.interval.map_or("none".into(), |(a, b)| format!("[{a}, {b}]")));
    report.grid(cfg.grid);
    let seeds: Vec<u64> = (0..replicates).map(|i| seed + i).collect();
    let results = seeds.par_iter().map(|&s| run_normal_normal(cfg, s)).collect::<Result<Vec<_>, _>>()?;
    let feasibility = results[0].1;
    let runs: Vec<_> = results.into_iter().map(|(r, _)| r).collect();
    figure_outputs(report, &seeds, &runs)?;
    let mut t = Table::new(&["feasible", "threshold", "t", "beta", "k"]);
    match feasibility {
        CertificateCheck::Feasible { threshold, t: tt, beta_split, k } => {
            t.row(["true".into(), threshold.to_string(), tt.to_string(), beta_split.to_string(), k.to_string()]);
        }
        CertificateCheck::Infeasible { threshold } => {
            eprintln!("warning: gamma_Y <= sqrt(2) gamma_Z, the drift certificate does not apply; running anyway");
            t.row(["false".into(), threshold.to_string(), String::new(), String::new(), String::new()]);
        }
    }
    report.write_table("feasibility.csv", &t)?;
    Ok(())
}

fn figure_outputs(report: &mut Report, seeds: &[u64], runs: &[mcwm_core::experiments::FigureRun]) -> Result<Vec<f64>> {
    let mut summary = Table::new(&["seed", "grid_tv", "acceptance_rate", "zero_estimates"]);
    for (seed, run) in seeds.iter().zip(runs) {
        let mut buf = Vec::new();
        run.trace.write_csv(&mut buf)?;
        report.write_raw(&format!("trace_seed{seed}.csv"), &buf)?;
        let mut t = Table::new(&["x", "density"]);
        for (x, y) in run.density.xs().iter().zip(&run.density.ys) {
            t.row([x.to_string(), y.to_string()]);
        }
        report.write_table(&format!("kde_seed{seed}.csv"), &t)?;
        summary.row([seed.to_string(), run.tv.to_string(), run.trace.acceptance_rate().to_string(), run.trace.zero_estimates.to_string()]);
        println!("seed {seed}: grid-TV to target = {:.4}", run.tv);
    }
    report.write_table("summary.csv", &summary)?;
    Ok(runs.iter().map(|r| r.tv).collect())
}
