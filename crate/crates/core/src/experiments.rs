//! Reproducible experiment drivers shared by the command-line harness:
//! the two-state table, log-normal and normal-normal runs with KDE
//! diagnostics, and the Monte Carlo moment checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::diagnostics::{grid_tv_to_normal, DensityGrid, DiagnosticsError, GridSpec, DEFAULT_GRID};
use crate::markov_core::{n_step_distribution, tv_distance, FiniteChain, MarkovError, ProbabilityVector};
use crate::models::{
    lognormal_lyapunov, normal_normal_certificate_check, CertificateCheck, LogNormalModel, ModelError, MomentFunctions,
    NormalNormalModel,
};
use crate::perturbation_bounds::{general_bound, simple_bound, BoundError, ErgodicityCertificate, PerturbationInputs, Provenance};
use crate::samplers::{run_chain, ChainTrace, GaussianRandomWalk, LatentMcwm, LatentTarget, Mcwm, RestrictedMcwm, SamplerError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// One row of the two-state illustration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStateRow {
    pub n: usize,
    pub exact_tv: f64,
    pub simple_bound: f64,
    /// General bound with `W = 1 + v 1{x = 1}`, `v = 63`.
    pub general_v63: f64,
    /// Same bound as `v -> inf` (evaluated at `v = 2^60`).
    pub general_limit: f64,
}

pub fn two_state_chains() -> (FiniteChain, FiniteChain) {
    let p = FiniteChain::from_rows(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).expect("stochastic");
    let p_tilde = FiniteChain::from_rows(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).expect("stochastic");
    (p, p_tilde)
}

/// `P` jumps from state 1 to the absorbing state 0 at once, `P~` only with
/// probability 1/2; both start in state 1. With `V = 1`: `C = 1`,
/// `alpha = 0`, `eps_tv = 1`. With `W = 1 + v 1{x=1}`: `P~ W <= W/2 + 1/2`
/// and `eps_tv,W = eps_V,W = 1/(1 + v)`.
pub fn two_state_table(n_max: usize) -> Result<Vec<TwoStateRow>> {
    let (p, p_tilde) = two_state_chains();
    let start = ProbabilityVector::point_mass(2, 1);
    let cert = ErgodicityCertificate::new(1.0, 0.0, 0.0, 1.0, Provenance::Certified)?;
    let plain = PerturbationInputs::new(1.0, 1.0, 0.5, 0.5, 1.0)?;
    let weighted = |v: f64| PerturbationInputs::new(1.0 / (1.0 + v), 1.0 / (1.0 + v), 0.5, 0.5, 1.0);
    let (w63, winf) = (weighted(63.0)?, weighted(2f64.powi(60))?);
    (1..=n_max)
        .map(|n| {
            let exact_tv = tv_distance(&n_step_distribution(&p, &start, n)?, &n_step_distribution(&p_tilde, &start, n)?)?;
            Ok(TwoStateRow {
                n,
                exact_tv,
                simple_bound: simple_bound(&cert, &plain, 1.0)?,
                general_v63: general_bound(&cert, &w63, 0.0, 64.0, n)?,
                general_limit: general_bound(&cert, &winf, 0.0, 1.0 + 2f64.powi(60), n)?,
            })
        })
        .collect()
}

/// Pass/fail of the two-state identities at tolerance `tol`.
pub fn two_state_checks(rows: &[TwoStateRow], tol: f64) -> Vec<Check> {
    let mut out = Vec::new();
    for r in rows {
        let target = 2f64.powi(1 - r.n as i32);
        let ok = (r.exact_tv - target).abs() <= tol
            && r.simple_bound == 1.0
            && (r.general_v63 - (1.0 / 64.0 + target)).abs() <= tol
            && (r.general_limit - target).abs() <= tol;
        out.push(Check::new(format!("two-state n={}", r.n), ok, format!("{r:?}")));
    }
    out
}

/// Settings for a log-normal MCwM run.
#[derive(Debug, Clone, PartialEq)]
pub struct LogNormalConfig {
    pub q: f64,
    pub particles: usize,
    pub steps: usize,
    pub proposal_sd: f64,
    pub x0: f64,
    /// Restrict to `[-b, b]` (the set `B_R` with `R = exp(b^2/4)`).
    pub half_width: Option<f64>,
    pub grid: GridSpec,
}

impl Default for LogNormalConfig {
    fn default() -> Self {
        Self { q: 1.8, particles: 1000, steps: 100_000, proposal_sd: 1.0, x0: 0.0, half_width: None, grid: DEFAULT_GRID }
    }
}

/// Chain, KDE and grid-TV to the target.
#[derive(Debug, Clone)]
pub struct FigureRun {
    pub trace: ChainTrace<f64>,
    pub density: DensityGrid,
    pub tv: f64,
}

pub fn run_lognormal(cfg: &LogNormalConfig, seed: u64) -> Result<FigureRun> {
    let model = LogNormalModel::new(cfg.q)?;
    let proposal = GaussianRandomWalk::new(cfg.proposal_sd)?;
    let mut trace = match cfg.half_width {
        None => run_chain(&Mcwm { target: model, proposal, particles: cfg.particles }, cfg.x0, cfg.steps, seed)?,
        Some(b) => {
            if !(b > 0.0) {
                return Err(ExperimentError::Config(format!("restriction half-width {b} must be positive")));
            }
            let ly = lognormal_lyapunov();
            let kernel = RestrictedMcwm {
                target: model,
                proposal,
                particles: cfg.particles,
                radius: ly.radius_for_half_width(b),
                weight: move |x: &f64| ly.v(*x),
            };
            run_chain(&kernel, cfg.x0, cfg.steps, seed)?
        }
    };
    trace.params.insert(0, ("model".into(), format!("lognormal q={}", cfg.q)));
    trace.params.push(("proposal_sd".into(), cfg.proposal_sd.to_string()));
    let (density, tv) = grid_tv_to_normal(&trace.states, cfg.grid, 0.0, 1.0)?;
    Ok(FigureRun { trace, density, tv })
}

/// A latent target whose estimate is forced to zero outside `[lo, hi]`, so
/// MCwM rejects every proposal leaving the interval.
#[derive(Debug, Clone, Copy)]
pub struct Truncated<T> {
    pub inner: T,
    pub lo: f64,
    pub hi: f64,
}

impl<T: LatentTarget<f64>> LatentTarget<f64> for Truncated<T> {
    fn log_rho_estimate<R: Rng + ?Sized>(&self, x: &f64, n: usize, rng: &mut R) -> f64 {
        if *x < self.lo || *x > self.hi {
            return f64::NEG_INFINITY;
        }
        self.inner.log_rho_estimate(x, n, rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalNormalConfig {
    pub z_obs: f64,
    pub gamma_z: f64,
    pub gamma_y: f64,
    pub particles: usize,
    pub steps: usize,
    pub proposal_sd: f64,
    pub x0: f64,
    pub interval: Option<(f64, f64)>,
    pub grid: GridSpec,
}

impl Default for NormalNormalConfig {
    fn default() -> Self {
        Self {
            z_obs: 0.0,
            gamma_z: 1.0,
            gamma_y: 4.0,
            particles: 1000,
            steps: 100_000,
            proposal_sd: 1.0,
            x0: 0.0,
            interval: None,
            grid: DEFAULT_GRID,
        }
    }
}

pub fn run_normal_normal(cfg: &NormalNormalConfig, seed: u64) -> Result<(FigureRun, CertificateCheck)> {
    let model = NormalNormalModel::new(cfg.z_obs, cfg.gamma_z, cfg.gamma_y)?;
    let proposal = GaussianRandomWalk::new(cfg.proposal_sd)?;
    let mut trace = match cfg.interval {
        None => run_chain(&LatentMcwm { target: model, proposal, particles: cfg.particles }, cfg.x0, cfg.steps, seed)?,
        Some((lo, hi)) => {
            if !(lo <= cfg.x0 && cfg.x0 <= hi) {
                return Err(ExperimentError::Config(format!("x0 = {} outside [{lo}, {hi}]", cfg.x0)));
            }
            let target = Truncated { inner: model, lo, hi };
            run_chain(&LatentMcwm { target, proposal, particles: cfg.particles }, cfg.x0, cfg.steps, seed)?
        }
    };
    trace.params.insert(0, ("model".into(), format!("normal-normal z={} gZ={} gY={}", cfg.z_obs, cfg.gamma_z, cfg.gamma_y)));
    trace.params.push(("proposal_sd".into(), cfg.proposal_sd.to_string()));
    let (density, tv) = grid_tv_to_normal(&trace.states, cfg.grid, cfg.z_obs, 1.0 / model.gamma_zy())?;
    Ok((FigureRun { trace, density, tv }, normal_normal_certificate_check(&model)))
}

/// Monte Carlo estimate of `j_{p,r} = (E[(mean of r draws of W_1)^{-p}])^{1/p}`
/// for the log-normal model at `x`, with a delta-method standard error.
pub fn inverse_moment_mc<R: Rng + ?Sized>(model: &LogNormalModel, x: f64, p: f64, r: usize, draws: usize, rng: &mut R) -> (f64, f64) {
    let vals: Vec<f64> = (0..draws)
        .map(|_| {
            let avg = (0..r).map(|_| model.sample_w1(x, rng)).sum::<f64>() / r as f64;
            avg.powf(-p)
        })
        .collect();
    let (m, se) = mean_se(&vals);
    let j = m.powf(1.0 / p);
    (j, j * se / (p * m))
}

/// Monte Carlo moment checks for both models: moment formulas (4 SE), the
/// normal-normal proportionality (3 SE) and the three inverse-moment
/// inequalities (3 SE, exact where analytic).
pub fn moment_checks(seed: u64, draws: usize) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for q in [1.8, 2.2] {
        let model = LogNormalModel::new(q)?;
        for x in [0.5, 1.0, 1.5] {
            for p in [-1.0, 2.0] {
                let w: Vec<f64> = (0..draws).map(|_| model.sample_w1(x, &mut rng).powf(p)).collect();
                let (m, se) = mean_se(&w);
                let exact = model.w1_moment(p, x);
                out.push(Check::new(
                    format!("lognormal q={q} E[W_1({x})^{p}]"),
                    (m - exact).abs() <= 4.0 * se,
                    format!("mc={m:.6} exact={exact:.6} se={se:.2e}"),
                ));
            }
            let sq: Vec<f64> = (0..draws).map(|_| (model.sample_w1(x, &mut rng) - 1.0).powi(2)).collect();
            let (m, se) = mean_se(&sq);
            let s2 = model.s(x).powi(2);
            out.push(Check::new(
                format!("lognormal q={q} s({x})^2"),
                (m - s2).abs() <= 4.0 * se,
                format!("mc={m:.6} exact={s2:.6} se={se:.2e}"),
            ));
        }
    }

    let nn = NormalNormalModel::new(0.0, 1.0, 4.0)?;
    for p in [2.0, -1.0] {
        let mut consts = Vec::new();
        for x in [0.0, 1.0, 2.0] {
            let w: Vec<f64> = (0..draws).map(|_| nn.sample_w1(x, &mut rng).powf(p)).collect();
            let (m, se) = mean_se(&w);
            consts.push((m.ln() - nn.log_moment_quadratic(p, x), se / m));
        }
        let ok = consts.iter().all(|a| {
            consts.iter().all(|b| (a.0 - b.0).abs() <= 3.0 * (a.1 * a.1 + b.1 * b.1).sqrt())
        });
        out.push(Check::new(format!("normal-normal log E[W_1^{p}] minus quadratic is constant"), ok, format!("{consts:?}")));
    }

    let model = LogNormalModel::new(1.8)?;
    let x = 1.0;
    let j11 = model.i_p1(1.0, x);
    for s in [2, 5, 10] {
        let (j, se) = inverse_moment_mc(&model, x, 1.0, s, draws, &mut rng);
        out.push(Check::new(format!("inverse moments (i) j_(1,{s}) <= j_(1,1)"), j <= j11 + 3.0 * se, format!("{j:.6} vs {j11:.6}")));
    }
    for (q_, p_) in [(0.5, 1.0), (1.0, 2.0), (0.25, 3.0)] {
        let (a, b) = (model.i_p1(q_, x), model.i_p1(p_, x));
        out.push(Check::new(format!("inverse moments (ii) j_({q_},1) <= j_({p_},1)"), a <= b, format!("{a:.6} vs {b:.6}")));
    }
    for (p, r) in [(1.0, 1usize), (0.5, 2)] {
        let (base, base_se) = if r == 1 { (model.i_p1(p, x), 0.0) } else { inverse_moment_mc(&model, x, p, r, draws, &mut rng) };
        for k in [2usize, 3] {
            let (j, se) = inverse_moment_mc(&model, x, k as f64 * p, k * r, draws, &mut rng);
            let margin = 3.0 * (se * se + base_se * base_se).sqrt();
            out.push(Check::new(
                format!("inverse moments (iii) j_({},{}) <= j_({p},{r})", k as f64 * p, k * r),
                j <= base + margin,
                format!("{j:.6} vs {base:.6}"),
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_identities() {
        let rows = two_state_table(20).unwrap();
        assert!(two_state_checks(&rows, 1e-12).iter().all(|c| c.passed));
        assert_eq!(rows[4].exact_tv, 1.0 / 16.0);
        assert_eq!(rows[0].general_limit, 1.0);
    }

    #[test]
    fn lognormal_run_is_deterministic() {
        let cfg = LogNormalConfig { particles: 5, steps: 2000, ..LogNormalConfig::default() };
        let a = run_lognormal(&cfg, 3).unwrap();
        let b = run_lognormal(&cfg, 3).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.tv, b.tv);
    }

    #[test]
    fn restricted_run_stays_inside() {
        let cfg = LogNormalConfig { q: 2.2, particles: 10, steps: 5000, half_width: Some(2.0), ..LogNormalConfig::default() };
        let run = run_lognormal(&cfg, 1).unwrap();
        assert!(run.trace.states.iter().all(|x| x.abs() <= 2.0));
    }

    #[test]
    fn truncated_normal_normal_stays_inside() {
        let cfg = NormalNormalConfig { particles: 5, steps: 3000, interval: Some((-0.5, 1.0)), ..NormalNormalConfig::default() };
        let (run, check) = run_normal_normal(&cfg, 2).unwrap();
        assert!(check.is_feasible());
        assert!(run.trace.states.iter().all(|x| (-0.5..=1.0).contains(x)));
    }

    #[test]
    fn small_moment_suite_passes() {
        let checks = moment_checks(9, 200_000).unwrap();
        let failed: Vec<_> = checks.iter().filter(|c| !c.passed).collect();
        assert!(failed.is_empty(), "{failed:?}");
    }
}
