//! Metropolis-Hastings (MH) and Monte-Carlo-within-Metropolis (MCwM)
//! transition steps.
//!
//! Every acceptance test is carried out in log space: a step accepts iff
//! `ln u < log r` for `u ~ Unif[0, 1)`, which is the strict `u < r` rule.
//!
//! **Fresh draws.** MCwM steps draw new, independent estimates at *both*
//! the current state and the proposal on every iteration. Nothing is cached
//! across iterations, not even the estimate at an unchanged current state.
//! Reusing the current-state estimate would turn the sampler into a
//! pseudo-marginal method, which has a different transition kernel.
//!
//! Each chain owns four independent random streams derived from one master
//! seed (see [`ChainRngs`]), so changing the number of estimator samples
//! `N` leaves the proposal and uniform sequences untouched.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::markov_core::{FiniteChain, MarkovError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("invalid start state: target density is zero or undefined there ({0})")]
    InvalidStart(String),
    #[error("start state lies outside the restriction set: V(x) = {v} > R = {radius}")]
    OutsideRestriction { v: f64, radius: f64 },
    #[error("invalid sampler parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Markov(#[from] MarkovError),
}

pub type Result<T> = std::result::Result<T, SamplerError>;

/// Stream ids for [`ChainRngs`].
const STREAM_PROPOSAL: u64 = 1;
const STREAM_UNIFORM: u64 = 2;
const STREAM_EST_X: u64 = 3;
const STREAM_EST_Z: u64 = 4;

/// Named, independent substreams of one master seed.
#[derive(Debug, Clone)]
pub struct ChainRngs {
    pub proposal: ChaCha8Rng,
    pub uniform: ChaCha8Rng,
    pub est_x: ChaCha8Rng,
    pub est_z: ChaCha8Rng,
}

impl ChainRngs {
    pub fn new(seed: u64) -> Self {
        let stream = |id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self {
            proposal: stream(STREAM_PROPOSAL),
            uniform: stream(STREAM_UNIFORM),
            est_x: stream(STREAM_EST_X),
            est_z: stream(STREAM_EST_Z),
        }
    }

    fn log_uniform(&mut self) -> f64 {
        let u: f64 = self.uniform.random();
        u.ln()
    }
}

/// Proposal kernel `Q`.
pub trait Proposal<S> {
    fn propose<R: Rng + ?Sized>(&self, x: &S, rng: &mut R) -> S;

    /// `log [mu(dz) Q(z, dx) / (mu(dx) Q(x, dz))]`; zero for symmetric kernels.
    fn log_q_ratio(&self, _x: &S, _z: &S) -> f64 {
        0.0
    }
}

/// Target whose unnormalised density is available pointwise.
pub trait ExactTarget<S> {
    fn log_pi_u(&self, x: &S) -> f64;
}

/// Target `pi_u(x) = rho(x) / Z(x)` with an intractable normaliser `Z(x)`
/// that can be estimated without bias.
pub trait DoublyIntractableTarget<S> {
    fn log_rho(&self, x: &S) -> f64;

    /// Log of a nonnegative estimate `Z_N(x)` built from `n` samples.
    /// `-inf` encodes an exact zero.
    fn log_z_estimate<R: Rng + ?Sized>(&self, x: &S, n: usize, rng: &mut R) -> f64;
}

/// Target `pi_u(x)` that is itself an integral over latent variables and
/// can be estimated without bias.
pub trait LatentTarget<S> {
    /// Log of a nonnegative estimate `rho_N(x)` of `pi_u(x)`. `-inf` encodes
    /// an exact zero.
    fn log_rho_estimate<R: Rng + ?Sized>(&self, x: &S, n: usize, rng: &mut R) -> f64;
}

/// Wraps an exact target as a doubly-intractable or latent target whose
/// estimators have zero variance.
#[derive(Debug, Clone, Copy)]
pub struct ZeroVariance<T>(pub T);

impl<S, T: ExactTarget<S>> DoublyIntractableTarget<S> for ZeroVariance<T> {
    fn log_rho(&self, x: &S) -> f64 {
        self.0.log_pi_u(x)
    }

    fn log_z_estimate<R: Rng + ?Sized>(&self, _x: &S, _n: usize, _rng: &mut R) -> f64 {
        0.0
    }
}

impl<S, T: ExactTarget<S>> LatentTarget<S> for ZeroVariance<T> {
    fn log_rho_estimate<R: Rng + ?Sized>(&self, x: &S, _n: usize, _rng: &mut R) -> f64 {
        self.0.log_pi_u(x)
    }
}

/// Gaussian random walk `Q(x, .) = N(x, sd^2)` on the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianRandomWalk {
    normal: Normal<f64>,
}

impl GaussianRandomWalk {
    pub fn new(sd: f64) -> Result<Self> {
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(SamplerError::InvalidParameter(format!("proposal sd = {sd} must be positive")));
        }
        Ok(Self { normal: Normal::new(0.0, sd).expect("validated sd") })
    }

    pub fn sd(&self) -> f64 {
        self.normal.std_dev()
    }

    /// Density of `Q(x, .)` at `z`.
    pub fn density(&self, x: f64, z: f64) -> f64 {
        let sd = self.sd();
        let t = (z - x) / sd;
        (-0.5 * t * t).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
    }
}

impl Proposal<f64> for GaussianRandomWalk {
    fn propose<R: Rng + ?Sized>(&self, x: &f64, rng: &mut R) -> f64 {
        x + self.normal.sample(rng)
    }
}

/// Proposal on `{0, .., n-1}` given by the rows of a stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixProposal {
    q: FiniteChain,
}

impl MatrixProposal {
    pub fn new(q: FiniteChain) -> Self {
        Self { q }
    }

    pub fn matrix(&self) -> &FiniteChain {
        &self.q
    }
}

impl Proposal<usize> for MatrixProposal {
    fn propose<R: Rng + ?Sized>(&self, x: &usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let row = self.q.row(*x);
        let mut acc = 0.0;
        for (y, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return y;
            }
        }
        // rounding left u above the final cumulative sum
        row.iter().rposition(|&p| p > 0.0).unwrap_or(*x)
    }

    fn log_q_ratio(&self, x: &usize, z: &usize) -> f64 {
        self.q.get(*z, *x).ln() - self.q.get(*x, *z).ln()
    }
}

/// Finite target given by unnormalised weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTarget {
    weights: Vec<f64>,
}

impl DiscreteTarget {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || weights.iter().all(|w| *w == 0.0) {
            return Err(SamplerError::InvalidParameter("weights must be finite, nonnegative, not all zero".into()));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn normalized(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }
}

impl ExactTarget<usize> for DiscreteTarget {
    fn log_pi_u(&self, x: &usize) -> f64 {
        self.weights[*x].ln()
    }
}

/// Closed-form MH kernel `M_a` for a finite target and matrix proposal:
/// `M_a(x, y) = Q(x, y) min{1, pi(y) Q(y, x) / (pi(x) Q(x, y))}` off the
/// diagonal, with the rejected mass kept at `x`.
pub fn mh_kernel_matrix(target: &DiscreteTarget, proposal: &MatrixProposal) -> Result<FiniteChain> {
    let q = proposal.matrix();
    let n = q.len();
    if target.weights().len() != n {
        return Err(MarkovError::DimensionMismatch { expected: n, found: target.weights().len() }.into());
    }
    let pi = target.weights();
    let mut rows = vec![vec![0.0; n]; n];
    for x in 0..n {
        let mut off = 0.0;
        for y in 0..n {
            if y == x || q.get(x, y) == 0.0 {
                continue;
            }
            let a = if pi[x] == 0.0 { 1.0 } else { (pi[y] * q.get(y, x) / (pi[x] * q.get(x, y))).min(1.0) };
            rows[x][y] = q.get(x, y) * a;
            off += rows[x][y];
        }
        rows[x][x] = 1.0 - off;
    }
    Ok(FiniteChain::from_rows(rows)?)
}

/// Result of one transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<S> {
    pub state: S,
    pub accepted: bool,
    /// An estimator returned an exact zero in a denominator position.
    pub zero_estimate: bool,
}

/// Accept/reject decision for a fixed pair `(x, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub accepted: bool,
    pub zero_estimate: bool,
}

fn check_exact_start<S: fmt::Debug>(log_pi: f64, x: &S) -> Result<()> {
    if log_pi == f64::NEG_INFINITY || log_pi.is_nan() {
        return Err(SamplerError::InvalidStart(format!("{x:?}")));
    }
    Ok(())
}

/// One step of Metropolis-Hastings.
pub fn mh_step<S, T, Q>(x: &S, target: &T, proposal: &Q, rngs: &mut ChainRngs) -> Result<StepOutcome<S>>
where
    S: Clone + fmt::Debug,
    T: ExactTarget<S>,
    Q: Proposal<S>,
{
    let log_pi_x = target.log_pi_u(x);
    check_exact_start(log_pi_x, x)?;
    let z = proposal.propose(x, &mut rngs.proposal);
    let log_u = rngs.log_uniform();
    let log_r = target.log_pi_u(&z) - log_pi_x + proposal.log_q_ratio(x, &z);
    Ok(finish(x, z, Decision { accepted: log_u < log_r, zero_estimate: false }))
}

/// Accept/reject of the doubly-intractable MCwM step for a fixed proposal
/// `z`, drawing fresh estimates `Z_N(x)` and `Z_N(z)`.
pub fn mcwm_doubly_accept<S, T, Q>(x: &S, z: &S, target: &T, proposal: &Q, n: usize, rngs: &mut ChainRngs) -> Decision
where
    T: DoublyIntractableTarget<S>,
    Q: Proposal<S>,
{
    let log_u = rngs.log_uniform();
    let log_zx = target.log_z_estimate(x, n, &mut rngs.est_x);
    let log_zz = target.log_z_estimate(z, n, &mut rngs.est_z);
    if log_zz == f64::NEG_INFINITY {
        return Decision { accepted: false, zero_estimate: true };
    }
    let log_r = target.log_rho(z) - target.log_rho(x) + proposal.log_q_ratio(x, z) + log_zx - log_zz;
    Decision { accepted: log_u < log_r, zero_estimate: false }
}

/// One step of MCwM for a doubly-intractable target.
pub fn mcwm_doubly_step<S, T, Q>(
    x: &S,
    target: &T,
    proposal: &Q,
    n: usize,
    rngs: &mut ChainRngs,
) -> Result<StepOutcome<S>>
where
    S: Clone,
    T: DoublyIntractableTarget<S>,
    Q: Proposal<S>,
{
    check_particles(n)?;
    let z = proposal.propose(x, &mut rngs.proposal);
    let decision = mcwm_doubly_accept(x, &z, target, proposal, n, rngs);
    Ok(finish(x, z, decision))
}

/// One step of restricted MCwM: proposals with `V(z) > radius` are rejected
/// outright, otherwise as [`mcwm_doubly_step`].
pub fn restricted_mcwm_step<S, T, Q, V>(
    x: &S,
    target: &T,
    proposal: &Q,
    n: usize,
    radius: f64,
    weight: V,
    rngs: &mut ChainRngs,
) -> Result<StepOutcome<S>>
where
    S: Clone,
    T: DoublyIntractableTarget<S>,
    Q: Proposal<S>,
    V: Fn(&S) -> f64,
{
    check_particles(n)?;
    let vx = weight(x);
    if !(vx <= radius) {
        return Err(SamplerError::OutsideRestriction { v: vx, radius });
    }
    let z = proposal.propose(x, &mut rngs.proposal);
    if !(weight(&z) <= radius) {
        // keep the uniform stream aligned with the unrestricted sampler
        rngs.log_uniform();
        return Ok(finish(x, z, Decision { accepted: false, zero_estimate: false }));
    }
    let decision = mcwm_doubly_accept(x, &z, target, proposal, n, rngs);
    Ok(finish(x, z, decision))
}

/// Accept/reject of the latent-variable MCwM step for a fixed proposal `z`.
/// The estimate ratio is `rho_N(z) / rho_N(x)`, the reverse orientation of
/// the doubly-intractable case.
pub fn mcwm_latent_accept<S, T, Q>(x: &S, z: &S, target: &T, proposal: &Q, n: usize, rngs: &mut ChainRngs) -> Decision
where
    T: LatentTarget<S>,
    Q: Proposal<S>,
{
    let log_u = rngs.log_uniform();
    let log_rx = target.log_rho_estimate(x, n, &mut rngs.est_x);
    let log_rz = target.log_rho_estimate(z, n, &mut rngs.est_z);
    if log_rx == f64::NEG_INFINITY {
        return Decision { accepted: log_rz > f64::NEG_INFINITY, zero_estimate: true };
    }
    let log_r = proposal.log_q_ratio(x, z) + log_rz - log_rx;
    Decision { accepted: log_u < log_r, zero_estimate: false }
}

/// One step of MCwM for a latent-variable target.
pub fn mcwm_latent_step<S, T, Q>(x: &S, target: &T, proposal: &Q, n: usize, rngs: &mut ChainRngs) -> Result<StepOutcome<S>>
where
    S: Clone,
    T: LatentTarget<S>,
    Q: Proposal<S>,
{
    check_particles(n)?;
    let z = proposal.propose(x, &mut rngs.proposal);
    let decision = mcwm_latent_accept(x, &z, target, proposal, n, rngs);
    Ok(finish(x, z, decision))
}

fn check_particles(n: usize) -> Result<()> {
    if n == 0 {
        return Err(SamplerError::InvalidParameter("number of estimator samples N must be >= 1".into()));
    }
    Ok(())
}

fn finish<S: Clone>(x: &S, z: S, d: Decision) -> StepOutcome<S> {
    StepOutcome { state: if d.accepted { z } else { x.clone() }, accepted: d.accepted, zero_estimate: d.zero_estimate }
}

/// A transition kernel that [`run_chain`] can drive.
pub trait Kernel<S> {
    fn step(&self, x: &S, rngs: &mut ChainRngs) -> Result<StepOutcome<S>>;

    /// Configuration recorded in the trace header.
    fn params(&self) -> Vec<(String, String)> {
        Vec::new()
    }
}

#[derive(Debug, Clone)]
pub struct MetropolisHastings<T, Q> {
    pub target: T,
    pub proposal: Q,
}

impl<S: Clone + fmt::Debug, T: ExactTarget<S>, Q: Proposal<S>> Kernel<S> for MetropolisHastings<T, Q> {
    fn step(&self, x: &S, rngs: &mut ChainRngs) -> Result<StepOutcome<S>> {
        mh_step(x, &self.target, &self.proposal, rngs)
    }

    fn params(&self) -> Vec<(String, String)> {
        vec![("sampler".into(), "mh".into())]
    }
}

#[derive(Debug, Clone)]
pub struct Mcwm<T, Q> {
    pub target: T,
    pub proposal: Q,
    pub particles: usize,
}

impl<S: Clone, T: DoublyIntractableTarget<S>, Q: Proposal<S>> Kernel<S> for Mcwm<T, Q> {
    fn step(&self, x: &S, rngs: &mut ChainRngs) -> Result<StepOutcome<S>> {
        mcwm_doubly_step(x, &self.target, &self.proposal, self.particles, rngs)
    }

    fn params(&self) -> Vec<(String, String)> {
        vec![("sampler".into(), "mcwm".into()), ("particles".into(), self.particles.to_string())]
    }
}

#[derive(Debug, Clone)]
pub struct RestrictedMcwm<T, Q, V> {
    pub target: T,
    pub proposal: Q,
    pub particles: usize,
    pub radius: f64,
    pub weight: V,
}

impl<S, T, Q, V> Kernel<S> for RestrictedMcwm<T, Q, V>
where
    S: Clone,
    T: DoublyIntractableTarget<S>,
    Q: Proposal<S>,
    V: Fn(&S) -> f64,
{
    fn step(&self, x: &S, rngs: &mut ChainRngs) -> Result<StepOutcome<S>> {
        restricted_mcwm_step(x, &self.target, &self.proposal, self.particles, self.radius, &self.weight, rngs)
    }

    fn params(&self) -> Vec<(String, String)> {
        vec![
            ("sampler".into(), "restricted-mcwm".into()),
            ("particles".into(), self.particles.to_string()),
            ("radius".into(), self.radius.to_string()),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct LatentMcwm<T, Q> {
    pub target: T,
    pub proposal: Q,
    pub particles: usize,
}

impl<S: Clone, T: LatentTarget<S>, Q: Proposal<S>> Kernel<S> for LatentMcwm<T, Q> {
    fn step(&self, x: &S, rngs: &mut ChainRngs) -> Result<StepOutcome<S>> {
        mcwm_latent_step(x, &self.target, &self.proposal, self.particles, rngs)
    }

    fn params(&self) -> Vec<(String, String)> {
        vec![("sampler".into(), "latent-mcwm".into()), ("particles".into(), self.particles.to_string())]
    }
}

/// Seeded sample path. `states.len() == accepted.len() + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace<S> {
    pub states: Vec<S>,
    pub accepted: Vec<bool>,
    pub seed: u64,
    pub params: Vec<(String, String)>,
    pub zero_estimates: usize,
}

impl<S> ChainTrace<S> {
    pub fn steps(&self) -> usize {
        self.accepted.len()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.accepted.is_empty() {
            return 0.0;
        }
        self.accepted.iter().filter(|a| **a).count() as f64 / self.accepted.len() as f64
    }
}

impl<S: fmt::Display> ChainTrace<S> {
    /// CSV with columns `step,state,accepted`; row 0 is the initial state and
    /// has an empty `accepted` field. Header comments carry seed and params.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# seed = {}", self.seed)?;
        for (k, v) in &self.params {
            writeln!(w, "# {k} = {v}")?;
        }
        writeln!(w, "# zero_estimates = {}", self.zero_estimates)?;
        writeln!(w, "step,state,accepted")?;
        for (i, s) in self.states.iter().enumerate() {
            match i.checked_sub(1).map(|j| self.accepted[j]) {
                Some(a) => writeln!(w, "{i},{s},{}", a as u8)?,
                None => writeln!(w, "{i},{s},")?,
            }
        }
        Ok(())
    }
}

/// Runs `n` steps of `kernel` from `x0`. Deterministic in `(seed, n, x0)`
/// and the kernel's parameters.
pub fn run_chain<S: Clone, K: Kernel<S>>(kernel: &K, x0: S, n: usize, seed: u64) -> Result<ChainTrace<S>> {
    let mut rngs = ChainRngs::new(seed);
    let mut states = Vec::with_capacity(n + 1);
    let mut accepted = Vec::with_capacity(n);
    let mut zero_estimates = 0;
    states.push(x0);
    for _ in 0..n {
        let out = kernel.step(states.last().expect("nonempty"), &mut rngs)?;
        accepted.push(out.accepted);
        zero_estimates += out.zero_estimate as usize;
        states.push(out.state);
    }
    let mut params = kernel.params();
    params.push(("steps".into(), n.to_string()));
    Ok(ChainTrace { states, accepted, seed, params, zero_estimates })
}

/// Independent replicate chains, one per seed, run in parallel.
pub fn run_replicates<S, K>(kernel: &K, x0: S, n: usize, seeds: &[u64]) -> Result<Vec<ChainTrace<S>>>
where
    S: Clone + Send + Sync,
    K: Kernel<S> + Sync,
{
    seeds.par_iter().map(|&seed| run_chain(kernel, x0.clone(), n, seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov_core::stationary_distribution;

    struct StdNormal;

    impl ExactTarget<f64> for StdNormal {
        fn log_pi_u(&self, x: &f64) -> f64 {
            -0.5 * x * x
        }
    }

    fn three_state() -> (DiscreteTarget, MatrixProposal) {
        let target = DiscreteTarget::new(vec![1.0, 2.0, 5.0]).unwrap();
        let q = FiniteChain::from_rows(vec![vec![0.2, 0.5, 0.3], vec![0.4, 0.1, 0.5], vec![0.3, 0.3, 0.4]]).unwrap();
        (target, MatrixProposal::new(q))
    }

    #[test]
    fn uphill_moves_always_accepted() {
        let target = DiscreteTarget::new(vec![1.0, 5.0]).unwrap();
        let flip = MatrixProposal::new(FiniteChain::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap());
        let mut rngs = ChainRngs::new(1);
        for _ in 0..10_000 {
            let out = mh_step(&0usize, &target, &flip, &mut rngs).unwrap();
            assert!(out.accepted && out.state == 1);
        }
    }

    #[test]
    fn closed_form_kernel_is_reversible() {
        let (target, prop) = three_state();
        let m = mh_kernel_matrix(&target, &prop).unwrap();
        let pi = target.normalized();
        for x in 0..3 {
            for y in 0..3 {
                assert!((pi[x] * m.get(x, y) - pi[y] * m.get(y, x)).abs() < 1e-12);
            }
        }
        let stat = stationary_distribution(&m).unwrap();
        for (a, b) in stat.as_slice().iter().zip(&pi) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn mh_step_rejects_invalid_start() {
        let target = DiscreteTarget::new(vec![0.0, 1.0]).unwrap();
        let q = FiniteChain::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let err = mh_step(&0usize, &target, &MatrixProposal::new(q), &mut ChainRngs::new(0)).unwrap_err();
        assert!(matches!(err, SamplerError::InvalidStart(_)));
    }

    #[test]
    fn zero_variance_mcwm_matches_mh() {
        let prop = GaussianRandomWalk::new(1.5).unwrap();
        let mh = run_chain(&MetropolisHastings { target: StdNormal, proposal: prop }, 0.3, 2000, 11).unwrap();
        let doubly = Mcwm { target: ZeroVariance(StdNormal), proposal: prop, particles: 7 };
        let latent = LatentMcwm { target: ZeroVariance(StdNormal), proposal: prop, particles: 7 };
        let restricted = RestrictedMcwm {
            target: ZeroVariance(StdNormal),
            proposal: prop,
            particles: 7,
            radius: f64::INFINITY,
            weight: |x: &f64| (x * x / 4.0).exp(),
        };
        assert_eq!(mh.states, run_chain(&doubly, 0.3, 2000, 11).unwrap().states);
        assert_eq!(mh.states, run_chain(&latent, 0.3, 2000, 11).unwrap().states);
        assert_eq!(mh.states, run_chain(&restricted, 0.3, 2000, 11).unwrap().states);
    }

    #[test]
    fn restriction_that_excludes_everything_freezes_chain() {
        let prop = GaussianRandomWalk::new(1.0).unwrap();
        // B_R = {0}: every continuous proposal falls outside
        let k = RestrictedMcwm { target: ZeroVariance(StdNormal), proposal: prop, particles: 3, radius: 1.0, weight: |x: &f64| (x * x / 4.0).exp() };
        let trace = run_chain(&k, 0.0, 500, 4).unwrap();
        assert!(trace.states.iter().all(|s| *s == 0.0));
        assert!(trace.accepted.iter().all(|a| !a));
    }

    #[test]
    fn restricted_start_outside_is_error() {
        let prop = GaussianRandomWalk::new(1.0).unwrap();
        let k = RestrictedMcwm { target: ZeroVariance(StdNormal), proposal: prop, particles: 3, radius: 2.0, weight: |x: &f64| (x * x / 4.0).exp() };
        assert!(matches!(run_chain(&k, 5.0, 10, 0), Err(SamplerError::OutsideRestriction { .. })));
    }

    struct Flaky;

    impl DoublyIntractableTarget<f64> for Flaky {
        fn log_rho(&self, x: &f64) -> f64 {
            -0.5 * x * x
        }

        fn log_z_estimate<R: Rng + ?Sized>(&self, _x: &f64, _n: usize, rng: &mut R) -> f64 {
            if rng.random_bool(0.5) { f64::NEG_INFINITY } else { 2f64.ln() }
        }
    }

    impl LatentTarget<f64> for Flaky {
        fn log_rho_estimate<R: Rng + ?Sized>(&self, x: &f64, _n: usize, rng: &mut R) -> f64 {
            if rng.random_bool(0.5) { f64::NEG_INFINITY } else { -0.5 * x * x + 2f64.ln() }
        }
    }

    #[test]
    fn zero_estimates_are_counted_and_handled() {
        let prop = GaussianRandomWalk::new(1.0).unwrap();
        let mut rngs = ChainRngs::new(5);
        let mut zeros = 0;
        for _ in 0..2000 {
            let d = mcwm_doubly_accept(&0.0, &0.1, &Flaky, &prop, 1, &mut rngs);
            if d.zero_estimate {
                zeros += 1;
                assert!(!d.accepted);
            }
        }
        assert!((800..1200).contains(&zeros));
        let trace = run_chain(&Mcwm { target: Flaky, proposal: prop, particles: 1 }, 0.0, 1000, 2).unwrap();
        assert!(trace.zero_estimates > 300);
    }

    #[test]
    fn latent_zero_at_current_state_accepts_positive_proposal() {
        struct ZeroAtOrigin;
        impl LatentTarget<f64> for ZeroAtOrigin {
            fn log_rho_estimate<R: Rng + ?Sized>(&self, x: &f64, _n: usize, _rng: &mut R) -> f64 {
                if *x == 0.0 { f64::NEG_INFINITY } else { 0.0 }
            }
        }
        let prop = GaussianRandomWalk::new(1.0).unwrap();
        let mut rngs = ChainRngs::new(0);
        let d = mcwm_latent_accept(&0.0, &1.0, &ZeroAtOrigin, &prop, 1, &mut rngs);
        assert!(d.accepted && d.zero_estimate);
    }

    #[test]
    fn trace_shape_and_determinism() {
        let k = MetropolisHastings { target: StdNormal, proposal: GaussianRandomWalk::new(1.0).unwrap() };
        let t0 = run_chain(&k, 0.0, 0, 1).unwrap();
        assert_eq!(t0.states, vec![0.0]);
        let a = run_chain(&k, 0.0, 500, 9).unwrap();
        let b = run_chain(&k, 0.0, 500, 9).unwrap();
        let c = run_chain(&k, 0.0, 500, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.states, c.states);
        assert_eq!(a.states.len(), 501);
        for (i, acc) in a.accepted.iter().enumerate() {
            if !acc {
                assert_eq!(a.states[i + 1], a.states[i]);
            }
        }
    }

    #[test]
    fn particle_count_does_not_move_proposal_stream() {
        let prop = GaussianRandomWalk::new(1.0).unwrap();
        let mut a = ChainRngs::new(3);
        let mut b = ChainRngs::new(3);
        let lognormal = Flaky;
        for _ in 0..50 {
            let za = prop.propose(&0.0, &mut a.proposal);
            let zb = prop.propose(&0.0, &mut b.proposal);
            assert_eq!(za, zb);
            mcwm_doubly_accept(&0.0, &za, &lognormal, &prop, 1, &mut a);
            mcwm_doubly_accept(&0.0, &zb, &lognormal, &prop, 100, &mut b);
        }
    }

    #[test]
    fn trace_csv_layout() {
        let k = MetropolisHastings { target: StdNormal, proposal: GaussianRandomWalk::new(1.0).unwrap() };
        let t = run_chain(&k, 0.0, 3, 1).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# seed = 1\n# sampler = mh\n"));
        let rows: Vec<_> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], "step,state,accepted");
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[1], "0,0,");
    }

    #[test]
    fn replicates_match_individual_runs() {
        let k = MetropolisHastings { target: StdNormal, proposal: GaussianRandomWalk::new(1.0).unwrap() };
        let reps = run_replicates(&k, 0.0, 200, &[1, 2, 3]).unwrap();
        assert_eq!(reps[1], run_chain(&k, 0.0, 200, 2).unwrap());
    }

    #[test]
    fn matrix_proposal_log_ratio_antisymmetric() {
        let (_, prop) = three_state();
        for x in 0..3 {
            for z in 0..3 {
                assert!((prop.log_q_ratio(&x, &z) + prop.log_q_ratio(&z, &x)).abs() < 1e-15);
            }
        }
        assert_eq!(GaussianRandomWalk::new(2.0).unwrap().log_q_ratio(&1.0, &3.0), 0.0);
    }
}
