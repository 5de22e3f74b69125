//! Randomised validation of the perturbation bounds on finite chains.
//!
//! For a finite pair `(P, P~)` every ingredient of the bounds is exactly
//! computable: the certificate from powers of `P`, the perturbation sizes
//! by row-wise norms, and `p~_i(W)` by matrix powers. Each bound is then
//! compared with the exact `||p_n - p~_n||_tv`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::markov_core::{
    n_step_distribution, restrict_kernel, tv_distance, weighted_l1, FiniteChain, MarkovError, ProbabilityVector,
    WeightFunction,
};
use crate::perturbation_bounds::{
    aux_bound, certify_finite, fit_lyapunov, general_bound, restricted_bound, simple_bound, BoundError,
    ErgodicityCertificate, PerturbationInputs, RestrictionSpec, DEFAULT_DELTA_GRID_STEP,
};

/// Horizon searched for a contracting power when certifying random chains.
pub const CERTIFY_HORIZON: usize = 200;

/// Largest weight drawn for random `V`.
pub const MAX_RANDOM_WEIGHT: f64 = 10.0;

/// Names of the bounds checked per instance, in report order.
pub const BOUND_NAMES: [&str; 4] = ["aux", "simple", "general", "restricted"];

pub fn random_stochastic_matrix<R: Rng + ?Sized>(states: usize, rng: &mut R) -> FiniteChain {
    let rows = (0..states)
        .map(|_| {
            let raw: Vec<f64> = (0..states).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            let mut row: Vec<f64> = raw.iter().map(|p| p / total).collect();
            // push rounding residue into the largest entry
            let residue = 1.0 - row.iter().sum::<f64>();
            let imax = (0..states).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap_or(0);
            row[imax] += residue;
            row
        })
        .collect();
    FiniteChain::from_rows(rows).expect("normalised rows")
}

pub fn random_probability_vector<R: Rng + ?Sized>(states: usize, rng: &mut R) -> ProbabilityVector {
    let raw: Vec<f64> = (0..states).map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|p| p / total).collect();
    let residue = 1.0 - w.iter().sum::<f64>();
    w[0] = (w[0] + residue).max(0.0);
    ProbabilityVector::new(w).expect("normalised")
}

/// `(1 - s) P + s Q` for a random stochastic `Q`.
pub fn mix(chain: &FiniteChain, other: &FiniteChain, s: f64) -> FiniteChain {
    let rows = chain
        .rows()
        .zip(other.rows())
        .map(|(a, b)| {
            let mut row: Vec<f64> = a.iter().zip(b).map(|(x, y)| (1.0 - s) * x + s * y).collect();
            let residue = 1.0 - row.iter().sum::<f64>();
            let imax = (0..row.len()).max_by(|&i, &j| row[i].total_cmp(&row[j])).unwrap_or(0);
            row[imax] += residue;
            row
        })
        .collect();
    FiniteChain::new(chain.labels().to_vec(), rows).expect("convex combination of stochastic rows")
}

/// `sup_x ||P(x,.) - P~(x,.)||_tv / W(x)`.
pub fn eps_tv_w(p: &FiniteChain, p_tilde: &FiniteChain, w: &WeightFunction) -> f64 {
    p.rows()
        .zip(p_tilde.rows())
        .zip(w.values())
        .map(|((a, b), wx)| weighted_l1(a, b, None) / wx)
        .fold(0.0, f64::max)
}

/// `sup_x ||P(x,.) - P~(x,.)||_V / W(x)`.
pub fn eps_v_w(p: &FiniteChain, p_tilde: &FiniteChain, v: &WeightFunction, w: &WeightFunction) -> f64 {
    p.rows()
        .zip(p_tilde.rows())
        .zip(w.values())
        .map(|((a, b), wx)| weighted_l1(a, b, Some(v.values())) / wx)
        .fold(0.0, f64::max)
}

/// `[p~_0(W), ..., p~_{n-1}(W)]`.
pub fn perturbed_weights(
    p_tilde: &FiniteChain,
    p0: &ProbabilityVector,
    w: &WeightFunction,
    n: usize,
) -> Result<Vec<f64>, MarkovError> {
    let mut out = Vec::with_capacity(n);
    let mut p = p0.clone();
    for _ in 0..n {
        out.push(p.expectation(w.values())?);
        p = p.step(p_tilde)?;
    }
    Ok(out)
}

/// Perturbation that follows `P_R` inside `B` and jumps to `anchor` from
/// outside; its distance to `P_R` on `B` is zero.
pub fn restriction_with_anchor(chain: &FiniteChain, subset: &[usize], anchor: usize) -> Result<FiniteChain, MarkovError> {
    if !subset.contains(&anchor) {
        return Err(MarkovError::StateOutOfRange(anchor));
    }
    let restricted = restrict_kernel(chain, subset)?;
    let n = chain.len();
    let rows = (0..n)
        .map(|x| {
            if subset.contains(&x) {
                restricted.row(x).to_vec()
            } else {
                let mut row = vec![0.0; n];
                row[anchor] = 1.0;
                row
            }
        })
        .collect();
    FiniteChain::new(chain.labels().to_vec(), rows)
}

/// `sup_{x in B} ||P_R(x,.) - P~(x,.)||_tv / V(x)`.
pub fn restriction_gap(
    chain: &FiniteChain,
    p_tilde: &FiniteChain,
    v: &WeightFunction,
    subset: &[usize],
) -> Result<f64, MarkovError> {
    let restricted = restrict_kernel(chain, subset)?;
    Ok(subset
        .iter()
        .map(|&x| weighted_l1(restricted.row(x), p_tilde.row(x), None) / v.values()[x])
        .fold(0.0, f64::max))
}

/// A random finite instance: ideal chain, perturbation, weight and start.
#[derive(Debug, Clone)]
pub struct ChainPair {
    pub p: FiniteChain,
    pub p_tilde: FiniteChain,
    pub v: WeightFunction,
    pub p0: ProbabilityVector,
    pub mix_weight: f64,
}

impl ChainPair {
    pub fn random<R: Rng + ?Sized>(states: usize, rng: &mut R) -> Self {
        let p = random_stochastic_matrix(states, rng);
        let q = random_stochastic_matrix(states, rng);
        let mix_weight = 10f64.powf(rng.random_range(-3.0..-0.5));
        let p_tilde = mix(&p, &q, mix_weight);
        let mut values: Vec<f64> = (0..states).map(|_| 1.0 + (MAX_RANDOM_WEIGHT - 1.0) * rng.random::<f64>()).collect();
        values[0] = 1.0;
        let v = WeightFunction::new(values).expect(">= 1");
        let p0 = random_probability_vector(states, rng);
        Self { p, p_tilde, v, p0, mix_weight }
    }
}

/// One bound evaluated at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub n: usize,
    pub r: f64,
    pub bound: &'static str,
    pub value: f64,
    pub exact_tv: f64,
}

impl BoundRow {
    pub fn violated(&self) -> bool {
        // relative rounding allowance only
        self.value < self.exact_tv - 1e-12 * self.exact_tv.max(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct InstanceReport {
    pub seed: u64,
    pub certificate: ErgodicityCertificate,
    pub eps_tv: f64,
    pub eps_v: f64,
    pub radius: f64,
    pub rows: Vec<BoundRow>,
    /// attempts discarded because the chain could not be certified
    pub regenerated: usize,
}

impl InstanceReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.violated()).count()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error("no certifiable chain after {0} attempts")]
    GaveUp(usize),
}

/// Evaluates every bound on one instance for `n = 0..=horizon` with `r = 1`.
pub fn evaluate_pair(pair: &ChainPair, horizon: usize, r: f64) -> Result<(ErgodicityCertificate, Vec<BoundRow>, f64, f64, f64), ValidationError> {
    let ChainPair { p, p_tilde, v, p0, .. } = pair;
    let cert = certify_finite(p, v, CERTIFY_HORIZON)?;

    // W = V throughout, p0 = p~0
    let eps_tv = eps_tv_w(p, p_tilde, v);
    let eps_v = eps_v_w(p, p_tilde, v, v);
    let (delta_t, l_t) = fit_lyapunov(p_tilde, v, DEFAULT_DELTA_GRID_STEP)?;
    let pert = PerturbationInputs::new(eps_tv, eps_v, delta_t, l_t, r)?;
    let weights = perturbed_weights(p_tilde, p0, v, horizon)?;
    let w0 = weights.first().copied().unwrap_or_else(|| p0.expectation(v.values()).unwrap_or(1.0));
    let kappa_tilde = w0.max(pert.gamma());

    // restriction to B_R with Delta(R) = 0
    let states = p.len();
    let vmax = v.values().iter().cloned().fold(1.0, f64::max);
    let radius = if vmax > std::f64::consts::E {
        // halfway between e and the largest weight: at least one state is cut off
        0.5 * (std::f64::consts::E + vmax)
    } else {
        std::f64::consts::E
    };
    let subset = v.sublevel_set(radius);
    let anchor = subset[0];
    let p_restricted = restriction_with_anchor(p, &subset, anchor)?;
    let gap = restriction_gap(p, &p_restricted, v, &subset)?;
    let spec = RestrictionSpec::new(radius, gap, anchor)?;
    let cert_r = cert.with_l_at_least(1.0);
    let kappa_r = cert_r.kappa(w0);
    let restricted_value = restricted_bound(&cert_r, &spec, kappa_r)?;

    let mut rows = Vec::with_capacity(4 * (horizon + 1));
    let mut pn = p0.clone();
    let mut qn = p0.clone();
    let mut rn = p0.clone();
    for n in 0..=horizon {
        if n > 0 {
            pn = pn.step(p)?;
            qn = qn.step(p_tilde)?;
            rn = rn.step(&p_restricted)?;
        }
        let exact = tv_distance(&pn, &qn)?;
        let exact_r = tv_distance(&pn, &rn)?;
        rows.push(BoundRow { n, r, bound: "aux", value: aux_bound(&cert, &pert, 0.0, &weights, n)?, exact_tv: exact });
        rows.push(BoundRow { n, r, bound: "simple", value: simple_bound(&cert, &pert, kappa_tilde)?, exact_tv: exact });
        rows.push(BoundRow { n, r, bound: "general", value: general_bound(&cert, &pert, 0.0, w0, n)?, exact_tv: exact });
        rows.push(BoundRow { n, r, bound: "restricted", value: restricted_value, exact_tv: exact_r });
    }
    debug_assert_eq!(states, v.len());
    Ok((cert, rows, eps_tv, eps_v, radius))
}

/// Builds and validates the instance for `seed`, regenerating chains that
/// fail certification.
pub fn validate_instance(seed: u64, states: usize, horizon: usize) -> Result<InstanceReport, ValidationError> {
    const MAX_ATTEMPTS: usize = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..MAX_ATTEMPTS {
        let pair = ChainPair::random(states, &mut rng);
        match evaluate_pair(&pair, horizon, 1.0) {
            Ok((certificate, rows, eps_tv, eps_v, radius)) => {
                return Ok(InstanceReport { seed, certificate, eps_tv, eps_v, radius, rows, regenerated: attempt });
            }
            Err(ValidationError::Bound(BoundError::NotContractive(_))) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(ValidationError::GaveUp(MAX_ATTEMPTS))
}

#[derive(Debug, Clone, Default)]
pub struct BoundSummary {
    pub checks: usize,
    pub violations: usize,
    pub mean_slack: f64,
}

#[derive(Debug, Clone)]
pub struct ValidationSummary {
    pub instances: usize,
    pub regenerated: usize,
    pub per_bound: Vec<(&'static str, BoundSummary)>,
    pub reports: Vec<InstanceReport>,
}

impl ValidationSummary {
    pub fn total_violations(&self) -> usize {
        self.per_bound.iter().map(|(_, s)| s.violations).sum()
    }
}

/// Validates seeds `0..seeds` in parallel.
pub fn validate_bounds(seeds: u64, states: usize, horizon: usize) -> Result<ValidationSummary, ValidationError> {
    let reports = (0..seeds)
        .into_par_iter()
        .map(|seed| validate_instance(seed, states, horizon))
        .collect::<Result<Vec<_>, _>>()?;
    let per_bound = BOUND_NAMES
        .iter()
        .map(|&name| {
            let mut s = BoundSummary::default();
            let mut slack = 0.0;
            for row in reports.iter().flat_map(|r| &r.rows).filter(|r| r.bound == name) {
                s.checks += 1;
                if row.violated() {
                    s.violations += 1;
                }
                slack += row.value - row.exact_tv;
            }
            s.mean_slack = if s.checks > 0 { slack / s.checks as f64 } else { 0.0 };
            (name, s)
        })
        .collect();
    Ok(ValidationSummary {
        instances: reports.len(),
        regenerated: reports.iter().map(|r| r.regenerated).sum(),
        per_bound,
        reports,
    })
}

/// Bound values on the instance of `seed` over a grid of `r`, for CSV sweeps.
pub fn sweep_instance(seed: u64, states: usize, horizon: usize, rs: &[f64]) -> Result<Vec<BoundRow>, ValidationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pair = ChainPair::random(states, &mut rng);
    let mut out = Vec::new();
    for &r in rs {
        let (_, rows, ..) = evaluate_pair(&pair, horizon, r)?;
        out.extend(rows.into_iter().filter(|row| row.bound != "restricted" || r == 1.0));
    }
    Ok(out)
}

/// Exact n-step TV between the chains of `pair`, a convenience for tests.
pub fn exact_tv(pair: &ChainPair, n: usize) -> Result<f64, MarkovError> {
    let a = n_step_distribution(&pair.p, &pair.p0, n)?;
    let b = n_step_distribution(&pair.p_tilde, &pair.p0, n)?;
    tv_distance(&a, &b)
}
