//! Explicit bounds on `||p_n - p~_n||_tv` between an ideal chain `P` and a
//! perturbation `P~`, plus certificate construction for finite chains.
//!
//! All evaluators are pure functions of validated constants. Continuous
//! models cannot supply exact constants, so certificates carry a
//! [`Provenance`] label separating finite-chain certificates from numerical
//! estimates.

use thiserror::Error;

use crate::markov_core::{check_lyapunov, ergodicity_coefficient, FiniteChain, MarkovError, WeightFunction};

/// Below this gap `|alpha^r - delta~|` the removable-singularity branch of
/// [`beta_coefficient`] is used.
pub const BETA_SEAM_TOL: f64 = 1e-12;

/// Default resolution of the drift-rate grid used by [`fit_lyapunov`].
pub const DEFAULT_DELTA_GRID_STEP: f64 = 0.01;

/// Grid of `r` values searched by [`tune_r`].
pub fn r_grid() -> impl Iterator<Item = f64> {
    (1..=20).map(|i| i as f64 * 0.05)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("weight sequence has {found} entries, need at least {needed}")]
    WeightsTooShort { needed: usize, found: usize },
    #[error("restriction too coarse: R * Delta(R) = {product} exceeds (1 - delta) / 2 = {limit}")]
    RestrictionTooCoarse { product: f64, limit: f64 },
    #[error("radius R = {0} is below e")]
    RadiusBelowE(f64),
    #[error("sample size below corollary threshold: N = {n} needs N {cmp} {threshold}")]
    SampleSizeTooSmall { n: usize, cmp: &'static str, threshold: f64 },
    #[error("chain is not V-uniformly contractive within horizon {0}")]
    NotContractive(usize),
    #[error("no drift rate on the grid gives a positive L")]
    NoLyapunovFit,
    #[error(transparent)]
    Markov(#[from] MarkovError),
}

pub type Result<T> = std::result::Result<T, BoundError>;

fn invalid(msg: impl Into<String>) -> BoundError {
    BoundError::InvalidParameter(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Constants proven for an explicit finite chain.
    Certified,
    /// Constants obtained numerically (quadrature, user input).
    Estimate,
}

impl Provenance {
    pub fn label(self) -> &'static str {
        match self {
            Provenance::Certified => "certified",
            Provenance::Estimate => "ESTIMATE",
        }
    }
}

/// Constants of V-uniform ergodicity `tau_V(P^n) <= C alpha^n` and the
/// drift condition `PV <= delta V + L` for the unperturbed kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicityCertificate {
    pub c: f64,
    pub alpha: f64,
    pub delta: f64,
    pub l: f64,
    pub provenance: Provenance,
}

impl ErgodicityCertificate {
    pub fn new(c: f64, alpha: f64, delta: f64, l: f64, provenance: Provenance) -> Result<Self> {
        if !(c >= 1.0) || !c.is_finite() {
            return Err(invalid(format!("C = {c} must be a finite number >= 1")));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(invalid(format!("alpha = {alpha} must lie in [0, 1)")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(invalid(format!("delta = {delta} must lie in [0, 1)")));
        }
        if !(l > 0.0) || !l.is_finite() {
            return Err(invalid(format!("L = {l} must be positive")));
        }
        Ok(Self { c, alpha, delta, l, provenance })
    }

    /// Same certificate with `L` raised to at least `floor`; a drift
    /// condition stays valid under a larger `L`.
    pub fn with_l_at_least(mut self, floor: f64) -> Self {
        self.l = self.l.max(floor);
        self
    }

    /// `kappa = max{m0(V), L / (1 - delta)}`.
    pub fn kappa(&self, initial_v: f64) -> f64 {
        initial_v.max(self.l / (1.0 - self.delta))
    }
}

/// Closeness and stability data of the perturbed kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationInputs {
    /// `eps_{tv,W} = sup_x ||P(x,.) - P~(x,.)||_tv / W(x)`
    pub eps_tv: f64,
    /// `eps_{V,W} = sup_x ||P(x,.) - P~(x,.)||_V / W(x)`
    pub eps_v: f64,
    /// drift rate of `P~ W <= delta~ W + L~`
    pub delta_tilde: f64,
    pub l_tilde: f64,
    pub r: f64,
}

impl PerturbationInputs {
    pub fn new(eps_tv: f64, eps_v: f64, delta_tilde: f64, l_tilde: f64, r: f64) -> Result<Self> {
        if !(eps_tv >= 0.0) || !(eps_v >= 0.0) {
            return Err(invalid("perturbation sizes must be nonnegative"));
        }
        let cap = eps_v.min(2.0);
        if eps_tv > cap + 1e-12 * cap.max(1.0) {
            return Err(invalid(format!("eps_tv = {eps_tv} exceeds min(2, eps_V) = {cap}")));
        }
        if !(0.0..1.0).contains(&delta_tilde) {
            return Err(invalid(format!("delta~ = {delta_tilde} must lie in [0, 1)")));
        }
        if !(l_tilde > 0.0) {
            return Err(invalid(format!("L~ = {l_tilde} must be positive")));
        }
        Self { eps_tv, eps_v, delta_tilde, l_tilde, r: 1.0 }.with_r(r)
    }

    pub fn with_r(mut self, r: f64) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(invalid(format!("r = {r} must lie in (0, 1]")));
        }
        self.r = r;
        Ok(self)
    }

    /// `gamma = L~ / (1 - delta~)`.
    pub fn gamma(&self) -> f64 {
        self.l_tilde / (1.0 - self.delta_tilde)
    }

    // eps_tv^(1-r) eps_V^r C^r
    fn interpolated(&self, c: f64) -> f64 {
        self.eps_tv.powf(1.0 - self.r) * self.eps_v.powf(self.r) * c.powf(self.r)
    }
}

/// Tightest drift fit `PV <= delta V + L` over the grid `{0, step, ..., < 1}`.
///
/// For each grid rate the smallest admissible `L = max_x [PV(x) - delta V(x)]`
/// is computed; among positive values the pair minimising `L / (1 - delta)`
/// is returned (that ratio is what enters every bound through `kappa`).
pub fn fit_lyapunov(chain: &FiniteChain, v: &WeightFunction, step: f64) -> Result<(f64, f64)> {
    if !(step > 0.0 && step < 1.0) {
        return Err(invalid(format!("delta grid step {step} must lie in (0, 1)")));
    }
    let pv = chain.apply(v.values())?;
    let mut best: Option<(f64, f64)> = None;
    let mut i = 0usize;
    loop {
        let delta = i as f64 * step;
        if delta >= 1.0 {
            break;
        }
        let l = pv
            .iter()
            .zip(v.values())
            .map(|(p, w)| p - delta * w)
            .fold(f64::NEG_INFINITY, f64::max);
        if l > 0.0 {
            let score = l / (1.0 - delta);
            if best.map_or(true, |(d, bl)| score < bl / (1.0 - d)) {
                best = Some((delta, l));
            }
        }
        i += 1;
    }
    let (delta, l) = best.ok_or(BoundError::NoLyapunovFit)?;
    debug_assert!(check_lyapunov(chain, v, delta, l).map(|r| r.holds).unwrap_or(false));
    Ok((delta, l))
}

/// Builds `(C, alpha)` with `tau_V(P^n) <= C alpha^n` for every `n`.
///
/// Takes the smallest `m <= horizon` with `tau_V(P^m) < 1`, sets
/// `alpha = tau_V(P^m)^(1/m)` and `C = max_{j<m} tau_V(P^j) / alpha^j`;
/// submultiplicativity then covers all `n = q m + j`. The drift pair comes
/// from [`fit_lyapunov`] with the default grid.
pub fn certify_finite(chain: &FiniteChain, v: &WeightFunction, horizon: usize) -> Result<ErgodicityCertificate> {
    certify_finite_with_grid(chain, v, horizon, DEFAULT_DELTA_GRID_STEP)
}

pub fn certify_finite_with_grid(
    chain: &FiniteChain,
    v: &WeightFunction,
    horizon: usize,
    delta_step: f64,
) -> Result<ErgodicityCertificate> {
    let mut taus = vec![1.0];
    let mut power = FiniteChain::identity(chain.len());
    let mut found = None;
    for m in 1..=horizon {
        power = power.compose(chain)?;
        let tau = ergodicity_coefficient(&power, v)?;
        if tau < 1.0 {
            found = Some((m, tau));
            break;
        }
        taus.push(tau);
    }
    let (m, tau_m) = found.ok_or(BoundError::NotContractive(horizon))?;
    let mut alpha = tau_m.powf(1.0 / m as f64);
    if alpha == 0.0 && m > 1 {
        // tau_V(P^n) vanishes for n >= m; any rate works for the first m - 1 powers
        alpha = 0.5;
    }
    let c = taus
        .iter()
        .enumerate()
        .map(|(j, t)| t / alpha.powi(j as i32))
        .fold(1.0, f64::max);
    let (delta, l) = fit_lyapunov(chain, v, delta_step)?;
    ErgodicityCertificate::new(c, alpha, delta, l, Provenance::Certified)
}

/// Auxiliary estimate
/// `C alpha^n ||p0 - p~0||_V + eps_tv^(1-r) eps_V^r C^r sum_{i<n} p~_i(W) alpha^((n-i-1) r)`.
///
/// `weights[i]` holds `p~_i(W)`.
pub fn aux_bound(
    cert: &ErgodicityCertificate,
    pert: &PerturbationInputs,
    init_gap: f64,
    weights: &[f64],
    n: usize,
) -> Result<f64> {
    if weights.len() < n {
        return Err(BoundError::WeightsTooShort { needed: n, found: weights.len() });
    }
    if !(init_gap >= 0.0) {
        return Err(invalid("initial gap must be nonnegative"));
    }
    let sum: f64 = weights[..n]
        .iter()
        .enumerate()
        .map(|(i, w)| w * cert.alpha.powf((n - i - 1) as f64 * pert.r))
        .sum();
    Ok(cert.c * cert.alpha.powi(n as i32) * init_gap + pert.interpolated(cert.c) * sum)
}

/// Time-uniform bound `eps_tv^(1-r) eps_V^r C^r kappa / ((1 - alpha) r)`
/// for `p0 = p~0` and a drift condition of `P~` in `V`; `kappa` is
/// `max{p~0(V), L~ / (1 - delta~)}`.
pub fn simple_bound(cert: &ErgodicityCertificate, pert: &PerturbationInputs, kappa: f64) -> Result<f64> {
    if !(kappa >= 1.0) {
        return Err(invalid(format!("kappa = {kappa} must be >= 1")));
    }
    Ok(pert.interpolated(cert.c) * kappa / ((1.0 - cert.alpha) * pert.r))
}

/// `beta_{n,r}(delta~, alpha) = sum_{i<n} delta~^i alpha^((n-i-1) r)` in
/// closed form: `|alpha^(rn) - delta~^n| / |alpha^r - delta~|`, or
/// `n alpha^((n-1) r)` on the diagonal `alpha^r = delta~`. Close to the
/// diagonal the quotient cancels badly, so the sum is taken term by term.
pub fn beta_coefficient(n: usize, r: f64, delta_tilde: f64, alpha: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let ar = alpha.powf(r);
    let gap = ar - delta_tilde;
    if gap.abs() < BETA_SEAM_TOL {
        return n as f64 * ar.powi(n as i32 - 1);
    }
    if gap.abs() < 1e-3 * ar.max(delta_tilde) {
        return (0..n).map(|i| delta_tilde.powi(i as i32) * ar.powi((n - 1 - i) as i32)).sum();
    }
    (ar.powi(n as i32) - delta_tilde.powi(n as i32)).abs() / gap.abs()
}

/// General estimate with a separate weight `W`:
/// `C alpha^n ||p~0 - p0||_V + eps_tv^(1-r) eps_V^r C^r [w0 beta_{n,r} + gamma / ((1 - alpha) r)]`
/// with `w0 = p~0(W)` and `gamma = L~ / (1 - delta~)`.
pub fn general_bound(
    cert: &ErgodicityCertificate,
    pert: &PerturbationInputs,
    init_gap_v: f64,
    w0: f64,
    n: usize,
) -> Result<f64> {
    if !(init_gap_v >= 0.0) {
        return Err(invalid("initial gap must be nonnegative"));
    }
    if !(w0 >= 1.0) {
        return Err(invalid(format!("p~0(W) = {w0} must be >= 1")));
    }
    let beta = beta_coefficient(n, pert.r, pert.delta_tilde, cert.alpha);
    let bracket = w0 * beta + pert.gamma() / ((1.0 - cert.alpha) * pert.r);
    Ok(cert.c * cert.alpha.powi(n as i32) * init_gap_v + pert.interpolated(cert.c) * bracket)
}

/// Restriction of the perturbed chain to `B_R = {V <= R}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestrictionSpec {
    pub radius: f64,
    /// `Delta(R) = sup_{x in B_R} ||P_R(x,.) - P~(x,.)||_tv / V(x)`
    pub delta_r: f64,
    /// state the perturbed chain jumps to from outside `B_R`
    pub anchor: usize,
}

impl RestrictionSpec {
    pub fn new(radius: f64, delta_r: f64, anchor: usize) -> Result<Self> {
        if !(radius >= 1.0) {
            return Err(invalid(format!("R = {radius} must be >= 1")));
        }
        if !(delta_r >= 0.0) {
            return Err(invalid(format!("Delta(R) = {delta_r} must be >= 0")));
        }
        Ok(Self { radius, delta_r, anchor })
    }
}

/// `33 C (L + 1) kappa / (1 - alpha) * log(R) / R` for a perturbation
/// confined to `B_R`, valid when `R >= e`, `L >= 1` and
/// `R Delta(R) <= (1 - delta) / 2`.
pub fn restricted_bound(cert: &ErgodicityCertificate, spec: &RestrictionSpec, kappa: f64) -> Result<f64> {
    let r = spec.radius;
    if r < std::f64::consts::E {
        return Err(BoundError::RadiusBelowE(r));
    }
    if cert.l < 1.0 {
        return Err(invalid(format!("L = {} must be >= 1 for the restricted bound", cert.l)));
    }
    if !(kappa >= 1.0) {
        return Err(invalid(format!("kappa = {kappa} must be >= 1")));
    }
    let limit = (1.0 - cert.delta) / 2.0;
    let product = r * spec.delta_r;
    if product > limit {
        return Err(BoundError::RestrictionTooCoarse { product, limit });
    }
    Ok(restricted_constant(cert, kappa) * r.ln() / r)
}

// 33 C (L + 1) kappa / (1 - alpha)
fn restricted_constant(cert: &ErgodicityCertificate, kappa: f64) -> f64 {
    33.0 * cert.c * (cert.l + 1.0) * kappa / (1.0 - cert.alpha)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceErrorBounds {
    /// bound on `sup_{x in B} ||M_b(x,.) - M_c(x,.)||_V / V(x)`
    pub vnorm: f64,
    /// bound on `sup_{x in B} ||M_b(x,.) - M_c(x,.)||_tv / V(x)`
    pub tv: f64,
}

/// Kernel distance between two MH-type kernels sharing a proposal whose
/// acceptance functions differ by at most `1_B(y) (eta(x) + eta(y)) b(x,y) xi(.)`.
///
/// Arguments are the sup norms over `B`: `||eta||_inf`, `||xi||_inf`,
/// `||eta||_{inf,V^beta}` and `||xi||_{inf,V^(1-beta)}`; `t_bound` bounds
/// `sup_x M_b V(x) / V(x)`.
pub fn acceptance_error_bounds(
    eta_sup: f64,
    xi_sup: f64,
    eta_sup_v_beta: f64,
    xi_sup_v_one_minus_beta: f64,
    t_bound: f64,
) -> Result<AcceptanceErrorBounds> {
    for (name, v) in [
        ("eta_sup", eta_sup),
        ("xi_sup", xi_sup),
        ("eta_sup_v_beta", eta_sup_v_beta),
        ("xi_sup_v_one_minus_beta", xi_sup_v_one_minus_beta),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(invalid(format!("{name} = {v} must be finite and nonnegative")));
        }
    }
    if !(t_bound >= 1.0) {
        return Err(invalid(format!("T = {t_bound} must be >= 1")));
    }
    Ok(AcceptanceErrorBounds {
        vnorm: 4.0 * t_bound * eta_sup * xi_sup,
        tv: 4.0 * t_bound * eta_sup_v_beta * xi_sup_v_one_minus_beta,
    })
}

/// Constants of the MCwM error bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McwmBoundInputs {
    /// `D = 8 L ||i_{2,k}||_inf ||s||_inf`
    pub d: f64,
    /// `D_R = 12 L ||i_{2,k} 1_{B_R}||_{inf,V^(1-beta)} ||s 1_{B_R}||_{inf,V^beta}`
    pub d_r: f64,
    /// batch size of the inverse-moment bound
    pub k: usize,
    /// Monte Carlo sample size `N`
    pub n_samples: usize,
    pub beta_split: f64,
}

impl McwmBoundInputs {
    pub fn new(d: f64, d_r: f64, k: usize, n_samples: usize, beta_split: f64) -> Result<Self> {
        if !(d >= 0.0) || !(d_r >= 0.0) {
            return Err(invalid("D and D_R must be nonnegative"));
        }
        if k == 0 || n_samples == 0 {
            return Err(invalid("k and N must be at least 1"));
        }
        if !(beta_split > 0.0 && beta_split < 1.0) {
            return Err(invalid(format!("beta = {beta_split} must lie in (0, 1)")));
        }
        Ok(Self { d, d_r, k, n_samples, beta_split })
    }

    pub fn with_samples(mut self, n_samples: usize) -> Result<Self> {
        if n_samples == 0 {
            return Err(invalid("N must be at least 1"));
        }
        self.n_samples = n_samples;
        Ok(self)
    }
}

/// `(D C / sqrt N) [m0(V) beta_n + L / ((1 - delta_N)(1 - alpha))]` with
/// `delta_N = delta + D / sqrt N` and `beta_n = n max{delta_N, alpha}^(n-1)`,
/// valid for `N > max{k, D^2 / (1 - delta)^2}`.
pub fn mcwm_bound(cert: &ErgodicityCertificate, inputs: &McwmBoundInputs, m0_v: f64, n: usize) -> Result<f64> {
    if !(m0_v >= 1.0) {
        return Err(invalid(format!("m0(V) = {m0_v} must be >= 1")));
    }
    let threshold = (inputs.k as f64).max((inputs.d / (1.0 - cert.delta)).powi(2));
    let big_n = inputs.n_samples as f64;
    if !(big_n > threshold) {
        return Err(BoundError::SampleSizeTooSmall { n: inputs.n_samples, cmp: ">", threshold });
    }
    let root = big_n.sqrt();
    let delta_n = cert.delta + inputs.d / root;
    let beta_n = if n == 0 { 0.0 } else { n as f64 * delta_n.max(cert.alpha).powi(n as i32 - 1) };
    let bracket = m0_v * beta_n + cert.l / ((1.0 - delta_n) * (1.0 - cert.alpha));
    Ok(inputs.d * cert.c / root * bracket)
}

/// Smallest admissible `N` for the restricted MCwM bound:
/// `max{k, 4 (R D_R / (1 - delta))^2}`.
pub fn restricted_sample_threshold(cert: &ErgodicityCertificate, inputs: &McwmBoundInputs, radius: f64) -> f64 {
    (inputs.k as f64).max(4.0 * (radius * inputs.d_r / (1.0 - cert.delta)).powi(2))
}

/// Restricted MCwM bound. Checks `N >= max{k, 4 (R D_R / (1 - delta))^2}`,
/// which forces `R Delta(R) <= (1 - delta) / 2` with `Delta(R) <= D_R / sqrt N`,
/// then evaluates [`restricted_bound`].
pub fn restricted_mcwm_bound(
    cert: &ErgodicityCertificate,
    inputs: &McwmBoundInputs,
    radius: f64,
    kappa: f64,
) -> Result<f64> {
    if radius < std::f64::consts::E {
        return Err(BoundError::RadiusBelowE(radius));
    }
    let threshold = restricted_sample_threshold(cert, inputs, radius);
    if (inputs.n_samples as f64) < threshold {
        return Err(BoundError::SampleSizeTooSmall { n: inputs.n_samples, cmp: ">=", threshold });
    }
    let delta_r = inputs.d_r / (inputs.n_samples as f64).sqrt();
    let spec = RestrictionSpec { radius, delta_r, anchor: 0 };
    restricted_bound(cert, &spec, kappa)
}

/// Grid search of `r` over `{0.05, 0.10, ..., 1.00}` for any bound that
/// depends on [`PerturbationInputs::r`]; returns the minimiser and value.
pub fn tune_r<F>(pert: &PerturbationInputs, mut eval: F) -> Result<(f64, f64)>
where
    F: FnMut(&PerturbationInputs) -> Result<f64>,
{
    let mut best = (1.0, f64::INFINITY);
    for r in r_grid() {
        let value = eval(&pert.with_r(r)?)?;
        if value < best.1 {
            best = (r, value);
        }
    }
    Ok(best)
}
