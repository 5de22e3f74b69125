//! The log-normal doubly-intractable model and the normal-normal latent
//! variable model, with their estimators, analytic moments, Lyapunov data
//! and drift-constant estimation.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::perturbation_bounds::Provenance;
use crate::samplers::{DoublyIntractableTarget, ExactTarget, GaussianRandomWalk, LatentTarget};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("radius R = {0} must be >= 1")]
    RadiusBelowOne(f64),
    #[error("quadrature too coarse: halving the step moved M_a V by {rel:.3e} (relative) at x = {x}")]
    QuadratureTooCoarse { x: f64, rel: f64 },
}

pub type Result<T> = std::result::Result<T, ModelError>;

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Moment functionals of the single-sample normalised estimator `W_1(x)`.
pub trait MomentFunctions {
    /// `E[W_1(x)^p]`, `+inf` where it does not exist.
    fn w1_moment(&self, p: f64, x: f64) -> f64;

    /// `s(x) = (E|W_1(x) - 1|^2)^{1/2}`.
    fn s(&self, x: f64) -> f64 {
        (self.w1_moment(2.0, x) - 1.0).max(0.0).sqrt()
    }

    /// `i_{p,1}(x) = (E W_1(x)^{-p})^{1/p}`.
    fn i_p1(&self, p: f64, x: f64) -> f64 {
        self.w1_moment(-p, x).powf(1.0 / p)
    }

    /// Upper bound `i_{2,k}(x) <= i_{2/k,1}(x)`.
    fn i2k_bound(&self, k: usize, x: f64) -> f64 {
        self.i_p1(2.0 / k as f64, x)
    }
}

/// Target `N(mean, 1/precision)` with exact density access.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: f64,
    pub precision: f64,
}

impl Gaussian {
    pub fn standard() -> Self {
        Self { mean: 0.0, precision: 1.0 }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        0.5 * (self.precision / (2.0 * PI)).ln() - 0.5 * self.precision * (x - self.mean).powi(2)
    }

    pub fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }
}

impl ExactTarget<f64> for Gaussian {
    fn log_pi_u(&self, x: &f64) -> f64 {
        self.log_density(*x)
    }
}

/// Doubly-intractable model with `rho(x) = exp(-x^2/2)`, `Z(x) = 1` and a
/// log-normal estimator of `Z(x)` with log-variance `sigma(x)^2 = |x|^q`.
/// The target is the standard normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalModel {
    pub q: f64,
}

impl LogNormalModel {
    pub fn new(q: f64) -> Result<Self> {
        if !(q > 0.0) || !q.is_finite() {
            return Err(ModelError::InvalidParameter(format!("q = {q} must be positive")));
        }
        Ok(Self { q })
    }

    pub fn sigma2(&self, x: f64) -> f64 {
        x.abs().powf(self.q)
    }

    /// One draw of `W_1(x)`.
    pub fn sample_w1<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let s2 = self.sigma2(x);
        let xi: f64 = StandardNormal.sample(rng);
        (-0.5 * s2 + s2.sqrt() * xi).exp()
    }

    /// `log Z_N(x)`, computed by log-sum-exp so large `sigma(x)` cannot overflow.
    pub fn log_z_estimate<R: Rng + ?Sized>(&self, x: f64, n: usize, rng: &mut R) -> f64 {
        let s2 = self.sigma2(x);
        if s2 == 0.0 {
            return 0.0;
        }
        let sigma = s2.sqrt();
        let m = -0.5 * s2;
        let logs: Vec<f64> = (0..n)
            .map(|_| {
                let xi: f64 = StandardNormal.sample(rng);
                m + sigma * xi
            })
            .collect();
        log_sum_exp(logs.iter().copied()) - (n as f64).ln()
    }

    /// `Z_N(x)`.
    pub fn z_estimate<R: Rng + ?Sized>(&self, x: f64, n: usize, rng: &mut R) -> f64 {
        self.log_z_estimate(x, n, rng).exp()
    }
}

impl MomentFunctions for LogNormalModel {
    fn w1_moment(&self, p: f64, x: f64) -> f64 {
        (p * (p - 1.0) * self.sigma2(x) / 2.0).exp()
    }

    fn s(&self, x: f64) -> f64 {
        self.sigma2(x).exp_m1().sqrt()
    }

    fn i_p1(&self, p: f64, x: f64) -> f64 {
        ((p + 1.0) * self.sigma2(x) / 2.0).exp()
    }

    fn i2k_bound(&self, k: usize, x: f64) -> f64 {
        ((0.5 + 1.0 / k as f64) * self.sigma2(x)).exp()
    }
}

impl DoublyIntractableTarget<f64> for LogNormalModel {
    fn log_rho(&self, x: &f64) -> f64 {
        -0.5 * x * x
    }

    fn log_z_estimate<R: Rng + ?Sized>(&self, x: &f64, n: usize, rng: &mut R) -> f64 {
        LogNormalModel::log_z_estimate(self, *x, n, rng)
    }
}

/// Lyapunov function `V(x) = exp(x^2/4)` of the MH chain for the standard
/// normal target, with sublevel sets `B_R = [-2 sqrt(ln R), 2 sqrt(ln R)]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LogNormalLyapunov;

impl LogNormalLyapunov {
    pub fn v(&self, x: f64) -> f64 {
        (x * x / 4.0).exp()
    }

    /// Half-width of `B_R`.
    pub fn half_width(&self, radius: f64) -> Result<f64> {
        if !(radius >= 1.0) {
            return Err(ModelError::RadiusBelowOne(radius));
        }
        Ok(2.0 * radius.ln().sqrt())
    }

    pub fn ball(&self, radius: f64) -> Result<(f64, f64)> {
        let b = self.half_width(radius)?;
        Ok((-b, b))
    }

    /// `R` with `B_R = [-b, b]`.
    pub fn radius_for_half_width(&self, b: f64) -> f64 {
        (b * b / 4.0).exp()
    }
}

pub fn lognormal_lyapunov() -> LogNormalLyapunov {
    LogNormalLyapunov
}

const SUP_GRID_POINTS: usize = 10_000;
const GOLDEN_ITERS: usize = 200;

/// `max_{0 <= x <= b} f(x)` for smooth `f`: grid search then golden-section
/// refinement of the winning cell.
pub fn grid_sup<F: Fn(f64) -> f64>(f: F, b: f64) -> (f64, f64) {
    if b <= 0.0 {
        return (0.0, f(0.0));
    }
    let h = b / SUP_GRID_POINTS as f64;
    let (mut best_i, mut best) = (0, f(0.0));
    for i in 1..=SUP_GRID_POINTS {
        let v = f(b * i as f64 / SUP_GRID_POINTS as f64);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let (mut lo, mut hi) = ((best_i as f64 - 1.0).max(0.0) * h, ((best_i + 1) as f64 * h).min(b));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if hi - lo < 1e-14 * b.max(1.0) {
            break;
        }
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    let (xm, fm) = if fc > fd { (c, fc) } else { (d, fd) };
    if fm > best { (xm, fm) } else { (b * best_i as f64 / SUP_GRID_POINTS as f64, best) }
}

/// Logs of the two weighted sups entering `D_R` for the log-normal model:
/// `ln sup_{B_R} i_{2,k} / V^{1-beta}` (using the `i_{2/k,1}` bound) and
/// `ln sup_{B_R} s / V^beta`. Takes `ln R` so that huge radii are usable.
pub fn lognormal_dr_log_factors(model: &LogNormalModel, k: usize, beta_split: f64, log_r: f64) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(ModelError::InvalidParameter("k must be >= 1".into()));
    }
    if !(beta_split > 0.0 && beta_split < 1.0) {
        return Err(ModelError::InvalidParameter(format!("beta = {beta_split} must lie in (0, 1)")));
    }
    if !(log_r >= 0.0) {
        return Err(ModelError::RadiusBelowOne(log_r.exp()));
    }
    let b = 2.0 * log_r.sqrt();
    let c = 0.5 + 1.0 / k as f64;
    let f1 = |x: f64| c * model.sigma2(x) - (1.0 - beta_split) * x * x / 4.0;
    // ln s(x) = ln(expm1(sigma^2)) / 2, written to stay finite for large sigma^2
    let f2 = |x: f64| {
        let s2 = model.sigma2(x);
        let ln_s = if s2 > 30.0 { 0.5 * (s2 + (-(-s2).exp()).ln_1p()) } else { 0.5 * s2.exp_m1().ln() };
        ln_s - beta_split * x * x / 4.0
    };
    Ok((grid_sup(f1, b).1, grid_sup(f2, b).1))
}

/// `ln D_R` with `D_R = 12 L sup(i_{2,k} / V^{1-beta}) sup(s / V^beta)` over `B_R`.
/// `-inf` when `B_R = {0}` (since `s(0) = 0`).
pub fn lognormal_log_dr(model: &LogNormalModel, k: usize, beta_split: f64, log_r: f64, l: f64) -> Result<f64> {
    let (a, b) = lognormal_dr_log_factors(model, k, beta_split, log_r)?;
    Ok((12.0 * l).ln() + a + b)
}

/// `D_R` for a radius `R >= 1`; may overflow to `+inf` for radii where
/// the sups exceed the `f64` range.
pub fn lognormal_dr(model: &LogNormalModel, k: usize, beta_split: f64, radius: f64, l: f64) -> Result<f64> {
    if !(radius >= 1.0) {
        return Err(ModelError::RadiusBelowOne(radius));
    }
    Ok(lognormal_log_dr(model, k, beta_split, radius.ln(), l)?.exp())
}

/// Latent-variable model `Y ~ N(x, 1/gamma_y)`, observation
/// `z_obs ~ N(Y, 1/gamma_z)`, flat prior on `x`. Then
/// `pi_u(x) = phi(x; z_obs, 1/gamma_zy)` with `1/gamma_zy = 1/gamma_z + 1/gamma_y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalNormalModel {
    pub z_obs: f64,
    pub gamma_z: f64,
    pub gamma_y: f64,
    gamma_zy: f64,
}

impl NormalNormalModel {
    pub fn new(z_obs: f64, gamma_z: f64, gamma_y: f64) -> Result<Self> {
        for (name, g) in [("gamma_Z", gamma_z), ("gamma_Y", gamma_y)] {
            if !(g > 0.0) || !g.is_finite() {
                return Err(ModelError::InvalidParameter(format!("{name} = {g} must be positive")));
            }
        }
        if !z_obs.is_finite() {
            return Err(ModelError::InvalidParameter(format!("z = {z_obs} must be finite")));
        }
        let gamma_zy = 1.0 / (1.0 / gamma_z + 1.0 / gamma_y);
        Ok(Self { z_obs, gamma_z, gamma_y, gamma_zy })
    }

    pub fn gamma_zy(&self) -> f64 {
        self.gamma_zy
    }

    /// The exact target `N(z_obs, 1/gamma_zy)`.
    pub fn posterior(&self) -> Gaussian {
        Gaussian { mean: self.z_obs, precision: self.gamma_zy }
    }

    fn log_obs_density(&self, y: f64) -> f64 {
        Gaussian { mean: self.z_obs, precision: self.gamma_z }.log_density(y)
    }

    /// `log rho_N(x)` with `rho_N(x) = (1/N) sum phi(Y_i; z_obs, 1/gamma_z)`.
    pub fn log_rho_estimate<R: Rng + ?Sized>(&self, x: f64, n: usize, rng: &mut R) -> f64 {
        let sd = self.gamma_y.sqrt().recip();
        let logs: Vec<f64> = (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(rng);
                self.log_obs_density(x + sd * e)
            })
            .collect();
        log_sum_exp(logs.iter().copied()) - (n as f64).ln()
    }

    pub fn rho_estimate<R: Rng + ?Sized>(&self, x: f64, n: usize, rng: &mut R) -> f64 {
        self.log_rho_estimate(x, n, rng).exp()
    }

    /// One draw of `W_1(x) = rho_1(x) / pi_u(x)`.
    pub fn sample_w1<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        (self.log_rho_estimate(x, 1, rng) - self.posterior().log_density(x)).exp()
    }

    /// The `x`-dependent part of `log E[W_1(x)^p]`:
    /// `gamma_z gamma_zy p (p-1) (z - x)^2 / (2 (gamma_y + p gamma_z))`.
    pub fn log_moment_quadratic(&self, p: f64, x: f64) -> f64 {
        self.gamma_z * self.gamma_zy * p * (p - 1.0) * (self.z_obs - x).powi(2) / (2.0 * (self.gamma_y + p * self.gamma_z))
    }
}

impl MomentFunctions for NormalNormalModel {
    fn w1_moment(&self, p: f64, x: f64) -> f64 {
        let denom = self.gamma_y + p * self.gamma_z;
        if denom <= 0.0 {
            return f64::INFINITY;
        }
        let log_const = 0.5 * p * (self.gamma_z / self.gamma_zy).ln() + 0.5 * (self.gamma_y / denom).ln();
        (log_const + self.log_moment_quadratic(p, x)).exp()
    }
}

impl LatentTarget<f64> for NormalNormalModel {
    fn log_rho_estimate<R: Rng + ?Sized>(&self, x: &f64, n: usize, rng: &mut R) -> f64 {
        NormalNormalModel::log_rho_estimate(self, *x, n, rng)
    }
}

impl ExactTarget<f64> for NormalNormalModel {
    fn log_pi_u(&self, x: &f64) -> f64 {
        self.posterior().log_density(*x)
    }
}

/// Outcome of the explicit `(t, beta, k)` construction for the normal-normal
/// model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CertificateCheck {
    Feasible { threshold: f64, t: f64, beta_split: f64, k: usize },
    Infeasible { threshold: f64 },
}

impl CertificateCheck {
    pub fn is_feasible(&self) -> bool {
        matches!(self, CertificateCheck::Feasible { .. })
    }

    pub fn threshold(&self) -> f64 {
        match *self {
            CertificateCheck::Feasible { threshold, .. } | CertificateCheck::Infeasible { threshold } => threshold,
        }
    }
}

/// Requires `gamma_y > sqrt(2) gamma_z`. Picks `t` midway between
/// `gamma_z/gamma_y + gamma_z/(gamma_y + 2 gamma_z)` and 1, sets
/// `t beta = gamma_z / (gamma_y + 2 gamma_z)` and returns the smallest `k`
/// with `k > 2 gamma_z / gamma_y` and
/// `gamma_z (1 + 2/k) / (gamma_y - 2 gamma_z / k) <= t (1 - beta)`.
pub fn normal_normal_certificate_check(model: &NormalNormalModel) -> CertificateCheck {
    let (gz, gy) = (model.gamma_z, model.gamma_y);
    let threshold = gz / gy + gz / (gy + 2.0 * gz);
    if !(gy > 2f64.sqrt() * gz) || threshold >= 1.0 {
        return CertificateCheck::Infeasible { threshold };
    }
    let t = 0.5 * (threshold + 1.0);
    let beta_split = gz / ((gy + 2.0 * gz) * t);
    let tb = t * (1.0 - beta_split);
    let k_min = 2.0 * gz * (1.0 + tb) / (gy * tb - gz);
    let mut k = (k_min.ceil() as usize).max((2.0 * gz / gy).floor() as usize + 1).max(1);
    while !k_conditions_hold(gz, gy, tb, k) {
        k += 1;
    }
    CertificateCheck::Feasible { threshold, t, beta_split, k }
}

fn k_conditions_hold(gz: f64, gy: f64, tb: f64, k: usize) -> bool {
    let kf = k as f64;
    kf > 2.0 * gz / gy && gz * (1.0 + 2.0 / kf) / (gy - 2.0 * gz / kf) <= tb
}

/// Quadrature settings for [`estimate_drift_constants`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Evaluation points `x` span `[-x_max, x_max]`.
    pub x_max: f64,
    pub x_points: usize,
    /// Integration step in `z`, in units of the proposal sd.
    pub z_step: f64,
    /// Integration half-width in proposal sds.
    pub z_width: f64,
    pub delta_step: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { x_max: 10.0, x_points: 201, z_step: 0.05, z_width: 8.0, delta_step: 0.01 }
    }
}

/// Estimated drift constants `M_a V <= delta V + L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftEstimate {
    pub delta: f64,
    pub l: f64,
    pub provenance: Provenance,
}

/// `M_a V(x)` by the trapezoid rule over `z in x +- z_width sd`.
pub fn mh_drift<T, V>(target: &T, proposal: &GaussianRandomWalk, v: &V, x: f64, z_step: f64, z_width: f64) -> f64
where
    T: ExactTarget<f64>,
    V: Fn(f64) -> f64,
{
    let sd = proposal.sd();
    let h = z_step * sd;
    let m = (z_width / z_step).round() as i64;
    let log_pi_x = target.log_pi_u(&x);
    let (mut moved, mut accept) = (0.0, 0.0);
    for i in -m..=m {
        let z = x + i as f64 * h;
        let w = if i.abs() == m { 0.5 } else { 1.0 };
        let a = (target.log_pi_u(&z) - log_pi_x).min(0.0).exp();
        let aq = w * a * proposal.density(x, z);
        moved += aq * v(z);
        accept += aq;
    }
    moved * h + (1.0 - accept * h) * v(x)
}

/// Estimates `(delta, L)` for the MH chain of an exact 1-D target: evaluates
/// `M_a V` on a grid of `x`, then for each `delta` on a grid takes the
/// smallest admissible `L` and keeps the pair minimising `L / (1 - delta)`.
/// The integration is repeated at half the step; a relative change above 1%
/// anywhere is reported as [`ModelError::QuadratureTooCoarse`].
pub fn estimate_drift_constants<T, V>(
    target: &T,
    proposal: &GaussianRandomWalk,
    v: V,
    spec: &QuadratureSpec,
) -> Result<DriftEstimate>
where
    T: ExactTarget<f64>,
    V: Fn(f64) -> f64,
{
    if spec.x_points < 2 || !(spec.z_step > 0.0) || !(spec.z_width > 0.0) || !(spec.delta_step > 0.0 && spec.delta_step < 1.0) {
        return Err(ModelError::InvalidParameter("degenerate quadrature specification".into()));
    }
    let xs: Vec<f64> = (0..spec.x_points)
        .map(|i| -spec.x_max + 2.0 * spec.x_max * i as f64 / (spec.x_points - 1) as f64)
        .collect();
    let mut pv = Vec::with_capacity(xs.len());
    for &x in &xs {
        let coarse = mh_drift(target, proposal, &v, x, spec.z_step, spec.z_width);
        let fine = mh_drift(target, proposal, &v, x, spec.z_step / 2.0, spec.z_width);
        let rel = (coarse - fine).abs() / fine.abs().max(f64::MIN_POSITIVE);
        if rel > 0.01 {
            return Err(ModelError::QuadratureTooCoarse { x, rel });
        }
        pv.push(fine);
    }
    let vs: Vec<f64> = xs.iter().map(|&x| v(x)).collect();
    let mut best: Option<(f64, f64, f64)> = None;
    let steps = (1.0 / spec.delta_step).ceil() as usize;
    for j in 0..steps {
        let delta = j as f64 * spec.delta_step;
        if delta >= 1.0 {
            break;
        }
        let l = pv.iter().zip(&vs).map(|(p, v)| p - delta * v).fold(f64::NEG_INFINITY, f64::max);
        if l <= 0.0 {
            continue;
        }
        let score = l / (1.0 - delta);
        if best.is_none_or(|b| score < b.2) {
            best = Some((delta, l, score));
        }
    }
    let (delta, l, _) = best.ok_or_else(|| ModelError::InvalidParameter("no admissible (delta, L) on the grid".into()))?;
    Ok(DriftEstimate { delta, l, provenance: Provenance::Estimate })
}
