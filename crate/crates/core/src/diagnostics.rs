//! Gaussian kernel density estimates on uniform grids and grid-based L1
//! distances between densities.

use std::f64::consts::PI;
use std::io::Write;

use thiserror::Error;

/// Default comparison window and resolution.
pub const DEFAULT_GRID: GridSpec = GridSpec { lo: -6.0, hi: 6.0, points: 2401 };

/// Minimum sample size accepted by [`kde`].
pub const MIN_SAMPLES: usize = 100;

/// Kernel truncation radius in bandwidths for the binned estimator.
const KERNEL_RADIUS: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least {MIN_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("samples have zero variance")]
    Degenerate,
    #[error("grids differ: {0:?} vs {1:?}")]
    GridMismatch(GridSpec, GridSpec),
    #[error("invalid grid or bandwidth: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, DiagnosticsError>;

/// `points` equally spaced nodes spanning `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() || points < 2 {
            return Err(DiagnosticsError::InvalidParameter(format!("grid [{lo}, {hi}] with {points} points")));
        }
        Ok(Self { lo, hi, points })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lo + (self.hi - self.lo) * i as f64 / (self.points - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.node(i)).collect()
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self { lo: self.lo + c, hi: self.hi + c, points: self.points }
    }

    /// Same window, `2 (points - 1) + 1` nodes.
    pub fn refined(&self) -> Self {
        Self { points: 2 * (self.points - 1) + 1, ..*self }
    }
}

/// Density values on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub spec: GridSpec,
    pub ys: Vec<f64>,
}

impl DensityGrid {
    pub fn from_fn<F: Fn(f64) -> f64>(spec: GridSpec, f: F) -> Self {
        Self { ys: spec.nodes().into_iter().map(f).collect(), spec }
    }

    pub fn xs(&self) -> Vec<f64> {
        self.spec.nodes()
    }

    /// Trapezoid integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.ys, self.spec.step())
    }

    /// Number of strict interior local maxima.
    pub fn local_maxima(&self) -> usize {
        self.ys.windows(3).filter(|w| w[1] > w[0] && w[1] > w[2]).count()
    }

    /// Two-column CSV `x,density`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,density")?;
        for (x, y) in self.xs().iter().zip(&self.ys) {
            writeln!(w, "{x},{y}")?;
        }
        Ok(())
    }
}

fn trapezoid(ys: &[f64], h: f64) -> f64 {
    match ys {
        [] | [_] => 0.0,
        [first, .., last] => h * (ys.iter().sum::<f64>() - 0.5 * (first + last)),
    }
}

/// Normal density `N(mean, var)` sampled on `spec`.
pub fn normal_density_grid(spec: GridSpec, mean: f64, var: f64) -> DensityGrid {
    let c = (2.0 * PI * var).sqrt().recip();
    DensityGrid::from_fn(spec, |x| c * (-(x - mean).powi(2) / (2.0 * var)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// `1.06 sigma_hat n^{-1/5}`.
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum KdeMethod {
    /// Linear binning onto the grid followed by a discrete convolution with
    /// the kernel truncated at 8 bandwidths. `O(n + G h / dx)`.
    #[default]
    Binned,
    /// Direct kernel sum at every node. `O(n G)`.
    Exact,
}

fn mean_sd(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let (_, sd) = mean_sd(samples);
    1.06 * sd * (samples.len() as f64).powf(-0.2)
}

/// Gaussian kernel density estimate of `samples` on `spec`.
pub fn kde(samples: &[f64], spec: GridSpec, bandwidth: Bandwidth, method: KdeMethod) -> Result<DensityGrid> {
    if samples.len() < MIN_SAMPLES {
        return Err(DiagnosticsError::TooFewSamples(samples.len()));
    }
    let (_, sd) = mean_sd(samples);
    if !(sd > 0.0) {
        return Err(DiagnosticsError::Degenerate);
    }
    let h = match bandwidth {
        Bandwidth::Silverman => silverman_bandwidth(samples),
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => return Err(DiagnosticsError::InvalidParameter(format!("bandwidth {h}"))),
    };
    let ys = match method {
        KdeMethod::Exact => kde_exact(samples, spec, h),
        KdeMethod::Binned => kde_binned(samples, spec, h),
    };
    Ok(DensityGrid { spec, ys })
}

fn kde_exact(samples: &[f64], spec: GridSpec, h: f64) -> Vec<f64> {
    let c = ((2.0 * PI).sqrt() * h * samples.len() as f64).recip();
    spec.nodes()
        .into_iter()
        .map(|x| c * samples.iter().map(|s| (-0.5 * ((x - s) / h).powi(2)).exp()).sum::<f64>())
        .collect()
}

fn kde_binned(samples: &[f64], spec: GridSpec, h: f64) -> Vec<f64> {
    let dx = spec.step();
    let pad = (KERNEL_RADIUS * h / dx).ceil() as usize;
    let m = spec.points + 2 * pad;
    let lo = spec.lo - pad as f64 * dx;
    let mut bins = vec![0.0; m];
    let w = 1.0 / samples.len() as f64;
    for &s in samples {
        let t = (s - lo) / dx;
        if !(t >= 0.0) || t > (m - 1) as f64 {
            continue;
        }
        let i = (t.floor() as usize).min(m - 2);
        let frac = t - i as f64;
        bins[i] += w * (1.0 - frac);
        bins[i + 1] += w * frac;
    }
    let c = ((2.0 * PI).sqrt() * h).recip();
    let kernel: Vec<f64> = (0..=pad).map(|j| c * (-0.5 * (j as f64 * dx / h).powi(2)).exp()).collect();
    (0..spec.points)
        .map(|i| {
            let centre = i + pad;
            let mut acc = kernel[0] * bins[centre];
            for (j, k) in kernel.iter().enumerate().skip(1) {
                acc += k * (bins[centre - j] + bins[centre + j]);
            }
            acc
        })
        .collect()
}

/// Trapezoid integral of `|f - g|`: the L1 (sup over `|phi| <= 1`) distance.
pub fn grid_tv(f: &DensityGrid, g: &DensityGrid) -> Result<f64> {
    if f.spec != g.spec || f.ys.len() != g.ys.len() {
        return Err(DiagnosticsError::GridMismatch(f.spec, g.spec));
    }
    let diff: Vec<f64> = f.ys.iter().zip(&g.ys).map(|(a, b)| (a - b).abs()).collect();
    Ok(trapezoid(&diff, f.spec.step()))
}

/// KDE of `samples` compared with `N(mean, var)` on `spec`.
pub fn grid_tv_to_normal(samples: &[f64], spec: GridSpec, mean: f64, var: f64) -> Result<(DensityGrid, f64)> {
    let est = kde(samples, spec, Bandwidth::Silverman, KdeMethod::Binned)?;
    let tv = grid_tv(&est, &normal_density_grid(spec, mean, var))?;
    Ok((est, tv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_draws(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    // Phi(b) - Phi(a) by composite Simpson
    fn std_normal_cdf_diff(a: f64, b: f64) -> f64 {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let f = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        (0..n).map(|i| {
            let (l, r) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            h / 6.0 * (f(l) + 4.0 * f(0.5 * (l + r)) + f(r))
        }).sum()
    }

    #[test]
    fn kde_of_normal_draws_is_close_to_phi() {
        let draws = normal_draws(1_000_000, 1);
        let (est, tv) = grid_tv_to_normal(&draws, DEFAULT_GRID, 0.0, 1.0).unwrap();
        assert!(tv <= 0.02, "{tv}");
        assert!((0.95..=1.05).contains(&est.integral()));
    }

    #[test]
    fn binned_matches_exact() {
        let draws = normal_draws(2_000, 2);
        let spec = GridSpec::new(-5.0, 5.0, 1001).unwrap();
        let a = kde(&draws, spec, Bandwidth::Silverman, KdeMethod::Binned).unwrap();
        let b = kde(&draws, spec, Bandwidth::Silverman, KdeMethod::Exact).unwrap();
        assert!(grid_tv(&a, &b).unwrap() < 1e-3);
    }

    #[test]
    fn translation_equivariance() {
        let draws = normal_draws(5_000, 3);
        let c = 1.75;
        let shifted: Vec<f64> = draws.iter().map(|x| x + c).collect();
        let spec = GridSpec::new(-4.0, 4.0, 801).unwrap();
        for method in [KdeMethod::Binned, KdeMethod::Exact] {
            let a = kde(&draws, spec, Bandwidth::Fixed(0.2), method).unwrap();
            let b = kde(&shifted, spec.shifted(c), Bandwidth::Fixed(0.2), method).unwrap();
            for (x, y) in a.ys.iter().zip(&b.ys) {
                assert!((x - y).abs() < 1e-9, "{method:?}");
            }
        }
    }

    #[test]
    fn smaller_bandwidth_never_fewer_modes() {
        let draws = normal_draws(300, 4);
        let spec = GridSpec::new(-4.0, 4.0, 2001).unwrap();
        let mut h = 1.0;
        let mut prev = kde(&draws, spec, Bandwidth::Fixed(h), KdeMethod::Exact).unwrap().local_maxima();
        for _ in 0..5 {
            h /= 2.0;
            let modes = kde(&draws, spec, Bandwidth::Fixed(h), KdeMethod::Exact).unwrap().local_maxima();
            assert!(modes >= prev, "h = {h}: {modes} < {prev}");
            prev = modes;
        }
    }

    #[test]
    fn kde_input_errors() {
        let spec = DEFAULT_GRID;
        assert_eq!(kde(&[0.0; 50], spec, Bandwidth::Silverman, KdeMethod::Binned), Err(DiagnosticsError::TooFewSamples(50)));
        assert_eq!(kde(&[1.0; 200], spec, Bandwidth::Silverman, KdeMethod::Binned), Err(DiagnosticsError::Degenerate));
        let draws = normal_draws(200, 5);
        assert!(kde(&draws, spec, Bandwidth::Fixed(0.0), KdeMethod::Binned).is_err());
        assert!(GridSpec::new(1.0, 0.0, 10).is_err());
    }

    #[test]
    fn grid_tv_examples() {
        let spec = DEFAULT_GRID;
        let phi = normal_density_grid(spec, 0.0, 1.0);
        assert_eq!(grid_tv(&phi, &phi).unwrap(), 0.0);
        let left = normal_density_grid(spec, -3.0, 0.04);
        let right = normal_density_grid(spec, 3.0, 0.04);
        assert!((grid_tv(&left, &right).unwrap() - 2.0).abs() < 1e-3);
        let moved = normal_density_grid(spec, 0.1, 1.0);
        let exact = 2.0 * std_normal_cdf_diff(-0.05, 0.05);
        assert!((grid_tv(&phi, &moved).unwrap() - exact).abs() < 1e-3);
        let other = normal_density_grid(GridSpec::new(-5.0, 5.0, 2401).unwrap(), 0.0, 1.0);
        assert!(matches!(grid_tv(&phi, &other), Err(DiagnosticsError::GridMismatch(..))));
    }

    #[test]
    fn refinement_is_stable() {
        let spec = DEFAULT_GRID;
        for (m, v) in [(0.1, 1.0), (0.5, 1.5), (-0.3, 0.7)] {
            let coarse = grid_tv(&normal_density_grid(spec, 0.0, 1.0), &normal_density_grid(spec, m, v)).unwrap();
            let fine_spec = spec.refined();
            let fine = grid_tv(&normal_density_grid(fine_spec, 0.0, 1.0), &normal_density_grid(fine_spec, m, v)).unwrap();
            assert!((coarse - fine).abs() < 1e-3);
        }
    }

    #[test]
    fn csv_layout() {
        let g = normal_density_grid(GridSpec::new(0.0, 1.0, 3).unwrap(), 0.0, 1.0);
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("x,density\n0,"));
    }

    fn density_strategy() -> impl Strategy<Value = DensityGrid> {
        prop::collection::vec(0.0..3.0f64, 64).prop_map(|ys| DensityGrid { spec: GridSpec { lo: -1.0, hi: 1.0, points: 64 }, ys })
    }

    proptest! {
        #[test]
        fn grid_tv_is_a_metric(f in density_strategy(), g in density_strategy(), h in density_strategy()) {
            let fg = grid_tv(&f, &g).unwrap();
            prop_assert_eq!(fg, grid_tv(&g, &f).unwrap());
            prop_assert!(fg >= 0.0);
            prop_assert!(fg <= grid_tv(&f, &h).unwrap() + grid_tv(&h, &g).unwrap() + 1e-12);
        }
    }
}
