//! Exact linear algebra for finite Markov chains.
//!
//! Everything here is a brute-force oracle: n-step laws are computed by
//! iterated vector-matrix products, norms by direct sums, and the
//! ergodicity coefficient by enumerating all state pairs.
//!
//! Total variation follows the `sup_{|f| <= 1} |mu(f) - nu(f)|` convention,
//! i.e. the plain L1 distance between mass functions (twice the
//! "probabilist's" TV).

use std::fmt;
use std::io::{BufRead, Write};

use thiserror::Error;

/// Tolerance on row sums and probability-vector sums.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Iteration cap for [`stationary_distribution`].
pub const STATIONARY_MAX_ITER: usize = 1_000_000;

/// Convergence tolerance for [`stationary_distribution`].
pub const STATIONARY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkovError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("transition matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("row {row} sums to {sum}, not 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("entry ({row}, {col}) = {value} outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    #[error("probability vector invalid: {0}")]
    InvalidProbability(String),
    #[error("weight function value {value} at state {state} is below 1")]
    WeightBelowOne { state: usize, value: f64 },
    #[error("chain has no states")]
    Empty,
    #[error("restriction set is empty")]
    EmptySubset,
    #[error("state index {0} out of range")]
    StateOutOfRange(usize),
    #[error("power iteration did not converge after {0} iterations (periodic chain?)")]
    NoConvergence(usize),
    #[error("stationary distribution is not unique (rows of P^n converge to different limits)")]
    NotUnique,
    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, MarkovError>;

/// Row-stochastic transition matrix over a finite, labelled state list.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChain {
    labels: Vec<String>,
    // row-major, size len * len
    matrix: Vec<f64>,
}

impl FiniteChain {
    pub fn new(labels: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(MarkovError::Empty);
        }
        if labels.len() != n {
            return Err(MarkovError::DimensionMismatch { expected: n, found: labels.len() });
        }
        let mut matrix = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(MarkovError::NotSquare { row: i, len: row.len(), expected: n });
            }
            for (j, &p) in row.iter().enumerate() {
                if !(-STOCHASTIC_TOL..=1.0 + STOCHASTIC_TOL).contains(&p) {
                    return Err(MarkovError::EntryOutOfRange { row: i, col: j, value: p });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(MarkovError::NotStochastic { row: i, sum });
            }
            // rounding slack only
            matrix.extend(row.iter().map(|p| p.clamp(0.0, 1.0)));
        }
        Ok(Self { labels, matrix })
    }

    /// Chain with labels `0..n`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(labels, rows)
    }

    pub fn identity(n: usize) -> Self {
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            matrix[i * n + i] = 1.0;
        }
        Self { labels: (0..n).map(|i| i.to_string()).collect(), matrix }
    }

    // Products of stochastic matrices are stochastic up to rounding, so
    // derived chains skip the constructor checks.
    fn from_raw(labels: Vec<String>, matrix: Vec<f64>) -> Self {
        debug_assert_eq!(labels.len() * labels.len(), matrix.len());
        Self { labels, matrix }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let n = self.len();
        &self.matrix[x * n..(x + 1) * n]
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.matrix[x * self.len() + y]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.matrix.chunks_exact(self.len())
    }

    /// Matrix product `self * other` (first step with `self`, then `other`).
    pub fn compose(&self, other: &FiniteChain) -> Result<FiniteChain> {
        let n = self.len();
        if other.len() != n {
            return Err(MarkovError::DimensionMismatch { expected: n, found: other.len() });
        }
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let row = self.row(i);
            let dst = &mut out[i * n..(i + 1) * n];
            for (k, &pik) in row.iter().enumerate() {
                if pik == 0.0 {
                    continue;
                }
                for (d, &pkj) in dst.iter_mut().zip(other.row(k)) {
                    *d += pik * pkj;
                }
            }
        }
        Ok(Self::from_raw(self.labels.clone(), out))
    }

    /// `P^n` by repeated multiplication.
    pub fn power(&self, n: usize) -> FiniteChain {
        let mut acc = FiniteChain::from_raw(self.labels.clone(), FiniteChain::identity(self.len()).matrix);
        for _ in 0..n {
            acc = acc.compose(self).expect("same dimension");
        }
        acc
    }

    /// `(Pf)(x) = sum_y P(x, y) f(y)`.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.len() {
            return Err(MarkovError::DimensionMismatch { expected: self.len(), found: f.len() });
        }
        Ok(self.rows().map(|row| row.iter().zip(f).map(|(p, v)| p * v).sum()).collect())
    }

    /// Reads a chain from CSV: a header row of state labels followed by the
    /// square matrix, row-major.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader
            .lines()
            .map(|l| l.map_err(|e| MarkovError::Csv(e.to_string())))
            .filter(|l| l.as_ref().map(|s| !s.trim().is_empty() && !s.starts_with('#')).unwrap_or(true));
        let header = lines.next().ok_or_else(|| MarkovError::Csv("missing header row".into()))??;
        let labels: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::with_capacity(labels.len());
        for (i, line) in lines.enumerate() {
            let line = line?;
            let row = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| MarkovError::Csv(format!("row {i}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::new(labels, rows)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.labels.join(","))?;
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(|p| format!("{p:?}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

impl fmt::Display for FiniteChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(|p| format!("{p:.6}")).collect();
            writeln!(f, "[{}]", cells.join(", "))?;
        }
        Ok(())
    }
}

/// Distribution over the states of a [`FiniteChain`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(MarkovError::Empty);
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
            return Err(MarkovError::InvalidProbability(format!("entry {i} = {w} is negative")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(MarkovError::InvalidProbability(format!("entries sum to {sum}")));
        }
        Ok(Self(weights))
    }

    pub fn point_mass(n: usize, x: usize) -> Self {
        let mut w = vec![0.0; n];
        w[x] = 1.0;
        Self(w)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub(crate) fn from_raw(weights: Vec<f64>) -> Self {
        Self(weights)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `mu(f)`.
    pub fn expectation(&self, f: &[f64]) -> Result<f64> {
        check_dim(self.len(), f.len())?;
        Ok(self.0.iter().zip(f).map(|(p, v)| p * v).sum())
    }

    /// One step of the chain: `mu P`.
    pub fn step(&self, chain: &FiniteChain) -> Result<ProbabilityVector> {
        check_dim(chain.len(), self.len())?;
        let n = chain.len();
        let mut out = vec![0.0; n];
        for (&m, row) in self.0.iter().zip(chain.rows()) {
            if m == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(row) {
                *o += m * p;
            }
        }
        Ok(Self(out))
    }
}

impl AsRef<[f64]> for ProbabilityVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Weight (Lyapunov) function with values `>= 1` on a finite state space.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFunction(Vec<f64>);

impl WeightFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(MarkovError::Empty);
        }
        if let Some((state, &value)) = values.iter().enumerate().find(|(_, v)| !(**v >= 1.0)) {
            return Err(MarkovError::WeightBelowOne { state, value });
        }
        Ok(Self(values))
    }

    pub fn constant(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// `B_R = {x : V(x) <= R}` as sorted state indices.
    pub fn sublevel_set(&self, radius: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.0[i] <= radius).collect()
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(MarkovError::DimensionMismatch { expected, found })
    } else {
        Ok(())
    }
}

pub(crate) fn weighted_l1(a: &[f64], b: &[f64], weight: Option<&[f64]>) -> f64 {
    match weight {
        None => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        Some(w) => a.iter().zip(b).zip(w).map(|((x, y), v)| v * (x - y).abs()).sum(),
    }
}

/// `p0 P^n` by `n` vector-matrix products.
pub fn n_step_distribution(chain: &FiniteChain, p0: &ProbabilityVector, n: usize) -> Result<ProbabilityVector> {
    check_dim(chain.len(), p0.len())?;
    let mut p = p0.clone();
    for _ in 0..n {
        p = p.step(chain)?;
    }
    Ok(p)
}

/// `sup_{|f| <= 1} |mu(f) - nu(f)| = sum_i |mu_i - nu_i|`.
pub fn tv_distance(mu: &ProbabilityVector, nu: &ProbabilityVector) -> Result<f64> {
    check_dim(mu.len(), nu.len())?;
    Ok(weighted_l1(mu.as_slice(), nu.as_slice(), None))
}

/// `sup_{|f| <= V} |mu(f) - nu(f)| = sum_i V_i |mu_i - nu_i|`.
pub fn v_norm_distance(mu: &ProbabilityVector, nu: &ProbabilityVector, v: &WeightFunction) -> Result<f64> {
    check_dim(mu.len(), nu.len())?;
    check_dim(mu.len(), v.len())?;
    Ok(weighted_l1(mu.as_slice(), nu.as_slice(), Some(v.values())))
}

/// Ergodicity coefficient
/// `tau_V(P) = max_{x,y} ||P(x,.) - P(y,.)||_V / (V(x) + V(y))`.
pub fn ergodicity_coefficient(chain: &FiniteChain, v: &WeightFunction) -> Result<f64> {
    check_dim(chain.len(), v.len())?;
    let w = v.values();
    let n = chain.len();
    let mut best = 0.0_f64;
    for x in 0..n {
        for y in (x + 1)..n {
            let d = weighted_l1(chain.row(x), chain.row(y), Some(w)) / (w[x] + w[y]);
            best = best.max(d);
        }
    }
    Ok(best)
}

/// Stationary law by power iteration on the full matrix.
///
/// All rows of `P^n` must converge to a common limit; distinct limits mean
/// the stationary distribution is not unique, and no convergence within
/// [`STATIONARY_MAX_ITER`] steps usually means periodicity.
pub fn stationary_distribution(chain: &FiniteChain) -> Result<ProbabilityVector> {
    let n = chain.len();
    let mut current = FiniteChain::identity(n);
    current.labels = chain.labels.clone();
    for _ in 0..STATIONARY_MAX_ITER {
        let next = current.compose(chain)?;
        let change = next
            .matrix
            .iter()
            .zip(&current.matrix)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        current = next;
        if change < STATIONARY_TOL {
            let first = current.row(0);
            for x in 1..n {
                if weighted_l1(first, current.row(x), None) > 1e-8 {
                    return Err(MarkovError::NotUnique);
                }
            }
            let pi: Vec<f64> = (0..n)
                .map(|j| (0..n).map(|i| current.get(i, j)).sum::<f64>() / n as f64)
                .collect();
            return Ok(ProbabilityVector::from_raw(pi));
        }
    }
    Err(MarkovError::NoConvergence(STATIONARY_MAX_ITER))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovReport {
    pub holds: bool,
    /// `max_x [(PV)(x) - delta V(x) - L]`; nonpositive iff the drift holds.
    pub max_slack: f64,
    pub worst_state: usize,
}

/// Checks the drift condition `PV(x) <= delta V(x) + L` at every state.
///
/// A relative rounding allowance of `1e-12` is granted so that conditions
/// holding with equality in exact arithmetic are accepted.
pub fn check_lyapunov(chain: &FiniteChain, v: &WeightFunction, delta: f64, l: f64) -> Result<LyapunovReport> {
    let pv = chain.apply(v.values())?;
    let mut max_slack = f64::NEG_INFINITY;
    let mut worst_state = 0;
    let mut holds = true;
    for (x, (&pvx, &vx)) in pv.iter().zip(v.values()).enumerate() {
        let rhs = delta * vx + l;
        let slack = pvx - rhs;
        if slack > 1e-12 * rhs.abs().max(1.0) {
            holds = false;
        }
        if slack > max_slack {
            max_slack = slack;
            worst_state = x;
        }
    }
    Ok(LyapunovReport { holds, max_slack, worst_state })
}

/// Restriction `P_R(x, A) = P(x, A ∩ B) + 1_A(x) P(x, B^c)`: moves that would
/// leave `B` are replaced by holding at the current state.
pub fn restrict_kernel(chain: &FiniteChain, subset: &[usize]) -> Result<FiniteChain> {
    if subset.is_empty() {
        return Err(MarkovError::EmptySubset);
    }
    let n = chain.len();
    let mut inside = vec![false; n];
    for &s in subset {
        if s >= n {
            return Err(MarkovError::StateOutOfRange(s));
        }
        inside[s] = true;
    }
    let mut matrix = vec![0.0; n * n];
    for x in 0..n {
        let row = chain.row(x);
        let mut escaped = 0.0;
        for y in 0..n {
            if inside[y] {
                matrix[x * n + y] += row[y];
            } else {
                escaped += row[y];
            }
        }
        matrix[x * n + x] += escaped;
    }
    Ok(FiniteChain::from_raw(chain.labels.clone(), matrix))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_state_p() -> FiniteChain {
        FiniteChain::from_rows(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap()
    }

    fn two_state_p_tilde() -> FiniteChain {
        FiniteChain::from_rows(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap()
    }

    fn random_chain(n: usize, rng: &mut impl Rng) -> FiniteChain {
        let rows = (0..n)
            .map(|_| {
                let r: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
                let s: f64 = r.iter().sum();
                r.into_iter().map(|p| p / s).collect()
            })
            .collect();
        FiniteChain::from_rows(rows).unwrap()
    }

    fn random_pv(n: usize, rng: &mut impl Rng) -> ProbabilityVector {
        let r: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let s: f64 = r.iter().sum();
        ProbabilityVector::new(r.into_iter().map(|p| p / s).collect()).unwrap()
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = FiniteChain::from_rows(vec![vec![0.5, 0.4], vec![0.5, 0.5]]).unwrap_err();
        assert!(matches!(err, MarkovError::NotStochastic { row: 0, .. }));
        let err = FiniteChain::from_rows(vec![vec![1.5, -0.5], vec![0.5, 0.5]]).unwrap_err();
        assert!(matches!(err, MarkovError::EntryOutOfRange { .. }));
        assert!(WeightFunction::new(vec![1.0, 0.5]).is_err());
    }

    #[test]
    fn two_state_n_step() {
        let p0 = ProbabilityVector::new(vec![0.0, 1.0]).unwrap();
        let p2 = n_step_distribution(&two_state_p_tilde(), &p0, 2).unwrap();
        assert!((p2.as_slice()[0] - 0.75).abs() < 1e-15);
        assert!((p2.as_slice()[1] - 0.25).abs() < 1e-15);
        let same = n_step_distribution(&two_state_p_tilde(), &p0, 0).unwrap();
        assert_eq!(same, p0);
    }

    #[test]
    fn n_step_matches_dense_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let chain = random_chain(5, &mut rng);
        let p0 = random_pv(5, &mut rng);
        let by_vector = n_step_distribution(&chain, &p0, 7).unwrap();
        // oracle: explicit 7-fold matrix product, then p0 * P^7
        let mut m = chain.clone();
        for _ in 1..7 {
            m = m.compose(&chain).unwrap();
        }
        for j in 0..5 {
            let expect: f64 = (0..5).map(|i| p0.as_slice()[i] * m.get(i, j)).sum();
            assert!((by_vector.as_slice()[j] - expect).abs() < 1e-14);
        }
        assert!(n_step_distribution(&chain, &ProbabilityVector::uniform(3), 1).is_err());
    }

    #[test]
    fn tv_conventions() {
        let p0 = ProbabilityVector::new(vec![0.0, 1.0]).unwrap();
        let pn = n_step_distribution(&two_state_p(), &p0, 3).unwrap();
        let qn = n_step_distribution(&two_state_p_tilde(), &p0, 3).unwrap();
        assert!((tv_distance(&pn, &qn).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(tv_distance(&pn, &pn).unwrap(), 0.0);
        let a = ProbabilityVector::point_mass(2, 0);
        let b = ProbabilityVector::point_mass(2, 1);
        assert_eq!(tv_distance(&a, &b).unwrap(), 2.0);
        assert!(tv_distance(&a, &ProbabilityVector::uniform(3)).is_err());
    }

    #[test]
    fn v_norm_examples() {
        let a = ProbabilityVector::point_mass(2, 0);
        let b = ProbabilityVector::point_mass(2, 1);
        let v = WeightFunction::new(vec![1.0, 1.0 + 3.5]).unwrap();
        assert!((v_norm_distance(&a, &b, &v).unwrap() - 5.5).abs() < 1e-15);
        let one = WeightFunction::constant(2);
        assert_eq!(v_norm_distance(&a, &b, &one).unwrap(), tv_distance(&a, &b).unwrap());
    }

    #[test]
    fn v_norm_matches_sign_pattern_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mu = random_pv(5, &mut rng);
            let nu = random_pv(5, &mut rng);
            let v = WeightFunction::new((0..5).map(|_| 1.0 + 4.0 * rng.random::<f64>()).collect()).unwrap();
            let mut brute = 0.0_f64;
            for mask in 0u32..32 {
                let f: Vec<f64> = (0..5)
                    .map(|i| if mask >> i & 1 == 1 { v.values()[i] } else { -v.values()[i] })
                    .collect();
                let d = mu.expectation(&f).unwrap() - nu.expectation(&f).unwrap();
                brute = brute.max(d.abs());
            }
            assert!((v_norm_distance(&mu, &nu, &v).unwrap() - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn ergodicity_coefficient_cases() {
        let same_rows = FiniteChain::from_rows(vec![vec![0.2, 0.8]; 2]).unwrap();
        assert_eq!(ergodicity_coefficient(&same_rows, &WeightFunction::constant(2)).unwrap(), 0.0);
        assert_eq!(ergodicity_coefficient(&two_state_p(), &WeightFunction::constant(2)).unwrap(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let chain = random_chain(4, &mut rng);
        let v = WeightFunction::new(vec![1.0, 2.0, 3.0, 5.0]).unwrap();
        let mut pairs = Vec::new();
        for x in 0..4 {
            for y in 0..4 {
                if x < y {
                    let d: f64 = (0..4).map(|j| v.values()[j] * (chain.get(x, j) - chain.get(y, j)).abs()).sum();
                    pairs.push(d / (v.values()[x] + v.values()[y]));
                }
            }
        }
        assert_eq!(pairs.len(), 6);
        let expect = pairs.into_iter().fold(0.0, f64::max);
        assert!((ergodicity_coefficient(&chain, &v).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn stationary_cases() {
        let pi = stationary_distribution(&two_state_p()).unwrap();
        assert_eq!(pi.as_slice(), &[1.0, 0.0]);
        assert_eq!(stationary_distribution(&FiniteChain::identity(3)), Err(MarkovError::NotUnique));
        let flip = FiniteChain::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(stationary_distribution(&flip), Err(MarkovError::NoConvergence(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let chain = random_chain(5, &mut rng);
        let pi = stationary_distribution(&chain).unwrap();
        let next = pi.step(&chain).unwrap();
        assert!(tv_distance(&pi, &next).unwrap() < 1e-10);
        // independent route: iterate a point mass
        let mut p = ProbabilityVector::point_mass(5, 2);
        for _ in 0..10_000 {
            p = p.step(&chain).unwrap();
        }
        assert!(tv_distance(&pi, &p).unwrap() < 1e-10);
    }

    #[test]
    fn lyapunov_checks() {
        let w = WeightFunction::new(vec![1.0, 64.0]).unwrap();
        assert!(check_lyapunov(&two_state_p_tilde(), &w, 0.5, 0.5).unwrap().holds);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let chain = random_chain(4, &mut rng);
        let v = WeightFunction::new(vec![1.0, 3.0, 2.0, 7.0]).unwrap();
        let pv = chain.apply(v.values()).unwrap();
        let max_pv = pv.iter().cloned().fold(0.0, f64::max);
        assert!(check_lyapunov(&chain, &v, 0.0, max_pv).unwrap().holds);
        let report = check_lyapunov(&chain, &v, 0.0, 0.5 * max_pv).unwrap();
        assert!(!report.holds);
        assert!((report.max_slack - 0.5 * max_pv).abs() < 1e-12);
    }

    #[test]
    fn restriction_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let chain = random_chain(5, &mut rng);
        assert_eq!(restrict_kernel(&chain, &[0, 1, 2, 3, 4]).unwrap(), chain);
        assert_eq!(restrict_kernel(&chain, &[]), Err(MarkovError::EmptySubset));

        let two = FiniteChain::from_rows(vec![vec![0.3, 0.7], vec![0.4, 0.6]]).unwrap();
        let r = restrict_kernel(&two, &[0]).unwrap();
        assert_eq!(r.row(0), &[1.0, 0.0]);
        assert_eq!(r.row(1), &[0.4, 0.6]);

        let subset = [1, 3];
        let r = restrict_kernel(&chain, &subset).unwrap();
        for x in 0..5 {
            assert!((r.row(x).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for &x in &subset {
            for y in 0..5 {
                if y != x && !subset.contains(&y) {
                    assert_eq!(r.get(x, y), 0.0);
                }
            }
        }
        assert_eq!(restrict_kernel(&r, &subset).unwrap(), r);
    }

    #[test]
    fn csv_round_trip() {
        let chain = two_state_p_tilde();
        let mut buf = Vec::new();
        chain.write_csv(&mut buf).unwrap();
        let back = FiniteChain::read_csv(&buf[..]).unwrap();
        assert_eq!(back, chain);
        assert!(FiniteChain::read_csv("a,b\n0.5,0.5\n".as_bytes()).is_err());
    }
}
