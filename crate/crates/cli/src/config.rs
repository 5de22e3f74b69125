//! Flat TOML experiment configuration. Every key is optional; command-line
//! flags override file values.
//!
//! | key | meaning |
//! |-----|---------|
//! | `seed` | master RNG seed (required by stochastic commands) |
//! | `out` | output directory |
//! | `steps` | chain length |
//! | `particles` | estimator sample size `N` |
//! | `replicates` | number of seeds `seed, seed+1, ..` run in parallel |
//! | `restricted` | use the restricted sampler |
//! | `radius_interval` | `[a, b]` restriction interval |
//! | `q` | log-normal exponent in `sigma(x)^2 = |x|^q` |
//! | `proposal_sd` | random-walk proposal standard deviation |
//! | `x0` | initial state |
//! | `z`, `gamma_z`, `gamma_y` | normal-normal model parameters |
//! | `seeds`, `states`, `horizon` | random finite-chain validation |
//! | `draws` | Monte Carlo sample size for moment checks |
//! | `grid_lo`, `grid_hi`, `grid_points` | KDE comparison grid |

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub steps: Option<usize>,
    pub particles: Option<usize>,
    pub replicates: Option<u64>,
    pub restricted: Option<bool>,
    pub radius_interval: Option<[f64; 2]>,
    pub q: Option<f64>,
    pub proposal_sd: Option<f64>,
    pub x0: Option<f64>,
    pub z: Option<f64>,
    pub gamma_z: Option<f64>,
    pub gamma_y: Option<f64>,
    pub seeds: Option<u64>,
    pub states: Option<usize>,
    pub horizon: Option<usize>,
    pub draws: Option<usize>,
    pub grid_lo: Option<f64>,
    pub grid_hi: Option<f64>,
    pub grid_points: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }
}

/// Parses `a,b` with `a < b`.
pub fn parse_interval(s: &str) -> Result<[f64; 2]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        bail!("expected `a,b`, got `{s}`");
    }
    let a: f64 = parts[0].parse().with_context(|| format!("bad number `{}`", parts[0]))?;
    let b: f64 = parts[1].parse().with_context(|| format!("bad number `{}`", parts[1]))?;
    if !(a < b) {
        bail!("interval [{a}, {b}] is empty");
    }
    Ok([a, b])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let cfg = FileConfig::parse("seed = 7\nq = 2.2\nradius_interval = [-10.0, 10.0]\nrestricted = true\n").unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.q, Some(2.2));
        assert_eq!(cfg.radius_interval, Some([-10.0, 10.0]));
        assert_eq!(cfg.restricted, Some(true));
        assert!(FileConfig::parse("sead = 1").is_err());
    }

    #[test]
    fn interval_parsing() {
        assert_eq!(parse_interval("-10, 10").unwrap(), [-10.0, 10.0]);
        assert!(parse_interval("3,1").is_err());
        assert!(parse_interval("1").is_err());
    }
}
