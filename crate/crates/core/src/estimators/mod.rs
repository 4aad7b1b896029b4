//! Private estimators of the assortativity factor `r_u`.
//!
//! All three protocols release `q̂ = X/M - Y/M²`, where `X` is an unbiased
//! estimate of `Σ_edges d_i d_j` and `Y` an unbiased estimate of
//! `(½ Σ_i d_i²)²`. They differ in what users see and send:
//!
//! * [`local_ru`]: one round; randomized response on the lower-triangle
//!   adjacency bits plus Laplace-noised degrees.
//! * [`shuffle_ru`]: two rounds; noisy degrees are broadcast back, users send
//!   per-row partial sums through a shuffler, and the local budget is
//!   amplified.
//! * [`decentral_ru`]: users see their 2-hop neighbourhood and send a noisy
//!   neighbor-degree sum whose noise is scaled to a private bound on the local
//!   sensitivity.
//!
//! Each protocol is simulated with the roles kept apart: user code reads only
//! the user's own row (or 2-hop view), the collector only the reports.

mod decentral;
mod local;
mod shuffled;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::TrialRng;
use crate::shuffle::{AmplificationBound, ClosedFormBound, TabulatedBound};

pub use decentral::decentral_ru;
pub use local::local_ru;
pub use shuffled::{shuffle_ru, shuffle_ru_with_shuffler, uniform_shuffle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Local,
    Shuffle,
    Decentral,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Local, Algorithm::Shuffle, Algorithm::Decentral];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Local => "local",
            Algorithm::Shuffle => "shuffle",
            Algorithm::Decentral => "decentral",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(Algorithm::Local),
            "shuffle" => Ok(Algorithm::Shuffle),
            "decentral" => Ok(Algorithm::Decentral),
            other => Err(Error::InvalidParameter(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// How the total budget is divided.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// `ε₁` for the first randomizer, `ε₂` for the second (local, decentral).
    Pair { eps1: f64, eps2: f64 },
    /// Fraction `α` of the local budget `ε₀` goes to degrees (shuffle).
    Shuffle { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub epsilon: f64,
    pub split: Split,
    pub delta: f64,
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&delta) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("delta must lie in [0, 1], got {delta}")))
    }
}

impl BudgetSpec {
    pub fn local(eps1: f64, eps2: f64) -> Result<Self> {
        check_nonneg("eps1", eps1)?;
        check_nonneg("eps2", eps2)?;
        Ok(BudgetSpec {
            epsilon: eps1 + eps2,
            split: Split::Pair { eps1, eps2 },
            delta: 0.0,
        })
    }

    pub fn decentral(eps1: f64, eps2: f64, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(BudgetSpec {
            delta,
            ..Self::local(eps1, eps2)?
        })
    }

    pub fn shuffle(epsilon: f64, alpha: f64, delta: f64) -> Result<Self> {
        check_nonneg("epsilon", epsilon)?;
        check_delta(delta)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(BudgetSpec {
            epsilon,
            split: Split::Shuffle { alpha },
            delta,
        })
    }

    /// The experimental defaults: local `ε₁ = 0.6ε, ε₂ = 0.4ε`; shuffle
    /// `α = 0.4`; decentral `ε₁ = 0.4ε, ε₂ = 0.6ε`.
    pub fn default_for(algorithm: Algorithm, epsilon: f64, delta: f64) -> Result<Self> {
        match algorithm {
            Algorithm::Local => Self::local(0.6 * epsilon, 0.4 * epsilon),
            Algorithm::Shuffle => Self::shuffle(epsilon, 0.4, delta),
            Algorithm::Decentral => Self::decentral(0.4 * epsilon, 0.6 * epsilon, delta),
        }
    }

    /// `δ₁ = δ/2`, the failure probability of each degree upper bound.
    pub fn delta1(&self) -> f64 {
        self.delta / 2.0
    }

    fn pair(&self, algorithm: Algorithm) -> Result<(f64, f64)> {
        match self.split {
            Split::Pair { eps1, eps2 } => Ok((eps1, eps2)),
            Split::Shuffle { .. } => Err(Error::InvalidParameter(format!(
                "{algorithm} needs an (eps1, eps2) split"
            ))),
        }
    }
}

/// Whether mechanisms add noise. `Noiseless` zeroes every flip probability,
/// Laplace scale and correction term; it exists so tests can compare the
/// estimators against exact statistics and must never be used on real data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    #[default]
    Private,
    Noiseless,
}

/// Which amplification bound the shuffle protocol inverts.
#[derive(Debug, Clone, Default)]
pub enum Bound {
    #[default]
    ClosedForm,
    Tabulated(Arc<TabulatedBound>),
}

impl Bound {
    pub fn as_dyn(&self) -> &dyn AmplificationBound {
        match self {
            Bound::ClosedForm => &ClosedFormBound,
            Bound::Tabulated(t) => t.as_ref(),
        }
    }
}

/// Smallest sensitivity the decentral protocol will use.
pub const DEFAULT_SENSITIVITY_FLOOR: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub noise: NoiseMode,
    /// Use this edge count instead of the graph's.
    pub m_override: Option<u64>,
    pub bound: Bound,
    /// Replaces a non-positive decentral sensitivity `Δ`.
    pub sensitivity_floor: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            noise: NoiseMode::Private,
            m_override: None,
            bound: Bound::ClosedForm,
            sensitivity_floor: DEFAULT_SENSITIVITY_FLOOR,
        }
    }
}

impl RunOptions {
    pub fn noiseless() -> Self {
        RunOptions {
            noise: NoiseMode::Noiseless,
            ..Default::default()
        }
    }

    fn edge_count(&self, g: &Graph) -> Result<u64> {
        let m = self.m_override.unwrap_or_else(|| g.num_edges());
        if m == 0 {
            return Err(Error::UndefinedStatistic("the estimate divides by M = 0"));
        }
        Ok(m)
    }
}

/// Per-user reports of the decentral protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecentralArtifacts {
    pub noisy_degrees: Vec<f64>,
    pub upper_bounds: Vec<f64>,
    /// `Δ = 2 (d*_[1] + d*_[2])`, or the floor if that was not positive.
    pub sensitivity: f64,
    pub sensitivity_clamped: bool,
    pub noisy_neighbor_sums: Vec<f64>,
}

/// Output of one protocol run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Estimate {
    pub algorithm: Algorithm,
    pub q_hat: f64,
    pub x: f64,
    pub y: f64,
    pub budget: BudgetSpec,
    /// Local budget of the shuffle protocol (absent in noiseless runs).
    pub epsilon0: Option<f64>,
    pub rng: TrialRng,
    pub m_used: u64,
    pub noise: NoiseMode,
    #[serde(skip)]
    pub wall_time: Duration,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub decentral: Option<DecentralArtifacts>,
}

/// `X / M - Y / M²`.
pub fn combine(x: f64, y: f64, m: u64) -> f64 {
    let m = m as f64;
    x / m - y / (m * m)
}

/// `(½ Σ d̃² - (n+2) b²)² - (5n+4) b⁴`, unbiased for `(½ Σ d²)²` when each
/// `d̃_i` carries independent `Lap(b)` noise.
pub fn degree_square_estimate(noisy_degrees: &[f64], scale: f64) -> f64 {
    let n = noisy_degrees.len() as f64;
    let half_sq: f64 = 0.5 * noisy_degrees.iter().map(|d| d * d).sum::<f64>();
    let b2 = scale * scale;
    (half_sq - (n + 2.0) * b2).powi(2) - (5.0 * n + 4.0) * b2 * b2
}

fn require_users(g: &Graph) -> Result<()> {
    if g.num_nodes() < 2 {
        return Err(Error::InvalidParameter(format!(
            "the protocols need at least 2 users, got {}",
            g.num_nodes()
        )));
    }
    Ok(())
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")))
    }
}

/// Bit-packed lower-triangle row `ã_i1 .. ã_i,i-1` produced by one user.
pub(crate) fn randomize_lower_row<R: rand::RngCore>(
    g: &Graph,
    i: usize,
    rr: &crate::mechanisms::RRParams,
    rng: &mut R,
) -> Vec<u64> {
    let mut words = vec![0u64; i.div_ceil(64)];
    for &j in g.lower_neighbors(i) {
        words[j as usize / 64] |= 1 << (j % 64);
    }
    if rr.flip_prob() > 0.0 {
        for (w, word) in words.iter_mut().enumerate() {
            let bits = (i - 64 * w).min(64);
            let mut flips = 0u64;
            for b in 0..bits {
                flips |= u64::from(rr.flips(rng)) << b;
            }
            *word ^= flips;
        }
    }
    words
}

/// `Σ_{j<i} (ã_ij - p) d̃_j / (1 - 2p)` for one packed row.
pub(crate) fn debiased_row_sum(row: &[u64], noisy_degrees: &[f64], prefix: f64, p: f64, inv: f64) -> f64 {
    let mut ones = 0.0;
    for (w, &word) in row.iter().enumerate() {
        let mut bits = word;
        while bits != 0 {
            let b = bits.trailing_zeros() as usize;
            ones += noisy_degrees[64 * w + b];
            bits &= bits - 1;
        }
    }
    (ones - p * prefix) * inv
}
