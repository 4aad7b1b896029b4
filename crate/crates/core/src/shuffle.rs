//! Privacy amplification by shuffling.
//!
//! `n` users each run an `ε₀`-LDP randomizer and a trusted shuffler permutes
//! the reports; the shuffled vector is `(ε, δ)`-DP with, in closed form,
//!
//! ```text
//! ε ≤ ln(1 + (e^ε₀ - 1)/(e^ε₀ + 1) · (8 √(e^ε₀ ln(4/δ)) / √n + 8 e^ε₀ / n))
//! ```
//!
//! valid for `ε₀ ≤ ln(n / (16 ln(2/δ)))`. Logarithms are natural.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on `ε₀` for the bisection in [`local_budget_for`].
pub const INVERSION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    #[default]
    ClosedForm,
    /// Tabulated `(ε₀, ε)` pairs computed elsewhere (e.g. a numerical accountant).
    ExternalNumerical,
}

/// Amplification accounting for one population size and `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShuffleBudget {
    pub n: u64,
    pub epsilon0: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub bound_mode: BoundMode,
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")))
    }
}

/// `ln(n / (16 ln(2/δ)))`, the largest `ε₀` the closed form covers.
pub fn epsilon0_cap(n: u64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let required = 16.0 * (2.0 / delta).ln();
    if (n as f64) <= required {
        return Err(Error::InfeasiblePopulation { n, required });
    }
    Ok((n as f64 / required).ln())
}

/// Closed-form amplified `ε` for local budget `epsilon0`.
pub fn amplified_epsilon(n: u64, epsilon0: f64, delta: f64) -> Result<f64> {
    let cap = epsilon0_cap(n, delta)?;
    if !(epsilon0 >= 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon0 must be >= 0, got {epsilon0}")));
    }
    if epsilon0 > cap {
        return Err(Error::AboveCap { epsilon0, cap });
    }
    let e0 = epsilon0.exp();
    let n = n as f64;
    // (e^ε₀ - 1)/(e^ε₀ + 1) = tanh(ε₀/2)
    let contraction = (epsilon0 / 2.0).tanh();
    let spread = 8.0 * (e0 * (4.0 / delta).ln()).sqrt() / n.sqrt() + 8.0 * e0 / n;
    Ok((contraction * spread).ln_1p())
}

/// Largest `ε₀ ≤ cap` whose amplified `ε` does not exceed `epsilon`.
pub fn local_budget_for(n: u64, epsilon: f64, delta: f64) -> Result<f64> {
    ClosedFormBound.local_budget(n, epsilon, delta)
}

/// A shuffle amplification bound `ε₀ ↦ ε` for fixed `n` and `δ`.
pub trait AmplificationBound: Send + Sync {
    fn mode(&self) -> BoundMode;

    /// Upper end of the `ε₀` domain on which the bound holds.
    fn max_epsilon0(&self, n: u64, delta: f64) -> Result<f64>;

    fn amplified_epsilon(&self, n: u64, epsilon0: f64, delta: f64) -> Result<f64>;

    /// Largest `ε₀` in the domain with `amplified_epsilon(ε₀) ≤ epsilon`,
    /// by bisection; the bound must be increasing in `ε₀`.
    fn local_budget(&self, n: u64, epsilon: f64, delta: f64) -> Result<f64> {
        let cap = self.max_epsilon0(n, delta)?;
        if !(epsilon > 0.0) {
            return Err(Error::InfeasibleBudget { epsilon });
        }
        if self.amplified_epsilon(n, cap, delta)? <= epsilon {
            return Ok(cap);
        }
        let (mut lo, mut hi) = (0.0_f64, cap);
        while hi - lo > INVERSION_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            if self.amplified_epsilon(n, mid, delta)? <= epsilon {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo <= 0.0 {
            return Err(Error::InfeasibleBudget { epsilon });
        }
        Ok(lo)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ClosedFormBound;

impl AmplificationBound for ClosedFormBound {
    fn mode(&self) -> BoundMode {
        BoundMode::ClosedForm
    }

    fn max_epsilon0(&self, n: u64, delta: f64) -> Result<f64> {
        epsilon0_cap(n, delta)
    }

    fn amplified_epsilon(&self, n: u64, epsilon0: f64, delta: f64) -> Result<f64> {
        amplified_epsilon(n, epsilon0, delta)
    }
}

/// A bound given as a table of `(ε₀, ε)` pairs, linearly interpolated, with
/// the implicit origin `(0, 0)`. The table belongs to one `(n, δ)`; those
/// arguments are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedBound {
    rows: Vec<(f64, f64)>,
    mode: BoundMode,
}

impl TabulatedBound {
    /// Validates: finite non-negative values, strictly increasing `ε₀`,
    /// non-decreasing `ε`.
    pub fn new(mut rows: Vec<(f64, f64)>, mode: BoundMode) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::LookupTable {
                line: 0,
                message: "table has no rows".into(),
            });
        }
        for (k, &(e0, e)) in rows.iter().enumerate() {
            let bad = |message: String| Err(Error::LookupTable { line: k + 1, message });
            if !(e0.is_finite() && e.is_finite() && e0 > 0.0 && e >= 0.0) {
                return bad(format!("invalid pair ({e0}, {e})"));
            }
            if k > 0 {
                let (p0, p) = rows[k - 1];
                if e0 <= p0 {
                    return bad(format!("epsilon0 {e0} does not increase past {p0}"));
                }
                if e < p {
                    return bad(format!("epsilon {e} decreases below {p}"));
                }
            }
        }
        rows.insert(0, (0.0, 0.0));
        Ok(TabulatedBound { rows, mode })
    }

    /// Reads `epsilon0,epsilon` rows; `#` comments, blank lines and a
    /// non-numeric header line are skipped.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = t.split(',').map(str::trim).collect();
            let parsed = match fields.as_slice() {
                [a, b] => a.parse::<f64>().ok().zip(b.parse::<f64>().ok()),
                _ => None,
            };
            match parsed {
                Some(pair) => rows.push(pair),
                None if rows.is_empty() && idx == 0 => continue,
                None => {
                    return Err(Error::LookupTable {
                        line: idx + 1,
                        message: format!("expected `epsilon0,epsilon`, found {t:?}"),
                    })
                }
            }
        }
        Self::new(rows, BoundMode::ExternalNumerical)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    /// Precomputes a table of `points` evenly spaced `ε₀` values from
    /// another bound, up to its cap.
    pub fn tabulate(bound: &dyn AmplificationBound, n: u64, delta: f64, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidParameter("a table needs at least 2 points".into()));
        }
        let cap = bound.max_epsilon0(n, delta)?;
        let rows = (1..=points)
            .map(|k| {
                let e0 = (cap * k as f64 / points as f64).min(cap);
                Ok((e0, bound.amplified_epsilon(n, e0, delta)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows, bound.mode())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epsilon0,epsilon")?;
        for &(e0, e) in &self.rows[1..] {
            writeln!(out, "{e0},{e}")?;
        }
        Ok(())
    }

    pub fn rows(&self) -> &[(f64, f64)] {
        &self.rows[1..]
    }
}

impl AmplificationBound for TabulatedBound {
    fn mode(&self) -> BoundMode {
        self.mode
    }

    fn max_epsilon0(&self, _n: u64, _delta: f64) -> Result<f64> {
        Ok(self.rows.last().unwrap().0)
    }

    fn amplified_epsilon(&self, _n: u64, epsilon0: f64, _delta: f64) -> Result<f64> {
        let cap = self.rows.last().unwrap().0;
        if !(epsilon0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon0 must be >= 0, got {epsilon0}")));
        }
        if epsilon0 > cap {
            return Err(Error::AboveCap { epsilon0, cap });
        }
        let k = self.rows.partition_point(|&(e0, _)| e0 < epsilon0).max(1);
        let (x0, y0) = self.rows[k - 1];
        let (x1, y1) = self.rows[k];
        Ok(y0 + (y1 - y0) * (epsilon0 - x0) / (x1 - x0))
    }

    /// Inverts the interpolant directly instead of bisecting.
    fn local_budget(&self, _n: u64, epsilon: f64, _delta: f64) -> Result<f64> {
        if !(epsilon > 0.0) {
            return Err(Error::InfeasibleBudget { epsilon });
        }
        let &(cap, top) = self.rows.last().unwrap();
        if top <= epsilon {
            return Ok(cap);
        }
        // first row whose ε exceeds the target; the answer lies on the
        // segment ending there
        let k = self.rows.partition_point(|&(_, e)| e <= epsilon);
        let (x0, y0) = self.rows[k - 1];
        let (x1, y1) = self.rows[k];
        let e0 = x0 + (x1 - x0) * (epsilon - y0) / (y1 - y0);
        if e0 <= 0.0 {
            return Err(Error::InfeasibleBudget { epsilon });
        }
        Ok(e0)
    }
}
