//! Bookkeeping for the acceptance run: one verdict line per check and a
//! final tally.

use std::fmt;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Skip,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skip => "SKIP",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub verdict: Verdict,
    pub detail: String,
}

impl Outcome {
    pub fn check(ok: bool, detail: impl Into<String>) -> Self {
        Outcome {
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            detail: detail.into(),
        }
    }

    pub fn skip(detail: impl Into<String>) -> Self {
        Outcome { verdict: Verdict::Skip, detail: detail.into() }
    }

    /// Folds sub-checks: fails if any failed, skips only if all skipped.
    pub fn all(parts: Vec<Outcome>) -> Self {
        let verdict = if parts.iter().any(|p| p.verdict == Verdict::Fail) {
            Verdict::Fail
        } else if !parts.is_empty() && parts.iter().all(|p| p.verdict == Verdict::Skip) {
            Verdict::Skip
        } else {
            Verdict::Pass
        };
        let detail = parts
            .iter()
            .map(|p| format!("[{}] {}", p.verdict, p.detail))
            .collect::<Vec<_>>()
            .join("; ");
        Outcome { verdict, detail }
    }
}

#[derive(Default)]
pub struct Report {
    rows: Vec<(String, Verdict, Duration)>,
}

impl Report {
    /// Runs `body`, prints its verdict line and records it.
    pub fn run(&mut self, id: &str, title: &str, body: impl FnOnce() -> Outcome) {
        let started = Instant::now();
        let outcome = body();
        let elapsed = started.elapsed();
        println!(
            "{} {id} {title} ({:.1}s): {}",
            outcome.verdict,
            elapsed.as_secs_f64(),
            outcome.detail
        );
        self.rows.push((id.to_string(), outcome.verdict, elapsed));
    }

    pub fn failures(&self) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|(_, v, _)| *v == Verdict::Fail)
            .map(|(id, _, _)| id.as_str())
            .collect()
    }

    pub fn summary(&self) -> String {
        let count = |v| self.rows.iter().filter(|(_, x, _)| *x == v).count();
        format!(
            "{} passed, {} failed, {} skipped",
            count(Verdict::Pass),
            count(Verdict::Fail),
            count(Verdict::Skip)
        )
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean (sample standard deviation over `√n`).
pub fn sem(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0);
    (var / xs.len() as f64).sqrt()
}

/// Three binomial standard errors below `p`, for checks whose expected
/// frequency equals the bound exactly.
pub fn binomial_floor(p: f64, trials: usize) -> f64 {
    p - 3.0 * (p * (1.0 - p) / trials as f64).sqrt()
}
