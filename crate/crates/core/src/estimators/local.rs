use std::time::Instant;

use rayon::prelude::*;

use super::{
    combine, debiased_row_sum, degree_square_estimate, randomize_lower_row, require_positive,
    require_users, Algorithm, BudgetSpec, Estimate, NoiseMode, RunOptions,
};
use crate::error::Result;
use crate::graph::Graph;
use crate::mechanisms::{laplace_sample, LaplaceParams, RRParams};
use crate::rng::{Role, TrialRng};

/// What user `i` sends in the one-round protocol.
struct LocalReport {
    noisy_degree: f64,
    /// `ã_ij` for `j < i`, packed.
    noisy_row: Vec<u64>,
}

fn user_report(g: &Graph, i: usize, rr: &RRParams, lap: &LaplaceParams, rng: &TrialRng) -> LocalReport {
    let mut stream = rng.stream(Role::User, i as u64);
    let noisy_degree = g.degree(i) as f64 + laplace_sample(lap, &mut stream);
    let noisy_row = randomize_lower_row(g, i, rr, &mut stream);
    LocalReport {
        noisy_degree,
        noisy_row,
    }
}

/// One-round protocol: every user sends randomized-response bits for
/// `j < i` (budget `ε₁`) and `d_i + Lap(1/ε₂)`. The collector computes
///
/// ```text
/// X₁ = Σ_i Σ_{j<i} (ã_ij - p) d̃_i d̃_j / (1 - 2p)
/// Y₁ = (½ Σ d̃_i² - (n+2) b²)² - (5n+4) b⁴,   b = 1/ε₂
/// ```
///
/// and releases `X₁/M - Y₁/M²`.
pub fn local_ru(g: &Graph, budget: &BudgetSpec, rng: TrialRng, options: &RunOptions) -> Result<Estimate> {
    let started = Instant::now();
    require_users(g)?;
    let (eps1, eps2) = budget.pair(Algorithm::Local)?;
    let m_used = options.edge_count(g)?;
    let (rr, lap) = match options.noise {
        NoiseMode::Private => {
            require_positive("eps2", eps2)?;
            (RRParams::new(eps1)?, LaplaceParams::for_sensitivity(1.0, eps2)?)
        }
        NoiseMode::Noiseless => (RRParams::noiseless(), LaplaceParams::noiseless()),
    };
    let inv = rr.debias_factor()?;
    let p = rr.flip_prob();

    let reports: Vec<LocalReport> = (0..g.num_nodes())
        .into_par_iter()
        .with_min_len(32)
        .map(|i| user_report(g, i, &rr, &lap, &rng))
        .collect();

    // collector
    let noisy_degrees: Vec<f64> = reports.iter().map(|r| r.noisy_degree).collect();
    let mut x = 0.0;
    let mut prefix = 0.0;
    for (i, report) in reports.iter().enumerate() {
        x += report.noisy_degree * debiased_row_sum(&report.noisy_row, &noisy_degrees, prefix, p, inv);
        prefix += noisy_degrees[i];
    }
    let y = degree_square_estimate(&noisy_degrees, lap.scale());

    Ok(Estimate {
        algorithm: Algorithm::Local,
        q_hat: combine(x, y, m_used),
        x,
        y,
        budget: *budget,
        epsilon0: None,
        rng,
        m_used,
        noise: options.noise,
        wall_time: started.elapsed(),
        decentral: None,
    })
}
