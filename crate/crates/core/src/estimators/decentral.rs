use std::cmp::Ordering;
use std::time::Instant;

use rayon::prelude::*;

use super::{
    combine, degree_square_estimate, require_positive, require_users, Algorithm, BudgetSpec,
    DecentralArtifacts, Estimate, NoiseMode, RunOptions,
};
use crate::error::{Error, Result};
use crate::graph::{neighbor_degree_sum, Graph};
use crate::mechanisms::{laplace_sample, tail_upper_bound, LaplaceParams};
use crate::rng::{Role, RngStream, TrialRng};

/// `Δ = 2 (d*_[1] + d*_[2])` over the two largest bounds; ties go to the
/// smaller user id. Returns `(Δ, clamped)`.
pub(crate) fn sensitivity_bound(upper_bounds: &[f64], floor: f64) -> (f64, bool) {
    let mut order: Vec<usize> = (0..upper_bounds.len()).collect();
    order.sort_by(|&a, &b| {
        upper_bounds[b]
            .partial_cmp(&upper_bounds[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let delta = 2.0 * (upper_bounds[order[0]] + upper_bounds[order[1]]);
    if delta > 0.0 {
        (delta, false)
    } else {
        log::warn!("sensitivity bound {delta} is not positive; using floor {floor}");
        (floor, true)
    }
}

/// Decentralized protocol over 2-hop views.
///
/// Round one: each user sends `d̃_i = d_i + Lap(2/ε₁)` and the upper bound
/// `d*_i = d̃_i + (2/ε₁) ln(1/(2δ₁))`, `δ₁ = δ/2`. The collector sets
/// `Δ = 2(d*_[1] + d*_[2])` from the two largest bounds and announces it.
/// Round two: each user reads `T_i = Σ_j a_ij d_j` off its 2-hop view and
/// sends `T̃_i = T_i + Lap(Δ/ε₂)`. The collector computes
///
/// ```text
/// X₃ = ½ Σ_i d̃_i T̃_i
/// Y₃ = (½ Σ d̃_i² - (n+2) b²)² - (5n+4) b⁴,   b = 2/ε₁
/// ```
///
/// reusing the round-one `d̃_i`.
pub fn decentral_ru(g: &Graph, budget: &BudgetSpec, rng: TrialRng, options: &RunOptions) -> Result<Estimate> {
    let started = Instant::now();
    require_users(g)?;
    let (eps1, eps2) = budget.pair(Algorithm::Decentral)?;
    let n = g.num_nodes();
    let m_used = options.edge_count(g)?;
    let delta1 = budget.delta1();

    let degree_lap = match options.noise {
        NoiseMode::Private => {
            require_positive("eps1", eps1)?;
            require_positive("eps2", eps2)?;
            if !(budget.delta > 0.0 && budget.delta < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "delta must lie in (0, 1), got {}",
                    budget.delta
                )));
            }
            LaplaceParams::for_sensitivity(2.0, eps1)?
        }
        NoiseMode::Noiseless => LaplaceParams::noiseless(),
    };
    let b1 = degree_lap.scale();

    // round one
    let round_one: Vec<(f64, f64, RngStream)> = (0..n)
        .into_par_iter()
        .with_min_len(32)
        .map(|i| {
            let mut stream = rng.stream(Role::User, i as u64);
            let noisy = g.degree(i) as f64 + laplace_sample(&degree_lap, &mut stream);
            let bound = if b1 > 0.0 {
                tail_upper_bound(noisy, b1, delta1)?
            } else {
                noisy
            };
            Ok((noisy, bound, stream))
        })
        .collect::<Result<_>>()?;
    let mut noisy_degrees = Vec::with_capacity(n);
    let mut upper_bounds = Vec::with_capacity(n);
    let mut streams = Vec::with_capacity(n);
    for (noisy, bound, stream) in round_one {
        noisy_degrees.push(noisy);
        upper_bounds.push(bound);
        streams.push(stream);
    }

    let (sensitivity, sensitivity_clamped) = sensitivity_bound(&upper_bounds, options.sensitivity_floor);
    let sum_lap = match options.noise {
        NoiseMode::Private => LaplaceParams::for_sensitivity(sensitivity, eps2)?,
        NoiseMode::Noiseless => LaplaceParams::noiseless(),
    };

    // round two
    let noisy_neighbor_sums: Vec<f64> = streams
        .par_iter_mut()
        .enumerate()
        .with_min_len(32)
        .map(|(i, stream)| {
            let t = neighbor_degree_sum(g, i)? as f64;
            Ok(t + laplace_sample(&sum_lap, stream))
        })
        .collect::<Result<_>>()?;

    let x = 0.5
        * noisy_degrees
            .iter()
            .zip(&noisy_neighbor_sums)
            .map(|(d, t)| d * t)
            .sum::<f64>();
    let y = degree_square_estimate(&noisy_degrees, b1);

    Ok(Estimate {
        algorithm: Algorithm::Decentral,
        q_hat: combine(x, y, m_used),
        x,
        y,
        budget: *budget,
        epsilon0: None,
        rng,
        m_used,
        noise: options.noise,
        wall_time: started.elapsed(),
        decentral: Some(DecentralArtifacts {
            noisy_degrees,
            upper_bounds,
            sensitivity,
            sensitivity_clamped,
            noisy_neighbor_sums,
        }),
    })
}
