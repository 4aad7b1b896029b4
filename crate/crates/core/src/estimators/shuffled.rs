use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{
    combine, debiased_row_sum, degree_square_estimate, randomize_lower_row, require_users, Algorithm,
    BudgetSpec, Estimate, NoiseMode, RunOptions, Split,
};
use crate::error::{Error, Result};
use crate::graph::{Graph, NeumaierSum};
use crate::mechanisms::{laplace_sample, LaplaceParams, RRParams};
use crate::rng::{Role, RngStream, TrialRng};

/// The shuffler's default behaviour: a uniformly random permutation.
pub fn uniform_shuffle(mut reports: Vec<f64>, rng: &mut RngStream) -> Vec<f64> {
    reports.shuffle(rng);
    reports
}

/// Two-round protocol with a shuffler; see [`shuffle_ru_with_shuffler`].
pub fn shuffle_ru(g: &Graph, budget: &BudgetSpec, rng: TrialRng, options: &RunOptions) -> Result<Estimate> {
    shuffle_ru_with_shuffler(g, budget, rng, options, uniform_shuffle)
}

/// Two-round protocol with a shuffler.
///
/// 1. `ε₀` is the largest local budget that the amplification bound maps to
///    at most `ε`.
/// 2. Round one: each user sends `d̃_i = d_i + Lap(1/(αε₀))`.
/// 3. Round two: the collector broadcasts all `d̃`; each user applies
///    randomized response with `ε₁ = (1-α)ε₀` to its bits `j < i` and sends
///    `r̂_i = d_i Σ_{j<i} (ã_ij - p) d̃_j / (1-2p)` (true degree `d_i`) to
///    the shuffler.
/// 4. The shuffler forwards the `r̂` in permuted order; the collector sums
///    them into `X₂` and forms `Y₂` from `d̃` with `b = 1/(αε₀)`.
///
/// `shuffler` receives the reports and the shuffler's random stream.
pub fn shuffle_ru_with_shuffler<F>(
    g: &Graph,
    budget: &BudgetSpec,
    rng: TrialRng,
    options: &RunOptions,
    shuffler: F,
) -> Result<Estimate>
where
    F: FnOnce(Vec<f64>, &mut RngStream) -> Vec<f64>,
{
    let started = Instant::now();
    require_users(g)?;
    let Split::Shuffle { alpha } = budget.split else {
        return Err(Error::InvalidParameter("shuffle needs an alpha split".into()));
    };
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let n = g.num_nodes();
    let m_used = options.edge_count(g)?;

    let (epsilon0, rr, lap) = match options.noise {
        NoiseMode::Private => {
            let e0 = options.bound.as_dyn().local_budget(n as u64, budget.epsilon, budget.delta)?;
            let rr = RRParams::new((1.0 - alpha) * e0)?;
            let lap = LaplaceParams::for_sensitivity(1.0, alpha * e0)?;
            (Some(e0), rr, lap)
        }
        NoiseMode::Noiseless => (None, RRParams::noiseless(), LaplaceParams::noiseless()),
    };
    let inv = rr.debias_factor()?;
    let p = rr.flip_prob();

    // round one: users -> collector
    let (noisy_degrees, mut streams): (Vec<f64>, Vec<RngStream>) = (0..n)
        .into_par_iter()
        .with_min_len(32)
        .map(|i| {
            let mut stream = rng.stream(Role::User, i as u64);
            (g.degree(i) as f64 + laplace_sample(&lap, &mut stream), stream)
        })
        .unzip();

    // round two: the collector broadcasts `noisy_degrees`; users -> shuffler
    let prefixes: Vec<f64> = noisy_degrees
        .iter()
        .scan(0.0, |acc, &d| {
            let before = *acc;
            *acc += d;
            Some(before)
        })
        .collect();
    let broadcast = noisy_degrees.as_slice();
    let reports: Vec<f64> = streams
        .par_iter_mut()
        .enumerate()
        .skip(1)
        .with_min_len(32)
        .map(|(i, stream)| {
            let row = randomize_lower_row(g, i, &rr, stream);
            g.degree(i) as f64 * debiased_row_sum(&row, broadcast, prefixes[i], p, inv)
        })
        .collect();

    let mut shuffler_rng = rng.stream(Role::Shuffler, 0);
    let mut received = shuffler(reports, &mut shuffler_rng);

    // collector: sums in value order, so X₂ depends on the multiset only
    received.sort_by(f64::total_cmp);
    let x = received.iter().copied().collect::<NeumaierSum>().total();
    let y = degree_square_estimate(&noisy_degrees, lap.scale());

    Ok(Estimate {
        algorithm: Algorithm::Shuffle,
        q_hat: combine(x, y, m_used),
        x,
        y,
        budget: *budget,
        epsilon0,
        rng,
        m_used,
        noise: options.noise,
        wall_time: started.elapsed(),
        decentral: None,
    })
}
