//! Local randomizers: Warner randomized response, Laplace noise, and the
//! helpers that debias or bound their outputs.

use rand::distr::Open01;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};

/// Warner randomized response over one bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RRParams {
    epsilon: f64,
    p: f64,
    /// A uniform `u64` below this value means "flip".
    threshold: u64,
}

impl RRParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        let p = rr_flip_prob(epsilon)?;
        Ok(RRParams {
            epsilon,
            p,
            threshold: flip_threshold(p),
        })
    }

    /// The identity channel (`p = 0`), for noiseless test runs only.
    pub fn noiseless() -> Self {
        RRParams {
            epsilon: f64::INFINITY,
            p: 0.0,
            threshold: 0,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn flip_prob(&self) -> f64 {
        self.p
    }

    /// Draws one flip decision.
    #[inline]
    pub fn flips<R: RngCore + ?Sized>(&self, rng: &mut R) -> bool {
        rng.next_u64() < self.threshold
    }

    /// `1 / (1 - 2p)`; errors on the uniform channel.
    pub fn debias_factor(&self) -> Result<f64> {
        if self.p >= 0.5 {
            return Err(Error::DegenerateChannel);
        }
        Ok(1.0 / (1.0 - 2.0 * self.p))
    }
}

fn flip_threshold(p: f64) -> u64 {
    // p <= 1/2, so p * 2^64 <= 2^63 fits.
    (p * 18_446_744_073_709_551_616.0) as u64
}

/// Flip probability `p = 1 / (e^ε + 1)` of ε-randomized response.
pub fn rr_flip_prob(epsilon: f64) -> Result<f64> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::InvalidParameter(format!("epsilon must be >= 0, got {epsilon}")));
    }
    // 1/(e^ε + 1) written to stay accurate for large ε.
    let q = (-epsilon).exp();
    Ok(q / (1.0 + q))
}

/// Keeps `bit` with probability `1 - p`, flips it with probability `p`.
pub fn rr_perturb<R: RngCore + ?Sized>(bit: bool, params: &RRParams, rng: &mut R) -> bool {
    bit ^ params.flips(rng)
}

/// `(b̃ - p) / (1 - 2p)`: unbiased for the true bit under the RR channel.
pub fn rr_debias(noisy_bit: bool, p: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&p) {
        if p == 0.5 {
            return Err(Error::DegenerateChannel);
        }
        return Err(Error::InvalidParameter(format!("flip probability {p} outside [0, 1/2)")));
    }
    Ok((f64::from(u8::from(noisy_bit)) - p) / (1.0 - 2.0 * p))
}

/// Zero-mean Laplace noise with scale `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceParams {
    scale: f64,
}

impl LaplaceParams {
    /// `scale` must be finite and positive.
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter(format!("Laplace scale must be > 0, got {scale}")));
        }
        Ok(LaplaceParams { scale })
    }

    /// Sensitivity over budget, `Δf / ε`.
    pub fn for_sensitivity(sensitivity: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")));
        }
        Self::new(sensitivity / epsilon)
    }

    /// Zero scale: every draw is exactly 0. Noiseless test runs only.
    pub fn noiseless() -> Self {
        LaplaceParams { scale: 0.0 }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// One Laplace draw by inverting the CDF at a uniform `u ∈ (-1/2, 1/2)`:
/// `x = -b · sgn(u) · ln(1 - 2|u|)`.
pub fn laplace_sample<R: RngCore + ?Sized>(params: &LaplaceParams, rng: &mut R) -> f64 {
    if params.scale == 0.0 {
        return 0.0;
    }
    let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
    -params.scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Largest order accepted by [`laplace_raw_moment`].
pub const MAX_MOMENT_ORDER: u32 = 8;

/// `E[X^r]` for `X ~ Lap(x, b)`:
///
/// ```text
/// E[X^r] = Σ_{k=0..r} ½[1 + (-1)^k] · r!/(r-k)! · b^k · x^(r-k)
/// ```
///
/// Only even `k` contribute.
pub fn laplace_raw_moment(center: f64, scale: f64, order: u32) -> Result<f64> {
    if order > MAX_MOMENT_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    if scale < 0.0 {
        return Err(Error::InvalidParameter(format!("Laplace scale must be >= 0, got {scale}")));
    }
    let mut total = 0.0;
    // falling factorial r!/(r-k)!
    let mut falling = 1.0;
    for k in 0..=order {
        if k > 0 {
            falling *= f64::from(order - k + 1);
        }
        if k % 2 == 0 {
            total += falling * scale.powi(k as i32) * center.powi((order - k) as i32);
        }
    }
    Ok(total)
}

/// `x̃ + b · ln(1 / 2δ)`, which is at least the true value with probability
/// `1 - δ` when `x̃` carries `Lap(b)` noise. `b = 0` returns `x̃` unchanged.
pub fn tail_upper_bound(noisy_value: f64, scale: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "tail bound needs 0 < delta < 1/2, got {delta}"
        )));
    }
    if scale < 0.0 {
        return Err(Error::InvalidParameter(format!("Laplace scale must be >= 0, got {scale}")));
    }
    Ok(noisy_value + scale * (1.0 / (2.0 * delta)).ln())
}
