//! Information-theoretic parameter math.
//!
//! Security parameters are carried as base-10 logarithms ([`Epsilon`]) so that
//! values around `1e-50` compose with use counts near `1e14` without losing
//! the small term. Entropy and output-length quantities are in bits (log2).

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("histogram is empty or has zero total count")]
    EmptyHistogram,
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("ADC resolution must be in 1..=32 bits, got {0}")]
    BadResolution(u32),
    #[error("probability log10 value {0} is outside (-inf, 0]")]
    BadEpsilon(f64),
    #[error("threshold 10^{threshold} must exceed eps_hash 10^{hash}")]
    ThresholdNotAboveHash { threshold: f64, hash: f64 },
    #[error("universality mu must be >= 1, got {0}")]
    BadUniversality(f64),
    #[error("min-entropy {hmin} bits/sample outside [0, {bits}]")]
    BadEntropy { hmin: f64, bits: u32 },
    #[error("channel {index}: m={m} exceeds n={n}")]
    RatioAboveOne { index: usize, m: u64, n: u64 },
}

/// A probability stored as its base-10 logarithm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Epsilon(f64);

impl Epsilon {
    pub const ONE: Epsilon = Epsilon(0.0);

    pub fn from_log10(log10: f64) -> Result<Self, ParamError> {
        if log10.is_nan() || log10 > 0.0 || log10 == f64::INFINITY {
            return Err(ParamError::BadEpsilon(log10));
        }
        Ok(Epsilon(log10))
    }

    pub fn from_prob(p: f64) -> Result<Self, ParamError> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(ParamError::BadEpsilon(p.log10()));
        }
        Ok(Epsilon(p.log10()))
    }

    pub fn log10(self) -> f64 {
        self.0
    }

    pub fn log2(self) -> f64 {
        self.0 * std::f64::consts::LOG2_10
    }

    /// Linear-domain value. Underflows to zero below ~1e-308.
    pub fn prob(self) -> f64 {
        10f64.powf(self.0)
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let exp = self.0.floor();
        let mantissa = 10f64.powf(self.0 - exp);
        write!(f, "{mantissa:.6}e{exp}")
    }
}

/// Hash, seed and refresh-threshold security parameters for one seed bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecuritySpec {
    pub eps_hash: Epsilon,
    pub eps_seed: Epsilon,
    pub eps_threshold: Epsilon,
    /// Universality of the hash family; 1 for Toeplitz hashing.
    pub mu: f64,
}

impl SecuritySpec {
    pub fn new(
        eps_hash: Epsilon,
        eps_seed: Epsilon,
        eps_threshold: Epsilon,
    ) -> Result<Self, ParamError> {
        let spec = SecuritySpec {
            eps_hash,
            eps_seed,
            eps_threshold,
            mu: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for e in [self.eps_hash, self.eps_seed, self.eps_threshold] {
            Epsilon::from_log10(e.0)?;
        }
        if self.eps_threshold.0 <= self.eps_hash.0 {
            return Err(ParamError::ThresholdNotAboveHash {
                threshold: self.eps_threshold.0,
                hash: self.eps_hash.0,
            });
        }
        if !(self.mu >= 1.0) {
            return Err(ParamError::BadUniversality(self.mu));
        }
        Ok(())
    }

    /// Smallest use count `N` at which `N * eps_hash + eps_seed >= eps_threshold`.
    ///
    /// Solved for `N` as `ceil(10^(t-h) - 10^(s-h))`, which keeps both terms
    /// near unit scale. Saturates at `u128::MAX`.
    pub fn first_refresh_use(&self) -> u128 {
        let h = self.eps_hash.0;
        let room = 10f64.powf(self.eps_threshold.0 - h) - 10f64.powf(self.eps_seed.0 - h);
        if room <= 0.0 {
            return 0;
        }
        let n = room.ceil();
        if n >= u128::MAX as f64 {
            u128::MAX
        } else {
            n as u128
        }
    }
}

impl Default for SecuritySpec {
    /// Hash and seed parameters of `1e-50`, refreshed at `1e-36`.
    fn default() -> Self {
        SecuritySpec {
            eps_hash: Epsilon(-50.0),
            eps_seed: Epsilon(-50.0),
            eps_threshold: Epsilon(-36.0),
            mu: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub hmin_per_sample: f64,
    pub sample_bits: u32,
}

impl EntropyEstimate {
    pub fn new(hmin_per_sample: f64, sample_bits: u32) -> Result<Self, ParamError> {
        if !(0.0..=sample_bits as f64).contains(&hmin_per_sample) {
            return Err(ParamError::BadEntropy {
                hmin: hmin_per_sample,
                bits: sample_bits,
            });
        }
        Ok(Self {
            hmin_per_sample,
            sample_bits,
        })
    }

    pub fn hmin_per_bit(&self) -> f64 {
        self.hmin_per_sample / self.sample_bits as f64
    }
}

/// Plug-in min-entropy `-log2(max_i c_i / sum c)` of a histogram.
pub fn min_entropy_from_histogram(counts: &[u64]) -> Result<f64, ParamError> {
    let total: u128 = counts.iter().map(|&c| c as u128).sum();
    let max = counts.iter().copied().max().unwrap_or(0);
    if total == 0 {
        return Err(ParamError::EmptyHistogram);
    }
    Ok(0f64.max(-(max as f64 / total as f64).log2()))
}

fn check_positive(name: &'static str, value: f64) -> Result<(), ParamError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ParamError::NonPositive { name, value })
    }
}

/// Standard normal mass on `[lo, hi]`, using the complementary tail when it
/// is the more accurate form.
fn normal_mass(lo: f64, hi: f64) -> f64 {
    let s = std::f64::consts::SQRT_2;
    if lo >= 0.0 {
        0.5 * (erfc(lo / s) - erfc(hi / s))
    } else if hi <= 0.0 {
        0.5 * (erfc(-hi / s) - erfc(-lo / s))
    } else {
        0.5 * (erf(hi / s) - erf(lo / s))
    }
}

/// Probability mass that ADC code `code` captures for a zero-mean Gaussian
/// under the saturating mid-tread quantizer of [`crate::source::adc_quantize`].
pub fn adc_code_mass(sigma: f64, full_scale: f64, bits: u32, code: i64) -> f64 {
    let step = full_scale / 2f64.powi(bits as i32);
    let lowest = -(1i64 << (bits - 1));
    let highest = (1i64 << (bits - 1)) - 1;
    let lo = if code <= lowest {
        f64::NEG_INFINITY
    } else {
        (code as f64 - 0.5) * step / sigma
    };
    let hi = if code >= highest {
        f64::INFINITY
    } else {
        (code as f64 + 0.5) * step / sigma
    };
    normal_mass(lo, hi)
}

/// Min-entropy per sample of a zero-mean Gaussian of std `sigma` quantized to
/// `2^bits` codes over `[-full_scale/2, full_scale/2]` with saturating ends.
///
/// Among equal-width interior codes the one centred on zero carries the most
/// mass, so only code 0 and the two saturating end codes are candidates.
pub fn min_entropy_gaussian_adc(sigma: f64, full_scale: f64, bits: u32) -> Result<f64, ParamError> {
    check_positive("sigma", sigma)?;
    check_positive("full_scale", full_scale)?;
    if !(1..=32).contains(&bits) {
        return Err(ParamError::BadResolution(bits));
    }
    let lowest = -(1i64 << (bits - 1));
    let highest = (1i64 << (bits - 1)) - 1;
    let p_max = [0, lowest, highest]
        .into_iter()
        .map(|c| adc_code_mass(sigma, full_scale, bits, c))
        .fold(0.0, f64::max);
    Ok(0f64.max(-p_max.log2()))
}

/// Output length allowed by the leftover hash lemma:
/// `floor(n * h - 2 * log2(1/eps_hash))`, clamped at zero.
pub fn leftover_hash_output_length(n: u64, hmin_per_bit: f64, eps_hash: Epsilon) -> u64 {
    let penalty = -2.0 * eps_hash.log2();
    let bound = (n as f64 * hmin_per_bit - penalty).floor();
    if bound <= 0.0 {
        0
    } else {
        bound as u64
    }
}

/// Toeplitz collision probability `m * 2^(1-n)`, returned as `log2`.
pub fn collision_probability_log2(m: u64, n: u64) -> f64 {
    (m as f64).log2() - n as f64 + 1.0
}

/// Composed security parameter `N * eps_hash + eps_seed`, summed in log10.
pub fn compose_security(uses: u64, eps_hash: Epsilon, eps_seed: Epsilon) -> Epsilon {
    if uses == 0 {
        return eps_seed;
    }
    let reuse = eps_hash.0 + (uses as f64).log10();
    let (hi, lo) = if reuse >= eps_seed.0 {
        (reuse, eps_seed.0)
    } else {
        (eps_seed.0, reuse)
    };
    Epsilon(hi + (10f64.powf(lo - hi)).ln_1p() / std::f64::consts::LN_10)
}

/// Sampling parameters for one extraction channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRate {
    pub m: u64,
    pub n: u64,
    pub sample_rate_hz: f64,
    pub sample_bits: u32,
}

/// Steady-state extracted bit rate `sum(rate * bits * m / n)` in bits/second.
pub fn throughput_accounting(channels: &[ChannelRate]) -> Result<f64, ParamError> {
    let mut total = 0.0;
    for (index, ch) in channels.iter().enumerate() {
        if ch.m > ch.n {
            return Err(ParamError::RatioAboveOne {
                index,
                m: ch.m,
                n: ch.n,
            });
        }
        check_positive("sample_rate_hz", ch.sample_rate_hz)?;
        total += ch.sample_rate_hz * ch.sample_bits as f64 * (ch.m as f64 / ch.n as f64);
    }
    Ok(total)
}
