//! Simulated entropy source: Gaussian noise voltages, a saturating mid-tread
//! ADC, and FIFO-style re-framing of the code bitstream into `k`-bit words.
//!
//! The noise generator is a seeded ChaCha stream. It exists so runs are
//! reproducible; it is a test fixture and makes no entropy claim.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::bits::BitString;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SourceError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("ADC resolution must be in 1..=32 bits, got {0}")]
    BadResolution(u32),
    #[error("word width C*a/J = {sample_rate_hz}*{bits}/{out_clock_hz} is not a positive integer")]
    NonIntegralWidth {
        sample_rate_hz: u64,
        bits: u32,
        out_clock_hz: u64,
    },
    #[error("raw sample file length {0} is not a multiple of 2 bytes")]
    OddLength(usize),
}

/// Quantized ADC output with its acquisition metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBlock {
    pub codes: Vec<i32>,
    pub sample_rate_hz: u64,
    pub bits: u32,
    pub full_scale: f64,
}

impl SampleBlock {
    pub fn code_range(bits: u32) -> (i64, i64) {
        (-(1i64 << (bits - 1)), (1i64 << (bits - 1)) - 1)
    }

    /// Histogram over all `2^bits` codes, index `code - min_code`.
    pub fn histogram(&self) -> Vec<u64> {
        let (lo, hi) = Self::code_range(self.bits);
        let mut counts = vec![0u64; (hi - lo + 1) as usize];
        for &c in &self.codes {
            counts[(c as i64 - lo) as usize] += 1;
        }
        counts
    }
}

/// Stateful zero-mean Gaussian voltage generator for one channel.
#[derive(Debug, Clone)]
pub struct GaussianSource {
    rng: ChaCha12Rng,
    normal: Normal<f64>,
}

impl GaussianSource {
    pub fn new(sigma: f64, rng_seed: u64) -> Result<Self, SourceError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(SourceError::NonPositive {
                name: "sigma",
                value: sigma,
            });
        }
        Ok(Self {
            rng: ChaCha12Rng::seed_from_u64(rng_seed),
            normal: Normal::new(0.0, sigma).expect("sigma validated"),
        })
    }

    pub fn sample(&mut self) -> f64 {
        self.normal.sample(&mut self.rng)
    }

    pub fn take(&mut self, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.sample()).collect()
    }
}

/// `count` i.i.d. N(0, sigma^2) samples, deterministic in `rng_seed`.
pub fn gaussian_source(sigma: f64, count: usize, rng_seed: u64) -> Result<Vec<f64>, SourceError> {
    Ok(GaussianSource::new(sigma, rng_seed)?.take(count))
}

/// Saturating mid-tread ADC: `clamp(round(v / step), -2^(bits-1), 2^(bits-1) - 1)`
/// with `step = full_scale / 2^bits`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adc {
    full_scale: f64,
    bits: u32,
    step: f64,
    lo: f64,
    hi: f64,
}

impl Adc {
    pub fn new(full_scale: f64, bits: u32) -> Result<Self, SourceError> {
        if !(full_scale > 0.0 && full_scale.is_finite()) {
            return Err(SourceError::NonPositive {
                name: "full_scale",
                value: full_scale,
            });
        }
        if !(1..=32).contains(&bits) {
            return Err(SourceError::BadResolution(bits));
        }
        let (lo, hi) = SampleBlock::code_range(bits);
        Ok(Self {
            full_scale,
            bits,
            step: full_scale / 2f64.powi(bits as i32),
            lo: lo as f64,
            hi: hi as f64,
        })
    }

    #[inline]
    pub fn quantize(&self, v: f64) -> i32 {
        (v / self.step).round().clamp(self.lo, self.hi) as i32
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn full_scale(&self) -> f64 {
        self.full_scale
    }
}

pub fn adc_quantize(
    voltages: &[f64],
    full_scale: f64,
    bits: u32,
    sample_rate_hz: u64,
) -> Result<SampleBlock, SourceError> {
    let adc = Adc::new(full_scale, bits)?;
    Ok(SampleBlock {
        codes: voltages.iter().map(|&v| adc.quantize(v)).collect(),
        sample_rate_hz,
        bits,
        full_scale,
    })
}

/// `k = C * a / J`, the word width after re-clocking `C` samples/s of `a`
/// bits onto a `J` Hz bus.
pub fn converted_width(sample_rate_hz: u64, bits: u32, out_clock_hz: u64) -> Result<usize, SourceError> {
    let err = SourceError::NonIntegralWidth {
        sample_rate_hz,
        bits,
        out_clock_hz,
    };
    let total = (sample_rate_hz as u128) * bits as u128;
    if out_clock_hz == 0 || total == 0 || !total.is_multiple_of(out_clock_hz as u128) {
        return Err(err);
    }
    usize::try_from(total / out_clock_hz as u128).map_err(|_| err)
}

/// Appends each code as `bits` bits of two's complement, least significant first.
pub fn push_code_bits(out: &mut BitString, codes: &[i32], bits: u32) {
    for &c in codes {
        out.push_word(c as i64 as u64, bits as usize);
    }
}

/// A bitstream re-framed into consecutive `width`-bit words. The last word
/// is shorter when the stream does not divide evenly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordStream {
    pub width: usize,
    pub bits: BitString,
}

impl WordStream {
    pub fn word_count(&self) -> usize {
        self.bits.len().div_ceil(self.width)
    }

    pub fn word(&self, i: usize) -> Option<BitString> {
        let start = i.checked_mul(self.width)?;
        if start >= self.bits.len() {
            return None;
        }
        let len = self.width.min(self.bits.len() - start);
        self.bits.slice(start, len).ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = BitString> + '_ {
        (0..self.word_count()).filter_map(move |i| self.word(i))
    }
}

pub fn width_convert(block: &SampleBlock, out_clock_hz: u64) -> Result<WordStream, SourceError> {
    let width = converted_width(block.sample_rate_hz, block.bits, out_clock_hz)?;
    let mut bits = BitString::with_capacity(block.codes.len() * block.bits as usize);
    push_code_bits(&mut bits, &block.codes, block.bits);
    Ok(WordStream { width, bits })
}

/// Decodes a headerless little-endian signed 16-bit capture.
pub fn read_raw_samples(bytes: &[u8]) -> Result<Vec<i16>, SourceError> {
    if !bytes.len().is_multiple_of(2) {
        return Err(SourceError::OddLength(bytes.len()));
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect())
}

pub fn write_raw_samples(codes: &[i16]) -> Vec<u8> {
    codes.iter().flat_map(|c| c.to_le_bytes()).collect()
}
