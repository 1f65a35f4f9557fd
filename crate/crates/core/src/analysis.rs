//! Output validation: distribution distance, inter-channel dependence,
//! bias and runs checks, bitmaps, and raw export for external test batteries.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::bits::BitString;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("histograms have different domains ({0} vs {1} bins)")]
    DomainMismatch(usize, usize),
    #[error("histogram has no positive mass")]
    EmptyHistogram,
    #[error("histogram entry {0} is negative or not finite")]
    BadEntry(f64),
    #[error("sequences differ in length ({0} vs {1} bits)")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} bits, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("sequence is constant; correlation undefined")]
    Constant,
    #[error("bitmap: {0}")]
    Bitmap(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Half the L1 distance between two histograms after normalizing each.
pub fn statistical_distance(p: &[f64], q: &[f64]) -> Result<f64, AnalysisError> {
    if p.len() != q.len() {
        return Err(AnalysisError::DomainMismatch(p.len(), q.len()));
    }
    let total = |h: &[f64]| -> Result<f64, AnalysisError> {
        if let Some(&bad) = h.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(AnalysisError::BadEntry(bad));
        }
        let s: f64 = h.iter().sum();
        if s > 0.0 {
            Ok(s)
        } else {
            Err(AnalysisError::EmptyHistogram)
        }
    };
    let (sp, sq) = (total(p)?, total(q)?);
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a / sp - b / sq).abs()).sum::<f64>())
}

/// Counts of `(a, b)` bit pairs: `[n00, n01, n10, n11]`.
fn joint_counts(a: &BitString, b: &BitString) -> Result<[u64; 4], AnalysisError> {
    if a.len() != b.len() {
        return Err(AnalysisError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len() as u64;
    let ones_a = a.count_ones() as u64;
    let ones_b = b.count_ones() as u64;
    let both: u64 = a
        .words()
        .iter()
        .zip(b.words())
        .map(|(x, y)| (x & y).count_ones() as u64)
        .sum();
    Ok([
        n + both - ones_a - ones_b,
        ones_b - both,
        ones_a - both,
        both,
    ])
}

/// Pearson correlation of two bit sequences embedded as {0, 1} reals.
pub fn cross_correlation(a: &BitString, b: &BitString) -> Result<f64, AnalysisError> {
    let [_, n01, n10, n11] = joint_counts(a, b)?;
    if a.len() < 2 {
        return Err(AnalysisError::TooShort {
            need: 2,
            got: a.len(),
        });
    }
    let n = a.len() as f64;
    let (sa, sb, sab) = ((n10 + n11) as f64, (n01 + n11) as f64, n11 as f64);
    let var = (sa * (n - sa)) * (sb * (n - sb));
    if var == 0.0 {
        return Err(AnalysisError::Constant);
    }
    Ok(((n * sab - sa * sb) / var.sqrt()).clamp(-1.0, 1.0))
}

/// Plug-in mutual information in bits from the empirical 2x2 joint table.
///
/// No bias correction: for independent inputs the expected value is about
/// `1 / (2 N ln 2)` bits.
pub fn mutual_information(a: &BitString, b: &BitString) -> Result<f64, AnalysisError> {
    let counts = joint_counts(a, b)?;
    if a.is_empty() {
        return Err(AnalysisError::TooShort { need: 1, got: 0 });
    }
    let n = a.len() as f64;
    let pa = [(counts[0] + counts[1]) as f64 / n, (counts[2] + counts[3]) as f64 / n];
    let pb = [(counts[0] + counts[2]) as f64 / n, (counts[1] + counts[3]) as f64 / n];
    let mut mi = 0.0;
    for (cell, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let pxy = c as f64 / n;
        mi += pxy * (pxy / (pa[cell >> 1] * pb[cell & 1])).log2();
    }
    Ok(mi.max(0.0))
}

/// Expected plug-in MI of two independent binary sequences of length `n`.
pub fn mi_bias_independent(n: usize) -> f64 {
    1.0 / (2.0 * n as f64 * std::f64::consts::LN_2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPairStats {
    pub correlation: f64,
    pub mutual_information: f64,
    pub sample_count: usize,
}

impl ChannelPairStats {
    pub fn compute(a: &BitString, b: &BitString) -> Result<Self, AnalysisError> {
        Ok(Self {
            correlation: cross_correlation(a, b)?,
            mutual_information: mutual_information(a, b)?,
            sample_count: a.len(),
        })
    }

    /// `4 / sqrt(N)`: four standard errors of the correlation under independence.
    pub fn correlation_limit(&self) -> f64 {
        4.0 / (self.sample_count as f64).sqrt()
    }

    /// MI threshold equivalent to the correlation limit (`G = 2 N ln2 I`
    /// is chi-square with one degree of freedom, so `G < 16` matches `|z| < 4`),
    /// never tighter than `1e-5` bits.
    pub fn mi_limit(&self) -> f64 {
        (16.0 * mi_bias_independent(self.sample_count)).max(1e-5)
    }

    pub fn passes(&self) -> bool {
        self.correlation.abs() < self.correlation_limit() && self.mutual_information < self.mi_limit()
    }
}

/// Monobit statistic `(2 * ones - N) / sqrt(N)`.
pub fn bias_zscore(bits: &BitString) -> Result<f64, AnalysisError> {
    if bits.len() < 100 {
        return Err(AnalysisError::TooShort {
            need: 100,
            got: bits.len(),
        });
    }
    let n = bits.len() as f64;
    Ok((2.0 * bits.count_ones() as f64 - n) / n.sqrt())
}

/// Normalized deviation of the number of runs from its expectation given
/// the observed ones fraction.
pub fn runs_zscore(bits: &BitString) -> Result<f64, AnalysisError> {
    if bits.len() < 100 {
        return Err(AnalysisError::TooShort {
            need: 100,
            got: bits.len(),
        });
    }
    let n = bits.len() as f64;
    let pi = bits.count_ones() as f64 / n;
    if pi == 0.0 || pi == 1.0 {
        return Err(AnalysisError::Constant);
    }
    let mut transitions = 0u64;
    let words = bits.words();
    for i in 0..words.len() {
        // bit j differs from bit j+1
        let next = (words[i] >> 1) | (words.get(i + 1).copied().unwrap_or(0) << 63);
        let mut diff = words[i] ^ next;
        let valid = (bits.len() - 1).saturating_sub(i * 64).min(64);
        if valid < 64 {
            diff &= (1u64 << valid) - 1;
        }
        transitions += diff.count_ones() as u64;
    }
    let runs = transitions as f64 + 1.0;
    let expected = 2.0 * n * pi * (1.0 - pi);
    Ok((runs - expected) / (2.0 * (2.0 * n).sqrt() * pi * (1.0 - pi)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbmFormat {
    /// ASCII `P1`.
    Plain,
    /// Binary `P4`.
    Raw,
}

/// Renders the first `width * height` bits row-major as a portable bitmap.
/// Bit 1 is a black pixel.
pub fn bitmap_render(
    bits: &BitString,
    width: usize,
    height: usize,
    format: PbmFormat,
) -> Result<Vec<u8>, AnalysisError> {
    let need = width
        .checked_mul(height)
        .ok_or_else(|| AnalysisError::Bitmap("dimensions overflow".into()))?;
    if bits.len() < need || need == 0 {
        return Err(AnalysisError::TooShort {
            need: need.max(1),
            got: bits.len(),
        });
    }
    let mut out = Vec::new();
    match format {
        PbmFormat::Plain => {
            writeln!(out, "P1\n{width} {height}")?;
            for r in 0..height {
                let row: Vec<&str> = (0..width)
                    .map(|c| if bits.get(r * width + c) { "1" } else { "0" })
                    .collect();
                writeln!(out, "{}", row.join(" "))?;
            }
        }
        PbmFormat::Raw => {
            write!(out, "P4\n{width} {height}\n")?;
            for r in 0..height {
                for chunk in 0..width.div_ceil(8) {
                    let mut byte = 0u8;
                    for i in 0..8 {
                        let c = chunk * 8 + i;
                        if c < width && bits.get(r * width + c) {
                            byte |= 0x80 >> i;
                        }
                    }
                    out.push(byte);
                }
            }
        }
    }
    Ok(out)
}

/// A decoded portable bitmap: pixels row-major, 1 = black.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    pub width: usize,
    pub height: usize,
    pub pixels: BitString,
}

// Largest image the parser accepts, in pixels.
const MAX_PIXELS: usize = 1 << 28;

/// Parses `P1` or `P4` images. Comments (`#` to end of line) are allowed in
/// the header.
pub fn parse_pbm(bytes: &[u8]) -> Result<Bitmap, AnalysisError> {
    let bad = |m: &str| AnalysisError::Bitmap(m.to_string());
    let mut pos = 0;
    let skip_space = |pos: &mut usize| {
        while *pos < bytes.len() {
            match bytes[*pos] {
                b'#' => {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => *pos += 1,
                _ => break,
            }
        }
    };
    let number = |pos: &mut usize| -> Result<usize, AnalysisError> {
        skip_space(pos);
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
        std::str::from_utf8(&bytes[start..*pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("expected a decimal dimension"))
    };
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(bad("missing magic"));
    }
    let raw = match bytes[1] {
        b'1' => false,
        b'4' => true,
        _ => return Err(bad("unsupported magic, expected P1 or P4")),
    };
    pos += 2;
    let width = number(&mut pos)?;
    let height = number(&mut pos)?;
    let pixels_total = width
        .checked_mul(height)
        .filter(|&p| p <= MAX_PIXELS)
        .ok_or_else(|| bad("image too large"))?;
    if pixels_total == 0 {
        return Err(bad("image has no pixels"));
    }
    // every pixel needs at least one input bit, so this bounds the allocation
    let mut pixels = BitString::with_capacity(pixels_total.min(bytes.len() * 8));
    if raw {
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(bad("missing separator before raster"));
        }
        pos += 1;
        let row_bytes = width.div_ceil(8);
        let data = &bytes[pos..];
        if data.len() < row_bytes * height {
            return Err(bad("truncated raster"));
        }
        for r in 0..height {
            let row = &data[r * row_bytes..(r + 1) * row_bytes];
            for c in 0..width {
                pixels.push(row[c / 8] & (0x80 >> (c % 8)) != 0);
            }
        }
    } else {
        while pixels.len() < pixels_total {
            skip_space(&mut pos);
            match bytes.get(pos) {
                Some(b'0') => pixels.push(false),
                Some(b'1') => pixels.push(true),
                Some(_) => return Err(bad("unexpected character in raster")),
                None => return Err(bad("truncated raster")),
            }
            pos += 1;
        }
    }
    Ok(Bitmap {
        width,
        height,
        pixels,
    })
}

/// Writes the bits LSB-first packed, the layout external batteries read as a
/// raw binary stream. Returns the byte count.
pub fn export_for_suites(bits: &BitString, path: &Path) -> Result<usize, AnalysisError> {
    if bits.is_empty() {
        return Err(AnalysisError::TooShort { need: 1, got: 0 });
    }
    let bytes = bits.to_bytes();
    fs::write(path, &bytes)?;
    Ok(bytes.len())
}

/// Reads a packed bitstream file; every byte contributes 8 bits.
pub fn read_bitstream(path: &Path) -> Result<BitString, AnalysisError> {
    let bytes = fs::read(path)?;
    Ok(BitString::from_bytes(&bytes, bytes.len() * 8).expect("length is exact"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn bs(bits: &[u8]) -> BitString {
        BitString::from_bits(bits)
    }

    fn random_bits(n: usize, seed: u64) -> BitString {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let words = (0..n.div_ceil(64)).map(|_| rng.gen()).collect();
        BitString::from_words(words, n)
    }

    #[test]
    fn distance_examples() {
        assert_eq!(statistical_distance(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 0.0);
        assert_eq!(statistical_distance(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 1.0);
        assert!((statistical_distance(&[0.5, 0.5], &[0.75, 0.25]).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(
            statistical_distance(&[1.0], &[1.0, 1.0]),
            Err(AnalysisError::DomainMismatch(1, 2))
        ));
        assert!(statistical_distance(&[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(statistical_distance(&[-1.0, 2.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn correlation_examples() {
        let a = bs(&[0, 1, 1, 0, 1, 0, 0, 1]);
        assert!((cross_correlation(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert!((cross_correlation(&a, &a.complement()).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(cross_correlation(&bs(&[0, 1, 0, 1]), &bs(&[0, 1, 1, 0])).unwrap(), 0.0);
        assert!(matches!(
            cross_correlation(&bs(&[1, 1, 1]), &bs(&[0, 1, 0])),
            Err(AnalysisError::Constant)
        ));
        assert!(cross_correlation(&bs(&[1]), &bs(&[0])).is_err());
        assert!(cross_correlation(&bs(&[1, 0]), &bs(&[0])).is_err());
    }

    #[test]
    fn mutual_information_examples() {
        let a = bs(&[0, 1, 1, 0, 1, 0, 0, 1]);
        assert!((mutual_information(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(mutual_information(&bs(&[0, 0, 1, 1]), &bs(&[0, 1, 0, 1])).unwrap(), 0.0);
        let x = random_bits(1_000_000, 1);
        let y = random_bits(1_000_000, 2);
        assert!(mutual_information(&x, &y).unwrap() <= 1e-5);
    }

    #[test]
    fn bias_examples() {
        let mut half = BitString::zeros(200);
        for i in 0..100 {
            half.set(i, true);
        }
        assert_eq!(bias_zscore(&half).unwrap(), 0.0);
        let ones = BitString::zeros(400).complement();
        assert_eq!(bias_zscore(&ones).unwrap(), 20.0);
        let mut x = BitString::zeros(10_000);
        for i in 0..5100 {
            x.set(i, true);
        }
        assert!((bias_zscore(&x).unwrap() - 2.0).abs() < 1e-12);
        assert!(bias_zscore(&BitString::zeros(99)).is_err());
    }

    #[test]
    fn runs_detects_alternation() {
        let alt: BitString = (0..1000).map(|i| i % 2 == 0).collect();
        assert!(runs_zscore(&alt).unwrap() > 10.0);
        let blocks: BitString = (0..1000).map(|i| (i / 100) % 2 == 0).collect();
        assert!(runs_zscore(&blocks).unwrap() < -10.0);
        assert!(runs_zscore(&random_bits(100_000, 9)).unwrap().abs() < 4.5);
    }

    #[test]
    fn runs_counts_transitions_across_words() {
        // two runs: 70 ones then 60 zeros
        let x: BitString = (0..130).map(|i| i < 70).collect();
        let pi = 70.0 / 130.0;
        let n = 130.0;
        let z = runs_zscore(&x).unwrap();
        let expected = (2.0 - 2.0 * n * pi * (1.0 - pi)) / (2.0 * (2.0 * n as f64).sqrt() * pi * (1.0 - pi));
        assert!((z - expected).abs() < 1e-12);
    }

    #[test]
    fn bitmap_formats() {
        let zeros = BitString::zeros(4096);
        let p4 = bitmap_render(&zeros, 64, 64, PbmFormat::Raw).unwrap();
        let header = b"P4\n64 64\n";
        assert_eq!(p4.len(), 8 * 64 + header.len());
        assert!(p4[header.len()..].iter().all(|&b| b == 0));
        let x = random_bits(4096, 3);
        for fmt in [PbmFormat::Plain, PbmFormat::Raw] {
            let img = parse_pbm(&bitmap_render(&x, 64, 64, fmt).unwrap()).unwrap();
            assert_eq!((img.width, img.height), (64, 64));
            assert_eq!(img.pixels, x);
        }
        let odd = random_bits(300, 4);
        let img = parse_pbm(&bitmap_render(&odd, 13, 21, PbmFormat::Raw).unwrap()).unwrap();
        assert_eq!(img.pixels, odd.slice(0, 273).unwrap());
        assert!(bitmap_render(&zeros, 65, 64, PbmFormat::Raw).is_err());
    }

    #[test]
    fn pbm_parser_rejects_garbage() {
        assert!(parse_pbm(b"").is_err());
        assert!(parse_pbm(b"P5\n1 1\n\0").is_err());
        assert!(parse_pbm(b"P4\n8 2\n\xff").is_err());
        assert!(parse_pbm(b"P1\n2 1\n1 x").is_err());
        assert!(parse_pbm(b"P1\n99999999 99999999\n").is_err());
        assert!(parse_pbm(b"P4\n0 99999999999\n").is_err());
        assert!(parse_pbm(b"P1\n0 0\n").is_err());
        let ok = parse_pbm(b"P1 # comment\n2 1\n1 0\n").unwrap();
        assert_eq!(ok.pixels, bs(&[1, 0]));
    }

    #[test]
    fn export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bits.bin");
        assert_eq!(export_for_suites(&bs(&[1, 0, 1, 1, 0, 0, 0, 1]), &path).unwrap(), 1);
        let x = random_bits(8 * 1000, 5);
        assert_eq!(export_for_suites(&x, &path).unwrap(), 1000);
        assert_eq!(read_bitstream(&path).unwrap(), x);
        assert!(export_for_suites(&BitString::new(), &path).is_err());
    }

    #[test]
    fn export_size_arithmetic() {
        // 1e9 bits pack into 125,000,000 bytes
        let len = 1_000_000_000usize;
        assert_eq!(len.div_ceil(8), 125_000_000);
    }

    fn arb_hist(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..10.0, n).prop_filter("positive", |h| h.iter().sum::<f64>() > 0.0)
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(p in arb_hist(6), q in arb_hist(6), r in arb_hist(6)) {
            let d = |a: &[f64], b: &[f64]| statistical_distance(a, b).unwrap();
            prop_assert!((d(&p, &q) - d(&q, &p)).abs() < 1e-12);
            prop_assert!(d(&p, &p) < 1e-12);
            prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&d(&p, &q)));
        }

        #[test]
        fn mi_symmetric_nonnegative(seed in any::<u64>(), n in 2usize..500) {
            let a = random_bits(n, seed);
            let b = random_bits(n, seed ^ 0xDEAD);
            let ab = mutual_information(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - mutual_information(&b, &a).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn correlation_complement_invariant(seed in any::<u64>(), n in 2usize..500) {
            let a = random_bits(n, seed);
            let b = random_bits(n, seed.wrapping_add(1));
            if let Ok(r) = cross_correlation(&a, &b) {
                let rc = cross_correlation(&a.complement(), &b.complement()).unwrap();
                prop_assert!((r - rc).abs() < 1e-12);
                prop_assert!(r.abs() <= 1.0);
            }
        }
    }
}
