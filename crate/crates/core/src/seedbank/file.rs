//! `QRS1` seed files.
//!
//! ```text
//! offset  size                     field
//! 0       4                        magic "QRS1"
//! 4       4                        m  (u32 LE)
//! 8       4                        n  (u32 LE)
//! 12      4                        k  (u32 LE)
//! 16      4                        b  (u32 LE)
//! 20      b * ceil((m+n-1)/8)      seeds, each LSB-first, zero-padded to a byte
//! ```

use super::SeedError;
use crate::bits::BitString;
use crate::extractor::ToeplitzConfig;

pub const MAGIC: &[u8; 4] = b"QRS1";
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedFile {
    pub cfg: ToeplitzConfig,
    pub seeds: Vec<BitString>,
}

impl SeedFile {
    pub fn new(cfg: ToeplitzConfig, seeds: Vec<BitString>) -> Result<Self, SeedError> {
        if !seeds.len().is_power_of_two() {
            return Err(SeedError::BankSize(seeds.len()));
        }
        for s in &seeds {
            if s.len() != cfg.seed_len() {
                return Err(SeedError::MaterialLength {
                    expected: cfg.seed_len(),
                    got: s.len(),
                });
            }
        }
        Ok(Self { cfg, seeds })
    }

    /// Splits concatenated material into `b` seeds.
    pub fn from_material(cfg: ToeplitzConfig, b: usize, material: &BitString) -> Result<Self, SeedError> {
        let len = cfg.seed_len();
        if material.len() != b * len {
            return Err(SeedError::MaterialLength {
                expected: b * len,
                got: material.len(),
            });
        }
        let seeds = (0..b)
            .map(|y| material.slice(y * len, len))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(cfg, seeds)
    }

    pub fn b(&self) -> usize {
        self.seeds.len()
    }

    pub fn material(&self) -> BitString {
        let mut out = BitString::with_capacity(self.b() * self.cfg.seed_len());
        for s in &self.seeds {
            out.extend_from(s);
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.b() * self.cfg.seed_len().div_ceil(8));
        out.extend_from_slice(MAGIC);
        for v in [self.cfg.m(), self.cfg.n(), self.cfg.k(), self.b()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for s in &self.seeds {
            out.extend_from_slice(&s.to_bytes());
        }
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, SeedError> {
        if bytes.len() < HEADER_LEN {
            return Err(SeedError::Format(format!(
                "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(SeedError::Format("bad magic, expected \"QRS1\"".into()));
        }
        let field = |i: usize| {
            let off = 4 + 4 * i;
            u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize
        };
        let (m, n, k, b) = (field(0), field(1), field(2), field(3));
        let cfg = ToeplitzConfig::new(m, n, k).map_err(|e| SeedError::Format(e.to_string()))?;
        if !b.is_power_of_two() {
            return Err(SeedError::BankSize(b));
        }
        let seed_bytes = cfg.seed_len().div_ceil(8);
        let body = &bytes[HEADER_LEN..];
        let expected = seed_bytes.checked_mul(b);
        if expected != Some(body.len()) {
            return Err(SeedError::Format(format!(
                "seed material is {} bytes, header implies {} x {seed_bytes}",
                body.len(),
                b
            )));
        }
        let seeds = body
            .chunks(seed_bytes)
            .map(|chunk| {
                let seed = BitString::from_bytes(chunk, cfg.seed_len())?;
                if seed.to_bytes() != chunk {
                    return Err(SeedError::Format("nonzero padding bits after a seed".into()));
                }
                Ok(seed)
            })
            .collect::<Result<Vec<_>, SeedError>>()?;
        Self::new(cfg, seeds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SeedFile {
        let cfg = ToeplitzConfig::new(2, 4, 2).unwrap();
        let material = BitString::from_bits(&[1, 0, 1, 1, 0, 0, 1, 1, 1, 1]);
        SeedFile::from_material(cfg, 2, &material).unwrap()
    }

    #[test]
    fn layout_is_bit_exact() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..4], b"QRS1");
        assert_eq!(&bytes[4..20], &[2, 0, 0, 0, 4, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0]);
        // seed_0 = 10110 -> 0b01101, seed_1 = 01111 -> 0b11110
        assert_eq!(&bytes[20..], &[0b0_1101, 0b1_1110]);
        assert_eq!(SeedFile::parse(&bytes).unwrap(), sample());
    }

    #[test]
    fn rejects_malformed_files() {
        let good = sample().to_bytes();
        assert!(SeedFile::parse(&good[..10]).is_err());
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(SeedFile::parse(&bad_magic).is_err());
        assert!(SeedFile::parse(&good[..good.len() - 1]).is_err());
        let mut padded = good.clone();
        padded[20] |= 0x80;
        assert!(SeedFile::parse(&padded).is_err());
        let mut b3 = good.clone();
        b3[16] = 3;
        assert!(matches!(SeedFile::parse(&b3), Err(SeedError::BankSize(3))));
        let mut huge = good;
        huge[16..20].copy_from_slice(&(1u32 << 31).to_le_bytes());
        assert!(SeedFile::parse(&huge).is_err());
    }
}
