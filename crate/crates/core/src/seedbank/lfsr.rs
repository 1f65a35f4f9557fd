//! Galois LFSR used to pick which stored seed serves the next block.

use super::SeedError;
use crate::bits::BitString;

/// Right-shifting Galois tap masks for maximal-length registers.
pub const MAXIMAL_TAPS: &[(u32, u64)] = &[
    (4, 0xC),
    (8, 0xB8),
    (16, 0xB400),
    (20, 0x9_0000),
    (24, 0xE1_0000),
];

pub const DEFAULT_WIDTH: u32 = 16;
pub const DEFAULT_TAPS: u64 = 0xB400;

pub fn maximal_taps(width: u32) -> Option<u64> {
    MAXIMAL_TAPS
        .iter()
        .find(|(w, _)| *w == width)
        .map(|&(_, t)| t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LfsrState {
    register: u64,
    taps: u64,
    width: u32,
}

impl LfsrState {
    pub fn new(width: u32, taps: u64, register: u64) -> Result<Self, SeedError> {
        if !(2..=63).contains(&width) {
            return Err(SeedError::Lfsr("width must be in 2..=63"));
        }
        let mask = (1u64 << width) - 1;
        if taps & !mask != 0 || taps >> (width - 1) != 1 {
            return Err(SeedError::Lfsr("taps must fit the width and include the top bit"));
        }
        if register & mask == 0 || register & !mask != 0 {
            return Err(SeedError::Lfsr("register must be a nonzero value of the given width"));
        }
        Ok(Self {
            register,
            taps,
            width,
        })
    }

    /// Seeds the register from the first nonzero `width`-bit window of
    /// `material` (windows taken back to back from bit 0, last one zero-padded).
    pub fn from_material(material: &BitString, width: u32, taps: u64) -> Result<Self, SeedError> {
        let w = width as usize;
        let mut start = 0;
        while start < material.len() {
            let take = w.min(material.len() - start);
            let window = material.slice(start, take)?;
            let value = window
                .iter()
                .enumerate()
                .fold(0u64, |acc, (i, b)| acc | ((b as u64) << i));
            if value != 0 {
                return Self::new(width, taps, value);
            }
            start += w;
        }
        Err(SeedError::ZeroMaterial)
    }

    pub fn register(&self) -> u64 {
        self.register
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn taps(&self) -> u64 {
        self.taps
    }

    /// One Galois step; returns the bit shifted out.
    #[inline]
    pub fn step(&mut self) -> bool {
        let out = self.register & 1 == 1;
        self.register >>= 1;
        if out {
            self.register ^= self.taps;
        }
        out
    }

    pub fn advance(&mut self, steps: usize) {
        for _ in 0..steps {
            self.step();
        }
    }

    /// Clocks `width` steps and packs the output bits, first bit least significant.
    pub fn next_value(&mut self) -> u64 {
        (0..self.width).fold(0u64, |acc, i| acc | ((self.step() as u64) << i))
    }
}

/// Index of the interval, out of `b` equal parts of `0..2^width`, holding `value`.
pub fn select_seed(value: u64, b: usize, width: u32) -> Result<usize, SeedError> {
    if !b.is_power_of_two() || b.trailing_zeros() > width {
        return Err(SeedError::BankSize(b));
    }
    Ok((value >> (width - b.trailing_zeros())) as usize)
}
