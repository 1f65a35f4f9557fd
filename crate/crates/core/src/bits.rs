//! Bit strings over GF(2).
//!
//! A [`BitString`] is an ordered sequence of bits packed into `u64` words.
//! Global bit `i` lives in word `i / 64` at bit position `i % 64`, so byte
//! serialization is LSB-first: bit `i` of byte `j` is global bit `8j + i`.
//! Every file format in this crate inherits that ordering.
//!
//! Bits at positions `>= len` in the final word are always zero.

use std::fmt;

use thiserror::Error;

const WORD_BITS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BitError {
    #[error("length mismatch: {left} bits vs {right} bits")]
    LengthMismatch { left: usize, right: usize },
    #[error("range {start}..{start}+{len} out of bounds for {available} bits")]
    OutOfRange {
        start: usize,
        len: usize,
        available: usize,
    },
    #[error("{bits} bits requested from {bytes} bytes")]
    ShortBytes { bits: usize, bytes: usize },
}

#[inline]
fn words_for(len: usize) -> usize {
    len.div_ceil(WORD_BITS)
}

#[inline]
fn tail_mask(len: usize) -> u64 {
    match len % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        Self {
            words: Vec::with_capacity(words_for(bits)),
            len: 0,
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; words_for(len)],
            len,
        }
    }

    /// Builds a string from packed words; bits past `len` are discarded.
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Self {
        words.resize(words_for(len), 0);
        let mut out = Self { words, len };
        out.clear_tail();
        out
    }

    /// Builds a string from a slice of `0`/`1` values. Any nonzero byte is a one.
    pub fn from_bits(bits: &[u8]) -> Self {
        bits.iter().map(|&b| b != 0).collect()
    }

    /// Reads the first `len` bits of `bytes` (LSB-first within each byte).
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self, BitError> {
        if len > bytes.len() * 8 {
            return Err(BitError::ShortBytes {
                bits: len,
                bytes: bytes.len(),
            });
        }
        let mut words = vec![0u64; words_for(len)];
        for (i, chunk) in bytes[..len.div_ceil(8)].chunks(8).enumerate() {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            words[i] = u64::from_le_bytes(buf);
        }
        Ok(Self::from_words(words, len))
    }

    /// Packs into `ceil(len / 8)` bytes, zero-padding the final partial byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.truncate(self.len.div_ceil(8));
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for {}", self.len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range for {}", self.len);
        let mask = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(WORD_BITS) {
            self.words.push(0);
        }
        if bit {
            self.words[self.len / WORD_BITS] |= 1 << (self.len % WORD_BITS);
        }
        self.len += 1;
    }

    /// Appends the low `count` bits of `value`, least significant first.
    pub fn push_word(&mut self, value: u64, count: usize) {
        assert!(count <= WORD_BITS);
        if count == 0 {
            return;
        }
        let value = if count == WORD_BITS {
            value
        } else {
            value & ((1u64 << count) - 1)
        };
        let offset = self.len % WORD_BITS;
        if offset == 0 {
            self.words.push(value);
        } else {
            *self.words.last_mut().unwrap() |= value << offset;
            if offset + count > WORD_BITS {
                self.words.push(value >> (WORD_BITS - offset));
            }
        }
        self.len += count;
    }

    pub fn extend_from(&mut self, other: &BitString) {
        if self.len.is_multiple_of(WORD_BITS) {
            self.words.extend_from_slice(&other.words);
            self.len += other.len;
            return;
        }
        let mut remaining = other.len;
        for &w in &other.words {
            let take = remaining.min(WORD_BITS);
            self.push_word(w, take);
            remaining -= take;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// `self[i] ^= src[i]` for every `i`.
    pub fn xor_assign(&mut self, src: &BitString) -> Result<(), BitError> {
        if self.len != src.len {
            return Err(BitError::LengthMismatch {
                left: self.len,
                right: src.len,
            });
        }
        for (a, b) in self.words.iter_mut().zip(&src.words) {
            *a ^= b;
        }
        Ok(())
    }

    pub fn xor(&self, other: &BitString) -> Result<BitString, BitError> {
        let mut out = self.clone();
        out.xor_assign(other)?;
        Ok(out)
    }

    /// Parity of `popcount(self AND other)`: the GF(2) inner product.
    pub fn dot_parity(&self, other: &BitString) -> Result<bool, BitError> {
        if self.len != other.len {
            return Err(BitError::LengthMismatch {
                left: self.len,
                right: other.len,
            });
        }
        let ones: u32 = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum();
        Ok(ones & 1 == 1)
    }

    pub fn slice(&self, start: usize, len: usize) -> Result<BitString, BitError> {
        match start.checked_add(len) {
            Some(end) if end <= self.len => {}
            _ => {
                return Err(BitError::OutOfRange {
                    start,
                    len,
                    available: self.len,
                })
            }
        }
        let words = (0..words_for(len))
            .map(|w| self.word_at(start + w * WORD_BITS))
            .collect();
        Ok(Self::from_words(words, len))
    }

    /// Bitwise complement of every bit.
    pub fn complement(&self) -> BitString {
        let words = self.words.iter().map(|w| !w).collect();
        Self::from_words(words, self.len)
    }

    /// The same bits in reverse order.
    pub fn reversed(&self) -> BitString {
        let padded = self.words.len() * WORD_BITS;
        let flipped = Self::from_words(self.words.iter().rev().map(|w| w.reverse_bits()).collect(), padded);
        flipped
            .slice(padded - self.len, self.len)
            .expect("within padded length")
    }

    /// 64 bits starting at bit `offset`; positions past the end read as zero.
    #[inline]
    pub(crate) fn word_at(&self, offset: usize) -> u64 {
        let idx = offset / WORD_BITS;
        let shift = offset % WORD_BITS;
        let lo = self.words.get(idx).copied().unwrap_or(0);
        if shift == 0 {
            return lo;
        }
        let hi = self.words.get(idx + 1).copied().unwrap_or(0);
        (lo >> shift) | (hi << (WORD_BITS - shift))
    }

    /// `self[i] ^= src[offset + i]` for every `i < self.len()`.
    ///
    /// Caller guarantees `offset + self.len() <= src.len()`.
    #[inline]
    pub(crate) fn xor_window(&mut self, src: &BitString, offset: usize) {
        debug_assert!(offset + self.len <= src.len);
        let n = self.words.len();
        let from = &src.words[(offset / WORD_BITS).min(src.words.len())..];
        let shift = offset % WORD_BITS;
        if shift == 0 {
            for (d, s) in self.words.iter_mut().zip(from) {
                *d ^= s;
            }
        } else {
            for (w, d) in self.words.iter_mut().enumerate() {
                let lo = from.get(w).copied().unwrap_or(0);
                let hi = from.get(w + 1).copied().unwrap_or(0);
                *d ^= (lo >> shift) | (hi << (WORD_BITS - shift));
            }
        }
        if n > 0 {
            self.words[n - 1] &= tail_mask(self.len);
        }
    }

    fn clear_tail(&mut self) {
        if let Some(last) = self.words.last_mut() {
            *last &= tail_mask(self.len);
        }
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let mut out = BitString::new();
        for b in iter {
            out.push(b);
        }
        out
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString[{}](", self.len)?;
        for (i, b) in self.iter().enumerate() {
            if i == 64 {
                write!(f, "...")?;
                break;
            }
            write!(f, "{}", b as u8)?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            write!(f, "{}", b as u8)?;
        }
        Ok(())
    }
}
