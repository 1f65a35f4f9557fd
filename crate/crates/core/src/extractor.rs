//! Toeplitz hashing, direct and blockwise.
//!
//! Index convention (0-indexed): for an `m x n` matrix built from a seed of
//! `m + n - 1` bits,
//!
//! ```text
//! T[r][c] = seed[m - 1 - r + c],   r in 0..m, c in 0..n
//! ```
//!
//! so the top-left entry is `seed[m-1]`, the first column reads
//! `seed[m-1], seed[m-2], .., seed[0]` downwards, and the first row reads
//! `seed[m-1], seed[m], .., seed[m+n-2]` rightwards. In 1-indexed terms that
//! is `s_m` at the top-left with `s_1` at the bottom of the first column.
//!
//! The blockwise engine splits the `n` input bits into `n / k` sub-blocks of
//! `k` bits. Sub-block `p` meets columns `p*k .. (p+1)*k`, which only touch
//! the window `seed[p*k .. p*k + m + k - 1]` (the sub-seed). Within a sub-seed,
//! column `j` of the `m x k` sub-matrix is `sub[j .. j + m]` read bottom-up,
//! i.e. row `r` of column `j` is `sub[m - 1 - r + j]`.

use thiserror::Error;

use crate::bits::{BitError, BitString};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("invalid geometry m={m} n={n} k={k}: {reason}")]
    Geometry {
        m: usize,
        n: usize,
        k: usize,
        reason: &'static str,
    },
    #[error("{what}: expected {expected} bits, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("step {step} out of range for {steps} steps per block")]
    StepOutOfRange { step: usize, steps: usize },
    #[error("block not complete: {step} of {steps} steps done")]
    Incomplete { step: usize, steps: usize },
    #[error(transparent)]
    Bits(#[from] BitError),
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), ExtractError> {
    if expected == got {
        Ok(())
    } else {
        Err(ExtractError::Length {
            what,
            expected,
            got,
        })
    }
}

/// Geometry of one Toeplitz extractor: `m` output bits from `n` input bits,
/// processed `k` input bits per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ToeplitzConfig {
    m: usize,
    n: usize,
    k: usize,
}

impl ToeplitzConfig {
    pub fn new(m: usize, n: usize, k: usize) -> Result<Self, ExtractError> {
        let bad = |reason| ExtractError::Geometry { m, n, k, reason };
        if m == 0 {
            return Err(bad("m must be at least 1"));
        }
        if k == 0 || k > n {
            return Err(bad("k must satisfy 1 <= k <= n"));
        }
        if !n.is_multiple_of(k) {
            return Err(bad("n must be a multiple of k"));
        }
        if m > n {
            log::warn!("Toeplitz geometry m={m} > n={n}: extraction ratio above 1 cannot be secure");
        }
        Ok(Self { m, n, k })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed_len(&self) -> usize {
        self.m + self.n - 1
    }

    pub fn subseed_len(&self) -> usize {
        self.m + self.k - 1
    }

    /// Sub-blocks per `n`-bit input block.
    pub fn steps(&self) -> usize {
        self.n / self.k
    }

    /// Same `m` and `n` with a different sub-block width.
    pub fn with_k(&self, k: usize) -> Result<Self, ExtractError> {
        Self::new(self.m, self.n, k)
    }
}

/// Reference product `T(seed) * input`, one row inner product at a time.
pub fn toeplitz_direct(
    seed: &BitString,
    input: &BitString,
    cfg: &ToeplitzConfig,
) -> Result<BitString, ExtractError> {
    check_len("seed", cfg.seed_len(), seed.len())?;
    check_len("input", cfg.n, input.len())?;
    (0..cfg.m)
        .map(|r| {
            let row = seed.slice(cfg.m - 1 - r, cfg.n)?;
            Ok(row.dot_parity(input)?)
        })
        .collect()
}

/// The `(m + k - 1)`-bit window of `seed` that generates sub-matrix `step`.
pub fn subseed(
    seed: &BitString,
    step: usize,
    cfg: &ToeplitzConfig,
) -> Result<BitString, ExtractError> {
    check_len("seed", cfg.seed_len(), seed.len())?;
    if step >= cfg.steps() {
        return Err(ExtractError::StepOutOfRange {
            step,
            steps: cfg.steps(),
        });
    }
    Ok(seed.slice(step * cfg.k, cfg.subseed_len())?)
}

/// `acc[j] ^= sub[c + j]` for every set bit `c` of `block`.
///
/// `acc` holds the `m` output bits in reverse row order: `acc[j]` is row
/// `m - 1 - j`. In that order every sub-matrix column is a contiguous window
/// of the sub-seed.
#[inline]
fn accumulate_columns(acc: &mut BitString, sub: &BitString, block: &BitString) {
    for (wi, &word) in block.words().iter().enumerate() {
        let mut w = word;
        while w != 0 {
            let c = wi * 64 + w.trailing_zeros() as usize;
            acc.xor_window(sub, c);
            w &= w - 1;
        }
    }
}

/// Product of the `m x k` sub-matrix generated by `sub` with a `k`-bit block.
pub fn submatrix_multiply(
    sub: &BitString,
    block: &BitString,
    m: usize,
    k: usize,
) -> Result<BitString, ExtractError> {
    if m == 0 || k == 0 {
        return Err(ExtractError::Geometry {
            m,
            n: k,
            k,
            reason: "sub-matrix dimensions must be nonzero",
        });
    }
    check_len("sub-seed", m + k - 1, sub.len())?;
    check_len("block", k, block.len())?;
    let mut acc = BitString::zeros(m);
    accumulate_columns(&mut acc, sub, block);
    Ok(acc.reversed())
}

/// Accumulator for one `n`-bit block processed `k` bits at a time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractorState {
    cfg: ToeplitzConfig,
    // output rows in reverse order, see `accumulate_columns`
    acc: BitString,
    step: usize,
}

impl ExtractorState {
    pub fn new(cfg: ToeplitzConfig) -> Self {
        Self {
            cfg,
            acc: BitString::zeros(cfg.m),
            step: 0,
        }
    }

    pub fn config(&self) -> &ToeplitzConfig {
        &self.cfg
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Current partial product in output order.
    pub fn accumulator(&self) -> BitString {
        self.acc.reversed()
    }

    /// XORs one sub-matrix product into the accumulator.
    pub fn stream_step(&mut self, sub: &BitString, block: &BitString) -> Result<(), ExtractError> {
        if self.step >= self.cfg.steps() {
            return Err(ExtractError::StepOutOfRange {
                step: self.step,
                steps: self.cfg.steps(),
            });
        }
        check_len("sub-seed", self.cfg.subseed_len(), sub.len())?;
        check_len("block", self.cfg.k, block.len())?;
        accumulate_columns(&mut self.acc, sub, block);
        self.step += 1;
        Ok(())
    }

    /// Emits the `m`-bit result after all `n / k` steps and resets.
    pub fn finalize(&mut self) -> Result<BitString, ExtractError> {
        if self.step != self.cfg.steps() {
            return Err(ExtractError::Incomplete {
                step: self.step,
                steps: self.cfg.steps(),
            });
        }
        let out = self.acc.reversed();
        self.acc = BitString::zeros(self.cfg.m);
        self.step = 0;
        Ok(out)
    }

    /// Runs one whole block given its `n / k` sub-seeds in step order.
    pub fn extract_block(
        &mut self,
        subseeds: &[BitString],
        input: &BitString,
    ) -> Result<BitString, ExtractError> {
        check_len("input", self.cfg.n, input.len())?;
        if subseeds.len() != self.cfg.steps() {
            return Err(ExtractError::Length {
                what: "sub-seed count",
                expected: self.cfg.steps(),
                got: subseeds.len(),
            });
        }
        let k = self.cfg.k;
        for (p, sub) in subseeds.iter().enumerate() {
            let block = input.slice(p * k, k)?;
            self.stream_step(sub, &block)?;
        }
        self.finalize()
    }
}

/// Blockwise extraction of one `n`-bit input directly from a full seed.
pub fn toeplitz_streaming(
    seed: &BitString,
    input: &BitString,
    cfg: &ToeplitzConfig,
) -> Result<BitString, ExtractError> {
    check_len("seed", cfg.seed_len(), seed.len())?;
    let subs = (0..cfg.steps())
        .map(|p| subseed(seed, p, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    ExtractorState::new(*cfg).extract_block(&subs, input)
}

/// Collects an arbitrary bit stream into whole `n`-bit blocks. Bits that do
/// not yet fill a block stay buffered.
#[derive(Debug, Clone)]
pub struct BlockBuffer {
    n: usize,
    pending: BitString,
}

impl BlockBuffer {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            pending: BitString::with_capacity(2 * n),
        }
    }

    pub fn push(&mut self, bits: &BitString) {
        self.pending.extend_from(bits);
    }

    pub fn push_word(&mut self, value: u64, count: usize) {
        self.pending.push_word(value, count);
    }

    pub fn pending_bits(&self) -> usize {
        self.pending.len()
    }

    pub fn pop_block(&mut self) -> Option<BitString> {
        if self.pending.len() < self.n {
            return None;
        }
        let block = self.pending.slice(0, self.n).ok()?;
        let rest = self.pending.len() - self.n;
        self.pending = self.pending.slice(self.n, rest).ok()?;
        Some(block)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bs(bits: &[u8]) -> BitString {
        BitString::from_bits(bits)
    }

    fn cfg(m: usize, n: usize, k: usize) -> ToeplitzConfig {
        ToeplitzConfig::new(m, n, k).unwrap()
    }

    #[test]
    fn geometry_validation() {
        assert!(ToeplitzConfig::new(0, 4, 2).is_err());
        assert!(ToeplitzConfig::new(2, 4, 0).is_err());
        assert!(ToeplitzConfig::new(2, 4, 3).is_err());
        assert!(ToeplitzConfig::new(2, 4, 8).is_err());
        let c = cfg(1729, 2464, 32);
        assert_eq!(c.seed_len(), 4192);
        assert_eq!(c.subseed_len(), 1760);
        assert_eq!(c.steps(), 77);
        // m > n is allowed, only warned about
        assert!(ToeplitzConfig::new(8, 4, 2).is_ok());
    }

    #[test]
    fn direct_examples() {
        let c = cfg(2, 3, 3);
        let seed = bs(&[1, 0, 1, 1]);
        assert_eq!(toeplitz_direct(&seed, &bs(&[0, 0, 0]), &c).unwrap(), bs(&[0, 0]));
        assert_eq!(toeplitz_direct(&seed, &bs(&[1, 1, 0]), &c).unwrap(), bs(&[1, 1]));
        let zero = BitString::zeros(4);
        assert_eq!(toeplitz_direct(&zero, &bs(&[1, 0, 1]), &c).unwrap(), bs(&[0, 0]));
        assert!(toeplitz_direct(&seed, &bs(&[1, 1]), &c).is_err());
        assert!(toeplitz_direct(&bs(&[1, 1]), &bs(&[1, 1, 0]), &c).is_err());
    }

    #[test]
    fn subseed_examples() {
        let c = cfg(2, 4, 2);
        let seed = bs(&[1, 0, 1, 1, 0]);
        assert_eq!(subseed(&seed, 0, &c).unwrap(), bs(&[1, 0, 1]));
        assert_eq!(subseed(&seed, 1, &c).unwrap(), bs(&[1, 1, 0]));
        assert!(matches!(
            subseed(&seed, 2, &c),
            Err(ExtractError::StepOutOfRange { step: 2, steps: 2 })
        ));
        let whole = cfg(2, 4, 4);
        assert_eq!(subseed(&seed, 0, &whole).unwrap(), seed);
    }

    #[test]
    fn submatrix_examples() {
        assert_eq!(submatrix_multiply(&bs(&[1, 0, 1]), &bs(&[0, 0]), 2, 2).unwrap(), bs(&[0, 0]));
        assert_eq!(submatrix_multiply(&bs(&[1, 0, 1]), &bs(&[1, 1]), 2, 2).unwrap(), bs(&[1, 1]));
        assert_eq!(submatrix_multiply(&bs(&[1, 1, 0]), &bs(&[0, 1]), 2, 2).unwrap(), bs(&[0, 1]));
        assert!(submatrix_multiply(&bs(&[1, 1]), &bs(&[0, 1]), 2, 2).is_err());
    }

    #[test]
    fn stream_examples() {
        let c = cfg(2, 4, 2);
        let seed = bs(&[1, 0, 1, 1, 0]);
        let mut st = ExtractorState::new(c);
        st.stream_step(&bs(&[1, 0, 1]), &bs(&[1, 1])).unwrap();
        assert_eq!(st.accumulator(), bs(&[1, 1]));
        st.stream_step(&bs(&[1, 1, 0]), &bs(&[0, 1])).unwrap();
        assert_eq!(st.accumulator(), bs(&[1, 0]));
        assert!(st.stream_step(&bs(&[1, 1, 0]), &bs(&[0, 1])).is_err());
        let out = st.finalize().unwrap();
        assert_eq!(out, bs(&[1, 0]));
        assert_eq!(out, toeplitz_direct(&seed, &bs(&[1, 1, 0, 1]), &c).unwrap());
        assert_eq!(st.step(), 0);
        assert_eq!(st.accumulator(), bs(&[0, 0]));
    }

    #[test]
    fn repeated_step_cancels() {
        let c = cfg(3, 4, 2);
        let mut st = ExtractorState::new(c);
        let sub = bs(&[1, 1, 0, 1]);
        st.stream_step(&sub, &bs(&[1, 1])).unwrap();
        st.stream_step(&sub, &bs(&[1, 1])).unwrap();
        assert_eq!(st.accumulator(), BitString::zeros(3));
    }

    #[test]
    fn finalize_early_fails() {
        let mut st = ExtractorState::new(cfg(2, 4, 2));
        assert_eq!(
            st.finalize(),
            Err(ExtractError::Incomplete { step: 0, steps: 2 })
        );
        st.stream_step(&bs(&[1, 0, 1]), &bs(&[1, 0])).unwrap();
        assert!(st.finalize().is_err());
    }

    #[test]
    fn consecutive_blocks_are_independent() {
        let c = cfg(5, 8, 4);
        let seed = bs(&[1, 0, 1, 1, 0, 0, 1, 1, 1, 0, 1, 0]);
        let a = bs(&[1, 0, 0, 1, 1, 1, 0, 1]);
        let b = bs(&[0, 1, 1, 1, 0, 0, 0, 1]);
        let subs: Vec<_> = (0..2).map(|p| subseed(&seed, p, &c).unwrap()).collect();
        let mut st = ExtractorState::new(c);
        let first = st.extract_block(&subs, &a).unwrap();
        let second = st.extract_block(&subs, &b).unwrap();
        assert_eq!(first, toeplitz_direct(&seed, &a, &c).unwrap());
        assert_eq!(second, toeplitz_direct(&seed, &b, &c).unwrap());
    }

    #[test]
    fn block_buffer_retains_remainder() {
        let mut buf = BlockBuffer::new(5);
        buf.push(&bs(&[1, 0, 1]));
        assert!(buf.pop_block().is_none());
        buf.push(&bs(&[1, 1, 0, 0, 1]));
        assert_eq!(buf.pop_block().unwrap(), bs(&[1, 0, 1, 1, 1]));
        assert_eq!(buf.pending_bits(), 3);
        assert!(buf.pop_block().is_none());
    }

    fn random_bits(len: usize, rng: &mut impl rand::Rng) -> BitString {
        (0..len).map(|_| rng.gen::<bool>()).collect()
    }

    fn divisors(n: usize) -> Vec<usize> {
        (1..=n).filter(|k| n % k == 0).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn linear_in_input(m in 1usize..80, n in 1usize..120, seed in any::<u64>()) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let c = cfg(m, n, n);
            let s = random_bits(c.seed_len(), &mut rng);
            let d1 = random_bits(n, &mut rng);
            let d2 = random_bits(n, &mut rng);
            let lhs = toeplitz_streaming(&s, &d1.xor(&d2).unwrap(), &c).unwrap();
            let rhs = toeplitz_streaming(&s, &d1, &c).unwrap()
                .xor(&toeplitz_streaming(&s, &d2, &c).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn output_independent_of_k(m in 1usize..70, n in 1usize..130, seed in any::<u64>()) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let s = random_bits(m + n - 1, &mut rng);
            let d = random_bits(n, &mut rng);
            let reference = toeplitz_direct(&s, &d, &cfg(m, n, n)).unwrap();
            for k in divisors(n) {
                prop_assert_eq!(&toeplitz_streaming(&s, &d, &cfg(m, n, k)).unwrap(), &reference);
            }
        }
    }
}
