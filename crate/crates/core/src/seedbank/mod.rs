//! Seed lifecycle: storage, sub-seed table generation, randomized selection,
//! and refresh driven by the composed security parameter.
//!
//! Seeds are written into a first-level memory of `k`-bit words. Sub-seeds
//! are then assembled into a second-level memory of `(m + k - 1)`-bit rows by
//! reading `k`-bit words and writing each into the next lane window of the
//! target row. Row `y * (n/k) + p` holds sub-seed `p` of seed `y`.
//!
//! A seed of `m + n - 1` bits does not always fill a whole number of `k`-bit
//! words; each seed then occupies `ceil((m + n - 1) / k)` first-level rows with
//! the last one zero-padded.

mod file;
mod lfsr;
mod memory;

pub use file::{SeedFile, MAGIC as SEED_FILE_MAGIC};
pub use lfsr::{maximal_taps, select_seed, LfsrState, DEFAULT_TAPS, DEFAULT_WIDTH, MAXIMAL_TAPS};
pub use memory::Memory;

use thiserror::Error;

use crate::bits::{BitError, BitString};
use crate::extractor::ToeplitzConfig;
use crate::params::{compose_security, Epsilon, SecuritySpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeedError {
    #[error("seed material is {got} bits, expected {expected}")]
    MaterialLength { expected: usize, got: usize },
    #[error("seed count {0} is not a power of two")]
    BankSize(usize),
    #[error("seed material is all zero")]
    ZeroMaterial,
    #[error("LFSR: {0}")]
    Lfsr(&'static str),
    #[error("memory address {addr} out of range for depth {depth}")]
    Address { addr: usize, depth: usize },
    #[error("sub-seed table has not been built")]
    TableNotBuilt,
    #[error("seed file: {0}")]
    Format(String),
    #[error(transparent)]
    Bits(#[from] BitError),
}

/// Use counter and composed security parameter for one seed bank.
#[derive(Debug, Clone, PartialEq)]
pub struct SecurityLedger {
    uses: u64,
    spec: SecuritySpec,
    epsilon_current: Epsilon,
    refresh_count: u64,
    first_refresh_use: u128,
}

impl SecurityLedger {
    pub fn new(spec: SecuritySpec) -> Self {
        Self {
            uses: 0,
            spec,
            epsilon_current: spec.eps_seed,
            refresh_count: 0,
            first_refresh_use: spec.first_refresh_use(),
        }
    }

    pub fn uses(&self) -> u64 {
        self.uses
    }

    pub fn spec(&self) -> &SecuritySpec {
        &self.spec
    }

    pub fn epsilon_current(&self) -> Epsilon {
        self.epsilon_current
    }

    pub fn refresh_count(&self) -> u64 {
        self.refresh_count
    }

    /// Counts one more hash under the current seeds. Returns whether the
    /// composed parameter has reached the refresh threshold.
    ///
    /// The threshold test compares `N` against the solved crossing point
    /// (see [`SecuritySpec::first_refresh_use`]) so it is exact in `N`.
    pub fn record_use(&mut self) -> bool {
        self.uses += 1;
        self.epsilon_current = compose_security(self.uses, self.spec.eps_hash, self.spec.eps_seed);
        self.refresh_due()
    }

    pub fn refresh_due(&self) -> bool {
        self.uses as u128 >= self.first_refresh_use
    }

    /// Jumps the counter, e.g. to restore a persisted ledger.
    pub fn set_uses(&mut self, uses: u64) {
        self.uses = uses;
        self.epsilon_current = compose_security(uses, self.spec.eps_hash, self.spec.eps_seed);
    }

    fn reset(&mut self) {
        self.uses = 0;
        self.epsilon_current = self.spec.eps_seed;
        self.refresh_count += 1;
    }
}

/// Selector register parameters. The register value itself always comes
/// from the seed material.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectorSpec {
    pub width: u32,
    pub taps: u64,
}

impl Default for SelectorSpec {
    fn default() -> Self {
        Self {
            width: DEFAULT_WIDTH,
            taps: DEFAULT_TAPS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeedBank {
    cfg: ToeplitzConfig,
    b: usize,
    rows_per_seed: usize,
    level1: Memory,
    level2: Memory,
    table_built: bool,
    ledger: SecurityLedger,
    selector: LfsrState,
    selector_spec: SelectorSpec,
}

impl SeedBank {
    /// Writes `b` seeds of `m + n - 1` bits into the first-level memory.
    pub fn load_seeds(
        material: &BitString,
        b: usize,
        cfg: ToeplitzConfig,
        security: SecuritySpec,
        selector: SelectorSpec,
    ) -> Result<Self, SeedError> {
        if !b.is_power_of_two() || b.trailing_zeros() > selector.width {
            return Err(SeedError::BankSize(b));
        }
        let k = cfg.k();
        let rows_per_seed = cfg.seed_len().div_ceil(k);
        let mut bank = Self {
            cfg,
            b,
            rows_per_seed,
            level1: Memory::new(k, b * rows_per_seed),
            level2: Memory::new(cfg.subseed_len(), b * cfg.steps()),
            table_built: false,
            ledger: SecurityLedger::new(security),
            selector: LfsrState::new(selector.width, selector.taps, 1)?,
            selector_spec: selector,
        };
        bank.write_level1(material)?;
        Ok(bank)
    }

    /// [`load_seeds`](Self::load_seeds) followed by
    /// [`build_subseed_table`](Self::build_subseed_table).
    pub fn from_seed_file(
        file: &SeedFile,
        security: SecuritySpec,
        selector: SelectorSpec,
    ) -> Result<Self, SeedError> {
        let mut bank = Self::load_seeds(&file.material(), file.b(), file.cfg, security, selector)?;
        bank.build_subseed_table()?;
        Ok(bank)
    }

    fn write_level1(&mut self, material: &BitString) -> Result<(), SeedError> {
        let len = self.cfg.seed_len();
        if material.len() != self.b * len {
            return Err(SeedError::MaterialLength {
                expected: self.b * len,
                got: material.len(),
            });
        }
        if material.count_ones() == 0 {
            return Err(SeedError::ZeroMaterial);
        }
        let k = self.cfg.k();
        for y in 0..self.b {
            for q in 0..self.rows_per_seed {
                let start = y * len + q * k;
                let take = k.min(len - q * k);
                let word = material.slice(start, take)?;
                let row = y * self.rows_per_seed + q;
                self.level1.write_enabled(row, 0, &BitString::zeros(k))?;
                self.level1.write_enabled(row, 0, &word)?;
            }
        }
        self.selector =
            LfsrState::from_material(material, self.selector_spec.width, self.selector_spec.taps)?;
        self.table_built = false;
        Ok(())
    }

    /// Assembles every sub-seed in the second-level memory from `k`-bit
    /// first-level reads, moving the write enable one lane window per read.
    pub fn build_subseed_table(&mut self) -> Result<(), SeedError> {
        let k = self.cfg.k();
        let steps = self.cfg.steps();
        let reads_per_row = self.cfg.subseed_len().div_ceil(k);
        for y in 0..self.b {
            let base1 = y * self.rows_per_seed;
            for p in 0..steps {
                let addr2 = y * steps + p;
                for j in 0..reads_per_row {
                    let word = self.level1.read(base1 + p + j)?.clone();
                    self.level2.write_enabled(addr2, j * k, &word)?;
                }
            }
        }
        self.table_built = true;
        Ok(())
    }

    pub fn config(&self) -> &ToeplitzConfig {
        &self.cfg
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn level1(&self) -> &Memory {
        &self.level1
    }

    pub fn level2(&self) -> &Memory {
        &self.level2
    }

    pub fn is_table_built(&self) -> bool {
        self.table_built
    }

    pub fn ledger(&self) -> &SecurityLedger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut SecurityLedger {
        &mut self.ledger
    }

    pub fn selector(&self) -> &LfsrState {
        &self.selector
    }

    /// Reassembles seed `y` from the first-level memory.
    pub fn seed(&self, y: usize) -> Result<BitString, SeedError> {
        if y >= self.b {
            return Err(SeedError::Address {
                addr: y,
                depth: self.b,
            });
        }
        let mut out = BitString::with_capacity(self.rows_per_seed * self.cfg.k());
        for q in 0..self.rows_per_seed {
            out.extend_from(self.level1.read(y * self.rows_per_seed + q)?);
        }
        Ok(out.slice(0, self.cfg.seed_len())?)
    }

    /// The `n/k` sub-seeds of seed `y`, in step order.
    pub fn subseeds(&self, y: usize) -> Result<&[BitString], SeedError> {
        if !self.table_built {
            return Err(SeedError::TableNotBuilt);
        }
        let steps = self.cfg.steps();
        self.level2
            .rows()
            .get(y * steps..(y + 1) * steps)
            .ok_or(SeedError::Address {
                addr: y * steps,
                depth: self.level2.depth(),
            })
    }

    /// Draws the seed index for the next block from the selector.
    pub fn select_next(&mut self) -> usize {
        let value = self.selector.next_value();
        select_seed(value, self.b, self.selector.width()).expect("bank size checked at load")
    }

    /// Records one full-block hash; returns whether a refresh is due.
    pub fn record_use(&mut self) -> Result<bool, SeedError> {
        if !self.table_built {
            return Err(SeedError::TableNotBuilt);
        }
        Ok(self.ledger.record_use())
    }

    /// Replaces all seeds, rebuilds the sub-seed table, reseeds the selector
    /// and resets the use counter.
    pub fn refresh(&mut self, material: &BitString) -> Result<(), SeedError> {
        self.write_level1(material)?;
        self.build_subseed_table()?;
        self.ledger.reset();
        Ok(())
    }
}

/// Sub-seeds produced the traditional way: hold the seed in a register,
/// take the lowest `m + k - 1` bits, shift right by `k`, repeat `n/k` times.
pub fn shift_register_subseeds(seed: &BitString, cfg: &ToeplitzConfig) -> Result<Vec<BitString>, SeedError> {
    if seed.len() != cfg.seed_len() {
        return Err(SeedError::MaterialLength {
            expected: cfg.seed_len(),
            got: seed.len(),
        });
    }
    let mut register = seed.clone();
    let mut out = Vec::with_capacity(cfg.steps());
    for _ in 0..cfg.steps() {
        out.push(register.slice(0, cfg.subseed_len())?);
        let rest = register.len() - cfg.k();
        register = register.slice(cfg.k(), rest)?;
    }
    Ok(out)
}
