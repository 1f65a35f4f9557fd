//! Streaming Toeplitz-hashing randomness extraction for multi-channel
//! quantum random number generator post-processing.
//!
//! Raw ADC samples are hashed block by block: an `n`-bit input block is
//! multiplied over GF(2) by an `m x n` Toeplitz matrix, processed `k` columns
//! per step against precomputed sub-seeds. Each block uses one of `b` seeds
//! picked by an LFSR, and seeds are refreshed before the composed security
//! parameter crosses a threshold.
//!
//! Bit order is LSB-first everywhere: bit `i` of a [`BitString`] is bit
//! `i % 8` of byte `i / 8` when serialized.

pub mod analysis;
pub mod bits;
pub mod config;
pub mod extractor;
pub mod params;
pub mod pipeline;
pub mod seedbank;
pub mod source;

pub use bits::{BitError, BitString};
pub use config::{ConfigError, RunConfig};
pub use extractor::{toeplitz_direct, toeplitz_streaming, ExtractError, ExtractorState, ToeplitzConfig};
pub use params::{Epsilon, EntropyEstimate, SecuritySpec};
pub use pipeline::{run_channels, Channel, ChannelConfig, PipelineError, RunReport};
pub use seedbank::{SeedBank, SeedError, SeedFile, SelectorSpec};
