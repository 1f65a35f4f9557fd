//! Multi-channel orchestration.
//!
//! Each [`Channel`] owns its input source, seed bank and extractor state.
//! Channels advance in rounds of up to [`ROUND_BLOCKS`] blocks, running
//! concurrently within a round; after each round the outputs are handed to
//! the [`Sink`] per channel and as an aggregate stream interleaved by whole
//! block in channel order (`A1 B1 C1 A2 B2 C2 ...`). The merge order does not
//! depend on thread scheduling.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::bits::BitString;
use crate::extractor::{BlockBuffer, ExtractError, ExtractorState, ToeplitzConfig};
use crate::params::{
    leftover_hash_output_length, throughput_accounting, ChannelRate, EntropyEstimate, ParamError,
    SecuritySpec,
};
use crate::seedbank::{SeedBank, SeedError};
use crate::source::{converted_width, push_code_bits, Adc, GaussianSource, SourceError};

pub const ROUND_BLOCKS: u64 = 256;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(
        "channel {channel}: m={m} exceeds the leftover-hash bound {bound} for n={n}; \
         set override_unsafe to run anyway"
    )]
    UnsafeGeometry {
        channel: String,
        m: usize,
        n: usize,
        bound: u64,
    },
    #[error("channel {channel}: {message}")]
    Config { channel: String, message: String },
    #[error("no channels configured")]
    NoChannels,
    #[error("channel {channel}: input exhausted after {blocks} blocks")]
    InputExhausted { channel: String, blocks: u64 },
    #[error("channel {channel}: seed refresh due but no refresh material source is attached")]
    RefreshUnavailable { channel: String },
    #[error("aggregate: {0}")]
    Aggregate(String),
    #[error("sink: {0}")]
    Sink(#[from] io::Error),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// Simulated front-end parameters for one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    pub sigma: f64,
    pub full_scale: f64,
    pub bits: u32,
    pub sample_rate_hz: u64,
    pub bus_clock_hz: u64,
}

impl SourceParams {
    /// Width of the words the FIFO hands the extractor, `C * a / J`.
    pub fn word_width(&self) -> Result<usize, SourceError> {
        converted_width(self.sample_rate_hz, self.bits, self.bus_clock_hz)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub name: String,
    pub toeplitz: ToeplitzConfig,
    pub entropy: EntropyEstimate,
    pub security: SecuritySpec,
    pub source: SourceParams,
    pub override_unsafe: bool,
}

impl ChannelConfig {
    /// Largest `m` the leftover hash lemma allows for this channel's `n`.
    pub fn output_bound(&self) -> u64 {
        leftover_hash_output_length(
            self.toeplitz.n() as u64,
            self.entropy.hmin_per_bit(),
            self.security.eps_hash,
        )
    }

    pub fn exceeds_bound(&self) -> bool {
        self.toeplitz.m() as u64 > self.output_bound()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg_err = |message: String| PipelineError::Config {
            channel: self.name.clone(),
            message,
        };
        self.security.validate()?;
        let width = self.source.word_width()?;
        if width != self.toeplitz.k() {
            return Err(cfg_err(format!(
                "FIFO word width C*a/J = {width} does not match k = {}",
                self.toeplitz.k()
            )));
        }
        if self.entropy.sample_bits != self.source.bits {
            return Err(cfg_err(format!(
                "entropy estimate is for {}-bit samples but the ADC has {} bits",
                self.entropy.sample_bits, self.source.bits
            )));
        }
        if self.exceeds_bound() && !self.override_unsafe {
            return Err(PipelineError::UnsafeGeometry {
                channel: self.name.clone(),
                m: self.toeplitz.m(),
                n: self.toeplitz.n(),
                bound: self.output_bound(),
            });
        }
        Ok(())
    }

    pub fn rate(&self) -> ChannelRate {
        ChannelRate {
            m: self.toeplitz.m() as u64,
            n: self.toeplitz.n() as u64,
            sample_rate_hz: self.source.sample_rate_hz as f64,
            sample_bits: self.source.bits,
        }
    }
}

/// Supplies raw input bits to a channel.
pub trait BitSource: Send {
    /// Appends bits to `buf` until it holds at least `bits`, or returns
    /// `false` if the source ran dry first.
    fn fill(&mut self, buf: &mut BlockBuffer, bits: usize) -> bool;

    /// Bits still available, if the source is finite.
    fn remaining_bits(&self) -> Option<u64> {
        None
    }
}

/// Gaussian noise through the ADC model, code bits LSB-first.
pub struct SimulatedSource {
    noise: GaussianSource,
    adc: Adc,
}

impl SimulatedSource {
    pub fn new(params: &SourceParams, rng_seed: u64) -> Result<Self, SourceError> {
        Ok(Self {
            noise: GaussianSource::new(params.sigma, rng_seed)?,
            adc: Adc::new(params.full_scale, params.bits)?,
        })
    }
}

impl BitSource for SimulatedSource {
    fn fill(&mut self, buf: &mut BlockBuffer, bits: usize) -> bool {
        let a = self.adc.bits() as usize;
        while buf.pending_bits() < bits {
            let code = self.adc.quantize(self.noise.sample());
            buf.push_word(code as i64 as u64, a);
        }
        true
    }
}

/// Replays captured ADC codes.
pub struct CaptureSource {
    bits: BitString,
    pos: usize,
}

impl CaptureSource {
    pub fn new(codes: &[i32], bits: u32) -> Self {
        let mut out = BitString::with_capacity(codes.len() * bits as usize);
        push_code_bits(&mut out, codes, bits);
        Self { bits: out, pos: 0 }
    }

    pub fn total_bits(&self) -> usize {
        self.bits.len()
    }
}

impl BitSource for CaptureSource {
    fn fill(&mut self, buf: &mut BlockBuffer, bits: usize) -> bool {
        let need = bits.saturating_sub(buf.pending_bits());
        let take = need.min(self.bits.len() - self.pos);
        if take > 0 {
            buf.push(&self.bits.slice(self.pos, take).expect("in range"));
            self.pos += take;
        }
        buf.pending_bits() >= bits
    }

    fn remaining_bits(&self) -> Option<u64> {
        Some((self.bits.len() - self.pos) as u64)
    }
}

/// Provides fresh seed material when a bank needs refreshing.
pub trait RefreshSource: Send {
    fn material(&mut self, bits: usize) -> BitString;
}

/// Deterministic ChaCha-based refresh material for simulations. Not a
/// source of real randomness.
pub struct SimulatedRefresh {
    rng: ChaCha20Rng,
}

impl SimulatedRefresh {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }
}

impl RefreshSource for SimulatedRefresh {
    fn material(&mut self, bits: usize) -> BitString {
        let words = (0..bits.div_ceil(64)).map(|_| self.rng.next_u64()).collect();
        BitString::from_words(words, bits)
    }
}

pub struct Channel {
    config: ChannelConfig,
    input: Box<dyn BitSource>,
    buffer: BlockBuffer,
    bank: SeedBank,
    state: ExtractorState,
    refresh: Option<Box<dyn RefreshSource>>,
    refresh_period: Option<Duration>,
    last_refresh: Instant,
    blocks: u64,
    input_bits: u64,
    busy: Duration,
}

impl Channel {
    pub fn new(config: ChannelConfig, bank: SeedBank, input: Box<dyn BitSource>) -> Result<Self, PipelineError> {
        config.validate()?;
        if config.exceeds_bound() {
            log::warn!(
                "channel {}: m={} exceeds leftover-hash bound {} (override_unsafe set)",
                config.name,
                config.toeplitz.m(),
                config.output_bound()
            );
        }
        if *bank.config() != config.toeplitz {
            let b = bank.config();
            return Err(PipelineError::Config {
                channel: config.name.clone(),
                message: format!(
                    "seed bank geometry m={} n={} k={} does not match channel m={} n={} k={}",
                    b.m(),
                    b.n(),
                    b.k(),
                    config.toeplitz.m(),
                    config.toeplitz.n(),
                    config.toeplitz.k()
                ),
            });
        }
        if !bank.is_table_built() {
            return Err(SeedError::TableNotBuilt.into());
        }
        let n = config.toeplitz.n();
        Ok(Self {
            state: ExtractorState::new(config.toeplitz),
            buffer: BlockBuffer::new(n),
            config,
            input,
            bank,
            refresh: None,
            refresh_period: None,
            last_refresh: Instant::now(),
            blocks: 0,
            input_bits: 0,
            busy: Duration::ZERO,
        })
    }

    pub fn with_refresh(mut self, source: Box<dyn RefreshSource>) -> Self {
        self.refresh = Some(source);
        self
    }

    /// Also refresh whenever this much wall-clock time has passed since the
    /// last refresh, checked at block boundaries.
    pub fn with_refresh_period(mut self, period: Duration) -> Self {
        self.refresh_period = Some(period);
        self
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn bank(&self) -> &SeedBank {
        &self.bank
    }

    pub fn blocks(&self) -> u64 {
        self.blocks
    }

    /// Input bits read or readable but not part of any extracted block.
    pub fn unused_input_bits(&self) -> u64 {
        self.buffer.pending_bits() as u64 + self.input.remaining_bits().unwrap_or(0)
    }

    fn refresh_now(&mut self) -> Result<(), PipelineError> {
        let bits = self.bank.b() * self.config.toeplitz.seed_len();
        let source = self
            .refresh
            .as_mut()
            .ok_or_else(|| PipelineError::RefreshUnavailable {
                channel: self.config.name.clone(),
            })?;
        let material = source.material(bits);
        self.bank.refresh(&material)?;
        self.last_refresh = Instant::now();
        log::info!(
            "channel {}: seeds refreshed ({} so far)",
            self.config.name,
            self.bank.ledger().refresh_count()
        );
        Ok(())
    }

    /// Extracts one `m`-bit block, or `None` if the input ran dry. A refresh
    /// that came due after the previous block runs first.
    pub fn next_block(&mut self) -> Result<Option<BitString>, PipelineError> {
        let cfg = self.config.toeplitz;
        let stale = self
            .refresh_period
            .is_some_and(|p| self.last_refresh.elapsed() >= p);
        if self.bank.ledger().refresh_due() || stale {
            self.refresh_now()?;
        }
        if !self.input.fill(&mut self.buffer, cfg.n()) {
            return Ok(None);
        }
        let input = self.buffer.pop_block().expect("buffer filled");
        let y = self.bank.select_next();
        let subs = self.bank.subseeds(y)?;
        let k = cfg.k();
        for (p, sub) in subs.iter().enumerate() {
            self.state.stream_step(sub, &input.slice(p * k, k).expect("n = steps * k"))?;
        }
        let out = self.state.finalize()?;
        self.blocks += 1;
        self.input_bits += cfg.n() as u64;
        self.bank.record_use()?;
        Ok(Some(out))
    }

    fn run_round(&mut self, blocks: u64) -> (Vec<BitString>, Option<PipelineError>) {
        let start = Instant::now();
        let mut out = Vec::with_capacity(blocks as usize);
        let mut err = None;
        for _ in 0..blocks {
            match self.next_block() {
                Ok(Some(b)) => out.push(b),
                Ok(None) => {
                    err = Some(PipelineError::InputExhausted {
                        channel: self.config.name.clone(),
                        blocks: self.blocks,
                    });
                    break;
                }
                Err(e) => {
                    err = Some(e);
                    break;
                }
            }
        }
        self.busy += start.elapsed();
        (out, err)
    }

    pub fn report(&self, bits_emitted: u64) -> ChannelReport {
        let cfg = &self.config.toeplitz;
        let ledger = self.bank.ledger();
        let secs = self.busy.as_secs_f64();
        ChannelReport {
            name: self.config.name.clone(),
            m: cfg.m(),
            n: cfg.n(),
            k: cfg.k(),
            seeds: self.bank.b(),
            blocks: self.blocks,
            bits_out: bits_emitted,
            input_bits: self.input_bits,
            unused_input_bits: self.unused_input_bits(),
            ledger_uses: ledger.uses(),
            epsilon_log10: ledger.epsilon_current().log10(),
            refresh_count: ledger.refresh_count(),
            hmin_per_sample: self.config.entropy.hmin_per_sample,
            output_bound: self.config.output_bound(),
            exceeds_bound: self.config.exceeds_bound(),
            override_unsafe: self.config.override_unsafe,
            wall_seconds: secs,
            software_bps: if secs > 0.0 {
                (self.blocks * cfg.m() as u64) as f64 / secs
            } else {
                0.0
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelReport {
    pub name: String,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub seeds: usize,
    pub blocks: u64,
    pub bits_out: u64,
    pub input_bits: u64,
    /// Buffered plus, for finite sources, never-read input bits.
    pub unused_input_bits: u64,
    pub ledger_uses: u64,
    pub epsilon_log10: f64,
    pub refresh_count: u64,
    pub hmin_per_sample: f64,
    pub output_bound: u64,
    pub exceeds_bound: bool,
    pub override_unsafe: bool,
    /// Wall-clock; varies between runs.
    pub wall_seconds: f64,
    /// Wall-clock; varies between runs.
    pub software_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub complete: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub blocks_per_channel: u64,
    pub total_bits: u64,
    pub theoretical_bps: f64,
    pub channel: Vec<ChannelReport>,
}

impl RunReport {
    /// Key-value text form (TOML).
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    /// Copy with wall-clock fields zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        for ch in &mut out.channel {
            ch.wall_seconds = 0.0;
            ch.software_bps = 0.0;
        }
        out
    }
}

/// Destination for extracted bits.
pub trait Sink {
    fn channel_block(&mut self, channel: usize, bits: &BitString) -> io::Result<()>;
    fn aggregate_block(&mut self, bits: &BitString) -> io::Result<()>;
    fn finish(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl Sink for NullSink {
    fn channel_block(&mut self, _: usize, _: &BitString) -> io::Result<()> {
        Ok(())
    }
    fn aggregate_block(&mut self, _: &BitString) -> io::Result<()> {
        Ok(())
    }
}

#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub channels: Vec<BitString>,
    pub aggregate: BitString,
}

impl Sink for MemorySink {
    fn channel_block(&mut self, channel: usize, bits: &BitString) -> io::Result<()> {
        if self.channels.len() <= channel {
            self.channels.resize(channel + 1, BitString::new());
        }
        self.channels[channel].extend_from(bits);
        Ok(())
    }

    fn aggregate_block(&mut self, bits: &BitString) -> io::Result<()> {
        self.aggregate.extend_from(bits);
        Ok(())
    }
}

/// Packs a bit stream into bytes LSB-first; the final byte is zero-padded
/// on [`finish`](Self::finish).
pub struct BitWriter<W: Write> {
    inner: W,
    pending: BitString,
}

impl<W: Write> BitWriter<W> {
    const FLUSH_BITS: usize = 8 * 64 * 1024;

    pub fn new(inner: W) -> Self {
        Self {
            inner,
            pending: BitString::new(),
        }
    }

    pub fn write_bits(&mut self, bits: &BitString) -> io::Result<()> {
        self.pending.extend_from(bits);
        if self.pending.len() >= Self::FLUSH_BITS {
            let whole = self.pending.len() / 8 * 8;
            let head = self.pending.slice(0, whole).expect("in range");
            self.inner.write_all(&head.to_bytes())?;
            self.pending = self
                .pending
                .slice(whole, self.pending.len() - whole)
                .expect("in range");
        }
        Ok(())
    }

    pub fn finish(&mut self) -> io::Result<()> {
        self.inner.write_all(&self.pending.to_bytes())?;
        self.pending = BitString::new();
        self.inner.flush()
    }
}

/// `channel_<i>.bin` per channel plus `aggregate.bin` in one directory.
pub struct FileSink {
    channels: Vec<BitWriter<BufWriter<File>>>,
    aggregate: BitWriter<BufWriter<File>>,
}

impl FileSink {
    pub fn channel_path(dir: &Path, channel: usize) -> PathBuf {
        dir.join(format!("channel_{channel}.bin"))
    }

    pub fn aggregate_path(dir: &Path) -> PathBuf {
        dir.join("aggregate.bin")
    }

    pub fn create(dir: &Path, channels: usize) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let open = |p: PathBuf| File::create(p).map(|f| BitWriter::new(BufWriter::new(f)));
        Ok(Self {
            channels: (0..channels)
                .map(|i| open(Self::channel_path(dir, i)))
                .collect::<io::Result<_>>()?,
            aggregate: open(Self::aggregate_path(dir))?,
        })
    }
}

impl Sink for FileSink {
    fn channel_block(&mut self, channel: usize, bits: &BitString) -> io::Result<()> {
        self.channels
            .get_mut(channel)
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "unknown channel"))?
            .write_bits(bits)
    }

    fn aggregate_block(&mut self, bits: &BitString) -> io::Result<()> {
        self.aggregate.write_bits(bits)
    }

    fn finish(&mut self) -> io::Result<()> {
        for w in &mut self.channels {
            w.finish()?;
        }
        self.aggregate.finish()
    }
}

/// A failed run with everything emitted before the failure accounted for.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: PipelineError,
    pub report: RunReport,
}

/// Interleaves whole blocks round-robin in channel order.
pub fn aggregate(streams: &[BitString], block_sizes: &[usize]) -> Result<BitString, PipelineError> {
    if streams.len() != block_sizes.len() {
        return Err(PipelineError::Aggregate(format!(
            "{} streams but {} block sizes",
            streams.len(),
            block_sizes.len()
        )));
    }
    let mut blocks = None;
    for (i, (s, &size)) in streams.iter().zip(block_sizes).enumerate() {
        if size == 0 || s.len() % size != 0 {
            return Err(PipelineError::Aggregate(format!(
                "stream {i} length {} is not a multiple of block size {size}",
                s.len()
            )));
        }
        let count = s.len() / size;
        match blocks {
            None => blocks = Some(count),
            Some(c) if c != count => {
                return Err(PipelineError::Aggregate(format!(
                    "ragged block counts: stream 0 has {c}, stream {i} has {count}"
                )))
            }
            _ => {}
        }
    }
    let mut out = BitString::with_capacity(streams.iter().map(BitString::len).sum());
    for b in 0..blocks.unwrap_or(0) {
        for (s, &size) in streams.iter().zip(block_sizes) {
            out.extend_from(&s.slice(b * size, size).expect("checked above"));
        }
    }
    Ok(out)
}

fn build_report(channels: &[Channel], blocks: u64, error: Option<&PipelineError>) -> RunReport {
    let reports: Vec<ChannelReport> = channels
        .iter()
        .map(|c| c.report(blocks * c.config.toeplitz.m() as u64))
        .collect();
    let rates: Vec<ChannelRate> = channels.iter().map(|c| c.config.rate()).collect();
    RunReport {
        complete: error.is_none(),
        error: error.map(|e| e.to_string()),
        blocks_per_channel: blocks,
        total_bits: reports.iter().map(|r| r.bits_out).sum(),
        theoretical_bps: throughput_accounting(&rates).unwrap_or(f64::NAN),
        channel: reports,
    }
}

/// Runs every channel for `duration` blocks, writing per-channel outputs and
/// the block-interleaved aggregate to `sink`.
///
/// If a channel fails mid-round, only blocks that every channel completed
/// are emitted, so per-channel and aggregate outputs stay aligned.
pub fn run_channels(channels: &mut [Channel], duration: u64, sink: &mut dyn Sink) -> Result<RunReport, RunFailure> {
    if channels.is_empty() {
        return Err(RunFailure {
            error: PipelineError::NoChannels,
            report: build_report(channels, 0, Some(&PipelineError::NoChannels)),
        });
    }
    let mut emitted = 0u64;
    let fail = |channels: &[Channel], emitted, error: PipelineError| RunFailure {
        report: build_report(channels, emitted, Some(&error)),
        error,
    };
    while emitted < duration {
        let round = ROUND_BLOCKS.min(duration - emitted);
        let results: Vec<(Vec<BitString>, Option<PipelineError>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = channels
                .iter_mut()
                .map(|ch| scope.spawn(move || ch.run_round(round)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("channel worker panicked"))
                .collect()
        });
        let complete = results.iter().map(|(b, _)| b.len()).min().unwrap_or(0);
        let write = |sink: &mut dyn Sink| -> io::Result<()> {
            for (c, (blocks, _)) in results.iter().enumerate() {
                for b in &blocks[..complete] {
                    sink.channel_block(c, b)?;
                }
            }
            for i in 0..complete {
                for (blocks, _) in &results {
                    sink.aggregate_block(&blocks[i])?;
                }
            }
            Ok(())
        };
        if let Err(e) = write(sink) {
            return Err(fail(channels, emitted, e.into()));
        }
        emitted += complete as u64;
        if let Some(err) = results.into_iter().find_map(|(_, e)| e) {
            let _ = sink.finish();
            return Err(fail(channels, emitted, err));
        }
    }
    if let Err(e) = sink.finish() {
        return Err(fail(channels, emitted, e.into()));
    }
    Ok(build_report(channels, emitted, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::min_entropy_gaussian_adc;
    use crate::seedbank::SelectorSpec;

    fn bs(bits: &[u8]) -> BitString {
        BitString::from_bits(bits)
    }

    fn small_config(name: &str) -> ChannelConfig {
        let source = SourceParams {
            sigma: 0.05,
            full_scale: 1.0,
            bits: 16,
            sample_rate_hz: 1_000,
            bus_clock_hz: 500,
        };
        ChannelConfig {
            name: name.into(),
            toeplitz: ToeplitzConfig::new(64, 512, 32).unwrap(),
            entropy: EntropyEstimate::new(min_entropy_gaussian_adc(0.05, 1.0, 16).unwrap(), 16).unwrap(),
            security: SecuritySpec::new(
                crate::params::Epsilon::from_log10(-20.0).unwrap(),
                crate::params::Epsilon::from_log10(-20.0).unwrap(),
                crate::params::Epsilon::from_log10(-10.0).unwrap(),
            )
            .unwrap(),
            source,
            override_unsafe: false,
        }
    }

    fn channel(cfg: ChannelConfig, seed: u64) -> Channel {
        let mut refresh = SimulatedRefresh::new(seed ^ 0x5EED);
        let material = refresh.material(4 * cfg.toeplitz.seed_len());
        let mut bank = SeedBank::load_seeds(&material, 4, cfg.toeplitz, cfg.security, SelectorSpec::default()).unwrap();
        bank.build_subseed_table().unwrap();
        let src = SimulatedSource::new(&cfg.source, seed).unwrap();
        Channel::new(cfg, bank, Box::new(src)).unwrap()
    }

    #[test]
    fn single_block_single_channel() {
        let mut chans = vec![channel(small_config("a"), 1)];
        let mut sink = MemorySink::default();
        let report = run_channels(&mut chans, 1, &mut sink).unwrap();
        assert_eq!(sink.channels[0].len(), 64);
        assert_eq!(sink.aggregate, sink.channels[0]);
        assert_eq!(report.total_bits, 64);
        assert_eq!(report.channel[0].ledger_uses, 1);
    }

    #[test]
    fn zero_duration_is_empty() {
        let mut chans = vec![channel(small_config("a"), 1), channel(small_config("b"), 2)];
        let mut sink = MemorySink::default();
        let report = run_channels(&mut chans, 0, &mut sink).unwrap();
        assert!(sink.aggregate.is_empty());
        assert_eq!(report.total_bits, 0);
        assert!(report.channel.iter().all(|c| c.blocks == 0 && c.ledger_uses == 0));
    }

    #[test]
    fn aggregate_matches_round_robin_over_rounds() {
        let mut chans = vec![channel(small_config("a"), 1), channel(small_config("b"), 2)];
        let mut sink = MemorySink::default();
        let d = ROUND_BLOCKS + 3;
        let report = run_channels(&mut chans, d, &mut sink).unwrap();
        let expected = aggregate(&sink.channels, &[64, 64]).unwrap();
        assert_eq!(sink.aggregate, expected);
        assert_eq!(report.total_bits, 2 * 64 * d);
        assert!(report.channel.iter().all(|c| c.ledger_uses == d && c.bits_out == c.blocks * 64));
    }

    #[test]
    fn refuses_unsafe_geometry_without_override() {
        let mut cfg = small_config("x");
        cfg.toeplitz = ToeplitzConfig::new(500, 512, 32).unwrap();
        assert!(matches!(cfg.validate(), Err(PipelineError::UnsafeGeometry { bound, .. }) if bound < 500));
        cfg.override_unsafe = true;
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_fifo_width_mismatch() {
        let mut cfg = small_config("x");
        cfg.source.bus_clock_hz = 1_000;
        assert!(matches!(cfg.validate(), Err(PipelineError::Config { .. })));
    }

    #[test]
    fn refresh_fires_and_continues() {
        let mut cfg = small_config("r");
        cfg.security = SecuritySpec::new(
            crate::params::Epsilon::from_log10(-20.0).unwrap(),
            crate::params::Epsilon::from_log10(-20.0).unwrap(),
            crate::params::Epsilon::from_log10(-19.0).unwrap(),
        )
        .unwrap();
        // fires at N = 10 - 1 = 9
        let ch = channel(cfg.clone(), 3).with_refresh(Box::new(SimulatedRefresh::new(11)));
        let mut chans = vec![ch];
        let report = run_channels(&mut chans, 20, &mut NullSink).unwrap();
        assert_eq!(report.channel[0].refresh_count, 2);
        assert_eq!(report.channel[0].ledger_uses, 2);

        let mut bare = vec![channel(cfg, 3)];
        let err = run_channels(&mut bare, 20, &mut NullSink).unwrap_err();
        assert!(matches!(err.error, PipelineError::RefreshUnavailable { .. }));
        // the block that reached the threshold is kept; the next one fails
        assert_eq!(err.report.blocks_per_channel, 9);
        assert_eq!(err.report.channel[0].ledger_uses, 9);
        assert!(!err.report.complete);
    }

    #[test]
    fn capture_source_reports_exhaustion() {
        let cfg = small_config("cap");
        let mut base = channel(cfg.clone(), 1);
        // 2.5 blocks of 512 bits in 16-bit codes
        let codes: Vec<i32> = (0..80).map(|i| i * 37 - 1000).collect();
        base.input = Box::new(CaptureSource::new(&codes, 16));
        let mut chans = vec![base];
        let mut sink = MemorySink::default();
        let err = run_channels(&mut chans, 5, &mut sink).unwrap_err();
        assert!(matches!(err.error, PipelineError::InputExhausted { blocks: 2, .. }));
        assert_eq!(err.report.channel[0].bits_out, 128);
        assert_eq!(err.report.channel[0].unused_input_bits, 256);
        assert_eq!(sink.channels[0].len(), 128);
    }

    struct FailingSink;

    impl Sink for FailingSink {
        fn channel_block(&mut self, _: usize, _: &BitString) -> io::Result<()> {
            Err(io::Error::other("disk full"))
        }
        fn aggregate_block(&mut self, _: &BitString) -> io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn sink_failure_aborts_with_partial_report() {
        let mut chans = vec![channel(small_config("a"), 1)];
        let err = run_channels(&mut chans, 3, &mut FailingSink).unwrap_err();
        assert!(matches!(err.error, PipelineError::Sink(_)));
        assert_eq!(err.report.total_bits, 0);
        assert!(!err.report.complete);
    }

    #[test]
    fn aggregate_examples() {
        let a = bs(&[1, 1, 0, 0]);
        assert_eq!(aggregate(&[a.clone()], &[2]).unwrap(), a);
        let b = bs(&[1, 0, 1, 0]);
        // A1=11 A2=00, B1=10 B2=10
        assert_eq!(aggregate(&[a.clone(), b.clone()], &[2, 2]).unwrap(), bs(&[1, 1, 1, 0, 0, 0, 1, 0]));
        // 4 streams x 2 blocks of width 1 = channel-major round robin
        let s: Vec<BitString> = (0..4).map(|c| bs(&[(c % 2) as u8, 1])).collect();
        assert_eq!(aggregate(&s, &[1; 4]).unwrap(), bs(&[0, 1, 0, 1, 1, 1, 1, 1]));
        assert!(aggregate(&[a.clone(), bs(&[1, 0])], &[2, 2]).is_err());
        assert!(aggregate(&[bs(&[1, 0, 1])], &[2]).is_err());
        // mixed block sizes with equal counts
        assert_eq!(aggregate(&[bs(&[1]), bs(&[0, 0, 1])], &[1, 3]).unwrap(), bs(&[1, 0, 0, 1]));
    }

    #[test]
    fn bit_writer_pads_only_at_end() {
        let mut buf = Vec::new();
        let mut w = BitWriter::new(&mut buf);
        w.write_bits(&bs(&[1, 0, 1])).unwrap();
        w.write_bits(&bs(&[1, 1, 1, 1, 1, 1])).unwrap();
        w.finish().unwrap();
        assert_eq!(buf, vec![0b1111_1101, 0b1]);
    }
}
