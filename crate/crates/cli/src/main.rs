use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use toeplitz_qrng::analysis::{
    bias_zscore, bitmap_render, export_for_suites, read_bitstream, runs_zscore, ChannelPairStats, PbmFormat,
};
use toeplitz_qrng::config::{ChannelEntry, RunConfig};
use toeplitz_qrng::params::{min_entropy_from_histogram, throughput_accounting};
use toeplitz_qrng::pipeline::{
    run_channels, CaptureSource, Channel, FileSink, NullSink, RunFailure, RunReport, SimulatedRefresh,
    SimulatedSource,
};
use toeplitz_qrng::source::{read_raw_samples, SampleBlock};
use toeplitz_qrng::{BitString, SeedBank, SeedFile, ToeplitzConfig};

#[derive(Parser)]
#[command(name = "toeplitz-qrng", version, about = "Toeplitz-hashing randomness extraction")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract from simulated Gaussian ADC noise on every configured channel.
    Simulate(RunArgs),
    /// Extract from a captured raw sample file (little-endian i16) on one channel.
    Extract {
        #[command(flatten)]
        run: RunArgs,
        /// Raw capture to read.
        #[arg(long)]
        input: PathBuf,
        /// Index of the configured channel to use.
        #[arg(long, default_value_t = 0)]
        channel: usize,
    },
    /// Statistical checks, bitmap rendering and test-suite export.
    Analyze(AnalyzeArgs),
    /// Measure software throughput against the modelled hardware rate.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        duration_blocks: u64,
    },
    /// Create or inspect seed files.
    #[command(subcommand)]
    SeedTool(SeedTool),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML). Defaults to the built-in four-channel reference.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed file per channel, in channel order. Overrides the config.
    #[arg(long = "seeds")]
    seeds: Vec<PathBuf>,
    /// Output directory for channel_<i>.bin, aggregate.bin and report.toml.
    #[arg(long)]
    out: PathBuf,
    /// Blocks per channel. Overrides the config.
    #[arg(long)]
    duration_blocks: Option<u64>,
    /// Run even if m exceeds the leftover-hash bound.
    #[arg(long)]
    override_unsafe: bool,
    /// Seeds per channel when a channel has no seed file (simulation fixture).
    #[arg(long, default_value_t = 4)]
    fixture_seeds: usize,
    /// Wall-clock refresh cadence in seconds. Overrides the config.
    #[arg(long)]
    refresh_period_secs: Option<u64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Packed bitstream files (LSB-first). Pairwise statistics are computed
    /// between all of them.
    #[arg(long = "input", required_unless_present = "samples")]
    inputs: Vec<PathBuf>,
    /// Raw i16 capture to estimate per-sample min-entropy from.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Write a bitmap of the first input.
    #[arg(long)]
    bitmap: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    width: usize,
    #[arg(long, default_value_t = 512)]
    height: usize,
    #[arg(long, value_enum, default_value_t = Pbm::P4)]
    bitmap_format: Pbm,
    /// Copy the first input to this path in the raw binary layout external
    /// test batteries read.
    #[arg(long)]
    export_suite: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Pbm {
    P1,
    P4,
}

#[derive(Subcommand)]
enum SeedTool {
    /// Write a seed file from a raw material file or a deterministic test RNG.
    Create {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        b: usize,
        /// Raw material, read LSB-first; must hold at least b*(m+n-1) bits.
        #[arg(long, conflicts_with = "rng_seed")]
        from_raw: Option<PathBuf>,
        /// Deterministic ChaCha stream. For testing only; not random.
        #[arg(long)]
        rng_seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a seed file's geometry.
    Inspect { file: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Simulate(args) => simulate(&args),
        Command::Extract { run, input, channel } => extract(&run, &input, channel),
        Command::Analyze(args) => analyze(&args),
        Command::Bench {
            config,
            duration_blocks,
        } => bench(config.as_deref(), duration_blocks),
        Command::SeedTool(t) => seed_tool(t),
    }
}

fn load_config(path: Option<&Path>, override_unsafe: bool) -> Result<RunConfig> {
    let (text, base) = match path {
        Some(p) => (
            fs::read_to_string(p).with_context(|| format!("config file not found or unreadable: {}", p.display()))?,
            p.parent().map(Path::to_path_buf),
        ),
        None => (toeplitz_qrng::config::REFERENCE_TOML.to_string(), None),
    };
    RunConfig::parse_with_override(&text, base.as_deref(), override_unsafe).with_context(|| match path {
        Some(p) => format!("invalid config {}", p.display()),
        None => "invalid reference config".into(),
    })
}

fn read_seed_file(path: &Path) -> Result<SeedFile> {
    if !path.exists() {
        bail!("seed file not found: {}", path.display());
    }
    let bytes = fs::read(path).with_context(|| format!("reading seed file {}", path.display()))?;
    SeedFile::parse(&bytes).with_context(|| format!("malformed seed file {}", path.display()))
}

fn fixture_seeds(cfg: ToeplitzConfig, b: usize, rng_seed: u64) -> Result<SeedFile> {
    let bits = b * cfg.seed_len();
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed ^ 0x5eed_5eed_5eed_5eed);
    let words = (0..bits.div_ceil(64)).map(|_| rng.next_u64()).collect();
    Ok(SeedFile::from_material(cfg, b, &BitString::from_words(words, bits))?)
}

fn build_bank(
    entry: &ChannelEntry,
    seed_path: Option<&Path>,
    cfg: &RunConfig,
    fixture_b: Option<usize>,
) -> Result<SeedBank> {
    let file = match (seed_path.or(entry.seed_file.as_deref()), fixture_b) {
        (Some(p), _) => read_seed_file(p)?,
        (None, Some(b)) => {
            log::warn!(
                "channel {}: no seed file; using {b} deterministic fixture seeds",
                entry.config.name
            );
            fixture_seeds(entry.config.toeplitz, b, entry.rng_seed)?
        }
        (None, None) => bail!("channel {}: no seed file configured (use --seeds)", entry.config.name),
    };
    if file.cfg != entry.config.toeplitz {
        bail!(
            "channel {}: seed file geometry m={} n={} k={} does not match config m={} n={} k={}",
            entry.config.name,
            file.cfg.m(),
            file.cfg.n(),
            file.cfg.k(),
            entry.config.toeplitz.m(),
            entry.config.toeplitz.n(),
            entry.config.toeplitz.k()
        );
    }
    Ok(SeedBank::from_seed_file(&file, cfg.security, cfg.selector)?)
}

fn finish_run(result: Result<RunReport, RunFailure>, out: &Path) -> Result<ExitCode> {
    let (report, err) = match result {
        Ok(r) => (r, None),
        Err(f) => (f.report, Some(f.error)),
    };
    let text = report.to_text();
    fs::write(out.join("report.toml"), &text).with_context(|| format!("writing report to {}", out.display()))?;
    print!("{text}");
    match err {
        None => Ok(ExitCode::SUCCESS),
        Some(e) => {
            eprintln!("error: run stopped early: {e}");
            Ok(ExitCode::FAILURE)
        }
    }
}

fn simulate(args: &RunArgs) -> Result<ExitCode> {
    let cfg = load_config(args.config.as_deref(), args.override_unsafe)?;
    if !args.seeds.is_empty() && args.seeds.len() != cfg.channels.len() {
        bail!(
            "--seeds given {} times but the config has {} channels",
            args.seeds.len(),
            cfg.channels.len()
        );
    }
    let duration = args.duration_blocks.or(cfg.duration_blocks).unwrap_or(1000);
    let period = args.refresh_period_secs.or(cfg.refresh_period_secs);
    let mut channels = Vec::new();
    for (i, entry) in cfg.channels.iter().enumerate() {
        let bank = build_bank(entry, args.seeds.get(i).map(PathBuf::as_path), &cfg, Some(args.fixture_seeds))?;
        let source = SimulatedSource::new(&entry.config.source, entry.rng_seed)?;
        let mut ch = Channel::new(entry.config.clone(), bank, Box::new(source))?
            .with_refresh(Box::new(SimulatedRefresh::new(entry.rng_seed.wrapping_add(0x7e5))));
        if let Some(s) = period {
            ch = ch.with_refresh_period(Duration::from_secs(s));
        }
        channels.push(ch);
    }
    let mut sink = FileSink::create(&args.out, channels.len())
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    finish_run(run_channels(&mut channels, duration, &mut sink), &args.out)
}

fn extract(args: &RunArgs, input: &Path, channel: usize) -> Result<ExitCode> {
    let cfg = load_config(args.config.as_deref(), args.override_unsafe)?;
    let entry = cfg
        .channels
        .get(channel)
        .with_context(|| format!("--channel {channel} but the config has {} channels", cfg.channels.len()))?;
    if entry.config.source.bits != 16 {
        bail!(
            "raw captures hold 16-bit samples but channel {} is configured for {} bits",
            entry.config.name,
            entry.config.source.bits
        );
    }
    if args.seeds.len() > 1 {
        bail!("extract runs one channel; give --seeds at most once");
    }
    let bytes = fs::read(input).with_context(|| format!("input file not found or unreadable: {}", input.display()))?;
    let samples = read_raw_samples(&bytes).with_context(|| format!("decoding {}", input.display()))?;
    let codes: Vec<i32> = samples.iter().map(|&s| s as i32).collect();
    let n = entry.config.toeplitz.n();
    let available = (codes.len() * 16 / n) as u64;
    if available == 0 {
        bail!(
            "{} holds {} bits, fewer than one {n}-bit block",
            input.display(),
            codes.len() * 16
        );
    }
    let leftover = codes.len() * 16 % n;
    if leftover > 0 {
        log::warn!("{leftover} trailing input bits do not fill a block and are ignored");
    }
    let duration = args.duration_blocks.map_or(available, |d| d.min(available));
    let bank = build_bank(entry, args.seeds.first().map(PathBuf::as_path), &cfg, None)?;
    let mut ch = Channel::new(entry.config.clone(), bank, Box::new(CaptureSource::new(&codes, 16)))?;
    if let Some(s) = args.refresh_period_secs.or(cfg.refresh_period_secs) {
        ch = ch.with_refresh_period(Duration::from_secs(s));
    }
    let mut channels = vec![ch];
    let mut sink = FileSink::create(&args.out, 1)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    finish_run(run_channels(&mut channels, duration, &mut sink), &args.out)
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn analyze(args: &AnalyzeArgs) -> Result<ExitCode> {
    let mut all_ok = true;
    if let Some(path) = &args.samples {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let codes: Vec<i32> = read_raw_samples(&bytes)?.into_iter().map(i32::from).collect();
        let block = SampleBlock {
            codes,
            sample_rate_hz: 0,
            bits: 16,
            full_scale: 1.0,
        };
        let h = min_entropy_from_histogram(&block.histogram())?;
        println!("samples {}: count={} hmin_per_sample={h:.4}", path.display(), block.codes.len());
    }
    let streams = args
        .inputs
        .iter()
        .map(|p| read_bitstream(p).with_context(|| format!("reading bitstream {}", p.display())))
        .collect::<Result<Vec<BitString>>>()?;
    for (p, s) in args.inputs.iter().zip(&streams) {
        let bias = bias_zscore(s)?;
        let runs = runs_zscore(s)?;
        let ok = bias.abs() < 4.0 && runs.abs() < 4.0;
        all_ok &= ok;
        println!(
            "{} {}: bits={} bias_z={bias:.3} runs_z={runs:.3}",
            pass(ok),
            p.display(),
            s.len()
        );
    }
    for i in 0..streams.len() {
        for j in i + 1..streams.len() {
            let len = streams[i].len().min(streams[j].len());
            let a = streams[i].slice(0, len)?;
            let b = streams[j].slice(0, len)?;
            let st = ChannelPairStats::compute(&a, &b)?;
            all_ok &= st.passes();
            println!(
                "{} pair {i}-{j}: bits={len} correlation={:.3e} (limit {:.3e}) mutual_information={:.3e} (limit {:.3e})",
                pass(st.passes()),
                st.correlation,
                st.correlation_limit(),
                st.mutual_information,
                st.mi_limit()
            );
        }
    }
    if let Some(path) = &args.bitmap {
        let first = streams.first().context("--bitmap needs an --input")?;
        let format = match args.bitmap_format {
            Pbm::P1 => PbmFormat::Plain,
            Pbm::P4 => PbmFormat::Raw,
        };
        let img = bitmap_render(first, args.width, args.height, format)?;
        fs::write(path, img).with_context(|| format!("writing {}", path.display()))?;
        println!("bitmap {}x{} written to {}", args.width, args.height, path.display());
    }
    if let Some(path) = &args.export_suite {
        let first = streams.first().context("--export-suite needs an --input")?;
        let bytes = export_for_suites(first, path)?;
        println!("exported {bytes} bytes to {}", path.display());
    }
    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn bench(config: Option<&Path>, duration: u64) -> Result<ExitCode> {
    let cfg = load_config(config, config.is_none())?;
    let mut channels = Vec::new();
    for entry in &cfg.channels {
        let bank = build_bank(entry, None, &cfg, Some(4))?;
        let source = SimulatedSource::new(&entry.config.source, entry.rng_seed)?;
        channels.push(
            Channel::new(entry.config.clone(), bank, Box::new(source))?
                .with_refresh(Box::new(SimulatedRefresh::new(entry.rng_seed))),
        );
    }
    let report = run_channels(&mut channels, duration, &mut NullSink).map_err(|f| f.error)?;
    let rates: Vec<_> = cfg.channels.iter().map(|c| c.config.rate()).collect();
    let model = throughput_accounting(&rates)?;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    println!(
        "machine {} {}, {threads} hardware threads, {} build",
        std::env::consts::OS,
        std::env::consts::ARCH,
        if cfg!(debug_assertions) { "debug" } else { "release" }
    );
    for c in &report.channel {
        println!(
            "{}: {} blocks in {:.3} s, {:.3e} bit/s",
            c.name, c.blocks, c.wall_seconds, c.software_bps
        );
    }
    let software: f64 = report.channel.iter().map(|c| c.software_bps).sum();
    println!("software total {software:.3e} bit/s (channels measured independently)");
    println!("modelled hardware {model:.4e} bit/s");
    Ok(ExitCode::SUCCESS)
}

fn seed_tool(cmd: SeedTool) -> Result<ExitCode> {
    match cmd {
        SeedTool::Create {
            m,
            n,
            k,
            b,
            from_raw,
            rng_seed,
            out,
        } => {
            let cfg = ToeplitzConfig::new(m, n, k)?;
            let file = match (from_raw, rng_seed) {
                (Some(path), _) => {
                    let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
                    let need = b * cfg.seed_len();
                    if bytes.len() * 8 < need {
                        bail!(
                            "{} holds {} bits; {b} seeds of {} bits need {need}",
                            path.display(),
                            bytes.len() * 8,
                            cfg.seed_len()
                        );
                    }
                    SeedFile::from_material(cfg, b, &BitString::from_bytes(&bytes, need)?)?
                }
                (None, Some(s)) => {
                    log::warn!("seeds from a deterministic test RNG are not secret");
                    fixture_seeds(cfg, b, s)?
                }
                (None, None) => bail!("give --from-raw or --rng-seed"),
            };
            fs::write(&out, file.to_bytes()).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} seeds of {} bits to {}", file.b(), cfg.seed_len(), out.display());
        }
        SeedTool::Inspect { file } => {
            let f = read_seed_file(&file)?;
            println!("m = {}", f.cfg.m());
            println!("n = {}", f.cfg.n());
            println!("k = {}", f.cfg.k());
            println!("b = {}", f.b());
            println!("seed_bits = {}", f.cfg.seed_len());
            println!("subseed_bits = {}", f.cfg.subseed_len());
            let ones: usize = f.seeds.iter().map(BitString::count_ones).sum();
            println!("ones_fraction = {:.6}", ones as f64 / (f.b() * f.cfg.seed_len()) as f64);
        }
    }
    Ok(ExitCode::SUCCESS)
}
