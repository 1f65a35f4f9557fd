//! TOML run configuration.
//!
//! ```toml
//! duration_blocks = 100000      # optional; the CLI flag overrides it
//! override_unsafe = false       # run even if m exceeds the leftover-hash bound
//! refresh_period_secs = 86400   # optional wall-clock refresh cadence
//!
//! [security]                    # optional; all fields log10 of a probability
//! eps_hash_log10 = -50.0
//! eps_seed_log10 = -50.0
//! eps_threshold_log10 = -36.0
//!
//! [selector]                    # optional LFSR override
//! width = 16
//! taps = 0xB400
//!
//! [[channel]]
//! name = "ch0"
//! m = 1729
//! n = 2464
//! k = 32
//! seed_file = "seeds/ch0.qrs"   # optional; relative to the config file
//! rng_seed = 1                  # simulated noise stream
//! sigma = 0.05                  # volts
//! full_scale = 1.0              # volts, peak to peak
//! adc_bits = 16
//! sample_rate_hz = 250000000
//! bus_clock_hz = 125000000      # optional; derived from k when absent
//! hmin_per_sample = 13.0        # optional; Gaussian ADC model when absent
//! ```
//!
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::extractor::ToeplitzConfig;
use crate::params::{min_entropy_gaussian_adc, EntropyEstimate, Epsilon, SecuritySpec};
use crate::pipeline::{ChannelConfig, SourceParams};
use crate::seedbank::SelectorSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("config field `{field}`: {message}")]
    Field { field: String, message: String },
}

fn field_err(field: impl Into<String>, message: impl ToString) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSecurity {
    eps_hash_log10: Option<f64>,
    eps_seed_log10: Option<f64>,
    eps_threshold_log10: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSelector {
    width: Option<u32>,
    taps: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    name: Option<String>,
    m: usize,
    n: usize,
    k: usize,
    seed_file: Option<PathBuf>,
    rng_seed: Option<u64>,
    sigma: Option<f64>,
    full_scale: Option<f64>,
    adc_bits: Option<u32>,
    sample_rate_hz: Option<u64>,
    bus_clock_hz: Option<u64>,
    hmin_per_sample: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    duration_blocks: Option<u64>,
    #[serde(default)]
    override_unsafe: bool,
    refresh_period_secs: Option<u64>,
    security: Option<RawSecurity>,
    selector: Option<RawSelector>,
    #[serde(default)]
    channel: Vec<RawChannel>,
}

pub const DEFAULT_SIGMA: f64 = 0.05;
pub const DEFAULT_FULL_SCALE: f64 = 1.0;
pub const DEFAULT_ADC_BITS: u32 = 16;
pub const DEFAULT_SAMPLE_RATE_HZ: u64 = 250_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEntry {
    pub config: ChannelConfig,
    pub seed_file: Option<PathBuf>,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub channels: Vec<ChannelEntry>,
    pub duration_blocks: Option<u64>,
    pub override_unsafe: bool,
    pub refresh_period_secs: Option<u64>,
    pub security: SecuritySpec,
    pub selector: SelectorSpec,
}

impl RunConfig {
    /// Parses and validates. Relative seed paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self, ConfigError> {
        Self::parse_with_override(text, base_dir, false)
    }

    /// As [`parse`](Self::parse), with `force_override` OR-ed into the
    /// file's `override_unsafe`.
    pub fn parse_with_override(
        text: &str,
        base_dir: Option<&Path>,
        force_override: bool,
    ) -> Result<Self, ConfigError> {
        let mut raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        raw.override_unsafe |= force_override;
        Self::from_raw(raw, base_dir)
    }

    fn from_raw(raw: RawConfig, base_dir: Option<&Path>) -> Result<Self, ConfigError> {
        let defaults = SecuritySpec::default();
        let security = match raw.security {
            None => defaults,
            Some(s) => {
                let eps = |field: &str, v: Option<f64>, d: Epsilon| match v {
                    None => Ok(d),
                    Some(v) => Epsilon::from_log10(v).map_err(|e| field_err(format!("security.{field}"), e)),
                };
                let spec = SecuritySpec {
                    eps_hash: eps("eps_hash_log10", s.eps_hash_log10, defaults.eps_hash)?,
                    eps_seed: eps("eps_seed_log10", s.eps_seed_log10, defaults.eps_seed)?,
                    eps_threshold: eps("eps_threshold_log10", s.eps_threshold_log10, defaults.eps_threshold)?,
                    mu: 1.0,
                };
                spec.validate()
                    .map_err(|e| field_err("security.eps_threshold_log10", e))?;
                spec
            }
        };
        let selector = match raw.selector {
            None => SelectorSpec::default(),
            Some(s) => {
                let width = s.width.unwrap_or(SelectorSpec::default().width);
                let taps = match s.taps {
                    Some(t) => t,
                    None => crate::seedbank::maximal_taps(width).ok_or_else(|| {
                        field_err("selector.taps", format!("no tabulated taps for width {width}; give taps explicitly"))
                    })?,
                };
                crate::seedbank::LfsrState::new(width, taps, 1).map_err(|e| field_err("selector", e))?;
                SelectorSpec { width, taps }
            }
        };
        if raw.channel.is_empty() {
            return Err(field_err("channel", "at least one [[channel]] table is required"));
        }
        if raw.duration_blocks == Some(0) {
            log::warn!("duration_blocks = 0 produces no output");
        }
        if raw.refresh_period_secs == Some(0) {
            return Err(field_err("refresh_period_secs", "must be positive"));
        }
        let channels = raw
            .channel
            .into_iter()
            .enumerate()
            .map(|(i, c)| channel_entry(i, c, security, raw.override_unsafe, base_dir))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            channels,
            duration_blocks: raw.duration_blocks,
            override_unsafe: raw.override_unsafe,
            refresh_period_secs: raw.refresh_period_secs,
            security,
            selector,
        })
    }

    /// Four 16-bit channels at 250 MS/s on a 125 MHz bus with `k = 32`,
    /// `m = 1729`, and input lengths 2464, 2464, 2432 and 2432 bits. The
    /// assumed per-sample min-entropies are 13.0, 13.13, 13.21 and 13.0.
    ///
    /// Every channel's `m` exceeds the leftover-hash bound at the default
    /// security parameters, so `override_unsafe` is set.
    pub fn reference() -> Self {
        let text = REFERENCE_TOML;
        Self::parse(text, None).expect("reference config is valid")
    }
}

pub const REFERENCE_TOML: &str = r#"override_unsafe = true

[[channel]]
name = "ch0"
m = 1729
n = 2464
k = 32
rng_seed = 1
hmin_per_sample = 13.0

[[channel]]
name = "ch1"
m = 1729
n = 2464
k = 32
rng_seed = 2
hmin_per_sample = 13.13

[[channel]]
name = "ch2"
m = 1729
n = 2432
k = 32
rng_seed = 3
hmin_per_sample = 13.21

[[channel]]
name = "ch3"
m = 1729
n = 2432
k = 32
rng_seed = 4
hmin_per_sample = 13.0
"#;

fn channel_entry(
    index: usize,
    c: RawChannel,
    security: SecuritySpec,
    override_unsafe: bool,
    base_dir: Option<&Path>,
) -> Result<ChannelEntry, ConfigError> {
    let f = |name: &str| format!("channel[{index}].{name}");
    let toeplitz = ToeplitzConfig::new(c.m, c.n, c.k).map_err(|e| field_err(f("m/n/k"), e))?;
    let bits = c.adc_bits.unwrap_or(DEFAULT_ADC_BITS);
    if !(1..=32).contains(&bits) {
        return Err(field_err(f("adc_bits"), format!("must be in 1..=32, got {bits}")));
    }
    let sigma = c.sigma.unwrap_or(DEFAULT_SIGMA);
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(field_err(f("sigma"), format!("must be positive, got {sigma}")));
    }
    let full_scale = c.full_scale.unwrap_or(DEFAULT_FULL_SCALE);
    if !(full_scale > 0.0 && full_scale.is_finite()) {
        return Err(field_err(f("full_scale"), format!("must be positive, got {full_scale}")));
    }
    let sample_rate_hz = c.sample_rate_hz.unwrap_or(DEFAULT_SAMPLE_RATE_HZ);
    if sample_rate_hz == 0 {
        return Err(field_err(f("sample_rate_hz"), "must be positive"));
    }
    let total = sample_rate_hz as u128 * bits as u128;
    let bus_clock_hz = match c.bus_clock_hz {
        Some(j) => j,
        None => {
            if !total.is_multiple_of(c.k as u128) {
                return Err(field_err(
                    f("k"),
                    format!("sample_rate_hz * adc_bits = {total} is not divisible by k = {}", c.k),
                ));
            }
            u64::try_from(total / c.k as u128).map_err(|_| field_err(f("sample_rate_hz"), "too large"))?
        }
    };
    let source = SourceParams {
        sigma,
        full_scale,
        bits,
        sample_rate_hz,
        bus_clock_hz,
    };
    let width = source.word_width().map_err(|e| field_err(f("bus_clock_hz"), e))?;
    if width != c.k {
        return Err(field_err(
            f("bus_clock_hz"),
            format!("word width C*a/J = {width} does not match k = {}", c.k),
        ));
    }
    let hmin = match c.hmin_per_sample {
        Some(h) => h,
        None => min_entropy_gaussian_adc(sigma, full_scale, bits).map_err(|e| field_err(f("sigma"), e))?,
    };
    let entropy = EntropyEstimate::new(hmin, bits).map_err(|e| field_err(f("hmin_per_sample"), e))?;
    let config = ChannelConfig {
        name: c.name.unwrap_or_else(|| format!("ch{index}")),
        toeplitz,
        entropy,
        security,
        source,
        override_unsafe,
    };
    config.validate().map_err(|e| field_err(f("m"), e))?;
    Ok(ChannelEntry {
        config,
        seed_file: c.seed_file.map(|p| match base_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p,
        }),
        rng_seed: c.rng_seed.unwrap_or(index as u64 + 1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[[channel]]\nm = 64\nn = 512\nk = 32\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::parse(MINIMAL, None).unwrap();
        let ch = &cfg.channels[0].config;
        assert_eq!(ch.name, "ch0");
        assert_eq!(ch.source.bus_clock_hz, 125_000_000);
        assert!((ch.entropy.hmin_per_sample - 13.0).abs() < 0.01);
        assert_eq!(cfg.security, SecuritySpec::default());
        assert_eq!(cfg.channels[0].rng_seed, 1);
    }

    #[test]
    fn reference_config_shape() {
        let cfg = RunConfig::reference();
        assert_eq!(cfg.channels.len(), 4);
        assert!(cfg.channels.iter().all(|c| c.config.exceeds_bound()));
        assert_eq!(cfg.channels[0].config.output_bound(), 1669);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::parse(&format!("{MINIMAL}bogus = 1\n"), None).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = RunConfig::parse("typo = 3\n", None).unwrap_err();
        assert!(matches!(err, ConfigError::Syntax(_)));
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            ("[[channel]]\nm = 64\nn = 500\nk = 32\n", "channel[0].m/n/k"),
            ("[[channel]]\nm = 64\nn = 512\nk = 32\nbus_clock_hz = 250000000\n", "channel[0].bus_clock_hz"),
            ("[[channel]]\nm = 64\nn = 512\nk = 32\nsigma = -1.0\n", "channel[0].sigma"),
            ("[[channel]]\nm = 500\nn = 512\nk = 32\n", "channel[0].m"),
            ("[security]\neps_hash_log10 = 1.0\n[[channel]]\nm = 64\nn = 512\nk = 32\n", "security.eps_hash_log10"),
            ("[selector]\nwidth = 16\ntaps = 0\n[[channel]]\nm = 64\nn = 512\nk = 32\n", "selector"),
            ("duration_blocks = 3\n", "channel"),
        ];
        for (text, field) in cases {
            match RunConfig::parse(text, None) {
                Err(ConfigError::Field { field: f, .. }) => assert_eq!(f, field, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn seed_paths_resolve_against_base() {
        let text = "[[channel]]\nm = 64\nn = 512\nk = 32\nseed_file = \"s.qrs\"\n";
        let cfg = RunConfig::parse(text, Some(Path::new("/cfg"))).unwrap();
        assert_eq!(cfg.channels[0].seed_file.as_deref(), Some(Path::new("/cfg/s.qrs")));
    }
}
