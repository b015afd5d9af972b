//! Acquisition peripherals: the 10-bit ADC and the capture modules.
//!
//! [`acquire`] produces a [`SampleRun`], the full record a firmware loop
//! would see: interleaved ADC codes for both channels and the timer ticks
//! latched on every comparator edge. [`capture_delay`] reduces the edge
//! trains to the averaged period and voltage-to-current delay.

use std::collections::BTreeSet;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{
    condition, zcd_level, zero_crossings_before, ChannelConfig, ConfigError, Direction, EdgeEvent,
    FrontendError,
};
use crate::num::Scalar;
use crate::signalgen::{Channel, WaveformSpec};

pub const DEFAULT_ADC_BITS: u8 = 10;
pub const DEFAULT_SAMPLE_RATE: u32 = 10_000;
/// 10 MHz crystal, one instruction cycle per four oscillator periods.
pub const DEFAULT_TICK_HZ: u32 = 2_500_000;
pub const MIN_SAMPLES_PER_CYCLE: f64 = 20.0;

/// Header of the sample dump, which is also the replay format.
pub const CSV_HEADER: [&str; 5] = ["tick", "v_code", "i_code", "v_zcd", "i_zcd"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AcqError {
    #[error(transparent)]
    Channel(#[from] ConfigError),
    #[error("adc_bits must be within 8..=16, got {0}")]
    AdcBits(u8),
    #[error("sample_rate must be positive")]
    ZeroSampleRate,
    #[error("tick_hz {tick_hz} is not a multiple of sample_rate {sample_rate}")]
    TickNotMultiple { tick_hz: u32, sample_rate: u32 },
    #[error("sample_rate {sample_rate} Hz gives fewer than 20 samples per {freq} Hz cycle")]
    SampleRateTooLow { sample_rate: u32, freq: f64 },
    #[error(transparent)]
    Frontend(#[from] FrontendError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CaptureError {
    #[error("insufficient edges: {0}")]
    InsufficientEdges(&'static str),
}

/// ADC and timer configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawAcq<T>",
    bound(
        serialize = "T: Serialize",
        deserialize = "T: Scalar + Deserialize<'de>"
    )
)]
pub struct AcqConfig<T> {
    pub adc_bits: u8,
    /// Per-channel samples per second.
    pub sample_rate: u32,
    /// Capture timer frequency.
    pub tick_hz: u32,
    pub channel_v: ChannelConfig<T>,
    pub channel_i: ChannelConfig<T>,
}

// every field may be omitted and falls back to the default configuration
#[derive(Deserialize)]
struct RawAcq<T> {
    adc_bits: Option<u8>,
    sample_rate: Option<u32>,
    tick_hz: Option<u32>,
    channel_v: Option<ChannelConfig<T>>,
    channel_i: Option<ChannelConfig<T>>,
}

impl<T: Scalar> TryFrom<RawAcq<T>> for AcqConfig<T> {
    type Error = AcqError;

    fn try_from(raw: RawAcq<T>) -> Result<Self, Self::Error> {
        let cfg = AcqConfig {
            adc_bits: raw.adc_bits.unwrap_or(DEFAULT_ADC_BITS),
            sample_rate: raw.sample_rate.unwrap_or(DEFAULT_SAMPLE_RATE),
            tick_hz: raw.tick_hz.unwrap_or(DEFAULT_TICK_HZ),
            channel_v: raw
                .channel_v
                .unwrap_or_else(|| ChannelConfig::default_for(Channel::V)),
            channel_i: raw
                .channel_i
                .unwrap_or_else(|| ChannelConfig::default_for(Channel::I)),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl<T: Scalar> Default for AcqConfig<T> {
    fn default() -> Self {
        AcqConfig {
            adc_bits: DEFAULT_ADC_BITS,
            sample_rate: DEFAULT_SAMPLE_RATE,
            tick_hz: DEFAULT_TICK_HZ,
            channel_v: ChannelConfig::default_for(Channel::V),
            channel_i: ChannelConfig::default_for(Channel::I),
        }
    }
}

impl<T: Scalar> AcqConfig<T> {
    pub fn channel(&self, channel: Channel) -> &ChannelConfig<T> {
        match channel {
            Channel::V => &self.channel_v,
            Channel::I => &self.channel_i,
        }
    }

    pub fn ticks_per_sample(&self) -> u64 {
        u64::from(self.tick_hz / self.sample_rate)
    }

    pub fn full_scale_code(&self) -> u16 {
        ((1u32 << self.adc_bits) - 1) as u16
    }

    pub fn validate(&self) -> Result<(), AcqError> {
        if !(8..=16).contains(&self.adc_bits) {
            return Err(AcqError::AdcBits(self.adc_bits));
        }
        if self.sample_rate == 0 {
            return Err(AcqError::ZeroSampleRate);
        }
        if !self.tick_hz.is_multiple_of(self.sample_rate) {
            return Err(AcqError::TickNotMultiple {
                tick_hz: self.tick_hz,
                sample_rate: self.sample_rate,
            });
        }
        self.channel_v.validate(Channel::V)?;
        self.channel_i.validate(Channel::I)?;
        Ok(())
    }

    /// Validates the configuration against a particular spec.
    pub fn validate_for(&self, spec: &WaveformSpec<T>) -> Result<(), AcqError> {
        self.validate()?;
        let freq = spec.freq().to_f64_lossy();
        if f64::from(self.sample_rate) < MIN_SAMPLES_PER_CYCLE * freq {
            return Err(AcqError::SampleRateTooLow {
                sample_rate: self.sample_rate,
                freq,
            });
        }
        Ok(())
    }
}

/// `floor(v_pin / vref · 2^bits)`, clamped to the code range.
pub fn quantize<T: Scalar>(v_pin: T, adc_bits: u8, vref: T) -> u16 {
    let levels = T::from_count(1u64 << adc_bits);
    let raw = (v_pin / vref * levels).floor();
    let max = (1u32 << adc_bits) - 1;
    if raw <= T::zero() {
        0
    } else {
        raw.to_u32().map_or(max, |c| c.min(max)) as u16
    }
}

/// Centre of the voltage bin a code represents.
pub fn code_center<T: Scalar>(code: u16, adc_bits: u8, vref: T) -> T {
    (T::from_count(u64::from(code)) + T::lit(0.5)) * vref / T::from_count(1u64 << adc_bits)
}

/// ADC code streams of one acquisition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Codes {
    pub v: Vec<u16>,
    pub i: Vec<u16>,
    /// Samples whose conditioned level hit a rail, both channels combined.
    pub saturation_count: usize,
}

/// Number of samples per channel in an acquisition of `spec`.
pub fn sample_count<T: Scalar>(spec: &WaveformSpec<T>, config: &AcqConfig<T>) -> usize {
    let n = T::from_count(u64::from(spec.cycles())) * T::from_count(u64::from(config.sample_rate))
        / spec.freq();
    // guard against 1999.9999 style results of exact products
    let rounded = n.round();
    let n = if (n - rounded).abs() < T::lit(1e-6) * rounded.max(T::one()) {
        rounded
    } else {
        n.floor()
    };
    n.to_usize().unwrap_or(0)
}

/// Samples, conditions and quantizes both channels. Noise is drawn from a
/// ChaCha stream per channel keyed by the spec's seed.
pub fn sample_channels<T: Scalar>(spec: &WaveformSpec<T>, config: &AcqConfig<T>) -> Codes {
    let n = sample_count(spec, config);
    let rate = T::from_count(u64::from(config.sample_rate));
    let sigma = spec.noise_sigma();
    let mut saturation_count = 0;
    let mut channel_codes = |channel: Channel, stream: u64| {
        let cfg = config.channel(channel);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed());
        rng.set_stream(stream);
        (0..n)
            .map(|k| {
                let t = T::from_count(k as u64) / rate;
                let z: f64 = StandardNormal.sample(&mut rng);
                let raw = spec.value(channel, t) + sigma * T::lit(z);
                let pin = condition(raw, cfg);
                if pin.saturated {
                    saturation_count += 1;
                }
                quantize(pin.volts, config.adc_bits, cfg.vref)
            })
            .collect::<Vec<_>>()
    };
    let v = channel_codes(Channel::V, 0);
    let i = channel_codes(Channel::I, 1);
    Codes {
        v,
        i,
        saturation_count,
    }
}

/// Everything the firmware loop observes during one acquisition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct SampleRun<T> {
    pub config: AcqConfig<T>,
    /// Source scenario; absent for replayed recordings.
    pub spec: Option<WaveformSpec<T>>,
    pub v_codes: Vec<u16>,
    pub i_codes: Vec<u16>,
    pub v_edges: Vec<EdgeEvent>,
    pub i_edges: Vec<EdgeEvent>,
    pub saturation_count: usize,
}

/// Runs the emulated acquisition. Edges are kept only while the ADC is
/// sampling, i.e. for ticks below `samples · ticks_per_sample`.
pub fn acquire<T: Scalar>(
    spec: &WaveformSpec<T>,
    config: &AcqConfig<T>,
) -> Result<SampleRun<T>, AcqError> {
    config.validate_for(spec)?;
    let codes = sample_channels(spec, config);
    let end = T::from_count(codes.v.len() as u64 * config.ticks_per_sample());
    let v_edges = zero_crossings_before(spec, Channel::V, &config.channel_v, config.tick_hz, end)?;
    let i_edges = zero_crossings_before(spec, Channel::I, &config.channel_i, config.tick_hz, end)?;
    Ok(SampleRun {
        config: config.clone(),
        spec: Some(spec.clone()),
        v_codes: codes.v,
        i_codes: codes.i,
        v_edges,
        i_edges,
        saturation_count: codes.saturation_count,
    })
}

fn level_before(edges: &[EdgeEvent], tick: u64) -> u8 {
    match tick.checked_sub(1) {
        Some(prev) => zcd_level(edges, prev),
        None => match edges.first() {
            Some(first) if first.direction == Direction::Rising => 0,
            Some(_) => 1,
            None => 0,
        },
    }
}

impl<T: Scalar> SampleRun<T> {
    pub fn sample_tick(&self, index: usize) -> u64 {
        index as u64 * self.config.ticks_per_sample()
    }

    /// Writes the `tick,v_code,i_code,v_zcd,i_zcd` dump.
    ///
    /// One row per ADC sample, plus one row per comparator edge that falls
    /// between samples; those rows repeat the last converted codes. When an
    /// edge sits on tick 0 an extra leading tick-0 row carries the comparator
    /// levels from before the run, so every edge shows up as a level change.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        if self.v_codes.is_empty() {
            w.flush()?;
            return Ok(());
        }
        let tps = self.config.ticks_per_sample();
        let mut ticks: BTreeSet<u64> = (0..self.v_codes.len())
            .map(|k| self.sample_tick(k))
            .collect();
        ticks.extend(self.v_edges.iter().chain(&self.i_edges).map(|e| e.tick));

        let starts_on_edge = self
            .v_edges
            .iter()
            .chain(&self.i_edges)
            .any(|e| e.tick == 0);
        if starts_on_edge {
            let record = [
                "0".to_string(),
                self.v_codes[0].to_string(),
                self.i_codes[0].to_string(),
                level_before(&self.v_edges, 0).to_string(),
                level_before(&self.i_edges, 0).to_string(),
            ];
            w.write_record(&record)?;
        }
        let last = self.v_codes.len() - 1;
        for tick in ticks {
            let k = ((tick / tps) as usize).min(last);
            let record = [
                tick.to_string(),
                self.v_codes[k].to_string(),
                self.i_codes[k].to_string(),
                zcd_level(&self.v_edges, tick).to_string(),
                zcd_level(&self.i_edges, tick).to_string(),
            ];
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}

/// Averaged period and voltage-to-current delay, in timer ticks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureRecord<T> {
    pub period_ticks: T,
    pub delta_ticks: T,
    pub pairs_used: usize,
}

fn rising_ticks(edges: &[EdgeEvent]) -> Vec<u64> {
    edges
        .iter()
        .filter(|e| e.direction == Direction::Rising)
        .map(|e| e.tick)
        .collect()
}

/// Keeps the first rising edge of each fundamental period: an edge is
/// dropped when it follows the last kept one by less than half a period.
fn first_per_period(ticks: &[u64], nominal_period: f64) -> Vec<u64> {
    let mut kept: Vec<u64> = Vec::with_capacity(ticks.len());
    for &t in ticks {
        match kept.last() {
            Some(&prev) if ((t - prev) as f64) < 0.5 * nominal_period => {}
            _ => kept.push(t),
        }
    }
    kept
}

/// Reduces the edge trains of a run to a [`CaptureRecord`].
pub fn capture_delay<T: Scalar>(run: &SampleRun<T>) -> Result<CaptureRecord<T>, CaptureError> {
    let v_all = rising_ticks(&run.v_edges);
    let i_all = rising_ticks(&run.i_edges);
    if v_all.len() < 2 {
        return Err(CaptureError::InsufficientEdges(
            "need two voltage rising edges",
        ));
    }
    // the capture hardware has no notion of the nominal frequency; a replayed
    // run falls back to the longest gap between rising edges
    let nominal = match &run.spec {
        Some(spec) => f64::from(run.config.tick_hz) / spec.freq().to_f64_lossy(),
        None => v_all.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0) as f64,
    };
    let v = first_per_period(&v_all, nominal);
    let i = first_per_period(&i_all, nominal);
    if v.len() < 2 {
        return Err(CaptureError::InsufficientEdges(
            "need two voltage rising edges",
        ));
    }

    let span = T::from_count(v[v.len() - 1] - v[0]);
    let period = span / T::from_count(v.len() as u64 - 1);

    let mut gap_sum = T::zero();
    let mut pairs = 0usize;
    for &vt in &v[..v.len() - 1] {
        let idx = i.partition_point(|&it| it < vt);
        if let Some(&it) = i.get(idx) {
            let gap = T::from_count(it - vt);
            if gap < period {
                gap_sum += gap;
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return Err(CaptureError::InsufficientEdges(
            "no current rising edge within a period of a voltage rising edge",
        ));
    }
    Ok(CaptureRecord {
        period_ticks: period,
        delta_ticks: gap_sum / T::from_count(pairs as u64),
        pairs_used: pairs,
    })
}
