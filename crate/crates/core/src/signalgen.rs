//! Synthetic single-phase load waveforms and their closed-form ground truth.
//!
//! A [`WaveformSpec`] describes the analog voltage and current seen at the
//! load: fundamental RMS magnitudes, the current's lag angle, optional
//! integer harmonics on either channel and the ADC-path noise level. The
//! spec is validated once at construction; everything downstream can assume
//! it is inside the 250 V / 20 A rating envelope.
//!
//! Harmonic phases are referenced to the fundamental of their own channel,
//! so a current harmonic of order `k` is `sin(k·(ωt − θ) + φ)`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;

/// Rated RMS voltage of the monitor.
pub const RATED_VRMS: f64 = 250.0;
/// Rated RMS current of the monitor.
pub const RATED_IRMS: f64 = 20.0;
/// Mains frequency used when a spec does not set one.
pub const DEFAULT_FREQ_HZ: f64 = 50.0;
pub const DEFAULT_CYCLES: u32 = 10;

/// Measurement channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "V", alias = "v")]
    V,
    #[serde(rename = "I", alias = "i")]
    I,
}

impl Channel {
    pub const BOTH: [Channel; 2] = [Channel::V, Channel::I];

    /// Rated RMS value of the channel in load units.
    pub fn rated_rms(self) -> f64 {
        match self {
            Channel::V => RATED_VRMS,
            Channel::I => RATED_IRMS,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::V => "V",
            Channel::I => "I",
        })
    }
}

impl FromStr for Channel {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "v" | "V" => Ok(Channel::V),
            "i" | "I" => Ok(Channel::I),
            other => Err(SpecError::UnknownChannel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("vrms {0} outside [0, 250] V")]
    VrmsOutOfRange(f64),
    #[error("irms {0} outside [0, 20] A")]
    IrmsOutOfRange(f64),
    #[error("frequency must be positive and finite, got {0}")]
    BadFrequency(f64),
    #[error("theta {0} rad outside (-pi, pi]")]
    ThetaOutOfRange(f64),
    #[error("at least 2 cycles are required, got {0}")]
    TooFewCycles(u32),
    #[error("noise sigma must be finite and non-negative, got {0}")]
    BadNoise(f64),
    #[error("harmonic order {0} on {1} must be at least 2")]
    BadHarmonicOrder(u32, Channel),
    #[error("harmonic order {0} on {1} given twice")]
    DuplicateHarmonic(u32, Channel),
    #[error(
        "harmonic order {order} on {channel}: amplitude {rel} must be finite and non-negative"
    )]
    BadHarmonicAmplitude {
        channel: Channel,
        order: u32,
        rel: f64,
    },
    #[error("harmonic order {order} on {channel}: phase must be finite")]
    BadHarmonicPhase { channel: Channel, order: u32 },
    #[error("unknown channel `{0}` (expected v or i)")]
    UnknownChannel(String),
}

/// One integer harmonic riding on a channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Harmonic<T> {
    pub channel: Channel,
    pub order: u32,
    /// Fraction of the channel's fundamental RMS.
    pub rel_amplitude: T,
    /// Radians, relative to the channel's own fundamental.
    pub phase: T,
}

/// Validated description of a load scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawSpec<T>",
    bound(
        serialize = "T: Serialize",
        deserialize = "T: Scalar + Deserialize<'de>"
    )
)]
pub struct WaveformSpec<T> {
    vrms: T,
    irms: T,
    freq: T,
    theta: T,
    harmonics: Vec<Harmonic<T>>,
    noise_sigma: T,
    cycles: u32,
    seed: u64,
}

#[derive(Deserialize)]
struct RawSpec<T> {
    vrms: T,
    irms: T,
    freq: Option<T>,
    theta: T,
    #[serde(default)]
    harmonics: Vec<Harmonic<T>>,
    noise_sigma: Option<T>,
    cycles: Option<u32>,
    #[serde(default)]
    seed: u64,
}

impl<T: Scalar> TryFrom<RawSpec<T>> for WaveformSpec<T> {
    type Error = SpecError;

    fn try_from(raw: RawSpec<T>) -> Result<Self, Self::Error> {
        let mut b = WaveformSpec::builder(raw.vrms, raw.irms, raw.theta).seed(raw.seed);
        if let Some(freq) = raw.freq {
            b = b.freq(freq);
        }
        if let Some(noise) = raw.noise_sigma {
            b = b.noise_sigma(noise);
        }
        if let Some(cycles) = raw.cycles {
            b = b.cycles(cycles);
        }
        b.harmonics = raw.harmonics;
        b.build()
    }
}

/// Builder for [`WaveformSpec`]; validation happens in [`SpecBuilder::build`].
#[derive(Clone, Debug)]
pub struct SpecBuilder<T> {
    vrms: T,
    irms: T,
    freq: T,
    theta: T,
    harmonics: Vec<Harmonic<T>>,
    noise_sigma: T,
    cycles: u32,
    seed: u64,
}

impl<T: Scalar> SpecBuilder<T> {
    pub fn vrms(mut self, vrms: T) -> Self {
        self.vrms = vrms;
        self
    }

    pub fn irms(mut self, irms: T) -> Self {
        self.irms = irms;
        self
    }

    pub fn theta(mut self, theta: T) -> Self {
        self.theta = theta;
        self
    }

    pub fn freq(mut self, freq: T) -> Self {
        self.freq = freq;
        self
    }

    pub fn cycles(mut self, cycles: u32) -> Self {
        self.cycles = cycles;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn noise_sigma(mut self, sigma: T) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn harmonic(mut self, channel: Channel, order: u32, rel_amplitude: T, phase: T) -> Self {
        self.harmonics.push(Harmonic {
            channel,
            order,
            rel_amplitude,
            phase,
        });
        self
    }

    pub fn clear_harmonics(mut self) -> Self {
        self.harmonics.clear();
        self
    }

    pub fn build(self) -> Result<WaveformSpec<T>, SpecError> {
        let f = |x: T| x.to_f64_lossy();
        let in_range = |x: T, hi: f64| x.is_finite() && x >= T::zero() && f(x) <= hi;
        if !in_range(self.vrms, RATED_VRMS) {
            return Err(SpecError::VrmsOutOfRange(f(self.vrms)));
        }
        if !in_range(self.irms, RATED_IRMS) {
            return Err(SpecError::IrmsOutOfRange(f(self.irms)));
        }
        if !(self.freq.is_finite() && self.freq > T::zero()) {
            return Err(SpecError::BadFrequency(f(self.freq)));
        }
        if !(self.theta.is_finite() && self.theta > -T::PI() && self.theta <= T::PI()) {
            return Err(SpecError::ThetaOutOfRange(f(self.theta)));
        }
        if self.cycles < 2 {
            return Err(SpecError::TooFewCycles(self.cycles));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= T::zero()) {
            return Err(SpecError::BadNoise(f(self.noise_sigma)));
        }
        let mut seen = HashSet::new();
        for h in &self.harmonics {
            if h.order < 2 {
                return Err(SpecError::BadHarmonicOrder(h.order, h.channel));
            }
            if !seen.insert((h.channel, h.order)) {
                return Err(SpecError::DuplicateHarmonic(h.order, h.channel));
            }
            if !(h.rel_amplitude.is_finite() && h.rel_amplitude >= T::zero()) {
                return Err(SpecError::BadHarmonicAmplitude {
                    channel: h.channel,
                    order: h.order,
                    rel: f(h.rel_amplitude),
                });
            }
            if !h.phase.is_finite() {
                return Err(SpecError::BadHarmonicPhase {
                    channel: h.channel,
                    order: h.order,
                });
            }
        }
        Ok(WaveformSpec {
            vrms: self.vrms,
            irms: self.irms,
            freq: self.freq,
            theta: self.theta,
            harmonics: self.harmonics,
            noise_sigma: self.noise_sigma,
            cycles: self.cycles,
            seed: self.seed,
        })
    }
}

/// Closed-form values a perfect meter would report for a spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticTruth<T> {
    /// RMS voltage including harmonics.
    pub vrms_true: T,
    /// RMS current including harmonics.
    pub irms_true: T,
    pub theta_fund: T,
    pub pf_displacement: T,
    /// `vrms_true · irms_true · cos θ`
    pub p_eq1: T,
    /// `vrms_true · irms_true · sin θ`
    pub q_eq2: T,
    /// `vrms_true · irms_true`
    pub s_eq3: T,
    /// True average power summed over the harmonics present on both channels.
    pub p_spectral: T,
}

impl<T: Scalar> WaveformSpec<T> {
    /// Starts a builder with 50 Hz, 10 cycles, no harmonics, no noise, seed 0.
    pub fn builder(vrms: T, irms: T, theta: T) -> SpecBuilder<T> {
        SpecBuilder {
            vrms,
            irms,
            freq: T::lit(DEFAULT_FREQ_HZ),
            theta,
            harmonics: Vec::new(),
            noise_sigma: T::zero(),
            cycles: DEFAULT_CYCLES,
            seed: 0,
        }
    }

    /// Harmonic-free, noiseless spec with default frequency and length.
    pub fn sine(vrms: T, irms: T, theta: T) -> Result<Self, SpecError> {
        Self::builder(vrms, irms, theta).build()
    }

    /// Builder pre-loaded with this spec's values.
    pub fn to_builder(&self) -> SpecBuilder<T> {
        SpecBuilder {
            vrms: self.vrms,
            irms: self.irms,
            freq: self.freq,
            theta: self.theta,
            harmonics: self.harmonics.clone(),
            noise_sigma: self.noise_sigma,
            cycles: self.cycles,
            seed: self.seed,
        }
    }

    pub fn vrms(&self) -> T {
        self.vrms
    }

    pub fn irms(&self) -> T {
        self.irms
    }

    pub fn freq(&self) -> T {
        self.freq
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn harmonics(&self) -> &[Harmonic<T>] {
        &self.harmonics
    }

    pub fn noise_sigma(&self) -> T {
        self.noise_sigma
    }

    pub fn cycles(&self) -> u32 {
        self.cycles
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn period(&self) -> T {
        self.freq.recip()
    }

    /// Simulated time span in seconds.
    pub fn duration(&self) -> T {
        T::from_count(u64::from(self.cycles)) / self.freq
    }

    /// Fundamental RMS of a channel.
    pub fn fundamental_rms(&self, channel: Channel) -> T {
        match channel {
            Channel::V => self.vrms,
            Channel::I => self.irms,
        }
    }

    /// Instantaneous load voltage and current at `t` seconds.
    pub fn evaluate(&self, t: T) -> (T, T) {
        (self.value(Channel::V, t), self.value(Channel::I, t))
    }

    /// Noiseless composite signal of one channel. Defined for any real `t`;
    /// the waveform is periodic with the fundamental period.
    pub fn value(&self, channel: Channel, t: T) -> T {
        let sqrt2 = T::SQRT_2();
        let wt = T::TAU() * self.freq * t;
        let (rms, shift) = match channel {
            Channel::V => (self.vrms, T::zero()),
            Channel::I => (self.irms, self.theta),
        };
        let base = wt - shift;
        let mut acc = base.sin();
        for h in self.harmonics.iter().filter(|h| h.channel == channel) {
            let k = T::from_count(u64::from(h.order));
            acc += h.rel_amplitude * (k * base + h.phase).sin();
        }
        sqrt2 * rms * acc
    }

    /// Relative amplitude of harmonic `order` on `channel`, zero if absent.
    fn rel(&self, channel: Channel, order: u32) -> Option<&Harmonic<T>> {
        self.harmonics
            .iter()
            .find(|h| h.channel == channel && h.order == order)
    }

    fn rms_factor(&self, channel: Channel) -> T {
        let sum_sq: T = self
            .harmonics
            .iter()
            .filter(|h| h.channel == channel)
            .map(|h| h.rel_amplitude * h.rel_amplitude)
            .sum();
        (T::one() + sum_sq).sqrt()
    }

    /// Ground truth for every quantity the meter reports.
    pub fn analytic_truth(&self) -> AnalyticTruth<T> {
        let vrms_true = self.vrms * self.rms_factor(Channel::V);
        let irms_true = self.irms * self.rms_factor(Channel::I);
        let (sin_t, cos_t) = self.theta.sin_cos();
        let s = vrms_true * irms_true;

        // Voltage harmonic k sits at phasor angle φv; current harmonic k at
        // φi − kθ once the current's time shift is unfolded.
        let mut p_spectral = self.vrms * self.irms * cos_t;
        for hv in self.harmonics.iter().filter(|h| h.channel == Channel::V) {
            if let Some(hi) = self.rel(Channel::I, hv.order) {
                let k = T::from_count(u64::from(hv.order));
                let vk = hv.rel_amplitude * self.vrms;
                let ik = hi.rel_amplitude * self.irms;
                p_spectral += vk * ik * (hv.phase - hi.phase + k * self.theta).cos();
            }
        }

        AnalyticTruth {
            vrms_true,
            irms_true,
            theta_fund: self.theta,
            pf_displacement: cos_t,
            p_eq1: s * cos_t,
            q_eq2: s * sin_t,
            s_eq3: s,
            p_spectral,
        }
    }
}
