//! Sensing chain and zero-crossing detector.
//!
//! Load-referred signals are attenuated by a divider or current transformer,
//! lifted to a mid-rail bias and clamped to the ADC rails. In parallel an
//! ideal comparator turns each channel into a square wave whose edges are
//! timestamped on the capture timer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{round_half_away, Scalar};
use crate::signalgen::{Channel, WaveformSpec};

pub const DEFAULT_VREF: f64 = 5.0;
pub const DEFAULT_BIAS: f64 = 2.5;
/// Conditioned peak swing of a full-rated signal around the bias.
pub const DEFAULT_SWING: f64 = 2.4;

/// Bisection stops once the bracket is narrower than this many ticks.
const CROSSING_TOLERANCE_TICKS: f64 = 1e-3;
/// Coarse scan resolution, in grid points per fundamental period per harmonic order.
const GRID_POINTS_PER_PERIOD: f64 = 64.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{channel} channel: scale must be positive and finite, got {value}")]
    BadScale { channel: Channel, value: f64 },
    #[error("{channel} channel: vref must be positive and finite, got {value}")]
    BadVref { channel: Channel, value: f64 },
    #[error("{channel} channel: bias {bias} must lie strictly between 0 and vref {vref}")]
    BadBias {
        channel: Channel,
        bias: f64,
        vref: f64,
    },
    #[error("{channel} channel: hysteresis must be finite and non-negative, got {value}")]
    BadHysteresis { channel: Channel, value: f64 },
    #[error("{channel} channel: rated peak maps to [{low}, {high}] V, outside [0, {vref}] V")]
    RatedPeakOutOfRange {
        channel: Channel,
        low: f64,
        high: f64,
        vref: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("{0} channel amplitude never leaves the comparator dead band")]
    AmplitudeBelowHysteresis(Channel),
    #[error("{0} channel has no zero crossings")]
    NoCrossings(Channel),
}

/// Analog conditioning of one channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig<T> {
    /// Load units (volts or amperes) per conditioned volt.
    pub scale: T,
    /// Mid-rail DC level added after attenuation, volts.
    pub bias: T,
    /// ADC reference voltage.
    pub vref: T,
    /// Comparator dead-band half-width, load units.
    pub hysteresis: T,
}

impl<T: Scalar> ChannelConfig<T> {
    /// Full rated peak spans ±2.4 V around a 2.5 V bias on a 5 V reference.
    pub fn default_for(channel: Channel) -> Self {
        ChannelConfig {
            scale: T::lit(std::f64::consts::SQRT_2 * channel.rated_rms() / DEFAULT_SWING),
            bias: T::lit(DEFAULT_BIAS),
            vref: T::lit(DEFAULT_VREF),
            hysteresis: T::zero(),
        }
    }

    pub fn with_hysteresis(mut self, hysteresis: T) -> Self {
        self.hysteresis = hysteresis;
        self
    }

    /// Checks the ranges and that the channel's rated peak fits the ADC rails.
    pub fn validate(&self, channel: Channel) -> Result<(), ConfigError> {
        let f = |x: T| x.to_f64_lossy();
        if !(self.scale.is_finite() && self.scale > T::zero()) {
            return Err(ConfigError::BadScale {
                channel,
                value: f(self.scale),
            });
        }
        if !(self.vref.is_finite() && self.vref > T::zero()) {
            return Err(ConfigError::BadVref {
                channel,
                value: f(self.vref),
            });
        }
        if !(self.bias > T::zero() && self.bias < self.vref) {
            return Err(ConfigError::BadBias {
                channel,
                bias: f(self.bias),
                vref: f(self.vref),
            });
        }
        if !(self.hysteresis.is_finite() && self.hysteresis >= T::zero()) {
            return Err(ConfigError::BadHysteresis {
                channel,
                value: f(self.hysteresis),
            });
        }
        let swing = T::SQRT_2() * T::lit(channel.rated_rms()) / self.scale;
        let (low, high) = (self.bias - swing, self.bias + swing);
        // one part in 1e9 of slack so a scale chosen to span the rail exactly passes
        let slack = self.vref * T::lit(1e-9);
        if low < -slack || high > self.vref + slack {
            return Err(ConfigError::RatedPeakOutOfRange {
                channel,
                low: f(low),
                high: f(high),
                vref: f(self.vref),
            });
        }
        Ok(())
    }
}

/// Voltage at the ADC pin after conditioning.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinLevel<T> {
    pub volts: T,
    /// The unclamped level fell outside `[0, vref]`.
    pub saturated: bool,
}

/// Attenuates, biases and clamps a load-referred value.
pub fn condition<T: Scalar>(raw: T, cfg: &ChannelConfig<T>) -> PinLevel<T> {
    let v = raw / cfg.scale + cfg.bias;
    if v < T::zero() {
        PinLevel {
            volts: T::zero(),
            saturated: true,
        }
    } else if v > cfg.vref {
        PinLevel {
            volts: cfg.vref,
            saturated: true,
        }
    } else {
        PinLevel {
            volts: v,
            saturated: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Rising,
    Falling,
}

/// A comparator transition latched by the capture timer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeEvent {
    pub channel: Channel,
    pub tick: u64,
    pub direction: Direction,
}

/// Comparator edges of `channel` over the whole simulated span of `spec`.
pub fn zero_crossings<T: Scalar>(
    spec: &WaveformSpec<T>,
    channel: Channel,
    cfg: &ChannelConfig<T>,
    tick_hz: u32,
) -> Result<Vec<EdgeEvent>, FrontendError> {
    let end = spec.duration() * T::from_count(u64::from(tick_hz));
    zero_crossings_before(spec, channel, cfg, tick_hz, end)
}

/// Comparator edges whose rounded tick lies in `[0, end_tick)`.
///
/// The comparator is started two fundamental periods before `t = 0` on the
/// periodic extension of the signal so its state is settled when the window
/// opens; an edge exactly at `t = 0` is therefore reported.
pub fn zero_crossings_before<T: Scalar>(
    spec: &WaveformSpec<T>,
    channel: Channel,
    cfg: &ChannelConfig<T>,
    tick_hz: u32,
    end_tick: T,
) -> Result<Vec<EdgeEvent>, FrontendError> {
    let peak = T::SQRT_2() * spec.fundamental_rms(channel);
    if peak <= T::zero() {
        return Err(FrontendError::NoCrossings(channel));
    }
    let h = cfg.hysteresis;
    if peak <= h {
        return Err(FrontendError::AmplitudeBelowHysteresis(channel));
    }

    let tick_hz_t = T::from_count(u64::from(tick_hz));
    let signal = |tick: T| spec.value(channel, tick / tick_hz_t);
    let nonneg = |x: T| x >= T::zero();

    let max_order = spec
        .harmonics()
        .iter()
        .filter(|hm| hm.channel == channel && hm.rel_amplitude > T::zero())
        .map(|hm| hm.order)
        .max()
        .unwrap_or(1);
    let period_ticks = tick_hz_t / spec.freq();
    let step = (period_ticks
        / (T::lit(GRID_POINTS_PER_PERIOD) * T::from_count(u64::from(max_order))))
    .floor()
    .max(T::one());
    let start_steps = (T::lit(2.0) * period_ticks / step).ceil();
    let start = -start_steps * step;
    let tol = T::lit(CROSSING_TOLERANCE_TICKS);

    let mut edges: Vec<EdgeEvent> = Vec::new();
    let mut prev_t = start;
    let mut prev_s = signal(start);
    let mut high = prev_s > T::zero();
    let mut armed = false;
    let mut k = T::one();
    loop {
        if (high && prev_s > h) || (!high && prev_s < -h) {
            armed = true;
        }
        if prev_t >= end_tick {
            break;
        }
        let t = start + k * step;
        k += T::one();
        let s = signal(t);
        let rising = !nonneg(prev_s) && nonneg(s);
        let falling = nonneg(prev_s) && !nonneg(s);
        if armed && ((rising && !high) || (falling && high)) {
            // bracket [lo, hi] with sign(lo) == sign(prev_s)
            let (mut lo, mut hi) = (prev_t, t);
            let lo_sign = nonneg(prev_s);
            while hi - lo > tol {
                let mid = (lo + hi) / T::lit(2.0);
                if mid <= lo || mid >= hi {
                    break;
                }
                if nonneg(signal(mid)) == lo_sign {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let at = round_half_away((lo + hi) / T::lit(2.0));
            high = !high;
            armed = false;
            if at >= T::zero() && at < end_tick {
                let tick = at.to_u64().unwrap_or(0);
                match edges.last() {
                    // two crossings inside one tick cancel out at capture resolution
                    Some(last) if last.tick >= tick => {
                        edges.pop();
                    }
                    _ => edges.push(EdgeEvent {
                        channel,
                        tick,
                        direction: if rising {
                            Direction::Rising
                        } else {
                            Direction::Falling
                        },
                    }),
                }
            }
        }
        prev_t = t;
        prev_s = s;
    }

    if edges.is_empty() {
        return Err(FrontendError::NoCrossings(channel));
    }
    Ok(edges)
}

/// Comparator output level (0 or 1) at `tick`, i.e. after every edge at or
/// before `tick`. Before the first edge the level is the one that edge leaves.
pub fn zcd_level(edges: &[EdgeEvent], tick: u64) -> u8 {
    let idx = edges.partition_point(|e| e.tick <= tick);
    let direction = if idx == 0 {
        match edges.first() {
            Some(first) => match first.direction {
                Direction::Rising => Direction::Falling,
                Direction::Falling => Direction::Rising,
            },
            None => return 0,
        }
    } else {
        edges[idx - 1].direction
    };
    match direction {
        Direction::Rising => 1,
        Direction::Falling => 0,
    }
}
