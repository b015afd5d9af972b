//! Meter arithmetic: true RMS from ADC codes, phase from the capture record
//! and the active/reactive/apparent power triangle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::ChannelConfig;
use crate::num::Scalar;
use crate::sampler::{capture_delay, CaptureError, CaptureRecord, SampleRun};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeterError {
    #[error(transparent)]
    InsufficientEdges(#[from] CaptureError),
    #[error("RMS window holds no complete fundamental period")]
    EmptyWindow,
}

/// The quantities shown on the display, plus frequency and lag/lead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    into = "ReadingJson<T>",
    from = "ReadingJson<T>",
    bound(
        serialize = "T: Scalar + Serialize",
        deserialize = "T: Scalar + Deserialize<'de>"
    )
)]
pub struct MeterReading<T> {
    pub vrms: T,
    pub irms: T,
    pub freq: T,
    /// Radians in `[0, π]`.
    pub theta: T,
    pub pf: T,
    pub lagging: bool,
    pub p: T,
    /// Magnitude; the sign is carried by `lagging`.
    pub q: T,
    pub s: T,
}

/// External JSON form; the angle is reported in degrees.
#[derive(Clone, Serialize, Deserialize)]
struct ReadingJson<T> {
    vrms: T,
    irms: T,
    freq_hz: T,
    theta_deg: T,
    pf: T,
    lagging: bool,
    p_w: T,
    q_var: T,
    s_va: T,
}

impl<T: Scalar> From<MeterReading<T>> for ReadingJson<T> {
    fn from(r: MeterReading<T>) -> Self {
        ReadingJson {
            vrms: r.vrms,
            irms: r.irms,
            freq_hz: r.freq,
            theta_deg: r.theta.to_degrees(),
            pf: r.pf,
            lagging: r.lagging,
            p_w: r.p,
            q_var: r.q,
            s_va: r.s,
        }
    }
}

impl<T: Scalar> From<ReadingJson<T>> for MeterReading<T> {
    fn from(j: ReadingJson<T>) -> Self {
        MeterReading {
            vrms: j.vrms,
            irms: j.irms,
            freq: j.freq_hz,
            theta: j.theta_deg.to_radians(),
            pf: j.pf,
            lagging: j.lagging,
            p: j.p_w,
            q: j.q_var,
            s: j.s_va,
        }
    }
}

impl<T: Scalar> MeterReading<T> {
    pub fn theta_deg(&self) -> T {
        self.theta.to_degrees()
    }
}

/// Load-referred true RMS of a window of ADC codes. The window mean is
/// removed first, so bias drift does not leak into the result.
pub fn rms_from_codes<T: Scalar>(
    codes: &[u16],
    cfg: &ChannelConfig<T>,
    adc_bits: u8,
) -> Result<T, MeterError> {
    if codes.is_empty() {
        return Err(MeterError::EmptyWindow);
    }
    let n = T::from_count(codes.len() as u64);
    // the offset cancels against the mean, so work in code units and scale once
    let mean = T::from_count(codes.iter().map(|&c| u64::from(c)).sum::<u64>()) / n;
    let lsb = cfg.vref / T::from_count(1u64 << adc_bits);
    let mean_sq = codes
        .iter()
        .map(|&c| {
            let x = T::from_count(u64::from(c)) - mean;
            x * x
        })
        .sum::<T>()
        / n;
    let mean_sq = mean_sq * (lsb * cfg.scale).powi(2);
    Ok(mean_sq.sqrt())
}

/// Converts the averaged edge delay to a phase angle in `[0, π]`.
///
/// Delays up to half a period are read as a lagging current; longer delays
/// mean the current edge actually precedes the next voltage edge.
pub fn phase_from_capture<T: Scalar>(cap: &CaptureRecord<T>) -> (T, bool) {
    let raw = T::TAU() * cap.delta_ticks / cap.period_ticks;
    if raw <= T::PI() {
        (raw, true)
    } else {
        (T::TAU() - raw, false)
    }
}

/// `S = V·I`, `P = S·|cos θ|`, `Q = S·sin θ`. Frequency is left at zero.
pub fn compute_powers<T: Scalar>(vrms: T, irms: T, theta: T, lagging: bool) -> MeterReading<T> {
    let s = vrms * irms;
    let (sin_t, cos_t) = theta.sin_cos();
    let pf = cos_t.abs();
    MeterReading {
        vrms,
        irms,
        freq: T::zero(),
        theta,
        pf,
        lagging,
        p: s * pf,
        q: s * sin_t,
        s,
    }
}

/// Number of leading samples spanning the largest whole number of measured
/// periods.
fn whole_period_window<T: Scalar>(run: &SampleRun<T>, period_ticks: T) -> usize {
    let n = run.v_codes.len().min(run.i_codes.len());
    let tps = T::from_count(run.config.ticks_per_sample());
    let span = T::from_count(n as u64) * tps;
    let periods = (span / period_ticks).floor();
    let samples = (periods * period_ticks / tps).round();
    samples.to_usize().unwrap_or(0).min(n)
}

/// The firmware loop body: capture, RMS over whole periods, phase, powers.
pub fn measure<T: Scalar>(run: &SampleRun<T>) -> Result<MeterReading<T>, MeterError> {
    let cap = capture_delay(run)?;
    let window = whole_period_window(run, cap.period_ticks);
    let cfg = &run.config;
    let vrms = rms_from_codes(&run.v_codes[..window], &cfg.channel_v, cfg.adc_bits)?;
    let irms = rms_from_codes(&run.i_codes[..window], &cfg.channel_i, cfg.adc_bits)?;
    let (theta, lagging) = phase_from_capture(&cap);
    let mut reading = compute_powers(vrms, irms, theta, lagging);
    reading.freq = T::from_count(u64::from(cfg.tick_hz)) / cap.period_ticks;
    Ok(reading)
}
