//! Deterministic simulator of a microcontroller-based single-phase load
//! monitor.
//!
//! The pipeline mirrors the firmware: [`signalgen`] synthesizes the load
//! waveforms, [`frontend`] conditions them and timestamps comparator edges,
//! [`sampler`] emulates the ADC and capture timer, [`metering`] turns codes
//! and edges into V, I, PF, P, Q and S, and [`display`] lays the reading out
//! on a 20×4 character LCD. [`harness`] drives whole scenarios, CSV replay
//! and parameter sweeps.
//!
//! Every numeric type is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision for callers that do not care.

pub mod display;
pub mod frontend;
pub mod harness;
pub mod metering;
pub mod num;
pub mod sampler;
pub mod signalgen;

pub use display::{format_value, render, DisplayError, LcdFrame};
pub use frontend::{condition, zero_crossings, ChannelConfig, Direction, EdgeEvent, FrontendError};
pub use harness::{replay, run_scenario, sweep, HarnessError, ReplayError};
pub use metering::{
    compute_powers, measure, phase_from_capture, rms_from_codes, MeterError, MeterReading,
};
pub use num::Scalar;
pub use sampler::{
    acquire, capture_delay, quantize, AcqConfig, AcqError, CaptureRecord, SampleRun,
};
pub use signalgen::{AnalyticTruth, Channel, Harmonic, SpecError, WaveformSpec};

pub type WaveformSpecF64 = WaveformSpec<f64>;
pub type WaveformSpecF32 = WaveformSpec<f32>;
pub type AnalyticTruthF64 = AnalyticTruth<f64>;
pub type AnalyticTruthF32 = AnalyticTruth<f32>;
pub type ChannelConfigF64 = ChannelConfig<f64>;
pub type ChannelConfigF32 = ChannelConfig<f32>;
pub type AcqConfigF64 = AcqConfig<f64>;
pub type AcqConfigF32 = AcqConfig<f32>;
pub type SampleRunF64 = SampleRun<f64>;
pub type SampleRunF32 = SampleRun<f32>;
pub type CaptureRecordF64 = CaptureRecord<f64>;
pub type CaptureRecordF32 = CaptureRecord<f32>;
pub type MeterReadingF64 = MeterReading<f64>;
pub type MeterReadingF32 = MeterReading<f32>;
pub type ScenarioF64 = harness::Scenario<f64>;
pub type ReadingReportF64 = harness::ReadingReport<f64>;
