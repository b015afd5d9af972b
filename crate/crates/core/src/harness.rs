//! Scenario engine: end-to-end runs against the analytic oracle, CSV replay
//! of recorded acquisitions, and parameter sweeps.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Read;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{Direction, EdgeEvent, FrontendError};
use crate::metering::{measure, MeterError, MeterReading};
use crate::num::Scalar;
use crate::sampler::{acquire, AcqConfig, AcqError, SampleRun, CSV_HEADER};
use crate::signalgen::{AnalyticTruth, Channel, SpecError, WaveformSpec};

pub const RESISTIVE: &str = "resistive";
pub const INDUCTIVE_08: &str = "inductive-0.8";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown sweep axis `{0}` (expected one of pf, vrms, irms, freq, adc_bits, sample_rate, noise_sigma)")]
    UnknownAxis(String),
    #[error("scenario name `{0}` appears more than once")]
    DuplicateName(String),
    #[error("scenario `{name}`: tolerance for {field} must be positive")]
    BadTolerance { name: String, field: &'static str },
    #[error("no built-in scenario named `{0}`")]
    UnknownScenario(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("malformed CSV at line {line}: {reason}")]
    MalformedCsv { line: u64, reason: String },
    #[error("tick {tick} at line {line} is earlier than the previous row")]
    NonMonotoneTicks { line: u64, tick: u64 },
    #[error(transparent)]
    Config(#[from] AcqError),
    #[error(transparent)]
    Measure(#[from] MeterError),
}

/// Anything that can stop a scenario before a reading is produced.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Acquire(#[from] AcqError),
    #[error(transparent)]
    Measure(#[from] MeterError),
}

impl PipelineError {
    /// Short name of the failure, e.g. `NoCrossings`.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Spec(_) => "InvalidSpec",
            PipelineError::Acquire(AcqError::Frontend(FrontendError::NoCrossings(_))) => {
                "NoCrossings"
            }
            PipelineError::Acquire(AcqError::Frontend(
                FrontendError::AmplitudeBelowHysteresis(_),
            )) => "AmplitudeBelowHysteresis",
            PipelineError::Acquire(_) => "InvalidConfig",
            PipelineError::Measure(MeterError::InsufficientEdges(_)) => "InsufficientEdges",
            PipelineError::Measure(MeterError::EmptyWindow) => "EmptyWindow",
        }
    }
}

/// Acceptance band for one field: passes when within `abs` or within `rel`
/// of the true value, whichever is looser.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bound<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel: Option<T>,
}

impl<T: Scalar> Bound<T> {
    pub fn abs(abs: T) -> Self {
        Bound {
            abs: Some(abs),
            rel: None,
        }
    }

    pub fn rel(rel: T) -> Self {
        Bound {
            abs: None,
            rel: Some(rel),
        }
    }

    pub fn admits(&self, error: T, truth: T) -> bool {
        let e = error.abs();
        self.abs.is_some_and(|a| e <= a) || self.rel.is_some_and(|r| e <= r * truth.abs())
    }

    fn is_positive(&self) -> bool {
        let pos = |x: Option<T>| x.is_none_or(|v| v > T::zero());
        (self.abs.is_some() || self.rel.is_some()) && pos(self.abs) && pos(self.rel)
    }
}

/// Per-field acceptance bands; fields left `None` are not judged.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(
    default,
    bound(
        serialize = "T: Serialize",
        deserialize = "T: Scalar + Deserialize<'de>"
    )
)]
pub struct Tolerances<T> {
    pub vrms: Option<Bound<T>>,
    pub irms: Option<Bound<T>>,
    pub freq: Option<Bound<T>>,
    pub theta_deg: Option<Bound<T>>,
    pub pf: Option<Bound<T>>,
    pub p: Option<Bound<T>>,
    pub q: Option<Bound<T>>,
    pub s: Option<Bound<T>>,
}

impl<T: Scalar> Tolerances<T> {
    /// Bands used by the built-in scenarios.
    pub fn standard(rated_s: T) -> Self {
        Tolerances {
            vrms: Some(Bound::rel(T::lit(0.005))),
            irms: Some(Bound::rel(T::lit(0.005))),
            freq: Some(Bound::abs(T::lit(0.01))),
            theta_deg: Some(Bound::abs(T::lit(0.1))),
            pf: Some(Bound::abs(T::lit(0.005))),
            p: Some(Bound::rel(T::lit(0.01))),
            q: Some(Bound {
                abs: Some(T::lit(0.005) * rated_s),
                rel: Some(T::lit(0.01)),
            }),
            s: Some(Bound::rel(T::lit(0.01))),
        }
    }

    fn fields(&self) -> [(&'static str, &Option<Bound<T>>); 8] {
        [
            ("vrms", &self.vrms),
            ("irms", &self.irms),
            ("freq", &self.freq),
            ("theta_deg", &self.theta_deg),
            ("pf", &self.pf),
            ("p", &self.p),
            ("q", &self.q),
            ("s", &self.s),
        ]
    }
}

/// A named load case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct Scenario<T> {
    pub name: String,
    pub spec: WaveformSpec<T>,
    #[serde(default)]
    pub acq: AcqConfig<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Tolerances<T>>,
}

impl<T: Scalar> Scenario<T> {
    pub fn new(name: impl Into<String>, spec: WaveformSpec<T>) -> Self {
        Scenario {
            name: name.into(),
            spec,
            acq: AcqConfig::default(),
            expected: None,
        }
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances<T>) -> Self {
        self.expected = Some(tolerances);
        self
    }

    fn check_tolerances(&self) -> Result<(), HarnessError> {
        if let Some(tol) = &self.expected {
            for (field, bound) in tol.fields() {
                if bound.as_ref().is_some_and(|b| !b.is_positive()) {
                    return Err(HarnessError::BadTolerance {
                        name: self.name.clone(),
                        field,
                    });
                }
            }
        }
        Ok(())
    }
}

/// The two bench cases: a resistive load and a 0.8 power-factor inductive
/// load, both at 230 V / 5 A.
pub fn builtin_scenarios<T: Scalar>() -> Vec<Scenario<T>> {
    let build = |name: &str, theta: T| {
        let spec =
            WaveformSpec::sine(T::lit(230.0), T::lit(5.0), theta).expect("built-in spec is valid");
        let s = spec.analytic_truth().s_eq3;
        Scenario::new(name, spec).with_tolerances(Tolerances::standard(s))
    };
    vec![
        build(RESISTIVE, T::zero()),
        build(INDUCTIVE_08, T::lit(0.8).acos()),
    ]
}

pub fn builtin_scenario<T: Scalar>(name: &str) -> Result<Scenario<T>, HarnessError> {
    builtin_scenarios()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| HarnessError::UnknownScenario(name.to_string()))
}

/// Parses a JSON array of scenarios, enforcing unique names and positive
/// tolerances.
pub fn load_scenarios<T>(json: &str) -> Result<Vec<Scenario<T>>, HarnessError>
where
    T: Scalar + for<'de> Deserialize<'de>,
{
    let scenarios: Vec<Scenario<T>> = serde_json::from_str(json)?;
    let mut names = HashSet::new();
    for sc in &scenarios {
        if !names.insert(sc.name.as_str()) {
            return Err(HarnessError::DuplicateName(sc.name.clone()));
        }
        sc.check_tolerances()?;
    }
    Ok(scenarios)
}

/// Signed reading-minus-truth differences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldErrors<T> {
    pub vrms: T,
    pub irms: T,
    pub freq: T,
    pub theta_deg: T,
    pub pf: T,
    pub p: T,
    pub q: T,
    pub s: T,
}

/// Per-field verdicts; `None` where the scenario sets no bound.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    pub vrms: Option<bool>,
    pub irms: Option<bool>,
    pub freq: Option<bool>,
    pub theta_deg: Option<bool>,
    pub pf: Option<bool>,
    pub p: Option<bool>,
    pub q: Option<bool>,
    pub s: Option<bool>,
    pub lagging: Option<bool>,
}

impl Verdicts {
    fn all_pass(&self) -> bool {
        [
            self.vrms,
            self.irms,
            self.freq,
            self.theta_deg,
            self.pf,
            self.p,
            self.q,
            self.s,
            self.lagging,
        ]
        .iter()
        .all(|v| v.unwrap_or(true))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportedError {
    pub kind: String,
    pub message: String,
}

/// Outcome of one scenario, with everything needed to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct ReadingReport<T> {
    pub scenario: String,
    pub pass: bool,
    pub reading: Option<MeterReading<T>>,
    pub truth: AnalyticTruth<T>,
    pub errors: Option<FieldErrors<T>>,
    pub verdicts: Verdicts,
    pub error: Option<ReportedError>,
    pub spec: WaveformSpec<T>,
    pub acq: AcqConfig<T>,
}

impl<T: Scalar + Serialize> ReadingReport<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Values the meter would show if it were perfect, in reading form.
fn truth_targets<T: Scalar>(spec: &WaveformSpec<T>, truth: &AnalyticTruth<T>) -> [T; 8] {
    [
        truth.vrms_true,
        truth.irms_true,
        spec.freq(),
        truth.theta_fund.abs().to_degrees(),
        truth.pf_displacement.abs(),
        truth.p_eq1.abs(),
        truth.q_eq2.abs(),
        truth.s_eq3,
    ]
}

/// Runs acquisition and measurement for a spec.
pub fn run_pipeline<T: Scalar>(
    spec: &WaveformSpec<T>,
    acq: &AcqConfig<T>,
) -> Result<(SampleRun<T>, MeterReading<T>), PipelineError> {
    let run = acquire(spec, acq)?;
    let reading = measure(&run)?;
    Ok((run, reading))
}

fn report_for<T: Scalar>(
    sc: &Scenario<T>,
    outcome: Result<MeterReading<T>, PipelineError>,
) -> ReadingReport<T> {
    let truth = sc.spec.analytic_truth();
    let (reading, error) = match outcome {
        Ok(r) => (Some(r), None),
        Err(e) => (
            None,
            Some(ReportedError {
                kind: e.kind().to_string(),
                message: e.to_string(),
            }),
        ),
    };
    let mut verdicts = Verdicts::default();
    let errors = reading.as_ref().map(|r| {
        let targets = truth_targets(&sc.spec, &truth);
        let measured = [r.vrms, r.irms, r.freq, r.theta_deg(), r.pf, r.p, r.q, r.s];
        let d: Vec<T> = measured
            .iter()
            .zip(&targets)
            .map(|(m, t)| *m - *t)
            .collect();
        if let Some(tol) = &sc.expected {
            let slots = [
                &mut verdicts.vrms,
                &mut verdicts.irms,
                &mut verdicts.freq,
                &mut verdicts.theta_deg,
                &mut verdicts.pf,
                &mut verdicts.p,
                &mut verdicts.q,
                &mut verdicts.s,
            ];
            for (k, ((_, bound), slot)) in tol.fields().into_iter().zip(slots).enumerate() {
                *slot = bound.as_ref().map(|b| b.admits(d[k], targets[k]));
            }
            // the sign of θ is only meaningful when current and voltage differ in phase
            if truth.theta_fund != T::zero() {
                verdicts.lagging = Some(r.lagging == (truth.theta_fund > T::zero()));
            }
        }
        FieldErrors {
            vrms: d[0],
            irms: d[1],
            freq: d[2],
            theta_deg: d[3],
            pf: d[4],
            p: d[5],
            q: d[6],
            s: d[7],
        }
    });
    let pass = error.is_none() && verdicts.all_pass();
    ReadingReport {
        scenario: sc.name.clone(),
        pass,
        reading,
        truth,
        errors,
        verdicts,
        error,
        spec: sc.spec.clone(),
        acq: sc.acq.clone(),
    }
}

/// acquire → measure → compare with the oracle. Pipeline failures become a
/// failed report naming the error.
pub fn run_scenario<T: Scalar>(sc: &Scenario<T>) -> ReadingReport<T> {
    report_for(sc, run_pipeline(&sc.spec, &sc.acq).map(|(_, r)| r))
}

/// Like [`run_scenario`] but also hands back the acquisition for dumping.
pub fn run_scenario_with_run<T: Scalar>(
    sc: &Scenario<T>,
) -> (ReadingReport<T>, Option<SampleRun<T>>) {
    match run_pipeline(&sc.spec, &sc.acq) {
        Ok((run, reading)) => (report_for(sc, Ok(reading)), Some(run)),
        Err(e) => (report_for(sc, Err(e)), None),
    }
}

fn malformed(line: u64, reason: impl Into<String>) -> ReplayError {
    ReplayError::MalformedCsv {
        line,
        reason: reason.into(),
    }
}

/// Rebuilds a [`SampleRun`] from a sample dump. Comparator edges are taken
/// from level changes of the `v_zcd`/`i_zcd` columns; the last row at each
/// sample-aligned tick supplies the ADC codes.
pub fn read_samples<T: Scalar, R: Read>(
    input: R,
    acq: &AcqConfig<T>,
) -> Result<SampleRun<T>, ReplayError> {
    acq.validate()?;
    let tps = acq.ticks_per_sample();
    let max_code = acq.full_scale_code();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);

    let headers = rdr
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(malformed(
            1,
            format!("expected header `{}`", CSV_HEADER.join(",")),
        ));
    }

    let mut v_codes: Vec<u16> = Vec::new();
    let mut i_codes: Vec<u16> = Vec::new();
    let mut v_edges = Vec::new();
    let mut i_edges = Vec::new();
    let mut prev: Option<(u64, u8, u8)> = None;
    // (tick, v, i) of the most recent sample-aligned row
    let mut pending: Option<(u64, u16, u16)> = None;

    let flush = |pending: &mut Option<(u64, u16, u16)>,
                 v_codes: &mut Vec<u16>,
                 i_codes: &mut Vec<u16>,
                 line: u64|
     -> Result<(), ReplayError> {
        if let Some((tick, v, i)) = pending.take() {
            let expected = v_codes.len() as u64 * tps;
            if tick != expected {
                return Err(malformed(
                    line,
                    format!("missing ADC sample at tick {expected}"),
                ));
            }
            v_codes.push(v);
            i_codes.push(i);
        }
        Ok(())
    };

    let mut line = 1;
    for record in rdr.records() {
        line += 1;
        let record = record.map_err(|e| malformed(line, e.to_string()))?;
        if record.len() != CSV_HEADER.len() {
            return Err(malformed(
                line,
                format!("expected 5 fields, found {}", record.len()),
            ));
        }
        let field = |k: usize| record[k].trim();
        let tick: u64 = field(0)
            .parse()
            .map_err(|_| malformed(line, format!("bad tick `{}`", field(0))))?;
        let code = |k: usize| -> Result<u16, ReplayError> {
            let c: u16 = field(k)
                .parse()
                .map_err(|_| malformed(line, format!("bad code `{}`", field(k))))?;
            if c > max_code {
                return Err(malformed(line, format!("code {c} exceeds {max_code}")));
            }
            Ok(c)
        };
        let level = |k: usize| -> Result<u8, ReplayError> {
            match field(k) {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(malformed(line, format!("bad comparator level `{other}`"))),
            }
        };
        let (v, i, vz, iz) = (code(1)?, code(2)?, level(3)?, level(4)?);

        if let Some((prev_tick, pv, pi)) = prev {
            if tick < prev_tick {
                return Err(ReplayError::NonMonotoneTicks { line, tick });
            }
            for (was, now, channel, edges) in [
                (pv, vz, Channel::V, &mut v_edges),
                (pi, iz, Channel::I, &mut i_edges),
            ] {
                if was != now {
                    edges.push(EdgeEvent {
                        channel,
                        tick,
                        direction: if now == 1 {
                            Direction::Rising
                        } else {
                            Direction::Falling
                        },
                    });
                }
            }
        } else if tick != 0 {
            return Err(malformed(line, "first row must be at tick 0"));
        }
        prev = Some((tick, vz, iz));

        if tick.is_multiple_of(tps) {
            if pending.is_some_and(|(t, _, _)| t != tick) {
                flush(&mut pending, &mut v_codes, &mut i_codes, line)?;
            }
            pending = Some((tick, v, i));
        }
    }
    flush(&mut pending, &mut v_codes, &mut i_codes, line)?;
    if prev.is_none() {
        return Err(malformed(line, "no data rows"));
    }

    Ok(SampleRun {
        config: acq.clone(),
        spec: None,
        v_codes,
        i_codes,
        v_edges,
        i_edges,
        saturation_count: 0,
    })
}

/// Measures a recorded sample dump.
pub fn replay<T: Scalar, R: Read>(
    input: R,
    acq: &AcqConfig<T>,
) -> Result<MeterReading<T>, ReplayError> {
    let run = read_samples(input, acq)?;
    Ok(measure(&run)?)
}

/// Parameter a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Pf,
    Vrms,
    Irms,
    Freq,
    AdcBits,
    SampleRate,
    NoiseSigma,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Pf => "pf",
            SweepAxis::Vrms => "vrms",
            SweepAxis::Irms => "irms",
            SweepAxis::Freq => "freq",
            SweepAxis::AdcBits => "adc_bits",
            SweepAxis::SampleRate => "sample_rate",
            SweepAxis::NoiseSigma => "noise_sigma",
        }
    }

    /// Copy of `base` with this parameter set to `value`. The lead/lag sense
    /// of `base` is kept when sweeping the power factor.
    pub fn apply<T: Scalar>(
        self,
        base: &Scenario<T>,
        value: T,
    ) -> Result<Scenario<T>, PipelineError> {
        let mut sc = base.clone();
        let b = base.spec.to_builder();
        let as_int = |x: T| x.round().to_u64().unwrap_or(0);
        match self {
            SweepAxis::Pf => {
                let theta = value.acos();
                let theta = if base.spec.theta() < T::zero() {
                    -theta
                } else {
                    theta
                };
                sc.spec = b.theta(theta).build()?;
            }
            SweepAxis::Vrms => sc.spec = b.vrms(value).build()?,
            SweepAxis::Irms => sc.spec = b.irms(value).build()?,
            SweepAxis::Freq => sc.spec = b.freq(value).build()?,
            SweepAxis::NoiseSigma => sc.spec = b.noise_sigma(value).build()?,
            SweepAxis::AdcBits => {
                sc.acq.adc_bits = u8::try_from(as_int(value)).unwrap_or(u8::MAX);
                sc.acq.validate()?;
            }
            SweepAxis::SampleRate => {
                sc.acq.sample_rate = u32::try_from(as_int(value)).unwrap_or(0);
                sc.acq.validate()?;
            }
        }
        sc.name = format!("{}[{}={}]", base.name, self.name(), value);
        Ok(sc)
    }
}

impl FromStr for SweepAxis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "pf" => SweepAxis::Pf,
            "vrms" => SweepAxis::Vrms,
            "irms" => SweepAxis::Irms,
            "freq" => SweepAxis::Freq,
            "adc_bits" => SweepAxis::AdcBits,
            "sample_rate" => SweepAxis::SampleRate,
            "noise_sigma" => SweepAxis::NoiseSigma,
            other => return Err(HarnessError::UnknownAxis(other.to_string())),
        })
    }
}

/// One sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct SweepRow<T> {
    pub value: T,
    pub report: ReadingReport<T>,
}

/// Runs `base` once per value of `axis`, in parallel; rows keep input order.
pub fn sweep<T: Scalar>(
    base: &Scenario<T>,
    axis: &str,
    values: &[T],
) -> Result<Vec<SweepRow<T>>, HarnessError> {
    let axis: SweepAxis = axis.parse()?;
    Ok(sweep_axis(base, axis, values))
}

pub fn sweep_axis<T: Scalar>(
    base: &Scenario<T>,
    axis: SweepAxis,
    values: &[T],
) -> Vec<SweepRow<T>> {
    values
        .par_iter()
        .map(|&value| {
            let report = match axis.apply(base, value) {
                Ok(sc) => run_scenario(&sc),
                Err(e) => {
                    let mut named = base.clone();
                    named.name = format!("{}[{}={}]", base.name, axis.name(), value);
                    report_for(&named, Err(e))
                }
            };
            SweepRow { value, report }
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str =
    "value,vrms_err,irms_err,freq_err,theta_deg_err,pf_err,p_err,q_err,s_err,pass,error";

/// Plot-ready table of absolute per-field errors.
pub fn sweep_csv<T: Scalar>(rows: &[SweepRow<T>]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for row in rows {
        let _ = write!(out, "{}", row.value);
        match &row.report.errors {
            Some(e) => {
                for x in [e.vrms, e.irms, e.freq, e.theta_deg, e.pf, e.p, e.q, e.s] {
                    let _ = write!(out, ",{}", x.abs());
                }
            }
            None => out.push_str(",,,,,,,,"),
        }
        let kind = row.report.error.as_ref().map_or("", |e| e.kind.as_str());
        let _ = writeln!(out, ",{},{}", row.report.pass, kind);
    }
    out
}
