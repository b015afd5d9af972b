use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use loadmon::harness::{
    builtin_scenario, builtin_scenarios, load_scenarios, run_scenario_with_run, sweep, sweep_csv,
    Scenario, Tolerances, INDUCTIVE_08,
};
use loadmon::{render, replay, AcqConfigF64, Channel, MeterReadingF64, WaveformSpecF64};

/// Simulator of a microcontroller-based single-phase load monitor.
#[derive(Parser, Debug)]
#[command(name = "loadmon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one load and report the meter reading against the analytic truth.
    Simulate(SimulateArgs),
    /// Measure a recorded sample dump.
    Replay(ReplayArgs),
    /// Run a scenario once per value of one parameter and print an error table.
    Sweep(SweepArgs),
    /// Run the built-in scenarios, or those in a scenario file.
    Scenarios(ScenariosArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Fundamental RMS voltage (V).
    #[arg(long, default_value_t = 230.0)]
    vrms: f64,
    /// Fundamental RMS current (A).
    #[arg(long, default_value_t = 5.0)]
    irms: f64,
    /// Displacement power factor; the angle is acos(pf).
    #[arg(long, default_value_t = 1.0)]
    pf: f64,
    /// Current leads the voltage (capacitive load).
    #[arg(long, conflicts_with = "lag")]
    lead: bool,
    /// Current lags the voltage (inductive load); the default.
    #[arg(long)]
    lag: bool,
    /// Mains frequency (Hz).
    #[arg(long, default_value_t = 50.0)]
    freq: f64,
    /// Number of fundamental periods to simulate.
    #[arg(long, default_value_t = 10)]
    cycles: u32,
    /// Noise seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Channel the following --harmonic flags apply to.
    #[arg(long, value_parser = ["v", "i", "V", "I"])]
    channel: Vec<String>,
    /// Harmonic as ORDER:REL:PHASE (phase in radians); repeatable.
    #[arg(long)]
    harmonic: Vec<String>,
    /// Standard deviation of ADC-path noise, in volts or amperes per channel.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Waveform spec JSON; replaces all waveform flags.
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    /// Acquisition config JSON.
    #[arg(long, value_name = "FILE")]
    acq: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, value_name = "FILE.json")]
    out: Option<PathBuf>,
    /// Write the sample dump CSV here.
    #[arg(long, value_name = "FILE.csv")]
    dump: Option<PathBuf>,
    /// Print the LCD frame.
    #[arg(long)]
    lcd: bool,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[arg(long, value_name = "FILE.csv")]
    samples: PathBuf,
    #[arg(long, value_name = "FILE.json")]
    acq: PathBuf,
    /// Print the LCD frame after the reading.
    #[arg(long)]
    lcd: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// One of pf, vrms, irms, freq, adc_bits, sample_rate, noise_sigma.
    #[arg(long)]
    axis: String,
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_hyphen_values = true)]
    values: Vec<f64>,
    /// Built-in scenario to sweep around.
    #[arg(long, default_value = INDUCTIVE_08)]
    scenario: String,
    /// Write the table here instead of stdout.
    #[arg(long, value_name = "FILE.csv")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScenariosArgs {
    /// JSON array of scenarios to run instead of the built-ins.
    #[arg(long, value_name = "FILE")]
    file: Option<PathBuf>,
}

fn parse_harmonic(text: &str) -> Result<(u32, f64, f64)> {
    let parts: Vec<&str> = text.split(':').collect();
    let [order, rel, phase] = parts[..] else {
        bail!("harmonic `{text}` is not ORDER:REL:PHASE");
    };
    Ok((
        order
            .parse()
            .with_context(|| format!("harmonic order in `{text}`"))?,
        rel.parse()
            .with_context(|| format!("harmonic amplitude in `{text}`"))?,
        phase
            .parse()
            .with_context(|| format!("harmonic phase in `{text}`"))?,
    ))
}

/// Pairs every `--harmonic` with the closest `--channel` before it on the
/// command line; harmonics given before any `--channel` go on the voltage.
fn harmonics_by_channel(matches: &ArgMatches) -> Result<Vec<(Channel, String)>> {
    let positioned = |id: &str| -> Vec<(usize, String)> {
        match (matches.indices_of(id), matches.get_many::<String>(id)) {
            (Some(idx), Some(vals)) => idx.zip(vals.cloned()).collect(),
            _ => Vec::new(),
        }
    };
    let channels = positioned("channel");
    positioned("harmonic")
        .into_iter()
        .map(|(at, text)| {
            let channel = channels
                .iter()
                .rev()
                .find(|(c, _)| *c < at)
                .map_or(Ok(Channel::V), |(_, name)| name.parse())?;
            Ok((channel, text))
        })
        .collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn print_lcd(reading: &MeterReadingF64) -> Result<()> {
    let frame = render(reading).context("rendering LCD frame")?;
    print!("{}", frame.bordered());
    Ok(())
}

fn build_spec(args: &SimulateArgs, matches: &ArgMatches) -> Result<WaveformSpecF64> {
    if let Some(path) = &args.spec {
        return read_json(path);
    }
    if !(0.0..=1.0).contains(&args.pf) {
        bail!("power factor {} outside [0, 1]", args.pf);
    }
    let theta = args.pf.acos();
    let theta = if args.lead { -theta } else { theta };
    let mut b = WaveformSpecF64::builder(args.vrms, args.irms, theta)
        .freq(args.freq)
        .cycles(args.cycles)
        .seed(args.seed)
        .noise_sigma(args.noise);
    for (channel, text) in harmonics_by_channel(matches)? {
        let (order, rel, phase) = parse_harmonic(&text)?;
        b = b.harmonic(channel, order, rel, phase);
    }
    Ok(b.build()?)
}

fn simulate(args: SimulateArgs, matches: &ArgMatches) -> Result<bool> {
    let spec = build_spec(&args, matches)?;
    let acq: AcqConfigF64 = match &args.acq {
        Some(path) => read_json(path)?,
        None => AcqConfigF64::default(),
    };
    let rated = spec.analytic_truth().s_eq3;
    let mut sc = Scenario::new("simulate", spec).with_tolerances(Tolerances::standard(rated));
    sc.acq = acq;
    let (report, run) = run_scenario_with_run(&sc);
    if let (Some(path), Some(run)) = (&args.dump, &run) {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        run.write_csv(BufWriter::new(file))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let mut json = report.to_json();
    json.push('\n');
    write_text(args.out.as_deref(), &json)?;
    if args.lcd {
        if let Some(reading) = &report.reading {
            print_lcd(reading)?;
        }
    }
    if let Some(err) = &report.error {
        eprintln!("error: {}: {}", err.kind, err.message);
    }
    Ok(report.pass)
}

fn replay_cmd(args: ReplayArgs) -> Result<bool> {
    let acq: AcqConfigF64 = read_json(&args.acq)?;
    let file =
        File::open(&args.samples).with_context(|| format!("opening {}", args.samples.display()))?;
    let reading = replay(BufReader::new(file), &acq)?;
    println!("{}", serde_json::to_string_pretty(&reading)?);
    if args.lcd {
        print_lcd(&reading)?;
    }
    Ok(true)
}

fn sweep_cmd(args: SweepArgs) -> Result<bool> {
    let base = builtin_scenario(&args.scenario)?;
    let rows = sweep(&base, &args.axis, &args.values)?;
    write_text(args.out.as_deref(), &sweep_csv(&rows))?;
    Ok(rows.iter().all(|r| r.report.pass))
}

fn scenarios_cmd(args: ScenariosArgs) -> Result<bool> {
    let scenarios: Vec<Scenario<f64>> = match &args.file {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            load_scenarios(&text)?
        }
        None => builtin_scenarios(),
    };
    let reports: Vec<_> = scenarios
        .iter()
        .map(|sc| run_scenario_with_run(sc).0)
        .collect();
    for r in &reports {
        eprintln!("{} {}", if r.pass { "PASS" } else { "FAIL" }, r.scenario);
    }
    println!("{}", serde_json::to_string_pretty(&reports)?);
    Ok(reports.iter().all(|r| r.pass))
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let outcome = match cli.command {
        Command::Simulate(args) => {
            let sub = matches
                .subcommand_matches("simulate")
                .expect("simulate matches");
            simulate(args, sub)
        }
        Command::Replay(args) => replay_cmd(args),
        Command::Sweep(args) => sweep_cmd(args),
        Command::Scenarios(args) => scenarios_cmd(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
