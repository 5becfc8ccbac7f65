//! `qrng sweep`: one metric over a grid of one parameter, as CSV.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, ValueEnum};

use qrng_core::analysis::{coincidence_fraction, periodogram_trace, BitTally};
use qrng_core::device::{simulate_into, single_click_rate, DeviceConfig, RecordOptions, RunLength};
use qrng_core::stochastic::dark_rate;

use crate::config::ConfigArgs;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Parameter {
    /// Detector temperature in degrees C.
    Temperature,
    /// Bias voltage, held fixed (feedback off).
    VBias,
    /// |p1 - p2| around --pavg (fixed probabilities, feedback off).
    Mismatch,
    /// Backflash probability per prompt click.
    BackflashProb,
    /// Integrator gain of the feedback loop.
    Gain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    /// Model dark-count rate of one detector (Hz).
    DarkRate,
    /// Model output bit rate (Hz).
    SingleRate,
    /// Simulated (flips - holds) per cycle.
    MeasuredBias,
    /// Simulated coincidences per click within +-20 ns.
    CoincidenceFraction,
    /// Dominant frequency of the simulated bias trace (Hz).
    OscillationPeak,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(value_enum)]
    pub parameter: Parameter,
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// Explicit grid, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["from", "to", "steps"])]
    pub values: Vec<f64>,
    #[arg(long, requires_all = ["to", "steps"])]
    pub from: Option<f64>,
    #[arg(long)]
    pub to: Option<f64>,
    /// Number of grid points from --from to --to inclusive.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Mean click probability for the mismatch sweep.
    #[arg(long, default_value_t = 0.28)]
    pub pavg: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Cycles per point for the simulated metrics.
    #[arg(long, default_value_t = 10_000_000)]
    pub cycles: u64,
    /// Simulated seconds per point for the oscillation metric.
    #[arg(long, default_value_t = 2.0)]
    pub seconds: f64,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

impl Parameter {
    pub fn column(self) -> &'static str {
        match self {
            Parameter::Temperature => "temperature_c",
            Parameter::VBias => "v_bias",
            Parameter::Mismatch => "mismatch",
            Parameter::BackflashProb => "backflash_prob",
            Parameter::Gain => "gain",
        }
    }
}

impl Metric {
    pub fn column(self) -> &'static str {
        match self {
            Metric::DarkRate => "dark_rate_hz",
            Metric::SingleRate => "single_rate_hz",
            Metric::MeasuredBias => "measured_bias",
            Metric::CoincidenceFraction => "coincidence_fraction",
            Metric::OscillationPeak => "oscillation_peak_hz",
        }
    }
}

pub fn grid(args: &SweepArgs) -> CliResult<Vec<f64>> {
    if !args.values.is_empty() {
        return Ok(args.values.clone());
    }
    match (args.from, args.to, args.steps) {
        (Some(a), Some(b), Some(n)) if n >= 2 => Ok((0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect()),
        (Some(a), Some(_), Some(1)) => Ok(vec![a]),
        _ => Err(CliError::usage("give --values or --from/--to/--steps (steps >= 1)")),
    }
}

/// The configuration at one grid point.
pub fn configure(base: &DeviceConfig, p: Parameter, x: f64, pavg: f64) -> CliResult<DeviceConfig> {
    let mut c = base.clone();
    match p {
        Parameter::Temperature => c.temperature_c = x,
        Parameter::VBias => {
            c.feedback.enabled = false;
            c.feedback.v_initial_v = x;
        }
        Parameter::Mismatch => {
            c = DeviceConfig {
                fixed_click_probs: Some([pavg + x / 2.0, pavg - x / 2.0]),
                ..c
            };
            c.feedback.enabled = false;
        }
        Parameter::BackflashProb => c.detectors.backflash_prob = x,
        Parameter::Gain => c.feedback.integrator_gain = x,
    }
    c.validate()?;
    Ok(c)
}

pub fn evaluate(c: &DeviceConfig, m: Metric, seed: u64, cycles: u64, seconds: f64) -> CliResult<f64> {
    Ok(match m {
        Metric::DarkRate => dark_rate(c.temperature_c, &c.detectors),
        Metric::SingleRate => match c.fixed_click_probs {
            Some([p1, p2]) => single_click_rate(p1, p2, &c.timing, c.detectors.late_click_prob),
            None => c.single_rate_at(c.feedback.v_initial_v),
        },
        Metric::MeasuredBias => {
            let mut t = BitTally::default();
            let r = simulate_into(c, seed, RunLength::Cycles(cycles), RecordOptions::NONE, &mut t)?;
            let holds = t.bits.saturating_sub(1) - t.flips;
            (t.flips as f64 - holds as f64) / r.counters.cycles as f64
        }
        Metric::CoincidenceFraction => {
            let opts = RecordOptions { events: true, trace: false };
            let r = simulate_into(c, seed, RunLength::Cycles(cycles), opts, &mut BitTally::default())?;
            coincidence_fraction(&r.events, 20.0)?
        }
        Metric::OscillationPeak => {
            let opts = RecordOptions { events: false, trace: true };
            let settle = 0.5;
            let r = simulate_into(c, seed, RunLength::Seconds(seconds + settle), opts, &mut BitTally::default())?;
            let (t, v): (Vec<f64>, Vec<f64>) = r
                .feedback_trace
                .iter()
                .filter(|s| s.t_s > settle)
                .map(|s| (s.t_s, s.v_bias))
                .unzip();
            let sp = periodogram_trace(&t, &v)?;
            sp.dominant_peak(sp.resolution_hz).map_or(0.0, |p| p.0)
        }
    })
}

pub fn run(args: &SweepArgs) -> CliResult<()> {
    let base = args.config.load()?;
    let xs = grid(args)?;
    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(io::BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?)),
        None => Box::new(io::stdout().lock()),
    };
    let io_err = |e: io::Error| CliError::Io(e.to_string());
    writeln!(out, "{},{}", args.parameter.column(), args.metric.column()).map_err(io_err)?;
    for x in xs {
        let c = configure(&base, args.parameter, x, args.pavg)?;
        let y = evaluate(&c, args.metric, args.seed, args.cycles, args.seconds)?;
        writeln!(out, "{x},{y}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
