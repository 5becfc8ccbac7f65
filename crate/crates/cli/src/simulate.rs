//! `qrng simulate`: one device run written to an output directory.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qrng_core::analysis::{BitSink, BitTally, StreamStats};
use qrng_core::device::{simulate_into, Counters, DeviceConfig, RecordOptions, RunLength};
use qrng_core::formats;

use crate::config::{self, ConfigArgs};
use crate::error::{CliError, CliResult};
use crate::report::{sci, Format, Report};

pub const STREAM_FILE: &str = "stream.bits";
pub const EVENTS_FILE: &str = "events.csv";
pub const FEEDBACK_FILE: &str = "feedback.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

pub fn build_id() -> String {
    format!(
        "qrng-cli {} ({})",
        env!("CARGO_PKG_VERSION"),
        if cfg!(debug_assertions) { "debug" } else { "release" }
    )
}

#[derive(Debug, Clone, Args)]
#[command(group(
    ArgGroup::new("length")
        .args(["bits", "cycles", "seconds"])
        .conflicts_with("replay")
))]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Base seed of the run.
    #[arg(long, required_unless_present = "replay")]
    pub seed: Option<u64>,
    /// Stop after this many output bits.
    #[arg(long)]
    pub bits: Option<u64>,
    /// Stop after this many cycles.
    #[arg(long)]
    pub cycles: Option<u64>,
    /// Stop after this much simulated time.
    #[arg(long)]
    pub seconds: Option<f64>,
    /// Rerun the run described by a manifest (config, seed and length).
    #[arg(long, value_name = "MANIFEST", conflicts_with_all = ["seed", "config", "set"])]
    pub replay: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "QRNG_OUT_DIR", default_value = ".")]
    pub out: PathBuf,
    /// Skip the click log (it grows with the run).
    #[arg(long)]
    pub no_events: bool,
    /// Skip the feedback trace.
    #[arg(long)]
    pub no_trace: bool,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bits: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycles: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
    pub bit_count: u64,
    pub build: String,
    pub config_sha256: String,
}

impl RunInfo {
    pub fn length(&self) -> CliResult<RunLength> {
        match (self.bits, self.cycles, self.seconds) {
            (Some(n), None, None) => Ok(RunLength::Bits(n)),
            (None, Some(n), None) => Ok(RunLength::Cycles(n)),
            (None, None, Some(s)) => Ok(RunLength::Seconds(s)),
            _ => Err(CliError::Io(
                "manifest [run] needs exactly one of bits, cycles, seconds".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilesInfo {
    pub stream: String,
    pub stream_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub events: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
}

/// Sidecar describing a run well enough to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run: RunInfo,
    pub files: FilesInfo,
    pub counters: Counters,
    pub config: DeviceConfig,
}

impl Manifest {
    pub fn read(path: &Path) -> CliResult<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::io(path, e))
    }
}

/// Packs bits LSB-first straight into a writer while tallying and hashing.
struct StreamSink<W: Write> {
    out: W,
    byte: u8,
    fill: u32,
    tally: BitTally,
    hash: Sha256,
    error: Option<io::Error>,
}

impl<W: Write> StreamSink<W> {
    fn new(out: W) -> Self {
        StreamSink {
            out,
            byte: 0,
            fill: 0,
            tally: BitTally::default(),
            hash: Sha256::new(),
            error: None,
        }
    }

    fn emit(&mut self) {
        if self.error.is_none() {
            if let Err(e) = self.out.write_all(&[self.byte]) {
                self.error = Some(e);
            }
        }
        self.hash.update([self.byte]);
        self.byte = 0;
        self.fill = 0;
    }

    fn finish(mut self) -> io::Result<(BitTally, String)> {
        if self.fill > 0 {
            self.emit();
        }
        if let Some(e) = self.error {
            return Err(e);
        }
        self.out.flush()?;
        Ok((self.tally, config::hex(&self.hash.finalize())))
    }
}

impl<W: Write> BitSink for StreamSink<W> {
    #[inline]
    fn push_bit(&mut self, bit: bool) {
        self.tally.push_bit(bit);
        self.byte |= u8::from(bit) << self.fill;
        self.fill += 1;
        if self.fill == 8 {
            self.emit();
        }
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    let (cfg, seed, length) = match &args.replay {
        Some(path) => {
            let m = Manifest::read(path)?;
            m.config.validate()?;
            (m.config, m.run.seed, m.run.length()?)
        }
        None => {
            let length = match (args.bits, args.cycles, args.seconds) {
                (Some(n), _, _) => RunLength::Bits(n),
                (_, Some(n), _) => RunLength::Cycles(n),
                (_, _, Some(s)) => RunLength::Seconds(s),
                _ => return Err(CliError::usage("one of --bits, --cycles, --seconds is required")),
            };
            (args.config.load()?, args.seed.expect("clap requires --seed"), length)
        }
    };
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;

    let stream_path = args.out.join(STREAM_FILE);
    let mut sink = StreamSink::new(create(&stream_path)?);
    let record = RecordOptions {
        events: !args.no_events,
        trace: !args.no_trace,
    };
    let report = simulate_into(&cfg, seed, length, record, &mut sink)?;
    let (tally, stream_sha) = sink.finish().map_err(|e| CliError::io(&stream_path, e))?;

    let mut files = FilesInfo {
        stream: STREAM_FILE.into(),
        stream_sha256: stream_sha,
        events: None,
        feedback: None,
    };
    if record.events {
        let p = args.out.join(EVENTS_FILE);
        formats::write_events(create(&p)?, &report.events).map_err(|e| CliError::io(&p, e))?;
        files.events = Some(EVENTS_FILE.into());
    }
    if record.trace {
        let p = args.out.join(FEEDBACK_FILE);
        formats::write_feedback(create(&p)?, &report.feedback_trace).map_err(|e| CliError::io(&p, e))?;
        files.feedback = Some(FEEDBACK_FILE.into());
    }

    let (bits, cycles, seconds) = match length {
        RunLength::Bits(n) => (Some(n), None, None),
        RunLength::Cycles(n) => (None, Some(n), None),
        RunLength::Seconds(s) => (None, None, Some(s)),
    };
    let manifest = Manifest {
        run: RunInfo {
            seed,
            bits,
            cycles,
            seconds,
            bit_count: tally.bits,
            build: build_id(),
            config_sha256: config::config_hash(&cfg),
        },
        files,
        counters: report.counters,
        config: cfg,
    };
    let mpath = args.out.join(MANIFEST_FILE);
    let text = toml::to_string(&manifest).expect("manifest serializes");
    fs::write(&mpath, text).map_err(|e| CliError::io(&mpath, e))?;

    let c = &report.counters;
    let mut r = Report::new(format!("simulated run -> {}", args.out.display()));
    r.add("seed", seed)
        .add("bit_count", tally.bits)
        .add("cycles", c.cycles)
        .add("simulated_s", format!("{:.6}", c.elapsed_s()))
        .add("bit_rate_hz", format!("{:.1}", c.bit_rate_hz()))
        .add("dark_originated_bits", c.dark_originated_bits)
        .add("afterpulse_originated_bits", c.afterpulse_originated_bits)
        .add("final_v_bias", format!("{:.4}", report.final_feedback.v_bias));
    if tally.bits >= 2 {
        let s = StreamStats::from_tally(&tally)?;
        r.add("rel_dev_balance", sci(s.rel_dev_balance, 2))
            .add("rel_dev_flip", sci(s.rel_dev_flip, 2));
    }
    r.add("stream_sha256", &manifest.files.stream_sha256);
    print!("{}", r.render(args.format));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use qrng_core::analysis::BitStream;

    #[test]
    fn sink_packs_like_bitstream() {
        let bits = [true, false, true, true, false, false, false, true, true, false, true];
        let mut buf = Vec::new();
        let mut sink = StreamSink::new(&mut buf);
        for b in bits {
            sink.push_bit(b);
        }
        let (tally, hash) = sink.finish().unwrap();
        let expect = BitStream::from_bits(bits);
        assert_eq!(buf, expect.as_bytes());
        assert_eq!(tally.bits, 11);
        assert_eq!(hash, config::hex(&Sha256::digest(expect.as_bytes())));
    }
}
