//! On-disk formats: packed bit files and the fixed CSV tables.
//!
//! Bit files are raw bytes, least significant bit first, with the bit count
//! kept out of band. Every CSV table starts with its exact header row.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::analysis::bits::BitStream;
use crate::analysis::events::{ClickEvent, EventLog, Histogram};
use crate::analysis::spectrum::Spectrum;
use crate::device::FeedbackSample;
use crate::error::{Error, Result};
use crate::stochastic::{Channel, DetectionKind};

pub const EVENTS_HEADER: [&str; 3] = ["t_ns", "channel", "kind"];
pub const FEEDBACK_HEADER: [&str; 3] = ["t_s", "v_bias", "v_control"];
pub const HISTOGRAM_HEADER: [&str; 2] = ["bin_lo_ns", "count"];
pub const SPECTRUM_HEADER: [&str; 2] = ["freq_hz", "power"];
pub const COUNTS_HEADER: [&str; 5] = ["label", "n0", "n1", "n_hold", "n_flip"];

// ---------------------------------------------------------------------------
// Bits
// ---------------------------------------------------------------------------

pub fn write_bits<W: Write>(mut w: W, bits: &BitStream) -> Result<()> {
    w.write_all(bits.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Reads exactly `bit_count` bits; the input must hold exactly the bytes
/// needed and no more.
pub fn read_bits<R: Read>(mut r: R, bit_count: u64) -> Result<BitStream> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let needed = bit_count.div_ceil(8);
    let have = bytes.len() as u64;
    if have < needed {
        return Err(Error::parse(
            format!("byte {have}"),
            format!("stream ends early: {bit_count} bits need {needed} bytes"),
        ));
    }
    if have > needed {
        return Err(Error::parse(
            format!("byte {needed}"),
            format!("{} trailing bytes beyond {bit_count} bits", have - needed),
        ));
    }
    BitStream::from_bytes(bytes, bit_count)
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

fn writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(header).map_err(csv_error)?;
    Ok(out)
}

fn csv_error(e: csv::Error) -> Error {
    let location = e
        .position()
        .map(|p| format!("line {}", p.line()))
        .unwrap_or_else(|| "unknown position".into());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::parse(location, format!("{kind:?}")),
    }
}

/// Reads all rows after checking the header, handing each to `row` with
/// its line number.
fn read_table<R: Read>(
    r: R,
    header: &[&str],
    mut row: impl FnMut(u64, &csv::StringRecord) -> Result<()>,
) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut records = rdr.records();
    match records.next() {
        None => return Err(Error::parse("line 1", format!("missing header `{}`", header.join(",")))),
        Some(rec) => {
            let rec = rec.map_err(csv_error)?;
            if rec.iter().ne(header.iter().copied()) {
                return Err(Error::parse(
                    "line 1",
                    format!("expected header `{}`", header.join(",")),
                ));
            }
        }
    }
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::parse(
                format!("line {line}"),
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        row(line, &rec)?;
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, line: u64) -> Result<T> {
    rec[i]
        .parse()
        .map_err(|_| Error::parse(format!("line {line}"), format!("bad {name} `{}`", &rec[i])))
}

fn channel_name(c: Channel) -> &'static str {
    match c {
        Channel::One => "1",
        Channel::Two => "2",
    }
}

fn kind_name(k: DetectionKind) -> &'static str {
    match k {
        DetectionKind::Late => "late",
        _ => "prompt",
    }
}

pub fn write_events<W: Write>(w: W, log: &EventLog) -> Result<()> {
    let mut out = writer(w, &EVENTS_HEADER)?;
    for e in log.events() {
        out.write_record([e.t_ns.to_string().as_str(), channel_name(e.channel), kind_name(e.kind)])
            .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_events<R: Read>(r: R) -> Result<EventLog> {
    let mut log = EventLog::new();
    let mut last = f64::NEG_INFINITY;
    read_table(r, &EVENTS_HEADER, |line, rec| {
        let at = || format!("line {line}");
        let t_ns: f64 = field(rec, 0, "t_ns", line)?;
        if !t_ns.is_finite() {
            return Err(Error::parse(at(), "t_ns must be finite"));
        }
        if t_ns < last {
            return Err(Error::parse(at(), "events out of time order"));
        }
        last = t_ns;
        let channel = match &rec[1] {
            "1" => Channel::One,
            "2" => Channel::Two,
            other => return Err(Error::parse(at(), format!("bad channel `{other}` (1|2)"))),
        };
        let kind = match &rec[2] {
            "prompt" => DetectionKind::Prompt,
            "late" => DetectionKind::Late,
            other => return Err(Error::parse(at(), format!("bad kind `{other}` (prompt|late)"))),
        };
        log.push(ClickEvent { t_ns, channel, kind });
        Ok(())
    })?;
    Ok(log)
}

pub fn write_feedback<W: Write>(w: W, trace: &[FeedbackSample]) -> Result<()> {
    let mut out = writer(w, &FEEDBACK_HEADER)?;
    for s in trace {
        out.write_record([s.t_s.to_string(), s.v_bias.to_string(), s.v_control.to_string()])
            .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_feedback<R: Read>(r: R) -> Result<Vec<FeedbackSample>> {
    let mut trace = Vec::new();
    read_table(r, &FEEDBACK_HEADER, |line, rec| {
        trace.push(FeedbackSample {
            t_s: field(rec, 0, "t_s", line)?,
            v_bias: field(rec, 1, "v_bias", line)?,
            v_control: field(rec, 2, "v_control", line)?,
        });
        Ok(())
    })?;
    Ok(trace)
}

pub fn write_histogram<W: Write>(w: W, h: &Histogram) -> Result<()> {
    let mut out = writer(w, &HISTOGRAM_HEADER)?;
    for (i, c) in h.counts.iter().enumerate() {
        out.write_record([h.bin_lo(i).to_string(), c.to_string()])
            .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `(bin_lo_ns, count)` rows.
pub fn read_histogram<R: Read>(r: R) -> Result<Vec<(f64, u64)>> {
    let mut rows = Vec::new();
    read_table(r, &HISTOGRAM_HEADER, |line, rec| {
        rows.push((field(rec, 0, "bin_lo_ns", line)?, field(rec, 1, "count", line)?));
        Ok(())
    })?;
    Ok(rows)
}

pub fn write_spectrum<W: Write>(w: W, s: &Spectrum) -> Result<()> {
    let mut out = writer(w, &SPECTRUM_HEADER)?;
    for (f, p) in s.freq_hz.iter().zip(&s.power) {
        out.write_record([f.to_string(), p.to_string()])
            .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Raw output counts of one stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsRow {
    pub label: String,
    pub n0: u64,
    pub n1: u64,
    pub n_hold: u64,
    pub n_flip: u64,
}

pub fn write_counts<W: Write>(w: W, rows: &[CountsRow]) -> Result<()> {
    let mut out = writer(w, &COUNTS_HEADER)?;
    for r in rows {
        out.write_record([
            r.label.clone(),
            r.n0.to_string(),
            r.n1.to_string(),
            r.n_hold.to_string(),
            r.n_flip.to_string(),
        ])
        .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_counts<R: Read>(r: R) -> Result<Vec<CountsRow>> {
    let mut rows = Vec::new();
    read_table(r, &COUNTS_HEADER, |line, rec| {
        rows.push(CountsRow {
            label: rec[0].to_string(),
            n0: field(rec, 1, "n0", line)?,
            n1: field(rec, 2, "n1", line)?,
            n_hold: field(rec, 3, "n_hold", line)?,
            n_flip: field(rec, 4, "n_flip", line)?,
        });
        Ok(())
    })?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_location(e: Error) -> String {
        match e {
            Error::Parse { location, .. } => location,
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn bits_round_trip_lsb_first() {
        let s = BitStream::from_bits([true, false, false, false, false, false, false, false, true, true]);
        let mut buf = Vec::new();
        write_bits(&mut buf, &s).unwrap();
        assert_eq!(buf, vec![0x01, 0x03]);
        assert_eq!(read_bits(&buf[..], 10).unwrap(), s);
    }

    #[test]
    fn bits_length_errors_name_the_offset() {
        assert_eq!(parse_location(read_bits(&[0u8; 2][..], 17).unwrap_err()), "byte 2");
        assert_eq!(parse_location(read_bits(&[0u8; 4][..], 17).unwrap_err()), "byte 3");
        assert!(read_bits(&[][..], 0).unwrap().is_empty());
    }

    #[test]
    fn events_round_trip() {
        let log = EventLog::from_events(vec![
            ClickEvent { t_ns: 1.25, channel: Channel::One, kind: DetectionKind::Prompt },
            ClickEvent { t_ns: 1.25, channel: Channel::Two, kind: DetectionKind::Prompt },
            ClickEvent { t_ns: 930.0, channel: Channel::Two, kind: DetectionKind::Late },
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_events(&mut buf, &log).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "t_ns,channel,kind\n1.25,1,prompt\n1.25,2,prompt\n930,2,late\n");
        assert_eq!(read_events(&buf[..]).unwrap(), log);
    }

    #[test]
    fn header_only_is_empty() {
        assert!(read_events(&b"t_ns,channel,kind\n"[..]).unwrap().is_empty());
    }

    #[test]
    fn csv_errors_name_the_line() {
        let bad = b"t_ns,channel,kind\n1,1,prompt\n2,3,prompt\n";
        assert_eq!(parse_location(read_events(&bad[..]).unwrap_err()), "line 3");
        let unordered = b"t_ns,channel,kind\n5,1,prompt\n2,1,prompt\n";
        assert_eq!(parse_location(read_events(&unordered[..]).unwrap_err()), "line 3");
        assert_eq!(parse_location(read_events(&b"time,ch,k\n"[..]).unwrap_err()), "line 1");
        assert_eq!(parse_location(read_events(&b""[..]).unwrap_err()), "line 1");
        let short = b"t_s,v_bias,v_control\n0.001,28\n";
        assert_eq!(parse_location(read_feedback(&short[..]).unwrap_err()), "line 2");
    }

    #[test]
    fn feedback_round_trip() {
        let t = vec![
            FeedbackSample { t_s: 0.001, v_bias: 28.0, v_control: 27.9 },
            FeedbackSample { t_s: 0.002, v_bias: 27.95, v_control: 27.85 },
        ];
        let mut buf = Vec::new();
        write_feedback(&mut buf, &t).unwrap();
        assert!(buf.starts_with(b"t_s,v_bias,v_control\n"));
        assert_eq!(read_feedback(&buf[..]).unwrap(), t);
    }

    #[test]
    fn histogram_and_spectrum_headers() {
        let mut h = Histogram::new(-8.0, 4.0, 4).unwrap();
        h.counts[2] = 7;
        let mut buf = Vec::new();
        write_histogram(&mut buf, &h).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "bin_lo_ns,count\n-8,0\n-4,0\n0,7\n4,0\n");
        assert_eq!(read_histogram(&buf[..]).unwrap()[2], (0.0, 7));
        let s = Spectrum { freq_hz: vec![0.0, 1.0], power: vec![0.5, 2.0], resolution_hz: 1.0 };
        let mut buf = Vec::new();
        write_spectrum(&mut buf, &s).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "freq_hz,power\n0,0.5\n1,2\n");
    }

    #[test]
    fn counts_round_trip() {
        let rows = vec![CountsRow { label: "a".into(), n0: 3, n1: 5, n_hold: 2, n_flip: 5 }];
        let mut buf = Vec::new();
        write_counts(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "label,n0,n1,n_hold,n_flip\na,3,5,2,5\n");
        assert_eq!(read_counts(&buf[..]).unwrap(), rows);
        let bad = b"label,n0,n1,n_hold,n_flip\na,3,-5,2,5\n";
        assert_eq!(parse_location(read_counts(&bad[..]).unwrap_err()), "line 2");
    }
}
