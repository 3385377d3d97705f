//! Tag stream files.
//!
//! Two encodings, both holding events sorted by time:
//!
//! * CSV: header `t_ns,side,channel`, one row per event, side `A`/`B`,
//!   channel `U`/`D`, `\n` line endings.
//! * Binary: the 4-byte magic `EPRT`, a version byte (`1`), the record count
//!   as a little-endian `u64`, then one 10-byte record per event: `t_ns` as
//!   little-endian `u64`, side byte (`0` = A, `1` = B), channel byte
//!   (`0` = U, `1` = D).
//!
//! Readers reject unsorted streams with [`Error::Unsorted`] and anything
//! else malformed with [`Error::Format`].

use std::io::{Read, Write};

use super::{check_sorted, Channel, Side, TagEvent};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EPRT";
pub const VERSION: u8 = 1;
pub const CSV_HEADER: [&str; 3] = ["t_ns", "side", "channel"];
const RECORD_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamFormat {
    Csv,
    Binary,
}

fn side_char(s: Side) -> &'static str {
    match s {
        Side::A => "A",
        Side::B => "B",
    }
}

fn channel_char(c: Channel) -> &'static str {
    match c {
        Channel::Up => "U",
        Channel::Down => "D",
    }
}

pub fn write_csv<W: Write>(events: &[TagEvent], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(CSV_HEADER).map_err(io)?;
    for e in events {
        w.write_record([e.t.to_string().as_str(), side_char(e.side), channel_char(e.channel)])
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<TagEvent>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    let header = r.headers().map_err(fmt)?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Format(format!("expected header {:?}, got {:?}", CSV_HEADER.join(","), header)));
    }
    let mut events = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(fmt)?;
        let line = row + 2;
        let t = rec[0]
            .parse::<u64>()
            .map_err(|e| Error::Format(format!("line {line}: bad t_ns {:?}: {e}", &rec[0])))?;
        let side = match &rec[1] {
            "A" => Side::A,
            "B" => Side::B,
            s => return Err(Error::Format(format!("line {line}: bad side {s:?}"))),
        };
        let channel = match &rec[2] {
            "U" => Channel::Up,
            "D" => Channel::Down,
            c => return Err(Error::Format(format!("line {line}: bad channel {c:?}"))),
        };
        events.push(TagEvent { t, side, channel });
    }
    check_sorted(&events)?;
    Ok(events)
}

pub fn write_binary<W: Write>(events: &[TagEvent], mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&[VERSION])?;
    out.write_all(&(events.len() as u64).to_le_bytes())?;
    for e in events {
        let mut rec = [0u8; RECORD_LEN];
        rec[..8].copy_from_slice(&e.t.to_le_bytes());
        rec[8] = match e.side {
            Side::A => 0,
            Side::B => 1,
        };
        rec[9] = match e.channel {
            Channel::Up => 0,
            Channel::Down => 1,
        };
        out.write_all(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<Vec<TagEvent>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    decode_binary(&bytes)
}

fn decode_binary(bytes: &[u8]) -> Result<Vec<TagEvent>> {
    if bytes.len() < 13 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing EPRT header".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", bytes[4])));
    }
    let count = u64::from_le_bytes(bytes[5..13].try_into().expect("8 bytes"));
    let body = &bytes[13..];
    if (body.len() as u64) != count.saturating_mul(RECORD_LEN as u64) {
        return Err(Error::Format(format!(
            "header declares {count} records but body holds {} bytes",
            body.len()
        )));
    }
    let events = body
        .chunks_exact(RECORD_LEN)
        .enumerate()
        .map(|(i, rec)| {
            let t = u64::from_le_bytes(rec[..8].try_into().expect("8 bytes"));
            let side = match rec[8] {
                0 => Side::A,
                1 => Side::B,
                s => return Err(Error::Format(format!("record {i}: bad side byte {s}"))),
            };
            let channel = match rec[9] {
                0 => Channel::Up,
                1 => Channel::Down,
                c => return Err(Error::Format(format!("record {i}: bad channel byte {c}"))),
            };
            Ok(TagEvent { t, side, channel })
        })
        .collect::<Result<Vec<_>>>()?;
    check_sorted(&events)?;
    Ok(events)
}

/// Reads either encoding, telling them apart by the binary magic.
pub fn read_stream<R: Read>(mut input: R) -> Result<Vec<TagEvent>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.starts_with(MAGIC) {
        decode_binary(&bytes)
    } else {
        read_csv(bytes.as_slice())
    }
}

pub fn write_stream<W: Write>(events: &[TagEvent], format: StreamFormat, out: W) -> Result<()> {
    match format {
        StreamFormat::Csv => write_csv(events, out),
        StreamFormat::Binary => write_binary(events, out),
    }
}
