//! Line-based text format for environment logs.
//!
//! ```text
//! SSEPLOG 1 <L> <rho> <T> <master_seed as 0x-hex> <stream_id>
//! <initial occupancy as L characters 0/1>
//! <time, 17 significant digits> <bond>
//! ...
//! ```
//!
//! Times are written with 17 significant digits so that parsing gives back the
//! identical `f64`; `rho` and `T` use the shortest round-trip representation.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use super::{EnvironmentEventLog, SwapEvent};
use crate::lattice::LatticeConfiguration;
use crate::model::LatticeSpec;
use crate::seed::SeedSpec;

const MAGIC: &str = "SSEPLOG";
const VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum LogFormatError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl LogFormatError {
    pub fn line(&self) -> Option<usize> {
        match self {
            Self::Malformed { line, .. } => Some(*line),
            Self::Io(_) => None,
        }
    }
}

fn malformed(line: usize, message: impl Into<String>) -> LogFormatError {
    LogFormatError::Malformed {
        line,
        message: message.into(),
    }
}

pub fn write_log<W: Write>(log: &EnvironmentEventLog, mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "{MAGIC} {VERSION} {} {} {} {:#x} {}",
        log.lattice.sites, log.rho, log.horizon, log.seed.master_seed, log.seed.stream_id
    )?;
    writeln!(out, "{}", log.initial.to_bitstring())?;
    for event in &log.events {
        writeln!(out, "{:.16e} {}", event.time, event.bond)?;
    }
    out.flush()
}

fn parse_field<T: std::str::FromStr>(line: usize, name: &str, raw: Option<&str>) -> Result<T, LogFormatError> {
    let raw = raw.ok_or_else(|| malformed(line, format!("missing {name}")))?;
    raw.parse()
        .map_err(|_| malformed(line, format!("invalid {name} '{raw}'")))
}

fn parse_hex(line: usize, raw: Option<&str>) -> Result<u64, LogFormatError> {
    let raw = raw.ok_or_else(|| malformed(line, "missing master seed"))?;
    let digits = raw
        .strip_prefix("0x")
        .or_else(|| raw.strip_prefix("0X"))
        .unwrap_or(raw);
    u64::from_str_radix(digits, 16).map_err(|_| malformed(line, format!("invalid master seed '{raw}'")))
}

/// Parses and validates a log: header fields, occupancy string, bounded and
/// strictly increasing times, bond range, and that every swap is effective
/// when replayed from the initial configuration.
pub fn read_log<R: BufRead>(input: R) -> Result<EnvironmentEventLog, LogFormatError> {
    let mut lines = input.lines();

    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| malformed(1, "empty file"))?;
    let mut fields = header.split_ascii_whitespace();
    if fields.next() != Some(MAGIC) {
        return Err(malformed(1, "missing SSEPLOG magic"));
    }
    if fields.next() != Some(VERSION) {
        return Err(malformed(1, "unsupported format version"));
    }
    let sites: u32 = parse_field(1, "L", fields.next())?;
    let lattice = LatticeSpec::new(sites).map_err(|e| malformed(1, e.to_string()))?;
    let rho: f64 = parse_field(1, "rho", fields.next())?;
    if !(0.0..=1.0).contains(&rho) {
        return Err(malformed(1, format!("rho {rho} outside [0, 1]")));
    }
    let horizon: f64 = parse_field(1, "T", fields.next())?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(malformed(1, format!("invalid horizon {horizon}")));
    }
    let master_seed = parse_hex(1, fields.next())?;
    let stream_id: u64 = parse_field(1, "stream id", fields.next())?;
    if fields.next().is_some() {
        return Err(malformed(1, "trailing fields in header"));
    }

    let occupancy = lines
        .next()
        .transpose()?
        .ok_or_else(|| malformed(2, "missing initial occupancy"))?;
    let initial = LatticeConfiguration::from_bitstring(occupancy.trim_end())
        .map_err(|e| malformed(2, e.to_string()))?;
    if initial.len() != lattice.len() {
        return Err(malformed(
            2,
            format!("occupancy has {} sites, header says {}", initial.len(), sites),
        ));
    }

    let mut replay = initial.clone();
    let mut events = Vec::new();
    let mut previous = f64::NEG_INFINITY;
    for (index, line) in lines.enumerate() {
        let number = index + 3;
        let line = line?;
        let mut fields = line.split_ascii_whitespace();
        let time: f64 = parse_field(number, "time", fields.next())?;
        let bond: u32 = parse_field(number, "bond", fields.next())?;
        if fields.next().is_some() {
            return Err(malformed(number, "trailing fields"));
        }
        if !(0.0..=horizon).contains(&time) {
            return Err(malformed(number, format!("time {time} outside [0, {horizon}]")));
        }
        if time <= previous {
            return Err(malformed(number, "event times must be strictly increasing"));
        }
        if bond >= sites {
            return Err(malformed(number, format!("bond {bond} out of range")));
        }
        if !replay.swap_bond(bond) {
            return Err(malformed(number, format!("swap across bond {bond} is not effective")));
        }
        previous = time;
        events.push(SwapEvent { time, bond });
    }

    Ok(EnvironmentEventLog {
        lattice,
        rho,
        horizon,
        seed: SeedSpec::new(master_seed, stream_id),
        initial,
        events,
    })
}
