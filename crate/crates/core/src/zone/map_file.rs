//! Line-oriented radio map file.
//!
//! ```text
//! xlayer-radiomap v1
//! zone_id,cell_id,loc_x,loc_y,orientation,ap:rss:toa;ap:rss:toa;...
//! ```
//!
//! RSS values are integer cdBm, arrival times integer nanoseconds. Locations
//! use the shortest decimal form that parses back to the same `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{RadioMapRecord, ZoneError};
use crate::radio::Position;
use crate::wire::{RssReading, RssVector};

pub const MAP_HEADER: &str = "xlayer-radiomap v1";

pub fn write_radio_map(records: &[RadioMapRecord]) -> String {
    let mut out = String::with_capacity(64 + records.len() * 300);
    out.push_str(MAP_HEADER);
    out.push('\n');
    for r in records {
        write!(
            out,
            "{},{},{},{},{},",
            r.zone_id, r.cell_id, r.location.x, r.location.y, r.orientation
        )
        .unwrap();
        for (i, x) in r.rss.readings().iter().enumerate() {
            if i > 0 {
                out.push(';');
            }
            write!(out, "{}:{}:{}", x.ap_id, x.rss_cdbm, x.toa_ns).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn save_radio_map(records: &[RadioMapRecord], path: &Path) -> Result<(), ZoneError> {
    fs::write(path, write_radio_map(records))?;
    Ok(())
}

pub fn load_radio_map(path: &Path) -> Result<Vec<RadioMapRecord>, ZoneError> {
    parse_radio_map(&fs::read_to_string(path)?)
}

pub fn parse_radio_map(text: &str) -> Result<Vec<RadioMapRecord>, ZoneError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(MAP_HEADER) => {}
        Some(other) => return Err(ZoneError::Version(other.to_string())),
        None => return Err(ZoneError::Version(String::new())),
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.is_empty() {
            continue;
        }
        records.push(parse_record(line).map_err(|msg| ZoneError::Parse { line: line_no, msg })?);
    }
    Ok(records)
}

fn parse_record(line: &str) -> Result<RadioMapRecord, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 6 {
        return Err(format!("expected 6 comma-separated fields, found {}", fields.len()));
    }
    fn num<T: std::str::FromStr>(s: &str, name: &str) -> Result<T, String> {
        s.parse().map_err(|_| format!("invalid {name} {s:?}"))
    }
    let zone_id = num(fields[0], "zone_id")?;
    let cell_id = num(fields[1], "cell_id")?;
    let x: f64 = num(fields[2], "loc_x")?;
    let y: f64 = num(fields[3], "loc_y")?;
    let orientation = num(fields[4], "orientation")?;
    let mut readings = Vec::new();
    for item in fields[5].split(';') {
        let parts: Vec<&str> = item.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("reading {item:?} is not ap:rss:toa"));
        }
        let reading = RssReading::new(
            num(parts[0], "ap_id")?,
            num(parts[1], "rss")?,
            num(parts[2], "toa")?,
        )
        .map_err(|e| e.to_string())?;
        readings.push(reading);
    }
    let rss = RssVector::new(readings).map_err(|e| e.to_string())?;
    Ok(RadioMapRecord {
        location: Position::new(x, y),
        orientation,
        zone_id,
        cell_id,
        rss,
    })
}
