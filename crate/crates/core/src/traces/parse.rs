//! Readers for GeoLife PLT and T-Drive TXT files.

use chrono::NaiveDateTime;
use log::warn;

use super::Trajectory;
use crate::error::{Error, Result};
use crate::noise::GeoFix;

const GEOLIFE_HEADER_LINES: usize = 6;

/// What a parser skipped or repaired on its way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseReport {
    pub records: usize,
    pub skipped: usize,
    pub duplicates: usize,
    pub reordered: bool,
    pub warnings: Vec<String>,
}

impl ParseReport {
    pub fn warning_count(&self) -> usize {
        self.warnings.len()
    }

    fn skip(&mut self, line: usize, why: impl std::fmt::Display) {
        self.skipped += 1;
        let msg = format!("line {line}: {why}");
        warn!("{msg}");
        self.warnings.push(msg);
    }
}

fn parse_datetime(s: &str) -> Option<f64> {
    NaiveDateTime::parse_from_str(s.trim(), "%Y-%m-%d %H:%M:%S")
        .ok()
        .map(|dt| dt.and_utc().timestamp() as f64)
}

fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Sorts by time (stable) and keeps the first of equal timestamps.
fn normalize(
    user_id: String,
    mut fixes: Vec<GeoFix>,
    report: &mut ParseReport,
) -> Result<Trajectory> {
    if fixes.windows(2).any(|w| w[1].t < w[0].t) {
        fixes.sort_by(|a, b| a.t.total_cmp(&b.t));
        report.reordered = true;
        let msg = "timestamps were not monotone; fixes reordered".to_string();
        warn!("{user_id}: {msg}");
        report.warnings.push(msg);
    }
    let before = fixes.len();
    fixes.dedup_by(|later, earlier| later.t == earlier.t);
    let dups = before - fixes.len();
    if dups > 0 {
        report.duplicates += dups;
        let msg = format!("{dups} duplicate timestamp(s) dropped");
        warn!("{user_id}: {msg}");
        report.warnings.push(msg);
    }
    if fixes.len() < 2 {
        return Err(Error::EmptyTrajectory {
            valid: fixes.len(),
            skipped: report.skipped,
        });
    }
    Ok(Trajectory { user_id, fixes })
}

/// Parses a GeoLife `.plt` file: six header lines, then
/// `lat,lon,0,altitude_ft,days,date,time` records.
pub fn parse_geolife(user_id: &str, bytes: &[u8]) -> Result<(Trajectory, ParseReport)> {
    let text = String::from_utf8_lossy(bytes);
    let mut report = ParseReport::default();
    let mut fixes = Vec::new();
    for (i, line) in text.lines().enumerate().skip(GEOLIFE_HEADER_LINES) {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        report.records += 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            report.skip(
                line_no,
                format!("expected 7 fields, found {}", fields.len()),
            );
            continue;
        }
        let (Some(lat), Some(lon)) = (parse_f64(fields[0]), parse_f64(fields[1])) else {
            report.skip(line_no, "unparsable coordinates");
            continue;
        };
        let Some(t) = parse_datetime(&format!("{} {}", fields[5].trim(), fields[6].trim())) else {
            report.skip(line_no, "unparsable date/time");
            continue;
        };
        match GeoFix::new(lat, lon, t) {
            Ok(f) => fixes.push(f),
            Err(e) => report.skip(line_no, e),
        }
    }
    let traj = normalize(user_id.to_string(), fixes, &mut report)?;
    Ok((traj, report))
}

/// Parses a T-Drive file of `taxi_id,YYYY-MM-DD HH:MM:SS,lon,lat` lines.
/// Lines for a taxi other than the first one seen are skipped.
pub fn parse_tdrive(bytes: &[u8]) -> Result<(Trajectory, ParseReport)> {
    let text = String::from_utf8_lossy(bytes);
    let mut report = ParseReport::default();
    let mut fixes = Vec::new();
    let mut user: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        report.records += 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            report.skip(
                line_no,
                format!("expected 4 fields, found {}", fields.len()),
            );
            continue;
        }
        let id = fields[0].trim();
        if let Some(u) = &user {
            if u != id {
                report.skip(line_no, format!("taxi id {id} differs from {u}"));
                continue;
            }
        }
        let (Some(lon), Some(lat)) = (parse_f64(fields[2]), parse_f64(fields[3])) else {
            report.skip(line_no, "unparsable coordinates");
            continue;
        };
        let Some(t) = parse_datetime(fields[1]) else {
            report.skip(line_no, "unparsable date/time");
            continue;
        };
        match GeoFix::new(lat, lon, t) {
            Ok(f) => {
                user.get_or_insert_with(|| id.to_string());
                fixes.push(f);
            }
            Err(e) => report.skip(line_no, e),
        }
    }
    let traj = normalize(user.unwrap_or_default(), fixes, &mut report)?;
    Ok((traj, report))
}
