//! GPS trajectories and the query traces sampled from them.

mod parse;
mod sample;
mod synth;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::Query;
use crate::noise::{GeoFix, PlanarPoint, Projection};

pub use parse::{parse_geolife, parse_tdrive, ParseReport};
pub use sample::{
    draw_gap, prior_sweep, prior_values, sample_queries, sample_queries_detailed, speed_segments,
    GapDraw, SampleDetail, SamplerConfig, MAX_SEGMENT_GAP_S,
};
pub use synth::{synth_trace, SynthKind};

/// A user's raw fixes in chronological order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user_id: String,
    pub fixes: Vec<GeoFix>,
}

impl Trajectory {
    /// Projects every fix, dropping (and counting) those the projection rejects.
    pub fn project(&self, proj: &Projection) -> (ProjectedTrajectory, usize) {
        let mut points = Vec::with_capacity(self.fixes.len());
        let mut times = Vec::with_capacity(self.fixes.len());
        let mut dropped = 0;
        for f in &self.fixes {
            match proj.project(f) {
                Ok(p) => {
                    points.push(p);
                    times.push(f.t);
                }
                Err(_) => dropped += 1,
            }
        }
        (
            ProjectedTrajectory {
                user_id: self.user_id.clone(),
                points,
                times,
            },
            dropped,
        )
    }
}

/// A trajectory in planar meters; `times[i]` belongs to `points[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedTrajectory {
    pub user_id: String,
    pub points: Vec<PlanarPoint>,
    pub times: Vec<f64>,
}

impl ProjectedTrajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Query points sampled from one trajectory under one jump prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTrace {
    pub user_id: String,
    pub prior_p: f64,
    pub sample_index: usize,
    pub points: Vec<Query>,
}

impl QueryTrace {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<PlanarPoint> {
        self.points.iter().map(|q| q.point).collect()
    }
}

pub const QUERY_HEADER: [&str; 6] = ["user_id", "prior_p", "sample_index", "t", "x", "y"];
pub const STORE_HEADER: [&str; 4] = ["user_id", "t", "lat", "lon"];

/// Writes traces as `user_id,prior_p,sample_index,t,x,y` rows. Empty traces
/// produce no rows.
pub fn write_query_traces<W: Write>(traces: &[QueryTrace], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(QUERY_HEADER)?;
    for tr in traces {
        for q in &tr.points {
            w.write_record([
                tr.user_id.clone(),
                tr.prior_p.to_string(),
                tr.sample_index.to_string(),
                q.t.to_string(),
                q.point.x.to_string(),
                q.point.y.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads traces back, grouping consecutive rows with the same
/// `(user_id, prior_p, sample_index)`.
pub fn read_query_traces<R: Read>(input: R) -> Result<Vec<QueryTrace>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out: Vec<QueryTrace> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    line,
                    msg: format!("column {}: {e}", QUERY_HEADER[k]),
                })
        };
        let user = rec.get(0).unwrap_or("").to_string();
        let prior_p = num(1)?;
        let sample_index = rec
            .get(2)
            .unwrap_or("")
            .trim()
            .parse::<usize>()
            .map_err(|e| Error::Parse {
                line,
                msg: format!("column sample_index: {e}"),
            })?;
        let q = Query::new(PlanarPoint::new(num(4)?, num(5)?), num(3)?);
        match out.last_mut() {
            Some(tr)
                if tr.user_id == user
                    && tr.prior_p == prior_p
                    && tr.sample_index == sample_index =>
            {
                tr.points.push(q)
            }
            _ => out.push(QueryTrace {
                user_id: user,
                prior_p,
                sample_index,
                points: vec![q],
            }),
        }
    }
    Ok(out)
}

/// Writes normalized trajectories as `user_id,t,lat,lon` rows.
pub fn write_store<W: Write>(trajs: &[Trajectory], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STORE_HEADER)?;
    for tr in trajs {
        for f in &tr.fixes {
            w.write_record([
                tr.user_id.clone(),
                f.t.to_string(),
                f.lat.to_string(),
                f.lon.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_store<R: Read>(input: R) -> Result<Vec<Trajectory>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out: Vec<Trajectory> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    line,
                    msg: format!("column {}: {e}", STORE_HEADER[k]),
                })
        };
        let user = rec.get(0).unwrap_or("").to_string();
        let fix = GeoFix::new(num(2)?, num(3)?, num(1)?)?;
        match out.last_mut() {
            Some(tr) if tr.user_id == user => tr.fixes.push(fix),
            _ => out.push(Trajectory {
                user_id: user,
                fixes: vec![fix],
            }),
        }
    }
    Ok(out)
}
