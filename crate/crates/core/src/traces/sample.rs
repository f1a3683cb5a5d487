//! Speed filtering and the jump-probability query sampler.
//!
//! A user only queries while slow (below `speed_cap`). After each query the
//! next one comes after a brief interval, or after a long one (a jump) with
//! probability `p_jump`; both intervals carry truncated Gaussian jitter.
//! Queries are always placed on real fixes, never interpolated.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ProjectedTrajectory, QueryTrace};
use crate::error::{invalid_param, Result};
use crate::mechanism::Query;
use crate::noise::euclid;
use crate::rng::{derive, SimRng};

/// Consecutive fixes further apart than this never share a segment.
pub const MAX_SEGMENT_GAP_S: f64 = 600.0;

const MIN_GAP_S: f64 = 1.0;
const PRIOR_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// m/s; 15 km/h by default.
    pub speed_cap: f64,
    pub brief_interval: f64,
    pub jump_interval: f64,
    /// Standard deviation of the interval jitter as a fraction of the interval.
    pub interval_noise_frac: f64,
    pub p_jump: f64,
    pub samples_per_trace: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            speed_cap: 15.0 / 3.6,
            brief_interval: 60.0,
            jump_interval: 3600.0,
            interval_noise_frac: 0.1,
            p_jump: 0.0,
            samples_per_trace: 10,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.brief_interval > 0.0 && self.brief_interval < self.jump_interval) {
            return Err(invalid_param("need 0 < brief_interval < jump_interval"));
        }
        if !(0.0..=1.0).contains(&self.p_jump) {
            return Err(invalid_param("p_jump must lie in [0, 1]"));
        }
        if self.speed_cap.is_nan() || self.speed_cap <= 0.0 {
            return Err(invalid_param("speed_cap must be positive"));
        }
        if !(self.interval_noise_frac >= 0.0 && self.interval_noise_frac.is_finite()) {
            return Err(invalid_param("interval_noise_frac must be non-negative"));
        }
        Ok(())
    }
}

/// Maximal index ranges in which every consecutive pair of fixes moves
/// slower than `cap` (m/s) and is at most [`MAX_SEGMENT_GAP_S`] apart.
pub fn speed_segments(traj: &ProjectedTrajectory, cap: f64) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..traj.len().saturating_sub(1) {
        let dt = traj.times[i + 1] - traj.times[i];
        let slow = dt > 0.0
            && dt <= MAX_SEGMENT_GAP_S
            && euclid(traj.points[i], traj.points[i + 1]) / dt < cap;
        match (slow, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(s..i + 1);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(s..traj.len());
    }
    out
}

/// One inter-query interval draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapDraw {
    pub jump: bool,
    pub seconds: f64,
}

pub fn draw_gap(cfg: &SamplerConfig, rng: &mut SimRng) -> GapDraw {
    let jump = rng.random_bool(cfg.p_jump);
    let base = if jump {
        cfg.jump_interval
    } else {
        cfg.brief_interval
    };
    let sigma = cfg.interval_noise_frac * base;
    let jitter = if sigma > 0.0 {
        let n = Normal::new(0.0, sigma).expect("sigma is positive and finite");
        n.sample(rng).clamp(-3.0 * sigma, 3.0 * sigma)
    } else {
        0.0
    };
    GapDraw {
        jump,
        seconds: (base + jitter).max(MIN_GAP_S),
    }
}

/// A sampled trace plus the bookkeeping behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDetail {
    pub trace: QueryTrace,
    /// Trajectory index of the fix behind each query.
    pub source_fixes: Vec<usize>,
    /// Every interval drawn, including the final one that ran past the end.
    pub gaps: Vec<GapDraw>,
}

fn nearest_in_time(times: &[f64], target: f64) -> usize {
    let k = times.partition_point(|t| *t < target);
    if k == 0 {
        0
    } else if k == times.len() || target - times[k - 1] <= times[k] - target {
        k - 1
    } else {
        k
    }
}

pub fn sample_queries_detailed(
    traj: &ProjectedTrajectory,
    cfg: &SamplerConfig,
    sample_index: usize,
    rng: &mut SimRng,
) -> Result<SampleDetail> {
    cfg.validate()?;
    let segments = speed_segments(traj, cfg.speed_cap);
    let mut segment_of = vec![None; traj.len()];
    for (s, r) in segments.iter().enumerate() {
        for slot in &mut segment_of[r.clone()] {
            *slot = Some(s);
        }
    }

    let mut detail = SampleDetail {
        trace: QueryTrace {
            user_id: traj.user_id.clone(),
            prior_p: cfg.p_jump,
            sample_index,
            points: Vec::new(),
        },
        source_fixes: Vec::new(),
        gaps: Vec::new(),
    };
    let Some(first) = segments.first() else {
        return Ok(detail);
    };
    let last_time = *traj.times.last().expect("segments imply fixes");
    let emit = |d: &mut SampleDetail, i: usize| {
        d.trace
            .points
            .push(Query::new(traj.points[i], traj.times[i]));
        d.source_fixes.push(i);
    };

    let mut cur = first.start;
    emit(&mut detail, cur);
    loop {
        let gap = draw_gap(cfg, rng);
        detail.gaps.push(gap);
        let target = traj.times[cur] + gap.seconds;
        if target > last_time {
            break;
        }
        let mut j = nearest_in_time(&traj.times, target);
        if j <= cur {
            j = cur + 1;
        }
        let next = match segment_of[j] {
            Some(_) => j,
            None => match segments.iter().find(|r| r.start > j) {
                Some(r) => r.start,
                None => break,
            },
        };
        cur = next;
        emit(&mut detail, cur);
    }
    Ok(detail)
}

/// Samples one query trace. A trajectory without slow segments gives an
/// empty trace.
pub fn sample_queries(
    traj: &ProjectedTrajectory,
    cfg: &SamplerConfig,
    sample_index: usize,
    rng: &mut SimRng,
) -> Result<QueryTrace> {
    Ok(sample_queries_detailed(traj, cfg, sample_index, rng)?.trace)
}

/// `p ∈ {0.0, 0.1, …, 1.0}`.
pub fn prior_values() -> Vec<f64> {
    (0..=PRIOR_STEPS)
        .map(|i| i as f64 / PRIOR_STEPS as f64)
        .collect()
}

/// Samples every trajectory `samples_per_trace` times under each prior.
/// Output order is trajectory, then prior, then sample index; each sample
/// draws from its own stream derived from `(master_seed, user_id, p, index)`.
pub fn prior_sweep(
    trajs: &[ProjectedTrajectory],
    template: &SamplerConfig,
    master_seed: u64,
) -> Result<Vec<QueryTrace>> {
    template.validate()?;
    let priors = prior_values();
    let tasks: Vec<(usize, usize, usize)> = (0..trajs.len())
        .flat_map(|t| {
            (0..priors.len())
                .flat_map(move |p| (0..template.samples_per_trace).map(move |s| (t, p, s)))
        })
        .collect();
    tasks
        .par_iter()
        .map(|&(t, p, s)| {
            let cfg = SamplerConfig {
                p_jump: priors[p],
                ..*template
            };
            let traj = &trajs[t];
            let mut rng = derive(
                master_seed,
                &[
                    "sample".into(),
                    traj.user_id.as_str().into(),
                    p.into(),
                    s.into(),
                ],
            );
            sample_queries(traj, &cfg, s, &mut rng)
        })
        .collect()
}
