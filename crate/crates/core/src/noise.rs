//! Geometry, projection and Laplace noise.
//!
//! Distances are in meters and privacy parameters in 1/meters. A public
//! setting given as (ε*, r*) is converted once with [`eps_from_radius`].
//!
//! Two accuracy functions drive every budget formula:
//!
//! ```text
//! icll(ε, δ) = c_θ(δ) / ε      c_θ(δ) = ln(1 / (1 − δ))
//! icpl(ε, δ) = c_N(δ) / ε      (1 + c_N) · e^(−c_N) = 1 − δ
//! ```
//!
//! `icll` is the δ-quantile of |Lap(ε)| and `icpl` the δ-quantile of the
//! planar Laplace radius.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::rng::SimRng;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Largest allowed |Δlat| or |Δlon| between a fix and the projection origin.
pub const MAX_PROJECTION_SPAN_DEG: f64 = 5.0;

/// Centroid of the Beijing bounding box, the default projection origin.
pub const BEIJING_ORIGIN: (f64, f64) = (40.25, 116.465);

/// Absolute tolerance of the planar radius inversion, in meters.
const RADIUS_TOL_M: f64 = 1e-10;
/// Absolute tolerance on the unit-ε constant c_N(δ).
const UNIT_TOL: f64 = 1e-12;
/// Upper end of the bisection bracket, in units of 1/ε.
const BRACKET_UNITS: f64 = 50.0;

/// A raw GPS fix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoFix {
    pub lat: f64,
    pub lon: f64,
    /// Seconds since the Unix epoch.
    pub t: f64,
}

impl GeoFix {
    pub fn new(lat: f64, lon: f64, t: f64) -> Result<Self> {
        let fix = GeoFix { lat, lon, t };
        fix.validate()?;
        Ok(fix)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(invalid_input(format!("latitude {} out of range", self.lat)));
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(invalid_input(format!(
                "longitude {} out of range",
                self.lon
            )));
        }
        if !self.t.is_finite() {
            return Err(invalid_input("timestamp is not finite"));
        }
        Ok(())
    }
}

/// A location in local planar meters (x east, y north).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub const ORIGIN: PlanarPoint = PlanarPoint { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        PlanarPoint { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// The point at `distance` meters from `self` in direction `angle` (radians).
    pub fn offset_polar(&self, distance: f64, angle: f64) -> PlanarPoint {
        PlanarPoint {
            x: self.x + distance * angle.cos(),
            y: self.y + distance * angle.sin(),
        }
    }
}

/// Euclidean distance in meters.
pub fn euclid(a: PlanarPoint, b: PlanarPoint) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Equirectangular projection around a fixed origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl Default for Projection {
    fn default() -> Self {
        Projection {
            origin_lat: BEIJING_ORIGIN.0,
            origin_lon: BEIJING_ORIGIN.1,
        }
    }
}

impl Projection {
    pub fn new(origin_lat: f64, origin_lon: f64) -> Result<Self> {
        GeoFix::new(origin_lat, origin_lon, 0.0)?;
        Ok(Projection {
            origin_lat,
            origin_lon,
        })
    }

    pub fn project(&self, fix: &GeoFix) -> Result<PlanarPoint> {
        fix.validate()?;
        let dlat = fix.lat - self.origin_lat;
        let dlon = fix.lon - self.origin_lon;
        if dlat.abs() >= MAX_PROJECTION_SPAN_DEG || dlon.abs() >= MAX_PROJECTION_SPAN_DEG {
            return Err(invalid_input(format!(
                "fix ({}, {}) is too far from projection origin ({}, {})",
                fix.lat, fix.lon, self.origin_lat, self.origin_lon
            )));
        }
        let k = EARTH_RADIUS_M * PI / 180.0;
        Ok(PlanarPoint {
            x: k * dlon * (self.origin_lat * PI / 180.0).cos(),
            y: k * dlat,
        })
    }
}

/// Projects `fix` into planar meters around `origin`.
pub fn project(fix: &GeoFix, origin: &GeoFix) -> Result<PlanarPoint> {
    Projection::new(origin.lat, origin.lon)?.project(fix)
}

/// ε = ε* / r*.
pub fn eps_from_radius(eps_star: f64, radius_m: f64) -> Result<f64> {
    if !(eps_star > 0.0 && radius_m > 0.0) || !eps_star.is_finite() || !radius_m.is_finite() {
        return Err(invalid_param("eps* and r* must be positive and finite"));
    }
    Ok(eps_star / radius_m)
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(invalid_param(format!(
            "epsilon must be positive and finite, got {eps}"
        )))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta == 1.0 {
        return Err(Error::Unbounded("delta = 1 has no finite quantile".into()));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(invalid_param(format!(
            "delta must lie in [0, 1), got {delta}"
        )));
    }
    Ok(())
}

/// Finds `x` in `[lo, hi]` with `f(x) = target` for increasing `f`.
fn bisect(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// CDF of the planar Laplace radius: `1 − (1 + εr)·e^(−εr)`.
pub fn planar_radius_cdf(eps: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let u = eps * r;
    1.0 - (1.0 + u) * (-u).exp()
}

/// CDF of `Lap(ε)` centred at zero.
pub fn linear_laplace_cdf(eps: f64, t: f64) -> f64 {
    if t < 0.0 {
        0.5 * (eps * t).exp()
    } else {
        1.0 - 0.5 * (-eps * t).exp()
    }
}

/// Draws from the density `(ε/2)·e^(−ε|t|)`.
pub fn linear_laplace_sample(eps: f64, rng: &mut SimRng) -> Result<f64> {
    check_eps(eps)?;
    let u: f64 = rng.sample(Open01);
    let v = u - 0.5;
    Ok(-v.signum() * (1.0 - 2.0 * v.abs()).ln() / eps)
}

/// Inverse of [`planar_radius_cdf`] by bisection on `[0, 50/ε]`.
pub fn planar_radius_quantile(eps: f64, p: f64) -> Result<f64> {
    check_eps(eps)?;
    if !(0.0..1.0).contains(&p) {
        return Err(invalid_param(format!(
            "probability must lie in [0, 1), got {p}"
        )));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    Ok(bisect(
        |r| planar_radius_cdf(eps, r),
        p,
        0.0,
        BRACKET_UNITS / eps,
        RADIUS_TOL_M,
    ))
}

/// Draws a point from the planar Laplace distribution centred at `center`.
pub fn planar_laplace_sample(
    eps: f64,
    center: PlanarPoint,
    rng: &mut SimRng,
) -> Result<PlanarPoint> {
    check_eps(eps)?;
    let theta = 2.0 * PI * rng.random::<f64>();
    let p = rng.random::<f64>();
    let r = planar_radius_quantile(eps, p)?;
    Ok(center.offset_polar(r, theta))
}

/// c_θ(δ) = ln(1 / (1 − δ)).
pub fn c_theta(delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(-(-delta).ln_1p())
}

/// c_N(δ): the root of `(1 + c)·e^(−c) = 1 − δ`.
pub fn c_n(delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if delta == 0.0 {
        return Ok(0.0);
    }
    Ok(bisect(
        |c| 1.0 - (1.0 + c) * (-c).exp(),
        delta,
        0.0,
        BRACKET_UNITS,
        UNIT_TOL,
    ))
}

/// δ-accuracy of `Lap(ε)`: `c_θ(δ)/ε`.
pub fn icll(eps: f64, delta: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(c_theta(delta)? / eps)
}

/// δ-accuracy of planar Laplace noise: `c_N(δ)/ε`.
pub fn icpl(eps: f64, delta: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(c_n(delta)? / eps)
}

/// Unit-ε accuracy constants at one level δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyConstants {
    pub delta: f64,
    pub c_theta: f64,
    pub c_n: f64,
}

impl AccuracyConstants {
    pub fn new(delta: f64) -> Result<Self> {
        Ok(AccuracyConstants {
            delta,
            c_theta: c_theta(delta)?,
            c_n: c_n(delta)?,
        })
    }

    /// c_θ / c_N.
    pub fn ratio(&self) -> f64 {
        self.c_theta / self.c_n
    }
}

/// `max_i euclid(a[i], b[i])`.
pub fn trace_dinf(a: &[PlanarPoint], b: &[PlanarPoint]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(invalid_input(format!(
            "trace lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(p, q)| euclid(*p, *q))
        .fold(0.0, f64::max))
}

/// Mean distance between consecutive points.
pub fn step_sigma(x: &[PlanarPoint]) -> Result<f64> {
    if x.len() < 2 {
        return Err(invalid_input("step needs at least two points"));
    }
    let total: f64 = x.windows(2).map(|w| euclid(w[0], w[1])).sum();
    Ok(total / (x.len() - 1) as f64)
}
