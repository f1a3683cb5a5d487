//! Synthetic query traces for desk-scale experiments.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::QueryTrace;
use crate::error::{invalid_param, Result};
use crate::mechanism::Query;
use crate::noise::PlanarPoint;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthKind {
    /// The user never moves.
    Static,
    /// Gaussian steps with mean length `step_sigma` meters.
    RandomWalk { step_sigma: f64 },
    /// Independent uniform points in a square of side `side` meters.
    Uniform { side: f64 },
}

impl SynthKind {
    pub fn label(&self) -> String {
        match self {
            SynthKind::Static => "static".into(),
            SynthKind::RandomWalk { step_sigma } => format!("walk{step_sigma}"),
            SynthKind::Uniform { side } => format!("uniform{side}"),
        }
    }
}

/// `n` queries `dt` seconds apart, starting at the origin at t = 0.
pub fn synth_trace(kind: SynthKind, n: usize, dt: f64, rng: &mut SimRng) -> Result<QueryTrace> {
    if n == 0 {
        return Err(invalid_param("a synthetic trace needs at least one point"));
    }
    let points: Vec<PlanarPoint> = match kind {
        SynthKind::Static => vec![PlanarPoint::ORIGIN; n],
        SynthKind::RandomWalk { step_sigma } => {
            // E|N(0, s²I₂)| = s·√(π/2)
            let axis = step_sigma / (std::f64::consts::PI / 2.0).sqrt();
            let normal = Normal::new(0.0, axis).map_err(|e| invalid_param(e.to_string()))?;
            let mut cur = PlanarPoint::ORIGIN;
            let mut pts = Vec::with_capacity(n);
            pts.push(cur);
            for _ in 1..n {
                cur = PlanarPoint::new(cur.x + normal.sample(rng), cur.y + normal.sample(rng));
                pts.push(cur);
            }
            pts
        }
        SynthKind::Uniform { side } => {
            if !(side > 0.0 && side.is_finite()) {
                return Err(invalid_param("box side must be positive"));
            }
            (0..n)
                .map(|_| PlanarPoint::new(rng.random::<f64>() * side, rng.random::<f64>() * side))
                .collect()
        }
    };
    Ok(QueryTrace {
        user_id: kind.label(),
        prior_p: 0.0,
        sample_index: 0,
        points: points
            .into_iter()
            .enumerate()
            .map(|(i, p)| Query::new(p, i as f64 * dt))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::step_sigma;
    use crate::rng::seeded;

    #[test]
    fn static_trace_has_zero_step() {
        let tr = synth_trace(SynthKind::Static, 30, 60.0, &mut seeded(1)).unwrap();
        assert_eq!(tr.len(), 30);
        assert_eq!(step_sigma(&tr.positions()).unwrap(), 0.0);
        assert_eq!(tr.points[29].t, 29.0 * 60.0);
    }

    #[test]
    fn random_walk_step_matches_target() {
        let tr = synth_trace(
            SynthKind::RandomWalk { step_sigma: 50.0 },
            1000,
            60.0,
            &mut seeded(2),
        )
        .unwrap();
        let s = step_sigma(&tr.positions()).unwrap();
        assert!((s / 50.0 - 1.0).abs() <= 0.05, "{s}");
    }

    #[test]
    fn uniform_step_matches_square_mean_distance() {
        // Mean distance between two uniform points in a unit square.
        const MEAN_UNIT: f64 = 0.521_405_433_164_720_7;
        let side = 50_000.0;
        let tr = synth_trace(SynthKind::Uniform { side }, 1000, 60.0, &mut seeded(3)).unwrap();
        let s = step_sigma(&tr.positions()).unwrap();
        assert!((s / (MEAN_UNIT * side) - 1.0).abs() <= 0.02, "{s}");
    }

    #[test]
    fn zero_length_rejected() {
        assert!(synth_trace(SynthKind::Static, 0, 1.0, &mut seeded(1)).is_err());
    }
}
