//! Error, accuracy and rate measures over traces and runs.

use crate::error::{invalid_input, invalid_param, Result};
use crate::mechanism::Run;
use crate::noise::{euclid, PlanarPoint};

/// Mean pointwise Euclidean distance between two equally long traces.
pub fn trace_error(x: &[PlanarPoint], z: &[PlanarPoint]) -> Result<f64> {
    if x.len() != z.len() {
        return Err(invalid_input(format!(
            "trace lengths differ: {} vs {}",
            x.len(),
            z.len()
        )));
    }
    if x.is_empty() {
        return Err(invalid_input("trace_error needs at least one point"));
    }
    let sum: f64 = x.iter().zip(z).map(|(a, b)| euclid(*a, *b)).sum();
    Ok(sum / x.len() as f64)
}

/// Pointwise distances between the secret points and the reported ones.
pub fn pointwise_errors(x: &[PlanarPoint], z: &[PlanarPoint]) -> Vec<f64> {
    x.iter().zip(z).map(|(a, b)| euclid(*a, *b)).collect()
}

/// Smallest sample value `a` with `fraction(errors ≤ a) ≥ delta`, i.e. the
/// `⌈δ·n⌉`-th order statistic.
pub fn alpha_accuracy(errors: &[f64], delta: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(invalid_input("alpha_accuracy needs at least one error"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(invalid_param(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Guard against δ·n landing a hair above an integer.
    let raw = delta * n as f64;
    let k = if (raw - raw.round()).abs() < 1e-9 {
        raw.round()
    } else {
        raw.ceil()
    } as usize;
    Ok(sorted[k.clamp(1, n) - 1])
}

/// Budget spent per reported step.
pub fn run_rate(run: &Run) -> Result<f64> {
    if run.is_empty() {
        return Err(invalid_input("run_rate needs a non-empty run"));
    }
    Ok(run.total_spend() / run.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::{independent_run, untimed, Outcome, ReportedStep, Skip};
    use crate::rng::seeded;

    fn p(x: f64, y: f64) -> PlanarPoint {
        PlanarPoint::new(x, y)
    }

    #[test]
    fn trace_error_examples() {
        let a = [p(0.0, 0.0), p(1.0, 1.0)];
        assert_eq!(trace_error(&a, &a).unwrap(), 0.0);
        let x = [p(0.0, 0.0), p(0.0, 0.0)];
        let z = [p(3.0, 0.0), p(0.0, 5.0)];
        assert_eq!(trace_error(&x, &z).unwrap(), 4.0);
        assert_eq!(trace_error(&[p(0.0, 0.0)], &[p(0.0, 7.0)]).unwrap(), 7.0);
        assert!(trace_error(&x, &z[..1]).is_err());
        assert!(trace_error(&[], &[]).is_err());
    }

    #[test]
    fn alpha_accuracy_examples() {
        let e: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(alpha_accuracy(&e, 0.9).unwrap(), 9.0);
        assert_eq!(alpha_accuracy(&[2.5; 7], 0.9).unwrap(), 2.5);
        assert_eq!(alpha_accuracy(&e, 1.0).unwrap(), 10.0);
        assert!(alpha_accuracy(&[], 0.9).is_err());
    }

    #[test]
    fn run_rate_examples() {
        let trace = untimed(&[PlanarPoint::ORIGIN; 12]);
        let run = independent_run(&trace, 0.01, None, &mut seeded(3)).unwrap();
        assert!((run_rate(&run).unwrap() - 0.01).abs() < 1e-15);

        let mut easy = Run::new();
        let mut skipped = Run::new();
        for i in 0..4 {
            let s = ReportedStep {
                z: PlanarPoint::ORIGIN,
                outcome: Outcome::Easy,
                spent_test: 0.002,
                spent_noise: 0.0,
                skipped: Skip::None,
                t: i as f64,
            };
            easy.push(s);
            skipped.push(ReportedStep {
                spent_test: 0.0,
                skipped: Skip::ForcedEasy,
                ..s
            });
        }
        assert!((run_rate(&easy).unwrap() - 0.002).abs() < 1e-15);
        assert_eq!(run_rate(&skipped).unwrap(), 0.0);
        assert!(run_rate(&Run::new()).is_err());
    }
}
