//! The predictive mechanism.
//!
//! At every query a budget manager emits `(ε_θ, ε_N, l)`, a prediction
//! function guesses the next reported point from the public run, and a
//! Laplace-noised threshold test decides privately whether the guess is
//! close enough to the secret. An accepted guess is reported for the cost of
//! the test alone; a rejected one is replaced by fresh planar Laplace noise.
//!
//! Infinite thresholds encode the skip conventions: `l = +∞` always accepts
//! the prediction and `l = −∞` always falls back to noise, both with
//! `ε_θ = 0`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::noise::{linear_laplace_cdf, linear_laplace_sample, planar_laplace_sample, PlanarPoint};
use crate::rng::SimRng;

/// Whether a step reported the prediction (easy) or fresh noise (hard).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Easy,
    Hard,
}

impl Outcome {
    /// The public boolean `b`: 0 for easy, 1 for hard.
    pub fn bit(self) -> u8 {
        match self {
            Outcome::Easy => 0,
            Outcome::Hard => 1,
        }
    }

    pub fn is_hard(self) -> bool {
        self == Outcome::Hard
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Skip {
    None,
    ForcedEasy,
    ForcedHard,
}

impl Skip {
    pub fn as_str(self) -> &'static str {
        match self {
            Skip::None => "none",
            Skip::ForcedEasy => "forced_easy",
            Skip::ForcedHard => "forced_hard",
        }
    }

    fn parse(s: &str) -> Option<Skip> {
        match s {
            "none" => Some(Skip::None),
            "forced_easy" => Some(Skip::ForcedEasy),
            "forced_hard" => Some(Skip::ForcedHard),
            _ => None,
        }
    }
}

/// A secret location together with the (public) time it is queried at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub point: PlanarPoint,
    pub t: f64,
}

impl Query {
    pub fn new(point: PlanarPoint, t: f64) -> Self {
        Query { point, t }
    }
}

/// Wraps an untimed trace, using the index as the query time.
pub fn untimed(points: &[PlanarPoint]) -> Vec<Query> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| Query::new(*p, i as f64))
        .collect()
}

/// One element of a run with the budget it actually consumed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportedStep {
    pub z: PlanarPoint,
    pub outcome: Outcome,
    pub spent_test: f64,
    pub spent_noise: f64,
    pub skipped: Skip,
    pub t: f64,
}

impl ReportedStep {
    pub fn spend(&self) -> f64 {
        self.spent_test + self.spent_noise
    }

    pub fn is_hard(&self) -> bool {
        self.outcome.is_hard()
    }
}

/// The public output of the mechanism.
///
/// Steps are stored oldest first; [`Run::head`] is the most recent step,
/// matching the cons-list view `(z, b) :: r`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Run {
    steps: Vec<ReportedStep>,
    /// Time of the first query refused for lack of budget.
    exhausted_at: Option<f64>,
}

impl Run {
    pub fn new() -> Self {
        Run::default()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Most recent step.
    pub fn head(&self) -> Option<&ReportedStep> {
        self.steps.last()
    }

    /// The run without its most recent step.
    pub fn tail(&self) -> Run {
        let mut steps = self.steps.clone();
        steps.pop();
        Run {
            steps,
            exhausted_at: None,
        }
    }

    /// Steps in chronological order.
    pub fn steps(&self) -> &[ReportedStep] {
        &self.steps
    }

    /// Steps most recent first.
    pub fn iter_head_first(&self) -> impl Iterator<Item = &ReportedStep> {
        self.steps.iter().rev()
    }

    pub fn reported(&self) -> Vec<PlanarPoint> {
        self.steps.iter().map(|s| s.z).collect()
    }

    pub fn is_exhausted(&self) -> bool {
        self.exhausted_at.is_some()
    }

    pub fn exhausted_at(&self) -> Option<f64> {
        self.exhausted_at
    }

    pub fn hard_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.is_hard()).count()
    }

    pub fn easy_steps(&self) -> usize {
        self.len() - self.hard_steps()
    }

    pub fn count_skipped(&self, kind: Skip) -> usize {
        self.steps.iter().filter(|s| s.skipped == kind).count()
    }

    pub fn total_spend(&self) -> f64 {
        total_spend(self)
    }

    pub(crate) fn push(&mut self, step: ReportedStep) {
        self.steps.push(step);
    }

    pub(crate) fn mark_exhausted(&mut self, t: f64) {
        self.exhausted_at = Some(t);
    }

    /// Writes `step_index,t,z_x,z_y,b,spent_test,spent_noise,skipped` rows in
    /// chronological order, followed by an `exhausted` marker row when the run
    /// was cut short.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(RUN_HEADER)?;
        for (i, s) in self.steps.iter().enumerate() {
            w.write_record([
                i.to_string(),
                s.t.to_string(),
                s.z.x.to_string(),
                s.z.y.to_string(),
                s.outcome.bit().to_string(),
                s.spent_test.to_string(),
                s.spent_noise.to_string(),
                s.skipped.as_str().to_string(),
            ])?;
        }
        if let Some(t) = self.exhausted_at {
            w.write_record([
                self.steps.len().to_string(),
                t.to_string(),
                String::new(),
                String::new(),
                EXHAUSTED_MARKER.to_string(),
                "0".to_string(),
                "0".to_string(),
                Skip::None.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Run> {
        let mut r = csv::Reader::from_reader(input);
        let mut run = Run::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = line + 2;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| -> Result<f64> {
                field(i).parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    msg: format!("column {}: {e}", RUN_HEADER[i]),
                })
            };
            if field(4) == EXHAUSTED_MARKER {
                run.exhausted_at = Some(num(1)?);
                continue;
            }
            let outcome = match field(4) {
                "0" => Outcome::Easy,
                "1" => Outcome::Hard,
                other => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("bad flag {other:?}"),
                    })
                }
            };
            let skipped = Skip::parse(field(7)).ok_or_else(|| Error::Parse {
                line,
                msg: format!("bad skip {:?}", field(7)),
            })?;
            run.steps.push(ReportedStep {
                t: num(1)?,
                z: PlanarPoint::new(num(2)?, num(3)?),
                outcome,
                spent_test: num(5)?,
                spent_noise: num(6)?,
                skipped,
            });
        }
        Ok(run)
    }
}

pub const RUN_HEADER: [&str; 8] = [
    "step_index",
    "t",
    "z_x",
    "z_y",
    "b",
    "spent_test",
    "spent_noise",
    "skipped",
];
pub const EXHAUSTED_MARKER: &str = "exhausted";

/// Sum of the budget actually spent by every step of `run`.
pub fn total_spend(run: &Run) -> f64 {
    run.steps.iter().map(ReportedStep::spend).sum()
}

/// `β(r) = (ε_θ, ε_N, l)` for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetDecision {
    pub eps_theta: f64,
    pub eps_n: f64,
    pub threshold: f64,
}

impl BudgetDecision {
    pub fn tested(eps_theta: f64, eps_n: f64, threshold: f64) -> Result<Self> {
        let d = BudgetDecision {
            eps_theta,
            eps_n,
            threshold,
        };
        d.validate()?;
        Ok(d)
    }

    /// `(0, 0, +∞)`: report the prediction without testing.
    pub fn forced_easy() -> Self {
        BudgetDecision {
            eps_theta: 0.0,
            eps_n: 0.0,
            threshold: f64::INFINITY,
        }
    }

    /// `(0, ε_N, −∞)`: report fresh noise without testing.
    pub fn forced_hard(eps_n: f64) -> Self {
        BudgetDecision {
            eps_theta: 0.0,
            eps_n,
            threshold: f64::NEG_INFINITY,
        }
    }

    pub fn skip(&self) -> Skip {
        if self.threshold == f64::INFINITY {
            Skip::ForcedEasy
        } else if self.threshold == f64::NEG_INFINITY {
            Skip::ForcedHard
        } else {
            Skip::None
        }
    }

    pub fn validate(&self) -> Result<()> {
        let Self {
            eps_theta,
            eps_n,
            threshold,
        } = *self;
        if threshold.is_nan() || eps_theta.is_nan() || eps_n.is_nan() {
            return Err(invalid_param("decision contains NaN"));
        }
        match self.skip() {
            Skip::ForcedEasy => {
                if eps_theta != 0.0 {
                    return Err(invalid_param("l = +inf requires eps_theta = 0"));
                }
                if eps_n < 0.0 {
                    return Err(invalid_param("eps_n must be non-negative"));
                }
            }
            Skip::ForcedHard => {
                if eps_theta != 0.0 {
                    return Err(invalid_param("l = -inf requires eps_theta = 0"));
                }
                if !(eps_n > 0.0 && eps_n.is_finite()) {
                    return Err(invalid_param(
                        "forced hard step needs a positive finite eps_n",
                    ));
                }
            }
            Skip::None => {
                if !(eps_theta > 0.0 && eps_theta.is_finite()) {
                    return Err(invalid_param(
                        "a finite threshold requires a positive eps_theta",
                    ));
                }
                if threshold < 0.0 {
                    return Err(invalid_param("threshold must be non-negative"));
                }
                if !(eps_n > 0.0 && eps_n.is_finite()) {
                    return Err(invalid_param("tested step needs a positive finite eps_n"));
                }
            }
        }
        Ok(())
    }
}

/// Closed-form `P[easy]` of the threshold test at secret-to-prediction
/// distance `d`: `F_Lap(l − d)`.
pub fn easy_probability(eps_theta: f64, threshold: f64, d: f64) -> f64 {
    if threshold == f64::INFINITY {
        1.0
    } else if threshold == f64::NEG_INFINITY {
        0.0
    } else {
        linear_laplace_cdf(eps_theta, threshold - d)
    }
}

/// The private threshold test: easy iff `d(x, z̃) ≤ l + Lap(ε_θ)`.
pub fn test_mechanism(
    decision: &BudgetDecision,
    z_pred: PlanarPoint,
    x_secret: PlanarPoint,
    rng: &mut SimRng,
) -> Result<Outcome> {
    decision.validate()?;
    match decision.skip() {
        Skip::ForcedEasy => Ok(Outcome::Easy),
        Skip::ForcedHard => Ok(Outcome::Hard),
        Skip::None => {
            let d = crate::noise::euclid(x_secret, z_pred);
            let noisy = decision.threshold + linear_laplace_sample(decision.eps_theta, rng)?;
            Ok(if d <= noisy {
                Outcome::Easy
            } else {
                Outcome::Hard
            })
        }
    }
}

/// A deterministic function of the public run.
pub trait Predictor {
    fn predict(&self, run: &Run) -> Result<PlanarPoint>;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn predict(&self, run: &Run) -> Result<PlanarPoint> {
        (**self).predict(run)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn predict(&self, run: &Run) -> Result<PlanarPoint> {
        (**self).predict(run)
    }
}

/// Repeats the most recently reported point.
#[derive(Debug, Clone, Copy, Default)]
pub struct Parrot;

impl Predictor for Parrot {
    fn predict(&self, run: &Run) -> Result<PlanarPoint> {
        parrot_predict(run)
    }
}

/// Always predicts the same point.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPredictor(pub PlanarPoint);

impl Predictor for ConstantPredictor {
    fn predict(&self, _run: &Run) -> Result<PlanarPoint> {
        Ok(self.0)
    }
}

pub fn parrot_predict(run: &Run) -> Result<PlanarPoint> {
    run.head().map(|s| s.z).ok_or(Error::NoPrediction)
}

/// A per-step budget policy.
pub trait BudgetManager {
    /// The configuration for the next query, or `None` to stop.
    fn decide(&mut self, run: &Run, query: &Query) -> Option<BudgetDecision>;

    /// Called with every step the mechanism reports.
    fn observe(&mut self, _step: &ReportedStep) {}
}

impl<M: BudgetManager + ?Sized> BudgetManager for &mut M {
    fn decide(&mut self, run: &Run, query: &Query) -> Option<BudgetDecision> {
        (**self).decide(run, query)
    }

    fn observe(&mut self, step: &ReportedStep) {
        (**self).observe(step)
    }
}

impl<M: BudgetManager + ?Sized> BudgetManager for Box<M> {
    fn decide(&mut self, run: &Run, query: &Query) -> Option<BudgetDecision> {
        (**self).decide(run, query)
    }

    fn observe(&mut self, step: &ReportedStep) {
        (**self).observe(step)
    }
}

/// Runs one step against the current run without extending it.
///
/// Returns [`Error::BudgetExhausted`] when the manager stops.
pub fn step<M, P>(
    run: &Run,
    query: &Query,
    manager: &mut M,
    predictor: &P,
    rng: &mut SimRng,
) -> Result<ReportedStep>
where
    M: BudgetManager + ?Sized,
    P: Predictor + ?Sized,
{
    let decision = manager.decide(run, query).ok_or(Error::BudgetExhausted)?;
    decision.validate()?;
    let skipped = decision.skip();

    // A forced-hard step never looks at the prediction, so it is also the
    // only way to answer the first query of a parrot run.
    let outcome = match skipped {
        Skip::ForcedHard => Outcome::Hard,
        _ => {
            let z_pred = predictor.predict(run)?;
            match test_mechanism(&decision, z_pred, query.point, rng)? {
                Outcome::Easy => {
                    return Ok(ReportedStep {
                        z: z_pred,
                        outcome: Outcome::Easy,
                        spent_test: decision.eps_theta,
                        spent_noise: 0.0,
                        skipped,
                        t: query.t,
                    })
                }
                Outcome::Hard => Outcome::Hard,
            }
        }
    };
    debug_assert!(outcome.is_hard());
    let z = planar_laplace_sample(decision.eps_n, query.point, rng)?;
    Ok(ReportedStep {
        z,
        outcome,
        spent_test: decision.eps_theta,
        spent_noise: decision.eps_n,
        skipped,
        t: query.t,
    })
}

/// Online predictive mechanism: owns the run, the manager and the RNG stream.
pub struct PredictiveMechanism<M, P> {
    run: Run,
    manager: M,
    predictor: P,
    rng: SimRng,
}

impl<M: BudgetManager, P: Predictor> PredictiveMechanism<M, P> {
    pub fn new(manager: M, predictor: P, rng: SimRng) -> Self {
        PredictiveMechanism {
            run: Run::new(),
            manager,
            predictor,
            rng,
        }
    }

    /// Sanitizes one query. After the budget is exhausted every call returns
    /// [`Error::BudgetExhausted`].
    pub fn report(&mut self, query: &Query) -> Result<ReportedStep> {
        if self.run.is_exhausted() {
            return Err(Error::BudgetExhausted);
        }
        if let Some(last) = self.run.head() {
            if query.t < last.t {
                return Err(invalid_input("query times must be non-decreasing"));
            }
        }
        match step(
            &self.run,
            query,
            &mut self.manager,
            &self.predictor,
            &mut self.rng,
        ) {
            Ok(s) => {
                self.manager.observe(&s);
                self.run.push(s);
                Ok(s)
            }
            Err(Error::BudgetExhausted) => {
                self.run.mark_exhausted(query.t);
                Err(Error::BudgetExhausted)
            }
            Err(e) => Err(e),
        }
    }

    pub fn run(&self) -> &Run {
        &self.run
    }

    pub fn manager(&self) -> &M {
        &self.manager
    }

    pub fn into_run(self) -> Run {
        self.run
    }
}

/// Folds [`step`] over the trace. Stops early, marking the run exhausted,
/// when the manager signals STOP.
pub fn predictive_mechanism<M, P>(
    trace: &[Query],
    manager: M,
    predictor: P,
    rng: SimRng,
) -> Result<Run>
where
    M: BudgetManager,
    P: Predictor,
{
    let mut pm = PredictiveMechanism::new(manager, predictor, rng);
    for q in trace {
        match pm.report(q) {
            Ok(_) => {}
            Err(Error::BudgetExhausted) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(pm.into_run())
}

/// Planar Laplace noise applied independently to every point.
pub fn independent_mechanism(
    trace: &[PlanarPoint],
    eps_n: f64,
    rng: &mut SimRng,
) -> Result<Vec<PlanarPoint>> {
    if !(eps_n > 0.0 && eps_n.is_finite()) {
        return Err(invalid_param(format!(
            "eps_n must be positive, got {eps_n}"
        )));
    }
    trace
        .iter()
        .map(|x| planar_laplace_sample(eps_n, *x, rng))
        .collect()
}

/// Number of queries the independent mechanism answers with `eps_total`.
///
/// Quotients within 1e-9 of an integer are rounded so that e.g. `ε_N = ε/30`
/// yields exactly 30.
pub fn independent_capacity(eps_total: f64, eps_n: f64) -> usize {
    let q = eps_total / eps_n;
    if !q.is_finite() || q <= 0.0 {
        return 0;
    }
    let r = q.round();
    if (q - r).abs() <= 1e-9 * q.max(1.0) {
        r as usize
    } else {
        q.floor() as usize
    }
}

/// The independent mechanism as a run of hard steps, truncated to the
/// budget's capacity when `eps_total` is given.
pub fn independent_run(
    trace: &[Query],
    eps_n: f64,
    eps_total: Option<f64>,
    rng: &mut SimRng,
) -> Result<Run> {
    let cap = eps_total.map_or(trace.len(), |e| independent_capacity(e, eps_n));
    let points: Vec<PlanarPoint> = trace.iter().take(cap).map(|q| q.point).collect();
    let noisy = independent_mechanism(&points, eps_n, rng)?;
    let mut run = Run::new();
    for (q, z) in trace.iter().zip(noisy) {
        run.push(ReportedStep {
            z,
            outcome: Outcome::Hard,
            spent_test: 0.0,
            spent_noise: eps_n,
            skipped: Skip::None,
            t: q.t,
        });
    }
    if cap < trace.len() {
        run.mark_exhausted(trace[cap].t);
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::euclid;
    use crate::rng::seeded;

    struct Fixed(Vec<BudgetDecision>, usize);

    impl BudgetManager for Fixed {
        fn decide(&mut self, _run: &Run, _q: &Query) -> Option<BudgetDecision> {
            let d = self
                .0
                .get(self.1.min(self.0.len().saturating_sub(1)))
                .copied();
            self.1 += 1;
            d
        }
    }

    fn step_with(
        decision: BudgetDecision,
        run: &Run,
        x: PlanarPoint,
        seed: u64,
    ) -> Result<ReportedStep> {
        let mut m = Fixed(vec![decision], 0);
        step(run, &Query::new(x, 0.0), &mut m, &Parrot, &mut seeded(seed))
    }

    fn one_step_run(z: PlanarPoint, outcome: Outcome) -> Run {
        let mut r = Run::new();
        r.push(ReportedStep {
            z,
            outcome,
            spent_test: 0.0,
            spent_noise: 0.0,
            skipped: Skip::None,
            t: 0.0,
        });
        r
    }

    #[test]
    fn skip_conventions_of_the_test() {
        let mut rng = seeded(3);
        let far = PlanarPoint::new(1e9, 0.0);
        for _ in 0..100 {
            let easy = test_mechanism(
                &BudgetDecision::forced_easy(),
                far,
                PlanarPoint::ORIGIN,
                &mut rng,
            );
            assert_eq!(easy.unwrap(), Outcome::Easy);
            let hard = test_mechanism(
                &BudgetDecision::forced_hard(1.0),
                PlanarPoint::ORIGIN,
                PlanarPoint::ORIGIN,
                &mut rng,
            );
            assert_eq!(hard.unwrap(), Outcome::Hard);
        }
    }

    #[test]
    fn test_acceptance_matches_closed_form() {
        let d = BudgetDecision::tested(1.0, 1.0, std::f64::consts::LN_2).unwrap();
        let mut rng = seeded(5);
        let n = 100_000;
        let easy = (0..n)
            .filter(|_| {
                test_mechanism(&d, PlanarPoint::ORIGIN, PlanarPoint::ORIGIN, &mut rng).unwrap()
                    == Outcome::Easy
            })
            .count() as f64
            / n as f64;
        let expected = 1.0 - 0.5 * (-std::f64::consts::LN_2).exp();
        assert_eq!(expected, easy_probability(1.0, std::f64::consts::LN_2, 0.0));
        assert!((easy - 0.75).abs() <= 0.01, "{easy}");
    }

    #[test]
    fn decision_invariants() {
        assert!(BudgetDecision::tested(0.0, 1.0, 5.0).is_err());
        assert!(BudgetDecision::tested(1.0, 1.0, -1.0).is_err());
        assert!(BudgetDecision::tested(1.0, 0.0, 1.0).is_err());
        assert!(BudgetDecision {
            eps_theta: 1.0,
            eps_n: 1.0,
            threshold: f64::INFINITY
        }
        .validate()
        .is_err());
        assert!(BudgetDecision::forced_hard(0.0).validate().is_err());
        assert!(BudgetDecision::forced_easy().validate().is_ok());
        assert_eq!(BudgetDecision::forced_easy().skip(), Skip::ForcedEasy);
        assert_eq!(BudgetDecision::forced_hard(2.0).skip(), Skip::ForcedHard);
    }

    #[test]
    fn parrot_returns_head_regardless_of_flag() {
        let z1 = PlanarPoint::new(1.0, 2.0);
        let z2 = PlanarPoint::new(3.0, 4.0);
        let mut run = one_step_run(z1, Outcome::Hard);
        assert_eq!(parrot_predict(&run).unwrap(), z1);
        run.push(ReportedStep {
            z: z2,
            outcome: Outcome::Easy,
            spent_test: 0.0,
            spent_noise: 0.0,
            skipped: Skip::None,
            t: 1.0,
        });
        assert_eq!(parrot_predict(&run).unwrap(), z2);
        assert!(matches!(
            parrot_predict(&Run::new()),
            Err(Error::NoPrediction)
        ));
    }

    #[test]
    fn step_forced_easy_reports_prediction_for_free() {
        let z = PlanarPoint::new(10.0, 10.0);
        let run = one_step_run(z, Outcome::Hard);
        let s = step_with(
            BudgetDecision::forced_easy(),
            &run,
            PlanarPoint::new(5e6, 0.0),
            1,
        )
        .unwrap();
        assert_eq!(s.z, z);
        assert_eq!(s.outcome, Outcome::Easy);
        assert_eq!((s.spent_test, s.spent_noise), (0.0, 0.0));
        assert_eq!(s.skipped, Skip::ForcedEasy);
    }

    #[test]
    fn step_forced_hard_spends_only_noise() {
        let e = std::f64::consts::E;
        let s = step_with(
            BudgetDecision::forced_hard(e),
            &Run::new(),
            PlanarPoint::ORIGIN,
            1,
        )
        .unwrap();
        assert_eq!(s.outcome, Outcome::Hard);
        assert_eq!((s.spent_test, s.spent_noise), (0.0, e));
        assert_eq!(s.skipped, Skip::ForcedHard);
    }

    #[test]
    fn step_needs_prediction_for_tests() {
        let d = BudgetDecision::tested(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            step_with(d, &Run::new(), PlanarPoint::ORIGIN, 1),
            Err(Error::NoPrediction)
        ));
    }

    #[test]
    fn step_stop_is_budget_exhausted() {
        let mut m = Fixed(vec![], 0);
        let r = step(
            &Run::new(),
            &Query::new(PlanarPoint::ORIGIN, 0.0),
            &mut m,
            &Parrot,
            &mut seeded(1),
        );
        assert!(matches!(r, Err(Error::BudgetExhausted)));
    }

    #[test]
    fn step_acceptance_rate_at_exact_prediction() {
        let x = PlanarPoint::new(7.0, -3.0);
        let run = one_step_run(x, Outcome::Hard);
        let (eps_theta, l) = (0.01, 150.0);
        let d = BudgetDecision::tested(eps_theta, 0.01, l).unwrap();
        let mut m = Fixed(vec![d], 0);
        let mut rng = seeded(9);
        let n = 50_000;
        let mut easy = 0;
        for _ in 0..n {
            let s = step(&run, &Query::new(x, 1.0), &mut m, &Parrot, &mut rng).unwrap();
            if s.outcome == Outcome::Easy {
                easy += 1;
                assert_eq!(s.spend(), eps_theta);
            } else {
                assert_eq!(s.spend(), eps_theta + 0.01);
            }
        }
        let p = 1.0 - 0.5 * (-eps_theta * l).exp();
        assert!((easy as f64 / n as f64 - p).abs() < 0.01);
    }

    #[test]
    fn pm_single_forced_hard_step() {
        let m = Fixed(vec![BudgetDecision::forced_hard(0.5)], 0);
        let run =
            predictive_mechanism(&untimed(&[PlanarPoint::ORIGIN]), m, Parrot, seeded(4)).unwrap();
        assert_eq!(run.len(), 1);
        assert!(run.head().unwrap().is_hard());
        assert_eq!(run.total_spend(), 0.5);
        assert!(!run.is_exhausted());
    }

    #[test]
    fn pm_stops_and_marks_exhaustion() {
        let m = Fixed(vec![BudgetDecision::forced_hard(0.5)], 0);
        struct Capped<M>(M, usize);
        impl<M: BudgetManager> BudgetManager for Capped<M> {
            fn decide(&mut self, run: &Run, q: &Query) -> Option<BudgetDecision> {
                if run.len() >= self.1 {
                    None
                } else {
                    self.0.decide(run, q)
                }
            }
        }
        let trace = untimed(&[PlanarPoint::ORIGIN; 5]);
        let run = predictive_mechanism(&trace, Capped(m, 3), Parrot, seeded(4)).unwrap();
        assert_eq!(run.len(), 3);
        assert_eq!(run.exhausted_at(), Some(3.0));
    }

    #[test]
    fn im_spend_composes_linearly() {
        let mut rng = seeded(2);
        assert!(independent_mechanism(&[], 1.0, &mut rng)
            .unwrap()
            .is_empty());
        let eps = std::f64::consts::LN_10 / 100.0;
        let trace = untimed(&vec![PlanarPoint::ORIGIN; 30]);
        let run = independent_run(&trace, eps / 30.0, Some(eps), &mut rng).unwrap();
        assert_eq!(run.len(), 30);
        assert!(!run.is_exhausted());
        assert!((run.total_spend() - eps).abs() <= 1e-15);
        assert!(independent_mechanism(&[PlanarPoint::ORIGIN], 0.0, &mut rng).is_err());
    }

    #[test]
    fn im_capacity() {
        let eps = std::f64::consts::LN_10 / 100.0;
        assert_eq!(independent_capacity(eps, eps / 30.0), 30);
        assert_eq!(
            independent_capacity(eps, 3.889_720_169_867_429 / 3000.0),
            17
        );
        assert_eq!(independent_capacity(1.0, 2.0), 0);
    }

    #[test]
    fn im_quantile_matches_icpl() {
        let eps_n = 0.01;
        let mut rng = seeded(21);
        let n = 100_000;
        let pts = vec![PlanarPoint::ORIGIN; n];
        let out = independent_mechanism(&pts, eps_n, &mut rng).unwrap();
        let mut errs: Vec<f64> = out
            .iter()
            .map(|z| euclid(*z, PlanarPoint::ORIGIN))
            .collect();
        errs.sort_by(f64::total_cmp);
        let q90 = errs[(0.9 * n as f64).ceil() as usize - 1];
        let expect = crate::noise::icpl(eps_n, 0.9).unwrap();
        assert!((q90 / expect - 1.0).abs() <= 0.02, "{q90} vs {expect}");
    }

    #[test]
    fn total_spend_examples() {
        assert_eq!(total_spend(&Run::new()), 0.0);
        let (a, c) = (0.25, 1.5);
        let mut run = Run::new();
        run.push(ReportedStep {
            z: PlanarPoint::ORIGIN,
            outcome: Outcome::Hard,
            spent_test: a,
            spent_noise: c,
            skipped: Skip::None,
            t: 0.0,
        });
        assert_eq!(total_spend(&run.tail()), 0.0);
        run.push(ReportedStep {
            z: PlanarPoint::ORIGIN,
            outcome: Outcome::Easy,
            spent_test: a,
            spent_noise: 0.0,
            skipped: Skip::None,
            t: 1.0,
        });
        assert_eq!(total_spend(&run), 2.0 * a + c);
        assert_eq!(total_spend(&run.tail()), a + c);
    }

    #[test]
    fn run_csv_layout() {
        let mut run = one_step_run(PlanarPoint::new(1.5, -2.0), Outcome::Hard);
        run.mark_exhausted(9.0);
        let mut buf = Vec::new();
        run.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "step_index,t,z_x,z_y,b,spent_test,spent_noise,skipped"
        );
        assert_eq!(lines[1], "0,0,1.5,-2,1,0,0,none");
        assert_eq!(lines[2], "1,9,,,exhausted,0,0,none");
        assert_eq!(Run::read_csv(text.as_bytes()).unwrap(), run);
    }
}
