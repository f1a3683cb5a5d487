//! Analytic and simulated checks of the privacy, budget and utility
//! guarantees.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use super::experiment::ExperimentConfig;
use super::metrics::{alpha_accuracy, pointwise_errors};
use crate::budget::{
    fixed_rate_decide, fixed_utility_decide, Manager, ManagerConfig, ManagerState, Mode, SkipPolicy,
};
use crate::error::{invalid_param, Error, Result};
use crate::mechanism::{
    predictive_mechanism, untimed, BudgetDecision, BudgetManager, ConstantPredictor, Parrot, Query,
    ReportedStep, Run,
};
use crate::noise::PlanarPoint;
use crate::rng::{derive, SimRng};
use crate::traces::{synth_trace, QueryTrace, SynthKind};

/// Largest violation the privacy check tolerates.
pub const PRIVACY_TOLERANCE: f64 = 1e-9;

/// `ln P[easy]` at secret-to-prediction distance `d`, computed without
/// cancellation.
pub fn ln_easy_probability(eps_theta: f64, threshold: f64, d: f64) -> f64 {
    let t = threshold - d;
    if t < 0.0 {
        0.5f64.ln() + eps_theta * t
    } else {
        (-0.5 * (-eps_theta * t).exp()).ln_1p()
    }
}

/// `ln P[hard]` at distance `d`.
pub fn ln_hard_probability(eps_theta: f64, threshold: f64, d: f64) -> f64 {
    let t = threshold - d;
    if t < 0.0 {
        (-0.5 * (eps_theta * t).exp()).ln_1p()
    } else {
        0.5f64.ln() - eps_theta * t
    }
}

/// Largest `|ln P[b|d] − ln P[b|d']| − ε_θ·|d − d'|` over both outcomes and
/// all grid pairs `d, d' ∈ {0, step, 2·step, …} ∩ [0, extent]`.
pub fn verify_test_privacy(eps_theta: f64, threshold: f64, extent: f64, step: f64) -> Result<f64> {
    if !threshold.is_finite() {
        return Err(invalid_param("the privacy grid needs a finite threshold"));
    }
    if !(eps_theta > 0.0 && eps_theta.is_finite()) {
        return Err(invalid_param("eps_theta must be positive"));
    }
    if !(step > 0.0 && extent >= 0.0 && extent.is_finite()) {
        return Err(invalid_param(
            "grid needs a positive step and a finite extent",
        ));
    }
    let n = (extent / step + 1e-9).floor() as usize + 1;
    let d: Vec<f64> = (0..n).map(|i| i as f64 * step).collect();
    let easy: Vec<f64> = d
        .iter()
        .map(|&x| ln_easy_probability(eps_theta, threshold, x))
        .collect();
    let hard: Vec<f64> = d
        .iter()
        .map(|&x| ln_hard_probability(eps_theta, threshold, x))
        .collect();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        for j in i..n {
            let allowed = eps_theta * (d[j] - d[i]);
            let v = ((easy[i] - easy[j]).abs() - allowed).max((hard[i] - hard[j]).abs() - allowed);
            worst = worst.max(v);
        }
    }
    Ok(worst)
}

/// Wraps a manager and logs every decision that produced a reported step.
#[derive(Debug, Clone)]
pub struct DecisionLog<M> {
    inner: M,
    pending: Option<BudgetDecision>,
    pub decisions: Vec<BudgetDecision>,
}

impl<M> DecisionLog<M> {
    pub fn new(inner: M) -> Self {
        DecisionLog {
            inner,
            pending: None,
            decisions: Vec::new(),
        }
    }
}

impl<M: BudgetManager> BudgetManager for DecisionLog<M> {
    fn decide(&mut self, run: &Run, query: &Query) -> Option<BudgetDecision> {
        self.pending = self.inner.decide(run, query);
        self.pending
    }

    fn observe(&mut self, step: &ReportedStep) {
        if let Some(d) = self.pending.take() {
            self.decisions.push(d);
        }
        self.inner.observe(step);
    }
}

/// The run spend recomputed head-first from logged decisions:
/// `ε(r) = β_θ(r) + b(r)·β_N(r) + ε(tail r)`, `ε([]) = 0`.
pub fn spend_recursion(run: &Run, decisions: &[BudgetDecision]) -> Result<f64> {
    if run.len() != decisions.len() {
        return Err(Error::InvalidInput(format!(
            "{} steps but {} logged decisions",
            run.len(),
            decisions.len()
        )));
    }
    let mut acc = 0.0;
    for (s, d) in run.steps().iter().zip(decisions) {
        acc += d.eps_theta + f64::from(s.outcome.bit()) * d.eps_n;
    }
    Ok(acc)
}

/// A faulty manager that keeps repeating its last decision after STOP.
/// Used to check that the budget suite notices an overflow.
#[derive(Debug, Clone)]
pub struct IgnoresStop<M> {
    inner: M,
    last: Option<BudgetDecision>,
}

impl<M> IgnoresStop<M> {
    pub fn new(inner: M) -> Self {
        IgnoresStop { inner, last: None }
    }
}

impl<M: BudgetManager> BudgetManager for IgnoresStop<M> {
    fn decide(&mut self, run: &Run, query: &Query) -> Option<BudgetDecision> {
        if let Some(d) = self.inner.decide(run, query) {
            self.last = Some(d);
        }
        self.last
    }

    fn observe(&mut self, step: &ReportedStep) {
        self.inner.observe(step);
    }
}

/// Returns the same decision forever, with no budget limit.
#[derive(Debug, Clone, Copy)]
pub struct FixedDecision(pub BudgetDecision);

impl BudgetManager for FixedDecision {
    fn decide(&mut self, _run: &Run, _query: &Query) -> Option<BudgetDecision> {
        Some(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    Privacy,
    Budget,
    Utility,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Privacy, Suite::Budget, Suite::Utility];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Privacy => "privacy",
            Suite::Budget => "budget",
            Suite::Utility => "utility",
        })
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "privacy" => Ok(Suite::Privacy),
            "budget" => Ok(Suite::Budget),
            "utility" => Ok(Suite::Utility),
            other => Err(invalid_param(format!("unknown suite {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyConfig {
    pub experiment: ExperimentConfig,
    pub seed: u64,
    pub budget_traces: usize,
    pub utility_steps: usize,
    /// Run the budget suite with a manager that ignores STOP.
    pub inject_overflow: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            experiment: ExperimentConfig::default(),
            seed: 0,
            budget_traces: 1000,
            utility_steps: 10_000,
            inject_overflow: false,
        }
    }
}

/// The first decision each manager makes from a fresh state, without skips.
pub fn default_decisions(exp: &ExperimentConfig) -> Result<Vec<(&'static str, BudgetDecision)>> {
    let fu = ManagerConfig {
        mode: Mode::FixedUtility { alpha: exp.alpha },
        ..exp.base
    };
    let fr = ManagerConfig {
        mode: Mode::FixedRate { rho: exp.rho },
        ..exp.base
    };
    fu.validate()?;
    fr.validate()?;
    let fresh = ManagerState::default();
    let mut out = Vec::new();
    for (name, d) in [
        ("fixed_utility", fixed_utility_decide(&fu, &fresh)),
        ("fixed_rate", fixed_rate_decide(&fr, &fresh)),
    ] {
        let d = d.ok_or_else(|| invalid_param(format!("{name}: budget too small for one step")))?;
        out.push((name, d));
    }
    Ok(out)
}

pub fn verify_privacy(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let mut passed = true;
    let mut parts = Vec::new();
    for (name, d) in default_decisions(&cfg.experiment)? {
        if !d.threshold.is_finite() {
            parts.push(format!("{name}: untested decision, nothing to check"));
            continue;
        }
        let v = verify_test_privacy(d.eps_theta, d.threshold, 5000.0, 10.0)?;
        passed &= v <= PRIVACY_TOLERANCE;
        parts.push(format!(
            "{name}: eps_theta={} l={} max_violation={v:e}",
            d.eps_theta, d.threshold
        ));
    }
    Ok(SuiteReport {
        suite: Suite::Privacy,
        passed,
        detail: parts.join("; "),
    })
}

/// A random synthetic trace of 1 to 80 queries with a random kind and pace.
pub fn random_trace(rng: &mut SimRng) -> Result<QueryTrace> {
    let n = rng.random_range(1..=80);
    let dt = rng.random_range(1.0..7200.0);
    let kind = match rng.random_range(0..3) {
        0 => SynthKind::Static,
        1 => SynthKind::RandomWalk {
            step_sigma: rng.random_range(1.0..2000.0),
        },
        _ => SynthKind::Uniform {
            side: rng.random_range(100.0..50_000.0),
        },
    };
    synth_trace(kind, n, dt, rng)
}

/// Per-run budget audit.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BudgetAudit {
    pub runs: usize,
    pub over_budget: usize,
    pub max_overshoot: f64,
    pub max_recursion_rel_err: f64,
}

/// Every manager variant (both modes, skip off and on) over `n_traces`
/// random traces: checks spend ≤ ε and the recursion identity.
pub fn budget_audit(cfg: &VerifyConfig) -> Result<BudgetAudit> {
    let exp = &cfg.experiment;
    let mut variants = Vec::new();
    for mode in [
        Mode::FixedUtility { alpha: exp.alpha },
        Mode::FixedRate { rho: exp.rho },
    ] {
        for skip in [
            SkipPolicy::default(),
            SkipPolicy::with_time_based(exp.v_max),
        ] {
            let m = ManagerConfig { mode, ..exp.base }.with_skip(skip);
            m.validate()?;
            variants.push(m);
        }
    }
    let audits: Vec<BudgetAudit> = (0..cfg.budget_traces)
        .into_par_iter()
        .map(|i| -> Result<BudgetAudit> {
            let mut rng = derive(cfg.seed, &["budget-trace".into(), i.into()]);
            let trace = random_trace(&mut rng)?;
            let mut a = BudgetAudit::default();
            for (v, m) in variants.iter().enumerate() {
                let run_rng = derive(cfg.seed, &["budget-run".into(), i.into(), v.into()]);
                let (run, decisions) = if cfg.inject_overflow {
                    let mut log = DecisionLog::new(IgnoresStop::new(Manager::new(*m)?));
                    let run = predictive_mechanism(&trace.points, &mut log, Parrot, run_rng)?;
                    (run, log.decisions)
                } else {
                    let mut log = DecisionLog::new(Manager::new(*m)?);
                    let run = predictive_mechanism(&trace.points, &mut log, Parrot, run_rng)?;
                    (run, log.decisions)
                };
                let spent = run.total_spend();
                let rec = spend_recursion(&run, &decisions)?;
                a.runs += 1;
                if spent > m.eps_total {
                    a.over_budget += 1;
                    a.max_overshoot = a.max_overshoot.max(spent - m.eps_total);
                }
                if spent > 0.0 {
                    a.max_recursion_rel_err =
                        a.max_recursion_rel_err.max((rec - spent).abs() / spent);
                } else if rec != 0.0 {
                    a.max_recursion_rel_err = f64::INFINITY;
                }
            }
            Ok(a)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(audits
        .into_iter()
        .fold(BudgetAudit::default(), |acc, a| BudgetAudit {
            runs: acc.runs + a.runs,
            over_budget: acc.over_budget + a.over_budget,
            max_overshoot: acc.max_overshoot.max(a.max_overshoot),
            max_recursion_rel_err: acc.max_recursion_rel_err.max(a.max_recursion_rel_err),
        }))
}

pub fn verify_budget(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let a = budget_audit(cfg)?;
    Ok(SuiteReport {
        suite: Suite::Budget,
        passed: a.over_budget == 0 && a.max_recursion_rel_err <= 1e-12,
        detail: format!(
            "runs={} over_budget={} max_overshoot={:e} max_recursion_rel_err={:e}{}",
            a.runs,
            a.over_budget,
            a.max_overshoot,
            a.max_recursion_rel_err,
            if cfg.inject_overflow {
                " (overflow injected)"
            } else {
                ""
            }
        ),
    })
}

/// Outcome of the adversarial-prediction utility check for one decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityCheck {
    pub bound: f64,
    pub quantile: f64,
    pub coverage: f64,
}

/// Runs `steps` queries at a fixed secret with a prediction `10·α_N` away
/// and compares the empirical δ-quantile of the error to
/// `max(α_N, l + α_θ)`.
pub fn utility_check(
    d: BudgetDecision,
    delta: f64,
    steps: usize,
    seed: u64,
) -> Result<UtilityCheck> {
    let k = crate::noise::AccuracyConstants::new(delta)?;
    let alpha_n = k.c_n / d.eps_n;
    let alpha_theta = if d.eps_theta > 0.0 {
        k.c_theta / d.eps_theta
    } else {
        0.0
    };
    let bound = alpha_n.max(d.threshold + alpha_theta);
    let secret = PlanarPoint::ORIGIN;
    let far = ConstantPredictor(PlanarPoint::new(10.0 * alpha_n, 0.0));
    let trace = untimed(&vec![secret; steps]);
    let run = predictive_mechanism(
        &trace,
        FixedDecision(d),
        far,
        derive(seed, &["utility".into()]),
    )?;
    let errors = pointwise_errors(
        &trace.iter().map(|q| q.point).collect::<Vec<_>>(),
        &run.reported(),
    );
    let quantile = alpha_accuracy(&errors, delta)?;
    let coverage = errors.iter().filter(|e| **e <= bound).count() as f64 / errors.len() as f64;
    Ok(UtilityCheck {
        bound,
        quantile,
        coverage,
    })
}

pub fn verify_utility(cfg: &VerifyConfig) -> Result<SuiteReport> {
    let delta = cfg.experiment.base.delta;
    let mut passed = true;
    let mut parts = Vec::new();
    for (i, (name, d)) in default_decisions(&cfg.experiment)?.into_iter().enumerate() {
        let u = utility_check(d, delta, cfg.utility_steps, cfg.seed.wrapping_add(i as u64))?;
        passed &= u.quantile <= u.bound && u.coverage >= delta - 0.01;
        parts.push(format!(
            "{name}: bound={:.1} quantile={:.1} coverage={:.4}",
            u.bound, u.quantile, u.coverage
        ));
    }
    Ok(SuiteReport {
        suite: Suite::Utility,
        passed,
        detail: parts.join("; "),
    })
}

pub fn run_suite(suite: Suite, cfg: &VerifyConfig) -> Result<SuiteReport> {
    match suite {
        Suite::Privacy => verify_privacy(cfg),
        Suite::Budget => verify_budget(cfg),
        Suite::Utility => verify_utility(cfg),
    }
}
