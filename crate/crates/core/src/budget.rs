//! ε-bounded budget managers.
//!
//! Both managers split each step's budget between the threshold test and the
//! noise so that the accuracy bound `max(α_N, l + α_θ)` is met:
//!
//! ```text
//! fixed utility (α):  ε_θ = η·(c_θ/α)·(1 + 1/γ)      ε_N = c_N/α
//! fixed rate (ρ, PR): ε_N = ρ / ((1 − PR) + η·(c_θ/c_N)·(1 + 1/γ))
//!                     ε_θ = ε_N·η·(c_θ/c_N)·(1 + 1/γ)
//! both:               l   = c_θ / (γ·ε_θ)
//! ```
//!
//! A manager stops as soon as the next step's worst-case spend `ε_θ + ε_N`
//! would push the total over ε, and stays stopped.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Result};
use crate::mechanism::{BudgetDecision, BudgetManager, Query, ReportedStep, Run, Skip};
use crate::noise::AccuracyConstants;

/// 0.5 km/h in meters per second.
pub const DEFAULT_V_MAX: f64 = 0.5 / 3.6;
pub const DEFAULT_ALPHA_M: f64 = 3000.0;
pub const DEFAULT_QUERIES_PER_BUDGET: f64 = 30.0;

/// ε = ln(10) / 100 m.
pub fn default_eps_total() -> f64 {
    std::f64::consts::LN_10 / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    /// Target accuracy α(δ) in meters.
    FixedUtility { alpha: f64 },
    /// Target budget per step.
    FixedRate { rho: f64 },
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::FixedUtility { .. } => "fixed_utility",
            Mode::FixedRate { .. } => "fixed_rate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkipPolicy {
    /// Answer the first query with noise, since there is nothing to predict from.
    pub first_step: bool,
    /// Maximum user speed in m/s for the elapsed-time skip, if enabled.
    pub time_based: Option<f64>,
}

impl Default for SkipPolicy {
    fn default() -> Self {
        SkipPolicy {
            first_step: true,
            time_based: None,
        }
    }
}

impl SkipPolicy {
    pub fn with_time_based(v_max: f64) -> Self {
        SkipPolicy {
            first_step: true,
            time_based: Some(v_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManagerConfig {
    pub eps_total: f64,
    pub mode: Mode,
    pub eta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub pr_init: f64,
    pub pr_window: usize,
    pub skip: SkipPolicy,
}

impl Default for ManagerConfig {
    fn default() -> Self {
        let eps = default_eps_total();
        ManagerConfig {
            eps_total: eps,
            mode: Mode::FixedRate {
                rho: eps / DEFAULT_QUERIES_PER_BUDGET,
            },
            eta: 0.9,
            gamma: 0.8,
            delta: 0.9,
            pr_init: 0.6,
            pr_window: 5,
            skip: SkipPolicy::default(),
        }
    }
}

impl ManagerConfig {
    pub fn fixed_utility(eps_total: f64, alpha: f64) -> Self {
        ManagerConfig {
            eps_total,
            mode: Mode::FixedUtility { alpha },
            ..Default::default()
        }
    }

    pub fn fixed_rate(eps_total: f64, rho: f64) -> Self {
        ManagerConfig {
            eps_total,
            mode: Mode::FixedRate { rho },
            ..Default::default()
        }
    }

    pub fn with_skip(mut self, skip: SkipPolicy) -> Self {
        self.skip = skip;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_total > 0.0 && self.eps_total.is_finite()) {
            return Err(invalid_param("eps_total must be positive"));
        }
        match self.mode {
            Mode::FixedUtility { alpha } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(invalid_param("alpha must be positive"));
                }
            }
            Mode::FixedRate { rho } => {
                if !(rho > 0.0 && rho <= self.eps_total) {
                    return Err(invalid_param("rho must lie in (0, eps_total]"));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(invalid_param("eta must lie in [0, 1]"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid_param("gamma must lie in (0, 1]"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid_param("delta must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.pr_init) {
            return Err(invalid_param("pr_init must lie in [0, 1)"));
        }
        if let Some(v) = self.skip.time_based {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid_param("v_max must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn constants(&self) -> Result<AccuracyConstants> {
        AccuracyConstants::new(self.delta)
    }

    /// `η·(c_θ/c_N)·(1 + 1/γ)`, the test-to-noise budget ratio.
    fn test_ratio(&self, k: &AccuracyConstants) -> f64 {
        self.eta * k.ratio() * (1.0 + 1.0 / self.gamma)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ManagerState {
    pub spent_so_far: f64,
    pub steps_taken: usize,
    pub hard_steps: usize,
    /// Time of the last step whose output depended on the secret, i.e. the
    /// last step that was not a forced-easy skip.
    pub last_reported_time: Option<f64>,
    pub exhausted: bool,
}

impl ManagerState {
    pub fn observe(&mut self, step: &ReportedStep) {
        self.spent_so_far += step.spend();
        self.steps_taken += 1;
        if step.is_hard() {
            self.hard_steps += 1;
        }
        if step.skipped != Skip::ForcedEasy {
            self.last_reported_time = Some(step.t);
        }
    }

    /// Fraction of easy steps so far.
    pub fn observed_pr(&self) -> Option<f64> {
        (self.steps_taken > 0)
            .then(|| (self.steps_taken - self.hard_steps) as f64 / self.steps_taken as f64)
    }
}

/// The prediction rate the fixed-rate formulas plan with.
pub fn pr_estimate(cfg: &ManagerConfig, state: &ManagerState) -> f64 {
    if state.steps_taken < cfg.pr_window {
        cfg.pr_init
    } else {
        state.observed_pr().unwrap_or(cfg.pr_init)
    }
}

fn threshold_for(k: &AccuracyConstants, gamma: f64, eps_theta: f64) -> f64 {
    k.c_theta / (gamma * eps_theta)
}

fn guarded(cfg: &ManagerConfig, state: &ManagerState, d: BudgetDecision) -> Option<BudgetDecision> {
    // Same association as `ReportedStep::spend`, so the check is exact.
    let worst = d.eps_theta + d.eps_n;
    if state.exhausted || state.spent_so_far + worst > cfg.eps_total || worst.is_nan() {
        None
    } else {
        Some(d)
    }
}

/// Fixed-utility formulas, or `None` (STOP) when the step would not fit.
pub fn fixed_utility_decide(cfg: &ManagerConfig, state: &ManagerState) -> Option<BudgetDecision> {
    let Mode::FixedUtility { alpha } = cfg.mode else {
        return None;
    };
    let k = cfg.constants().ok()?;
    let eps_theta = cfg.eta * (k.c_theta / alpha) * (1.0 + 1.0 / cfg.gamma);
    let eps_n = k.c_n / alpha;
    let threshold = threshold_for(&k, cfg.gamma, eps_theta);
    guarded(
        cfg,
        state,
        BudgetDecision {
            eps_theta,
            eps_n,
            threshold,
        },
    )
}

/// Fixed-rate formulas at the current PR estimate, or `None` (STOP).
pub fn fixed_rate_decide(cfg: &ManagerConfig, state: &ManagerState) -> Option<BudgetDecision> {
    let Mode::FixedRate { rho } = cfg.mode else {
        return None;
    };
    let k = cfg.constants().ok()?;
    let pr = pr_estimate(cfg, state);
    let ratio = cfg.test_ratio(&k);
    let eps_n = rho / ((1.0 - pr) + ratio);
    let eps_theta = eps_n * ratio;
    let threshold = threshold_for(&k, cfg.gamma, eps_theta);
    guarded(
        cfg,
        state,
        BudgetDecision {
            eps_theta,
            eps_n,
            threshold,
        },
    )
}

/// Expected spend per step: `ε_θ + (1 − PR)·ε_N`.
pub fn rate_equation_check(eps_theta: f64, eps_n: f64, pr: f64) -> f64 {
    eps_theta + (1.0 - pr) * eps_n
}

/// Prediction rate above which the predictive mechanism beats independent
/// noise: `η·(c_θ/c_N)·(1 + 1/γ)`.
pub fn pr_lower_bound(cfg: &ManagerConfig) -> Result<f64> {
    let k = cfg.constants()?;
    Ok(cfg.test_ratio(&k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipAction {
    ForcedEasy,
    ForcedHard,
    RunTest,
}

pub fn skip_decide(
    cfg: &ManagerConfig,
    state: &ManagerState,
    query_time: f64,
    alpha_now: f64,
) -> SkipAction {
    if cfg.skip.first_step && state.steps_taken == 0 {
        return SkipAction::ForcedHard;
    }
    if let (Some(v_max), Some(last)) = (cfg.skip.time_based, state.last_reported_time) {
        if (query_time - last) * v_max <= alpha_now {
            return SkipAction::ForcedEasy;
        }
    }
    SkipAction::RunTest
}

/// Accuracy the decision is configured for: α in fixed-utility mode,
/// `max(α_N, l + α_θ)` in fixed-rate mode.
pub fn alpha_now(cfg: &ManagerConfig, k: &AccuracyConstants, d: &BudgetDecision) -> f64 {
    match cfg.mode {
        Mode::FixedUtility { alpha } => alpha,
        Mode::FixedRate { .. } => (k.c_n / d.eps_n).max(d.threshold + k.c_theta / d.eps_theta),
    }
}

/// A stateful ε-bounded manager (fixed utility or fixed rate, by config).
#[derive(Debug, Clone)]
pub struct Manager {
    cfg: ManagerConfig,
    consts: AccuracyConstants,
    state: ManagerState,
}

impl Manager {
    pub fn new(cfg: ManagerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Manager {
            consts: cfg.constants()?,
            cfg,
            state: ManagerState::default(),
        })
    }

    pub fn config(&self) -> &ManagerConfig {
        &self.cfg
    }

    pub fn state(&self) -> &ManagerState {
        &self.state
    }

    /// The formula decision for the next step, ignoring skips.
    pub fn base_decision(&self) -> Option<BudgetDecision> {
        match self.cfg.mode {
            Mode::FixedUtility { .. } => fixed_utility_decide(&self.cfg, &self.state),
            Mode::FixedRate { .. } => fixed_rate_decide(&self.cfg, &self.state),
        }
    }
}

impl BudgetManager for Manager {
    fn decide(&mut self, _run: &Run, query: &Query) -> Option<BudgetDecision> {
        let Some(base) = self.base_decision() else {
            self.state.exhausted = true;
            return None;
        };
        if base.skip() != Skip::None {
            // η = 0 leaves nothing to test with.
            return Some(base);
        }
        let alpha = alpha_now(&self.cfg, &self.consts, &base);
        Some(match skip_decide(&self.cfg, &self.state, query.t, alpha) {
            SkipAction::ForcedEasy => BudgetDecision::forced_easy(),
            SkipAction::ForcedHard => BudgetDecision::forced_hard(base.eps_n),
            SkipAction::RunTest => base,
        })
    }

    fn observe(&mut self, step: &ReportedStep) {
        self.state.observe(step);
    }
}
