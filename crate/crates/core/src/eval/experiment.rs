//! The IM-versus-PM experiment runner.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{alpha_accuracy, pointwise_errors, run_rate, trace_error};
use crate::budget::{
    default_eps_total, Manager, ManagerConfig, Mode, SkipPolicy, DEFAULT_ALPHA_M,
    DEFAULT_QUERIES_PER_BUDGET, DEFAULT_V_MAX,
};
use crate::error::{invalid_param, Result};
use crate::mechanism::{independent_run, predictive_mechanism, Parrot, Query, Run, Skip};
use crate::rng::{derive, SimRng};
use crate::traces::QueryTrace;

pub const METRICS_HEADER: [&str; 10] = [
    "mechanism",
    "skip",
    "prior_p",
    "mean_err_m",
    "alpha90_m",
    "mean_rate",
    "prediction_rate",
    "skipped_frac",
    "test_budget_frac",
    "queries_covered",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MechanismKind {
    /// Planar Laplace at `eps_n` per query until `eps_total` runs out.
    Independent { eps_n: f64, eps_total: f64 },
    /// The predictive mechanism with the parrot prediction.
    Predictive(ManagerConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub name: String,
    pub skip: bool,
    pub kind: MechanismKind,
}

impl MechanismSpec {
    /// Runs this mechanism over `trace`.
    pub fn run(&self, trace: &[Query], mut rng: SimRng) -> Result<Run> {
        match self.kind {
            MechanismKind::Independent { eps_n, eps_total } => {
                independent_run(trace, eps_n, Some(eps_total), &mut rng)
            }
            MechanismKind::Predictive(cfg) => {
                predictive_mechanism(trace, Manager::new(cfg)?, Parrot, rng)
            }
        }
    }
}

/// Shared settings from which the six standard mechanisms are built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// `eps_total`, η, γ, δ and the PR estimate; its mode is ignored.
    pub base: ManagerConfig,
    pub alpha: f64,
    pub rho: f64,
    /// m/s, for the time-based skip.
    pub v_max: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            base: ManagerConfig::default(),
            alpha: DEFAULT_ALPHA_M,
            rho: default_eps_total() / DEFAULT_QUERIES_PER_BUDGET,
            v_max: DEFAULT_V_MAX,
        }
    }
}

impl ExperimentConfig {
    fn manager(&self, mode: Mode, skip: bool) -> ManagerConfig {
        let policy = if skip {
            SkipPolicy::with_time_based(self.v_max)
        } else {
            SkipPolicy::default()
        };
        ManagerConfig { mode, ..self.base }.with_skip(policy)
    }

    /// Both managers with the time-based skip off and on, then the
    /// independent mechanism matched on utility (`ε_N = c_N/α`) and on rate
    /// (`ε_N = ρ`).
    pub fn specs(&self) -> Result<Vec<MechanismSpec>> {
        let mut out = Vec::with_capacity(6);
        for (name, mode) in [
            ("PM_fixed_utility", Mode::FixedUtility { alpha: self.alpha }),
            ("PM_fixed_rate", Mode::FixedRate { rho: self.rho }),
        ] {
            for skip in [false, true] {
                let cfg = self.manager(mode, skip);
                cfg.validate()?;
                out.push(MechanismSpec {
                    name: name.into(),
                    skip,
                    kind: MechanismKind::Predictive(cfg),
                });
            }
        }
        let c_n = self.base.constants()?.c_n;
        let eps_total = self.base.eps_total;
        for (name, eps_n) in [
            ("IM_fixed_utility", c_n / self.alpha),
            ("IM_fixed_rate", self.rho),
        ] {
            if !(eps_n > 0.0 && eps_n.is_finite()) {
                return Err(invalid_param(format!("{name}: eps_n must be positive")));
            }
            out.push(MechanismSpec {
                name: name.into(),
                skip: false,
                kind: MechanismKind::Independent { eps_n, eps_total },
            });
        }
        Ok(out)
    }
}

/// What one mechanism did on one trace, restricted to the covered prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceOutcome {
    pub steps: usize,
    pub hard: usize,
    pub forced_easy: usize,
    pub forced_hard: usize,
    pub spent_test: f64,
    pub spent_total: f64,
    pub trace_error: Option<f64>,
    pub rate: Option<f64>,
    pub errors: Vec<f64>,
}

impl TraceOutcome {
    pub fn from_run(trace: &[Query], run: &Run) -> Result<Self> {
        let n = run.len();
        let x: Vec<_> = trace[..n].iter().map(|q| q.point).collect();
        let z = run.reported();
        Ok(TraceOutcome {
            steps: n,
            hard: run.hard_steps(),
            forced_easy: run.count_skipped(Skip::ForcedEasy),
            forced_hard: run.count_skipped(Skip::ForcedHard),
            spent_test: run.steps().iter().map(|s| s.spent_test).sum(),
            spent_total: run.total_spend(),
            trace_error: if n > 0 {
                Some(trace_error(&x, &z)?)
            } else {
                None
            },
            rate: if n > 0 { Some(run_rate(run)?) } else { None },
            errors: pointwise_errors(&x, &z),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub mechanism: String,
    pub skip: bool,
    pub prior_p: f64,
    pub mean_err: f64,
    pub alpha90: f64,
    pub mean_rate: f64,
    pub prediction_rate: f64,
    pub skipped_frac: f64,
    pub test_budget_frac: f64,
    pub queries_covered: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

/// Folds per-trace outcomes, in the order given, into one row.
pub fn aggregate(spec: &MechanismSpec, prior_p: f64, outcomes: &[&TraceOutcome]) -> MetricsRow {
    let steps: usize = outcomes.iter().map(|o| o.steps).sum();
    let hard: usize = outcomes.iter().map(|o| o.hard).sum();
    let skipped: usize = outcomes.iter().map(|o| o.forced_easy + o.forced_hard).sum();
    let spent_test: f64 = outcomes.iter().map(|o| o.spent_test).sum();
    let spent_total: f64 = outcomes.iter().map(|o| o.spent_total).sum();
    let pooled: Vec<f64> = outcomes
        .iter()
        .flat_map(|o| o.errors.iter().copied())
        .collect();
    let alpha90 = if pooled.is_empty() {
        f64::NAN
    } else {
        alpha_accuracy(&pooled, 0.9).expect("non-empty")
    };
    MetricsRow {
        mechanism: spec.name.clone(),
        skip: spec.skip,
        prior_p,
        mean_err: mean(outcomes.iter().filter_map(|o| o.trace_error)),
        alpha90,
        mean_rate: mean(outcomes.iter().filter_map(|o| o.rate)),
        prediction_rate: ratio((steps - hard) as f64, steps as f64),
        skipped_frac: ratio(skipped as f64, steps as f64),
        test_budget_frac: if spent_total > 0.0 {
            spent_test / spent_total
        } else {
            0.0
        },
        queries_covered: mean(outcomes.iter().map(|o| o.steps as f64)),
    }
}

/// Runs every mechanism over every non-empty trace and aggregates one row per
/// `(prior_p, mechanism)`, priors ascending and mechanisms in the given order.
///
/// Each `(mechanism, trace)` task draws from a stream derived from its identity,
/// and aggregation is sequential, so output does not depend on `jobs`
/// (`0` lets the pool pick).
pub fn run_experiment(
    traces: &[QueryTrace],
    specs: &[MechanismSpec],
    master_seed: u64,
    jobs: usize,
) -> Result<Vec<MetricsRow>> {
    let live: Vec<usize> = (0..traces.len())
        .filter(|&i| !traces[i].is_empty())
        .collect();
    let tasks: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|s| live.iter().map(move |&t| (s, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| invalid_param(format!("worker pool: {e}")))?;
    let outcomes: Vec<TraceOutcome> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, t)| {
                let spec = &specs[s];
                let rng = derive(
                    master_seed,
                    &[
                        "run".into(),
                        spec.name.as_str().into(),
                        usize::from(spec.skip).into(),
                        t.into(),
                    ],
                );
                let run = spec.run(&traces[t].points, rng)?;
                TraceOutcome::from_run(&traces[t].points, &run)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut by_prior: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (k, &t) in live.iter().enumerate() {
        // Priors are non-negative, so their bit patterns sort numerically.
        by_prior
            .entry(traces[t].prior_p.to_bits())
            .or_default()
            .push(k);
    }
    let mut rows = Vec::with_capacity(by_prior.len() * specs.len());
    for (bits, members) in &by_prior {
        for (s, spec) in specs.iter().enumerate() {
            let group: Vec<&TraceOutcome> = members
                .iter()
                .map(|&k| &outcomes[s * live.len() + k])
                .collect();
            rows.push(aggregate(spec, f64::from_bits(*bits), &group));
        }
    }
    Ok(rows)
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record([
            r.mechanism.clone(),
            (if r.skip { "on" } else { "off" }).to_string(),
            r.prior_p.to_string(),
            r.mean_err.to_string(),
            r.alpha90.to_string(),
            r.mean_rate.to_string(),
            r.prediction_rate.to_string(),
            r.skipped_frac.to_string(),
            r.test_budget_frac.to_string(),
            r.queries_covered.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
