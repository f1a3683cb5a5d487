//! Metrics, the experiment runner and the guarantee checks.

mod experiment;
mod metrics;
mod verify;

pub use experiment::{
    aggregate, run_experiment, write_metrics_csv, ExperimentConfig, MechanismKind, MechanismSpec,
    MetricsRow, TraceOutcome, METRICS_HEADER,
};
pub use metrics::{alpha_accuracy, pointwise_errors, run_rate, trace_error};
pub use verify::{
    budget_audit, default_decisions, ln_easy_probability, ln_hard_probability, random_trace,
    run_suite, spend_recursion, utility_check, verify_budget, verify_privacy, verify_test_privacy,
    verify_utility, BudgetAudit, DecisionLog, FixedDecision, IgnoresStop, Suite, SuiteReport,
    UtilityCheck, VerifyConfig, PRIVACY_TOLERANCE,
};
