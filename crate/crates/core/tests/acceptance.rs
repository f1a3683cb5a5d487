//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so that every line is printed; exits
//! non-zero when any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use geoind::budget::{
    default_eps_total, pr_lower_bound, Manager, ManagerConfig, SkipPolicy, DEFAULT_ALPHA_M,
};
use geoind::eval::{
    budget_audit, default_decisions, run_experiment, run_rate, utility_check, verify_test_privacy,
    write_metrics_csv, ExperimentConfig, MetricsRow, VerifyConfig, PRIVACY_TOLERANCE,
};
use geoind::mechanism::{predictive_mechanism, Parrot, Query};
use geoind::noise::{planar_laplace_sample, planar_radius_cdf, AccuracyConstants, PlanarPoint};
use geoind::rng::{derive, seeded};
use geoind::traces::{
    prior_sweep, sample_queries_detailed, synth_trace, ProjectedTrajectory, QueryTrace,
    SamplerConfig, SynthKind,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn noise_fidelity() -> Outcome {
    let start = Instant::now();
    let eps = default_eps_total();
    let n = 100_000;
    let mut rng = derive(1, &["acceptance".into(), "noise".into()]);
    let mut radii: Vec<f64> = (0..n)
        .map(|_| {
            let p = planar_laplace_sample(eps, PlanarPoint::ORIGIN, &mut rng).unwrap();
            p.x.hypot(p.y)
        })
        .collect();
    radii.sort_by(f64::total_cmp);
    let mut ks: f64 = 0.0;
    for (i, r) in radii.iter().enumerate() {
        let c = planar_radius_cdf(eps, *r);
        ks = ks
            .max((c - i as f64 / n as f64).abs())
            .max(((i + 1) as f64 / n as f64 - c).abs());
    }
    let mean = radii.iter().sum::<f64>() / n as f64;
    let expected = 2.0 / eps;
    let rel = (mean / expected - 1.0).abs();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        ks < 0.01 && rel <= 0.01 && secs < 10.0,
        format!(
            "KS={ks:.5} (<0.01), mean radius={mean:.3} m vs {expected:.3} m ({:.3}%), {secs:.2}s",
            rel * 100.0
        ),
    )
}

fn test_privacy() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut parts = Vec::new();
    for (name, d) in default_decisions(&ExperimentConfig::default()).unwrap() {
        let v = verify_test_privacy(d.eps_theta, d.threshold, 5000.0, 10.0).unwrap();
        worst = worst.max(v);
        parts.push(format!("{name}: {v:.2e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= PRIVACY_TOLERANCE && secs < 5.0,
        format!("max violation {} (<=1e-9), {secs:.2}s", parts.join(", ")),
    )
}

fn budget_bound() -> Outcome {
    let cfg = VerifyConfig {
        budget_traces: 1000,
        seed: 3,
        ..VerifyConfig::default()
    };
    let a = budget_audit(&cfg).unwrap();
    outcome(
        a.runs == 4000 && a.over_budget == 0 && a.max_recursion_rel_err <= 1e-12,
        format!(
            "{} runs, {} over budget, max recursion rel err {:.1e}",
            a.runs, a.over_budget, a.max_recursion_rel_err
        ),
    )
}

fn utility_bound() -> Outcome {
    let delta = 0.9;
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, (name, d)) in default_decisions(&ExperimentConfig::default())
        .unwrap()
        .into_iter()
        .enumerate()
    {
        let u = utility_check(d, delta, 10_000, 40 + i as u64).unwrap();
        ok &= u.quantile <= u.bound && u.coverage >= 0.89;
        parts.push(format!(
            "{name}: q90={:.1} m <= {:.1} m, coverage={:.4}",
            u.quantile, u.bound, u.coverage
        ));
    }
    outcome(ok, parts.join("; "))
}

fn row<'a>(rows: &'a [MetricsRow], name: &str, skip: bool) -> &'a MetricsRow {
    rows.iter()
        .find(|r| r.mechanism == name && r.skip == skip)
        .unwrap_or_else(|| panic!("no row {name}/{skip}"))
}

fn static_traces(count: usize, n: usize) -> Vec<QueryTrace> {
    (0..count)
        .map(|i| {
            let mut t = synth_trace(SynthKind::Static, n, 60.0, &mut seeded(i as u64)).unwrap();
            t.sample_index = i;
            t
        })
        .collect()
}

fn correlated_improvement() -> Outcome {
    let traces = static_traces(100, 30);
    let rows =
        run_experiment(&traces, &ExperimentConfig::default().specs().unwrap(), 5, 0).unwrap();
    let im_rate = row(&rows, "IM_fixed_rate", false);
    let im_util = row(&rows, "IM_fixed_utility", false);
    let mut parts = Vec::new();
    let mut ok = true;
    for skip in [true, false] {
        let fr = row(&rows, "PM_fixed_rate", skip);
        let fu = row(&rows, "PM_fixed_utility", skip);
        let err_gain = 1.0 - fr.mean_err / im_rate.mean_err;
        let rate_gain = 1.0 - fu.mean_rate / im_util.mean_rate;
        if skip {
            ok = err_gain >= 0.30 && rate_gain >= 0.40;
        }
        parts.push(format!(
            "skip {}: fixed-rate err {:.0} m vs IM {:.0} m (reduction {:.1}%, need 30%), fixed-utility rate {:.3e} vs IM {:.3e} (reduction {:.1}%, need 40%)",
            if skip { "on" } else { "off" },
            fr.mean_err,
            im_rate.mean_err,
            err_gain * 100.0,
            fu.mean_rate,
            im_util.mean_rate,
            rate_gain * 100.0
        ));
    }
    outcome(ok, parts.join("; "))
}

fn query_coverage() -> Outcome {
    let traces: Vec<QueryTrace> = (0..100)
        .map(|i| {
            let mut t = synth_trace(
                SynthKind::RandomWalk { step_sigma: 50.0 },
                30,
                60.0,
                &mut seeded(1000 + i),
            )
            .unwrap();
            t.sample_index = i as usize;
            t
        })
        .collect();
    let rows =
        run_experiment(&traces, &ExperimentConfig::default().specs().unwrap(), 6, 0).unwrap();
    let pm = row(&rows, "PM_fixed_utility", true);
    let im = row(&rows, "IM_fixed_utility", false);
    let ratio = pm.queries_covered / im.queries_covered;
    outcome(
        ratio >= 1.4,
        format!(
            "PM covers {:.2} queries, IM {:.2} (ratio {ratio:.2}, need 1.4)",
            pm.queries_covered, im.queries_covered
        ),
    )
}

/// A user who stays put and, at each query, moves 50 km away with
/// probability `q`.
fn jumpy_trace(n: usize, q: f64, rng: &mut geoind::rng::SimRng) -> Vec<Query> {
    let mut cur = PlanarPoint::ORIGIN;
    (0..n)
        .map(|i| {
            if i > 0 && rng.random_bool(q) {
                cur = cur.offset_polar(50_000.0, 2.0 * PI * rng.random::<f64>());
            }
            Query::new(cur, i as f64 * 60.0)
        })
        .collect()
}

fn break_even() -> Outcome {
    let cfg = ManagerConfig {
        eta: 0.5,
        ..ManagerConfig::fixed_utility(1.0, DEFAULT_ALPHA_M)
    }
    .with_skip(SkipPolicy::default());
    let bound = pr_lower_bound(&cfg).unwrap();
    let eps_n = AccuracyConstants::new(cfg.delta).unwrap().c_n / DEFAULT_ALPHA_M;
    let mut runs: Vec<(f64, f64)> = Vec::new();
    for qi in 0..=20usize {
        let q = qi as f64 / 20.0;
        for s in 0..20u64 {
            let mut rng = derive(7, &["break-even".into(), qi.into(), s.into()]);
            let trace = jumpy_trace(200, q, &mut rng);
            let run =
                predictive_mechanism(&trace, Manager::new(cfg).unwrap(), Parrot, rng).unwrap();
            let pr = 1.0 - run.hard_steps() as f64 / run.len() as f64;
            runs.push((pr, run_rate(&run).unwrap()));
        }
    }
    let below: Vec<_> = runs.iter().filter(|(pr, _)| *pr < bound - 0.05).collect();
    let above: Vec<_> = runs.iter().filter(|(pr, _)| *pr > bound + 0.05).collect();
    let below_ok = below.iter().all(|(_, r)| *r > eps_n);
    let above_ok = above.iter().all(|(_, r)| *r < eps_n);
    // Mean rate per 0.05-wide PR bin must fall as PR rises.
    let mut bins: Vec<(f64, usize)> = vec![(0.0, 0); 21];
    for (pr, r) in &runs {
        let b = ((pr / 0.05).floor() as usize).min(20);
        bins[b].0 += r;
        bins[b].1 += 1;
    }
    let means: Vec<f64> = bins
        .iter()
        .filter(|b| b.1 > 0)
        .map(|b| b.0 / b.1 as f64)
        .collect();
    let monotone = means.windows(2).all(|w| w[1] < w[0]);
    let max_pr = runs.iter().map(|r| r.0).fold(0.0, f64::max);
    outcome(
        !below.is_empty() && !above.is_empty() && below_ok && above_ok && monotone,
        format!(
            "eta=0.5 bound={bound:.4}: {} runs below (PM>IM: {below_ok}), {} above (PM<IM: {above_ok}), max PR {max_pr:.3}, {} bins monotone: {monotone}",
            below.len(),
            above.len(),
            means.len()
        ),
    )
}

fn stationary(user: &str, hours: f64, dt: f64) -> ProjectedTrajectory {
    let n = (hours * 3600.0 / dt) as usize + 1;
    ProjectedTrajectory {
        user_id: user.into(),
        points: vec![PlanarPoint::ORIGIN; n],
        times: (0..n).map(|i| i as f64 * dt).collect(),
    }
}

fn sampler_statistics() -> Outcome {
    let traj = stationary("still", 24.0 * 14.0, 30.0);
    let mut ok = true;
    let mut parts = Vec::new();
    for p in [0.1, 0.5, 0.9] {
        let cfg = SamplerConfig {
            p_jump: p,
            ..SamplerConfig::default()
        };
        let (mut jumps, mut gaps, mut s) = (0usize, 0usize, 0usize);
        while gaps < 10_000 {
            let mut rng = derive(8, &["gaps".into(), s.into(), ((p * 10.0) as usize).into()]);
            let d = sample_queries_detailed(&traj, &cfg, s, &mut rng).unwrap();
            gaps += d.gaps.len();
            jumps += d.gaps.iter().filter(|g| g.jump).count();
            s += 1;
        }
        let frac = jumps as f64 / gaps as f64;
        ok &= (frac - p).abs() <= 0.02;
        parts.push(format!("p={p}: {frac:.4} over {gaps} gaps"));
    }
    let trajs = [stationary("a", 2.0, 30.0), stationary("b", 2.0, 30.0)];
    let template = SamplerConfig::default();
    let sweep = prior_sweep(&trajs, &template, 9).unwrap();
    let per_user = sweep.iter().filter(|t| t.user_id == "a").count();
    let count_ok = sweep.len() == 2 * 11 * template.samples_per_trace
        && per_user == 11 * template.samples_per_trace;
    parts.push(format!(
        "sweep emitted {} traces for 2 trajectories ({per_user} per trajectory)",
        sweep.len()
    ));
    outcome(ok && count_ok, parts.join("; "))
}

fn reproducibility() -> Outcome {
    let trajs: Vec<ProjectedTrajectory> = (0..3)
        .map(|u| {
            let walk = synth_trace(
                SynthKind::RandomWalk { step_sigma: 20.0 },
                400,
                30.0,
                &mut seeded(u),
            )
            .unwrap();
            ProjectedTrajectory {
                user_id: format!("u{u}"),
                points: walk.positions(),
                times: walk.points.iter().map(|q| q.t).collect(),
            }
        })
        .collect();
    let sweep = prior_sweep(
        &trajs,
        &SamplerConfig {
            samples_per_trace: 3,
            ..SamplerConfig::default()
        },
        11,
    )
    .unwrap();
    let specs = ExperimentConfig::default().specs().unwrap();
    let csv = |jobs: usize| {
        let rows = run_experiment(&sweep, &specs, 12, jobs).unwrap();
        let mut buf = Vec::new();
        write_metrics_csv(&rows, &mut buf).unwrap();
        buf
    };
    let one = csv(1);
    let four = csv(4);
    let eight = csv(8);
    outcome(
        one == four && one == eight && !one.is_empty(),
        format!(
            "{} traces, {} bytes of metrics; 1 vs 4 workers identical: {}, 1 vs 8: {}",
            sweep.len(),
            one.len(),
            one == four,
            one == eight
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("1 noise fidelity", noise_fidelity),
        ("2 test privacy", test_privacy),
        ("3 budget bound", budget_bound),
        ("4 utility bound", utility_bound),
        ("5 correlated-trace improvement", correlated_improvement),
        ("6 query coverage", query_coverage),
        ("7 break-even prediction rate", break_even),
        ("8 sampler statistics", sampler_statistics),
        ("9 reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        if !o.passed {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
