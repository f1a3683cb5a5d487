use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;

use geoind::config::Settings;
use geoind::eval::{
    run_experiment, run_suite, write_metrics_csv, MechanismKind, MechanismSpec, Suite,
};
use geoind::rng::{derive, seeded};
use geoind::traces::{
    parse_geolife, parse_tdrive, prior_sweep, read_query_traces, read_store, sample_queries,
    synth_trace, write_query_traces, write_store, ProjectedTrajectory, SamplerConfig, SynthKind,
    Trajectory,
};

#[derive(Parser)]
#[command(
    name = "geoind",
    version,
    about = "Predictive geo-indistinguishable location sanitization"
)]
struct Cli {
    /// TOML file whose keys match the long flags (with underscores).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    eps_star: Option<f64>,
    #[arg(long, global = true)]
    r_star_m: Option<f64>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    eta: Option<f64>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    alpha_m: Option<f64>,
    #[arg(long, global = true)]
    rho: Option<f64>,
    #[arg(long, global = true)]
    pr_init: Option<f64>,
    #[arg(long, global = true)]
    pr_window: Option<usize>,
    #[arg(long, global = true)]
    v_max_kmh: Option<f64>,
    #[arg(long, global = true)]
    speed_cap_kmh: Option<f64>,
    #[arg(long, global = true)]
    brief_interval_s: Option<f64>,
    #[arg(long, global = true)]
    jump_interval_s: Option<f64>,
    #[arg(long, global = true)]
    interval_noise_frac: Option<f64>,
    #[arg(long, global = true)]
    samples_per_trace: Option<usize>,
    #[arg(long, global = true)]
    origin_lat: Option<f64>,
    #[arg(long, global = true)]
    origin_lon: Option<f64>,
}

impl Overrides {
    fn apply(&self, s: &mut Settings) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { s.$f = v; } )* };
        }
        set!(
            seed,
            jobs,
            eps_star,
            r_star_m,
            delta,
            eta,
            gamma,
            alpha_m,
            pr_init,
            pr_window,
            v_max_kmh,
            speed_cap_kmh,
            brief_interval_s,
            jump_interval_s,
            interval_noise_frac,
            samples_per_trace,
            origin_lat,
            origin_lon
        );
        if self.rho.is_some() {
            s.rho = self.rho;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse GeoLife or T-Drive files into a trajectory store.
    Ingest {
        /// Files or directories (searched recursively).
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long, value_enum)]
        format: Format,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample query traces from a trajectory store.
    Sample {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sample a single jump prior instead of the 0.0..=1.0 sweep.
        #[arg(long)]
        p: Option<f64>,
    },
    /// Generate synthetic query traces.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthChoice,
        /// Mean step (walk) or box side (uniform), meters.
        #[arg(long, default_value_t = 50.0)]
        scale_m: f64,
        #[arg(long, default_value_t = 30)]
        n: usize,
        #[arg(long, default_value_t = 60.0)]
        dt_s: f64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sanitize one query trace.
    Run {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        mechanism: MechanismChoice,
        #[arg(long, value_enum, default_value_t = ModeChoice::FixedRate)]
        mode: ModeChoice,
        /// Enable the elapsed-time skip.
        #[arg(long)]
        skip: bool,
        /// Which trace of the file to run (0-based).
        #[arg(long, default_value_t = 0)]
        trace_index: usize,
    },
    /// Compare the mechanisms over a query-trace file.
    Evaluate {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the privacy, budget and utility guarantees.
    Verify {
        #[arg(long, value_enum)]
        suite: Option<SuiteChoice>,
        /// Audit a manager that ignores STOP; the budget suite must fail.
        #[arg(long)]
        inject_overflow: bool,
        #[arg(long, default_value_t = 1000)]
        budget_traces: usize,
        #[arg(long, default_value_t = 10_000)]
        utility_steps: usize,
    },
    /// Print the effective settings as TOML.
    Defaults,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Geolife,
    Tdrive,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthChoice {
    Static,
    Walk,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum MechanismChoice {
    Im,
    Pm,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ModeChoice {
    FixedUtility,
    FixedRate,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteChoice {
    Privacy,
    Budget,
    Utility,
}

impl From<SuiteChoice> for Suite {
    fn from(s: SuiteChoice) -> Self {
        match s {
            SuiteChoice::Privacy => Suite::Privacy,
            SuiteChoice::Budget => Suite::Budget,
            SuiteChoice::Utility => Suite::Utility,
        }
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| {
        format!("cannot open {}", path.display())
    })?))
}

fn collect_files(path: &Path, ext: &str, out: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    let meta =
        std::fs::metadata(path).with_context(|| format!("cannot read {}", path.display()))?;
    if meta.is_file() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
        .with_context(|| format!("cannot list {}", path.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, ext, out)?;
        } else if p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext)) {
            out.push(p);
        }
    }
    Ok(())
}

/// `<user>/<file stem>`, where the user is the directory above `Trajectory`
/// when the file sits in the usual GeoLife layout.
fn geolife_id(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let parent = path.parent();
    let user = match parent.and_then(|p| p.file_name()) {
        Some(n) if n.eq_ignore_ascii_case("trajectory") => {
            parent.and_then(|p| p.parent()).and_then(|p| p.file_name())
        }
        other => other,
    };
    match user {
        Some(u) => format!("{}/{stem}", u.to_string_lossy()),
        None => stem,
    }
}

fn cmd_ingest(paths: &[PathBuf], format: Format, out: &Path) -> anyhow::Result<()> {
    let ext = match format {
        Format::Geolife => "plt",
        Format::Tdrive => "txt",
    };
    let mut files = Vec::new();
    for p in paths {
        collect_files(p, ext, &mut files)?;
    }
    if files.is_empty() {
        bail!("no .{ext} files found");
    }
    let mut trajs: Vec<Trajectory> = Vec::new();
    let (mut fixes, mut skipped, mut warnings, mut rejected) = (0, 0, 0, 0);
    for f in &files {
        let bytes = std::fs::read(f).with_context(|| format!("cannot read {}", f.display()))?;
        let parsed = match format {
            Format::Geolife => parse_geolife(&geolife_id(f), &bytes),
            Format::Tdrive => parse_tdrive(&bytes),
        };
        match parsed {
            Ok((t, report)) => {
                fixes += t.fixes.len();
                skipped += report.skipped;
                warnings += report.warning_count();
                trajs.push(t);
            }
            Err(e) => {
                warn!("{}: {e}", f.display());
                rejected += 1;
            }
        }
    }
    if trajs.is_empty() {
        bail!("none of the {} files held a usable trajectory", files.len());
    }
    write_store(&trajs, create(out)?)?;
    println!(
        "files={} trajectories={} fixes={fixes} skipped_records={skipped} warnings={warnings} rejected_files={rejected}",
        files.len(),
        trajs.len()
    );
    Ok(())
}

fn cmd_sample(s: &Settings, store: &Path, out: &Path, p: Option<f64>) -> anyhow::Result<()> {
    let trajs = read_store(open(store)?)?;
    if trajs.is_empty() {
        bail!("{} holds no trajectories", store.display());
    }
    let proj = s.projection()?;
    let projected: Vec<ProjectedTrajectory> = trajs
        .iter()
        .map(|t| {
            let (pt, dropped) = t.project(&proj);
            if dropped > 0 {
                warn!(
                    "{}: {dropped} fixes outside the projection window",
                    t.user_id
                );
            }
            pt
        })
        .collect();
    let template = s.sampler()?;
    let traces = match p {
        None => prior_sweep(&projected, &template, s.seed)?,
        Some(p) => {
            let cfg = SamplerConfig {
                p_jump: p,
                ..template
            };
            cfg.validate()?;
            let mut v = Vec::new();
            for t in &projected {
                for i in 0..cfg.samples_per_trace {
                    let mut rng = derive(
                        s.seed,
                        &["sample".into(), t.user_id.as_str().into(), i.into()],
                    );
                    v.push(sample_queries(t, &cfg, i, &mut rng)?);
                }
            }
            v
        }
    };
    let empty = traces.iter().filter(|t| t.is_empty()).count();
    write_query_traces(&traces, create(out)?)?;
    println!(
        "trajectories={} traces={} empty_traces={empty} queries={}",
        projected.len(),
        traces.len(),
        traces.iter().map(|t| t.len()).sum::<usize>()
    );
    Ok(())
}

fn cmd_synth(
    s: &Settings,
    kind: SynthChoice,
    scale: f64,
    n: usize,
    dt: f64,
    count: usize,
    out: &Path,
) -> anyhow::Result<()> {
    let kind = match kind {
        SynthChoice::Static => SynthKind::Static,
        SynthChoice::Walk => SynthKind::RandomWalk { step_sigma: scale },
        SynthChoice::Uniform => SynthKind::Uniform { side: scale },
    };
    let mut traces = Vec::with_capacity(count);
    for i in 0..count {
        let mut tr = synth_trace(
            kind,
            n,
            dt,
            &mut derive(s.seed, &["synth".into(), i.into()]),
        )?;
        tr.sample_index = i;
        traces.push(tr);
    }
    write_query_traces(&traces, create(out)?)?;
    println!("traces={count} queries={}", count * n);
    Ok(())
}

fn cmd_run(
    s: &Settings,
    traces: &Path,
    out: &Path,
    mechanism: MechanismChoice,
    mode: ModeChoice,
    skip: bool,
    index: usize,
) -> anyhow::Result<()> {
    let all = read_query_traces(open(traces)?)?;
    let Some(trace) = all.get(index) else {
        bail!(
            "{} holds {} traces; index {index} is out of range",
            traces.display(),
            all.len()
        );
    };
    let kind = match mechanism {
        MechanismChoice::Pm => {
            let m = if mode == ModeChoice::FixedRate {
                s.fixed_rate()
            } else {
                s.fixed_utility()
            };
            MechanismKind::Predictive(s.manager(m, skip)?)
        }
        MechanismChoice::Im => {
            let eps_n = match mode {
                ModeChoice::FixedRate => s.rho(),
                ModeChoice::FixedUtility => {
                    s.manager(s.fixed_utility(), false)?.constants()?.c_n / s.alpha_m
                }
            };
            MechanismKind::Independent {
                eps_n,
                eps_total: s.eps_total()?,
            }
        }
    };
    let spec = MechanismSpec {
        name: "run".into(),
        skip,
        kind,
    };
    let run = spec.run(&trace.points, seeded(s.seed))?;
    run.write_csv(create(out)?)?;
    println!(
        "steps={} hard={} spent={} exhausted={}",
        run.len(),
        run.hard_steps(),
        run.total_spend(),
        run.is_exhausted()
    );
    Ok(())
}

fn cmd_evaluate(s: &Settings, traces: &Path, out: &Path) -> anyhow::Result<()> {
    let all = read_query_traces(open(traces)?)?;
    let specs = s.experiment()?.specs()?;
    let rows = run_experiment(&all, &specs, s.seed, s.jobs)?;
    write_metrics_csv(&rows, create(out)?)?;
    println!("traces={} rows={}", all.len(), rows.len());
    Ok(())
}

fn cmd_verify(
    s: &Settings,
    suite: Option<SuiteChoice>,
    inject_overflow: bool,
    budget_traces: usize,
    utility_steps: usize,
) -> anyhow::Result<bool> {
    let cfg = geoind::eval::VerifyConfig {
        budget_traces,
        utility_steps,
        inject_overflow,
        ..s.verify()?
    };
    let suites: Vec<Suite> = match suite {
        Some(one) => vec![one.into()],
        None => Suite::ALL.to_vec(),
    };
    let mut all = true;
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    for suite in suites {
        let r = run_suite(suite, &cfg)?;
        all &= r.passed;
        writeln!(
            w,
            "{} {}: {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.suite,
            r.detail
        )?;
    }
    Ok(all)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = (|| -> anyhow::Result<bool> {
        let mut s = Settings::load(cli.config.as_deref())?;
        cli.overrides.apply(&mut s);
        match &cli.command {
            Command::Ingest { paths, format, out } => cmd_ingest(paths, *format, out)?,
            Command::Sample { store, out, p } => cmd_sample(&s, store, out, *p)?,
            Command::Synth {
                kind,
                scale_m,
                n,
                dt_s,
                count,
                out,
            } => cmd_synth(&s, *kind, *scale_m, *n, *dt_s, *count, out)?,
            Command::Run {
                traces,
                out,
                mechanism,
                mode,
                skip,
                trace_index,
            } => cmd_run(&s, traces, out, *mechanism, *mode, *skip, *trace_index)?,
            Command::Evaluate { traces, out } => cmd_evaluate(&s, traces, out)?,
            Command::Verify {
                suite,
                inject_overflow,
                budget_traces,
                utility_steps,
            } => return cmd_verify(&s, *suite, *inject_overflow, *budget_traces, *utility_steps),
            Command::Defaults => print!("{}", s.to_toml()),
        }
        Ok(true)
    })();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
