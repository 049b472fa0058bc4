//! Command-line front end. Exit codes: 0 success (a run that did not
//! diverge), 1 error, 2 diverged run or failed check.

use std::fmt::Write as _;
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::advisor::{recommend, TheoryParams};
use crate::diagnostics::{
    check_theorem2_rate, check_trace, ergodic_gaps, observed_delay_bounds, CheckReport, CheckStatus, RateReport,
};
use crate::engine::{InitialPoint, RunTrace, Scheme, StopRule};
use crate::experiment::{
    threads_from_env, ExperimentSpec, GammaChoice, InstanceSpec, OutputSpec, ReferenceChoice, Resolved, RhoChoice,
    RunSummary,
};
use crate::netrun::{master_serve, worker_serve, Jitter, MasterConfig, WorkerOptions};
use crate::problems::{read_instance, write_instance_files, write_shards};
use crate::scheduler::Schedule;
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "admm-async", version, about = "Synchronous and asynchronous consensus ADMM")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an instance container, its JSON sidecar and per-worker shards.
    Gen(GenArgs),
    /// Run one experiment and write its trace, schedule and summary.
    Run(RunArgs),
    /// Re-check the convergence inequalities on a recorded trace.
    Check(CheckArgs),
    /// Merge traces into one long-format CSV for plotting.
    Report(ReportArgs),
    /// Print recommended penalty and proximal weights.
    Advise(AdviseArgs),
    /// Run a grid of experiments in parallel.
    Sweep(SweepArgs),
    /// Serve an AD-ADMM run over TCP.
    Master(MasterArgs),
    /// Connect to a master and serve one block.
    Worker(WorkerArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SpecArgs {
    /// Named preset: fig2, fig3a, fig3b, fig3c or fig3d.
    #[arg(long, conflicts_with = "spec")]
    pub preset: Option<String>,
    /// Experiment spec in JSON.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Shrink m, n, nnz (and N, not below min(N, 8)) by this factor.
    #[arg(long)]
    pub scale: Option<f64>,
}

impl SpecArgs {
    fn load(&self) -> Result<ExperimentSpec> {
        let spec = match (&self.preset, &self.spec) {
            (Some(p), None) => ExperimentSpec::preset(p, 1.0)?,
            (None, Some(path)) => ExperimentSpec::read(path)?,
            _ => return Err(Error::InvalidArgument("give exactly one of --preset or --spec".into())),
        };
        match self.scale {
            Some(s) => Ok(ExperimentSpec {
                instance: spec.instance.scaled(s)?,
                ..spec
            }),
            None => Ok(spec),
        }
    }
}

/// `advisor`, `beta=<β>` or a number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoArg(pub RhoChoice);

impl FromStr for RhoArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "advisor" {
            return Ok(RhoArg(RhoChoice::Advisor));
        }
        if let Some(b) = s.strip_prefix("beta=") {
            return b
                .parse()
                .map(|b| RhoArg(RhoChoice::SpectralMultiple(b)))
                .map_err(|_| format!("bad beta '{b}'"));
        }
        s.parse()
            .map(|v| RhoArg(RhoChoice::Value(v)))
            .map_err(|_| format!("expected a number, 'advisor' or 'beta=<x>', got '{s}'"))
    }
}

/// `advisor` or a number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaArg(pub GammaChoice);

impl FromStr for GammaArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "advisor" {
            return Ok(GammaArg(GammaChoice::Advisor));
        }
        s.parse()
            .map(|v| GammaArg(GammaChoice::Value(v)))
            .map_err(|_| format!("expected a number or 'advisor', got '{s}'"))
    }
}

#[derive(Debug, Clone, Args)]
pub struct Overrides {
    /// Seed of the arrival process.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed of the generated instance.
    #[arg(long)]
    pub instance_seed: Option<u64>,
    /// Use this container instead of generating the instance.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long)]
    pub rho: Option<RhoArg>,
    #[arg(long)]
    pub gamma: Option<GammaArg>,
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long)]
    pub min_arrivals: Option<usize>,
    /// sync, ad-admm or alternative.
    #[arg(long)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Stop once the largest KKT residual is at most this value.
    #[arg(long)]
    pub kkt_tol: Option<f64>,
    /// Skip computing a reference value.
    #[arg(long)]
    pub no_reference: bool,
}

impl Overrides {
    fn apply(&self, mut spec: ExperimentSpec) -> ExperimentSpec {
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(s) = self.instance_seed {
            spec.instance = spec.instance.with_seed(s);
        }
        if let Some(p) = &self.instance {
            spec.instance = InstanceSpec::File { path: p.clone() };
        }
        if let Some(r) = self.rho {
            spec.rho = r.0;
        }
        if let Some(g) = self.gamma {
            spec.gamma = g.0;
        }
        if let Some(t) = self.tau {
            spec.tau = t;
        }
        if let Some(a) = self.min_arrivals {
            spec.min_arrivals = a;
        }
        if let Some(s) = self.scheme {
            spec.scheme = s;
        }
        if let Some(k) = self.iters {
            spec.iters = k;
        }
        if self.kkt_tol.is_some() {
            spec.kkt_tolerance = self.kkt_tol;
        }
        if self.no_reference {
            spec.reference = ReferenceChoice::None;
        }
        spec
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Container path; the sidecar and shards are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Also compute the spec's reference value and store it in the sidecar.
    #[arg(long)]
    pub reference: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Directory for trace.csv, schedule.jsonl, summary.json and spec.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also keep every iterate (needed for the ergodic-rate check).
    #[arg(long)]
    pub iterates: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub instance: PathBuf,
    /// Delay bound; defaults to the largest delay seen in the trace plus one.
    #[arg(long)]
    pub tau: Option<usize>,
    /// Arrival-set bound; defaults to min(N, max|A_k| + 1).
    #[arg(long)]
    pub s: Option<usize>,
    /// Lower bound for the Lagrangian check; defaults to the reference value.
    #[arg(long)]
    pub f_lower: Option<f64>,
    /// Iterates file for the ergodic-rate check.
    #[arg(long)]
    pub iterates: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AdviseArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long, conflicts_with_all = ["preset", "spec"])]
    pub instance: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub tau: usize,
    /// Arrival-set bound; defaults to a dry-run schedule (presets) or N.
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Comma-separated delay bounds.
    #[arg(long, value_delimiter = ',')]
    pub taus: Vec<usize>,
    /// Comma-separated penalties (numbers, `advisor` or `beta=<x>`).
    #[arg(long, value_delimiter = ',')]
    pub rhos: Vec<RhoArg>,
    /// Comma-separated schemes.
    #[arg(long, value_delimiter = ',')]
    pub schemes: Vec<Scheme>,
    /// Concurrent runs; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct MasterArgs {
    /// Full instance container (the master evaluates residuals on it).
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7878")]
    pub bind: String,
    #[arg(long)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1)]
    pub tau: usize,
    #[arg(long, default_value_t = 1)]
    pub min_arrivals: usize,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long)]
    pub kkt_tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct WorkerArgs {
    /// Single-block container written by `gen`.
    #[arg(long)]
    pub shard: PathBuf,
    #[arg(long)]
    pub id: u16,
    #[arg(long, default_value = "127.0.0.1:7878")]
    pub connect: String,
    #[arg(long)]
    pub rho: f64,
    /// Sleep up to this many milliseconds before each reply.
    #[arg(long)]
    pub jitter_ms: Option<u64>,
}

fn print_json(value: &impl Serialize) -> Result<String> {
    let text = serde_json::to_string_pretty(value)?;
    stdout(&format!("{text}\n"))?;
    Ok(text)
}

/// Writes to stdout; a closed pipe is not an error.
fn stdout(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_gen(args: &GenArgs) -> Result<i32> {
    let mut spec = args.spec.load()?;
    if let Some(s) = args.seed {
        spec.instance = spec.instance.with_seed(s);
    }
    let mut instance = spec.instance.build()?;
    if args.reference {
        spec.iters = 1;
        instance = spec.resolve_with(instance)?.instance;
    }
    let meta = spec.instance.meta(&instance);
    write_instance_files(&args.out, &instance, &meta)?;
    let shards = write_shards(&args.out, &instance)?;
    eprintln!("wrote {} and {} shards", args.out.display(), shards.len());
    print_json(&meta)?;
    Ok(EXIT_OK)
}

/// Runs a resolved spec and writes its outputs.
pub fn execute(spec: &ExperimentSpec, resolved: &Resolved) -> Result<(RunTrace, RunSummary)> {
    let started = Instant::now();
    let trace = resolved.run()?;
    let summary = RunSummary::new(&spec.name, resolved, &trace, started.elapsed().as_secs_f64());
    let out = &spec.output;
    if let Some(p) = &out.trace {
        write_text(p, &trace.to_csv())?;
    }
    if let (Some(p), Some(s)) = (&out.schedule, &resolved.schedule) {
        write_text(p, &s.truncated(trace.iterations()).to_jsonl())?;
    }
    if let Some(p) = &out.iterates {
        trace.write_iterates(p)?;
    }
    if let Some(p) = &out.summary {
        write_text(p, &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    }
    Ok((trace, summary))
}

fn exit_for(summary: &RunSummary) -> i32 {
    if summary.diverged {
        EXIT_DIVERGED
    } else {
        EXIT_OK
    }
}

fn cmd_run(args: &RunArgs) -> Result<i32> {
    let mut spec = args.overrides.apply(args.spec.load()?);
    spec.store_iterates |= args.iterates;
    if let Some(dir) = &args.out {
        spec.output = OutputSpec::in_dir(dir);
        if args.iterates {
            spec.output.iterates = Some(dir.join("iterates.bin"));
        }
        write_text(&dir.join("spec.json"), &(spec.to_json() + "\n"))?;
    }
    let resolved = spec.resolve()?;
    let (_, summary) = execute(&spec, &resolved)?;
    print_json(&summary)?;
    Ok(exit_for(&summary))
}

#[derive(Debug, Serialize)]
struct CheckOutput {
    #[serde(flatten)]
    report: CheckReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate: Option<RateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate_note: Option<String>,
    lemma3_note: Option<String>,
}

fn cmd_check(args: &CheckArgs) -> Result<i32> {
    let trace = RunTrace::read_csv(&args.trace)?;
    let instance = read_instance(&args.instance)?;
    if trace.n_workers != instance.n_workers() || trace.dim != instance.dim() {
        return Err(Error::InvalidArgument(format!(
            "trace is for N={}, n={} but the instance has N={}, n={}",
            trace.n_workers,
            trace.dim,
            instance.n_workers(),
            instance.dim()
        )));
    }
    let (tau_seen, s_seen) = observed_delay_bounds(&trace)?;
    let tau = args.tau.unwrap_or(tau_seen);
    let s = args.s.unwrap_or(s_seen);
    let f_lower = args
        .f_lower
        .or_else(|| instance.reference.map(|r| r.value))
        .or(trace.reference_value);
    let report = check_trace(&trace, &instance, tau, s, f_lower)?;
    let lemma3_note = (!instance.is_convex() && report.lemma3.is_some()).then(|| {
        "non-convex instance: the lower bound is an observed value, so a pass is only a necessary condition".into()
    });
    let (rate, rate_note) = match (&args.iterates, f_lower) {
        (Some(p), Some(f)) => {
            let its = RunTrace::read_iterates(p)?;
            match check_theorem2_rate(&ergodic_gaps(&instance, &its, f)?) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            }
        }
        (Some(_), None) => (None, Some("no reference value for the ergodic gap".into())),
        (None, _) => (None, None),
    };
    let failed = report.lemma1.as_ref().is_some_and(|r| r.status == CheckStatus::Fail)
        || report.lemma2.status == CheckStatus::Fail
        || report.lemma3.as_ref().is_some_and(|r| r.status == CheckStatus::Fail)
        || !report.identity_ok;
    let text = print_json(&CheckOutput {
        report,
        rate,
        rate_note,
        lemma3_note,
    })?;
    if let Some(p) = &args.out {
        write_text(p, &(text + "\n"))?;
    }
    Ok(if failed { EXIT_DIVERGED } else { EXIT_OK })
}

fn run_id(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match path.parent().and_then(|p| p.file_name()) {
        Some(dir) if stem == "trace" => dir.to_string_lossy().into_owned(),
        _ => stem,
    }
}

/// Long-format CSV `run_id,k,[accuracy,]lagrangian,kkt_worker,kkt_master,kkt_consensus`.
/// The accuracy column is present only when every trace has a non-zero
/// reference value.
pub fn report_csv(traces: &[(String, RunTrace)]) -> (String, Option<String>) {
    let with_accuracy = traces
        .iter()
        .all(|(_, t)| t.reference_value.is_some_and(|f| f != 0.0 && f.is_finite()));
    let warning = (!with_accuracy).then(|| "some traces carry no reference value; accuracy column omitted".to_string());
    let mut out = String::from("run_id,k,");
    if with_accuracy {
        out.push_str("accuracy,");
    }
    out.push_str("lagrangian,kkt_worker,kkt_master,kkt_consensus\n");
    for (id, t) in traces {
        for r in &t.records {
            let _ = write!(out, "{id},{},", r.k);
            if let Some(f) = t.reference_value.filter(|_| with_accuracy) {
                let _ = write!(out, "{:.16e},", (r.lagrangian - f).abs() / f.abs());
            }
            let master = r
                .kkt
                .master_stationarity
                .map(|v| format!("{v:.16e}"))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{master},{:.16e}",
                r.lagrangian, r.kkt.worker_stationarity, r.kkt.consensus
            );
        }
    }
    (out, warning)
}

fn cmd_report(args: &ReportArgs) -> Result<i32> {
    let traces = args
        .traces
        .iter()
        .map(|p| Ok((run_id(p), RunTrace::read_csv(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let (csv, warning) = report_csv(&traces);
    if let Some(w) = warning {
        eprintln!("warning: {w}");
    }
    match &args.out {
        Some(p) => write_text(p, &csv)?,
        None => stdout(&csv)?,
    }
    Ok(EXIT_OK)
}

fn cmd_advise(args: &AdviseArgs) -> Result<i32> {
    let (instance, schedule) = match &args.instance {
        Some(p) => (read_instance(p)?, None),
        None => {
            let mut spec = args.spec.load()?;
            spec.tau = args.tau;
            spec.reference = ReferenceChoice::None;
            spec.rho = RhoChoice::Value(1.0);
            spec.gamma = GammaChoice::Value(0.0);
            spec.iters = spec.iters.max(1);
            if spec.scheme == Scheme::Sync {
                spec.scheme = Scheme::AdAdmm;
            }
            let r = spec.resolve()?;
            (r.instance, r.schedule)
        }
    };
    let mut theory = TheoryParams::from_instance(&instance, args.tau, schedule.as_ref());
    if let Some(s) = args.s {
        theory.s = s;
    }
    let rec = recommend(&theory, instance.is_convex())?;
    let text = print_json(&rec)?;
    if let Some(p) = &args.out {
        write_text(p, &(text + "\n"))?;
    }
    Ok(EXIT_OK)
}

fn rho_label(r: RhoChoice) -> String {
    match r {
        RhoChoice::Value(v) => format!("rho{v}"),
        RhoChoice::Advisor => "rho-advisor".into(),
        RhoChoice::SpectralMultiple(b) => format!("beta{b}"),
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    let base = args.overrides.apply(args.spec.load()?);
    let taus = if args.taus.is_empty() {
        vec![base.tau]
    } else {
        args.taus.clone()
    };
    let rhos: Vec<RhoChoice> = if args.rhos.is_empty() {
        vec![base.rho]
    } else {
        args.rhos.iter().map(|r| r.0).collect()
    };
    let schemes = if args.schemes.is_empty() {
        vec![base.scheme]
    } else {
        args.schemes.clone()
    };
    // The instance and its reference are shared by every configuration.
    let resolved_base = base.resolve()?;
    let mut specs = Vec::new();
    for &scheme in &schemes {
        for &rho in &rhos {
            for &tau in &taus {
                let name = format!("{}-{}-{}-tau{tau}", base.name, scheme.name(), rho_label(rho));
                let dir = args.out.join(&name);
                specs.push(ExperimentSpec {
                    name,
                    scheme,
                    rho,
                    tau,
                    reference: match resolved_base.instance.reference {
                        Some(r) => ReferenceChoice::Value { value: r.value },
                        None => ReferenceChoice::None,
                    },
                    output: OutputSpec::in_dir(&dir),
                    ..base.clone()
                });
            }
        }
    }
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
    let results: Vec<Result<RunSummary>> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| {
                let resolved = spec.resolve_with(resolved_base.instance.clone())?;
                write_text(&args.out.join(&spec.name).join("spec.json"), &(spec.to_json() + "\n"))?;
                execute(spec, &resolved).map(|(_, s)| s)
            })
            .collect()
    });
    let summaries = results.into_iter().collect::<Result<Vec<_>>>()?;
    let text = print_json(&summaries)?;
    write_text(&args.out.join("sweep.json"), &(text + "\n"))?;
    Ok(EXIT_OK)
}

fn cmd_master(args: &MasterArgs) -> Result<i32> {
    let instance = read_instance(&args.instance)?;
    let mut params = crate::engine::AlgoParams::new(Scheme::AdAdmm, args.rho, args.gamma, args.iters);
    params.stop = match args.kkt_tol {
        Some(t) => StopRule::with_kkt_tolerance(args.iters, t),
        None => StopRule::iterations(args.iters),
    };
    params.initial = InitialPoint::Zero;
    params.threads = threads_from_env()?;
    let config = MasterConfig {
        params,
        tau: args.tau,
        min_arrivals: args.min_arrivals,
    };
    let listener = TcpListener::bind(&args.bind)?;
    eprintln!(
        "listening on {} for {} workers",
        listener.local_addr()?,
        instance.n_workers()
    );
    let started = Instant::now();
    let out = master_serve(&instance, &config, listener)?;
    let resolved = Resolved {
        instance,
        params: config.params.clone(),
        schedule: Some(out.schedule.clone()),
        tau: args.tau,
    };
    let summary = RunSummary::new("master", &resolved, &out.trace, started.elapsed().as_secs_f64());
    if let Some(dir) = &args.out {
        write_text(&dir.join("trace.csv"), &out.trace.to_csv())?;
        write_text(&dir.join("schedule.jsonl"), &out.schedule.to_jsonl())?;
        write_text(
            &dir.join("summary.json"),
            &(serde_json::to_string_pretty(&summary)? + "\n"),
        )?;
    }
    print_json(&summary)?;
    Ok(exit_for(&summary))
}

fn cmd_worker(args: &WorkerArgs) -> Result<i32> {
    let shard = read_instance(&args.shard)?;
    if shard.n_workers() != 1 {
        return Err(Error::InvalidArgument(format!(
            "{} holds {} blocks; a worker shard holds one",
            args.shard.display(),
            shard.n_workers()
        )));
    }
    let opts = WorkerOptions {
        jitter: args.jitter_ms.map(|ms| Jitter {
            max: Duration::from_millis(ms),
            seed: u64::from(args.id),
        }),
        ..WorkerOptions::default()
    };
    let report = worker_serve(&shard.blocks()[0], args.rho, args.id, args.connect.as_str(), &opts)?;
    eprintln!(
        "worker {} sent {} updates; shutdown reason {}",
        args.id, report.updates, report.shutdown_reason
    );
    Ok(EXIT_OK)
}

pub fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Check(a) => cmd_check(a),
        Command::Report(a) => cmd_report(a),
        Command::Advise(a) => cmd_advise(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Master(a) => cmd_master(a),
        Command::Worker(a) => cmd_worker(a),
    }
}

/// Parses `std::env::args`, runs the command and returns the exit code.
pub fn main() -> i32 {
    // Usage errors exit 1; clap's own code 2 would read as "diverged".
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

/// Schedule stored next to a trace by `run`.
pub fn read_schedule(dir: &Path) -> Result<Schedule> {
    Schedule::read_jsonl(&dir.join("schedule.jsonl"))
}
