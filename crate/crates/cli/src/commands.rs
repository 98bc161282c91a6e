use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use biharmonic_core::asymptotics::{
    analyze, gamma_over_6, kappa_from_growth, kappa_from_identity, max_relative_spread,
    scale_to_target, AsymptoticsReport, KappaEstimate, ScalingMap,
};
use biharmonic_core::io::{write_atomic, write_phase_csv, write_trajectory_csv};
use biharmonic_core::phase_space::{fixed_point_report, fixed_points, phase_trajectory};
use biharmonic_core::radial_ode::{
    integrate, Controls, ProblemParams, SolutionClass, StepStats, Trajectory,
};
use biharmonic_core::shooting::{
    find_beta_star_cached, gamma_limit, BetaStarCache, GammaEstimate, ShootingOptions,
};
use biharmonic_core::verify::{Suite, Verifier, VerifyConfig};
use biharmonic_core::Error;
use serde::Serialize;

use crate::args::*;

/// Process outcome other than success; the variant fixes the exit code.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Numeric(String),
    Verification(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Numeric(_) => 2,
            Failure::Verification(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::Numeric(m) => write!(f, "{m}"),
            Failure::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParams(_)
            | Error::OutOfRange(_)
            | Error::OutOfRegime(_)
            | Error::DegenerateScaling(_)
            | Error::BelowThreshold { .. } => Failure::Validation(e.to_string()),
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, B: Serialize> {
    command: &'a str,
    tool_version: &'a str,
    config: &'a C,
    #[serde(flatten)]
    body: B,
}

fn emit<C: Serialize, B: Serialize>(
    command: &str,
    config: &C,
    body: B,
    report: Option<&Path>,
) -> CmdResult {
    let env = Envelope {
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        config,
        body,
    };
    let text = serde_json::to_string_pretty(&env).map_err(|e| Failure::Numeric(e.to_string()))?;
    if let Some(path) = report {
        write_atomic(path, format!("{text}\n").as_bytes())?;
    }
    print_stdout(&text);
    Ok(())
}

/// Print to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print_stdout(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}").and_then(|_| out.flush());
}

fn write_csv(
    path: &Path,
    f: impl FnOnce(BufWriter<File>) -> biharmonic_core::Result<()>,
) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::Numeric(format!("{}: {e}", dir.display())))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let file =
        File::create(&tmp).map_err(|e| Failure::Numeric(format!("{}: {e}", tmp.display())))?;
    f(BufWriter::new(file))?;
    std::fs::rename(&tmp, path).map_err(|e| Failure::Numeric(format!("{}: {e}", path.display())))
}

fn positive(name: &str, x: f64) -> CmdResult {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!(
            "{name} must be positive and finite (got {x})"
        )))
    }
}

fn check_q(q: f64) -> CmdResult {
    if q.is_finite() && q > 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("q must exceed 1 (got {q})")))
    }
}

impl IntegrationArgs {
    fn controls(&self) -> Result<Controls, Failure> {
        let c = Controls::default()
            .with_tolerances(self.rtol, self.atol)
            .with_samples_per_decade(self.samples_per_decade);
        c.validate()?;
        positive("r-stop", self.r_stop)?;
        Ok(c)
    }
}

impl CacheArgs {
    fn validate(&self) -> CmdResult {
        positive("tol", self.tol)?;
        positive("horizon", self.horizon)
    }

    fn open(&self) -> Result<BetaStarCache, Failure> {
        Ok(match &self.cache {
            Some(path) => BetaStarCache::open(path)?,
            None => BetaStarCache::in_memory(),
        })
    }

    fn options(&self) -> ShootingOptions {
        ShootingOptions {
            horizon: self.horizon,
            ..ShootingOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
struct ResolvedBeta {
    beta: f64,
    beta_star: Option<f64>,
}

impl BetaArgs {
    fn validate(&self) -> CmdResult {
        check_q(self.q)?;
        positive("u0", self.u0)?;
        match (self.beta, self.beta_above_star) {
            (Some(b), None) => positive("beta", b),
            (None, Some(d)) if d.is_finite() => Ok(()),
            (None, Some(d)) => Err(invalid(format!("beta offset must be finite (got {d})"))),
            _ => Err(invalid("give exactly one of --beta and --beta-above-star")),
        }
    }

    fn resolve(&self, cache: &CacheArgs) -> Result<ResolvedBeta, Failure> {
        match (self.beta, self.beta_above_star) {
            (Some(beta), _) => Ok(ResolvedBeta {
                beta,
                beta_star: None,
            }),
            (None, Some(offset)) => {
                let star = beta_star(self.q, cache)?;
                let beta = star + offset;
                positive("resolved beta", beta)?;
                Ok(ResolvedBeta {
                    beta,
                    beta_star: Some(star),
                })
            }
            _ => Err(invalid("give exactly one of --beta and --beta-above-star")),
        }
    }
}

fn beta_star(q: f64, cache: &CacheArgs) -> Result<f64, Failure> {
    let mut store = cache.open()?;
    let (entry, _) = find_beta_star_cached(q, cache.tol, &cache.options(), &mut store)?;
    Ok(entry.beta_star())
}

fn problem(
    beta: &BetaArgs,
    resolved: ResolvedBeta,
    integration: &IntegrationArgs,
) -> Result<ProblemParams, Failure> {
    let p = ProblemParams::new(beta.q, resolved.beta)?
        .with_u0(beta.u0)
        .with_r_stop(integration.r_stop);
    p.validate()?;
    Ok(p)
}

/// Validate everything, resolve β and integrate.
fn run_ivp(
    beta: &BetaArgs,
    integration: &IntegrationArgs,
    cache: &CacheArgs,
) -> Result<(ResolvedBeta, Trajectory), Failure> {
    beta.validate()?;
    let controls = integration.controls()?;
    cache.validate()?;
    let resolved = beta.resolve(cache)?;
    let params = problem(beta, resolved, integration)?;
    Ok((resolved, integrate(&params, &controls)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct KappaRoutes {
    pub growth: KappaEstimate,
    pub identity: f64,
    pub gamma_over_6: f64,
    pub spread: f64,
}

fn kappa_routes(traj: &Trajectory) -> biharmonic_core::Result<KappaRoutes> {
    let growth = kappa_from_growth(traj, None)?;
    let identity = kappa_from_identity(traj)?;
    let g6 = gamma_over_6(traj)?;
    Ok(KappaRoutes {
        spread: max_relative_spread(&[growth.value, identity, g6]),
        growth,
        identity,
        gamma_over_6: g6,
    })
}

#[derive(Serialize)]
struct SolveBody {
    beta: f64,
    beta_star: Option<f64>,
    classification: SolutionClass,
    gamma: Option<GammaEstimate>,
    kappa: Option<KappaRoutes>,
    samples: usize,
    r_last: f64,
    step_stats: StepStats,
    notes: Vec<String>,
}

pub fn solve(args: &SolveArgs) -> CmdResult {
    let (resolved, traj) = run_ivp(&args.beta, &args.integration, &args.cache)?;
    if let Some(out) = &args.output.out {
        write_csv(out, |w| write_trajectory_csv(w, &traj.samples))?;
    }
    let mut notes = Vec::new();
    let (gamma, kappa) = if traj.is_global() {
        let gamma = gamma_limit(&traj)
            .map_err(|e| notes.push(format!("gamma: {e}")))
            .ok();
        let kappa = kappa_routes(&traj)
            .map_err(|e| notes.push(format!("kappa: {e}")))
            .ok();
        (gamma, kappa)
    } else {
        (None, None)
    };
    let body = SolveBody {
        beta: resolved.beta,
        beta_star: resolved.beta_star,
        classification: traj.classification.clone(),
        gamma,
        kappa,
        samples: traj.samples.len(),
        r_last: traj.last().r,
        step_stats: traj.step_stats,
        notes,
    };
    emit("solve", args, body, args.output.report.as_deref())
}

#[derive(Serialize)]
struct ShootBody {
    q: f64,
    beta_star: f64,
    beta_lo: f64,
    beta_hi: f64,
    tol: f64,
    horizon: f64,
    timestamp: u64,
    gamma_at_bracket: Option<f64>,
    cache_hit: bool,
}

pub fn shoot(args: &ShootArgs) -> CmdResult {
    check_q(args.q)?;
    args.cache.validate()?;
    let mut opts = args.cache.options();
    opts.controls = opts.controls.with_tolerances(args.rtol, args.atol);
    opts.controls.validate()?;
    let mut store = args.cache.open()?;
    let (entry, cache_hit) = find_beta_star_cached(args.q, args.cache.tol, &opts, &mut store)?;
    let body = ShootBody {
        q: args.q,
        beta_star: entry.beta_star(),
        beta_lo: entry.beta_lo,
        beta_hi: entry.beta_hi,
        tol: entry.tol,
        horizon: entry.horizon,
        timestamp: entry.timestamp,
        gamma_at_bracket: entry.gamma_at_bracket,
        cache_hit,
    };
    emit("shoot", args, body, args.report.as_deref())
}

#[derive(Serialize)]
struct PhaseBody {
    beta: f64,
    beta_star: Option<f64>,
    classification: SolutionClass,
    points: usize,
    skipped: usize,
    consistency_residual: f64,
    terminal: Option<[f64; 5]>,
    nearest_critical_point: Option<(String, f64)>,
}

pub fn phase(args: &PhaseArgs) -> CmdResult {
    let q = args.beta.q;
    let (resolved, traj) = run_ivp(&args.beta, &args.integration, &args.cache)?;
    let path = phase_trajectory(&traj, q)?;
    if let Some(out) = &args.output.out {
        write_csv(out, |w| write_phase_csv(w, &path.points))?;
    }
    if let Some(fp) = &args.fixed_points {
        let report = fixed_point_report(q)?;
        let text =
            serde_json::to_string_pretty(&report).map_err(|e| Failure::Numeric(e.to_string()))?;
        write_atomic(fp, format!("{text}\n").as_bytes())?;
    }
    let terminal = path.points.last().map(|p| [p.t, p.x, p.y, p.z, p.w]);
    let nearest = match path.points.last() {
        Some(last) => fixed_points(q)?
            .points
            .iter()
            .map(|(name, p)| (name.clone(), last.distance_to(p)))
            .min_by(|a, b| a.1.total_cmp(&b.1)),
        None => None,
    };
    let body = PhaseBody {
        beta: resolved.beta,
        beta_star: resolved.beta_star,
        classification: traj.classification.clone(),
        points: path.points.len(),
        skipped: path.skipped.len(),
        consistency_residual: path.consistency_residual,
        terminal,
        nearest_critical_point: nearest,
    };
    emit("phase", args, body, args.output.report.as_deref())
}

#[derive(Serialize)]
struct AsymptoteBody {
    beta_star: Option<f64>,
    #[serde(flatten)]
    report: AsymptoticsReport,
}

pub fn asymptote(args: &AsymptoteArgs) -> CmdResult {
    let (resolved, traj) = run_ivp(&args.beta, &args.integration, &args.cache)?;
    if let Some(out) = &args.output.out {
        write_csv(out, |w| write_trajectory_csv(w, &traj.samples))?;
    }
    let report = analyze(&traj)?;
    let body = AsymptoteBody {
        beta_star: resolved.beta_star,
        report,
    };
    emit("asymptote", args, body, args.output.report.as_deref())
}

#[derive(Serialize)]
struct ScaleBody {
    beta: f64,
    beta_star: Option<f64>,
    source_kappa: f64,
    map: ScalingMap,
    scaled_params: ProblemParams,
    scaled_classification: SolutionClass,
    scaled_kappa: Option<KappaRoutes>,
    relative_error: Option<f64>,
}

pub fn scale(args: &ScaleArgs) -> CmdResult {
    positive("target", args.target)?;
    let (resolved, traj) = run_ivp(&args.beta, &args.integration, &args.cache)?;
    if !traj.is_global() {
        return Err(Failure::Numeric(format!(
            "only global solutions can be rescaled: {:?}",
            traj.classification
        )));
    }
    let source_kappa = kappa_from_identity(&traj)?;
    let scaled = scale_to_target(&traj.params, source_kappa, args.target)?;
    let controls = args.integration.controls()?;
    let scaled_traj = integrate(&scaled.params, &controls)?;
    if let Some(out) = &args.output.out {
        write_csv(out, |w| write_trajectory_csv(w, &scaled_traj.samples))?;
    }
    let scaled_kappa = if scaled_traj.is_global() {
        Some(kappa_routes(&scaled_traj)?)
    } else {
        None
    };
    let relative_error = scaled_kappa
        .as_ref()
        .map(|k| (k.identity - args.target).abs() / args.target);
    let body = ScaleBody {
        beta: resolved.beta,
        beta_star: resolved.beta_star,
        source_kappa,
        map: scaled.map,
        scaled_params: scaled.params,
        scaled_classification: scaled_traj.classification.clone(),
        scaled_kappa,
        relative_error,
    };
    emit("scale", args, body, args.output.report.as_deref())
}

pub fn verify(args: &VerifyArgs) -> CmdResult {
    let config = VerifyConfig {
        suites: if args.suite.is_empty() {
            Suite::ALL.to_vec()
        } else {
            args.suite.clone()
        },
        q_list: args.q_list.clone(),
        rtol: args.rtol,
        atol: args.atol,
        beta_offset: args.beta_offset,
        shoot_tol: args.tol,
    };
    config.validate()?;
    let cache = match &args.cache {
        Some(path) => BetaStarCache::open(path)?,
        None => BetaStarCache::in_memory(),
    };
    let (report, _) = Verifier::new(config, cache).run();
    for rec in &report.records {
        eprintln!("{rec}");
    }
    eprintln!("{} passed, {} failed", report.passed, report.failed);
    let text =
        serde_json::to_string_pretty(&report).map_err(|e| Failure::Numeric(e.to_string()))?;
    if let Some(path) = &args.report {
        write_atomic(path, format!("{text}\n").as_bytes())?;
    }
    print_stdout(&text);
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Verification(format!(
            "{} of {} checks failed",
            report.failed,
            report.records.len()
        )))
    }
}

#[derive(Debug, Clone, Serialize)]
struct SweepJob {
    q: f64,
    beta: f64,
    beta_star: Option<f64>,
    classification: Option<SolutionClass>,
    gamma: Option<f64>,
    kappa: Option<KappaRoutes>,
    csv: Option<PathBuf>,
    error: Option<String>,
}

#[derive(Serialize)]
struct SweepBody {
    jobs: Vec<SweepJob>,
    failed: usize,
}

fn run_job(
    job: &mut SweepJob,
    controls: &Controls,
    r_stop: f64,
    out_dir: Option<&Path>,
) -> Result<(), Failure> {
    let params = ProblemParams::new(job.q, job.beta)?.with_r_stop(r_stop);
    let traj = integrate(&params, controls)?;
    if let Some(dir) = out_dir {
        let path = dir.join(format!("q{}_beta{}.csv", job.q, job.beta));
        write_csv(&path, |w| write_trajectory_csv(w, &traj.samples))?;
        job.csv = Some(path);
    }
    if traj.is_global() {
        job.gamma = gamma_limit(&traj).ok().map(|g| g.corrected);
        job.kappa = kappa_routes(&traj).ok();
    }
    job.classification = Some(traj.classification);
    Ok(())
}

pub fn sweep(args: &SweepArgs) -> CmdResult {
    for &q in &args.q_list {
        check_q(q)?;
    }
    let controls = args.integration.controls()?;
    args.cache.validate()?;
    if args.threads == Some(0) {
        return Err(invalid("threads must be at least 1"));
    }

    // Threshold searches run first and serially: this process alone owns the cache.
    let mut jobs = Vec::new();
    let mut store = args.cache.open()?;
    for &q in &args.q_list {
        let (betas, star) = match (&args.beta_list, &args.offsets) {
            (Some(list), _) => {
                for &b in list {
                    positive("beta", b)?;
                }
                (list.clone(), None)
            }
            (None, Some(offsets)) => {
                let (entry, _) =
                    find_beta_star_cached(q, args.cache.tol, &args.cache.options(), &mut store)?;
                let star = entry.beta_star();
                let betas: Vec<f64> = offsets.iter().map(|d| star + d).collect();
                for &b in &betas {
                    positive("resolved beta", b)?;
                }
                (betas, Some(star))
            }
            (None, None) => return Err(invalid("give --beta-list or --offsets")),
        };
        for beta in betas {
            jobs.push(SweepJob {
                q,
                beta,
                beta_star: star,
                classification: None,
                gamma: None,
                kappa: None,
                csv: None,
                error: None,
            });
        }
    }

    let threads = args
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .min(jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<SweepJob>> = jobs.into_iter().map(Mutex::new).collect();
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(slot) = slots.get(i) else { break };
                let mut job = slot.lock().unwrap();
                if let Err(e) = run_job(
                    &mut job,
                    &controls,
                    args.integration.r_stop,
                    args.out_dir.as_deref(),
                ) {
                    job.error = Some(e.to_string());
                }
            });
        }
    });
    let jobs: Vec<SweepJob> = slots.into_iter().map(|m| m.into_inner().unwrap()).collect();
    let failed = jobs.iter().filter(|j| j.error.is_some()).count();
    emit(
        "sweep",
        args,
        SweepBody { jobs, failed },
        args.report.as_deref(),
    )?;
    if failed > 0 {
        return Err(Failure::Numeric(format!("{failed} sweep jobs failed")));
    }
    Ok(())
}
