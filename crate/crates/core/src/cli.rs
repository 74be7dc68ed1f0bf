//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit status:
//! 0 success or pass, 1 infeasible or counterexample, 2 usage or config
//! error, 3 numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::certificate::{
    BarrierEntry, CertificateError, CertificateFile, LocalEntry, Provenance, VerificationSummary,
    TOOL_VERSION,
};
use crate::compose::{CompositionForm, GlobalBarrier, LocalCertificate};
use crate::config::{ConfigError, ConfigFile};
use crate::sos::SosError;
use crate::synth::{
    benchmark, compose, synthesize_global, synthesize_local, SolveStatus, SynthError,
};
use crate::system::{simulate, Interconnection, SwitchingSignal};
use crate::verify::{
    check_global_barrier, check_local_certificate, monitor_trajectories, VerificationConfig,
    VerificationReport, VerifyError,
};

/// Environment variable supplying the default for `--workers`.
pub const WORKERS_ENV: &str = "COMPBARRIER_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Failure = 1,
    Usage = 2,
    Numerical = 3,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Rejected(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    fn status(&self) -> ExitStatus {
        match self {
            Self::Usage(_) | Self::Config(_) | Self::Certificate(_) | Self::Io { .. } => {
                ExitStatus::Usage
            }
            Self::Numerical(_) => ExitStatus::Numerical,
            Self::Rejected(_) => ExitStatus::Failure,
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Sos(SosError::NonPolynomial(m)) => {
                Self::Rejected(format!("representability check: {m}"))
            }
            SynthError::Params(m) => Self::Usage(m),
            SynthError::Sos(SosError::BadParameter(m)) => Self::Usage(m),
            other => Self::Numerical(other.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Config(m) => Self::Usage(format!("verify: {m}")),
            other => Self::Numerical(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "compbarrier",
    version,
    about = "Compositional barrier certificates for switched impulsive networks"
)]
pub struct Cli {
    /// Parallel width for synthesis and verification.
    #[arg(long, global = true, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Source {
    /// TOML configuration file.
    #[arg(long, conflicts_with = "instance")]
    pub config: Option<PathBuf>,
    /// Built-in instance: `paper-m3` or `ring-m<M>-seed<S>`.
    #[arg(long)]
    pub instance: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Sum,
    Max,
}

impl From<FormArg> for CompositionForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Sum => CompositionForm::Sum,
            FormArg::Max => CompositionForm::Max,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve every local program, compose, verify, write a certificate file.
    SynthLocal {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        form: Option<FormArg>,
        /// Skip the sampled verification.
        #[arg(long)]
        no_verify: bool,
    },
    /// Solve the monolithic program over all states.
    SynthGlobal {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_verify: bool,
    },
    /// Recompose the local certificates of a certificate file.
    Compose {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        certificate: PathBuf,
        #[arg(long, value_enum)]
        form: Option<FormArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check a certificate file by sampling.
    Verify {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        certificate: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the reports as delimited text.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Simulate trajectories from the initial set under random switching.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Monitor this certificate's barrier along the trajectories.
        #[arg(long)]
        certificate: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Time both synthesis paths on seeded ring instances.
    Bench {
        #[command(flatten)]
        source: Source,
        /// Sizes as `A..B` (inclusive) or a comma list.
        #[arg(long)]
        m: Option<String>,
        /// Number of seeds (1..=N).
        #[arg(long)]
        seeds: Option<u64>,
        /// Delimited table output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Full per-run results as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write the configuration of a seeded ring instance.
    GenRing {
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() {
                ExitStatus::Usage as i32
            } else {
                0
            };
        }
    };
    match execute(&cli, out, err) {
        Ok(s) => s as i32,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.status() as i32
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<ExitStatus, CliError> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        // fails harmlessly if a global pool exists already
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global();
    }
    match &cli.command {
        Command::SynthLocal {
            source,
            out: path,
            form,
            no_verify,
        } => synth_local(cli, source, path.as_deref(), *form, *no_verify, out),
        Command::SynthGlobal {
            source,
            out: path,
            no_verify,
        } => synth_global(cli, source, path.as_deref(), *no_verify, out),
        Command::Compose {
            source,
            certificate,
            form,
            out: path,
        } => compose_cmd(source, certificate, *form, path.as_deref(), out),
        Command::Verify {
            source,
            certificate,
            samples,
            seed,
            csv,
        } => verify_cmd(
            source,
            certificate,
            *samples,
            *seed,
            csv.as_deref(),
            out,
            err,
        ),
        Command::Simulate {
            source,
            certificate,
            out: path,
            trajectories,
            seed,
            horizon,
        } => simulate_cmd(
            source,
            certificate.as_deref(),
            path.as_deref(),
            *trajectories,
            *seed,
            *horizon,
            out,
        ),
        Command::Bench {
            source,
            m,
            seeds,
            out: path,
            json,
        } => bench_cmd(
            cli,
            source,
            m.as_deref(),
            *seeds,
            path.as_deref(),
            json.as_deref(),
            out,
            err,
        ),
        Command::GenRing { m, seed, out: path } => {
            let text = ConfigFile::ring(*m, *seed)?.to_toml()?;
            emit(path, &text, out)?;
            Ok(ExitStatus::Success)
        }
    }
}

fn load(source: &Source) -> Result<ConfigFile, CliError> {
    match (&source.config, &source.instance) {
        (Some(p), None) => Ok(ConfigFile::parse(&read(p)?)?),
        (None, Some(name)) => Ok(ConfigFile::builtin(name)?),
        (None, None) => Err(CliError::Usage(
            "give --config <file> or --instance <name>".into(),
        )),
        (Some(_), Some(_)) => Err(CliError::Usage(
            "--config and --instance are exclusive".into(),
        )),
    }
}

fn read(p: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(p).map_err(|source| CliError::Io {
        path: p.display().to_string(),
        source,
    })
}

/// Writes to `path`, or to `out` when no path is given.
fn emit(path: &Option<PathBuf>, text: &str, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| CliError::Io {
            path: p.display().to_string(),
            source,
        }),
        None => out
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io {
                path: "<stdout>".into(),
                source,
            }),
    }
}

fn emit_opt(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), CliError> {
    emit(&path.map(Path::to_path_buf), text, out)
}

fn provenance(cfg: &ConfigFile) -> Result<Provenance, CliError> {
    Ok(Provenance {
        config_name: cfg.name.clone(),
        config_hash: cfg.hash()?,
        seed: cfg.verify.seed,
        tool_version: TOOL_VERSION.into(),
    })
}

/// Local checks for every certificate plus the global check of `barrier`.
fn verify_all(
    cfg: &ConfigFile,
    ic: &Interconnection,
    locals: &[LocalCertificate],
    barrier: Option<&GlobalBarrier>,
    vcfg: &VerificationConfig,
) -> Result<Vec<VerificationReport>, CliError> {
    let mut reports = Vec::new();
    for (i, c) in locals.iter().enumerate() {
        reports.push(check_local_certificate(c, ic, i, vcfg)?);
    }
    if let Some(b) = barrier {
        let sys = ic.flatten().map_err(|e| CliError::Usage(e.to_string()))?;
        let sets = cfg.global_sets(ic)?;
        reports.push(check_global_barrier(b, &sys, &sets, vcfg)?);
    }
    Ok(reports)
}

fn status_of(outcomes: &[&crate::synth::SolveOutcome]) -> ExitStatus {
    if outcomes.iter().any(|o| o.status == SolveStatus::Infeasible) {
        ExitStatus::Failure
    } else if outcomes
        .iter()
        .any(|o| o.status == SolveStatus::NumericalFailure)
    {
        ExitStatus::Numerical
    } else {
        ExitStatus::Success
    }
}

fn synth_local(
    cli: &Cli,
    source: &Source,
    path: Option<&Path>,
    form: Option<FormArg>,
    no_verify: bool,
    out: &mut dyn Write,
) -> Result<ExitStatus, CliError> {
    let cfg = load(source)?;
    let ic = cfg.interconnection()?;
    let mut params = cfg.synthesis.clone();
    if let Some(f) = form {
        params.form = f.into();
    }
    params.workers = cli.workers.unwrap_or(params.workers);
    let res = synthesize_local(&ic, &params)?;
    let mut text = res.report.render_text();
    let outcomes: Vec<_> = res.report.subsystems.iter().collect();
    let solve_status = status_of(&outcomes);
    let Some(locals) = res.complete() else {
        let _ = writeln!(text, "synthesis incomplete: no certificate written");
        emit_opt(None, &text, out)?;
        return Ok(solve_status);
    };
    let mut status = ExitStatus::Success;
    if res.barrier.is_none() {
        status = ExitStatus::Failure;
    }
    let mut verification = None;
    if !no_verify {
        let reports = verify_all(&cfg, &ic, &locals, res.barrier.as_ref(), &cfg.verify)?;
        for r in &reports {
            text.push_str(&r.render_text());
        }
        let summary =
            VerificationSummary::from_reports(cfg.verify.samples, cfg.verify.tolerance, &reports);
        if !summary.passed() {
            status = ExitStatus::Failure;
        }
        verification = Some(summary);
    }
    let file = CertificateFile {
        provenance: provenance(&cfg)?,
        locals: locals
            .iter()
            .zip(&ic.subsystems)
            .map(|(c, s)| LocalEntry::new(&s.name, c))
            .collect(),
        gain: res.gain.clone(),
        barrier: res.barrier.as_ref().map(BarrierEntry::new),
        verification,
        report: Some(res.report.clone()),
    };
    write_certificate(path, &file, &mut text, out)?;
    Ok(status)
}

fn write_certificate(
    path: Option<&Path>,
    file: &CertificateFile,
    text: &mut String,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let json = file.to_json()?;
    match path {
        Some(p) => {
            emit_opt(Some(p), &json, out)?;
            let _ = writeln!(text, "certificate written to {}", p.display());
            emit_opt(None, text, out)
        }
        None => {
            emit_opt(None, text, out)?;
            emit_opt(None, &json, out)?;
            emit_opt(None, "\n", out)
        }
    }
}

fn synth_global(
    cli: &Cli,
    source: &Source,
    path: Option<&Path>,
    no_verify: bool,
    out: &mut dyn Write,
) -> Result<ExitStatus, CliError> {
    let cfg = load(source)?;
    let ic = cfg.interconnection()?;
    let sys = ic.flatten().map_err(|e| CliError::Usage(e.to_string()))?;
    let sets = cfg.global_sets(&ic)?;
    let mut params = cfg.synthesis.clone();
    params.workers = cli.workers.unwrap_or(params.workers);
    let res = synthesize_global(&sys, &sets, &params)?;
    let mut text = res.report.render_text();
    let Some(barrier) = res.barrier else {
        emit_opt(None, &text, out)?;
        return Ok(status_of(&res.report.global.iter().collect::<Vec<_>>()));
    };
    let mut status = ExitStatus::Success;
    let mut verification = None;
    if !no_verify {
        let rep = check_global_barrier(&barrier, &sys, &sets, &cfg.verify)?;
        text.push_str(&rep.render_text());
        let summary =
            VerificationSummary::from_reports(cfg.verify.samples, cfg.verify.tolerance, &[rep]);
        if !summary.passed() {
            status = ExitStatus::Failure;
        }
        verification = Some(summary);
    }
    let file = CertificateFile {
        provenance: provenance(&cfg)?,
        locals: Vec::new(),
        gain: None,
        barrier: Some(BarrierEntry::new(&barrier)),
        verification,
        report: Some(res.report),
    };
    write_certificate(path, &file, &mut text, out)?;
    Ok(status)
}

fn load_certificate(p: &Path) -> Result<CertificateFile, CliError> {
    Ok(CertificateFile::from_json(&read(p)?)?)
}

fn compose_cmd(
    source: &Source,
    certificate: &Path,
    form: Option<FormArg>,
    path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<ExitStatus, CliError> {
    let cfg = load(source)?;
    let ic = cfg.interconnection()?;
    let mut file = load_certificate(certificate)?;
    let locals = file.local_certificates()?;
    if locals.len() != ic.len() {
        return Err(CliError::Usage(format!(
            "certificate has {} local barriers, configuration has {} subsystems",
            locals.len(),
            ic.len()
        )));
    }
    let form = form.map(Into::into).unwrap_or(cfg.synthesis.form);
    let (gain, barrier) = match compose(&ic, &locals, form) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(out, "composition failed: {e}");
            return Ok(ExitStatus::Failure);
        }
    };
    let mut text = String::new();
    let w: Vec<String> = barrier.weights.iter().map(|v| format!("{v:.6}")).collect();
    let _ = writeln!(
        text,
        "{:?} form, weights ({}), decay rate {:.6e}, spectral radius {:.6e}, eta {:.6e}",
        barrier.form,
        w.join(", "),
        barrier.lambda_eff,
        gain.mu,
        gain.eta
    );
    file.gain = Some(gain);
    file.barrier = Some(BarrierEntry::new(&barrier));
    file.verification = None;
    write_certificate(path, &file, &mut text, out)?;
    Ok(ExitStatus::Success)
}

fn verify_cmd(
    source: &Source,
    certificate: &Path,
    samples: Option<usize>,
    seed: Option<u64>,
    csv: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<ExitStatus, CliError> {
    let cfg = load(source)?;
    let ic = cfg.interconnection()?;
    let file = load_certificate(certificate)?;
    if file.provenance.config_hash != cfg.hash()? {
        let _ = writeln!(
            err,
            "warning: certificate was produced from a different configuration (hash {})",
            file.provenance.config_hash
        );
    }
    let mut vcfg = cfg.verify.clone();
    vcfg.seed = seed.unwrap_or(file.provenance.seed);
    if let Some(s) = samples.or(file.verification.as_ref().map(|v| v.samples)) {
        vcfg.samples = s;
    }
    let locals = file.local_certificates()?;
    if !locals.is_empty() && locals.len() != ic.len() {
        return Err(CliError::Usage(format!(
            "certificate has {} local barriers, configuration has {} subsystems",
            locals.len(),
            ic.len()
        )));
    }
    let barrier = file.global_barrier()?;
    if let Some(b) = &barrier {
        if b.space.dim() != ic.total_dim() {
            return Err(CliError::Usage(format!(
                "barrier has {} variables, configuration has {} states",
                b.space.dim(),
                ic.total_dim()
            )));
        }
    }
    let reports = verify_all(&cfg, &ic, &locals, barrier.as_ref(), &vcfg)?;
    let mut text = String::new();
    for r in &reports {
        text.push_str(&r.render_text());
    }
    let summary = VerificationSummary::from_reports(vcfg.samples, vcfg.tolerance, &reports);
    match &file.verification {
        Some(stored) if stored.verdicts == summary.verdicts => {
            let _ = writeln!(text, "verdicts match the stored summary");
        }
        Some(_) => {
            let _ = writeln!(text, "verdicts differ from the stored summary");
        }
        None => {}
    }
    let passed = summary.passed();
    let _ = writeln!(text, "{}", if passed { "PASS" } else { "FAIL" });
    if let Some(p) = csv {
        let body: String = reports.iter().map(|r| r.render_csv()).collect();
        emit_opt(Some(p), &body, out)?;
    }
    emit_opt(None, &text, out)?;
    Ok(if passed {
        ExitStatus::Success
    } else {
        ExitStatus::Failure
    })
}

fn simulate_cmd(
    source: &Source,
    certificate: Option<&Path>,
    path: Option<&Path>,
    trajectories: Option<usize>,
    seed: Option<u64>,
    horizon: Option<f64>,
    out: &mut dyn Write,
) -> Result<ExitStatus, CliError> {
    let cfg = load(source)?;
    let ic = cfg.interconnection()?;
    let sys = ic.flatten().map_err(|e| CliError::Usage(e.to_string()))?;
    let sets = cfg.global_sets(&ic)?;
    let mut sim = cfg.simulate.clone();
    sim.trajectories = trajectories.unwrap_or(sim.trajectories);
    sim.seed = seed.unwrap_or(sim.seed);
    sim.horizon = horizon.unwrap_or(sim.horizon);
    let mon = sim.monitor();
    let x0 = sets
        .initial
        .sample(sim.trajectories, sim.seed)
        .map_err(|e| CliError::Numerical(format!("initial set: {e}")))?;
    let sigma_seeds: Vec<u64> = (0..sim.trajectories as u64)
        .map(|k| sim.seed.wrapping_add(k + 1))
        .collect();
    let barrier = match certificate {
        Some(p) => load_certificate(p)?.global_barrier()?,
        None => None,
    };

    let names = sys.space.names();
    let mut csv = String::from("trajectory,t");
    for n in names {
        let _ = write!(csv, ",{n}");
    }
    csv.push_str(",mode,event");
    if barrier.is_some() {
        csv.push_str(",barrier");
    }
    csv.push('\n');
    let mut unsafe_hits = 0;
    for (k, (x, &s)) in x0.iter().zip(&sigma_seeds).enumerate() {
        let sigma = SwitchingSignal::Random {
            seed: s,
            modes: sys.mode_count(),
            min_dwell: mon.min_dwell,
            max_dwell: mon.max_dwell,
        };
        let traj = simulate(&sys, x, &sigma, mon.horizon, mon.step)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if traj
            .points
            .iter()
            .any(|p| sets.unsafe_region.contains(&p.x))
            || traj.exited
        {
            unsafe_hits += 1;
        }
        for p in &traj.points {
            let _ = write!(csv, "{k},{}", p.t);
            for v in &p.x {
                let _ = write!(csv, ",{v}");
            }
            let ev = serde_json::to_value(p.event)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            let _ = write!(csv, ",{},{ev}", p.mode + 1);
            if let Some(b) = &barrier {
                let _ = write!(csv, ",{}", b.eval(&p.x));
            }
            csv.push('\n');
        }
    }
    let mut text = format!(
        "{} trajectories, horizon {}, {} reached the unsafe set or left the domain\n",
        sim.trajectories, mon.horizon, unsafe_hits
    );
    let mut status = if unsafe_hits == 0 {
        ExitStatus::Success
    } else {
        ExitStatus::Failure
    };
    if let Some(b) = &barrier {
        let rep = monitor_trajectories(b, &sys, &sets, &x0, &sigma_seeds, &mon, &cfg.verify)?;
        text.push_str(&rep.render_text());
        if !rep.passed() {
            status = ExitStatus::Failure;
        }
    }
    match path {
        Some(p) => {
            emit_opt(Some(p), &csv, out)?;
            let _ = writeln!(text, "trajectories written to {}", p.display());
        }
        None => text.push_str(&csv),
    }
    emit_opt(None, &text, out)?;
    Ok(status)
}

/// `A..B` (inclusive) or `a,b,c`.
pub fn parse_range(s: &str) -> Result<Vec<usize>, String> {
    let bad = || format!("cannot read '{s}' as A..B or a comma list");
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|_| bad())?;
        return Ok((a..=b).collect());
    }
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse().map_err(|_| bad()))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn bench_cmd(
    cli: &Cli,
    source: &Source,
    m: Option<&str>,
    seeds: Option<u64>,
    path: Option<&Path>,
    json: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<ExitStatus, CliError> {
    let cfg = match (&source.config, &source.instance) {
        (None, None) => None,
        _ => Some(load(source)?),
    };
    let mut params = cfg
        .as_ref()
        .map(|c| c.synthesis.clone())
        .unwrap_or_default();
    params.workers = cli.workers.unwrap_or(params.workers);
    let bench = cfg
        .as_ref()
        .map(|c| c.benchmark.clone())
        .unwrap_or_default();
    let ms = match m {
        Some(s) => parse_range(s).map_err(CliError::Usage)?,
        None => bench.m,
    };
    if let Some(&bad) = ms.iter().find(|&&m| m < 3) {
        return Err(CliError::Usage(format!(
            "--m: ring instances need M ≥ 3, got {bad}"
        )));
    }
    let seed_list: Vec<u64> = match seeds {
        Some(0) => return Err(CliError::Usage("--seeds must be at least 1".into())),
        Some(n) => (1..=n).collect(),
        None => bench.seeds,
    };
    let table = benchmark(&ms, &seed_list, &params)?;
    for n in &table.notes {
        let _ = writeln!(err, "{n}");
    }
    let mut text = table.render_text();
    if let Some(p) = path {
        emit_opt(Some(p), &table.render_csv(), out)?;
        let _ = writeln!(text, "table written to {}", p.display());
    }
    if let Some(p) = json {
        let body =
            serde_json::to_string_pretty(&table).map_err(|e| CliError::Numerical(e.to_string()))?;
        emit_opt(Some(p), &body, out)?;
    }
    emit_opt(None, &text, out)?;
    let all_ok = table
        .runs
        .iter()
        .all(|r| r.local_ok && r.global_status == SolveStatus::Success);
    Ok(if all_ok {
        ExitStatus::Success
    } else {
        ExitStatus::Failure
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("3..6").unwrap(), vec![3, 4, 5, 6]);
        assert_eq!(parse_range("3,5").unwrap(), vec![3, 5]);
        assert!(parse_range("x").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        let mut o = Vec::new();
        let mut e = Vec::new();
        assert_eq!(run(["compbarrier", "synth-local"], &mut o, &mut e), 2);
        assert_eq!(run(["compbarrier", "frobnicate"], &mut o, &mut e), 2);
        assert_eq!(
            run(
                ["compbarrier", "synth-local", "--instance", "nope"],
                &mut o,
                &mut e
            ),
            2
        );
    }

    #[test]
    fn gen_ring_is_deterministic() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut e = Vec::new();
        assert_eq!(
            run(
                ["compbarrier", "gen-ring", "--m", "4", "--seed", "7"],
                &mut a,
                &mut e
            ),
            0
        );
        assert_eq!(
            run(
                ["compbarrier", "gen-ring", "--m", "4", "--seed", "7"],
                &mut b,
                &mut e
            ),
            0
        );
        assert_eq!(a, b);
        assert!(ConfigFile::parse(std::str::from_utf8(&a).unwrap()).is_ok());
    }
}
