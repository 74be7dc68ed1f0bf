//! End-to-end synthesis: local certificates (solved independently, in
//! parallel), their composition, the monolithic global baseline, and the
//! ring benchmark comparing the two.
//!
//! Reported times cover program assembly and solving; instance generation
//! is excluded.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compose::{
    build_gain, compose_max, compose_sum, ComposeError, CompositionForm, GainStructure,
    GlobalBarrier, LocalCertificate,
};
use crate::polynomial::VarSpace;
use crate::sdp::{min_eigenvalue, solve, SdpError, SdpSolution, SdpStatus, Tolerances};
use crate::sir::{product_unsafe_sets, ring_params, sir_interconnection, Balance, SirError};
use crate::sos::{
    build_global_program, build_local_program, local_certificate, GlobalOptions, GlobalSets,
    LocalConstants, ProgramOptions, SosError,
};
use crate::system::{Interconnection, SwitchedImpulsiveSystem, SystemError};

/// Residual bar a solve must meet to count as a certificate.
pub const RESIDUAL_THRESHOLD: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Sir(#[from] SirError),
    #[error("invalid synthesis parameters: {0}")]
    Params(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisParams {
    pub program: ProgramOptions,
    /// One entry shared by all subsystems, or one per subsystem.
    pub constants: Vec<LocalConstants>,
    pub form: CompositionForm,
    pub tolerances: Tolerances,
    /// Parallel width for local solves; 0 uses the ambient pool.
    pub workers: usize,
    pub global: GlobalOptions,
    pub residual_threshold: f64,
}

impl Default for SynthesisParams {
    fn default() -> Self {
        Self {
            program: ProgramOptions::default(),
            constants: vec![LocalConstants::default()],
            form: CompositionForm::Max,
            tolerances: Tolerances::default(),
            workers: 0,
            global: GlobalOptions::default(),
            residual_threshold: RESIDUAL_THRESHOLD,
        }
    }
}

impl SynthesisParams {
    pub fn constants_for(&self, m: usize) -> Result<Vec<LocalConstants>, SynthError> {
        let consts = match self.constants.len() {
            0 => vec![LocalConstants::default(); m],
            1 => vec![self.constants[0]; m],
            k if k == m => self.constants.clone(),
            k => {
                return Err(SynthError::Params(format!(
                    "{k} constant sets for {m} subsystems (give 1 or {m})"
                )))
            }
        };
        for (i, k) in consts.iter().enumerate() {
            if !(k.l > 0.0) {
                return Err(SynthError::Params(format!(
                    "subsystem {}: L must be positive",
                    i + 1
                )));
            }
            if !(k.alpha >= 0.0 && k.c >= 0.0) {
                return Err(SynthError::Params(format!(
                    "subsystem {}: alpha and c must be nonnegative",
                    i + 1
                )));
            }
        }
        if consts.iter().any(|k| k.l != consts[0].l) {
            return Err(SynthError::Params(
                "L must be shared by all subsystems".into(),
            ));
        }
        Ok(consts)
    }

    fn run_in_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T, SynthError> {
        if self.workers == 0 {
            return Ok(f());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| SynthError::Pool(e.to_string()))?;
        Ok(pool.install(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Success,
    Infeasible,
    /// The solver stopped without a verdict, or the residual bar was missed.
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub label: String,
    pub status: SolveStatus,
    pub seconds: f64,
    pub iterations: usize,
    /// Relative primal residual of the (scaled) SDP.
    #[serde(deserialize_with = "crate::nullable_f64")]
    pub primal_residual: f64,
    #[serde(deserialize_with = "crate::nullable_f64")]
    pub primal_residual_abs: f64,
    #[serde(deserialize_with = "crate::nullable_f64")]
    pub min_gram_eigenvalue: f64,
    pub rows: usize,
    pub largest_block: usize,
    /// For infeasible programs: the constraint carrying most of the
    /// infeasibility certificate.
    pub failing_constraint: Option<String>,
    pub message: String,
}

impl SolveOutcome {
    fn from_solution(
        label: &str,
        sdp: &crate::sdp::SdpProblem,
        sol: &SdpSolution,
        threshold: f64,
        seconds: f64,
    ) -> Self {
        let min_eig = sol
            .blocks
            .iter()
            .map(|b| min_eigenvalue(b.as_ref()))
            .fold(f64::INFINITY, f64::min);
        let status = match sol.status {
            SdpStatus::Feasible if sol.primal_residual < threshold => SolveStatus::Success,
            SdpStatus::Infeasible => SolveStatus::Infeasible,
            _ => SolveStatus::NumericalFailure,
        };
        let failing_constraint = sol
            .infeasibility_ray
            .as_ref()
            .map(|y| dominant_label(sdp, y));
        Self {
            label: label.into(),
            status,
            seconds,
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            primal_residual_abs: sol.primal_residual_abs,
            min_gram_eigenvalue: min_eig,
            rows: sdp.constraints.len(),
            largest_block: sdp.blocks.iter().copied().max().unwrap_or(0),
            failing_constraint,
            message: sol.message.clone(),
        }
    }

    fn build_failure(label: &str, err: &SosError, seconds: f64) -> Self {
        Self {
            label: label.into(),
            status: SolveStatus::NumericalFailure,
            seconds,
            iterations: 0,
            primal_residual: f64::NAN,
            primal_residual_abs: f64::NAN,
            min_gram_eigenvalue: f64::NAN,
            rows: 0,
            largest_block: 0,
            failing_constraint: None,
            message: err.to_string(),
        }
    }
}

/// Constraint (label up to the monomial) with the largest share of `|y|`.
fn dominant_label(sdp: &crate::sdp::SdpProblem, y: &[f64]) -> String {
    let mut weight: BTreeMap<&str, f64> = BTreeMap::new();
    for (c, v) in sdp.constraints.iter().zip(y) {
        let base = c.label.split(':').next().unwrap_or("");
        *weight.entry(base).or_default() += v.abs();
    }
    weight
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k.to_string())
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionSummary {
    pub form: CompositionForm,
    pub lambda_eff: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub subsystems: Vec<SolveOutcome>,
    pub composition: Option<CompositionSummary>,
    /// Why composition was not produced, if it was attempted.
    pub composition_error: Option<String>,
    pub total_seconds: f64,
    pub global: Option<SolveOutcome>,
    pub timing_note: String,
}

impl SynthesisReport {
    fn new() -> Self {
        Self {
            subsystems: Vec::new(),
            composition: None,
            composition_error: None,
            total_seconds: 0.0,
            global: None,
            timing_note: "wall time of program assembly and solving; instance generation excluded"
                .into(),
        }
    }

    pub fn all_succeeded(&self) -> bool {
        self.subsystems
            .iter()
            .all(|s| s.status == SolveStatus::Success)
            && self
                .global
                .as_ref()
                .is_none_or(|g| g.status == SolveStatus::Success)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.timing_note);
        let rows: Vec<&SolveOutcome> = self.subsystems.iter().chain(self.global.iter()).collect();
        if !rows.is_empty() {
            let _ = writeln!(
                out,
                "{:<14} {:<17} {:>9} {:>5} {:>11} {:>11} {:>6} {:>5}",
                "program", "status", "seconds", "iter", "residual", "min eig", "rows", "block"
            );
        }
        for s in rows {
            let status = serde_json::to_value(s.status)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            let _ = write!(
                out,
                "{:<14} {:<17} {:>9.3} {:>5} {:>11.3e} {:>11.3e} {:>6} {:>5}",
                s.label,
                status,
                s.seconds,
                s.iterations,
                s.primal_residual,
                s.min_gram_eigenvalue,
                s.rows,
                s.largest_block
            );
            if let Some(f) = &s.failing_constraint {
                let _ = write!(out, "  failing constraint: {f}");
            }
            if s.status != SolveStatus::Success {
                let _ = write!(out, "  ({})", s.message);
            }
            out.push('\n');
        }
        if let Some(c) = &self.composition {
            let w: Vec<String> = c.weights.iter().map(|v| format!("{v:.4}")).collect();
            let _ = writeln!(
                out,
                "composition: {:?} form, weights ({}), decay rate {:.6e}",
                c.form,
                w.join(", "),
                c.lambda_eff
            );
        }
        if let Some(e) = &self.composition_error {
            let _ = writeln!(out, "composition failed: {e}");
        }
        let _ = writeln!(out, "total {:.3} s", self.total_seconds);
        out
    }
}

/// Result of [`synthesize_local`].
#[derive(Debug, Clone)]
pub struct LocalSynthesis {
    /// One slot per subsystem; `None` where the program failed.
    pub certificates: Vec<Option<LocalCertificate>>,
    pub gain: Option<GainStructure>,
    pub barrier: Option<GlobalBarrier>,
    pub report: SynthesisReport,
}

impl LocalSynthesis {
    /// All certificates, if every subsystem succeeded.
    pub fn complete(&self) -> Option<Vec<LocalCertificate>> {
        self.certificates.iter().cloned().collect()
    }
}

/// Builds and solves the local program of every subsystem on the configured
/// workers, then composes the certificates when all succeed.
pub fn synthesize_local(
    ic: &Interconnection,
    params: &SynthesisParams,
) -> Result<LocalSynthesis, SynthError> {
    ic.validate()?;
    let consts = params.constants_for(ic.len())?;
    let start = Instant::now();
    let results: Vec<(SolveOutcome, Option<LocalCertificate>)> = params.run_in_pool(|| {
        (0..ic.len())
            .into_par_iter()
            .map(|i| solve_local(ic, i, &consts, params))
            .collect::<Result<Vec<_>, SynthError>>()
    })??;
    let mut report = SynthesisReport::new();
    let mut certificates = Vec::with_capacity(ic.len());
    for (outcome, cert) in results {
        report.subsystems.push(outcome);
        certificates.push(cert);
    }
    let mut gain = None;
    let mut barrier = None;
    if let Some(certs) = certificates.iter().cloned().collect::<Option<Vec<_>>>() {
        match compose(ic, &certs, params.form) {
            Ok((g, b)) => {
                report.composition = Some(CompositionSummary {
                    form: b.form,
                    lambda_eff: b.lambda_eff,
                    weights: b.weights.clone(),
                });
                gain = Some(g);
                barrier = Some(b);
            }
            Err(e) => report.composition_error = Some(e.to_string()),
        }
    }
    report.total_seconds = start.elapsed().as_secs_f64();
    Ok(LocalSynthesis {
        certificates,
        gain,
        barrier,
        report,
    })
}

fn solve_local(
    ic: &Interconnection,
    i: usize,
    consts: &[LocalConstants],
    params: &SynthesisParams,
) -> Result<(SolveOutcome, Option<LocalCertificate>), SynthError> {
    let label = format!("local {}", i + 1);
    let t = Instant::now();
    let built = match build_local_program(ic, i, consts, &params.program) {
        Ok(b) => b,
        Err(e @ (SosError::NonPolynomial(_) | SosError::DegreeMismatch { .. })) => {
            return Ok((
                SolveOutcome::build_failure(&label, &e, t.elapsed().as_secs_f64()),
                None,
            ))
        }
        Err(e) => return Err(e.into()),
    };
    let sdp = built.program.assemble()?;
    let sol = solve(&sdp, &params.tolerances)?;
    let outcome = SolveOutcome::from_solution(
        &label,
        &sdp,
        &sol,
        params.residual_threshold,
        t.elapsed().as_secs_f64(),
    );
    let cert = (outcome.status == SolveStatus::Success)
        .then(|| local_certificate(&built, &sol, ic, i, consts));
    Ok((outcome, cert))
}

/// Gain structure and composite barrier in the requested form.
pub fn compose(
    ic: &Interconnection,
    certs: &[LocalCertificate],
    form: CompositionForm,
) -> Result<(GainStructure, GlobalBarrier), ComposeError> {
    let gain = build_gain(certs)?;
    let space: Arc<VarSpace> = ic.global_space();
    let barrier = match form {
        CompositionForm::Max => compose_max(certs, &gain, &space)?,
        CompositionForm::Sum | CompositionForm::Single => compose_sum(certs, &gain, &space)?,
    };
    Ok((gain, barrier))
}

/// Result of [`synthesize_global`].
#[derive(Debug, Clone)]
pub struct GlobalSynthesis {
    pub barrier: Option<GlobalBarrier>,
    pub report: SynthesisReport,
}

/// Monolithic barrier over all states. Unsafe sets without an explicit
/// cell description are rejected with a diagnostic.
pub fn synthesize_global(
    sys: &SwitchedImpulsiveSystem,
    sets: &GlobalSets,
    params: &SynthesisParams,
) -> Result<GlobalSynthesis, SynthError> {
    let start = Instant::now();
    let opts = GlobalOptions {
        program: params.program,
        ..params.global
    };
    let built = build_global_program(sys, sets, &opts)?;
    let sdp = built.program.assemble()?;
    let sol = params.run_in_pool(|| solve(&sdp, &params.tolerances))??;
    let outcome = SolveOutcome::from_solution(
        "global",
        &sdp,
        &sol,
        params.residual_threshold,
        start.elapsed().as_secs_f64(),
    );
    let barrier = (outcome.status == SolveStatus::Success)
        .then(|| GlobalBarrier::single(built.recover_barrier(&sol), opts.lambda));
    let mut report = SynthesisReport::new();
    report.total_seconds = outcome.seconds;
    report.global = Some(outcome);
    Ok(GlobalSynthesis { barrier, report })
}

/// Seeded SIR ring of `m` patches (see [`crate::sir::ring_params`]).
pub fn generate_ring_instance(m: usize, seed: u64) -> Result<Interconnection, SynthError> {
    Ok(sir_interconnection(&ring_params(
        m,
        seed,
        Balance::Columns,
    )?)?)
}

/// Ring instance for `seed`, moving on to `seed + 1, …` while a draw is
/// degenerate (a zero rate on a ring edge). Returns the seed used.
fn ring_instance_checked(
    m: usize,
    seed: u64,
    notes: &mut Vec<String>,
) -> Result<(u64, Interconnection), SynthError> {
    let mut s = seed;
    loop {
        let p = ring_params(m, s, Balance::Columns)?;
        let ok = (0..m).all(|i| {
            (0..m)
                .filter(|&j| crate::sir::ring_adjacent(i, j, m))
                .all(|j| p.a[i][j] > 0.0 && p.b[i][j] > 0.0 && p.c[i][j] > 0.0)
        });
        if ok {
            return Ok((s, sir_interconnection(&p)?));
        }
        notes.push(format!(
            "M={m}: seed {s} gave a degenerate draw, resampling with seed {}",
            s + 1
        ));
        s += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRun {
    pub m: usize,
    pub seed: u64,
    pub used_seed: u64,
    pub global_seconds: f64,
    pub global_status: SolveStatus,
    pub local_seconds: f64,
    pub local_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    #[serde(deserialize_with = "crate::nullable_f64")]
    pub mean: f64,
    #[serde(deserialize_with = "crate::nullable_f64")]
    pub std: f64,
    pub successes: usize,
    pub runs: usize,
}

impl PathStats {
    fn from_times(times: &[f64], runs: usize) -> Self {
        let n = times.len();
        let mean = if n > 0 {
            times.iter().sum::<f64>() / n as f64
        } else {
            f64::NAN
        };
        let std = if n > 1 {
            (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else if n == 1 {
            0.0
        } else {
            f64::NAN
        };
        Self {
            mean,
            std,
            successes: n,
            runs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub m: usize,
    pub dimension: usize,
    pub global: PathStats,
    pub compositional: PathStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchmarkRow>,
    pub runs: Vec<BenchmarkRun>,
    pub notes: Vec<String>,
    pub total_seconds: f64,
}

impl BenchmarkTable {
    /// Global over compositional mean time per row.
    pub fn ratios(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.global.mean / r.compositional.mean)
            .collect()
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# wall time of program assembly and solving; instance generation excluded"
        );
        let _ = writeln!(
            out,
            "{:>3}  {:>9}  {:>22}  {:>22}  {:>7}",
            "M", "dimension", "global", "compositional", "ratio"
        );
        for r in &self.rows {
            let cell = |s: &PathStats| {
                if s.successes == 0 {
                    format!("failed (0/{})", s.runs)
                } else {
                    format!(
                        "{:.3}s ± {:.3}s ({}/{})",
                        s.mean, s.std, s.successes, s.runs
                    )
                }
            };
            let _ = writeln!(
                out,
                "{:>3}  {:>9}  {:>22}  {:>22}  {:>7.2}",
                r.m,
                r.dimension,
                cell(&r.global),
                cell(&r.compositional),
                r.global.mean / r.compositional.mean
            );
        }
        for n in &self.notes {
            let _ = writeln!(out, "# {n}");
        }
        out
    }

    /// `M,dimension,path,mean_seconds,std_seconds,successes`
    pub fn render_csv(&self) -> String {
        let mut out = String::from("M,dimension,path,mean_seconds,std_seconds,successes\n");
        for r in &self.rows {
            for (path, s) in [("global", &r.global), ("compositional", &r.compositional)] {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.m, r.dimension, path, s.mean, s.std, s.successes
                );
            }
        }
        out
    }
}

/// Runs both synthesis paths on seeded ring instances. The global path
/// uses the product unsafe set and imposes the jump condition on all of
/// `X`; the compositional path uses the sum form.
pub fn benchmark(
    ms: &[usize],
    seeds: &[u64],
    params: &SynthesisParams,
) -> Result<BenchmarkTable, SynthError> {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    let local_params = SynthesisParams {
        form: CompositionForm::Sum,
        ..params.clone()
    };
    for &m in ms {
        let mut g_times = Vec::new();
        let mut l_times = Vec::new();
        let mut dimension = 3 * m;
        for &seed in seeds {
            let (used, ic) = ring_instance_checked(m, seed, &mut notes)?;
            dimension = ic.total_dim();
            let local = synthesize_local(&ic, &local_params)?;
            let local_ok = local.barrier.is_some();
            let local_seconds = local.report.total_seconds;
            let sys = ic.flatten()?;
            let sets = product_unsafe_sets(&ic);
            let global = synthesize_global(&sys, &sets, params)?;
            let g = global.report.global.expect("global outcome");
            if local_ok {
                l_times.push(local_seconds);
            }
            if g.status == SolveStatus::Success {
                g_times.push(g.seconds);
            }
            runs.push(BenchmarkRun {
                m,
                seed,
                used_seed: used,
                global_seconds: g.seconds,
                global_status: g.status,
                local_seconds,
                local_ok,
            });
        }
        rows.push(BenchmarkRow {
            m,
            dimension,
            global: PathStats::from_times(&g_times, seeds.len()),
            compositional: PathStats::from_times(&l_times, seeds.len()),
        });
    }
    Ok(BenchmarkTable {
        rows,
        runs,
        notes,
        total_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_are_expanded_and_checked() {
        let p = SynthesisParams::default();
        assert_eq!(p.constants_for(3).unwrap().len(), 3);
        let bad = SynthesisParams {
            constants: vec![LocalConstants::default(); 2],
            ..Default::default()
        };
        assert!(bad.constants_for(3).is_err());
        let neg = SynthesisParams {
            constants: vec![LocalConstants {
                l: -1.0,
                ..Default::default()
            }],
            ..Default::default()
        };
        assert!(neg.constants_for(2).is_err());
    }

    #[test]
    fn empty_benchmark_is_empty() {
        let t = benchmark(&[], &[1], &SynthesisParams::default()).unwrap();
        assert!(t.rows.is_empty());
        assert_eq!(t.render_csv().lines().count(), 1);
    }

    #[test]
    fn path_stats() {
        let s = PathStats::from_times(&[1.0, 3.0], 2);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-12);
    }
}
