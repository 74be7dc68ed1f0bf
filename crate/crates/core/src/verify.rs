//! Sampled checking of barrier conditions and trajectory monitoring.
//!
//! This is the independent oracle for everything the SOS path accepts: each
//! condition is evaluated pointwise on seeded samples of the relevant set.
//! Sample sequences are prefix-stable, so raising the sample count for a
//! fixed seed only ever adds points.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compose::{CompositionForm, GlobalBarrier, LocalCertificate};
use crate::polynomial::Polynomial;
use crate::sos::{GlobalSets, SafeRegion, UnsafeRegion};
use crate::system::{
    simulate, ImpulseSchedule, Interconnection, JumpRule, SampleError, SemialgebraicSet,
    SwitchedImpulsiveSystem, SwitchingSignal, SystemError,
};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("sampling {set}: {source}")]
    Sample {
        set: String,
        #[source]
        source: SampleError,
    },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("invalid verification config: {0}")]
    Config(String),
}

/// Where the jump condition is sampled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpDomain {
    /// The closure of the safe set (interior samples plus a boundary shell).
    #[default]
    SafeClosure,
    /// The whole domain `X`.
    WholeDomain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerificationConfig {
    /// Samples per condition.
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub theta: f64,
    /// Decay rate for the flow condition; the barrier's own rate if unset.
    pub lambda: Option<f64>,
    pub jump_domain: JumpDomain,
    /// Fraction of jump samples pulled onto the boundary of the safe set.
    pub boundary_fraction: f64,
    /// Distance from a constraint's zero set that still counts as boundary.
    pub shell: f64,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: 0,
            tolerance: 1e-6,
            theta: 1.0,
            lambda: None,
            jump_domain: JumpDomain::SafeClosure,
            boundary_fraction: 0.2,
            shell: 1e-3,
        }
    }
}

impl VerificationConfig {
    pub fn validate(&self) -> Result<(), VerifyError> {
        if self.samples == 0 {
            return Err(VerifyError::Config("samples must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(VerifyError::Config("tolerance must be positive".into()));
        }
        if !(self.theta >= 0.0) {
            return Err(VerifyError::Config("theta must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.boundary_fraction) {
            return Err(VerifyError::Config(
                "boundary_fraction must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Seed for the `k`-th condition.
    fn seed_for(&self, k: u64) -> u64 {
        self.seed
            .wrapping_add(k.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Counterexample,
    Skipped,
}

/// One sampled condition. `worst` is the largest value of the condition's
/// residual, which must stay `≤ tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub name: String,
    pub verdict: Verdict,
    pub samples: usize,
    /// Points left out (max-form ties).
    pub skipped: usize,
    #[serde(deserialize_with = "crate::nullable_f64")]
    pub worst: f64,
    pub counterexample: Option<Vec<f64>>,
    pub note: String,
}

impl ConditionReport {
    fn skipped(name: &str, note: &str) -> Self {
        Self {
            name: name.into(),
            verdict: Verdict::Skipped,
            samples: 0,
            skipped: 0,
            worst: f64::NAN,
            counterexample: None,
            note: note.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub subject: String,
    pub tolerance: f64,
    pub conditions: Vec<ConditionReport>,
    /// Share of flow samples skipped because of max-form ties.
    pub tie_skip_rate: f64,
    /// Largest barrier value seen along monitored trajectories.
    pub max_barrier: Option<f64>,
}

impl VerificationReport {
    /// No counterexample on any condition.
    pub fn passed(&self) -> bool {
        self.conditions
            .iter()
            .all(|c| c.verdict != Verdict::Counterexample)
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionReport> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} (tolerance {:e})", self.subject, self.tolerance);
        let w = self
            .conditions
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(4)
            .max(9);
        let _ = writeln!(
            out,
            "  {:<w$}  {:<14}  {:>8}  {:>8}  {:>12}",
            "condition", "verdict", "samples", "skipped", "worst"
        );
        for c in &self.conditions {
            let verdict = match c.verdict {
                Verdict::Pass => "pass",
                Verdict::Counterexample => "COUNTEREXAMPLE",
                Verdict::Skipped => "skipped",
            };
            let _ = write!(
                out,
                "  {:<w$}  {:<14}  {:>8}  {:>8}  {:>12.4e}",
                c.name, verdict, c.samples, c.skipped, c.worst
            );
            if let Some(x) = &c.counterexample {
                let pts: Vec<String> = x.iter().map(|v| format!("{v:.6}")).collect();
                let _ = write!(out, "  at [{}]", pts.join(", "));
            }
            if !c.note.is_empty() {
                let _ = write!(out, "  ({})", c.note);
            }
            out.push('\n');
        }
        if self.tie_skip_rate > 0.0 {
            let _ = writeln!(out, "  tie-skip rate {:.4}%", 100.0 * self.tie_skip_rate);
        }
        if let Some(b) = self.max_barrier {
            let _ = writeln!(out, "  max barrier along trajectories {b:.6e}");
        }
        out
    }

    /// `subject,condition,verdict,samples,skipped,worst,counterexample`
    pub fn render_csv(&self) -> String {
        let mut out =
            String::from("subject,condition,verdict,samples,skipped,worst,counterexample\n");
        for c in &self.conditions {
            let verdict = serde_json::to_value(c.verdict)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            let cx = c
                .counterexample
                .as_ref()
                .map(|x| {
                    x.iter()
                        .map(|v| format!("{v:e}"))
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:e},{}",
                self.subject, c.name, verdict, c.samples, c.skipped, c.worst, cx
            );
        }
        out
    }
}

/// Evaluates `residual` on every point (in parallel, reduced in order) and
/// turns the result into a verdict. `None` marks a skipped point.
fn check_points<F>(name: &str, points: &[Vec<f64>], tol: f64, residual: F) -> ConditionReport
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    let values: Vec<Option<f64>> = points.par_iter().map(|x| residual(x)).collect();
    let mut worst = f64::NEG_INFINITY;
    let mut arg = None;
    let mut skipped = 0;
    for (x, v) in points.iter().zip(&values) {
        match v {
            Some(r) if *r > worst || r.is_nan() => {
                worst = if r.is_nan() { f64::INFINITY } else { *r };
                arg = Some(x);
            }
            Some(_) => {}
            None => skipped += 1,
        }
    }
    let checked = points.len() - skipped;
    let verdict = if checked == 0 {
        Verdict::Skipped
    } else if worst > tol {
        Verdict::Counterexample
    } else {
        Verdict::Pass
    };
    ConditionReport {
        name: name.into(),
        verdict,
        samples: points.len(),
        skipped,
        worst: if checked == 0 { f64::NAN } else { worst },
        counterexample: if verdict == Verdict::Counterexample {
            arg.cloned()
        } else {
            None
        },
        note: String::new(),
    }
}

fn sample(
    set: &SemialgebraicSet,
    what: &str,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, VerifyError> {
    set.sample(count, seed)
        .map_err(|source| VerifyError::Sample {
            set: what.into(),
            source,
        })
}

/// Interior samples plus a share pulled onto the boundary.
fn sample_closure(
    set: &SemialgebraicSet,
    what: &str,
    cfg: &VerificationConfig,
    seed: u64,
) -> Result<Vec<Vec<f64>>, VerifyError> {
    let nb = (cfg.samples as f64 * cfg.boundary_fraction).round() as usize;
    let mut pts = sample(set, what, cfg.samples - nb, seed)?;
    if nb > 0 {
        let b = set
            .sample_boundary(nb, seed ^ 0x5bd1_e995, cfg.shell, None)
            .map_err(|source| VerifyError::Sample {
                set: format!("{what} boundary"),
                source,
            })?;
        pts.extend(b);
    }
    Ok(pts)
}

fn sample_unsafe(
    region: &UnsafeRegion,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, VerifyError> {
    match region {
        UnsafeRegion::Cells(s) => sample(s, "unsafe set", count, seed),
        UnsafeRegion::MaxOf { within, .. } => {
            // rejection from the enclosing set in fixed-size rounds, so a
            // larger count extends a smaller one
            const BATCH: usize = 4096;
            let mut out = Vec::with_capacity(count);
            let mut round = 0u64;
            while out.len() < count {
                let batch = sample(within, "unsafe set", BATCH, seed.wrapping_add(round))?;
                out.extend(
                    batch
                        .into_iter()
                        .filter(|x| region.contains(x))
                        .take(count - out.len()),
                );
                round += 1;
                if round > 1000 && out.is_empty() {
                    return Err(VerifyError::Sample {
                        set: "unsafe set".into(),
                        source: SampleError::Degenerate {
                            attempts: round * BATCH as u64,
                            rate: 0.0,
                        },
                    });
                }
            }
            Ok(out)
        }
    }
}

fn has_impulses(sys: &SwitchedImpulsiveSystem) -> bool {
    let fires = |s: &ImpulseSchedule| match s {
        ImpulseSchedule::Never => false,
        ImpulseSchedule::Explicit { times } => !times.is_empty(),
        ImpulseSchedule::Periodic { .. } => true,
    };
    match &sys.jump {
        JumpRule::Gated(gates) => gates.iter().any(|g| fires(&g.schedule)),
        _ => fires(&sys.schedule),
    }
}

fn eval_map(map: &[Polynomial], x: &[f64]) -> Vec<f64> {
    map.iter().map(|p| p.eval(x)).collect()
}

/// Samples the conditions of a global barrier on the flattened system:
/// `B ≤ tol` on the initial set, `B > −tol` on the unsafe set,
/// `∇B·f_p − λB ≤ tol` on `X` per mode (max form: unique-argmax points only)
/// and `B∘g − θB ≤ tol` on the jump domain.
pub fn check_global_barrier(
    barrier: &GlobalBarrier,
    sys: &SwitchedImpulsiveSystem,
    sets: &GlobalSets,
    cfg: &VerificationConfig,
) -> Result<VerificationReport, VerifyError> {
    cfg.validate()?;
    let tol = cfg.tolerance;
    let lambda = cfg.lambda.unwrap_or(barrier.lambda_eff);
    let mut conds = Vec::new();

    let x0 = sample(&sets.initial, "initial set", cfg.samples, cfg.seed_for(1))?;
    conds.push(check_points("initial", &x0, tol, |x| Some(barrier.eval(x))));

    let xu = sample_unsafe(&sets.unsafe_region, cfg.samples, cfg.seed_for(2))?;
    conds.push(check_points("unsafe", &xu, tol, |x| {
        Some(-barrier.eval(x) - 2.0 * tol)
    }));

    let grads = barrier.gradients();
    let mut tie_points = 0;
    let mut flow_points = 0;
    for p in 0..sys.mode_count() {
        let xs = sample(
            &sys.domain,
            "domain",
            cfg.samples,
            cfg.seed_for(10 + p as u64),
        )?;
        let n = sys.dim();
        let rep = check_points(&format!("flow.mode{}", p + 1), &xs, tol, |x| {
            if barrier.form == CompositionForm::Max && !barrier.eval_max(x).unique {
                return None;
            }
            let mut f = vec![0.0; n];
            sys.field(p, x, &mut f);
            Some(barrier.lie_with(&grads, &f, x) - lambda * barrier.eval(x))
        });
        tie_points += rep.skipped;
        flow_points += rep.samples;
        conds.push(rep);
    }

    let maps = sys.jump_maps();
    if !has_impulses(sys) {
        conds.push(ConditionReport::skipped("jump", "no impulses"));
    } else {
        let region = match (&sets.safe, cfg.jump_domain) {
            (SafeRegion::Cells(s), JumpDomain::SafeClosure) => s,
            _ => &sys.domain,
        };
        for (k, g) in maps.iter().enumerate() {
            let name = if maps.len() == 1 {
                "jump".to_string()
            } else {
                format!("jump.map{}", k + 1)
            };
            let xs = sample_closure(region, "jump domain", cfg, cfg.seed_for(100 + k as u64))?;
            conds.push(check_points(&name, &xs, tol, |x| {
                Some(barrier.eval(&eval_map(g, x)) - cfg.theta * barrier.eval(x))
            }));
        }
    }
    let form = match barrier.form {
        CompositionForm::Sum => "sum",
        CompositionForm::Max => "max",
        CompositionForm::Single => "single",
    };
    Ok(VerificationReport {
        subject: format!("global barrier ({form} form)"),
        tolerance: tol,
        conditions: conds,
        tie_skip_rate: if flow_points > 0 {
            tie_points as f64 / flow_points as f64
        } else {
            0.0
        },
        max_barrier: None,
    })
}

/// Samples the local conditions of subsystem `i`: `B ≤ ε1` on its initial
/// set, `B > ε2` on its unsafe set, `B∘g − B ≤ 0` on its jump region, the
/// growth bound `‖x‖² ≤ αB + L` (when required) and the decrease
/// `∇B·f_p ≤ λB + c(‖ω‖² − L M)` over `X_i` times the neighbour domains.
pub fn check_local_certificate(
    cert: &LocalCertificate,
    ic: &Interconnection,
    i: usize,
    cfg: &VerificationConfig,
) -> Result<VerificationReport, VerifyError> {
    cfg.validate()?;
    let tol = cfg.tolerance;
    let sub = &ic.subsystems[i];
    let b = &cert.barrier;
    let n = sub.dim();
    let mut conds = Vec::new();
    let base = 1000 * (i as u64 + 1);

    let x0 = sample(
        &sub.sets.initial,
        "initial set",
        cfg.samples,
        cfg.seed_for(base + 1),
    )?;
    conds.push(check_points("initial", &x0, tol, |x| {
        Some(b.eval(x) - cert.eps1)
    }));

    let xu = sample(
        &sub.sets.unsafe_set,
        "unsafe set",
        cfg.samples,
        cfg.seed_for(base + 2),
    )?;
    conds.push(check_points("unsafe", &xu, tol, |x| {
        Some(cert.eps2 - b.eval(x) - 2.0 * tol)
    }));

    let xj = sample_closure(
        &sub.sets.jump_region,
        "jump region",
        cfg,
        cfg.seed_for(base + 3),
    )?;
    let pad = sub.input_space.dim();
    conds.push(check_points("jump", &xj, tol, |x| {
        let mut full = x.to_vec();
        full.resize(pad, 0.0);
        let g = eval_map(&sub.jump, &full);
        Some(b.eval(&g) - cfg.theta * b.eval(x))
    }));

    if cert.growth_required {
        let xs = sample(
            &sub.sets.domain,
            "domain",
            cfg.samples,
            cfg.seed_for(base + 4),
        )?;
        conds.push(check_points("growth", &xs, tol, |x| {
            let nx: f64 = x.iter().map(|v| v * v).sum();
            Some(nx - cert.alpha * b.eval(x) - cert.l)
        }));
    } else {
        conds.push(ConditionReport::skipped(
            "growth",
            "no neighbour reads this subsystem with c ≠ 0",
        ));
    }

    let mut factors: Vec<&SemialgebraicSet> = vec![&sub.sets.domain];
    factors.extend(
        sub.neighbours
            .iter()
            .map(|&j| &ic.subsystems[j].sets.domain),
    );
    let joint = SemialgebraicSet::product(&sub.input_space, &factors);
    let grad = b.gradient();
    let m = sub.neighbour_count() as f64;
    for (p, f) in sub.modes.iter().enumerate() {
        let xs = sample(
            &joint,
            "state and input domain",
            cfg.samples,
            cfg.seed_for(base + 10 + p as u64),
        )?;
        conds.push(check_points(
            &format!("decrease.mode{}", p + 1),
            &xs,
            tol,
            |z| {
                let x = &z[..n];
                let w2: f64 = z[n..].iter().map(|v| v * v).sum();
                let lie: f64 = grad
                    .iter()
                    .zip(f)
                    .map(|(g, fk)| g.eval(x) * fk.eval(z))
                    .sum();
                Some(lie - cert.lambda * b.eval(x) - cert.c * (w2 - cert.l * m))
            },
        ));
    }
    Ok(VerificationReport {
        subject: format!("local certificate {} ({})", i + 1, sub.name),
        tolerance: tol,
        conditions: conds,
        tie_skip_rate: 0.0,
        max_barrier: None,
    })
}

/// Simulation settings for [`monitor_trajectories`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorConfig {
    pub horizon: f64,
    pub step: f64,
    pub min_dwell: f64,
    pub max_dwell: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            horizon: 100.0,
            step: 0.05,
            min_dwell: 0.5,
            max_dwell: 5.0,
        }
    }
}

/// Simulates from each initial point under a seeded random switching signal
/// and checks `B(x(t)) ≤ tol` and `x(t) ∉ X_unsafe` at every recorded point,
/// post-impulse points included.
pub fn monitor_trajectories(
    barrier: &GlobalBarrier,
    sys: &SwitchedImpulsiveSystem,
    sets: &GlobalSets,
    x0_samples: &[Vec<f64>],
    sigma_seeds: &[u64],
    mon: &MonitorConfig,
    cfg: &VerificationConfig,
) -> Result<VerificationReport, VerifyError> {
    cfg.validate()?;
    if x0_samples.len() != sigma_seeds.len() {
        return Err(VerifyError::Config(format!(
            "{} initial points but {} switching seeds",
            x0_samples.len(),
            sigma_seeds.len()
        )));
    }
    let tol = cfg.tolerance;
    let runs: Vec<Result<(f64, Option<Vec<f64>>, Option<Vec<f64>>, usize, bool), SystemError>> =
        x0_samples
            .par_iter()
            .zip(sigma_seeds)
            .map(|(x0, &seed)| {
                let sigma = SwitchingSignal::Random {
                    seed,
                    modes: sys.mode_count(),
                    min_dwell: mon.min_dwell,
                    max_dwell: mon.max_dwell,
                };
                let traj = simulate(sys, x0, &sigma, mon.horizon, mon.step)?;
                let mut max_b = f64::NEG_INFINITY;
                let mut worst_b = None;
                let mut unsafe_pt = None;
                for pt in &traj.points {
                    let v = barrier.eval(&pt.x);
                    if v > max_b {
                        max_b = v;
                        if v > tol {
                            worst_b = Some(pt.x.clone());
                        }
                    }
                    if unsafe_pt.is_none() && sets.unsafe_region.contains(&pt.x) {
                        unsafe_pt = Some(pt.x.clone());
                    }
                }
                Ok((max_b, worst_b, unsafe_pt, traj.points.len(), traj.exited))
            })
            .collect();
    let mut max_b = f64::NEG_INFINITY;
    let mut barrier_cx = None;
    let mut unsafe_cx = None;
    let mut points = 0;
    let mut exits = 0;
    for r in runs {
        let (mb, wb, up, np, exited) = r?;
        if mb > max_b {
            max_b = mb;
            if wb.is_some() {
                barrier_cx = wb;
            }
        }
        if unsafe_cx.is_none() {
            unsafe_cx = up;
        }
        points += np;
        exits += exited as usize;
    }
    let n = x0_samples.len();
    let barrier_rep = ConditionReport {
        name: "barrier-along-trajectories".into(),
        verdict: if n == 0 {
            Verdict::Skipped
        } else if max_b > tol {
            Verdict::Counterexample
        } else {
            Verdict::Pass
        },
        samples: points,
        skipped: 0,
        worst: max_b,
        counterexample: if max_b > tol { barrier_cx } else { None },
        note: format!("{n} trajectories"),
    };
    let safe_rep = ConditionReport {
        name: "safety-along-trajectories".into(),
        verdict: if n == 0 {
            Verdict::Skipped
        } else if unsafe_cx.is_some() || exits > 0 {
            Verdict::Counterexample
        } else {
            Verdict::Pass
        },
        samples: points,
        skipped: 0,
        worst: if unsafe_cx.is_some() { 1.0 } else { 0.0 },
        counterexample: unsafe_cx,
        note: if exits > 0 {
            format!("{exits} trajectories left the domain")
        } else {
            String::new()
        },
    };
    Ok(VerificationReport {
        subject: "trajectory monitor".into(),
        tolerance: tol,
        conditions: vec![barrier_rep, safe_rep],
        tie_skip_rate: 0.0,
        max_barrier: if n == 0 { None } else { Some(max_b) },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::VarSpace;
    use crate::system::{ball, SetConstraint};

    fn linear_decay() -> (SwitchedImpulsiveSystem, GlobalSets) {
        let sp = VarSpace::new(["x", "y"]);
        let f = vec![-&Polynomial::var(&sp, 0), -&Polynomial::var(&sp, 1)];
        let domain =
            SemialgebraicSet::basic(&sp, vec![SetConstraint::nonneg(ball(&sp, 0..2, 4.0))]);
        let sys = SwitchedImpulsiveSystem::new(
            &sp,
            vec![f],
            JumpRule::Uniform(vec![
                Polynomial::var(&sp, 0).scale(0.5),
                Polynomial::var(&sp, 1).scale(0.5),
            ]),
            ImpulseSchedule::periodic(1.0).unwrap(),
            domain,
        )
        .unwrap();
        let sets = GlobalSets {
            initial: SemialgebraicSet::basic(
                &sp,
                vec![SetConstraint::nonneg(ball(&sp, 0..2, 0.25))],
            ),
            unsafe_region: UnsafeRegion::Cells(SemialgebraicSet::basic(
                &sp,
                vec![
                    SetConstraint::nonpos(ball(&sp, 0..2, 1.0)),
                    SetConstraint::nonneg(ball(&sp, 0..2, 4.0)),
                ],
            )),
            safe: SafeRegion::Cells(SemialgebraicSet::basic(
                &sp,
                vec![SetConstraint::nonneg(ball(&sp, 0..2, 1.0))],
            )),
        };
        (sys, sets)
    }

    fn cfg() -> VerificationConfig {
        VerificationConfig {
            samples: 2000,
            lambda: Some(0.0),
            ..Default::default()
        }
    }

    #[test]
    fn norm_barrier_passes_on_linear_decay() {
        let (sys, sets) = linear_decay();
        let sp = sys.space.clone();
        let b = GlobalBarrier::single(-&ball(&sp, 0..2, 1.0), 0.0);
        let rep = check_global_barrier(&b, &sys, &sets, &cfg()).unwrap();
        assert!(rep.passed(), "{}", rep.render_text());
        assert_eq!(rep.conditions.len(), 4);
    }

    #[test]
    fn constant_barrier_fails_unsafe_condition() {
        let (sys, sets) = linear_decay();
        let b = GlobalBarrier::single(Polynomial::constant(&sys.space, -1.0), 0.0);
        let rep = check_global_barrier(&b, &sys, &sets, &cfg()).unwrap();
        let u = rep.condition("unsafe").unwrap();
        assert_eq!(u.verdict, Verdict::Counterexample);
        let x = u.counterexample.as_ref().unwrap();
        assert!(sets.unsafe_region.contains(x));
        assert!(b.eval(x) <= -cfg().tolerance);
        assert!(rep.render_csv().contains("unsafe,counterexample"));
    }

    #[test]
    fn more_samples_never_hide_a_counterexample() {
        let (sys, sets) = linear_decay();
        // fails only on a thin part of the initial set
        let sp = sys.space.clone();
        let b = GlobalBarrier::single(
            &Polynomial::var(&sp, 0) - &Polynomial::constant(&sp, 0.45),
            0.0,
        );
        let mut c = cfg();
        c.samples = 500;
        let small = check_global_barrier(&b, &sys, &sets, &c).unwrap();
        c.samples = 4000;
        let large = check_global_barrier(&b, &sys, &sets, &c).unwrap();
        if small.condition("initial").unwrap().verdict == Verdict::Counterexample {
            assert_eq!(
                large.condition("initial").unwrap().verdict,
                Verdict::Counterexample
            );
        }
        assert!(
            large.condition("initial").unwrap().worst >= small.condition("initial").unwrap().worst
        );
    }

    #[test]
    fn trajectories_of_linear_decay_stay_safe() {
        let (sys, sets) = linear_decay();
        let sp = sys.space.clone();
        let b = GlobalBarrier::single(-&ball(&sp, 0..2, 1.0), 0.0);
        let x0 = sets.initial.sample(10, 3).unwrap();
        let seeds: Vec<u64> = (0..10).collect();
        let mon = MonitorConfig {
            horizon: 5.0,
            ..Default::default()
        };
        let rep = monitor_trajectories(&b, &sys, &sets, &x0, &seeds, &mon, &cfg()).unwrap();
        assert!(rep.passed());
        assert!(rep.max_barrier.unwrap() <= 0.0);
        let zero = MonitorConfig {
            horizon: 0.0,
            ..Default::default()
        };
        let rep0 = monitor_trajectories(&b, &sys, &sets, &x0, &seeds, &zero, &cfg()).unwrap();
        let b0 = x0
            .iter()
            .map(|x| b.eval(x))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(rep0.max_barrier.unwrap(), b0);
    }
}
