//! Builders for the local (per-subsystem) and global barrier programs.
//!
//! Both builders work in scaled coordinates `x = s ⊙ x̃`, where `s` is taken
//! from the bounding balls of the domain, so that every set is of unit size
//! and Gram entries stay well conditioned. Recovered barriers are mapped back
//! to the original coordinates.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AffinePoly, FreePoly, SosError, SosProgram};
use crate::compose::LocalCertificate;
use crate::polynomial::{Polynomial, VarSpace};
use crate::sdp::SdpSolution;
use crate::system::{
    Interconnection, SemialgebraicSet, SetConstraint, Subsystem, SwitchedImpulsiveSystem,
};

/// Constants of one local certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalConstants {
    pub lambda: f64,
    pub alpha: f64,
    pub c: f64,
    pub l: f64,
    #[serde(default)]
    pub eps1: f64,
    #[serde(default)]
    pub eps2: f64,
}

impl Default for LocalConstants {
    fn default() -> Self {
        Self {
            lambda: -0.1,
            alpha: 0.1,
            c: 0.0002,
            l: 10000.0,
            eps1: 0.0,
            eps2: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProgramOptions {
    pub barrier_degree: u32,
    /// Upper bound on multiplier degrees. The actual degree of each
    /// multiplier is the largest even value that keeps `τ·q` within the
    /// degree of the constraint it enters.
    pub multiplier_degree: u32,
    /// Reproduce the multiplier-free decrease condition (no set information).
    pub literal_rho5: bool,
    /// Rescale variables to unit domains before building.
    pub scale_variables: bool,
}

impl Default for ProgramOptions {
    fn default() -> Self {
        Self {
            barrier_degree: 2,
            multiplier_degree: 2,
            literal_rho5: false,
            scale_variables: true,
        }
    }
}

/// Global unsafe set as handed to the global builder.
#[derive(Debug, Clone, PartialEq)]
pub enum UnsafeRegion {
    /// Finite union of basic cells (one SOS constraint per cell).
    Cells(SemialgebraicSet),
    /// `{x : max_k p_k(x) ≥ 0}` given only through a pointwise maximum.
    /// Membership is easy, but there is no polynomial description to hand to
    /// the S-procedure.
    MaxOf {
        space: Arc<VarSpace>,
        pieces: Vec<Polynomial>,
        /// Set the maximum is restricted to (usually the domain).
        within: SemialgebraicSet,
    },
}

impl UnsafeRegion {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Self::Cells(s) => s.contains(x),
            Self::MaxOf { pieces, within, .. } => {
                within.contains(x)
                    && pieces
                        .iter()
                        .map(|p| p.eval(x))
                        .fold(f64::NEG_INFINITY, f64::max)
                        >= 0.0
            }
        }
    }

    pub fn space(&self) -> &Arc<VarSpace> {
        match self {
            Self::Cells(s) => &s.space,
            Self::MaxOf { space, .. } => space,
        }
    }
}

/// Domain on which the jump condition is imposed.
#[derive(Debug, Clone, PartialEq)]
pub enum SafeRegion {
    Cells(SemialgebraicSet),
    /// No polynomial description: fall back to the whole domain X.
    WholeDomain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSets {
    pub initial: SemialgebraicSet,
    pub unsafe_region: UnsafeRegion,
    pub safe: SafeRegion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlobalOptions {
    pub program: ProgramOptions,
    /// Decay rate λ in the flow condition.
    pub lambda: f64,
    /// Jump factor θ (synthesis uses θ = 1).
    pub theta: f64,
    /// `B ≥ margin` on the unsafe set stands in for the strict inequality.
    pub unsafe_margin: f64,
}

impl Default for GlobalOptions {
    fn default() -> Self {
        Self {
            program: ProgramOptions::default(),
            lambda: -0.1,
            theta: 1.0,
            unsafe_margin: 1.0,
        }
    }
}

/// A built program together with what is needed to read certificates back.
#[derive(Debug, Clone)]
pub struct BuiltProgram {
    pub program: SosProgram,
    pub barrier: FreePoly,
    /// Per-variable scale of the barrier's space: `x = scale ⊙ x̃`.
    pub scale: Vec<f64>,
    /// `B = unit · B̂` where `B̂` is the scaled unknown.
    pub unit: f64,
    /// Original-space barrier variables.
    pub space: Arc<VarSpace>,
}

impl BuiltProgram {
    /// Barrier polynomial in the original coordinates and units.
    pub fn recover_barrier(&self, sol: &SdpSolution) -> Polynomial {
        let scaled = self.barrier.recover(&sol.free);
        let inv: Vec<f64> = self.scale.iter().map(|s| 1.0 / s).collect();
        let p = scaled.scale_vars(&inv).scale(self.unit);
        let map: Vec<usize> = (0..self.space.dim()).collect();
        p.embed(&self.space, &map)
    }
}

fn even_ceil(d: u32) -> u32 {
    d + d % 2
}

/// Largest even multiplier degree `≤ max` such that `τ·q` stays within
/// `natural`, where `natural` is raised if `q` alone exceeds it.
fn multiplier_degree(max: u32, natural: u32, qdeg: u32) -> u32 {
    let natural = natural.max(even_ceil(qdeg));
    let mut e = max - max % 2;
    while e > 0 && e + qdeg > natural {
        e -= 2;
    }
    e
}

/// Per-variable half-widths read from ball constraints; 1 where unknown.
pub fn domain_scale(set: &SemialgebraicSet) -> Vec<f64> {
    let n = set.dim();
    let mut s = vec![0.0f64; n];
    for cell in &set.cells {
        for c in &cell.constraints {
            let p = c.as_nonneg();
            let mut a = 0.0;
            let mut vars = Vec::new();
            let mut ok = true;
            for (m, coef) in p.terms() {
                if m.is_one() {
                    a = coef;
                } else {
                    let pr: Vec<_> = m.pairs().collect();
                    if pr.len() == 1 && pr[0].1 == 2 && coef < 0.0 {
                        vars.push((pr[0].0, -coef));
                    } else {
                        ok = false;
                    }
                }
            }
            if ok && a > 0.0 {
                for (v, w) in vars {
                    s[v] = s[v].max((a / w).sqrt());
                }
            }
        }
    }
    s.iter().map(|&v| if v > 0.0 { v } else { 1.0 }).collect()
}

/// `q(s ⊙ x̃)` divided by its largest coefficient, re-homed in `space`.
fn scaled_constraint(
    c: &SetConstraint,
    scale: &[f64],
    space: &Arc<VarSpace>,
    map: &[usize],
) -> Polynomial {
    let p = c.as_nonneg().scale_vars(scale);
    let m = p.max_abs_coefficient();
    let p = if m > 0.0 { p.scale(1.0 / m) } else { p };
    p.embed(space, map)
}

/// Scaled vector field component `f_k(s ⊙ x̃) / s_k`.
fn scaled_field(f: &[Polynomial], scale: &[f64]) -> Vec<Polynomial> {
    f.iter()
        .zip(scale)
        .map(|(p, s)| p.scale_vars(scale).scale(1.0 / s))
        .collect()
}

struct MultiplierPlan<'a> {
    label: &'a str,
    constraints: Vec<Polynomial>,
    natural: u32,
}

/// Adds `target − Σ τ_k s_k` as an SOS constraint, creating one multiplier
/// per set constraint.
fn add_with_multipliers(
    prog: &mut SosProgram,
    mut target: AffinePoly,
    plan: MultiplierPlan<'_>,
    max_mult: u32,
) -> Result<(), SosError> {
    let space = target.space.clone();
    let mut natural = plan.natural;
    for q in &plan.constraints {
        natural = natural.max(even_ceil(q.degree()));
    }
    for (k, q) in plan.constraints.iter().enumerate() {
        let d = multiplier_degree(max_mult, natural, q.degree());
        let t = prog.new_sos(&format!("{}:tau{}", plan.label, k + 1), &space, d)?;
        let term = prog.blocks[t].times(t, q);
        target.add(&term, -1.0);
    }
    prog.add_constraint(plan.label, target, Some(natural / 2))?;
    Ok(())
}

/// Sign-condition polynomials of one cell, scaled and embedded.
fn cell_polys(
    set: &SemialgebraicSet,
    scale: &[f64],
    space: &Arc<VarSpace>,
    map: &[usize],
) -> Vec<Vec<Polynomial>> {
    set.cells
        .iter()
        .map(|cell| {
            cell.constraints
                .iter()
                .map(|c| scaled_constraint(c, scale, space, map))
                .collect()
        })
        .collect()
}

fn cell_label(base: &str, k: usize, n: usize) -> String {
    if n == 1 {
        base.to_string()
    } else {
        format!("{base}.{}", k + 1)
    }
}

/// Whether subsystem `i` feeds some neighbour `j` with `c_j ≠ 0`.
pub fn feeds_coupled(ic: &Interconnection, i: usize, consts: &[LocalConstants]) -> bool {
    ic.subsystems
        .iter()
        .enumerate()
        .any(|(j, s)| s.neighbours.contains(&i) && effective_c(s, &consts[j]) != 0.0)
}

/// `c_i`, forced to 0 when the subsystem has no neighbours.
pub fn effective_c(sub: &Subsystem, k: &LocalConstants) -> f64 {
    if sub.neighbours.is_empty() {
        0.0
    } else {
        k.c
    }
}

fn check_local_constants(i: usize, k: &LocalConstants) -> Result<(), SosError> {
    let bad = |what: &str| Err(SosError::BadParameter(format!("subsystem {i}: {what}")));
    if !(k.l > 0.0) {
        return bad("L must be positive");
    }
    if !(k.alpha >= 0.0) {
        return bad("alpha must be nonnegative");
    }
    if !(k.c >= 0.0) {
        return bad("c must be nonnegative");
    }
    if ![k.lambda, k.eps1, k.eps2].iter().all(|v| v.is_finite()) {
        return bad("constants must be finite");
    }
    Ok(())
}

fn check_options(o: &ProgramOptions) -> Result<(), SosError> {
    if o.barrier_degree == 0 {
        return Err(SosError::BadParameter(
            "barrier degree must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Local pseudo-barrier program for subsystem `i`:
///
/// * `ρ1 = −B + ε1 − Σ τ s` on each initial cell,
/// * `ρ2 = B − ε2 − Σ τ s` on each unsafe cell,
/// * `ρ3 = B − B∘g_i − Σ τ s` on each jump-region cell,
/// * `ρ4 = −‖x_i‖² + α_i B + L − Σ τ s` on the domain, only when `i` feeds a
///   neighbour with nonzero `c`,
/// * `ρ5,p = −∇B·f_{i,p} + λ_i B + c_i(‖ω_i‖² − L M_i) − Σ τ s` per mode, over
///   `(x_i, ω_i)` with multipliers on the own and neighbour domain balls.
pub fn build_local_program(
    ic: &Interconnection,
    i: usize,
    consts: &[LocalConstants],
    opts: &ProgramOptions,
) -> Result<BuiltProgram, SosError> {
    check_options(opts)?;
    if consts.len() != ic.len() {
        return Err(SosError::BadParameter(format!(
            "{} constant sets for {} subsystems",
            consts.len(),
            ic.len()
        )));
    }
    let sub = &ic.subsystems[i];
    sub.validate(i)?;
    let k = consts[i];
    check_local_constants(i, &k)?;
    let n = sub.dim();
    for (p, f) in sub.modes.iter().enumerate() {
        if f.iter().any(|c| c.terms().any(|(_, v)| !v.is_finite())) {
            return Err(SosError::NonPolynomial(format!(
                "subsystem {i} mode {p}: non-finite coefficient"
            )));
        }
    }
    if sub
        .jump
        .iter()
        .any(|g| g.depends_on(n..sub.input_space.dim()))
    {
        return Err(SosError::NonPolynomial(format!(
            "subsystem {i}: jump map depends on the internal input; the local jump condition needs g_i(x_i)"
        )));
    }

    // scaling: own state from own domain, ω slots from the neighbour domains
    let mut scale = if opts.scale_variables {
        domain_scale(&sub.sets.domain)
    } else {
        vec![1.0; n]
    };
    let mut omega_domains = Vec::new();
    for &j in &sub.neighbours {
        let d = &ic.subsystems[j].sets.domain;
        if d.cells.len() != 1 {
            return Err(SosError::BadParameter(format!(
                "neighbour {j} of subsystem {i} needs a single-cell domain"
            )));
        }
        if opts.scale_variables {
            scale.extend(domain_scale(d));
        } else {
            scale.extend(std::iter::repeat(1.0).take(d.dim()));
        }
        omega_domains.push(d);
    }
    let state_scale = scale[..n].to_vec();
    let unit = k.l;
    let c_eff = effective_c(sub, &k);
    let m_i = sub.neighbour_count() as f64;

    let xs = sub.state_space.clone();
    let ws = sub.input_space.clone();
    let ident: Vec<usize> = (0..n).collect();

    let mut prog = SosProgram::new();
    let b = prog.new_free_polynomial("B", &xs, opts.barrier_degree);
    let bdeg = even_ceil(opts.barrier_degree);
    let md = opts.multiplier_degree;

    // ρ1
    let initial = cell_polys(&sub.sets.initial, &state_scale, &xs, &ident);
    for (ci, cons) in initial.iter().enumerate() {
        let mut t = b.affine();
        t.scale(-1.0);
        t.add_poly(&Polynomial::constant(&xs, k.eps1 / unit), 1.0);
        add_with_multipliers(
            &mut prog,
            t,
            MultiplierPlan {
                label: &cell_label("rho1", ci, initial.len()),
                constraints: cons.clone(),
                natural: bdeg,
            },
            md,
        )?;
    }
    // ρ2
    let unsafe_cells = cell_polys(&sub.sets.unsafe_set, &state_scale, &xs, &ident);
    for (ci, cons) in unsafe_cells.iter().enumerate() {
        let mut t = b.affine();
        t.add_poly(&Polynomial::constant(&xs, -k.eps2 / unit), 1.0);
        add_with_multipliers(
            &mut prog,
            t,
            MultiplierPlan {
                label: &cell_label("rho2", ci, unsafe_cells.len()),
                constraints: cons.clone(),
                natural: bdeg,
            },
            md,
        )?;
    }
    // ρ3: g_i restricted to the state variables
    let g_local: Vec<Polynomial> = sub
        .jump
        .iter()
        .map(|g| Polynomial::from_terms(&xs, g.terms().map(|(m, c)| (m.clone(), c))))
        .collect();
    let g_scaled = scaled_field(&g_local, &state_scale);
    let jump_cells = cell_polys(&sub.sets.jump_region, &state_scale, &xs, &ident);
    for (ci, cons) in jump_cells.iter().enumerate() {
        let bg = b.try_map(|m| Ok(m.compose_all(&g_scaled)?))?;
        let mut t = b.affine();
        t.add(&bg, -1.0);
        let natural = even_ceil(t.degree()).max(bdeg);
        add_with_multipliers(
            &mut prog,
            t,
            MultiplierPlan {
                label: &cell_label("rho3", ci, jump_cells.len()),
                constraints: cons.clone(),
                natural,
            },
            md,
        )?;
    }
    // ρ4
    if feeds_coupled(ic, i, consts) {
        let domain_cells = cell_polys(&sub.sets.domain, &state_scale, &xs, &ident);
        for (ci, cons) in domain_cells.iter().enumerate() {
            let mut t = b.affine();
            t.scale(k.alpha);
            let norm = Polynomial::from_terms(
                &xs,
                (0..n).map(|v| {
                    (
                        crate::polynomial::Monomial::from_pairs([(v, 2)]),
                        -state_scale[v].powi(2) / unit,
                    )
                }),
            );
            t.add_poly(&norm, 1.0);
            t.add_poly(&Polynomial::constant(&xs, k.l / unit), 1.0);
            add_with_multipliers(
                &mut prog,
                t,
                MultiplierPlan {
                    label: &cell_label("rho4", ci, domain_cells.len()),
                    constraints: cons.clone(),
                    natural: bdeg.max(2),
                },
                md,
            )?;
        }
    }
    // ρ5 per mode over (x_i, ω_i)
    let mut ball_cons: Vec<Polynomial> = Vec::new();
    if !opts.literal_rho5 {
        let own = &sub.sets.domain;
        if own.cells.len() != 1 {
            return Err(SosError::BadParameter(format!(
                "subsystem {i} needs a single-cell domain for the decrease condition"
            )));
        }
        let lift: Vec<usize> = (0..n).collect();
        for c in &own.cells[0].constraints {
            ball_cons.push(scaled_constraint(c, &state_scale, &ws, &lift));
        }
        let mut off = n;
        for d in &omega_domains {
            let dn = d.dim();
            let map: Vec<usize> = (off..off + dn).collect();
            for c in &d.cells[0].constraints {
                ball_cons.push(scaled_constraint(c, &scale[off..off + dn], &ws, &map));
            }
            off += dn;
        }
    }
    let b_lifted = FreePoly {
        space: ws.clone(),
        coeffs: b.coeffs.iter().map(|(idx, m)| (*idx, m.clone())).collect(),
    };
    for (p, f) in sub.modes.iter().enumerate() {
        let f_scaled = scaled_field(f, &scale);
        let lie = b_lifted.map(|m| m.lie_derivative(&f_scaled[..n]).scale(-1.0));
        let mut t = lie;
        t.add(&b_lifted.affine(), k.lambda);
        if c_eff != 0.0 {
            let omega_norm = Polynomial::from_terms(
                &ws,
                (n..ws.dim()).map(|v| {
                    (
                        crate::polynomial::Monomial::from_pairs([(v, 2)]),
                        c_eff * scale[v].powi(2) / unit,
                    )
                }),
            );
            t.add_poly(&omega_norm, 1.0);
            t.add_poly(&Polynomial::constant(&ws, -c_eff * k.l * m_i / unit), 1.0);
        }
        let natural = even_ceil(t.degree()).max(bdeg);
        add_with_multipliers(
            &mut prog,
            t,
            MultiplierPlan {
                label: &format!("rho5.mode{}", p + 1),
                constraints: ball_cons.clone(),
                natural,
            },
            md,
        )?;
    }

    Ok(BuiltProgram {
        program: prog,
        barrier: b,
        scale: state_scale,
        unit,
        space: xs,
    })
}

/// Packs a solved local program into a certificate.
pub fn local_certificate(
    built: &BuiltProgram,
    sol: &SdpSolution,
    ic: &Interconnection,
    i: usize,
    all: &[LocalConstants],
) -> LocalCertificate {
    let sub = &ic.subsystems[i];
    let consts = &all[i];
    LocalCertificate {
        barrier: built.recover_barrier(sol),
        lambda: consts.lambda,
        eps1: consts.eps1,
        eps2: consts.eps2,
        alpha: consts.alpha,
        c: effective_c(sub, consts),
        l: consts.l,
        neighbours: sub.neighbours.clone(),
        mode_count: sub.modes.len(),
        growth_required: feeds_coupled(ic, i, all),
    }
}

/// Global barrier program over the flattened system:
///
/// * `−B − Σ τ s` on each initial cell,
/// * `B − margin − Σ τ s` on each unsafe cell,
/// * `−∇B·f_p + λB − Σ τ s` on each domain cell, per mode,
/// * `θB − B∘g − Σ τ s` on each safe cell (or the domain), per jump map.
pub fn build_global_program(
    sys: &SwitchedImpulsiveSystem,
    sets: &GlobalSets,
    opts: &GlobalOptions,
) -> Result<BuiltProgram, SosError> {
    check_options(&opts.program)?;
    sys.validate()?;
    let unsafe_set = match &sets.unsafe_region {
        UnsafeRegion::Cells(s) => s,
        UnsafeRegion::MaxOf { pieces, .. } => {
            return Err(SosError::NonPolynomial(format!(
                "unsafe set is given as the maximum of {} polynomials, not as a finite union of basic \
                 semialgebraic cells; the S-procedure needs explicit cells",
                pieces.len()
            )));
        }
    };
    if !(opts.theta >= 0.0) {
        return Err(SosError::BadParameter("theta must be nonnegative".into()));
    }
    let n = sys.dim();
    let sp = sys.space.clone();
    let ident: Vec<usize> = (0..n).collect();
    let scale = if opts.program.scale_variables {
        domain_scale(&sys.domain)
    } else {
        vec![1.0; n]
    };
    let md = opts.program.multiplier_degree;
    let mut prog = SosProgram::new();
    let b = prog.new_free_polynomial("B", &sp, opts.program.barrier_degree);
    let bdeg = even_ceil(opts.program.barrier_degree);

    let initial = cell_polys(&sets.initial, &scale, &sp, &ident);
    for (ci, cons) in initial.iter().enumerate() {
        let mut t = b.affine();
        t.scale(-1.0);
        add_with_multipliers(
            &mut prog,
            t,
            MultiplierPlan {
                label: &cell_label("initial", ci, initial.len()),
                constraints: cons.clone(),
                natural: bdeg,
            },
            md,
        )?;
    }
    let unsafe_cells = cell_polys(unsafe_set, &scale, &sp, &ident);
    for (ci, cons) in unsafe_cells.iter().enumerate() {
        let mut t = b.affine();
        t.add_poly(&Polynomial::constant(&sp, -opts.unsafe_margin), 1.0);
        add_with_multipliers(
            &mut prog,
            t,
            MultiplierPlan {
                label: &cell_label("unsafe", ci, unsafe_cells.len()),
                constraints: cons.clone(),
                natural: bdeg,
            },
            md,
        )?;
    }
    let domain_cells = cell_polys(&sys.domain, &scale, &sp, &ident);
    for (p, f) in sys.modes.iter().enumerate() {
        let f_scaled = scaled_field(f, &scale);
        for (ci, cons) in domain_cells.iter().enumerate() {
            let mut t = b.map(|m| m.lie_derivative(&f_scaled).scale(-1.0));
            t.add(&b.affine(), opts.lambda);
            let natural = even_ceil(t.degree()).max(bdeg);
            add_with_multipliers(
                &mut prog,
                t,
                MultiplierPlan {
                    label: &cell_label(&format!("flow.mode{}", p + 1), ci, domain_cells.len()),
                    constraints: if opts.program.literal_rho5 {
                        Vec::new()
                    } else {
                        cons.clone()
                    },
                    natural,
                },
                md,
            )?;
        }
    }
    let jump_cells = match &sets.safe {
        SafeRegion::Cells(s) => cell_polys(s, &scale, &sp, &ident),
        SafeRegion::WholeDomain => domain_cells.clone(),
    };
    let maps = sys.jump_maps();
    if sys.schedule != crate::system::ImpulseSchedule::Never
        || matches!(sys.jump, crate::system::JumpRule::Gated(_))
    {
        for (gi, g) in maps.iter().enumerate() {
            let g_scaled = scaled_field(g, &scale);
            let bg = b.try_map(|m| Ok(m.compose_all(&g_scaled)?))?;
            for (ci, cons) in jump_cells.iter().enumerate() {
                let mut t = b.affine();
                t.scale(opts.theta);
                t.add(&bg, -1.0);
                let natural = even_ceil(t.degree()).max(bdeg);
                let label = if maps.len() == 1 {
                    cell_label("jump", ci, jump_cells.len())
                } else {
                    cell_label(&format!("jump.map{}", gi + 1), ci, jump_cells.len())
                };
                add_with_multipliers(
                    &mut prog,
                    t,
                    MultiplierPlan {
                        label: &label,
                        constraints: cons.clone(),
                        natural,
                    },
                    md,
                )?;
            }
        }
    }
    Ok(BuiltProgram {
        program: prog,
        barrier: b,
        scale,
        unit: 1.0,
        space: sp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiplier_degrees_follow_constraint_degree() {
        assert_eq!(multiplier_degree(2, 2, 2), 0);
        assert_eq!(multiplier_degree(2, 2, 1), 0);
        assert_eq!(multiplier_degree(2, 4, 2), 2);
        assert_eq!(multiplier_degree(4, 4, 1), 2);
        assert_eq!(multiplier_degree(0, 4, 2), 0);
    }
}
