//! SIR patch network with pulse vaccination.
//!
//! Patch `i` has state `(S_i, I_i, R_i)` and, per mode `p`,
//!
//! ```text
//! S' = m − β_p S I − μ S + Σ_j a_ij S_j
//! I' = β_p S I − (μ + r) I + Σ_j b_ij I_j
//! R' = r I − μ R + Σ_j c_ij R_j
//! ```
//!
//! with the vaccination jump `S → (1 − p)S`, `R → R + pS` at `kT`, `k ≥ 1`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polynomial::{Monomial, Polynomial, VarSpace};
use crate::sos::{GlobalSets, SafeRegion, UnsafeRegion};
use crate::system::{
    ball, ImpulseSchedule, Interconnection, LocalSets, SemialgebraicSet, SetConstraint, Subsystem,
    SystemError,
};

/// `‖x_i‖² ≤ 100`
pub const DOMAIN_RADIUS_SQ: f64 = 100.0;
/// `I_i < 5`
pub const INFECTED_LIMIT: f64 = 5.0;
/// `‖x_i‖² ≤ 1`
pub const INITIAL_RADIUS_SQ: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SirError {
    #[error("migration matrix {name} must be {m}×{m}")]
    MatrixShape { name: &'static str, m: usize },
    #[error("ring instances need at least 3 patches, got {0}")]
    RingTooSmall(usize),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// How the diagonal of a migration matrix balances the off-diagonal rates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Balance {
    /// `a_jj = −Σ_{i≠j} a_ij`: every column sums to zero.
    #[default]
    Columns,
    /// `a_ii = −Σ_{j≠i} a_ij`: every row sums to zero.
    Rows,
}

/// Which local sets the jump condition is imposed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpRegion {
    /// `{q1 ≥ 0, q2 ≥ 0}`, the local safe set.
    Safe,
    /// `{q1 ≥ 0}`, the whole local domain.
    Domain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SirParams {
    pub birth: f64,
    pub death: f64,
    pub recovery: f64,
    pub vaccination: f64,
    /// Infection rate per mode.
    pub betas: Vec<f64>,
    pub period: f64,
    /// Migration matrices, row `i` is the inflow into patch `i`.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub jump_region: JumpRegion,
}

impl SirParams {
    /// The three-patch network with the published migration rates.
    pub fn paper_m3() -> Self {
        let e = |rows: [[f64; 3]; 3]| -> Vec<Vec<f64>> {
            rows.iter()
                .map(|r| r.iter().map(|v| v * 1e-4).collect())
                .collect()
        };
        Self {
            a: e([[-7.0, 14.0, 5.0], [6.0, -21.0, 19.0], [1.0, 7.0, -24.0]]),
            b: e([[-14.0, 2.0, 2.0], [11.0, -5.0, 1.0], [3.0, 3.0, -3.0]]),
            c: e([[-2.0, 3.0, 4.0], [1.0, -6.0, 13.0], [1.0, 3.0, -17.0]]),
            jump_region: JumpRegion::Safe,
            ..Self::template(3)
        }
    }

    /// Shared constants with zero migration.
    pub fn template(m: usize) -> Self {
        Self {
            birth: 0.02,
            death: 0.05,
            recovery: 0.05,
            vaccination: 0.8,
            betas: vec![0.001, 0.005],
            period: 10.0,
            a: vec![vec![0.0; m]; m],
            b: vec![vec![0.0; m]; m],
            c: vec![vec![0.0; m]; m],
            jump_region: JumpRegion::Domain,
        }
    }

    pub fn patches(&self) -> usize {
        self.a.len()
    }

    fn check(&self) -> Result<(), SirError> {
        let m = self.patches();
        for (name, mat) in [("a", &self.a), ("b", &self.b), ("c", &self.c)] {
            if mat.len() != m || mat.iter().any(|r| r.len() != m) {
                return Err(SirError::MatrixShape { name, m });
            }
        }
        Ok(())
    }

    /// Patches `j ≠ i` with a nonzero inflow rate into `i`.
    pub fn neighbours(&self, i: usize) -> Vec<usize> {
        (0..self.patches())
            .filter(|&j| {
                j != i && (self.a[i][j] != 0.0 || self.b[i][j] != 0.0 || self.c[i][j] != 0.0)
            })
            .collect()
    }
}

/// `(S, I, R)`
pub fn patch_space() -> Arc<VarSpace> {
    VarSpace::new(["S", "I", "R"])
}

/// Local sets of one patch; `q1 = 100 − ‖x‖²`, `q2 = 5 − I`, `q3 = 1 − ‖x‖²`.
pub fn patch_sets(space: &Arc<VarSpace>, region: JumpRegion) -> LocalSets {
    let q1 = ball(space, 0..3, DOMAIN_RADIUS_SQ);
    let q2 = &Polynomial::constant(space, INFECTED_LIMIT) - &Polynomial::var(space, 1);
    let q3 = ball(space, 0..3, INITIAL_RADIUS_SQ);
    let domain = SemialgebraicSet::basic(space, vec![SetConstraint::nonneg(q1.clone())]);
    let safe = SemialgebraicSet::basic(
        space,
        vec![
            SetConstraint::nonneg(q1.clone()),
            SetConstraint::nonneg(q2.clone()),
        ],
    );
    LocalSets {
        initial: SemialgebraicSet::basic(space, vec![SetConstraint::nonneg(q3)]),
        unsafe_set: SemialgebraicSet::basic(
            space,
            vec![SetConstraint::nonneg(q1), SetConstraint::nonpos(q2)],
        ),
        jump_region: match region {
            JumpRegion::Safe => safe,
            JumpRegion::Domain => domain.clone(),
        },
        domain,
    }
}

/// Builds the interconnection; neighbours are read off the migration pattern.
pub fn sir_interconnection(params: &SirParams) -> Result<Interconnection, SirError> {
    params.check()?;
    let m = params.patches();
    let state = patch_space();
    let mut subs = Vec::with_capacity(m);
    for i in 0..m {
        let nb = params.neighbours(i);
        let mut names: Vec<String> = vec!["S".into(), "I".into(), "R".into()];
        for &j in &nb {
            names.extend(["S", "I", "R"].iter().map(|v| format!("{v}{}", j + 1)));
        }
        let sp = VarSpace::new(names);
        let lin = |terms: &[(usize, f64)], constant: f64| {
            Polynomial::from_terms(
                &sp,
                std::iter::once((Monomial::one(), constant))
                    .chain(terms.iter().map(|&(v, c)| (Monomial::var(v), c))),
            )
        };
        // migration terms for compartment k
        let inflow = |k: usize, mat: &[Vec<f64>]| -> Vec<(usize, f64)> {
            let mut t = vec![(k, mat[i][i])];
            for (slot, &j) in nb.iter().enumerate() {
                t.push((3 + 3 * slot + k, mat[i][j]));
            }
            t
        };
        let si = Polynomial::from_terms(&sp, [(Monomial::from_pairs([(0, 1), (1, 1)]), 1.0)]);
        let modes = params
            .betas
            .iter()
            .map(|&beta| {
                let mut s_terms = inflow(0, &params.a);
                s_terms.push((0, -params.death));
                let mut i_terms = inflow(1, &params.b);
                i_terms.push((1, -(params.death + params.recovery)));
                let mut r_terms = inflow(2, &params.c);
                r_terms.push((1, params.recovery));
                r_terms.push((2, -params.death));
                vec![
                    lin(&s_terms, params.birth).add_scaled(&si, -beta),
                    lin(&i_terms, 0.0).add_scaled(&si, beta),
                    lin(&r_terms, 0.0),
                ]
            })
            .collect();
        let p = params.vaccination;
        let jump = vec![
            lin(&[(0, 1.0 - p)], 0.0),
            lin(&[(1, 1.0)], 0.0),
            lin(&[(2, 1.0), (0, p)], 0.0),
        ];
        subs.push(Subsystem {
            name: format!("patch{}", i + 1),
            state_space: state.clone(),
            input_space: sp,
            neighbours: nb,
            modes,
            jump,
            schedule: ImpulseSchedule::periodic(params.period)?,
            sets: patch_sets(&state, params.jump_region),
        });
    }
    Ok(Interconnection::new(subs, params.betas.len())?)
}

/// Global sets for the union-unsafe experiment: unsafe when any patch has
/// `I_i ≥ 5`, a set only available through a pointwise maximum. The jump
/// condition lives on the product of the local safe sets.
pub fn union_unsafe_sets(ic: &Interconnection) -> GlobalSets {
    let space = ic.global_space();
    let off = ic.offsets();
    let initial: Vec<&SemialgebraicSet> = ic.subsystems.iter().map(|s| &s.sets.initial).collect();
    let domain: Vec<&SemialgebraicSet> = ic.subsystems.iter().map(|s| &s.sets.domain).collect();
    let local_safe: Vec<SemialgebraicSet> = ic
        .subsystems
        .iter()
        .map(|s| patch_sets(&s.state_space, JumpRegion::Safe).jump_region)
        .collect();
    let safe_refs: Vec<&SemialgebraicSet> = local_safe.iter().collect();
    let pieces = off[..ic.len()]
        .iter()
        .map(|&o| &Polynomial::var(&space, o + 1) - &Polynomial::constant(&space, INFECTED_LIMIT))
        .collect();
    GlobalSets {
        initial: SemialgebraicSet::product(&space, &initial),
        unsafe_region: UnsafeRegion::MaxOf {
            space: space.clone(),
            pieces,
            within: SemialgebraicSet::product(&space, &domain),
        },
        safe: SafeRegion::Cells(SemialgebraicSet::product(&space, &safe_refs)),
    }
}

/// The same union written out as explicit cells `X ∩ {I_i ≥ 5}`.
pub fn union_unsafe_cells(ic: &Interconnection) -> SemialgebraicSet {
    let space = ic.global_space();
    let domain: Vec<&SemialgebraicSet> = ic.subsystems.iter().map(|s| &s.sets.domain).collect();
    let x = SemialgebraicSet::product(&space, &domain);
    let cells = ic.offsets()[..ic.len()]
        .iter()
        .map(|&o| {
            let mut cell = x.cells[0].clone();
            let q2 =
                &Polynomial::constant(&space, INFECTED_LIMIT) - &Polynomial::var(&space, o + 1);
            cell.constraints.push(SetConstraint::nonpos(q2));
            cell
        })
        .collect();
    SemialgebraicSet::new(&space, cells)
}

/// Global sets for the ring benchmark: unsafe set `∏ X_unsafe,i`, jump
/// condition on the whole domain.
pub fn product_unsafe_sets(ic: &Interconnection) -> GlobalSets {
    let space = ic.global_space();
    let initial: Vec<&SemialgebraicSet> = ic.subsystems.iter().map(|s| &s.sets.initial).collect();
    let unsafe_sets: Vec<&SemialgebraicSet> =
        ic.subsystems.iter().map(|s| &s.sets.unsafe_set).collect();
    GlobalSets {
        initial: SemialgebraicSet::product(&space, &initial),
        unsafe_region: UnsafeRegion::Cells(SemialgebraicSet::product(&space, &unsafe_sets)),
        safe: SafeRegion::WholeDomain,
    }
}

/// `true` iff patches `i` and `j` are adjacent on a ring of `m`.
pub fn ring_adjacent(i: usize, j: usize, m: usize) -> bool {
    let d = i.abs_diff(j);
    i != j && d.min(m - d) == 1
}

/// Seeded ring parameters: adjacent rates are `|N(0, 0.001)|`, drawn for
/// `a`, then `b`, then `c`, row by row.
pub fn ring_params(m: usize, seed: u64, balance: Balance) -> Result<SirParams, SirError> {
    if m < 3 {
        return Err(SirError::RingTooSmall(m));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::<f64>::new(0.0, 0.001).expect("valid normal");
    let mut draw = || -> Vec<Vec<f64>> {
        let mut mat = vec![vec![0.0; m]; m];
        for (i, row) in mat.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if ring_adjacent(i, j, m) {
                    *v = normal.sample(&mut rng).abs();
                }
            }
        }
        for k in 0..m {
            let off: f64 = match balance {
                Balance::Columns => (0..m).filter(|&i| i != k).map(|i| mat[i][k]).sum(),
                Balance::Rows => (0..m).filter(|&j| j != k).map(|j| mat[k][j]).sum(),
            };
            mat[k][k] = -off;
        }
        mat
    };
    let a = draw();
    let b = draw();
    let c = draw();
    Ok(SirParams {
        a,
        b,
        c,
        ..SirParams::template(m)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_patch_wiring() {
        let ic = sir_interconnection(&SirParams::paper_m3()).unwrap();
        assert_eq!(ic.len(), 3);
        assert_eq!(ic.subsystems[0].neighbours, vec![1, 2]);
        let flat = ic.flatten().unwrap();
        assert_eq!(flat.dim(), 9);
        // dS1/dt contains +14e-4 S2
        let s2 = flat.space.names().iter().position(|n| n == "S_2").unwrap();
        let c = flat.modes[0][0].coefficient(&Monomial::var(s2));
        assert!((c - 14e-4).abs() < 1e-15);
    }

    #[test]
    fn three_patch_matrices_have_zero_column_sums() {
        let p = SirParams::paper_m3();
        for mat in [&p.a, &p.b, &p.c] {
            for j in 0..3 {
                let s: f64 = (0..3).map(|i| mat[i][j]).sum();
                assert!(s.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn vaccination_keeps_population() {
        let ic = sir_interconnection(&SirParams::paper_m3()).unwrap();
        let sub = &ic.subsystems[0];
        let total = |v: &[f64]| v[0] + v[1] + v[2];
        let x = [0.3, 0.2, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let y: Vec<f64> = sub.jump.iter().map(|p| p.eval(&x)).collect();
        assert!((total(&y) - total(&x)).abs() < 1e-15);
        assert!((y[0] - 0.06).abs() < 1e-15);
    }

    #[test]
    fn ring_pattern() {
        let p = ring_params(4, 7, Balance::Columns).unwrap();
        for mat in [&p.a, &p.b, &p.c] {
            assert_eq!(mat[0][2], 0.0);
            assert_eq!(mat[1][3], 0.0);
            assert!(mat[0][1] > 0.0 && mat[0][3] > 0.0);
            for j in 0..4 {
                let s: f64 = (0..4).map(|i| mat[i][j]).sum();
                assert!(s.abs() <= 1e-15);
            }
        }
        let p3 = ring_params(3, 1, Balance::Columns).unwrap();
        assert!((0..3).all(|i| (0..3).all(|j| i == j || p3.a[i][j] > 0.0)));
        assert_eq!(
            ring_params(5, 11, Balance::Columns).unwrap(),
            ring_params(5, 11, Balance::Columns).unwrap()
        );
        let rows = ring_params(5, 11, Balance::Rows).unwrap();
        assert!(rows.a.iter().all(|r| r.iter().sum::<f64>().abs() <= 1e-15));
        assert!(ring_params(2, 0, Balance::Columns).is_err());
    }

    #[test]
    fn union_and_product_sets() {
        let ic = sir_interconnection(&SirParams::paper_m3()).unwrap();
        let union = union_unsafe_sets(&ic);
        let cells = union_unsafe_cells(&ic);
        let prod = product_unsafe_sets(&ic);
        let mut x = vec![0.0; 9];
        x[4] = 6.0;
        assert!(union.unsafe_region.contains(&x) && cells.contains(&x));
        assert!(!prod.unsafe_region.contains(&x));
        x[1] = 6.0;
        x[7] = 6.0;
        assert!(prod.unsafe_region.contains(&x));
    }
}
