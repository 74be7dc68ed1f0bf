//! Sum-of-squares programs: Gram parameterisation, S-procedure terms and
//! reduction to [`SdpProblem`] by coefficient matching.
//!
//! Unknowns are either free scalars (barrier coefficients) or entries of
//! symmetric PSD Gram blocks (SOS multipliers and the SOS slack of each
//! constraint). Targets are affine in the unknowns, so every monomial of
//! `target − zᵀQz` yields one linear equality.

mod programs;

pub use programs::*;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use faer::Mat;
use thiserror::Error;

use crate::polynomial::{monomial_basis, Monomial, Polynomial, VarSpace};
use crate::sdp::{SdpConstraint, SdpEntry, SdpProblem, SdpSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SosError {
    #[error("Gram parameterisation needs an even degree, got {0}")]
    OddDegree(u32),
    #[error("constraint `{label}`: target degree {target} exceeds twice the basis degree {basis}; basis degree {required} is required")]
    DegreeMismatch {
        label: String,
        target: u32,
        basis: u32,
        required: u32,
    },
    #[error("constraint `{0}` lives in a different variable space than its Gram block")]
    SpaceMismatch(String),
    #[error("{0}")]
    NonPolynomial(String),
    #[error("invalid synthesis parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    System(#[from] crate::system::SystemError),
    #[error(transparent)]
    Poly(#[from] crate::polynomial::PolyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Unknown {
    Free(usize),
    /// Entry `(row, col)` with `row ≤ col` of a Gram block.
    Gram {
        block: usize,
        row: usize,
        col: usize,
    },
}

/// `constant + Σ coef · unknown`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub constant: f64,
    pub terms: BTreeMap<Unknown, f64>,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: BTreeMap::new(),
        }
    }

    pub fn unknown(u: Unknown, coef: f64) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(u, coef);
        Self {
            constant: 0.0,
            terms,
        }
    }

    fn add_scaled(&mut self, other: &AffineExpr, s: f64) {
        self.constant += s * other.constant;
        for (u, c) in &other.terms {
            *self.terms.entry(*u).or_insert(0.0) += s * c;
        }
    }

    fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.values().all(|c| *c == 0.0)
    }

    pub fn eval(&self, values: &dyn Fn(Unknown) -> f64) -> f64 {
        self.constant + self.terms.iter().map(|(u, c)| c * values(*u)).sum::<f64>()
    }
}

/// Polynomial whose coefficients are affine in the program unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePoly {
    pub space: Arc<VarSpace>,
    pub terms: BTreeMap<Monomial, AffineExpr>,
}

impl AffinePoly {
    pub fn zero(space: &Arc<VarSpace>) -> Self {
        Self {
            space: space.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn from_poly(p: &Polynomial) -> Self {
        let mut out = Self::zero(p.space());
        out.add_poly(p, 1.0);
        out
    }

    pub fn add_poly(&mut self, p: &Polynomial, s: f64) {
        for (m, c) in p.terms() {
            self.terms.entry(m.clone()).or_default().constant += s * c;
        }
    }

    /// Adds `coef · unknown · p`.
    pub fn add_unknown_times(&mut self, u: Unknown, p: &Polynomial, coef: f64) {
        for (m, c) in p.terms() {
            *self
                .terms
                .entry(m.clone())
                .or_default()
                .terms
                .entry(u)
                .or_insert(0.0) += coef * c;
        }
    }

    pub fn add(&mut self, other: &AffinePoly, s: f64) {
        for (m, e) in &other.terms {
            self.terms.entry(m.clone()).or_default().add_scaled(e, s);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for e in self.terms.values_mut() {
            e.constant *= s;
            e.terms.values_mut().for_each(|c| *c *= s);
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .filter(|(_, e)| !e.is_zero())
            .map(|(m, _)| m.degree())
            .max()
            .unwrap_or(0)
    }

    /// Instantiates the unknowns.
    pub fn instantiate(&self, values: &dyn Fn(Unknown) -> f64) -> Polynomial {
        Polynomial::from_terms(
            &self.space,
            self.terms.iter().map(|(m, e)| (m.clone(), e.eval(values))),
        )
    }
}

/// Polynomial with free coefficients over a fixed monomial list: `Σ c_k m_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreePoly {
    pub space: Arc<VarSpace>,
    pub coeffs: Vec<(usize, Monomial)>,
}

impl FreePoly {
    /// The polynomial itself, as an affine polynomial.
    pub fn affine(&self) -> AffinePoly {
        self.map(|p| p.clone())
    }

    /// Applies a linear operator monomial by monomial: `Σ c_k · op(m_k)`.
    pub fn map(&self, op: impl Fn(&Polynomial) -> Polynomial) -> AffinePoly {
        let mut out: Option<AffinePoly> = None;
        for (idx, m) in &self.coeffs {
            let p = op(&Polynomial::from_terms(&self.space, [(m.clone(), 1.0)]));
            let acc = out.get_or_insert_with(|| AffinePoly::zero(p.space()));
            acc.add_unknown_times(Unknown::Free(*idx), &p, 1.0);
        }
        out.unwrap_or_else(|| AffinePoly::zero(&self.space))
    }

    pub fn try_map(
        &self,
        op: impl Fn(&Polynomial) -> Result<Polynomial, SosError>,
    ) -> Result<AffinePoly, SosError> {
        let mut out: Option<AffinePoly> = None;
        for (idx, m) in &self.coeffs {
            let p = op(&Polynomial::from_terms(&self.space, [(m.clone(), 1.0)]))?;
            let acc = out.get_or_insert_with(|| AffinePoly::zero(p.space()));
            acc.add_unknown_times(Unknown::Free(*idx), &p, 1.0);
        }
        Ok(out.unwrap_or_else(|| AffinePoly::zero(&self.space)))
    }

    pub fn recover(&self, free: &[f64]) -> Polynomial {
        Polynomial::from_terms(
            &self.space,
            self.coeffs.iter().map(|(i, m)| (m.clone(), free[*i])),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramBlock {
    pub label: String,
    pub space: Arc<VarSpace>,
    pub basis: Vec<Monomial>,
}

impl GramBlock {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `zᵀ G z` as an affine polynomial in the block's entries.
    pub fn as_affine(&self, block: usize) -> AffinePoly {
        self.times(block, &Polynomial::constant(&self.space, 1.0))
    }

    /// `(zᵀ G z) · q`.
    pub fn times(&self, block: usize, q: &Polynomial) -> AffinePoly {
        let mut out = AffinePoly::zero(&self.space);
        for a in 0..self.dim() {
            for b in a..self.dim() {
                let m = self.basis[a].mul(&self.basis[b]);
                let w = if a == b { 1.0 } else { 2.0 };
                let u = Unknown::Gram {
                    block,
                    row: a,
                    col: b,
                };
                for (qm, qc) in q.terms() {
                    *out.terms
                        .entry(m.mul(qm))
                        .or_default()
                        .terms
                        .entry(u)
                        .or_insert(0.0) += w * qc;
                }
            }
        }
        out
    }

    /// `zᵀ G z` for a concrete symmetric matrix.
    pub fn polynomial(&self, g: &Mat<f64>) -> Polynomial {
        let mut terms = Vec::new();
        for a in 0..self.dim() {
            for b in 0..self.dim() {
                terms.push((self.basis[a].mul(&self.basis[b]), g[(a, b)]));
            }
        }
        Polynomial::from_terms(&self.space, terms)
    }
}

/// Gram parameterisation of degree-`degree` SOS polynomials over `space`:
/// basis `monomial_basis(n, degree/2)`.
pub fn gram_parameterize(degree: u32, space: &Arc<VarSpace>) -> Result<GramBlock, SosError> {
    if degree % 2 != 0 {
        return Err(SosError::OddDegree(degree));
    }
    Ok(GramBlock {
        label: String::new(),
        space: space.clone(),
        basis: monomial_basis(space.dim(), degree / 2),
    })
}

/// `target` must be SOS; `gram_block` holds its Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SosConstraint {
    pub label: String,
    pub target: AffinePoly,
    pub basis_degree: u32,
    pub gram_block: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SosProgram {
    pub free_count: usize,
    pub free_labels: Vec<String>,
    pub blocks: Vec<GramBlock>,
    pub constraints: Vec<SosConstraint>,
}

/// Handle to an SOS multiplier: its block index and polynomial form.
#[derive(Debug, Clone)]
pub struct Multiplier {
    pub block: usize,
}

impl SosProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fresh polynomial with one free coefficient per monomial of
    /// `monomial_basis(space, degree)`.
    pub fn new_free_polynomial(
        &mut self,
        label: &str,
        space: &Arc<VarSpace>,
        degree: u32,
    ) -> FreePoly {
        let coeffs = monomial_basis(space.dim(), degree)
            .into_iter()
            .map(|m| {
                let i = self.free_count;
                self.free_count += 1;
                self.free_labels.push(format!("{label}[{i}]"));
                (i, m)
            })
            .collect();
        FreePoly {
            space: space.clone(),
            coeffs,
        }
    }

    pub fn new_free_scalar(&mut self, label: &str) -> usize {
        let i = self.free_count;
        self.free_count += 1;
        self.free_labels.push(label.to_string());
        i
    }

    /// Fresh SOS polynomial of even `degree` (a new PSD Gram block).
    pub fn new_sos(
        &mut self,
        label: &str,
        space: &Arc<VarSpace>,
        degree: u32,
    ) -> Result<usize, SosError> {
        let mut g = gram_parameterize(degree, space)?;
        g.label = label.to_string();
        self.blocks.push(g);
        Ok(self.blocks.len() - 1)
    }

    /// Requires `target` to be SOS over `space` with basis degree
    /// `⌈deg(target)/2⌉` (or `basis_degree` if given).
    pub fn add_constraint(
        &mut self,
        label: &str,
        target: AffinePoly,
        basis_degree: Option<u32>,
    ) -> Result<usize, SosError> {
        let deg = target.degree();
        let bd = basis_degree.unwrap_or(deg.div_ceil(2));
        if deg > 2 * bd {
            return Err(SosError::DegreeMismatch {
                label: label.to_string(),
                target: deg,
                basis: bd,
                required: deg.div_ceil(2),
            });
        }
        let block = GramBlock {
            label: format!("{label}:slack"),
            space: target.space.clone(),
            basis: monomial_basis(target.space.dim(), bd),
        };
        self.blocks.push(block);
        self.constraints.push(SosConstraint {
            label: label.to_string(),
            target,
            basis_degree: bd,
            gram_block: self.blocks.len() - 1,
        });
        Ok(self.constraints.len() - 1)
    }

    /// Coefficient-matching equalities `coeff_m(target) − coeff_m(zᵀQz) = 0`.
    /// Rows are emitted constraint by constraint in monomial order, so the
    /// layout is a deterministic function of the program.
    pub fn assemble(&self) -> Result<SdpProblem, SosError> {
        let mut sdp = SdpProblem::new(
            self.blocks.iter().map(GramBlock::dim).collect(),
            self.free_count,
        );
        for c in &self.constraints {
            let gb = &self.blocks[c.gram_block];
            if gb.space != c.target.space {
                return Err(SosError::SpaceMismatch(c.label.clone()));
            }
            let deg = c.target.degree();
            if deg > 2 * c.basis_degree {
                return Err(SosError::DegreeMismatch {
                    label: c.label.clone(),
                    target: deg,
                    basis: c.basis_degree,
                    required: deg.div_ceil(2),
                });
            }
            let mut rows: BTreeMap<Monomial, AffineExpr> = c.target.terms.clone();
            let slack = gb.as_affine(c.gram_block);
            for (m, e) in &slack.terms {
                rows.entry(m.clone()).or_default().add_scaled(e, -1.0);
            }
            // every monomial produced by either side gets a row
            let monos: BTreeSet<&Monomial> = rows.keys().collect();
            for m in monos {
                let e = &rows[m];
                if e.terms.values().all(|v| *v == 0.0) {
                    if e.constant != 0.0 {
                        // infeasible row: 0 = -constant; still emit it so the
                        // solver reports infeasibility
                    } else {
                        continue;
                    }
                }
                let mut con = SdpConstraint {
                    rhs: -e.constant,
                    label: format!("{}:{}", c.label, monomial_label(m, &c.target.space)),
                    ..Default::default()
                };
                for (u, &coef) in &e.terms {
                    if coef == 0.0 {
                        continue;
                    }
                    match *u {
                        Unknown::Free(i) => con.free.push((i, coef)),
                        Unknown::Gram { block, row, col } => {
                            let v = if row == col { coef } else { 0.5 * coef };
                            con.entries.push(SdpEntry::new(block, row, col, v));
                        }
                    }
                }
                sdp.add_constraint(con);
            }
        }
        Ok(sdp)
    }

    pub fn value_of(&self, sol: &SdpSolution, u: Unknown) -> f64 {
        match u {
            Unknown::Free(i) => sol.free[i],
            Unknown::Gram { block, row, col } => sol.blocks[block][(row, col)],
        }
    }

    /// Instantiates an affine polynomial at a solution.
    pub fn recover(&self, sol: &SdpSolution, p: &AffinePoly) -> Polynomial {
        p.instantiate(&|u| self.value_of(sol, u))
    }

    /// The SOS polynomial held by a Gram block.
    pub fn recover_sos(&self, sol: &SdpSolution, block: usize) -> Polynomial {
        self.blocks[block].polynomial(&sol.blocks[block])
    }

    /// Largest coefficient mismatch `target − zᵀQz` over all constraints.
    pub fn identity_residual(&self, sol: &SdpSolution) -> f64 {
        self.constraints
            .iter()
            .map(|c| {
                let t = self.recover(sol, &c.target);
                let s = self.recover_sos(sol, c.gram_block);
                (&t - &s).max_abs_coefficient()
            })
            .fold(0.0, f64::max)
    }
}

fn monomial_label(m: &Monomial, space: &VarSpace) -> String {
    if m.is_one() {
        return "1".into();
    }
    m.pairs()
        .map(|(v, e)| {
            let n = &space.names()[v];
            if e == 1 {
                n.clone()
            } else {
                format!("{n}^{e}")
            }
        })
        .collect::<Vec<_>>()
        .join("*")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{solve, SdpStatus, Tolerances};

    fn is_sos(p: &Polynomial, basis_degree: Option<u32>) -> (SdpStatus, SosProgram, SdpSolution) {
        let mut prog = SosProgram::new();
        prog.add_constraint("p", AffinePoly::from_poly(p), basis_degree)
            .unwrap();
        let sdp = prog.assemble().unwrap();
        let sol = solve(&sdp, &Tolerances::default()).unwrap();
        (sol.status, prog, sol)
    }

    #[test]
    fn gram_blocks_expand_as_expected() {
        let x = VarSpace::new(["x"]);
        let g = gram_parameterize(2, &x).unwrap();
        assert_eq!(g.dim(), 2);
        let ones = Mat::from_fn(2, 2, |_, _| 1.0);
        let p = g.polynomial(&ones);
        let want = Polynomial::from_terms(
            &x,
            [
                (Monomial::one(), 1.0),
                (Monomial::var(0), 2.0),
                (Monomial::from_dense(&[2]), 1.0),
            ],
        );
        assert_eq!(p, want);
        let g0 = gram_parameterize(0, &x).unwrap();
        assert_eq!(g0.dim(), 1);
        assert_eq!(gram_parameterize(3, &x), Err(SosError::OddDegree(3)));

        let xy = VarSpace::new(["x", "y"]);
        let g4 = gram_parameterize(4, &xy).unwrap();
        assert_eq!(g4.dim(), 6);
        let p = g4.polynomial(&Mat::identity(6, 6));
        let want = Polynomial::from_terms(
            &xy,
            [
                (Monomial::one(), 1.0),
                (Monomial::from_dense(&[2, 0]), 1.0),
                (Monomial::from_dense(&[0, 2]), 1.0),
                (Monomial::from_dense(&[4, 0]), 1.0),
                (Monomial::from_dense(&[2, 2]), 1.0),
                (Monomial::from_dense(&[0, 4]), 1.0),
            ],
        );
        assert_eq!(p, want);
    }

    #[test]
    fn perfect_square_is_sos() {
        let x = VarSpace::new(["x"]);
        let p = Polynomial::from_terms(
            &x,
            [
                (Monomial::one(), 1.0),
                (Monomial::var(0), 2.0),
                (Monomial::from_dense(&[2]), 1.0),
            ],
        );
        let (status, prog, sol) = is_sos(&p, None);
        assert_eq!(status, SdpStatus::Feasible);
        let q = prog.recover_sos(&sol, 0);
        assert!((&q - &p).max_abs_coefficient() < 1e-6);
    }

    #[test]
    fn x_squared_minus_one_is_not_sos() {
        let x = VarSpace::new(["x"]);
        let p = Polynomial::from_terms(
            &x,
            [(Monomial::one(), -1.0), (Monomial::from_dense(&[2]), 1.0)],
        );
        assert_eq!(is_sos(&p, None).0, SdpStatus::Infeasible);
    }

    #[test]
    fn motzkin_is_not_sos() {
        let xy = VarSpace::new(["x", "y"]);
        let m = Polynomial::from_terms(
            &xy,
            [
                (Monomial::from_dense(&[4, 2]), 1.0),
                (Monomial::from_dense(&[2, 4]), 1.0),
                (Monomial::from_dense(&[2, 2]), -3.0),
                (Monomial::one(), 1.0),
            ],
        );
        let (status, prog, sol) = is_sos(&m, Some(3));
        assert_eq!(status, SdpStatus::Infeasible, "{}", sol.message);
        let sdp = prog.assemble().unwrap();
        let y = sol.infeasibility_ray.unwrap();
        assert!(sdp.rhs_dot(&y) < 0.0);
        for z in sdp.adjoint(&y) {
            assert!(crate::sdp::min_eigenvalue(z.as_ref()) >= -1e-7);
        }
    }

    #[test]
    fn degree_bookkeeping_is_checked() {
        let x = VarSpace::new(["x"]);
        let p = Polynomial::var(&x, 0).pow(4);
        let mut prog = SosProgram::new();
        let err = prog
            .add_constraint("rho", AffinePoly::from_poly(&p), Some(1))
            .unwrap_err();
        assert_eq!(
            err,
            SosError::DegreeMismatch {
                label: "rho".into(),
                target: 4,
                basis: 1,
                required: 2
            }
        );
    }

    #[test]
    fn free_coefficients_are_recovered() {
        // x² + b1 x + b0 SOS with b0 ≥ 1
        let x = VarSpace::new(["x"]);
        let mut prog = SosProgram::new();
        let b = prog.new_free_polynomial("b", &x, 1);
        let mut target = AffinePoly::from_poly(&Polynomial::var(&x, 0).pow(2));
        target.add(&b.affine(), 1.0);
        prog.add_constraint("rho", target, None).unwrap();
        // pin b's constant to 1
        let mut pin = AffinePoly::zero(&x);
        pin.add_unknown_times(
            Unknown::Free(b.coeffs[0].0),
            &Polynomial::constant(&x, 1.0),
            1.0,
        );
        pin.add_poly(&Polynomial::constant(&x, -1.0), 1.0);
        prog.add_constraint("pin", pin, None).unwrap();
        let sdp = prog.assemble().unwrap();
        let sol = solve(&sdp, &Tolerances::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Feasible);
        let bp = b.recover(&sol.free);
        let (b0, b1) = (
            bp.coefficient(&Monomial::one()),
            bp.coefficient(&Monomial::var(0)),
        );
        assert!(b0 >= 1.0 - 1e-6);
        assert!(b1 * b1 <= 4.0 * b0 + 1e-6);
    }

    #[test]
    fn assembly_is_deterministic() {
        let xy = VarSpace::new(["x", "y"]);
        let build = || {
            let mut prog = SosProgram::new();
            let b = prog.new_free_polynomial("b", &xy, 2);
            let t = prog.new_sos("t", &xy, 2).unwrap();
            let mut target = b.affine();
            target.add(
                &prog.blocks[t].times(t, &crate::system::ball(&xy, 0..2, 1.0)),
                -1.0,
            );
            prog.add_constraint("rho", target, None).unwrap();
            prog.assemble().unwrap()
        };
        assert_eq!(build(), build());
        assert_eq!(build().dump(), build().dump());
    }
}
