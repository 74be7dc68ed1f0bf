//! Sparse multivariate polynomials over named variables.
//!
//! Every quantity handled by the crate (vector fields, jump maps, set
//! descriptions, barrier candidates and S-procedure multipliers) is a
//! [`Polynomial`] over some [`VarSpace`]. Terms are kept in a `BTreeMap`
//! keyed by [`Monomial`], whose ordering is graded lexicographic, so
//! iteration order is reproducible and Gram-matrix indexing is stable.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("point has dimension {got}, variable space has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("no substitution given for variable `{0}`")]
    MissingSubstitution(String),
    #[error("polynomials live in different variable spaces")]
    SpaceMismatch,
}

/// An ordered list of variable names. Indices are contiguous from 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VarSpace {
    names: Vec<String>,
}

impl VarSpace {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Arc<Self> {
        Arc::new(Self {
            names: names.into_iter().map(Into::into).collect(),
        })
    }

    /// Space with variables `prefix0, prefix1, ...`.
    pub fn indexed(prefix: &str, n: usize) -> Arc<Self> {
        Self::new((0..n).map(|i| format!("{prefix}{i}")))
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn variable(&self, index: usize) -> Option<Variable> {
        self.names.get(index).map(|name| Variable {
            name: name.clone(),
            index,
        })
    }

    pub fn lookup(&self, name: &str) -> Option<Variable> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|index| Variable {
                name: name.to_string(),
                index,
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Variable {
    pub name: String,
    pub index: usize,
}

/// Product of variable powers, stored sparsely as `(variable, exponent)`
/// pairs sorted by variable with no zero exponents.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial {
    exps: Vec<(u32, u32)>,
}

impl Monomial {
    pub fn one() -> Self {
        Self { exps: Vec::new() }
    }

    pub fn var(index: usize) -> Self {
        Self {
            exps: vec![(index as u32, 1)],
        }
    }

    pub fn from_dense(exponents: &[u32]) -> Self {
        Self {
            exps: exponents
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| (i as u32, e))
                .collect(),
        }
    }

    /// Builds from arbitrary `(variable, exponent)` pairs, merging repeats.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, u32)>) -> Self {
        let mut map = BTreeMap::new();
        for (v, e) in pairs {
            *map.entry(v as u32).or_insert(0) += e;
        }
        Self {
            exps: map.into_iter().filter(|&(_, e)| e > 0).collect(),
        }
    }

    pub fn to_dense(&self, n: usize) -> Vec<u32> {
        let mut out = vec![0; n];
        for &(v, e) in &self.exps {
            out[v as usize] = e;
        }
        out
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.exps.iter().map(|&(v, e)| (v as usize, e))
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().map(|&(_, e)| e).sum()
    }

    pub fn exponent(&self, var: usize) -> u32 {
        self.exps
            .iter()
            .find(|&&(v, _)| v as usize == var)
            .map_or(0, |&(_, e)| e)
    }

    pub fn is_one(&self) -> bool {
        self.exps.is_empty()
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        self.exps.last().map(|&(v, _)| v as usize)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.exps.len() + other.exps.len());
        let (mut i, mut j) = (0, 0);
        while i < self.exps.len() && j < other.exps.len() {
            let (a, b) = (self.exps[i], other.exps[j]);
            match a.0.cmp(&b.0) {
                Ordering::Less => {
                    out.push(a);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((a.0, a.1 + b.1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.exps[i..]);
        out.extend_from_slice(&other.exps[j..]);
        Monomial { exps: out }
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.exps
            .iter()
            .map(|&(v, e)| point[v as usize].powi(e as i32))
            .product()
    }

    /// Reindexes variables through `map` (old index -> new index).
    pub fn reindex(&self, map: &[usize]) -> Monomial {
        Monomial::from_pairs(self.exps.iter().map(|&(v, e)| (map[v as usize], e)))
    }
}

impl Ord for Monomial {
    /// Graded order: lower total degree first; within a degree, a larger
    /// power of an earlier variable comes first (so `x0` precedes `x1`).
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        let (mut i, mut j) = (0, 0);
        loop {
            match (self.exps.get(i), other.exps.get(j)) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => return Ordering::Less,
                (None, Some(_)) => return Ordering::Greater,
                (Some(&(va, ea)), Some(&(vb, eb))) => {
                    if va != vb {
                        // the one mentioning the earlier variable has the larger power there
                        return if va < vb {
                            Ordering::Less
                        } else {
                            Ordering::Greater
                        };
                    }
                    if ea != eb {
                        return eb.cmp(&ea);
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All monomials in `n` variables of total degree at most `max_degree`,
/// in graded-lexicographic order.
pub fn monomial_basis(n: usize, max_degree: u32) -> Vec<Monomial> {
    let mut out = vec![Monomial::one()];
    let mut frontier: Vec<Vec<u32>> = vec![vec![0; n]];
    for _ in 0..max_degree {
        let mut next: Vec<Vec<u32>> = Vec::new();
        for e in &frontier {
            // extend only at or after the last nonzero variable to avoid duplicates
            let start = e.iter().rposition(|&x| x > 0).unwrap_or(0);
            for v in start..n {
                let mut f = e.clone();
                f[v] += 1;
                next.push(f);
            }
        }
        let mut mons: Vec<Monomial> = next.iter().map(|e| Monomial::from_dense(e)).collect();
        mons.sort();
        out.extend(mons);
        frontier = next;
    }
    out
}

#[derive(Clone, PartialEq)]
pub struct Polynomial {
    space: Arc<VarSpace>,
    terms: BTreeMap<Monomial, f64>,
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Polynomial({self})")
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, &c) in &self.terms {
            if first {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else if c < 0.0 {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let a = c.abs();
            let body: Vec<String> = m
                .pairs()
                .map(|(v, e)| {
                    let name = &self.space.names[v];
                    if e == 1 {
                        name.clone()
                    } else {
                        format!("{name}^{e}")
                    }
                })
                .collect();
            if body.is_empty() {
                write!(f, "{a}")?;
            } else if a == 1.0 {
                write!(f, "{}", body.join("*"))?;
            } else {
                write!(f, "{a}*{}", body.join("*"))?;
            }
            first = false;
        }
        Ok(())
    }
}

impl Polynomial {
    pub fn zero(space: &Arc<VarSpace>) -> Self {
        Self {
            space: space.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(space: &Arc<VarSpace>, c: f64) -> Self {
        Self::from_terms(space, [(Monomial::one(), c)])
    }

    pub fn var(space: &Arc<VarSpace>, index: usize) -> Self {
        assert!(index < space.dim(), "variable index out of range");
        Self::from_terms(space, [(Monomial::var(index), 1.0)])
    }

    /// Collects like terms and drops exact zeros.
    pub fn from_terms(
        space: &Arc<VarSpace>,
        terms: impl IntoIterator<Item = (Monomial, f64)>,
    ) -> Self {
        let mut map = BTreeMap::new();
        for (m, c) in terms {
            if let Some(v) = m.max_var() {
                assert!(
                    v < space.dim(),
                    "monomial references variable {v} outside space"
                );
            }
            *map.entry(m).or_insert(0.0) += c;
        }
        map.retain(|_, c| *c != 0.0);
        Self {
            space: space.clone(),
            terms: map,
        }
    }

    /// `Σ x_i²` over the given variable indices.
    pub fn squared_norm(space: &Arc<VarSpace>, vars: impl IntoIterator<Item = usize>) -> Self {
        Self::from_terms(
            space,
            vars.into_iter()
                .map(|v| (Monomial::from_pairs([(v, 2)]), 1.0)),
        )
    }

    pub fn space(&self) -> &Arc<VarSpace> {
        &self.space
    }

    pub fn nvars(&self) -> usize {
        self.space.dim()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Highest power of `var` in any term.
    pub fn degree_in(&self, var: usize) -> u32 {
        self.terms
            .keys()
            .map(|m| m.exponent(var))
            .max()
            .unwrap_or(0)
    }

    /// Whether any term involves one of the variables in `vars`.
    pub fn depends_on(&self, vars: impl IntoIterator<Item = usize>) -> bool {
        let vars: Vec<usize> = vars.into_iter().collect();
        self.terms
            .keys()
            .any(|m| m.pairs().any(|(v, _)| vars.contains(&v)))
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// Drops terms with `|c| <= threshold`.
    pub fn prune(mut self, threshold: f64) -> Self {
        self.terms.retain(|_, c| c.abs() > threshold);
        self
    }

    fn check_space(&self, other: &Polynomial) -> Result<(), PolyError> {
        if Arc::ptr_eq(&self.space, &other.space) || self.space == other.space {
            Ok(())
        } else {
            Err(PolyError::SpaceMismatch)
        }
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.space.dim() {
            return Err(PolyError::DimensionMismatch {
                expected: self.space.dim(),
                got: point.len(),
            });
        }
        Ok(self.eval(point))
    }

    /// Unchecked evaluation; `point` must cover every referenced variable.
    pub fn eval(&self, point: &[f64]) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.eval(point)).sum()
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        if s == 0.0 {
            return Polynomial::zero(&self.space);
        }
        Polynomial {
            space: self.space.clone(),
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect(),
        }
    }

    pub fn try_add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_space(other)?;
        Ok(self.add_scaled(other, 1.0))
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &Polynomial, s: f64) -> Polynomial {
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            *terms.entry(m.clone()).or_insert(0.0) += s * c;
        }
        terms.retain(|_, c| *c != 0.0);
        Polynomial {
            space: self.space.clone(),
            terms,
        }
    }

    pub fn try_mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_space(other)?;
        let mut terms: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                *terms.entry(ma.mul(mb)).or_insert(0.0) += ca * cb;
            }
        }
        terms.retain(|_, c| *c != 0.0);
        Ok(Polynomial {
            space: self.space.clone(),
            terms,
        })
    }

    pub fn pow(&self, e: u32) -> Polynomial {
        let mut out = Polynomial::constant(&self.space, 1.0);
        for _ in 0..e {
            out = &out * self;
        }
        out
    }

    /// Partial derivative with respect to `var`.
    pub fn differentiate(&self, var: &Variable) -> Result<Polynomial, PolyError> {
        match self.space.names.get(var.index) {
            Some(name) if *name == var.name => Ok(self.derivative(var.index)),
            _ => Err(PolyError::UnknownVariable(var.name.clone())),
        }
    }

    /// Partial derivative with respect to the variable at `index`.
    pub fn derivative(&self, index: usize) -> Polynomial {
        let mut terms = BTreeMap::new();
        for (m, &c) in &self.terms {
            let e = m.exponent(index);
            if e == 0 {
                continue;
            }
            let reduced =
                Monomial::from_pairs(
                    m.pairs()
                        .map(|(v, ev)| if v == index { (v, ev - 1) } else { (v, ev) }),
                );
            *terms.entry(reduced).or_insert(0.0) += c * e as f64;
        }
        Polynomial::from_terms(&self.space, terms)
    }

    pub fn gradient(&self) -> Vec<Polynomial> {
        (0..self.nvars()).map(|i| self.derivative(i)).collect()
    }

    /// Lie derivative `∇p · field`, where `field[i]` is the i-th component.
    pub fn lie_derivative(&self, field: &[Polynomial]) -> Polynomial {
        let mut out = Polynomial::zero(&self.space);
        for (i, fi) in field.iter().enumerate() {
            let d = self.derivative(i);
            if !d.is_zero() {
                out = &out + &(&d * fi);
            }
        }
        out
    }

    /// Substitutes each variable by a polynomial. Every variable that occurs
    /// in `self` needs an entry; all substitutes must share a target space.
    pub fn compose(&self, subs: &BTreeMap<usize, Polynomial>) -> Result<Polynomial, PolyError> {
        let target = match subs.values().next() {
            Some(p) => p.space.clone(),
            None => {
                return match self.terms.keys().find_map(Monomial::max_var) {
                    Some(v) => Err(PolyError::MissingSubstitution(self.space.names[v].clone())),
                    None => Ok(self.clone()),
                };
            }
        };
        for p in subs.values() {
            if p.space != target {
                return Err(PolyError::SpaceMismatch);
            }
        }
        let mut powers: BTreeMap<(usize, u32), Polynomial> = BTreeMap::new();
        let mut out = Polynomial::zero(&target);
        for (m, &c) in &self.terms {
            let mut term = Polynomial::constant(&target, c);
            for (v, e) in m.pairs() {
                let base = subs
                    .get(&v)
                    .ok_or_else(|| PolyError::MissingSubstitution(self.space.names[v].clone()))?;
                let p = powers.entry((v, e)).or_insert_with(|| base.pow(e));
                term = &term * p;
            }
            out = &out + &term;
        }
        Ok(out)
    }

    /// Composition with a full substitution vector (one entry per variable).
    pub fn compose_all(&self, subs: &[Polynomial]) -> Result<Polynomial, PolyError> {
        if subs.len() != self.nvars() {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars(),
                got: subs.len(),
            });
        }
        let map: BTreeMap<usize, Polynomial> = subs.iter().cloned().enumerate().collect();
        if map.is_empty() {
            return Ok(self.clone());
        }
        self.compose(&map)
    }

    /// Moves the polynomial into `target`, sending variable `i` to `map[i]`.
    pub fn embed(&self, target: &Arc<VarSpace>, map: &[usize]) -> Polynomial {
        assert_eq!(
            map.len(),
            self.nvars(),
            "embedding map must cover the space"
        );
        Polynomial::from_terms(target, self.terms.iter().map(|(m, &c)| (m.reindex(map), c)))
    }

    /// `p(s ⊙ x)`: rescales each variable by `scales[i]`.
    pub fn scale_vars(&self, scales: &[f64]) -> Polynomial {
        Polynomial::from_terms(
            &self.space,
            self.terms.iter().map(|(m, &c)| {
                let f: f64 = m.pairs().map(|(v, e)| scales[v].powi(e as i32)).product();
                (m.clone(), c * f)
            }),
        )
    }
}

impl std::ops::Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.try_add(rhs).expect("polynomial spaces differ")
    }
}

impl std::ops::Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.check_space(rhs).expect("polynomial spaces differ");
        self.add_scaled(rhs, -1.0)
    }
}

impl std::ops::Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.try_mul(rhs).expect("polynomial spaces differ")
    }
}

impl std::ops::Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sir() -> Arc<VarSpace> {
        VarSpace::new(["S", "I", "R"])
    }

    #[test]
    fn evaluates_set_polynomials() {
        let sp = sir();
        let q2 = &Polynomial::constant(&sp, 5.0) - &Polynomial::var(&sp, 1);
        assert_eq!(q2.evaluate(&[0.0, 5.0, 0.0]).unwrap(), 0.0);
        assert_eq!(
            Polynomial::zero(&sp).evaluate(&[3.0, 1.0, 2.0]).unwrap(),
            0.0
        );
        let q = &Polynomial::constant(&sp, 100.0) - &Polynomial::squared_norm(&sp, 0..3);
        assert_eq!(q.evaluate(&[6.0, 8.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn evaluate_rejects_wrong_dimension() {
        let p = Polynomial::var(&sir(), 0);
        assert_eq!(
            p.evaluate(&[1.0]),
            Err(PolyError::DimensionMismatch {
                expected: 3,
                got: 1
            })
        );
    }

    #[test]
    fn differentiates_barrier_term() {
        let sp = VarSpace::new(["S1", "I1", "R1"]);
        let p = Polynomial::from_terms(&sp, [(Monomial::from_dense(&[0, 2, 0]), 190.42)]);
        let d = p.differentiate(&sp.variable(1).unwrap()).unwrap();
        assert_eq!(d, Polynomial::from_terms(&sp, [(Monomial::var(1), 380.84)]));
        let c = Polynomial::constant(&sp, 4.0);
        assert!(c.differentiate(&sp.variable(2).unwrap()).unwrap().is_zero());
    }

    #[test]
    fn derivative_matches_central_difference() {
        let sp = VarSpace::new(["S", "I"]);
        let p = Polynomial::from_terms(&sp, [(Monomial::from_dense(&[1, 1]), 1.0)]);
        let d = p.differentiate(&sp.variable(0).unwrap()).unwrap();
        assert_eq!(d, Polynomial::var(&sp, 1));
        let h = 1e-5;
        let fd = (p.eval(&[2.0 + h, 3.0]) - p.eval(&[2.0 - h, 3.0])) / (2.0 * h);
        assert!((fd - d.eval(&[2.0, 3.0])).abs() < 1e-8);
    }

    #[test]
    fn unknown_variable_is_rejected() {
        let p = Polynomial::var(&sir(), 0);
        let stranger = Variable {
            name: "omega".into(),
            index: 1,
        };
        assert!(matches!(
            p.differentiate(&stranger),
            Err(PolyError::UnknownVariable(_))
        ));
    }

    #[test]
    fn vaccination_jump_composition() {
        let sp = sir();
        let s = Polynomial::var(&sp, 0);
        let r = Polynomial::var(&sp, 2);
        let p_vac = 0.8;
        let mut subs = BTreeMap::new();
        subs.insert(0, s.scale(1.0 - p_vac));
        subs.insert(1, Polynomial::var(&sp, 1));
        subs.insert(2, &r + &s.scale(p_vac));
        let img = s.compose(&subs).unwrap();
        assert!((img.coefficient(&Monomial::var(0)) - 0.2).abs() < 1e-15);
        assert_eq!(img.len(), 1);
        // total susceptible + recovered is preserved
        let total = (&s + &r).compose(&subs).unwrap().prune(1e-15);
        assert_eq!(total, &s + &r);
    }

    #[test]
    fn identity_composition_is_noop() {
        let sp = sir();
        let p = Polynomial::from_terms(
            &sp,
            [
                (Monomial::from_dense(&[1, 1, 0]), -38.58),
                (Monomial::from_dense(&[0, 0, 2]), 4.0),
                (Monomial::one(), -3332.0),
            ],
        );
        let id: Vec<_> = (0..3).map(|i| Polynomial::var(&sp, i)).collect();
        assert_eq!(p.compose_all(&id).unwrap(), p);
    }

    #[test]
    fn missing_substitution_is_rejected() {
        let sp = sir();
        let p = &Polynomial::var(&sp, 0) * &Polynomial::var(&sp, 2);
        let mut subs = BTreeMap::new();
        subs.insert(0, Polynomial::var(&sp, 0));
        assert_eq!(
            p.compose(&subs),
            Err(PolyError::MissingSubstitution("R".into()))
        );
    }

    #[test]
    fn basis_sizes_and_order() {
        let b = monomial_basis(3, 1);
        assert_eq!(
            b,
            vec![
                Monomial::one(),
                Monomial::var(0),
                Monomial::var(1),
                Monomial::var(2)
            ]
        );
        assert_eq!(monomial_basis(3, 2).len(), 10);
        assert_eq!(monomial_basis(1, 0), vec![Monomial::one()]);
        assert_eq!(monomial_basis(9, 4).len(), 715);
        let b = monomial_basis(4, 3);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn degree_is_additive() {
        let sp = sir();
        let p = &Polynomial::var(&sp, 0) * &Polynomial::var(&sp, 1);
        let q = &Polynomial::squared_norm(&sp, 0..3) + &Polynomial::constant(&sp, 1.0);
        assert_eq!((&p * &q).degree(), p.degree() + q.degree());
    }
}
