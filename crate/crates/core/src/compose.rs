//! Gain structures, Perron–Frobenius weights and composition of local
//! pseudo-barriers into a global barrier.
//!
//! With `A = Λ + Γ − ηI` (`η = min λ_i`, `γ_ij = c_i α_j`), the left Perron
//! vector `k` gives the sum form `Σ k_i B_i` with decay `ν + η`, and the right
//! Perron vector `v` gives the max form `max_i B_i / v_i` with decay `μ + η`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polynomial::{Polynomial, VarSpace};
use std::sync::Arc;

/// Tie tolerance for the argmax of the max form.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComposeError {
    #[error("no certificates to compose")]
    Empty,
    #[error("certificate {index} uses L = {got}, expected {expected}; L must be shared")]
    InconsistentL {
        index: usize,
        expected: f64,
        got: f64,
    },
    #[error("certificate {index}: c must be 0 when there are no neighbours")]
    CouplingWithoutNeighbours { index: usize },
    #[error("certificate {index} references neighbour {neighbour} out of range")]
    BadNeighbour { index: usize, neighbour: usize },
    #[error("gain matrix is reducible; strongly connected components: {components:?}")]
    Reducible { components: Vec<Vec<usize>> },
    #[error("gain matrix has spectral radius {0:e}; positive Perron values are required")]
    ZeroSpectralRadius(f64),
    #[error("power iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("weighted epsilon sums violate the sum-form assumption: Σ k ε1 = {eps1_sum:e} (needs ≤ 0), Σ k ε2 = {eps2_sum:e} (needs ≥ 0)")]
    EpsilonSums { eps1_sum: f64, eps2_sum: f64 },
    #[error("max form needs ε1 = ε2 = 0; certificate {index} has ε1 = {eps1}, ε2 = {eps2}")]
    NonzeroEpsilon { index: usize, eps1: f64, eps2: f64 },
    #[error("matrix must be square and entrywise nonnegative")]
    BadMatrix,
}

/// Local pseudo-barrier `B_i` with its constants.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalCertificate {
    pub barrier: Polynomial,
    pub lambda: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub alpha: f64,
    pub c: f64,
    pub l: f64,
    pub neighbours: Vec<usize>,
    pub mode_count: usize,
    /// Whether the growth bound `‖x_i‖² ≤ α_i B_i + L` was imposed (some
    /// neighbour reads this subsystem with nonzero `c`).
    pub growth_required: bool,
}

/// Dense square matrix in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(r);
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.n.max(1))
            .map(|r| r.to_vec())
            .collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainStructure {
    pub lambda: Vec<f64>,
    pub gamma: SquareMatrix,
    pub eta: f64,
    pub a: SquareMatrix,
    pub k: Vec<f64>,
    pub nu: f64,
    pub v: Vec<f64>,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompositionForm {
    Sum,
    Max,
    /// One subsystem: the local barrier is used as is.
    Single,
}

/// Composite barrier over the stacked state.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalBarrier {
    pub form: CompositionForm,
    pub weights: Vec<f64>,
    /// Component barriers, each embedded into the global space.
    pub components: Vec<Polynomial>,
    pub lambda_eff: f64,
    pub theta: f64,
    pub space: Arc<VarSpace>,
}

/// Value of the max form with the achieving index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxEvaluation {
    pub value: f64,
    pub argmax: usize,
    pub unique: bool,
}

impl GlobalBarrier {
    /// Plain polynomial barrier (global synthesis or a single subsystem).
    pub fn single(barrier: Polynomial, lambda: f64) -> Self {
        Self {
            form: CompositionForm::Single,
            weights: vec![1.0],
            space: barrier.space().clone(),
            components: vec![barrier],
            lambda_eff: lambda,
            theta: 1.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self.form {
            CompositionForm::Sum | CompositionForm::Single => self
                .components
                .iter()
                .zip(&self.weights)
                .map(|(b, w)| w * b.eval(x))
                .sum(),
            CompositionForm::Max => self.eval_max(x).value,
        }
    }

    pub fn eval_max(&self, x: &[f64]) -> MaxEvaluation {
        let vals: Vec<f64> = self
            .components
            .iter()
            .zip(&self.weights)
            .map(|(b, v)| b.eval(x) / v)
            .collect();
        let (mut arg, mut best) = (0, f64::NEG_INFINITY);
        for (i, &val) in vals.iter().enumerate() {
            if val > best {
                best = val;
                arg = i;
            }
        }
        let ties = vals.iter().filter(|&&v| best - v <= TIE_TOLERANCE).count();
        MaxEvaluation {
            value: best,
            argmax: arg,
            unique: ties == 1,
        }
    }

    /// `∇B · f` at `x`. For the max form this is the derivative of the
    /// active component (well defined where the argmax is unique).
    pub fn lie(&self, field: &[f64], x: &[f64]) -> f64 {
        let grad_dot = |b: &Polynomial| -> f64 {
            b.gradient()
                .iter()
                .zip(field)
                .map(|(g, f)| g.eval(x) * f)
                .sum()
        };
        match self.form {
            CompositionForm::Sum | CompositionForm::Single => self
                .components
                .iter()
                .zip(&self.weights)
                .map(|(b, w)| w * grad_dot(b))
                .sum(),
            CompositionForm::Max => {
                let e = self.eval_max(x);
                grad_dot(&self.components[e.argmax]) / self.weights[e.argmax]
            }
        }
    }

    /// Symbolic `∇B` of each weighted component, cached for repeated use.
    pub fn gradients(&self) -> Vec<Vec<Polynomial>> {
        self.components.iter().map(Polynomial::gradient).collect()
    }

    /// [`lie`](Self::lie) with precomputed gradients.
    pub fn lie_with(&self, grads: &[Vec<Polynomial>], field: &[f64], x: &[f64]) -> f64 {
        let dot =
            |g: &[Polynomial]| -> f64 { g.iter().zip(field).map(|(p, f)| p.eval(x) * f).sum() };
        match self.form {
            CompositionForm::Sum | CompositionForm::Single => grads
                .iter()
                .zip(&self.weights)
                .map(|(g, w)| w * dot(g))
                .sum(),
            CompositionForm::Max => {
                let e = self.eval_max(x);
                dot(&grads[e.argmax]) / self.weights[e.argmax]
            }
        }
    }
}

fn check_square_nonneg(a: &SquareMatrix) -> Result<(), ComposeError> {
    if a.data.len() != a.n * a.n || a.data.iter().any(|v| !(*v >= 0.0)) {
        return Err(ComposeError::BadMatrix);
    }
    Ok(())
}

/// Strongly connected components of the nonzero pattern (Tarjan).
pub fn strongly_connected_components(a: &SquareMatrix) -> Vec<Vec<usize>> {
    let n = a.n;
    struct State {
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }
    fn visit(v: usize, a: &SquareMatrix, st: &mut State) {
        st.index[v] = Some(st.next);
        st.low[v] = st.next;
        st.next += 1;
        st.stack.push(v);
        st.on_stack[v] = true;
        for w in 0..a.n {
            if a.get(v, w) == 0.0 {
                continue;
            }
            match st.index[w] {
                None => {
                    visit(w, a, st);
                    st.low[v] = st.low[v].min(st.low[w]);
                }
                Some(iw) if st.on_stack[w] => st.low[v] = st.low[v].min(iw),
                _ => {}
            }
        }
        if Some(st.low[v]) == st.index[v] {
            let mut comp = Vec::new();
            while let Some(w) = st.stack.pop() {
                st.on_stack[w] = false;
                comp.push(w);
                if w == v {
                    break;
                }
            }
            comp.sort_unstable();
            st.out.push(comp);
        }
    }
    let mut st = State {
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if st.index[v].is_none() {
            visit(v, a, &mut st);
        }
    }
    st.out.sort();
    st.out
}

/// True iff the digraph of nonzero entries is strongly connected.
pub fn check_irreducible(a: &SquareMatrix) -> bool {
    a.n > 0 && strongly_connected_components(a).len() == 1
}

/// Perron vector of `B` via power iteration on `B/‖B‖max + I`.
fn power_iteration(a: &SquareMatrix, max_iter: usize) -> Result<Vec<f64>, ComposeError> {
    let n = a.n;
    let scale = a.max_abs();
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    for _ in 0..max_iter {
        let ax = a.mul_vec(&x);
        let mut y: Vec<f64> = ax.iter().zip(&x).map(|(v, xi)| v / scale + xi).collect();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
        let diff = y
            .iter()
            .zip(&x)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        x = y;
        if diff <= 1e-12 {
            return Ok(x);
        }
    }
    Err(ComposeError::NoConvergence(max_iter))
}

/// `(k, ν, v, μ)`: left and right Perron vectors of an irreducible
/// nonnegative matrix with `‖k‖₁ = 1`, `‖v‖₂ = 1`.
pub fn perron_eigenvectors(
    a: &SquareMatrix,
) -> Result<(Vec<f64>, f64, Vec<f64>, f64), ComposeError> {
    check_square_nonneg(a)?;
    if !check_irreducible(a) {
        return Err(ComposeError::Reducible {
            components: strongly_connected_components(a),
        });
    }
    let scale = a.max_abs();
    if scale == 0.0 {
        return Err(ComposeError::ZeroSpectralRadius(0.0));
    }
    const MAX_ITER: usize = 100_000;
    let v = power_iteration(a, MAX_ITER)?;
    let mut k = power_iteration(&a.transpose(), MAX_ITER)?;
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|x| *x /= s);
    let av = a.mul_vec(&v);
    let mu = av.iter().zip(&v).map(|(p, q)| p * q).sum::<f64>();
    let at = a.transpose();
    let atk = at.mul_vec(&k);
    let nu =
        atk.iter().zip(&k).map(|(p, q)| p * q).sum::<f64>() / k.iter().map(|x| x * x).sum::<f64>();
    if !(mu > 0.0 && nu > 0.0) {
        return Err(ComposeError::ZeroSpectralRadius(mu.max(nu)));
    }
    Ok((k, nu, v, mu))
}

/// `Λ`, `Γ`, `η`, `A` and the Perron data for a set of local certificates.
pub fn build_gain(certs: &[LocalCertificate]) -> Result<GainStructure, ComposeError> {
    let m = certs.len();
    if m == 0 {
        return Err(ComposeError::Empty);
    }
    let l = certs[0].l;
    for (i, c) in certs.iter().enumerate() {
        if c.l != l {
            return Err(ComposeError::InconsistentL {
                index: i,
                expected: l,
                got: c.l,
            });
        }
        if c.neighbours.is_empty() && c.c != 0.0 {
            return Err(ComposeError::CouplingWithoutNeighbours { index: i });
        }
        if let Some(&j) = c.neighbours.iter().find(|&&j| j >= m) {
            return Err(ComposeError::BadNeighbour {
                index: i,
                neighbour: j,
            });
        }
    }
    let lambda: Vec<f64> = certs.iter().map(|c| c.lambda).collect();
    let eta = lambda.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut gamma = SquareMatrix::zeros(m);
    for (i, c) in certs.iter().enumerate() {
        for &j in &c.neighbours {
            gamma.set(i, j, c.c * certs[j].alpha);
        }
    }
    let mut a = gamma.clone();
    for i in 0..m {
        a.set(i, i, a.get(i, i) + lambda[i] - eta);
    }
    if m == 1 {
        return Ok(GainStructure {
            lambda,
            gamma,
            eta,
            a,
            k: vec![1.0],
            nu: 0.0,
            v: vec![1.0],
            mu: 0.0,
        });
    }
    let (k, nu, v, mu) = perron_eigenvectors(&a)?;
    Ok(GainStructure {
        lambda,
        gamma,
        eta,
        a,
        k,
        nu,
        v,
        mu,
    })
}

/// Places each local barrier in the stacked global space.
fn embed_components(certs: &[LocalCertificate], space: &Arc<VarSpace>) -> Vec<Polynomial> {
    let mut off = 0;
    certs
        .iter()
        .map(|c| {
            let n = c.barrier.nvars();
            let map: Vec<usize> = (off..off + n).collect();
            off += n;
            c.barrier.embed(space, &map)
        })
        .collect()
}

/// Sum form `Σ k_i B_i` with decay `ν + η`. The weighted epsilon sums are
/// checked, not assumed.
pub fn compose_sum(
    certs: &[LocalCertificate],
    gain: &GainStructure,
    space: &Arc<VarSpace>,
) -> Result<GlobalBarrier, ComposeError> {
    if certs.len() == 1 {
        return Ok(single(certs, space));
    }
    let eps1_sum: f64 = certs.iter().zip(&gain.k).map(|(c, k)| k * c.eps1).sum();
    let eps2_sum: f64 = certs.iter().zip(&gain.k).map(|(c, k)| k * c.eps2).sum();
    if eps1_sum > 0.0 || eps2_sum < 0.0 {
        return Err(ComposeError::EpsilonSums { eps1_sum, eps2_sum });
    }
    Ok(GlobalBarrier {
        form: CompositionForm::Sum,
        weights: gain.k.clone(),
        components: embed_components(certs, space),
        lambda_eff: gain.nu + gain.eta,
        theta: 1.0,
        space: space.clone(),
    })
}

/// Max form `max_i B_i / v_i` with decay `μ + η`; needs all ε zero.
pub fn compose_max(
    certs: &[LocalCertificate],
    gain: &GainStructure,
    space: &Arc<VarSpace>,
) -> Result<GlobalBarrier, ComposeError> {
    for (i, c) in certs.iter().enumerate() {
        if c.eps1 != 0.0 || c.eps2 != 0.0 {
            return Err(ComposeError::NonzeroEpsilon {
                index: i,
                eps1: c.eps1,
                eps2: c.eps2,
            });
        }
    }
    if certs.len() == 1 {
        return Ok(single(certs, space));
    }
    Ok(GlobalBarrier {
        form: CompositionForm::Max,
        weights: gain.v.clone(),
        components: embed_components(certs, space),
        lambda_eff: gain.mu + gain.eta,
        theta: 1.0,
        space: space.clone(),
    })
}

fn single(certs: &[LocalCertificate], space: &Arc<VarSpace>) -> GlobalBarrier {
    let mut g = GlobalBarrier::single(embed_components(certs, space).remove(0), certs[0].lambda);
    g.space = space.clone();
    g
}

/// `max_i |(Aᵀk − νk)_i|` and `max_i |(Av − μv)_i|`.
pub fn eigen_residuals(g: &GainStructure) -> (f64, f64) {
    let atk = g.a.transpose().mul_vec(&g.k);
    let rk = atk
        .iter()
        .zip(&g.k)
        .fold(0.0f64, |m, (a, k)| m.max((a - g.nu * k).abs()));
    let av = g.a.mul_vec(&g.v);
    let rv = av
        .iter()
        .zip(&g.v)
        .fold(0.0f64, |m, (a, v)| m.max((a - g.mu * v).abs()));
    (rk, rv)
}
