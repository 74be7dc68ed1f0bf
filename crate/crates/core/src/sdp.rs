//! Block-diagonal semidefinite programs and a primal–dual interior-point
//! solver.
//!
//! Problems are posed in the standard primal form
//!
//! ```text
//! minimize    Σ_k <C_k, X_k> + c_f · x_f
//! subject to  Σ_k <A_ik, X_k> + F_i · x_f = b_i      i = 1..m
//!             X_k ⪰ 0,  x_f free
//! ```
//!
//! The solver runs a homogeneous self-dual embedding with Nesterov–Todd
//! scaling and a Mehrotra predictor–corrector. Infeasible problems end with
//! a Farkas ray `y` such that `Σ y_i A_i ⪰ 0`, `F^T y = 0` and `b^T y < 0`.
//!
//! The Schur complement is assembled densely, but split into independent
//! components: constraints that share no PSD block never couple, so a
//! program made of many independent SOS identities factors one identity at
//! a time. Free variables are eliminated through a second, small Schur
//! complement.

use std::fmt::Write as _;
use std::time::Instant;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt;
use faer::{Mat, MatMut, MatRef, Par, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("block {0} has dimension zero")]
    EmptyBlock(usize),
    #[error("constraint {constraint}: entry ({row}, {col}) outside block {block} of size {dim}")]
    EntryOutOfRange {
        constraint: usize,
        block: usize,
        row: usize,
        col: usize,
        dim: usize,
    },
    #[error("constraint {constraint}: unknown block {block}")]
    UnknownBlock { constraint: usize, block: usize },
    #[error("constraint {constraint}: free variable {index} out of range")]
    FreeOutOfRange { constraint: usize, index: usize },
    #[error("non-finite data in constraint {0}")]
    NonFinite(usize),
    #[error("tolerances must be positive")]
    BadTolerance,
}

/// One symmetric matrix entry: `A[row, col] = A[col, row] = value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpEntry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl SdpEntry {
    pub fn new(block: usize, row: usize, col: usize, value: f64) -> Self {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        Self {
            block,
            row,
            col,
            value,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SdpConstraint {
    pub entries: Vec<SdpEntry>,
    pub free: Vec<(usize, f64)>,
    pub rhs: f64,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub blocks: Vec<usize>,
    pub free: usize,
    pub constraints: Vec<SdpConstraint>,
    /// Objective entries on the PSD blocks (empty for pure feasibility).
    pub objective: Vec<SdpEntry>,
    pub objective_free: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative primal/dual residual, `‖r‖∞ / (1 + ‖rhs‖∞)`.
    pub residual: f64,
    /// Allowed negative eigenvalue on returned blocks.
    pub eig: f64,
    pub gap: f64,
    pub infeasibility: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            residual: 1e-8,
            eig: 1e-7,
            gap: 1e-8,
            infeasibility: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Feasible,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub blocks: Vec<Mat<f64>>,
    pub free: Vec<f64>,
    pub dual: Vec<f64>,
    /// Relative primal residual `‖A(X) + F x_f − b‖∞ / (1 + ‖b‖∞)`.
    pub primal_residual: f64,
    /// Absolute primal residual `‖A(X) + F x_f − b‖∞`.
    pub primal_residual_abs: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    /// Farkas ray when `status == Infeasible`, normalized to `b^T y = −1`.
    pub infeasibility_ray: Option<Vec<f64>>,
    pub seconds: f64,
    pub message: String,
}

impl SdpProblem {
    pub fn new(blocks: Vec<usize>, free: usize) -> Self {
        Self {
            blocks,
            free,
            ..Default::default()
        }
    }

    pub fn add_constraint(&mut self, c: SdpConstraint) {
        self.constraints.push(c);
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        if let Some(k) = self.blocks.iter().position(|&d| d == 0) {
            return Err(SdpError::EmptyBlock(k));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(SdpError::NonFinite(i));
            }
            for e in &c.entries {
                let dim = *self.blocks.get(e.block).ok_or(SdpError::UnknownBlock {
                    constraint: i,
                    block: e.block,
                })?;
                if e.row >= dim || e.col >= dim {
                    return Err(SdpError::EntryOutOfRange {
                        constraint: i,
                        block: e.block,
                        row: e.row,
                        col: e.col,
                        dim,
                    });
                }
                if !e.value.is_finite() {
                    return Err(SdpError::NonFinite(i));
                }
            }
            for &(j, v) in &c.free {
                if j >= self.free {
                    return Err(SdpError::FreeOutOfRange {
                        constraint: i,
                        index: j,
                    });
                }
                if !v.is_finite() {
                    return Err(SdpError::NonFinite(i));
                }
            }
        }
        Ok(())
    }

    /// Same problem with every constraint row multiplied by `s`.
    pub fn scaled(&self, s: f64) -> SdpProblem {
        let mut out = self.clone();
        for c in &mut out.constraints {
            for e in &mut c.entries {
                e.value *= s;
            }
            for f in &mut c.free {
                f.1 *= s;
            }
            c.rhs *= s;
        }
        out
    }

    /// `A(X) + F x_f − b`, evaluated row by row.
    pub fn residual_vector(&self, blocks: &[Mat<f64>], free: &[f64]) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| {
                let mut s = -c.rhs;
                for e in &c.entries {
                    let x = &blocks[e.block];
                    s += if e.row == e.col {
                        e.value * x[(e.row, e.col)]
                    } else {
                        e.value * (x[(e.row, e.col)] + x[(e.col, e.row)])
                    };
                }
                for &(j, v) in &c.free {
                    s += v * free[j];
                }
                s
            })
            .collect()
    }

    /// Largest absolute constraint violation.
    pub fn max_violation(&self, blocks: &[Mat<f64>], free: &[f64]) -> f64 {
        self.residual_vector(blocks, free)
            .iter()
            .fold(0.0, |a, r| a.max(r.abs()))
    }

    /// `Σ y_i A_i` per block.
    pub fn adjoint(&self, y: &[f64]) -> Vec<Mat<f64>> {
        let mut out: Vec<Mat<f64>> = self.blocks.iter().map(|&n| Mat::zeros(n, n)).collect();
        for (c, &yi) in self.constraints.iter().zip(y) {
            for e in &c.entries {
                out[e.block][(e.row, e.col)] += yi * e.value;
                if e.row != e.col {
                    out[e.block][(e.col, e.row)] += yi * e.value;
                }
            }
        }
        out
    }

    /// `F^T y`.
    pub fn free_adjoint(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.free];
        for (c, &yi) in self.constraints.iter().zip(y) {
            for &(j, v) in &c.free {
                out[j] += yi * v;
            }
        }
        out
    }

    pub fn rhs_dot(&self, y: &[f64]) -> f64 {
        self.constraints
            .iter()
            .zip(y)
            .map(|(c, yi)| c.rhs * yi)
            .sum()
    }

    /// Block-sparse text dump: a header with block sizes and free count,
    /// then one line per constraint listing `block row col value` groups
    /// (free variables use block `f`) followed by `| rhs`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let dims: Vec<String> = self.blocks.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(out, "blocks {}", dims.join(" "));
        let _ = writeln!(out, "free {}", self.free);
        let _ = writeln!(out, "constraints {}", self.constraints.len());
        let mut last_label = "";
        for c in &self.constraints {
            if !c.label.is_empty() && c.label != last_label {
                let _ = writeln!(out, "# {}", c.label);
                last_label = &c.label;
            }
            let mut parts: Vec<String> = c
                .entries
                .iter()
                .map(|e| format!("{} {} {} {:e}", e.block, e.row, e.col, e.value))
                .collect();
            parts.extend(c.free.iter().map(|(j, v)| format!("f {j} 0 {v:e}")));
            let _ = writeln!(out, "{} | {:e}", parts.join(" "), c.rhs);
        }
        out
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: MatRef<'_, f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = symmetrize(m);
    sym.self_adjoint_eigenvalues(Side::Lower)
        .map(|v| v.first().copied().unwrap_or(0.0))
        .unwrap_or(f64::NAN)
}

fn symmetrize(m: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

// ---------------------------------------------------------------------------
// internal layout

struct BlockData {
    n: usize,
    /// (row, r, c, v) with r <= c, grouped by row.
    entries: Vec<(usize, usize, usize, f64)>,
    /// (row, start, end) ranges into `entries`.
    rows: Vec<(usize, usize, usize)>,
    /// CSR over upper-triangle positions: which rows touch (r, c).
    pos_offsets: Vec<usize>,
    pos_rows: Vec<(usize, f64)>,
}

impl BlockData {
    fn upper_index(n: usize, r: usize, c: usize) -> usize {
        // column-major upper triangle: column c holds rows 0..=c
        debug_assert!(r <= c && c < n);
        c * (c + 1) / 2 + r
    }
}

struct Component {
    rows: Vec<usize>,
    blocks: Vec<usize>,
}

struct Layout {
    m: usize,
    nf: usize,
    blocks: Vec<BlockData>,
    free_rows: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    c_blocks: Vec<Mat<f64>>,
    c_free: Vec<f64>,
    components: Vec<Component>,
    /// (component, local index) per row
    row_pos: Vec<(usize, usize)>,
    row_scale: Vec<f64>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

impl Layout {
    fn new(p: &SdpProblem) -> Layout {
        let m = p.constraints.len();
        let nf = p.free;
        // row equilibration
        let row_scale: Vec<f64> = p
            .constraints
            .iter()
            .map(|c| {
                let mx = c
                    .entries
                    .iter()
                    .map(|e| e.value.abs())
                    .chain(c.free.iter().map(|f| f.1.abs()))
                    .fold(0.0, f64::max);
                if mx > 0.0 {
                    1.0 / mx
                } else {
                    1.0
                }
            })
            .collect();

        let mut blocks: Vec<BlockData> = p
            .blocks
            .iter()
            .map(|&n| BlockData {
                n,
                entries: Vec::new(),
                rows: Vec::new(),
                pos_offsets: Vec::new(),
                pos_rows: Vec::new(),
            })
            .collect();
        let mut free_rows = vec![Vec::new(); m];
        let mut b = vec![0.0; m];
        for (i, c) in p.constraints.iter().enumerate() {
            let s = row_scale[i];
            b[i] = c.rhs * s;
            // merge duplicate entries within a row
            let mut merged: std::collections::BTreeMap<(usize, usize, usize), f64> =
                std::collections::BTreeMap::new();
            for e in &c.entries {
                let (r, cc) = if e.row <= e.col {
                    (e.row, e.col)
                } else {
                    (e.col, e.row)
                };
                *merged.entry((e.block, r, cc)).or_insert(0.0) += e.value * s;
            }
            for ((k, r, cc), v) in merged {
                if v != 0.0 {
                    blocks[k].entries.push((i, r, cc, v));
                }
            }
            let mut fm: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
            for &(j, v) in &c.free {
                *fm.entry(j).or_insert(0.0) += v * s;
            }
            free_rows[i] = fm.into_iter().filter(|(_, v)| *v != 0.0).collect();
        }
        for bd in &mut blocks {
            // entries were pushed in row order already
            let mut start = 0;
            while start < bd.entries.len() {
                let row = bd.entries[start].0;
                let mut end = start;
                while end < bd.entries.len() && bd.entries[end].0 == row {
                    end += 1;
                }
                bd.rows.push((row, start, end));
                start = end;
            }
            let npos = bd.n * (bd.n + 1) / 2;
            let mut counts = vec![0usize; npos + 1];
            for &(_, r, c, _) in &bd.entries {
                counts[BlockData::upper_index(bd.n, r, c) + 1] += 1;
            }
            for i in 0..npos {
                counts[i + 1] += counts[i];
            }
            let mut fill = counts.clone();
            let mut pos_rows = vec![(0usize, 0.0f64); bd.entries.len()];
            for &(row, r, c, v) in &bd.entries {
                let u = BlockData::upper_index(bd.n, r, c);
                pos_rows[fill[u]] = (row, v);
                fill[u] += 1;
            }
            bd.pos_offsets = counts;
            bd.pos_rows = pos_rows;
        }

        let mut c_blocks: Vec<Mat<f64>> = p.blocks.iter().map(|&n| Mat::zeros(n, n)).collect();
        for e in &p.objective {
            c_blocks[e.block][(e.row, e.col)] += e.value;
            if e.row != e.col {
                c_blocks[e.block][(e.col, e.row)] += e.value;
            }
        }
        let mut c_free = vec![0.0; nf];
        for &(j, v) in &p.objective_free {
            c_free[j] += v;
        }

        // components: rows linked through shared PSD blocks
        let mut parent: Vec<usize> = (0..m).collect();
        for bd in &blocks {
            if let Some(&(first, _, _)) = bd.rows.first() {
                for &(row, _, _) in &bd.rows[1..] {
                    let (a, r) = (find(&mut parent, first), find(&mut parent, row));
                    if a != r {
                        parent[r] = a;
                    }
                }
            }
        }
        let mut comp_of_root = std::collections::BTreeMap::new();
        let mut components: Vec<Component> = Vec::new();
        let mut row_pos = vec![(0, 0); m];
        for (i, pos) in row_pos.iter_mut().enumerate() {
            let root = find(&mut parent, i);
            let ci = *comp_of_root.entry(root).or_insert_with(|| {
                components.push(Component {
                    rows: Vec::new(),
                    blocks: Vec::new(),
                });
                components.len() - 1
            });
            *pos = (ci, components[ci].rows.len());
            components[ci].rows.push(i);
        }
        for (k, bd) in blocks.iter().enumerate() {
            if let Some(&(row, _, _)) = bd.rows.first() {
                components[row_pos[row].0].blocks.push(k);
            }
        }

        Layout {
            m,
            nf,
            blocks,
            free_rows,
            b,
            c_blocks,
            c_free,
            components,
            row_pos,
            row_scale,
        }
    }

    fn apply(&self, xs: &[Mat<f64>], xf: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (bd, x) in self.blocks.iter().zip(xs) {
            for &(row, r, c, v) in &bd.entries {
                out[row] += if r == c {
                    v * x[(r, c)]
                } else {
                    v * (x[(r, c)] + x[(c, r)])
                };
            }
        }
        for (row, fr) in self.free_rows.iter().enumerate() {
            for &(j, v) in fr {
                out[row] += v * xf[j];
            }
        }
        out
    }

    fn adjoint(&self, y: &[f64]) -> Vec<Mat<f64>> {
        self.blocks
            .iter()
            .map(|bd| {
                let mut z = Mat::zeros(bd.n, bd.n);
                for &(row, r, c, v) in &bd.entries {
                    z[(r, c)] += v * y[row];
                    if r != c {
                        z[(c, r)] += v * y[row];
                    }
                }
                z
            })
            .collect()
    }

    fn free_adjoint(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nf];
        for (row, fr) in self.free_rows.iter().enumerate() {
            for &(j, v) in fr {
                out[j] += v * y[row];
            }
        }
        out
    }
}

fn inner(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        let (ca, cb) = (a.col(j), b.col(j));
        for i in 0..a.nrows() {
            s += ca[i] * cb[i];
        }
    }
    s
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn mat_norm_inf(a: &Mat<f64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

fn sym_part(m: Mat<f64>) -> Mat<f64> {
    let n = m.nrows();
    Mat::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

/// Nesterov–Todd scaling of one block: `W = G G^T`, with
/// `G^{-1} X G^{-T} = G^T S G = diag(d)`.
struct NtScaling {
    g: Mat<f64>,
    g_inv: Mat<f64>,
    w: Mat<f64>,
    d: Vec<f64>,
}

fn cholesky_lower(a: &Mat<f64>) -> Option<Mat<f64>> {
    let l = sym_part(a.clone()).llt(Side::Lower).ok()?;
    Some(l.L().to_owned())
}

fn lower_inverse(l: &Mat<f64>) -> Mat<f64> {
    let n = l.nrows();
    let mut inv = Mat::<f64>::identity(n, n);
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(
        l.as_ref(),
        inv.as_mut(),
        Par::Seq,
    );
    inv
}

fn nt_scaling(x: &Mat<f64>, s: &Mat<f64>) -> Option<NtScaling> {
    let n = x.nrows();
    let lx = cholesky_lower(x)?;
    let ls = cholesky_lower(s)?;
    let prod = ls.transpose() * &lx;
    let svd = prod.svd().ok()?;
    let sv: Vec<f64> = (0..n).map(|i| svd.S().column_vector()[i]).collect();
    if sv.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return None;
    }
    let v = svd.V().to_owned();
    // G = Lx V Σ^{-1/2}
    let mut lxv = &lx * &v;
    for j in 0..n {
        let f = 1.0 / sv[j].sqrt();
        for i in 0..n {
            lxv[(i, j)] *= f;
        }
    }
    let g = lxv;
    // G^{-1} = Σ^{1/2} V^T Lx^{-1}
    let lx_inv = lower_inverse(&lx);
    let mut g_inv = v.transpose() * &lx_inv;
    for i in 0..n {
        let f = sv[i].sqrt();
        for j in 0..n {
            g_inv[(i, j)] *= f;
        }
    }
    let w = sym_part(&g * g.transpose());
    Some(NtScaling { g, g_inv, w, d: sv })
}

/// Largest `α ≤ cap` keeping `I + α D^{-1/2} Δ D^{-1/2} ⪰ 0`, where `delta`
/// is already expressed in the scaled frame.
fn max_step(d: &[f64], delta: &Mat<f64>) -> f64 {
    let n = d.len();
    let m = Mat::from_fn(n, n, |i, j| {
        0.5 * (delta[(i, j)] + delta[(j, i)]) / (d[i] * d[j]).sqrt()
    });
    match m.self_adjoint_eigenvalues(Side::Lower) {
        Ok(ev) => {
            let lmin = ev.first().copied().unwrap_or(0.0);
            if lmin < 0.0 {
                -1.0 / lmin
            } else {
                f64::INFINITY
            }
        }
        Err(_) => 0.0,
    }
}

struct Factorized {
    /// lower Cholesky factor per component (column-major m_c x m_c)
    chol: Vec<Vec<f64>>,
    /// M_c^{-1} F_c per component (column-major m_c x nf)
    minv_f: Vec<Vec<f64>>,
    /// Cholesky of F^T M^{-1} F
    free_chol: Option<Mat<f64>>,
}

fn chol_solve(l: &[f64], n: usize, rhs: &mut [f64], ncols: usize) {
    if n == 0 {
        return;
    }
    let lref = MatRef::from_column_major_slice(l, n, n);
    let rmut = MatMut::from_column_major_slice_mut(rhs, n, ncols);
    let mut buf = MemBuffer::new(llt::solve::solve_in_place_scratch::<f64>(
        n,
        ncols,
        Par::Seq,
    ));
    llt::solve::solve_in_place(lref, rmut, Par::Seq, MemStack::new(&mut buf));
}

impl Layout {
    /// Dense Schur complement `M_ij = Σ_k <A_ik, W_k A_jk W_k>` for one
    /// component, column-major.
    fn schur(&self, comp: &Component, scal: &[NtScaling]) -> Vec<f64> {
        let mc = comp.rows.len();
        let mut m = vec![0.0; mc * mc];
        for &k in &comp.blocks {
            let bd = &self.blocks[k];
            let w = &scal[k].w;
            let n = bd.n;
            let npos = n * (n + 1) / 2;
            m.par_chunks_mut(mc)
                .zip(comp.rows.par_iter())
                .for_each_init(
                    || vec![0.0; npos],
                    |t, (col, &row)| {
                        let Some(&(_, start, end)) = bd
                            .rows
                            .binary_search_by_key(&row, |r| r.0)
                            .ok()
                            .map(|i| &bd.rows[i])
                        else {
                            return;
                        };
                        t.iter_mut().for_each(|v| *v = 0.0);
                        // t = upper triangle of W A_row W
                        for &(_, r, c, v) in &bd.entries[start..end] {
                            for q in 0..n {
                                let wcq = v * w[(c, q)];
                                let wrq = v * w[(r, q)];
                                let wr = w.col(r);
                                let wc = w.col(c);
                                let base = q * (q + 1) / 2;
                                let tq = &mut t[base..base + q + 1];
                                if r == c {
                                    for p in 0..=q {
                                        tq[p] += wcq * wr[p];
                                    }
                                } else {
                                    for p in 0..=q {
                                        tq[p] += wcq * wr[p] + wrq * wc[p];
                                    }
                                }
                            }
                        }
                        for q in 0..n {
                            let base = q * (q + 1) / 2;
                            for p in 0..=q {
                                let u = base + p;
                                let tv = if p == q { t[u] } else { 2.0 * t[u] };
                                if tv == 0.0 {
                                    continue;
                                }
                                for &(j, a) in
                                    &bd.pos_rows[bd.pos_offsets[u]..bd.pos_offsets[u + 1]]
                                {
                                    col[self.row_pos[j].1] += a * tv;
                                }
                            }
                        }
                    },
                );
        }
        m
    }

    fn factorize(&self, scal: &[NtScaling]) -> Option<Factorized> {
        let mut chol = Vec::with_capacity(self.components.len());
        let mut minv_f = Vec::with_capacity(self.components.len());
        let mut ff = Mat::<f64>::zeros(self.nf, self.nf);
        for comp in &self.components {
            let mc = comp.rows.len();
            let mut m = self.schur(comp, scal);
            // tiny relative regularization keeps rank-deficient rows solvable
            let maxdiag = (0..mc)
                .map(|i| m[i * mc + i])
                .fold(0.0, f64::max)
                .max(1e-300);
            for i in 0..mc {
                m[i * mc + i] += 1e-14 * maxdiag;
            }
            {
                let mm = MatMut::from_column_major_slice_mut(&mut m, mc, mc);
                let mut buf = MemBuffer::new(llt::factor::cholesky_in_place_scratch::<f64>(
                    mc,
                    Par::Seq,
                    Default::default(),
                ));
                llt::factor::cholesky_in_place(
                    mm,
                    Default::default(),
                    Par::Seq,
                    MemStack::new(&mut buf),
                    Default::default(),
                )
                .ok()?;
            }
            let mut f = vec![0.0; mc * self.nf];
            for (li, &row) in comp.rows.iter().enumerate() {
                for &(j, v) in &self.free_rows[row] {
                    f[j * mc + li] = v;
                }
            }
            let fcopy = f.clone();
            chol_solve(&m, mc, &mut f, self.nf);
            // accumulate F^T M^{-1} F
            for a in 0..self.nf {
                for bcol in 0..=a {
                    let s = dot(&fcopy[a * mc..(a + 1) * mc], &f[bcol * mc..(bcol + 1) * mc]);
                    ff[(a, bcol)] += s;
                    if a != bcol {
                        ff[(bcol, a)] += s;
                    }
                }
            }
            chol.push(m);
            minv_f.push(f);
        }
        let free_chol = if self.nf > 0 {
            let maxd = (0..self.nf)
                .map(|i| ff[(i, i)])
                .fold(0.0, f64::max)
                .max(1e-300);
            for i in 0..self.nf {
                ff[(i, i)] += 1e-14 * maxd;
            }
            Some(ff.llt(Side::Lower).ok()?.L().to_owned())
        } else {
            None
        };
        Some(Factorized {
            chol,
            minv_f,
            free_chol,
        })
    }

    /// Solves `[M F; F^T 0] [dy; dxf] = [r1; r2]`.
    fn solve_kkt(&self, fac: &Factorized, r1: &[f64], r2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut t: Vec<Vec<f64>> = self
            .components
            .iter()
            .zip(&fac.chol)
            .map(|(comp, l)| {
                let mut v: Vec<f64> = comp.rows.iter().map(|&r| r1[r]).collect();
                chol_solve(l, comp.rows.len(), &mut v, 1);
                v
            })
            .collect();
        let mut dxf = vec![0.0; self.nf];
        if let Some(lf) = &fac.free_chol {
            // F^T t - r2
            let mut rhs: Vec<f64> = r2.iter().map(|v| -v).collect();
            for (comp, tc) in self.components.iter().zip(&t) {
                for (li, &row) in comp.rows.iter().enumerate() {
                    for &(j, v) in &self.free_rows[row] {
                        rhs[j] += v * tc[li];
                    }
                }
            }
            let mut rm = Mat::from_fn(self.nf, 1, |i, _| rhs[i]);
            faer::linalg::triangular_solve::solve_lower_triangular_in_place(
                lf.as_ref(),
                rm.as_mut(),
                Par::Seq,
            );
            faer::linalg::triangular_solve::solve_upper_triangular_in_place(
                lf.transpose(),
                rm.as_mut(),
                Par::Seq,
            );
            for (i, d) in dxf.iter_mut().enumerate() {
                *d = rm[(i, 0)];
            }
            for ((comp, tc), mf) in self.components.iter().zip(t.iter_mut()).zip(&fac.minv_f) {
                let mc = comp.rows.len();
                for (j, &dj) in dxf.iter().enumerate() {
                    if dj != 0.0 {
                        let colj = &mf[j * mc..(j + 1) * mc];
                        for i in 0..mc {
                            tc[i] -= colj[i] * dj;
                        }
                    }
                }
            }
        }
        let mut dy = vec![0.0; self.m];
        for (comp, tc) in self.components.iter().zip(&t) {
            for (li, &row) in comp.rows.iter().enumerate() {
                dy[row] = tc[li];
            }
        }
        (dy, dxf)
    }
}

struct Iterate {
    x: Vec<Mat<f64>>,
    s: Vec<Mat<f64>>,
    y: Vec<f64>,
    xf: Vec<f64>,
    tau: f64,
    kappa: f64,
}

struct Direction {
    dx: Vec<Mat<f64>>,
    ds: Vec<Mat<f64>>,
    dy: Vec<f64>,
    dxf: Vec<f64>,
    dtau: f64,
    dkappa: f64,
}

struct Residuals {
    rp: Vec<f64>,
    rd: Vec<Mat<f64>>,
    rf: Vec<f64>,
    rg: f64,
}

impl Layout {
    fn residuals(&self, it: &Iterate) -> Residuals {
        let ax = self.apply(&it.x, &it.xf);
        let rp: Vec<f64> = ax
            .iter()
            .zip(&self.b)
            .map(|(a, b)| a - b * it.tau)
            .collect();
        let aty = self.adjoint(&it.y);
        let rd: Vec<Mat<f64>> = aty
            .into_iter()
            .zip(&it.s)
            .zip(&self.c_blocks)
            .map(|((a, s), c)| &(&a + s) - &(c * it.tau))
            .collect();
        let fty = self.free_adjoint(&it.y);
        let rf: Vec<f64> = fty
            .iter()
            .zip(&self.c_free)
            .map(|(f, c)| f - c * it.tau)
            .collect();
        let cx: f64 = self
            .c_blocks
            .iter()
            .zip(&it.x)
            .map(|(c, x)| inner(c, x))
            .sum::<f64>()
            + dot(&self.c_free, &it.xf);
        let rg = dot(&self.b, &it.y) - cx - it.kappa;
        Residuals { rp, rd, rf, rg }
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        it: &Iterate,
        res: &Residuals,
        scal: &[NtScaling],
        fac: &Factorized,
        u2v2: &(Vec<f64>, Vec<f64>),
        g: &[f64],
        wcw: &[Mat<f64>],
        rc: &[Mat<f64>],
        rtau: f64,
        eta: f64,
    ) -> Direction {
        // W rd W
        let wrdw: Vec<Mat<f64>> = scal
            .iter()
            .zip(&res.rd)
            .map(|(sc, rd)| &(&sc.w * rd) * &sc.w)
            .collect();
        let tmp: Vec<Mat<f64>> = rc.iter().zip(&wrdw).map(|(r, w)| r + &(w * eta)).collect();
        let a_tmp = self.apply(&tmp, &vec![0.0; self.nf]);
        let r1: Vec<f64> = res
            .rp
            .iter()
            .zip(&a_tmp)
            .map(|(rp, a)| -eta * rp - a)
            .collect();
        let r2: Vec<f64> = res.rf.iter().map(|rf| -eta * rf).collect();
        let (u1, v1) = self.solve_kkt(fac, &r1, &r2);
        let (u2, v2) = u2v2;
        let bmg: Vec<f64> = self.b.iter().zip(g).map(|(b, g)| b - g).collect();
        let c_tmp: f64 = self
            .c_blocks
            .iter()
            .zip(&tmp)
            .map(|(c, t)| inner(c, t))
            .sum();
        let c_wcw: f64 = self
            .c_blocks
            .iter()
            .zip(wcw)
            .map(|(c, t)| inner(c, t))
            .sum();
        let num = -eta * res.rg - dot(&bmg, &u1) + dot(&self.c_free, &v1) + c_tmp + rtau / it.tau;
        let den = dot(&bmg, u2) - dot(&self.c_free, v2) + c_wcw + it.kappa / it.tau;
        let dtau = num / den;
        let dy: Vec<f64> = u1.iter().zip(u2).map(|(a, b)| a + dtau * b).collect();
        let dxf: Vec<f64> = v1.iter().zip(v2).map(|(a, b)| a + dtau * b).collect();
        let aty = self.adjoint(&dy);
        let ds: Vec<Mat<f64>> = res
            .rd
            .iter()
            .zip(&aty)
            .zip(&self.c_blocks)
            .map(|((rd, a), c)| &(&(rd * (-eta)) - a) + &(c * dtau))
            .collect();
        let dx: Vec<Mat<f64>> = rc
            .iter()
            .zip(&ds)
            .zip(scal)
            .map(|((r, d), sc)| sym_part(r - &(&(&sc.w * d) * &sc.w)))
            .collect();
        let dkappa = (rtau - it.kappa * dtau) / it.tau;
        Direction {
            dx,
            ds,
            dy,
            dxf,
            dtau,
            dkappa,
        }
    }

    fn step_length(&self, it: &Iterate, d: &Direction, scal: &[NtScaling]) -> f64 {
        let mut alpha = f64::INFINITY;
        for ((sc, dx), ds) in scal.iter().zip(&d.dx).zip(&d.ds) {
            let dxt = &(&sc.g_inv * dx) * sc.g_inv.transpose();
            let dst = &(sc.g.transpose() * ds) * &sc.g;
            alpha = alpha.min(max_step(&sc.d, &dxt)).min(max_step(&sc.d, &dst));
        }
        if d.dtau < 0.0 {
            alpha = alpha.min(-it.tau / d.dtau);
        }
        if d.dkappa < 0.0 {
            alpha = alpha.min(-it.kappa / d.dkappa);
        }
        alpha
    }
}

/// Right-hand side `ΔX + W ΔS W = G L_V^{-1}(σμ I − V² − corr) G^T` where
/// `L_V(Z) = (VZ + ZV)/2` and `V = diag(d)`.
fn complementarity_rhs(sc: &NtScaling, sigma_mu: f64, corr: Option<&Mat<f64>>) -> Mat<f64> {
    let n = sc.d.len();
    let z = Mat::from_fn(n, n, |i, j| {
        let mut r = if i == j {
            sigma_mu - sc.d[i] * sc.d[i]
        } else {
            0.0
        };
        if let Some(c) = corr {
            r -= c[(i, j)];
        }
        r / (0.5 * (sc.d[i] + sc.d[j]))
    });
    sym_part(&(&sc.g * &z) * sc.g.transpose())
}

/// Result of zero-diagonal facial reduction.
struct Reduction {
    problem: SdpProblem,
    /// Original row of each reduced row.
    rows: Vec<usize>,
    /// Per original block: reduced block index and kept indices.
    blocks: Vec<Option<(usize, Vec<usize>)>>,
    /// Diagonal rows that forced zeros, grouped by elimination round.
    rounds: Vec<Vec<usize>>,
    /// Rows left without entries but with a nonzero right-hand side.
    contradictions: Vec<usize>,
}

/// Repeatedly finds rows `Σ c_k X_kk = 0` whose entries are all diagonal
/// with one sign and no free variables. Those diagonals, and hence their
/// whole rows and columns, vanish on every feasible point, so they are
/// removed. Returns `None` when nothing can be removed.
fn facial_reduction(p: &SdpProblem) -> Option<Reduction> {
    let mut zero: Vec<Vec<bool>> = p.blocks.iter().map(|&n| vec![false; n]).collect();
    let mut done = vec![false; p.constraints.len()];
    let mut rounds = Vec::new();
    let live = |e: &SdpEntry, zero: &[Vec<bool>]| {
        e.value != 0.0 && !zero[e.block][e.row] && !zero[e.block][e.col]
    };
    loop {
        let mut round = Vec::new();
        for (r, c) in p.constraints.iter().enumerate() {
            if done[r] || c.rhs != 0.0 || c.free.iter().any(|f| f.1 != 0.0) {
                continue;
            }
            let mut sign = 0.0;
            let mut ok = true;
            let mut any = false;
            for e in c.entries.iter().filter(|e| live(e, &zero)) {
                any = true;
                if e.row != e.col || (sign != 0.0 && e.value.signum() != sign) {
                    ok = false;
                    break;
                }
                sign = e.value.signum();
            }
            if ok && any {
                round.push(r);
            }
        }
        if round.is_empty() {
            break;
        }
        for &r in &round {
            done[r] = true;
            for e in &p.constraints[r].entries {
                if e.value != 0.0 {
                    zero[e.block][e.row] = true;
                }
            }
        }
        rounds.push(round);
    }
    if rounds.is_empty() {
        return None;
    }
    let mut blocks = Vec::with_capacity(p.blocks.len());
    let mut dims = Vec::new();
    let mut index: Vec<Vec<usize>> = Vec::with_capacity(p.blocks.len());
    for z in &zero {
        let kept: Vec<usize> = (0..z.len()).filter(|&k| !z[k]).collect();
        let mut pos = vec![usize::MAX; z.len()];
        for (new, &old) in kept.iter().enumerate() {
            pos[old] = new;
        }
        index.push(pos);
        if kept.is_empty() {
            blocks.push(None);
        } else {
            dims.push(kept.len());
            blocks.push(Some((dims.len() - 1, kept)));
        }
    }
    let remap = |e: &SdpEntry| -> SdpEntry {
        let (b, _) = blocks[e.block]
            .as_ref()
            .expect("live entry in a kept block");
        SdpEntry::new(*b, index[e.block][e.row], index[e.block][e.col], e.value)
    };
    let mut out = SdpProblem::new(dims, p.free);
    let mut rows = Vec::new();
    let mut contradictions = Vec::new();
    for (r, c) in p.constraints.iter().enumerate() {
        if done[r] {
            continue;
        }
        let entries: Vec<SdpEntry> = c
            .entries
            .iter()
            .filter(|e| live(e, &zero))
            .map(remap)
            .collect();
        let free: Vec<(usize, f64)> = c.free.iter().copied().filter(|f| f.1 != 0.0).collect();
        if entries.is_empty() && free.is_empty() {
            if c.rhs != 0.0 {
                contradictions.push(r);
            }
            continue;
        }
        rows.push(r);
        out.add_constraint(SdpConstraint {
            entries,
            free,
            rhs: c.rhs,
            label: c.label.clone(),
        });
    }
    out.objective = p
        .objective
        .iter()
        .filter(|e| live(e, &zero))
        .map(remap)
        .collect();
    out.objective_free = p.objective_free.clone();
    Some(Reduction {
        problem: out,
        rows,
        blocks,
        rounds,
        contradictions,
    })
}

impl Reduction {
    fn expand_blocks(&self, original: &SdpProblem, reduced: &[Mat<f64>]) -> Vec<Mat<f64>> {
        original
            .blocks
            .iter()
            .zip(&self.blocks)
            .map(|(&n, map)| {
                let mut m = Mat::zeros(n, n);
                if let Some((b, kept)) = map {
                    for (i, &oi) in kept.iter().enumerate() {
                        for (j, &oj) in kept.iter().enumerate() {
                            m[(oi, oj)] = reduced[*b][(i, j)];
                        }
                    }
                }
                m
            })
            .collect()
    }

    fn expand_rows(&self, original: &SdpProblem, y: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; original.constraints.len()];
        for (&r, v) in self.rows.iter().zip(y) {
            full[r] = *v;
        }
        full
    }

    /// Lifts a ray of the reduced problem (or a bare contradiction) to the
    /// original problem by weighting the eliminated diagonal rows, earlier
    /// rounds more heavily, with `y` scaled so that `bᵀy = −1`. The eigenvalue
    /// bound is absolute if some weighting reaches it, else relative to the
    /// block norm. Returns `None` if no weighting up to a large bound makes
    /// every block of `Σ y_i A_i` positive semidefinite.
    fn lift_ray(&self, original: &SdpProblem, mut y: Vec<f64>, eig_tol: f64) -> Option<Vec<f64>> {
        let by = original.rhs_dot(&y);
        if !(by < 0.0) {
            return None;
        }
        y.iter_mut().for_each(|v| *v /= -by);
        let sign_of = |r: usize| {
            original.constraints[r]
                .entries
                .iter()
                .find(|e| e.value != 0.0)
                .map_or(1.0, |e| e.value.signum())
        };
        let base = y.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let nr = self.rounds.len() as i32;
        let candidate = |t: f64| {
            let mut cand = y.clone();
            for (k, round) in self.rounds.iter().enumerate() {
                let w = base * t.powi(nr - k as i32);
                for &r in round {
                    cand[r] = w * sign_of(r);
                }
            }
            cand
        };
        let free_ok = |cand: &[f64]| {
            original
                .free_adjoint(cand)
                .iter()
                .all(|v| v.abs() <= eig_tol * base)
        };
        // prefer an absolute bound; badly scaled problems only reach one relative to the weights
        for relative in [false, true] {
            let mut t: f64 = 4.0;
            for _ in 0..40 {
                let cand = candidate(t);
                let ok = original.adjoint(&cand).iter().all(|z| {
                    let scale = if relative {
                        mat_norm_inf(z).max(1.0)
                    } else {
                        1.0
                    };
                    min_eigenvalue(z.as_ref()) >= -eig_tol * scale
                }) && free_ok(&cand);
                if ok {
                    return Some(cand);
                }
                t *= 4.0;
            }
        }
        None
    }
}

/// Rows that only involve free variables, `E x_f = e`, solved by SVD:
/// `x_f = x0 + N z` with `N` spanning the null space of `E`.
struct FreeElimination {
    problem: SdpProblem,
    /// Rows of the input kept in `problem`.
    rows: Vec<usize>,
    /// Free-only rows of the input.
    free_rows: Vec<usize>,
    x0: Vec<f64>,
    null: Mat<f64>,
    /// `E = U Σ Vᵀ` pieces used to lift rays.
    u: Mat<f64>,
    sv: Vec<f64>,
    v: Mat<f64>,
    rank: usize,
}

enum FreeOutcome {
    Reduced(FreeElimination),
    /// `E x_f = e` has no solution; carries the Farkas ray over all rows.
    Inconsistent(Vec<f64>),
}

fn free_elimination(p: &SdpProblem) -> Option<FreeOutcome> {
    let free_rows: Vec<usize> = (0..p.constraints.len())
        .filter(|&r| p.constraints[r].entries.iter().all(|e| e.value == 0.0))
        .collect();
    if free_rows.is_empty() || p.free == 0 {
        return None;
    }
    let k = free_rows.len();
    let nf = p.free;
    let mut e_mat = Mat::<f64>::zeros(k, nf);
    let mut e_rhs = vec![0.0; k];
    for (i, &r) in free_rows.iter().enumerate() {
        for &(j, v) in &p.constraints[r].free {
            e_mat[(i, j)] += v;
        }
        e_rhs[i] = p.constraints[r].rhs;
    }
    let svd = e_mat.svd().ok()?;
    let u = svd.U().to_owned();
    let v = svd.V().to_owned();
    let sv: Vec<f64> = (0..k.min(nf)).map(|i| svd.S().column_vector()[i]).collect();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&x| x > 1e-12 * smax.max(1e-300)).count();
    // x0 = V Σ⁺ Uᵀ e
    let mut x0 = vec![0.0; nf];
    for t in 0..rank {
        let ute: f64 = (0..k).map(|i| u[(i, t)] * e_rhs[i]).sum();
        for j in 0..nf {
            x0[j] += v[(j, t)] * ute / sv[t];
        }
    }
    let resid: Vec<f64> = (0..k)
        .map(|i| e_rhs[i] - (0..nf).map(|j| e_mat[(i, j)] * x0[j]).sum::<f64>())
        .collect();
    let scale = 1.0 + norm_inf(&e_rhs);
    if norm_inf(&resid) > 1e-9 * scale {
        let nn: f64 = resid.iter().map(|r| r * r).sum();
        let mut y = vec![0.0; p.constraints.len()];
        for (i, &r) in free_rows.iter().enumerate() {
            y[r] = -resid[i] / nn;
        }
        return Some(FreeOutcome::Inconsistent(y));
    }
    let null = Mat::from_fn(nf, nf - rank, |i, j| v[(i, rank + j)]);
    let mut out = SdpProblem::new(p.blocks.clone(), nf - rank);
    let mut rows = Vec::new();
    for (r, c) in p.constraints.iter().enumerate() {
        if free_rows.binary_search(&r).is_ok() {
            continue;
        }
        let shift: f64 = c.free.iter().map(|&(j, v)| v * x0[j]).sum();
        let mut coef = vec![0.0; nf - rank];
        for &(j, v) in &c.free {
            for (t, cf) in coef.iter_mut().enumerate() {
                *cf += v * null[(j, t)];
            }
        }
        rows.push(r);
        out.add_constraint(SdpConstraint {
            entries: c.entries.clone(),
            free: coef
                .into_iter()
                .enumerate()
                .filter(|(_, v)| *v != 0.0)
                .collect(),
            rhs: c.rhs - shift,
            label: c.label.clone(),
        });
    }
    out.objective = p.objective.clone();
    let mut cf = vec![0.0; nf - rank];
    for &(j, v) in &p.objective_free {
        for (t, c) in cf.iter_mut().enumerate() {
            *c += v * null[(j, t)];
        }
    }
    out.objective_free = cf
        .into_iter()
        .enumerate()
        .filter(|(_, v)| *v != 0.0)
        .collect();
    Some(FreeOutcome::Reduced(FreeElimination {
        problem: out,
        rows,
        free_rows,
        x0,
        null,
        u,
        sv,
        v,
        rank,
    }))
}

impl FreeElimination {
    fn expand_free(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.x0.clone();
        for (t, zt) in z.iter().enumerate() {
            for (j, xj) in x.iter_mut().enumerate() {
                *xj += self.null[(j, t)] * zt;
            }
        }
        x
    }

    fn expand_rows(&self, input: &SdpProblem, y: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; input.constraints.len()];
        for (&r, v) in self.rows.iter().zip(y) {
            full[r] = *v;
        }
        full
    }

    /// Completes a ray so that `F^T y = 0` holds on the input problem.
    fn lift_ray(&self, input: &SdpProblem, y: &[f64]) -> Vec<f64> {
        let mut full = self.expand_rows(input, y);
        let g = input.free_adjoint(&full);
        // y_E = −U Σ⁺ Vᵀ g
        let k = self.free_rows.len();
        let mut ye = vec![0.0; k];
        for t in 0..self.rank {
            let vtg: f64 = g
                .iter()
                .enumerate()
                .map(|(j, gj)| self.v[(j, t)] * gj)
                .sum();
            for (i, yi) in ye.iter_mut().enumerate() {
                *yi -= self.u[(i, t)] * vtg / self.sv[t];
            }
        }
        for (i, &r) in self.free_rows.iter().enumerate() {
            full[r] = ye[i];
        }
        full
    }
}

/// Solves the problem. Deterministic for identical inputs.
///
/// Two exact presolve steps run first: diagonal entries forced to zero by
/// the constraints are removed (see [`facial_reduction`]), then rows that
/// only involve free variables are solved and substituted. The returned
/// blocks, free values and duals are in the original layout.
pub fn solve(problem: &SdpProblem, tol: &Tolerances) -> Result<SdpSolution, SdpError> {
    problem.validate()?;
    if !(tol.residual > 0.0 && tol.eig > 0.0 && tol.gap > 0.0 && tol.infeasibility > 0.0) {
        return Err(SdpError::BadTolerance);
    }
    let start = Instant::now();
    let b_norm = problem
        .constraints
        .iter()
        .fold(0.0, |a: f64, c| a.max(c.rhs.abs()));
    let red = facial_reduction(problem);
    let p1 = red.as_ref().map_or(problem, |r| &r.problem);
    let lift1 = |y: Vec<f64>| -> Option<Vec<f64>> {
        match &red {
            Some(r) => r.lift_ray(problem, r.expand_rows(problem, &y), tol.eig),
            None => Some(y),
        }
    };
    let infeasible = |ray: Option<Vec<f64>>, msg: String| -> SdpSolution {
        let blocks: Vec<Mat<f64>> = problem.blocks.iter().map(|&n| Mat::zeros(n, n)).collect();
        let xf = vec![0.0; problem.free];
        let viol = problem.max_violation(&blocks, &xf);
        SdpSolution {
            status: SdpStatus::Infeasible,
            blocks,
            free: xf,
            dual: vec![0.0; problem.constraints.len()],
            primal_residual: viol / (1.0 + b_norm),
            primal_residual_abs: viol,
            dual_residual: 0.0,
            iterations: 0,
            infeasibility_ray: ray,
            seconds: start.elapsed().as_secs_f64(),
            message: msg,
        }
    };
    if let Some(r) = &red {
        if let Some(&c) = r.contradictions.first() {
            let mut y = vec![0.0; problem.constraints.len()];
            y[c] = 1.0;
            return Ok(infeasible(
                r.lift_ray(problem, y, tol.eig),
                format!(
                    "constraint '{}' cannot hold once forced zeros are removed",
                    problem.constraints[c].label
                ),
            ));
        }
    }
    let fe = match free_elimination(p1) {
        Some(FreeOutcome::Inconsistent(y)) => {
            return Ok(infeasible(
                lift1(y),
                "equations on free variables are inconsistent".into(),
            ));
        }
        Some(FreeOutcome::Reduced(fe)) => Some(fe),
        None => None,
    };
    if red.is_none() && fe.is_none() {
        return solve_core(problem, tol);
    }
    let p2 = fe.as_ref().map_or(p1, |f| &f.problem);
    let inner = if p2.constraints.is_empty() {
        SdpSolution {
            status: SdpStatus::Feasible,
            blocks: p2.blocks.iter().map(|&n| Mat::identity(n, n)).collect(),
            free: vec![0.0; p2.free],
            dual: Vec::new(),
            primal_residual: 0.0,
            primal_residual_abs: 0.0,
            dual_residual: 0.0,
            iterations: 0,
            infeasibility_ray: None,
            seconds: 0.0,
            message: "converged".into(),
        }
    } else {
        solve_core(p2, tol)?
    };
    let (free, dual1, ray1) = match &fe {
        Some(f) => (
            f.expand_free(&inner.free),
            f.expand_rows(p1, &inner.dual),
            inner.infeasibility_ray.as_ref().map(|y| f.lift_ray(p1, y)),
        ),
        None => (
            inner.free.clone(),
            inner.dual.clone(),
            inner.infeasibility_ray.clone(),
        ),
    };
    let (blocks, dual) = match &red {
        Some(r) => (
            r.expand_blocks(problem, &inner.blocks),
            r.expand_rows(problem, &dual1),
        ),
        None => (inner.blocks.clone(), dual1),
    };
    let ray = ray1.and_then(lift1);
    let viol = problem.max_violation(&blocks, &free);
    let removed: usize = red
        .as_ref()
        .map_or(0, |r| r.rounds.iter().map(Vec::len).sum());
    let substituted = fe.as_ref().map_or(0, |f| f.free_rows.len());
    Ok(SdpSolution {
        status: inner.status,
        blocks,
        free,
        dual,
        primal_residual: viol / (1.0 + b_norm),
        primal_residual_abs: viol,
        dual_residual: inner.dual_residual,
        iterations: inner.iterations,
        infeasibility_ray: ray,
        seconds: start.elapsed().as_secs_f64(),
        message: format!(
            "{} (presolve: {removed} forced-zero rows, {substituted} free-only rows)",
            inner.message
        ),
    })
}

fn solve_core(problem: &SdpProblem, tol: &Tolerances) -> Result<SdpSolution, SdpError> {
    let start = Instant::now();
    let lay = Layout::new(problem);
    let nblocks = problem.blocks.len();
    let nu: f64 = problem.blocks.iter().sum::<usize>() as f64 + 1.0;
    let feasibility_only = problem.objective.iter().all(|e| e.value == 0.0)
        && problem.objective_free.iter().all(|f| f.1 == 0.0);
    let b_norm = problem
        .constraints
        .iter()
        .fold(0.0, |a: f64, c| a.max(c.rhs.abs()));
    let c_norm = lay
        .c_blocks
        .iter()
        .map(mat_norm_inf)
        .chain(lay.c_free.iter().map(|v| v.abs()))
        .fold(0.0, f64::max);

    let mut it = Iterate {
        x: problem
            .blocks
            .iter()
            .map(|&n| Mat::identity(n, n))
            .collect(),
        s: problem
            .blocks
            .iter()
            .map(|&n| Mat::identity(n, n))
            .collect(),
        y: vec![0.0; lay.m],
        xf: vec![0.0; lay.nf],
        tau: 1.0,
        kappa: 1.0,
    };

    let finish = |it: &Iterate, status: SdpStatus, iters: usize, msg: String| -> SdpSolution {
        let xs: Vec<Mat<f64>> = it.x.iter().map(|x| sym_part(x * (1.0 / it.tau))).collect();
        let xf: Vec<f64> = it.xf.iter().map(|v| v / it.tau).collect();
        // dual in original row scaling
        let y: Vec<f64> =
            it.y.iter()
                .zip(&lay.row_scale)
                .map(|(v, s)| v * s / it.tau)
                .collect();
        let viol = problem.max_violation(&xs, &xf);
        let ss: Vec<Mat<f64>> = it.s.iter().map(|s| s * (1.0 / it.tau)).collect();
        let aty = problem.adjoint(&y);
        let mut dres: f64 = 0.0;
        for ((a, s), c) in aty.iter().zip(&ss).zip(&lay.c_blocks) {
            dres = dres.max(mat_norm_inf(&(&(a + s) - c)));
        }
        let fty = problem.free_adjoint(&y);
        for (f, c) in fty.iter().zip(&lay.c_free) {
            dres = dres.max((f - c).abs());
        }
        let ray = if status == SdpStatus::Infeasible {
            let yr: Vec<f64> =
                it.y.iter()
                    .zip(&lay.row_scale)
                    .map(|(v, s)| v * s)
                    .collect();
            let by = problem.rhs_dot(&yr);
            Some(yr.iter().map(|v| -v / by).collect())
        } else {
            None
        };
        SdpSolution {
            status,
            blocks: xs,
            free: xf,
            dual: y,
            primal_residual: viol / (1.0 + b_norm),
            primal_residual_abs: viol,
            dual_residual: dres / (1.0 + c_norm),
            iterations: iters,
            infeasibility_ray: ray,
            seconds: start.elapsed().as_secs_f64(),
            message: msg,
        }
    };

    let mut small_steps = 0;
    let mut last_ray = f64::INFINITY;
    for iter in 0..=tol.max_iter {
        let res = lay.residuals(&it);
        let mu = (it
            .x
            .iter()
            .zip(&it.s)
            .map(|(x, s)| inner(x, s))
            .sum::<f64>()
            + it.tau * it.kappa)
            / nu;

        // termination, measured on the original (unscaled) data
        let xs: Vec<Mat<f64>> = it.x.iter().map(|x| x * (1.0 / it.tau)).collect();
        let xf: Vec<f64> = it.xf.iter().map(|v| v / it.tau).collect();
        let pres = problem.max_violation(&xs, &xf) / (1.0 + b_norm);
        let dres = {
            let mut d: f64 = 0.0;
            for r in &res.rd {
                d = d.max(mat_norm_inf(r));
            }
            d = d.max(norm_inf(&res.rf));
            d / it.tau / (1.0 + c_norm)
        };
        let by = dot(&lay.b, &it.y);
        let cx: f64 = lay
            .c_blocks
            .iter()
            .zip(&it.x)
            .map(|(c, x)| inner(c, x))
            .sum::<f64>()
            + dot(&lay.c_free, &it.xf);
        let gap = (by - cx).abs() / it.tau / (1.0 + (by / it.tau).abs());
        if pres <= tol.residual && (feasibility_only || (dres <= tol.residual && gap <= tol.gap)) {
            return Ok(finish(&it, SdpStatus::Feasible, iter, "converged".into()));
        }
        if by > 0.0 {
            let mut ray_res: f64 = 0.0;
            for (rd, c) in res.rd.iter().zip(&lay.c_blocks) {
                ray_res = ray_res.max(mat_norm_inf(&(rd + &(c * it.tau))));
            }
            for (rf, c) in res.rf.iter().zip(&lay.c_free) {
                ray_res = ray_res.max((rf + c * it.tau).abs());
            }
            // a ray that has stopped improving after tau collapsed is accepted at a looser residual
            let ratio = it.tau / it.kappa;
            let rel = ray_res / by;
            let stalled = rel > 0.9 * last_ray && ratio < 1e-8;
            last_ray = rel;
            if (rel <= tol.infeasibility && ratio < 1e-2)
                || (stalled && rel <= tol.infeasibility.sqrt())
            {
                return Ok(finish(
                    &it,
                    SdpStatus::Infeasible,
                    iter,
                    "primal infeasibility certificate found".into(),
                ));
            }
        }
        if iter == tol.max_iter {
            break;
        }

        let Some(scal) =
            it.x.iter()
                .zip(&it.s)
                .map(|(x, s)| nt_scaling(x, s))
                .collect::<Option<Vec<_>>>()
        else {
            return Ok(finish(
                &it,
                SdpStatus::NumericalFailure,
                iter,
                "iterate lost definiteness".into(),
            ));
        };
        let Some(fac) = lay.factorize(&scal) else {
            return Ok(finish(
                &it,
                SdpStatus::NumericalFailure,
                iter,
                "Schur complement factorization failed".into(),
            ));
        };
        let wcw: Vec<Mat<f64>> = scal
            .iter()
            .zip(&lay.c_blocks)
            .map(|(sc, c)| &(&sc.w * c) * &sc.w)
            .collect();
        let g = lay.apply(&wcw, &vec![0.0; lay.nf]);
        let gb: Vec<f64> = g.iter().zip(&lay.b).map(|(g, b)| g + b).collect();
        let u2v2 = lay.solve_kkt(&fac, &gb, &lay.c_free);

        // predictor
        let rc_aff: Vec<Mat<f64>> = scal
            .iter()
            .map(|sc| complementarity_rhs(sc, 0.0, None))
            .collect();
        let d_aff = lay.direction(
            &it,
            &res,
            &scal,
            &fac,
            &u2v2,
            &g,
            &wcw,
            &rc_aff,
            -it.tau * it.kappa,
            1.0,
        );
        let a_aff = lay.step_length(&it, &d_aff, &scal).min(1.0);
        let mu_aff = {
            let mut s = 0.0;
            for k in 0..nblocks {
                let xa = &it.x[k] + &(&d_aff.dx[k] * a_aff);
                let sa = &it.s[k] + &(&d_aff.ds[k] * a_aff);
                s += inner(&xa, &sa);
            }
            s += (it.tau + a_aff * d_aff.dtau) * (it.kappa + a_aff * d_aff.dkappa);
            s / nu
        };
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector with second-order term
        let rc: Vec<Mat<f64>> = scal
            .iter()
            .zip(d_aff.dx.iter().zip(&d_aff.ds))
            .map(|(sc, (dx, ds))| {
                let dxt = &(&sc.g_inv * dx) * sc.g_inv.transpose();
                let dst = &(sc.g.transpose() * ds) * &sc.g;
                let prod = &dxt * &dst;
                let corr = sym_part(prod);
                complementarity_rhs(sc, sigma * mu, Some(&corr))
            })
            .collect();
        let rtau = sigma * mu - it.tau * it.kappa - d_aff.dtau * d_aff.dkappa;
        let d = lay.direction(
            &it,
            &res,
            &scal,
            &fac,
            &u2v2,
            &g,
            &wcw,
            &rc,
            rtau,
            1.0 - sigma,
        );
        let amax = lay.step_length(&it, &d, &scal);
        let alpha = (0.98 * amax).min(1.0);
        if !(alpha > 1e-12) || !alpha.is_finite() {
            small_steps += 1;
            if small_steps > 3 || !alpha.is_finite() {
                return Ok(finish(
                    &it,
                    SdpStatus::NumericalFailure,
                    iter,
                    "step length collapsed".into(),
                ));
            }
            continue;
        }
        for k in 0..nblocks {
            it.x[k] = sym_part(&it.x[k] + &(&d.dx[k] * alpha));
            it.s[k] = sym_part(&it.s[k] + &(&d.ds[k] * alpha));
        }
        for (y, dy) in it.y.iter_mut().zip(&d.dy) {
            *y += alpha * dy;
        }
        for (x, dx) in it.xf.iter_mut().zip(&d.dxf) {
            *x += alpha * dx;
        }
        it.tau += alpha * d.dtau;
        it.kappa += alpha * d.dkappa;
        // keep the homogeneous iterate at a sane scale
        let scale = it.tau.max(it.kappa);
        if !(1e-8..=1e8).contains(&scale) {
            let f = 1.0 / scale;
            for k in 0..nblocks {
                it.x[k] = &it.x[k] * f;
                it.s[k] = &it.s[k] * f;
            }
            it.y.iter_mut().for_each(|v| *v *= f);
            it.xf.iter_mut().for_each(|v| *v *= f);
            it.tau *= f;
            it.kappa *= f;
        }
    }
    Ok(finish(
        &it,
        SdpStatus::NumericalFailure,
        tol.max_iter,
        "iteration limit reached".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_problem() -> SdpProblem {
        let mut p = SdpProblem::new(vec![2], 0);
        p.add_constraint(SdpConstraint {
            entries: vec![SdpEntry::new(0, 0, 0, 1.0), SdpEntry::new(0, 1, 1, 1.0)],
            rhs: 1.0,
            ..Default::default()
        });
        p
    }

    fn check_feasible(p: &SdpProblem, sol: &SdpSolution, tol: &Tolerances) {
        assert_eq!(sol.status, SdpStatus::Feasible, "{}", sol.message);
        let b = p
            .constraints
            .iter()
            .fold(0.0, |a: f64, c| a.max(c.rhs.abs()));
        assert!(p.max_violation(&sol.blocks, &sol.free) <= tol.residual * (1.0 + b));
        for x in &sol.blocks {
            assert!(min_eigenvalue(x.as_ref()) >= -tol.eig);
        }
    }

    fn check_ray(p: &SdpProblem, sol: &SdpSolution, tol: &Tolerances) {
        assert_eq!(sol.status, SdpStatus::Infeasible, "{}", sol.message);
        let y = sol.infeasibility_ray.as_ref().unwrap();
        assert!(p.rhs_dot(y) < 0.0);
        for z in p.adjoint(y) {
            assert!(min_eigenvalue(z.as_ref()) >= -tol.eig);
        }
        assert!(norm_inf(&p.free_adjoint(y)) <= 1e-6);
    }

    #[test]
    fn unit_trace_is_feasible() {
        let tol = Tolerances::default();
        let p = trace_problem();
        let sol = solve(&p, &tol).unwrap();
        check_feasible(&p, &sol, &tol);
        assert!(sol.primal_residual <= 1e-8);
        // the analytic centre is I/2
        assert!((sol.blocks[0][(0, 0)] - 0.5).abs() < 1e-3);
        assert!(sol.blocks[0][(0, 1)].abs() < 1e-3);
    }

    #[test]
    fn negative_scalar_is_infeasible() {
        let tol = Tolerances::default();
        let mut p = SdpProblem::new(vec![1], 0);
        p.add_constraint(SdpConstraint {
            entries: vec![SdpEntry::new(0, 0, 0, 1.0)],
            rhs: -1.0,
            ..Default::default()
        });
        let sol = solve(&p, &tol).unwrap();
        check_ray(&p, &sol, &tol);
    }

    #[test]
    fn gram_of_x_squared_minus_one_is_infeasible() {
        // basis (1, x): G00 = -1, 2 G01 = 0, G11 = 1
        let tol = Tolerances::default();
        let mut p = SdpProblem::new(vec![2], 0);
        for (r, c, v, rhs) in [(0, 0, 1.0, -1.0), (0, 1, 1.0, 0.0), (1, 1, 1.0, 1.0)] {
            p.add_constraint(SdpConstraint {
                entries: vec![SdpEntry::new(0, r, c, v)],
                rhs,
                ..Default::default()
            });
        }
        let sol = solve(&p, &tol).unwrap();
        check_ray(&p, &sol, &tol);
    }

    #[test]
    fn free_variables_are_handled_natively() {
        // x11 + t = 3, x22 - t = 0, X ⪰ 0, t free
        let tol = Tolerances::default();
        let mut p = SdpProblem::new(vec![2], 1);
        p.add_constraint(SdpConstraint {
            entries: vec![SdpEntry::new(0, 0, 0, 1.0)],
            free: vec![(0, 1.0)],
            rhs: 3.0,
            ..Default::default()
        });
        p.add_constraint(SdpConstraint {
            entries: vec![SdpEntry::new(0, 1, 1, 1.0)],
            free: vec![(0, -1.0)],
            rhs: 0.0,
            ..Default::default()
        });
        let sol = solve(&p, &tol).unwrap();
        check_feasible(&p, &sol, &tol);
        assert!(sol.free[0] > 0.0 && sol.free[0] < 3.0);
    }

    #[test]
    fn minimizes_linear_objective() {
        // min x11 + x22 s.t. x12 = 1 -> optimum 2 at [[1,1],[1,1]]
        let tol = Tolerances::default();
        let mut p = SdpProblem::new(vec![2], 0);
        p.add_constraint(SdpConstraint {
            entries: vec![SdpEntry::new(0, 0, 1, 0.5)],
            rhs: 1.0,
            ..Default::default()
        });
        p.objective = vec![SdpEntry::new(0, 0, 0, 1.0), SdpEntry::new(0, 1, 1, 1.0)];
        let sol = solve(&p, &tol).unwrap();
        check_feasible(&p, &sol, &tol);
        let obj = sol.blocks[0][(0, 0)] + sol.blocks[0][(1, 1)];
        assert!((obj - 2.0).abs() < 1e-6, "objective {obj}");
    }

    #[test]
    fn status_is_scale_invariant() {
        let tol = Tolerances::default();
        let p = trace_problem();
        let s = solve(&p.scaled(10.0), &tol).unwrap();
        assert_eq!(s.status, SdpStatus::Feasible);
        let mut q = SdpProblem::new(vec![1], 0);
        q.add_constraint(SdpConstraint {
            entries: vec![SdpEntry::new(0, 0, 0, 1.0)],
            rhs: -1.0,
            ..Default::default()
        });
        assert_eq!(
            solve(&q.scaled(10.0), &tol).unwrap().status,
            SdpStatus::Infeasible
        );
    }

    #[test]
    fn validation_catches_bad_entries() {
        let mut p = SdpProblem::new(vec![2], 0);
        p.add_constraint(SdpConstraint {
            entries: vec![SdpEntry::new(0, 0, 2, 1.0)],
            rhs: 1.0,
            ..Default::default()
        });
        assert!(matches!(
            p.validate(),
            Err(SdpError::EntryOutOfRange { .. })
        ));
        assert_eq!(
            SdpProblem::new(vec![0], 0).validate(),
            Err(SdpError::EmptyBlock(0))
        );
    }

    #[test]
    fn dump_lists_every_constraint() {
        let mut p = trace_problem();
        p.constraints[0].label = "trace".into();
        let d = p.dump();
        assert!(d.starts_with("blocks 2\nfree 0\nconstraints 1\n# trace\n"));
        assert!(d.contains("0 0 0 1e0 0 1 1 1e0 | 1e0"));
    }
}
