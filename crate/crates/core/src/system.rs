//! Switched impulsive systems, their interconnections, semialgebraic sets
//! and an event-aligned RK4 simulator.
//!
//! Mode indices are 0-based throughout the crate.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polynomial::{Monomial, Polynomial, VarSpace};

/// Default lower bound on the gap between consecutive impulse times.
pub const DEFAULT_DELTA: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("mode {mode}: expected {expected} component polynomials, got {got}")]
    ModeArity {
        mode: usize,
        expected: usize,
        got: usize,
    },
    #[error("jump map: expected {expected} component polynomials, got {got}")]
    JumpArity { expected: usize, got: usize },
    #[error("system needs at least one mode")]
    NoModes,
    #[error("polynomial lives in the wrong variable space ({0})")]
    WrongSpace(String),
    #[error("impulse times must increase with gap at least {delta}: {prev} then {next}")]
    ImpulseGap { prev: f64, next: f64, delta: f64 },
    #[error("impulse period must be positive, got {0}")]
    BadPeriod(f64),
    #[error("switching signal: {0}")]
    BadSignal(String),
    #[error("subsystem {sub} lists itself as a neighbour")]
    SelfLoop { sub: usize },
    #[error("subsystem {sub} references neighbour {neighbour}, which does not exist")]
    UnknownNeighbour { sub: usize, neighbour: usize },
    #[error("subsystem {sub}: internal input has dimension {got}, neighbours provide {expected}")]
    WiringDimension {
        sub: usize,
        expected: usize,
        got: usize,
    },
    #[error("subsystem {sub} has {got} modes, interconnection expects {expected}")]
    ModeCount {
        sub: usize,
        expected: usize,
        got: usize,
    },
    #[error("point has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("simulation step and horizon must be positive and finite")]
    BadStep,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("acceptance rate {rate:.2e} after {attempts} draws is below 1e-6; set looks empty or degenerate")]
    Degenerate { attempts: u64, rate: f64 },
    #[error("variable {0} is unbounded; supply a bounding box")]
    Unbounded(usize),
}

// ---------------------------------------------------------------------------
// sets

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// `q(x) ≥ 0`
    NonNegative,
    /// `q(x) ≤ 0`
    NonPositive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetConstraint {
    pub poly: Polynomial,
    pub relation: Relation,
}

impl SetConstraint {
    pub fn nonneg(poly: Polynomial) -> Self {
        Self {
            poly,
            relation: Relation::NonNegative,
        }
    }

    pub fn nonpos(poly: Polynomial) -> Self {
        Self {
            poly,
            relation: Relation::NonPositive,
        }
    }

    /// Value that is `≥ 0` exactly when the constraint holds.
    pub fn margin(&self, x: &[f64]) -> f64 {
        let v = self.poly.eval(x);
        match self.relation {
            Relation::NonNegative => v,
            Relation::NonPositive => -v,
        }
    }

    /// The constraint written as `s(x) ≥ 0`.
    pub fn as_nonneg(&self) -> Polynomial {
        match self.relation {
            Relation::NonNegative => self.poly.clone(),
            Relation::NonPositive => -&self.poly,
        }
    }
}

/// Basic semialgebraic cell: conjunction of polynomial sign conditions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cell {
    pub constraints: Vec<SetConstraint>,
}

impl Cell {
    pub fn new(constraints: Vec<SetConstraint>) -> Self {
        Self { constraints }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.constraints.iter().all(|c| c.margin(x) >= 0.0)
    }

    pub fn min_margin(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.margin(x))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Finite union of basic cells over one variable space.
#[derive(Debug, Clone, PartialEq)]
pub struct SemialgebraicSet {
    pub space: Arc<VarSpace>,
    pub cells: Vec<Cell>,
}

/// Axis-aligned box, used as the proposal region for rejection sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoundingBox {
    pub fn cube(n: usize, half_width: f64) -> Self {
        Self {
            lower: vec![-half_width; n],
            upper: vec![half_width; n],
        }
    }
}

/// `a − Σ_{k∈vars} x_k²` recognised as a ball of radius √a.
#[derive(Debug, Clone)]
struct Ball {
    vars: Vec<usize>,
    radius: f64,
}

fn as_ball(c: &SetConstraint) -> Option<Ball> {
    let p = c.as_nonneg();
    let mut a = 0.0;
    let mut vars = Vec::new();
    for (m, coef) in p.terms() {
        if m.is_one() {
            a = coef;
            continue;
        }
        let pairs: Vec<_> = m.pairs().collect();
        if pairs.len() == 1 && pairs[0].1 == 2 && coef == -1.0 {
            vars.push(pairs[0].0);
        } else {
            return None;
        }
    }
    (a > 0.0 && !vars.is_empty()).then(|| Ball {
        vars,
        radius: a.sqrt(),
    })
}

/// `c0 + c1 x_k ≥ 0` recognised as a half-line bound on `x_k`.
fn as_linear_bound(c: &SetConstraint) -> Option<(usize, Option<f64>, Option<f64>)> {
    let p = c.as_nonneg();
    let mut c0 = 0.0;
    let mut var = None;
    let mut c1 = 0.0;
    for (m, coef) in p.terms() {
        if m.is_one() {
            c0 = coef;
        } else if m.degree() == 1 {
            if var.is_some() {
                return None;
            }
            var = m.max_var();
            c1 = coef;
        } else {
            return None;
        }
    }
    let v = var?;
    let t = -c0 / c1;
    Some(if c1 > 0.0 {
        (v, Some(t), None)
    } else {
        (v, None, Some(t))
    })
}

/// Proposal distribution: uniform on a product of disjoint balls and
/// intervals that covers the cell.
#[derive(Debug, Clone)]
struct Proposal {
    balls: Vec<Ball>,
    intervals: Vec<(usize, f64, f64)>,
}

impl Proposal {
    fn for_cell(
        cell: &Cell,
        n: usize,
        fallback: Option<&BoundingBox>,
    ) -> Result<Self, SampleError> {
        let mut balls: Vec<Ball> = cell.constraints.iter().filter_map(as_ball).collect();
        balls.sort_by(|a, b| a.radius.total_cmp(&b.radius));
        let mut lower = vec![f64::NEG_INFINITY; n];
        let mut upper = vec![f64::INFINITY; n];
        if let Some(bb) = fallback {
            lower.copy_from_slice(&bb.lower);
            upper.copy_from_slice(&bb.upper);
        }
        for b in &balls {
            for &v in &b.vars {
                lower[v] = lower[v].max(-b.radius);
                upper[v] = upper[v].min(b.radius);
            }
        }
        for c in &cell.constraints {
            if let Some((v, lo, hi)) = as_linear_bound(c) {
                if let Some(lo) = lo {
                    lower[v] = lower[v].max(lo);
                }
                if let Some(hi) = hi {
                    upper[v] = upper[v].min(hi);
                }
            }
        }
        let mut taken = vec![false; n];
        let mut chosen = Vec::new();
        for b in balls {
            if b.vars.iter().all(|&v| !taken[v]) {
                // a ball is only a sound proposal if no box bound is tighter
                let tighter = b
                    .vars
                    .iter()
                    .any(|&v| lower[v] > -b.radius || upper[v] < b.radius);
                if !tighter {
                    for &v in &b.vars {
                        taken[v] = true;
                    }
                    chosen.push(b);
                }
            }
        }
        let mut intervals = Vec::new();
        for v in 0..n {
            if !taken[v] {
                if !(lower[v].is_finite() && upper[v].is_finite()) {
                    return Err(SampleError::Unbounded(v));
                }
                intervals.push((v, lower[v], upper[v].max(lower[v])));
            }
        }
        Ok(Self {
            balls: chosen,
            intervals,
        })
    }

    fn volume_log(&self) -> f64 {
        let mut s = 0.0;
        for b in &self.balls {
            let d = b.vars.len() as f64;
            // log of the unit-ball volume times r^d
            s += 0.5 * d * std::f64::consts::PI.ln() - ln_gamma(0.5 * d + 1.0) + d * b.radius.ln();
        }
        for &(_, lo, hi) in &self.intervals {
            s += (hi - lo).max(1e-300).ln();
        }
        s
    }

    fn draw(&self, rng: &mut ChaCha8Rng, x: &mut [f64]) {
        for b in &self.balls {
            let d = b.vars.len();
            let mut norm = 0.0;
            for &v in &b.vars {
                let g: f64 = rng.sample(StandardNormal);
                x[v] = g;
                norm += g * g;
            }
            let norm = norm.sqrt().max(1e-300);
            let r = b.radius * rng.gen::<f64>().powf(1.0 / d as f64);
            for &v in &b.vars {
                x[v] *= r / norm;
            }
        }
        for &(v, lo, hi) in &self.intervals {
            x[v] = lo + (hi - lo) * rng.gen::<f64>();
        }
    }
}

fn ln_gamma(x: f64) -> f64 {
    // Stirling series; arguments here are ≥ 1.5
    let mut x = x;
    let mut acc = 0.0;
    while x < 8.0 {
        acc -= x.ln();
        x += 1.0;
    }
    acc + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
        - 1.0 / (360.0 * x.powi(3))
}

impl SemialgebraicSet {
    pub fn new(space: &Arc<VarSpace>, cells: Vec<Cell>) -> Self {
        Self {
            space: space.clone(),
            cells,
        }
    }

    pub fn basic(space: &Arc<VarSpace>, constraints: Vec<SetConstraint>) -> Self {
        Self::new(space, vec![Cell::new(constraints)])
    }

    /// The whole space (one cell with no constraints).
    pub fn everything(space: &Arc<VarSpace>) -> Self {
        Self::basic(space, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.cells.iter().any(|c| c.contains(x))
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<(), SystemError> {
        if x.len() != self.dim() {
            return Err(SystemError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Cartesian product of sets over disjoint variable blocks, laid out in
    /// order. The result has one cell per combination of member cells.
    pub fn product(space: &Arc<VarSpace>, factors: &[&SemialgebraicSet]) -> Self {
        let mut cells = vec![Cell::default()];
        let mut offset = 0;
        for f in factors {
            let map: Vec<usize> = (offset..offset + f.dim()).collect();
            let mut next = Vec::new();
            for c in &cells {
                for fc in &f.cells {
                    let mut cc = c.clone();
                    cc.constraints
                        .extend(fc.constraints.iter().map(|k| SetConstraint {
                            poly: k.poly.embed(space, &map),
                            relation: k.relation,
                        }));
                    next.push(cc);
                }
            }
            cells = next;
            offset += f.dim();
        }
        Self::new(space, cells)
    }

    /// Uniform rejection sampling; every returned point passes
    /// [`contains`](Self::contains). Bounds come from ball and single-variable
    /// linear constraints in each cell.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>, SampleError> {
        self.sample_within(count, seed, None)
    }

    /// Like [`sample`](Self::sample) but with a fallback box for variables
    /// that the cells leave unbounded.
    pub fn sample_within(
        &self,
        count: usize,
        seed: u64,
        bbox: Option<&BoundingBox>,
    ) -> Result<Vec<Vec<f64>>, SampleError> {
        let n = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if count == 0 {
            return Ok(Vec::new());
        }
        let proposals: Vec<Proposal> = self
            .cells
            .iter()
            .map(|c| Proposal::for_cell(c, n, bbox))
            .collect::<Result<_, _>>()?;
        if proposals.is_empty() {
            return Err(SampleError::Degenerate {
                attempts: 0,
                rate: 0.0,
            });
        }
        // mixture over cells weighted by proposal volume; points in
        // overlapping cells are accepted only from their first cell so the
        // result stays uniform on the union
        let logs: Vec<f64> = proposals.iter().map(Proposal::volume_log).collect();
        let lmax = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logs.iter().map(|l| (l - lmax).exp()).collect();
        let wsum: f64 = weights.iter().sum();
        let mut out = Vec::with_capacity(count);
        let mut attempts: u64 = 0;
        let mut x = vec![0.0; n];
        while out.len() < count {
            attempts += 1;
            let mut u = rng.gen::<f64>() * wsum;
            let mut k = 0;
            while k + 1 < weights.len() && u >= weights[k] {
                u -= weights[k];
                k += 1;
            }
            proposals[k].draw(&mut rng, &mut x);
            if self.cells[k].contains(&x) && !self.cells[..k].iter().any(|c| c.contains(&x)) {
                out.push(x.clone());
            }
            if attempts >= 2_000_000 && (out.len() as f64) < 1e-6 * attempts as f64 {
                return Err(SampleError::Degenerate {
                    attempts,
                    rate: out.len() as f64 / attempts as f64,
                });
            }
        }
        Ok(out)
    }

    /// Points of the closure lying within `shell` of an active constraint's
    /// zero set. Starts from interior samples and pulls each towards one
    /// constraint boundary with Newton steps.
    pub fn sample_boundary(
        &self,
        count: usize,
        seed: u64,
        shell: f64,
        bbox: Option<&BoundingBox>,
    ) -> Result<Vec<Vec<f64>>, SampleError> {
        let interior = self.sample_within(count, seed, bbox)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut out = Vec::with_capacity(count);
        for (cell_pt, _) in interior.iter().zip(0..) {
            let Some(cell) = self.cells.iter().find(|c| c.contains(cell_pt)) else {
                continue;
            };
            if cell.constraints.is_empty() {
                out.push(cell_pt.clone());
                continue;
            }
            let k = rng.gen_range(0..cell.constraints.len());
            let q = &cell.constraints[k].poly;
            let grad = q.gradient();
            let mut x = cell_pt.clone();
            for _ in 0..20 {
                let v = q.eval(&x);
                if v.abs() <= 1e-12 {
                    break;
                }
                let g: Vec<f64> = grad.iter().map(|p| p.eval(&x)).collect();
                let g2: f64 = g.iter().map(|a| a * a).sum();
                if g2 < 1e-300 {
                    break;
                }
                for (xi, gi) in x.iter_mut().zip(&g) {
                    *xi -= v * gi / g2;
                }
            }
            // keep points whose remaining constraints hold up to the shell
            let near = cell.constraints[k].poly.eval(&x).abs() <= shell;
            let inside = cell.constraints.iter().all(|c| c.margin(&x) >= -shell);
            out.push(if near && inside { x } else { cell_pt.clone() });
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// schedules and switching

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImpulseSchedule {
    /// No impulses.
    Never,
    /// `{kT : k = 1, 2, ...}`.
    Periodic { period: f64 },
    /// Strictly increasing explicit times.
    Explicit { times: Vec<f64> },
}

impl ImpulseSchedule {
    pub fn periodic(period: f64) -> Result<Self, SystemError> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(SystemError::BadPeriod(period));
        }
        Ok(Self::Periodic { period })
    }

    pub fn explicit(times: Vec<f64>, delta: f64) -> Result<Self, SystemError> {
        for w in times.windows(2) {
            if !(w[1] - w[0] >= delta) {
                return Err(SystemError::ImpulseGap {
                    prev: w[0],
                    next: w[1],
                    delta,
                });
            }
        }
        Ok(Self::Explicit { times })
    }

    pub fn validate(&self, delta: f64) -> Result<(), SystemError> {
        match self {
            Self::Never => Ok(()),
            Self::Periodic { period } => Self::periodic(*period).map(|_| ()),
            Self::Explicit { times } => Self::explicit(times.clone(), delta).map(|_| ()),
        }
    }

    /// Impulse times in `(t0, t1]`, ascending.
    pub fn times_in(&self, t0: f64, t1: f64) -> Vec<f64> {
        match self {
            Self::Never => Vec::new(),
            Self::Periodic { period } => {
                let mut k = (t0 / period).floor() as i64 + 1;
                let mut out = Vec::new();
                loop {
                    let t = k as f64 * period;
                    if t > t1 {
                        break;
                    }
                    if t > t0 && k >= 1 {
                        out.push(t);
                    }
                    k += 1;
                }
                out
            }
            Self::Explicit { times } => times
                .iter()
                .copied()
                .filter(|&t| t > t0 && t <= t1)
                .collect(),
        }
    }

    pub fn contains(&self, t: f64, tol: f64) -> bool {
        match self {
            Self::Never => false,
            Self::Periodic { period } => {
                let k = (t / period).round();
                k >= 1.0 && (t - k * period).abs() <= tol
            }
            Self::Explicit { times } => times.iter().any(|&s| (s - t).abs() <= tol),
        }
    }
}

/// Piecewise-constant, right-continuous mode signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwitchingSignal {
    /// Sorted `(switch time, mode)` pairs; the first time must be 0.
    Explicit { switches: Vec<(f64, usize)> },
    /// Seeded random signal; dwell times uniform in `[min_dwell, max_dwell]`,
    /// next mode uniform among the others.
    Random {
        seed: u64,
        modes: usize,
        min_dwell: f64,
        max_dwell: f64,
    },
}

impl SwitchingSignal {
    pub fn constant(mode: usize) -> Self {
        Self::Explicit {
            switches: vec![(0.0, mode)],
        }
    }

    /// Concrete switch list covering `[0, horizon]`.
    pub fn realize(&self, horizon: f64) -> Result<Vec<(f64, usize)>, SystemError> {
        match self {
            Self::Explicit { switches } => {
                if switches.first().map(|s| s.0) != Some(0.0) {
                    return Err(SystemError::BadSignal(
                        "first switch must be at time 0".into(),
                    ));
                }
                for w in switches.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return Err(SystemError::BadSignal("switch times must increase".into()));
                    }
                }
                Ok(switches.clone())
            }
            Self::Random {
                seed,
                modes,
                min_dwell,
                max_dwell,
            } => {
                if *modes == 0 || !(*min_dwell > 0.0) || max_dwell < min_dwell {
                    return Err(SystemError::BadSignal(
                        "random signal needs modes ≥ 1 and 0 < min_dwell ≤ max_dwell".into(),
                    ));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut mode = rng.gen_range(0..*modes);
                let mut t = 0.0;
                let mut out = vec![(0.0, mode)];
                loop {
                    t += rng.gen_range(*min_dwell..=*max_dwell);
                    if t > horizon {
                        break;
                    }
                    if *modes > 1 {
                        let step = rng.gen_range(1..*modes);
                        mode = (mode + step) % modes;
                    }
                    out.push((t, mode));
                }
                Ok(out)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// systems

/// Jump map, possibly gated per block (interconnections) or varying with the
/// impulse index.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpRule {
    /// The same map at every impulse.
    Uniform(Vec<Polynomial>),
    /// Map `k mod len` at the `k`-th impulse (0-based).
    Sequence(Vec<Vec<Polynomial>>),
    /// Each gate rewrites its state indices at its own impulse times; all
    /// other indices are kept (identity).
    Gated(Vec<JumpGate>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpGate {
    pub indices: Vec<usize>,
    pub map: Vec<Polynomial>,
    pub schedule: ImpulseSchedule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedImpulsiveSystem {
    pub space: Arc<VarSpace>,
    pub modes: Vec<Vec<Polynomial>>,
    pub jump: JumpRule,
    pub schedule: ImpulseSchedule,
    /// State domain X. Simulation stops when the state leaves it.
    pub domain: SemialgebraicSet,
}

impl SwitchedImpulsiveSystem {
    pub fn new(
        space: &Arc<VarSpace>,
        modes: Vec<Vec<Polynomial>>,
        jump: JumpRule,
        schedule: ImpulseSchedule,
        domain: SemialgebraicSet,
    ) -> Result<Self, SystemError> {
        let sys = Self {
            space: space.clone(),
            modes,
            jump,
            schedule,
            domain,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        let n = self.dim();
        if self.modes.is_empty() {
            return Err(SystemError::NoModes);
        }
        let check_space = |p: &Polynomial, what: &str| {
            if p.space() != &self.space {
                Err(SystemError::WrongSpace(what.to_string()))
            } else {
                Ok(())
            }
        };
        for (k, f) in self.modes.iter().enumerate() {
            if f.len() != n {
                return Err(SystemError::ModeArity {
                    mode: k,
                    expected: n,
                    got: f.len(),
                });
            }
            for p in f {
                check_space(p, &format!("mode {k}"))?;
            }
        }
        let maps: Vec<(&Vec<Polynomial>, usize)> = match &self.jump {
            JumpRule::Uniform(g) => vec![(g, n)],
            JumpRule::Sequence(gs) => gs.iter().map(|g| (g, n)).collect(),
            JumpRule::Gated(gates) => gates.iter().map(|g| (&g.map, g.indices.len())).collect(),
        };
        for (g, expected) in maps {
            if g.len() != expected {
                return Err(SystemError::JumpArity {
                    expected,
                    got: g.len(),
                });
            }
            for p in g {
                check_space(p, "jump map")?;
            }
        }
        if self.domain.space != self.space {
            return Err(SystemError::WrongSpace("domain".into()));
        }
        self.schedule.validate(DEFAULT_DELTA)
    }

    pub fn field(&self, mode: usize, x: &[f64], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.modes[mode]) {
            *o = p.eval(x);
        }
    }

    /// State right after the `index`-th impulse at time `t`.
    pub fn apply_jump(&self, t: f64, index: usize, x: &[f64]) -> Vec<f64> {
        match &self.jump {
            JumpRule::Uniform(g) => g.iter().map(|p| p.eval(x)).collect(),
            JumpRule::Sequence(gs) => gs[index % gs.len()].iter().map(|p| p.eval(x)).collect(),
            JumpRule::Gated(gates) => {
                let mut y = x.to_vec();
                for gate in gates {
                    if gate.schedule.contains(t, 1e-9) {
                        for (&i, p) in gate.indices.iter().zip(&gate.map) {
                            y[i] = p.eval(x);
                        }
                    }
                }
                y
            }
        }
    }

    /// Jump maps as full substitution vectors, one per distinct jump that can
    /// occur (used by the SOS builders and the sampled checks).
    pub fn jump_maps(&self) -> Vec<Vec<Polynomial>> {
        let n = self.dim();
        match &self.jump {
            JumpRule::Uniform(g) => vec![g.clone()],
            JumpRule::Sequence(gs) => gs.clone(),
            JumpRule::Gated(gates) => {
                // every nonempty subset of simultaneously firing gates would
                // be exact; identical schedules fire together, so group them
                let mut groups: Vec<(ImpulseSchedule, Vec<&JumpGate>)> = Vec::new();
                for g in gates {
                    match groups.iter_mut().find(|(s, _)| *s == g.schedule) {
                        Some((_, v)) => v.push(g),
                        None => groups.push((g.schedule.clone(), vec![g])),
                    }
                }
                let ident: Vec<Polynomial> =
                    (0..n).map(|i| Polynomial::var(&self.space, i)).collect();
                if groups.len() == 1 {
                    let mut map = ident;
                    for g in &groups[0].1 {
                        for (&i, p) in g.indices.iter().zip(&g.map) {
                            map[i] = p.clone();
                        }
                    }
                    return vec![map];
                }
                let mut out = Vec::new();
                for mask in 1u64..(1 << groups.len().min(16)) {
                    let mut map = ident.clone();
                    for (k, (_, gs)) in groups.iter().enumerate() {
                        if mask & (1 << k) != 0 {
                            for g in gs {
                                for (&i, p) in g.indices.iter().zip(&g.map) {
                                    map[i] = p.clone();
                                }
                            }
                        }
                    }
                    out.push(map);
                }
                out
            }
        }
    }

    pub fn impulse_times(&self, t0: f64, t1: f64) -> Vec<f64> {
        match &self.jump {
            JumpRule::Gated(gates) => {
                let mut ts: Vec<f64> = gates
                    .iter()
                    .flat_map(|g| g.schedule.times_in(t0, t1))
                    .collect();
                ts.extend(self.schedule.times_in(t0, t1));
                ts.sort_by(f64::total_cmp);
                ts.dedup_by(|a, b| (*a - *b).abs() <= DEFAULT_DELTA);
                ts
            }
            _ => self.schedule.times_in(t0, t1),
        }
    }
}

// ---------------------------------------------------------------------------
// simulation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    None,
    Start,
    Switch,
    Impulse,
    Exit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub mode: usize,
    pub event: EventKind,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    /// The state left the domain; the trajectory ends at the exit point.
    pub exited: bool,
}

impl Trajectory {
    pub fn last(&self) -> Option<&TrajectoryPoint> {
        self.points.last()
    }

    /// Delimited text: `t,x0,...,x{n-1},mode,event`.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut s = String::from("t");
        for n in names {
            s.push(',');
            s.push_str(n);
        }
        s.push_str(",mode,event\n");
        for p in &self.points {
            let _ = write!(s, "{}", p.t);
            for v in &p.x {
                let _ = write!(s, ",{v}");
            }
            let ev = match p.event {
                EventKind::None => "",
                EventKind::Start => "start",
                EventKind::Switch => "switch",
                EventKind::Impulse => "impulse",
                EventKind::Exit => "exit",
            };
            let _ = writeln!(s, ",{},{}", p.mode, ev);
        }
        s
    }
}

fn rk4_step(f: &dyn Fn(&[f64], &mut [f64]), x: &mut [f64], h: f64, buf: &mut [Vec<f64>; 5]) {
    let n = x.len();
    let [k1, k2, k3, k4, tmp] = buf;
    f(x, k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    f(tmp, k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    f(tmp, k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    f(tmp, k4);
    for i in 0..n {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Sorted event list on `(0, horizon]`: `(time, is_impulse, new_mode)`.
fn event_times(
    impulses: &[f64],
    switches: &[(f64, usize)],
    horizon: f64,
) -> Vec<(f64, bool, Option<usize>)> {
    let mut ev: Vec<(f64, bool, Option<usize>)> =
        impulses.iter().map(|&t| (t, true, None)).collect();
    for &(t, m) in switches.iter().skip(1) {
        if t <= horizon {
            match ev.iter_mut().find(|e| (e.0 - t).abs() <= DEFAULT_DELTA) {
                Some(e) => e.2 = Some(m),
                None => ev.push((t, false, Some(m))),
            }
        }
    }
    ev.sort_by(|a, b| a.0.total_cmp(&b.0));
    ev
}

/// Generic event-aligned RK4 driver shared by the flat and wired simulators.
#[allow(clippy::too_many_arguments)]
fn integrate(
    n: usize,
    x0: &[f64],
    switches: &[(f64, usize)],
    impulses: &[f64],
    horizon: f64,
    step: f64,
    field: &dyn Fn(usize, &[f64], &mut [f64]),
    jump: &dyn Fn(f64, usize, &[f64]) -> Vec<f64>,
    inside: &dyn Fn(&[f64]) -> bool,
) -> Trajectory {
    let mut traj = Trajectory::default();
    let mut x = x0.to_vec();
    let mut mode = switches[0].1;
    let mut t = 0.0;
    traj.points.push(TrajectoryPoint {
        t,
        x: x.clone(),
        mode,
        event: EventKind::Start,
    });
    let mut buf: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    let mut impulse_index = 0;
    let mut events = event_times(impulses, switches, horizon);
    events.push((horizon, false, None));
    for (te, is_impulse, new_mode) in events {
        if te < t {
            continue;
        }
        let span = te - t;
        if span > 0.0 {
            let k = ((span / step) - 1e-9).ceil().max(1.0) as usize;
            let h = span / k as f64;
            let f = |y: &[f64], out: &mut [f64]| field(mode, y, out);
            for s in 1..=k {
                rk4_step(&f, &mut x, h, &mut buf);
                let ts = if s == k { te } else { t + s as f64 * h };
                let ok = inside(&x) && x.iter().all(|v| v.is_finite());
                traj.points.push(TrajectoryPoint {
                    t: ts,
                    x: x.clone(),
                    mode,
                    event: if ok { EventKind::None } else { EventKind::Exit },
                });
                if !ok {
                    traj.exited = true;
                    return traj;
                }
            }
            t = te;
        }
        if t >= horizon && !is_impulse && new_mode.is_none() {
            break;
        }
        let mut event = EventKind::None;
        if is_impulse {
            x = jump(t, impulse_index, &x);
            impulse_index += 1;
            event = EventKind::Impulse;
        }
        if let Some(m) = new_mode {
            mode = m;
            if event == EventKind::None {
                event = EventKind::Switch;
            }
        }
        if event != EventKind::None {
            let ok = inside(&x);
            traj.points.push(TrajectoryPoint {
                t,
                x: x.clone(),
                mode,
                event: if ok { event } else { EventKind::Exit },
            });
            if !ok {
                traj.exited = true;
                return traj;
            }
        }
    }
    traj
}

/// Classical RK4 between events; impulses apply `g` to the left limit and
/// the post-jump state is recorded at the impulse time.
pub fn simulate(
    sys: &SwitchedImpulsiveSystem,
    x0: &[f64],
    sigma: &SwitchingSignal,
    horizon: f64,
    step: f64,
) -> Result<Trajectory, SystemError> {
    if x0.len() != sys.dim() {
        return Err(SystemError::Dimension {
            expected: sys.dim(),
            got: x0.len(),
        });
    }
    if !(step > 0.0 && step.is_finite() && horizon >= 0.0 && horizon.is_finite()) {
        return Err(SystemError::BadStep);
    }
    let switches = sigma.realize(horizon)?;
    if let Some(&(_, m)) = switches.iter().find(|s| s.1 >= sys.mode_count()) {
        return Err(SystemError::BadSignal(format!("mode {m} out of range")));
    }
    let impulses = sys.impulse_times(0.0, horizon);
    Ok(integrate(
        sys.dim(),
        x0,
        &switches,
        &impulses,
        horizon,
        step,
        &|m, x, out| sys.field(m, x, out),
        &|t, k, x| sys.apply_jump(t, k, x),
        &|x| sys.domain.contains(x),
    ))
}

// ---------------------------------------------------------------------------
// interconnections

/// Sets attached to a subsystem, all over its local state space.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSets {
    /// `X_i`
    pub domain: SemialgebraicSet,
    pub initial: SemialgebraicSet,
    pub unsafe_set: SemialgebraicSet,
    /// Region on which the jump condition must hold: the projection of the
    /// closure of the global safe set onto this subsystem.
    pub jump_region: SemialgebraicSet,
}

/// One subsystem. Its dynamics live over `(x_i, ω_i)`: the first `n_i`
/// variables of `input_space` are the local state, the rest the stacked
/// neighbour states in the order of `neighbours`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsystem {
    pub name: String,
    pub state_space: Arc<VarSpace>,
    pub input_space: Arc<VarSpace>,
    pub neighbours: Vec<usize>,
    pub modes: Vec<Vec<Polynomial>>,
    pub jump: Vec<Polynomial>,
    pub schedule: ImpulseSchedule,
    pub sets: LocalSets,
}

impl Subsystem {
    pub fn dim(&self) -> usize {
        self.state_space.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.input_space.dim() - self.dim()
    }

    /// `M_i`
    pub fn neighbour_count(&self) -> usize {
        self.neighbours.len()
    }

    pub fn validate(&self, index: usize) -> Result<(), SystemError> {
        let n = self.dim();
        if self.modes.is_empty() {
            return Err(SystemError::NoModes);
        }
        if self.neighbours.contains(&index) {
            return Err(SystemError::SelfLoop { sub: index });
        }
        if self.input_space.names()[..n] != self.state_space.names()[..] {
            return Err(SystemError::WrongSpace(format!(
                "subsystem {index}: input space must start with the state variables"
            )));
        }
        for (k, f) in self.modes.iter().enumerate() {
            if f.len() != n {
                return Err(SystemError::ModeArity {
                    mode: k,
                    expected: n,
                    got: f.len(),
                });
            }
            if f.iter().any(|p| p.space() != &self.input_space) {
                return Err(SystemError::WrongSpace(format!(
                    "subsystem {index} mode {k}"
                )));
            }
        }
        if self.jump.len() != n {
            return Err(SystemError::JumpArity {
                expected: n,
                got: self.jump.len(),
            });
        }
        if self.jump.iter().any(|p| p.space() != &self.input_space) {
            return Err(SystemError::WrongSpace(format!(
                "subsystem {index} jump map"
            )));
        }
        for s in [
            &self.sets.domain,
            &self.sets.initial,
            &self.sets.unsafe_set,
            &self.sets.jump_region,
        ] {
            if s.space != self.state_space {
                return Err(SystemError::WrongSpace(format!("subsystem {index} sets")));
            }
        }
        self.schedule.validate(DEFAULT_DELTA)
    }

    /// Lifts a state-space polynomial to the input space.
    pub fn lift(&self, p: &Polynomial) -> Polynomial {
        let map: Vec<usize> = (0..self.dim()).collect();
        p.embed(&self.input_space, &map)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interconnection {
    pub subsystems: Vec<Subsystem>,
    pub mode_count: usize,
}

impl Interconnection {
    pub fn new(subsystems: Vec<Subsystem>, mode_count: usize) -> Result<Self, SystemError> {
        let ic = Self {
            subsystems,
            mode_count,
        };
        ic.validate()?;
        Ok(ic)
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.len() + 1);
        let mut acc = 0;
        off.push(0);
        for s in &self.subsystems {
            acc += s.dim();
            off.push(acc);
        }
        off
    }

    pub fn total_dim(&self) -> usize {
        self.subsystems.iter().map(Subsystem::dim).sum()
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        for (i, s) in self.subsystems.iter().enumerate() {
            s.validate(i)?;
            if s.modes.len() != self.mode_count {
                return Err(SystemError::ModeCount {
                    sub: i,
                    expected: self.mode_count,
                    got: s.modes.len(),
                });
            }
            let mut expected = 0;
            for &j in &s.neighbours {
                let nb = self
                    .subsystems
                    .get(j)
                    .ok_or(SystemError::UnknownNeighbour {
                        sub: i,
                        neighbour: j,
                    })?;
                expected += nb.dim();
            }
            if expected != s.input_dim() {
                return Err(SystemError::WiringDimension {
                    sub: i,
                    expected,
                    got: s.input_dim(),
                });
            }
        }
        Ok(())
    }

    /// Global variable index for each input-space variable of subsystem `i`.
    pub fn wiring(&self, i: usize) -> Vec<usize> {
        let off = self.offsets();
        let s = &self.subsystems[i];
        let mut map: Vec<usize> = (off[i]..off[i] + s.dim()).collect();
        for &j in &s.neighbours {
            map.extend(off[j]..off[j + 1]);
        }
        map
    }

    /// Global space named `<var>_<subsystem>`, or the local names when all
    /// are distinct already.
    pub fn global_space(&self) -> Arc<VarSpace> {
        let mut names: Vec<String> = Vec::new();
        for s in &self.subsystems {
            names.extend(s.state_space.names().iter().cloned());
        }
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() == names.len() {
            return VarSpace::new(names);
        }
        let mut names = Vec::new();
        for (i, s) in self.subsystems.iter().enumerate() {
            names.extend(
                s.state_space
                    .names()
                    .iter()
                    .map(|n| format!("{n}_{}", i + 1)),
            );
        }
        VarSpace::new(names)
    }

    /// Stacked global system: each `ω_i` is replaced by its neighbours'
    /// state blocks and `g_i` fires only at `Ω_i` (identity otherwise).
    pub fn flatten(&self) -> Result<SwitchedImpulsiveSystem, SystemError> {
        self.validate()?;
        let space = self.global_space();
        let off = self.offsets();
        let mut modes = vec![Vec::with_capacity(self.total_dim()); self.mode_count];
        let mut gates = Vec::new();
        for (i, s) in self.subsystems.iter().enumerate() {
            let map = self.wiring(i);
            for (p, f) in s.modes.iter().enumerate() {
                modes[p].extend(f.iter().map(|c| c.embed(&space, &map)));
            }
            if s.schedule != ImpulseSchedule::Never {
                gates.push(JumpGate {
                    indices: (off[i]..off[i + 1]).collect(),
                    map: s.jump.iter().map(|c| c.embed(&space, &map)).collect(),
                    schedule: s.schedule.clone(),
                });
            }
        }
        let domains: Vec<&SemialgebraicSet> =
            self.subsystems.iter().map(|s| &s.sets.domain).collect();
        let domain = SemialgebraicSet::product(&space, &domains);
        let schedule = match gates.first() {
            Some(g) if gates.iter().all(|h| h.schedule == g.schedule) => g.schedule.clone(),
            Some(_) => ImpulseSchedule::Never,
            None => ImpulseSchedule::Never,
        };
        let jump = if gates.len() == self.len() && gates.iter().all(|g| g.schedule == schedule) {
            let mut map = Vec::with_capacity(self.total_dim());
            for g in &gates {
                map.extend(g.map.iter().cloned());
            }
            JumpRule::Uniform(map)
        } else {
            JumpRule::Gated(gates)
        };
        SwitchedImpulsiveSystem::new(&space, modes, jump, schedule, domain)
    }

    /// Simulates the subsystems side by side, each reading its `ω_i` from the
    /// current neighbour states (no flattening involved).
    pub fn simulate_wired(
        &self,
        x0: &[f64],
        sigma: &SwitchingSignal,
        horizon: f64,
        step: f64,
    ) -> Result<Trajectory, SystemError> {
        let n = self.total_dim();
        if x0.len() != n {
            return Err(SystemError::Dimension {
                expected: n,
                got: x0.len(),
            });
        }
        if !(step > 0.0 && step.is_finite() && horizon >= 0.0 && horizon.is_finite()) {
            return Err(SystemError::BadStep);
        }
        let switches = sigma.realize(horizon)?;
        let off = self.offsets();
        let wiring: Vec<Vec<usize>> = (0..self.len()).map(|i| self.wiring(i)).collect();
        let gather =
            |i: usize, x: &[f64]| -> Vec<f64> { wiring[i].iter().map(|&k| x[k]).collect() };
        let field = |m: usize, x: &[f64], out: &mut [f64]| {
            for (i, s) in self.subsystems.iter().enumerate() {
                let local = gather(i, x);
                for (k, p) in s.modes[m].iter().enumerate() {
                    out[off[i] + k] = p.eval(&local);
                }
            }
        };
        let jump = |t: f64, _k: usize, x: &[f64]| -> Vec<f64> {
            let mut y = x.to_vec();
            for (i, s) in self.subsystems.iter().enumerate() {
                if s.schedule.contains(t, 1e-9) {
                    let local = gather(i, x);
                    for (k, p) in s.jump.iter().enumerate() {
                        y[off[i] + k] = p.eval(&local);
                    }
                }
            }
            y
        };
        let inside = |x: &[f64]| {
            self.subsystems
                .iter()
                .enumerate()
                .all(|(i, s)| s.sets.domain.contains(&x[off[i]..off[i + 1]]))
        };
        let mut impulses: Vec<f64> = self
            .subsystems
            .iter()
            .flat_map(|s| s.schedule.times_in(0.0, horizon))
            .collect();
        impulses.sort_by(f64::total_cmp);
        impulses.dedup_by(|a, b| (*a - *b).abs() <= DEFAULT_DELTA);
        Ok(integrate(
            n, x0, &switches, &impulses, horizon, step, &field, &jump, &inside,
        ))
    }
}

/// Convenience: `c − Σ x_k²` over the given variables.
pub fn ball(
    space: &Arc<VarSpace>,
    vars: impl IntoIterator<Item = usize>,
    radius_sq: f64,
) -> Polynomial {
    &Polynomial::constant(space, radius_sq) - &Polynomial::squared_norm(space, vars)
}

/// Convenience: `c + Σ coef·x_k` linear polynomial.
pub fn affine(space: &Arc<VarSpace>, constant: f64, linear: &[(usize, f64)]) -> Polynomial {
    Polynomial::from_terms(
        space,
        std::iter::once((Monomial::one(), constant))
            .chain(linear.iter().map(|&(v, c)| (Monomial::var(v), c))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sir_space() -> Arc<VarSpace> {
        VarSpace::new(["S", "I", "R"])
    }

    #[test]
    fn membership_examples() {
        let sp = sir_space();
        let x0 = SemialgebraicSet::basic(&sp, vec![SetConstraint::nonneg(ball(&sp, 0..3, 1.0))]);
        assert!(x0.contains(&[0.0, 0.0, 0.0]));
        let unsafe_set = SemialgebraicSet::basic(
            &sp,
            vec![
                SetConstraint::nonneg(ball(&sp, 0..3, 100.0)),
                SetConstraint::nonpos(affine(&sp, 5.0, &[(1, -1.0)])),
            ],
        );
        assert!(unsafe_set.contains(&[0.0, 6.0, 0.0]));
        assert!(!unsafe_set.contains(&[0.0, 200.0, 0.0]));
    }

    #[test]
    fn samples_stay_in_set_and_repeat() {
        let sp = sir_space();
        let unit = SemialgebraicSet::basic(&sp, vec![SetConstraint::nonneg(ball(&sp, 0..3, 1.0))]);
        let pts = unit.sample(100, 3).unwrap();
        assert_eq!(pts.len(), 100);
        assert!(pts
            .iter()
            .all(|p| p.iter().map(|v| v * v).sum::<f64>() <= 1.0));
        let unsafe_set = SemialgebraicSet::basic(
            &sp,
            vec![
                SetConstraint::nonneg(ball(&sp, 0..3, 100.0)),
                SetConstraint::nonpos(affine(&sp, 5.0, &[(1, -1.0)])),
            ],
        );
        let a = unsafe_set.sample(50, 11).unwrap();
        assert_eq!(a, unsafe_set.sample(50, 11).unwrap());
        assert!(a.iter().all(|p| unsafe_set.contains(p)));
    }

    #[test]
    fn empty_set_is_rejected() {
        let sp = sir_space();
        let empty = SemialgebraicSet::basic(
            &sp,
            vec![
                SetConstraint::nonneg(ball(&sp, 0..3, 1.0)),
                SetConstraint::nonneg(Polynomial::constant(&sp, -1.0)),
            ],
        );
        assert!(matches!(
            empty.sample(10, 0),
            Err(SampleError::Degenerate { .. })
        ));
    }

    #[test]
    fn impulse_schedule_enforces_gap() {
        assert!(ImpulseSchedule::explicit(vec![1.0, 1.0], DEFAULT_DELTA).is_err());
        assert!(ImpulseSchedule::explicit(vec![1.0, 2.0], DEFAULT_DELTA).is_ok());
        let p = ImpulseSchedule::periodic(10.0).unwrap();
        assert_eq!(p.times_in(0.0, 30.0), vec![10.0, 20.0, 30.0]);
        assert!(ImpulseSchedule::periodic(0.0).is_err());
    }

    fn decay_system(
        mu: f64,
        schedule: ImpulseSchedule,
        jump: Vec<Polynomial>,
    ) -> SwitchedImpulsiveSystem {
        let sp = sir_space();
        let f: Vec<Polynomial> = (0..3).map(|i| Polynomial::var(&sp, i).scale(-mu)).collect();
        SwitchedImpulsiveSystem::new(
            &sp,
            vec![f],
            JumpRule::Uniform(jump),
            schedule,
            SemialgebraicSet::everything(&sp),
        )
        .unwrap()
    }

    fn vaccination(sp: &Arc<VarSpace>, p: f64) -> Vec<Polynomial> {
        vec![
            Polynomial::var(sp, 0).scale(1.0 - p),
            Polynomial::var(sp, 1),
            &Polynomial::var(sp, 2) + &Polynomial::var(sp, 0).scale(p),
        ]
    }

    #[test]
    fn exponential_decay_matches_analytic() {
        let sp = sir_space();
        let ident: Vec<Polynomial> = (0..3).map(|i| Polynomial::var(&sp, i)).collect();
        let sys = decay_system(0.01, ImpulseSchedule::Never, ident);
        let tr = simulate(
            &sys,
            &[1.0, 0.0, 0.0],
            &SwitchingSignal::constant(0),
            10.0,
            0.01,
        )
        .unwrap();
        let end = tr.last().unwrap();
        assert_eq!(end.t, 10.0);
        assert!((end.x[0] - (-0.1f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn pure_jump_moves_susceptibles() {
        let sp = sir_space();
        let sys = decay_system(
            0.0,
            ImpulseSchedule::periodic(1.0).unwrap(),
            vaccination(&sp, 0.8),
        );
        let tr = simulate(
            &sys,
            &[1.0, 0.5, 0.0],
            &SwitchingSignal::constant(0),
            1.0,
            0.1,
        )
        .unwrap();
        let end = tr.last().unwrap();
        assert_eq!(end.event, EventKind::Impulse);
        let want = [0.2, 0.5, 0.8];
        for k in 0..3 {
            assert!((end.x[k] - want[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_dynamics_stay_constant() {
        let sp = sir_space();
        let sys = SwitchedImpulsiveSystem::new(
            &sp,
            vec![vec![Polynomial::zero(&sp); 3]],
            JumpRule::Uniform((0..3).map(|i| Polynomial::var(&sp, i)).collect()),
            ImpulseSchedule::Never,
            SemialgebraicSet::everything(&sp),
        )
        .unwrap();
        let tr = simulate(
            &sys,
            &[1.0, 2.0, 3.0],
            &SwitchingSignal::constant(0),
            5.0,
            0.5,
        )
        .unwrap();
        assert!(tr.points.iter().all(|p| p.x == vec![1.0, 2.0, 3.0]));
    }

    #[test]
    fn exit_truncates() {
        let sp = VarSpace::new(["x"]);
        let sys = SwitchedImpulsiveSystem::new(
            &sp,
            vec![vec![Polynomial::constant(&sp, 1.0)]],
            JumpRule::Uniform(vec![Polynomial::var(&sp, 0)]),
            ImpulseSchedule::Never,
            SemialgebraicSet::basic(&sp, vec![SetConstraint::nonneg(ball(&sp, [0], 1.0))]),
        )
        .unwrap();
        let tr = simulate(&sys, &[0.0], &SwitchingSignal::constant(0), 5.0, 0.1).unwrap();
        assert!(tr.exited);
        assert_eq!(tr.last().unwrap().event, EventKind::Exit);
        assert!(tr.last().unwrap().t < 1.2);
    }

    #[test]
    fn random_signal_respects_dwell() {
        let sig = SwitchingSignal::Random {
            seed: 5,
            modes: 2,
            min_dwell: 1.0,
            max_dwell: 3.0,
        };
        let sw = sig.realize(100.0).unwrap();
        assert_eq!(sw, sig.realize(100.0).unwrap());
        for w in sw.windows(2) {
            assert!(w[1].0 - w[0].0 >= 1.0);
            assert_ne!(w[1].1, w[0].1);
        }
    }

    fn linear_pair() -> Interconnection {
        let mk = |name: &str| {
            let st = VarSpace::new([name.to_string()]);
            let inp = VarSpace::new([name.to_string(), "w".to_string()]);
            let f = &Polynomial::var(&inp, 0).scale(-1.0) + &Polynomial::var(&inp, 1).scale(0.5);
            let domain = SemialgebraicSet::everything(&st);
            Subsystem {
                name: name.into(),
                state_space: st.clone(),
                input_space: inp.clone(),
                neighbours: vec![],
                modes: vec![vec![f]],
                jump: vec![Polynomial::var(&inp, 0)],
                schedule: ImpulseSchedule::Never,
                sets: LocalSets {
                    domain: domain.clone(),
                    initial: domain.clone(),
                    unsafe_set: domain.clone(),
                    jump_region: domain,
                },
            }
        };
        let mut a = mk("x1");
        let mut b = mk("x2");
        a.neighbours = vec![1];
        b.neighbours = vec![0];
        Interconnection::new(vec![a, b], 1).unwrap()
    }

    #[test]
    fn flatten_linear_pair() {
        let sys = linear_pair().flatten().unwrap();
        let sp = &sys.space;
        let f = &sys.modes[0];
        let c = |p: &Polynomial, v: usize| p.coefficient(&Monomial::var(v));
        assert_eq!((c(&f[0], 0), c(&f[0], 1)), (-1.0, 0.5));
        assert_eq!((c(&f[1], 0), c(&f[1], 1)), (0.5, -1.0));
        assert_eq!(sp.names(), &["x1".to_string(), "x2".to_string()]);
    }

    #[test]
    fn flatten_matches_wired_simulation() {
        let ic = linear_pair();
        let sys = ic.flatten().unwrap();
        let sig = SwitchingSignal::constant(0);
        let a = simulate(&sys, &[1.0, -2.0], &sig, 5.0, 0.01).unwrap();
        let b = ic.simulate_wired(&[1.0, -2.0], &sig, 5.0, 0.01).unwrap();
        assert_eq!(a.points.len(), b.points.len());
        for (p, q) in a.points.iter().zip(&b.points) {
            for (u, v) in p.x.iter().zip(&q.x) {
                assert!((u - v).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn wiring_errors_are_reported() {
        let mut ic = linear_pair();
        ic.subsystems[0].neighbours = vec![0];
        assert_eq!(ic.validate(), Err(SystemError::SelfLoop { sub: 0 }));
        let mut ic = linear_pair();
        ic.subsystems[0].neighbours = vec![5];
        assert_eq!(
            ic.validate(),
            Err(SystemError::UnknownNeighbour {
                sub: 0,
                neighbour: 5
            })
        );
    }
}
