#![allow(dead_code)]

use compbarrier::compose::LocalCertificate;
use compbarrier::polynomial::{Monomial, Polynomial, VarSpace};
use compbarrier::sdp::{solve, SdpConstraint, SdpEntry, SdpProblem, SdpStatus, Tolerances};
use compbarrier::sos::{AffinePoly, SosProgram};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scalar subsystems `ẋ_i = (λ_i/2) x_i − x_i³` with `B_i = x_i² − 1` on a
/// ring. Their decrease condition holds by construction:
/// `∇B_i f_i ≤ λ_i B_i + Σ_j γ_ij B_j` whenever `Σ_j γ_ij < −λ_i`.
pub struct SyntheticNetwork {
    pub certs: Vec<LocalCertificate>,
    pub lambdas: Vec<f64>,
    pub space: std::sync::Arc<VarSpace>,
}

impl SyntheticNetwork {
    pub fn ring(m: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let local = VarSpace::new(["x"]);
        let b = Polynomial::from_terms(
            &local,
            [(Monomial::from_dense(&[2]), 1.0), (Monomial::one(), -1.0)],
        );
        let mut certs = Vec::with_capacity(m);
        let mut lambdas = Vec::with_capacity(m);
        for i in 0..m {
            let lambda = -rng.gen_range(0.5..1.5);
            lambdas.push(lambda);
            certs.push(LocalCertificate {
                barrier: b.clone(),
                lambda,
                eps1: 0.0,
                eps2: 0.0,
                alpha: rng.gen_range(0.05..0.2),
                c: rng.gen_range(0.05..0.2),
                l: 1.0,
                neighbours: vec![(i + m - 1) % m, (i + 1) % m],
                mode_count: 1,
                growth_required: true,
            });
        }
        Self {
            certs,
            lambdas,
            space: VarSpace::indexed("x", m),
        }
    }

    pub fn field(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.lambdas)
            .map(|(v, l)| 0.5 * l * v - v * v * v)
            .collect()
    }

    pub fn jump(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| 0.5 * v).collect()
    }
}

/// Probe points for comparing certificates: the origin, points on the
/// boundary of the initial ball and points in the unsafe region.
pub fn sir_probe_points() -> Vec<[f64; 3]> {
    vec![
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, -1.0, 0.0],
        [-0.6, 0.64, 0.48],
        [0.0, 5.0, 0.0],
        [0.0, 8.0, 0.0],
        [2.0, 6.0, 1.0],
        [-3.0, 5.0, 3.0],
    ]
}

/// Random feasible SDP: `b = A(X0)` for a strictly feasible `X0`.
pub fn random_feasible_sdp(seed: u64) -> SdpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = [3usize, 2];
    let mut x0 = Vec::new();
    for &n in &sizes {
        let r: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                m[i][j] =
                    (0..n).map(|k| r[i][k] * r[j][k]).sum::<f64>() + if i == j { 0.5 } else { 0.0 };
            }
        }
        x0.push(m);
    }
    let mut p = SdpProblem::new(sizes.to_vec(), 1);
    for _ in 0..5 {
        let mut entries = Vec::new();
        let mut rhs = 0.0;
        for (b, &n) in sizes.iter().enumerate() {
            for i in 0..n {
                for j in i..n {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    entries.push(SdpEntry::new(b, i, j, v));
                    rhs += if i == j {
                        v * x0[b][i][i]
                    } else {
                        2.0 * v * x0[b][i][j]
                    };
                }
            }
        }
        let fv: f64 = rng.gen_range(-1.0..1.0);
        let free_val = 0.3;
        p.add_constraint(SdpConstraint {
            entries,
            free: vec![(0, fv)],
            rhs: rhs + fv * free_val,
            label: String::new(),
        });
    }
    p
}

/// Status of the plain SOS feasibility problem for `p`.
pub fn sos_status(p: &Polynomial) -> SdpStatus {
    let mut prog = SosProgram::new();
    prog.add_constraint("p", AffinePoly::from_poly(p), None)
        .unwrap();
    solve(&prog.assemble().unwrap(), &Tolerances::default())
        .unwrap()
        .status
}
