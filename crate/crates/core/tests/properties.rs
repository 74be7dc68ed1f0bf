mod common;

use common::{random_feasible_sdp, sos_status, SyntheticNetwork};
use compbarrier::compose::{
    build_gain, compose_max, compose_sum, eigen_residuals, perron_eigenvectors, SquareMatrix,
};
use compbarrier::polynomial::{Monomial, Polynomial, VarSpace};
use compbarrier::sdp::{min_eigenvalue, solve, SdpStatus, Tolerances};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn space3() -> std::sync::Arc<VarSpace> {
    VarSpace::new(["a", "b", "c"])
}

fn poly() -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((prop::collection::vec(0u32..3, 3), -5.0f64..5.0), 0..6).prop_map(
        |terms| {
            Polynomial::from_terms(
                &space3(),
                terms
                    .into_iter()
                    .map(|(e, c)| (Monomial::from_dense(&e), c)),
            )
        },
    )
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 3)
}

fn close(p: &Polynomial, q: &Polynomial) -> bool {
    (p - q).max_abs_coefficient() <= 1e-9 * (1.0 + p.max_abs_coefficient())
}

proptest! {
    #[test]
    fn addition_is_commutative_and_associative(p in poly(), q in poly(), r in poly()) {
        prop_assert_eq!(&p + &q, &q + &p);
        prop_assert!(close(&(&(&p + &q) + &r), &(&p + &(&q + &r))));
    }

    #[test]
    fn multiplication_distributes(p in poly(), q in poly(), r in poly()) {
        prop_assert!(close(&(&p * &q), &(&q * &p)));
        prop_assert!(close(&(&p * &(&q + &r)), &(&(&p * &q) + &(&p * &r))));
        prop_assert!(close(&(&(&p * &q) * &r), &(&p * &(&q * &r))));
    }

    #[test]
    fn identities_and_inverses(p in poly()) {
        let one = Polynomial::constant(&space3(), 1.0);
        let zero = Polynomial::zero(&space3());
        prop_assert_eq!(&p * &one, p.clone());
        prop_assert_eq!(&p + &zero, p.clone());
        prop_assert!((&p - &p).is_zero());
        prop_assert!((&p + &(-&p)).is_zero());
    }

    #[test]
    fn evaluation_is_a_ring_homomorphism(p in poly(), q in poly(), x in point()) {
        let tol = 1e-9 * (1.0 + p.eval(&x).abs() * q.eval(&x).abs() + p.eval(&x).abs() + q.eval(&x).abs());
        prop_assert!(((&p * &q).eval(&x) - p.eval(&x) * q.eval(&x)).abs() <= tol);
        prop_assert!(((&p + &q).eval(&x) - p.eval(&x) - q.eval(&x)).abs() <= tol);
    }

    #[test]
    fn gradient_matches_finite_differences(p in poly(), x in point()) {
        let h = 1e-5;
        for (k, g) in p.gradient().iter().enumerate() {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (p.eval(&up) - p.eval(&dn)) / (2.0 * h);
            let exact = g.eval(&x);
            prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()), "d/dx{}: {} vs {}", k, fd, exact);
        }
    }

    #[test]
    fn lie_derivative_is_gradient_dot_field(p in poly(), f0 in poly(), f1 in poly(), f2 in poly(), x in point()) {
        let f = [f0, f1, f2];
        let lie = p.lie_derivative(&f).eval(&x);
        let dot: f64 = p.gradient().iter().zip(&f).map(|(g, fk)| g.eval(&x) * fk.eval(&x)).sum();
        prop_assert!((lie - dot).abs() <= 1e-8 * (1.0 + dot.abs()));
    }

    #[test]
    fn composition_agrees_with_evaluation(p in poly(), q in poly(), x in point()) {
        let sp = space3();
        let c = p.compose_all(&[Polynomial::var(&sp, 0), q.clone(), Polynomial::var(&sp, 2)]).unwrap();
        let mut y = x.clone();
        y[1] = q.eval(&x);
        prop_assert!((c.eval(&x) - p.eval(&y)).abs() <= 1e-8 * (1.0 + p.eval(&y).abs()));
    }
}

#[test]
fn feasible_sdps_pass_residual_and_psd_post_checks() {
    let tol = Tolerances::default();
    for seed in 0..20 {
        let p = random_feasible_sdp(seed);
        let sol = solve(&p, &tol).unwrap();
        assert_eq!(
            sol.status,
            SdpStatus::Feasible,
            "seed {seed}: {}",
            sol.message
        );
        let scale = 1.0 + p.constraints.iter().fold(0.0f64, |a, c| a.max(c.rhs.abs()));
        let worst = p
            .residual_vector(&sol.blocks, &sol.free)
            .iter()
            .fold(0.0f64, |a, r| a.max(r.abs()));
        assert!(
            worst / scale <= tol.residual,
            "seed {seed}: residual {worst}"
        );
        for b in &sol.blocks {
            assert!(min_eigenvalue(b.as_ref()) >= -tol.eig, "seed {seed}");
        }
    }
}

#[test]
fn sos_oracle_corpus() {
    let x = VarSpace::new(["x"]);
    let m = |e: &[u32]| Monomial::from_dense(e);
    let sq = Polynomial::from_terms(&x, [(m(&[0]), 1.0), (m(&[1]), 2.0), (m(&[2]), 1.0)]);
    assert_eq!(sos_status(&sq), SdpStatus::Feasible);
    let neg = Polynomial::from_terms(&x, [(m(&[0]), -1.0), (m(&[2]), 1.0)]);
    assert_eq!(sos_status(&neg), SdpStatus::Infeasible);
    let xy = VarSpace::new(["x", "y"]);
    let motzkin = Polynomial::from_terms(
        &xy,
        [
            (m(&[4, 2]), 1.0),
            (m(&[2, 4]), 1.0),
            (m(&[2, 2]), -3.0),
            (m(&[0, 0]), 1.0),
        ],
    );
    assert_eq!(sos_status(&motzkin), SdpStatus::Infeasible);
    // a strictly positive SOS in two variables
    let p = Polynomial::from_terms(
        &xy,
        [
            (m(&[2, 0]), 2.0),
            (m(&[1, 1]), 2.0),
            (m(&[0, 2]), 3.0),
            (m(&[0, 0]), 1.0),
        ],
    );
    assert_eq!(sos_status(&p), SdpStatus::Feasible);
}

#[test]
fn perron_vectors_are_eigenvectors_and_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let n = rng.gen_range(2..8);
        let mut a = SquareMatrix::zeros(n);
        for i in 0..n {
            // ring edges keep the matrix irreducible
            a.set(i, (i + 1) % n, rng.gen_range(0.01..1.0));
            for j in 0..n {
                if i != j && rng.gen_bool(0.3) {
                    a.set(i, j, rng.gen_range(0.0..1.0));
                }
            }
        }
        let (k, nu, v, mu) = perron_eigenvectors(&a).unwrap();
        assert!(k.iter().chain(&v).all(|&e| e > 0.0));
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((v.iter().map(|e| e * e).sum::<f64>() - 1.0).abs() < 1e-12);
        let av = a.mul_vec(&v);
        let atk = a.transpose().mul_vec(&k);
        for i in 0..n {
            assert!((av[i] - mu * v[i]).abs() <= 1e-10);
            assert!((atk[i] - nu * k[i]).abs() <= 1e-10);
        }
        assert!((nu - mu).abs() <= 1e-9 * mu);
    }
}

#[test]
fn gain_structures_have_small_eigen_residuals() {
    for seed in 0..20 {
        let net = SyntheticNetwork::ring(3 + seed as usize % 5, seed);
        let g = build_gain(&net.certs).unwrap();
        let (rk, rv) = eigen_residuals(&g);
        assert!(rk <= 1e-10 && rv <= 1e-10, "seed {seed}: {rk} {rv}");
    }
}

#[test]
fn composed_barriers_satisfy_the_decay_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..4 {
        let net = SyntheticNetwork::ring(4 + seed as usize, seed);
        let g = build_gain(&net.certs).unwrap();
        let sum = compose_sum(&net.certs, &g, &net.space).unwrap();
        let max = compose_max(&net.certs, &g, &net.space).unwrap();
        let n = net.certs.len();
        let mut ties = 0;
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let f = net.field(&x);
            let lhs = sum.lie(&f, &x);
            let rhs = sum.lambda_eff * sum.eval(&x);
            assert!(lhs <= rhs + 1e-8, "sum form at {x:?}: {lhs} > {rhs}");
            if max.eval_max(&x).unique {
                let lhs = max.lie(&f, &x);
                let rhs = max.lambda_eff * max.eval(&x);
                assert!(lhs <= rhs + 1e-8, "max form at {x:?}: {lhs} > {rhs}");
            } else {
                ties += 1;
            }
        }
        assert!(ties < 10, "{ties} ties");
    }
}

#[test]
fn composed_barriers_do_not_increase_at_jumps() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let net = SyntheticNetwork::ring(5, 3);
    let g = build_gain(&net.certs).unwrap();
    let sum = compose_sum(&net.certs, &g, &net.space).unwrap();
    let max = compose_max(&net.certs, &g, &net.space).unwrap();
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let gx = net.jump(&x);
        assert!(sum.eval(&gx) <= sum.eval(&x) + 1e-12);
        assert!(max.eval(&gx) <= max.eval(&x) + 1e-12);
    }
}

#[test]
fn max_form_sign_and_argmax_are_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = SyntheticNetwork::ring(4, 1);
    let g = build_gain(&net.certs).unwrap();
    let max = compose_max(&net.certs, &g, &net.space).unwrap();
    let mut scaled = max.clone();
    scaled.weights.iter_mut().for_each(|w| *w *= 7.5);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (a, b) = (max.eval_max(&x), scaled.eval_max(&x));
        assert_eq!(a.argmax, b.argmax);
        assert_eq!(a.value.signum(), b.value.signum());
    }
}
