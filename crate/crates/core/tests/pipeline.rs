mod common;

use compbarrier::compose::CompositionForm;
use compbarrier::sir::{
    product_unsafe_sets, ring_adjacent, ring_params, sir_interconnection, union_unsafe_sets,
    Balance, SirParams,
};
use compbarrier::sos::LocalConstants;
use compbarrier::synth::{
    benchmark, compose, generate_ring_instance, synthesize_global, synthesize_local, SolveStatus,
    SynthesisParams,
};
use compbarrier::verify::{
    check_global_barrier, check_local_certificate, Verdict, VerificationConfig,
};

fn three_patch() -> compbarrier::system::Interconnection {
    sir_interconnection(&SirParams::paper_m3()).unwrap()
}

#[test]
fn three_patch_certificates_are_feasible_and_verified() {
    let ic = three_patch();
    let res = synthesize_local(&ic, &SynthesisParams::default()).unwrap();
    let cfg = VerificationConfig::default();
    for (i, (c, o)) in res
        .certificates
        .iter()
        .zip(&res.report.subsystems)
        .enumerate()
    {
        assert_eq!(o.status, SolveStatus::Success);
        assert!(o.primal_residual < 1e-5);
        let c = c.as_ref().unwrap();
        assert_eq!(c.barrier.degree(), 2);
        let rep = check_local_certificate(c, &ic, i, &cfg).unwrap();
        assert!(rep.passed(), "{}", rep.render_text());
        assert_eq!(rep.conditions.len(), 6);
    }
    let b = res.barrier.unwrap();
    assert_eq!(b.form, CompositionForm::Max);
    for (comp, v) in b.components.iter().zip(&b.weights) {
        assert!(comp.eval(&[0.0; 9]) / v < 0.0);
    }
    let rep =
        check_global_barrier(&b, &ic.flatten().unwrap(), &union_unsafe_sets(&ic), &cfg).unwrap();
    assert!(rep.passed(), "{}", rep.render_text());
    assert!(rep.tie_skip_rate < 1e-3);
}

#[test]
fn decay_rate_direction() {
    let ic = three_patch();
    let with_lambda = |lambda: f64| SynthesisParams {
        constants: vec![LocalConstants {
            lambda,
            ..Default::default()
        }],
        ..Default::default()
    };
    // the disease-free equilibrium sits in the initial set, so a non-negative rate cannot certify
    for lambda in [1.0, -1.0] {
        let res = synthesize_local(&ic, &with_lambda(lambda)).unwrap();
        for s in &res.report.subsystems {
            assert_eq!(
                s.status,
                SolveStatus::Infeasible,
                "lambda {lambda}: {}",
                s.message
            );
            assert!(s.failing_constraint.is_some());
        }
        assert!(res.barrier.is_none());
    }
    for lambda in [1e6, -1e6] {
        let res = synthesize_local(&ic, &with_lambda(lambda)).unwrap();
        assert!(res
            .report
            .subsystems
            .iter()
            .all(|s| s.status != SolveStatus::Success));
        assert!(res.barrier.is_none());
    }
    let ok = synthesize_local(&ic, &with_lambda(-0.1)).unwrap();
    assert!(ok.report.all_succeeded());
}

#[test]
fn single_uncoupled_patch_verifies_as_a_global_barrier() {
    let ic = sir_interconnection(&SirParams::template(1)).unwrap();
    let res = synthesize_local(&ic, &SynthesisParams::default()).unwrap();
    let cert = res.certificates[0].clone().unwrap();
    assert!(!cert.growth_required);
    let cfg = VerificationConfig::default();
    let local = check_local_certificate(&cert, &ic, 0, &cfg).unwrap();
    assert_eq!(local.condition("growth").unwrap().verdict, Verdict::Skipped);
    assert!(local.passed());
    let b = res.barrier.unwrap();
    assert_eq!(b.form, CompositionForm::Single);
    let rep =
        check_global_barrier(&b, &ic.flatten().unwrap(), &product_unsafe_sets(&ic), &cfg).unwrap();
    assert!(rep.passed(), "{}", rep.render_text());
}

#[test]
fn shifted_barrier_fails_on_the_initial_set() {
    let ic = three_patch();
    let res = synthesize_local(&ic, &SynthesisParams::default()).unwrap();
    let mut cert = res.certificates[0].clone().unwrap();
    let shift =
        compbarrier::polynomial::Polynomial::constant(cert.barrier.space(), 1e4 / 0.57 * 10.0);
    cert.barrier = &cert.barrier + &shift;
    let rep = check_local_certificate(&cert, &ic, 0, &VerificationConfig::default()).unwrap();
    let init = rep.condition("initial").unwrap();
    assert_eq!(init.verdict, Verdict::Counterexample);
    let x = init.counterexample.as_ref().unwrap();
    assert!(cert.barrier.eval(x) > 0.0);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let ic = three_patch();
    let probes: Vec<Vec<f64>> = ic
        .global_space()
        .dim()
        .eq(&9)
        .then(|| {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
            (0..100)
                .map(|_| (0..9).map(|_| rng.gen_range(-5.0..5.0)).collect())
                .collect()
        })
        .unwrap();
    let run = |workers| {
        let p = SynthesisParams {
            workers,
            ..Default::default()
        };
        synthesize_local(&ic, &p).unwrap()
    };
    let a = run(1);
    let b = run(4);
    let (ba, bb) = (a.barrier.unwrap(), b.barrier.unwrap());
    for x in &probes {
        assert!((ba.eval(x) - bb.eval(x)).abs() <= 1e-6);
    }
    let statuses = |r: &compbarrier::synth::SynthesisReport| {
        r.subsystems.iter().map(|s| s.status).collect::<Vec<_>>()
    };
    assert_eq!(statuses(&a.report), statuses(&b.report));
}

#[test]
fn ring_instances_follow_the_ring_rule() {
    let p4 = ring_params(4, 9, Balance::Columns).unwrap();
    for mat in [&p4.a, &p4.b, &p4.c] {
        assert_eq!(mat[0][2], 0.0);
        assert_eq!(mat[2][0], 0.0);
        assert_eq!(mat[1][3], 0.0);
        for j in 0..4 {
            let col: f64 = (0..4).map(|i| mat[i][j]).sum();
            assert!(col.abs() <= 1e-15, "column {j} sums to {col}");
        }
    }
    let p3 = ring_params(3, 9, Balance::Columns).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                assert!(ring_adjacent(i, j, 3));
                assert!(p3.a[i][j] > 0.0 && p3.b[i][j] > 0.0 && p3.c[i][j] > 0.0);
            }
        }
    }
    assert_eq!(
        generate_ring_instance(5, 3).unwrap(),
        generate_ring_instance(5, 3).unwrap()
    );
    assert_ne!(
        generate_ring_instance(5, 3).unwrap(),
        generate_ring_instance(5, 4).unwrap()
    );
    assert!(generate_ring_instance(2, 1).is_err());
}

#[test]
fn global_program_on_a_small_ring() {
    let ic = generate_ring_instance(3, 2).unwrap();
    let sys = ic.flatten().unwrap();
    let sets = product_unsafe_sets(&ic);
    let res = synthesize_global(&sys, &sets, &SynthesisParams::default()).unwrap();
    let g = res.report.global.as_ref().unwrap();
    assert_eq!(g.status, SolveStatus::Success, "{}", g.message);
    assert!(g.primal_residual < 1e-5);
    let rep = check_global_barrier(
        &res.barrier.unwrap(),
        &sys,
        &sets,
        &VerificationConfig::default(),
    )
    .unwrap();
    assert!(rep.passed(), "{}", rep.render_text());

    // the compositional path on the same instance, sum form
    let local = synthesize_local(
        &ic,
        &SynthesisParams {
            form: CompositionForm::Sum,
            ..Default::default()
        },
    )
    .unwrap();
    let certs = local.complete().unwrap();
    let (_, sum) = compose(&ic, &certs, CompositionForm::Sum).unwrap();
    let rep = check_global_barrier(&sum, &sys, &sets, &VerificationConfig::default()).unwrap();
    assert!(rep.passed(), "{}", rep.render_text());
}

#[test]
fn union_unsafe_set_is_rejected_by_the_global_path() {
    let ic = three_patch();
    let err = synthesize_global(
        &ic.flatten().unwrap(),
        &union_unsafe_sets(&ic),
        &SynthesisParams::default(),
    )
    .unwrap_err()
    .to_string();
    assert!(err.contains("maximum"), "{err}");
}

#[test]
fn benchmark_is_repeatable() {
    let params = SynthesisParams::default();
    let a = benchmark(&[3], &[4], &params).unwrap();
    let b = benchmark(&[3], &[4], &params).unwrap();
    assert_eq!(a.rows.len(), 1);
    let key = |t: &compbarrier::synth::BenchmarkTable| {
        t.runs
            .iter()
            .map(|r| (r.used_seed, r.local_ok, r.global_status))
            .collect::<Vec<_>>()
    };
    assert_eq!(key(&a), key(&b));
    let csv = a.render_csv();
    assert_eq!(
        csv.lines().next().unwrap(),
        "M,dimension,path,mean_seconds,std_seconds,successes"
    );
    assert_eq!(csv.lines().count(), 3);
}
