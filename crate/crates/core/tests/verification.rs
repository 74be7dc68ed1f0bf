use std::sync::Arc;

use compbarrier::compose::GlobalBarrier;
use compbarrier::polynomial::{Polynomial, VarSpace};
use compbarrier::sir::{sir_interconnection, union_unsafe_sets, SirParams};
use compbarrier::sos::{GlobalSets, SafeRegion, UnsafeRegion};
use compbarrier::synth::{synthesize_local, SynthesisParams};
use compbarrier::system::{
    ball, ImpulseSchedule, JumpRule, SemialgebraicSet, SetConstraint, SwitchedImpulsiveSystem,
};
use compbarrier::verify::{
    check_global_barrier, monitor_trajectories, MonitorConfig, Verdict, VerificationConfig,
};

/// `ẋ = −x` on the ball of radius 2, initial ball radius 0.5, unsafe shell
/// `‖x‖ ≥ 1.5`, jumps `x ↦ x/2`.
fn linear_decay() -> (SwitchedImpulsiveSystem, GlobalSets, Arc<VarSpace>) {
    let sp = VarSpace::new(["x", "y"]);
    let domain = SemialgebraicSet::basic(&sp, vec![SetConstraint::nonneg(ball(&sp, 0..2, 4.0))]);
    let f = vec![-&Polynomial::var(&sp, 0), -&Polynomial::var(&sp, 1)];
    let g = vec![
        Polynomial::var(&sp, 0).scale(0.5),
        Polynomial::var(&sp, 1).scale(0.5),
    ];
    let sys = SwitchedImpulsiveSystem::new(
        &sp,
        vec![f],
        JumpRule::Uniform(g),
        ImpulseSchedule::periodic(1.0).unwrap(),
        domain.clone(),
    )
    .unwrap();
    let unsafe_set = SemialgebraicSet::basic(
        &sp,
        vec![
            SetConstraint::nonneg(ball(&sp, 0..2, 4.0)),
            SetConstraint::nonpos(ball(&sp, 0..2, 2.25)),
        ],
    );
    let safe = SemialgebraicSet::basic(
        &sp,
        vec![
            SetConstraint::nonneg(ball(&sp, 0..2, 4.0)),
            SetConstraint::nonneg(ball(&sp, 0..2, 2.25)),
        ],
    );
    let sets = GlobalSets {
        initial: SemialgebraicSet::basic(&sp, vec![SetConstraint::nonneg(ball(&sp, 0..2, 0.25))]),
        unsafe_region: UnsafeRegion::Cells(unsafe_set),
        safe: SafeRegion::Cells(safe),
    };
    (sys, sets, sp)
}

fn cfg(samples: usize) -> VerificationConfig {
    VerificationConfig {
        samples,
        lambda: Some(0.0),
        ..Default::default()
    }
}

#[test]
fn quadratic_barrier_for_linear_decay_passes() {
    let (sys, sets, sp) = linear_decay();
    let b = GlobalBarrier::single(-&ball(&sp, 0..2, 1.0), 0.0);
    let rep = check_global_barrier(&b, &sys, &sets, &cfg(10_000)).unwrap();
    assert!(rep.passed(), "{}", rep.render_text());
    assert!(rep.conditions.iter().all(|c| c.verdict == Verdict::Pass));
}

#[test]
fn constant_negative_barrier_fails_on_the_unsafe_set() {
    let (sys, sets, sp) = linear_decay();
    let b = GlobalBarrier::single(Polynomial::constant(&sp, -1.0), 0.0);
    let rep = check_global_barrier(&b, &sys, &sets, &cfg(1000)).unwrap();
    let u = rep.condition("unsafe").unwrap();
    assert_eq!(u.verdict, Verdict::Counterexample);
    assert!(sets
        .unsafe_region
        .contains(u.counterexample.as_ref().unwrap()));
}

#[test]
fn counterexamples_reproduce_and_persist_with_more_samples() {
    let (sys, sets, sp) = linear_decay();
    // B = x − 0.45 is positive on a small cap of the initial ball
    let b = GlobalBarrier::single(
        &Polynomial::var(&sp, 0) - &Polynomial::constant(&sp, 0.45),
        0.0,
    );
    let mut found = false;
    for n in [50, 200, 1000, 5000, 20_000] {
        let rep = check_global_barrier(&b, &sys, &sets, &cfg(n)).unwrap();
        let init = rep.condition("initial").unwrap();
        if found {
            assert_eq!(
                init.verdict,
                Verdict::Counterexample,
                "flipped back to pass at {n}"
            );
        }
        if init.verdict == Verdict::Counterexample {
            found = true;
            let x = init.counterexample.as_ref().unwrap();
            let residual = b.eval(x);
            assert!(
                residual > rep.tolerance && (residual - init.worst).abs() <= 2.0 * rep.tolerance
            );
        }
    }
    assert!(found);
}

#[test]
fn composed_sir_barrier_is_safe_along_trajectories() {
    let ic = sir_interconnection(&SirParams::paper_m3()).unwrap();
    let barrier = synthesize_local(&ic, &SynthesisParams::default())
        .unwrap()
        .barrier
        .unwrap();
    let sys = ic.flatten().unwrap();
    let sets = union_unsafe_sets(&ic);
    let vc = VerificationConfig::default();

    // initial points on the boundary ‖x_i‖ = 1 of every patch
    let x0: Vec<Vec<f64>> = (0..12)
        .map(|k| {
            let a = k as f64 * 0.5;
            let p = [a.cos() * 0.6, 0.8, a.sin() * 0.6];
            (0..3).flat_map(|_| p).collect()
        })
        .collect();
    let seeds: Vec<u64> = (0..12).collect();
    let rep = monitor_trajectories(
        &barrier,
        &sys,
        &sets,
        &x0,
        &seeds,
        &MonitorConfig::default(),
        &vc,
    )
    .unwrap();
    assert!(rep.passed(), "{}", rep.render_text());

    let zero = MonitorConfig {
        horizon: 0.0,
        ..Default::default()
    };
    let rep =
        monitor_trajectories(&barrier, &sys, &sets, &x0[..1], &seeds[..1], &zero, &vc).unwrap();
    assert!(rep.passed());
    let b0 = barrier.eval(&x0[0]);
    assert!((rep.max_barrier.unwrap() - b0).abs() < 1e-12 && b0 <= 0.0);
}
