//! Sampled verification of a composed certificate and trajectory monitoring.
use compbarrier::sir::{sir_interconnection, union_unsafe_sets, SirParams};
use compbarrier::synth::{synthesize_local, SynthesisParams};
use compbarrier::verify::{
    check_global_barrier, monitor_trajectories, MonitorConfig, VerificationConfig,
};

fn main() {
    let ic = sir_interconnection(&SirParams::paper_m3()).unwrap();
    let res = synthesize_local(&ic, &SynthesisParams::default()).unwrap();
    let barrier = res.barrier.expect("composition");
    let sys = ic.flatten().unwrap();
    let sets = union_unsafe_sets(&ic);
    let cfg = VerificationConfig::default();
    let rep = check_global_barrier(&barrier, &sys, &sets, &cfg).unwrap();
    print!("{}", rep.render_text());

    let x0 = sets.initial.sample(20, 7).unwrap();
    let seeds: Vec<u64> = (0..20).collect();
    let mon = monitor_trajectories(
        &barrier,
        &sys,
        &sets,
        &x0,
        &seeds,
        &MonitorConfig::default(),
        &cfg,
    )
    .unwrap();
    print!("{}", mon.render_text());
}
