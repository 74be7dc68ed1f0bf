//! The monolithic program: feasible on a ring with the product unsafe set,
//! rejected for the union unsafe set that only has a max description.
use compbarrier::sir::{product_unsafe_sets, sir_interconnection, union_unsafe_sets, SirParams};
use compbarrier::synth::{generate_ring_instance, synthesize_global, SynthesisParams};

fn main() {
    let params = SynthesisParams::default();
    let ring = generate_ring_instance(3, 1).unwrap();
    let sys = ring.flatten().unwrap();
    let res = synthesize_global(&sys, &product_unsafe_sets(&ring), &params).unwrap();
    print!("{}", res.report.render_text());

    let ic = sir_interconnection(&SirParams::paper_m3()).unwrap();
    let sys = ic.flatten().unwrap();
    match synthesize_global(&sys, &union_unsafe_sets(&ic), &params) {
        Ok(_) => println!("union unsafe set: unexpectedly accepted"),
        Err(e) => println!("union unsafe set rejected: {e}"),
    }
}
