//! Local barrier synthesis for the three-patch network: one small SOS
//! program per patch, solved in parallel, then the max-form composition.
use compbarrier::sir::{sir_interconnection, SirParams};
use compbarrier::synth::{synthesize_local, SynthesisParams};

fn main() {
    let ic = sir_interconnection(&SirParams::paper_m3()).unwrap();
    let res = synthesize_local(&ic, &SynthesisParams::default()).unwrap();
    print!("{}", res.report.render_text());
    for (i, c) in res.certificates.iter().enumerate() {
        match c {
            Some(c) => println!("B{} = {}", i + 1, c.barrier.clone().prune(1e-9)),
            None => println!("B{}: no certificate", i + 1),
        }
    }
    if let Some(b) = &res.barrier {
        let m = b.eval_max(&[0.0; 9]);
        println!(
            "composite at the origin: {:.3} (component {})",
            m.value,
            m.argmax + 1
        );
    }
}
