//! Timing of both synthesis paths on seeded rings.
//! Usage: ring_benchmark [max M (default 4)] [seeds (default 1)]
use compbarrier::synth::{benchmark, SynthesisParams};

fn main() {
    let mut args = std::env::args().skip(1);
    let max_m: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(4);
    let seeds: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);
    let ms: Vec<usize> = (3..=max_m.max(3)).collect();
    let seeds: Vec<u64> = (1..=seeds).collect();
    let table = benchmark(&ms, &seeds, &SynthesisParams::default()).unwrap();
    print!("{}", table.render_text());
    print!("{}", table.render_csv());
}
