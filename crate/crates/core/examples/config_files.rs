//! Configuration and certificate files: a ring instance written as TOML,
//! parsed back, hashed, and a synthesised certificate stored as JSON.
use compbarrier::certificate::{
    BarrierEntry, CertificateFile, LocalEntry, Provenance, TOOL_VERSION,
};
use compbarrier::config::ConfigFile;
use compbarrier::synth::synthesize_local;

fn main() {
    let cfg = ConfigFile::ring(4, 7).unwrap();
    let text = cfg.to_toml().unwrap();
    println!("{} lines of TOML, first subsystem:", text.lines().count());
    for line in text
        .lines()
        .skip_while(|l| !l.starts_with("[[system.subsystems]]"))
        .take(6)
    {
        println!("  {line}");
    }
    let back = ConfigFile::parse(&text).unwrap();
    assert_eq!(back, cfg);
    println!("hash {}", back.hash().unwrap());

    let ic = back.interconnection().unwrap();
    let res = synthesize_local(&ic, &back.synthesis).unwrap();
    let locals = res.complete().expect("all local programs feasible");
    let file = CertificateFile {
        provenance: Provenance {
            config_name: back.name.clone(),
            config_hash: back.hash().unwrap(),
            seed: back.verify.seed,
            tool_version: TOOL_VERSION.into(),
        },
        locals: locals
            .iter()
            .zip(&ic.subsystems)
            .map(|(c, s)| LocalEntry::new(&s.name, c))
            .collect(),
        gain: res.gain.clone(),
        barrier: res.barrier.as_ref().map(BarrierEntry::new),
        verification: None,
        report: Some(res.report.clone()),
    };
    let json = file.to_json().unwrap();
    let reloaded = CertificateFile::from_json(&json).unwrap();
    println!(
        "certificate: {} bytes, {} local barriers, reload ok: {}",
        json.len(),
        reloaded.locals.len(),
        reloaded.barrier == file.barrier
    );
}
