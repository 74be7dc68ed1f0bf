use std::path::Path;

use compbarrier::certificate::CertificateFile;
use compbarrier::cli::run;
use compbarrier::config::ConfigFile;

fn invoke(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("compbarrier").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_then_verify_and_reject_a_corrupted_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    let (code, out, err) = invoke(&[
        "synth-local",
        "--instance",
        "paper-m3",
        "--out",
        path_str(&cert),
    ]);
    assert_eq!(code, 0, "{out}\n{err}");

    let (code, out, err) = invoke(&[
        "verify",
        "--instance",
        "paper-m3",
        "--certificate",
        path_str(&cert),
    ]);
    assert_eq!(code, 0, "{out}\n{err}");
    assert!(out.contains("PASS"));

    // push the first barrier far above zero so it is positive on the initial set
    let mut file = CertificateFile::from_json(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    let constant = |terms: &mut compbarrier::config::TermList| {
        terms
            .0
            .iter_mut()
            .find(|t| t.exponents.iter().all(|&e| e == 0))
            .unwrap()
            .coefficient += 1e7;
    };
    constant(&mut file.locals[0].barrier.terms);
    if let Some(b) = file.barrier.as_mut() {
        constant(&mut b.components[0]);
    }
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, file.to_json().unwrap()).unwrap();
    let (code, out, _) = invoke(&[
        "verify",
        "--instance",
        "paper-m3",
        "--certificate",
        path_str(&bad),
    ]);
    assert_eq!(code, 1, "{out}");
    assert!(out.contains("FAIL"));
}

#[test]
fn gen_ring_is_byte_identical_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.toml");
    let b = dir.path().join("b.toml");
    for p in [&a, &b] {
        let (code, _, err) = invoke(&["gen-ring", "--m", "5", "--seed", "3", "--out", path_str(p)]);
        assert_eq!(code, 0, "{err}");
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());

    let cfg = ConfigFile::parse(std::str::from_utf8(&text).unwrap()).unwrap();
    let again = ConfigFile::parse(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(cfg.hash().unwrap(), again.hash().unwrap());
    assert_eq!(cfg.interconnection().unwrap().len(), 5);
}

#[test]
fn union_unsafe_set_is_rejected_with_a_diagnostic() {
    let (code, out, err) = invoke(&["synth-global", "--instance", "paper-m3"]);
    assert_eq!(code, 1, "{out}");
    assert!(err.contains("representability"), "{err}");
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(invoke(&["bogus"]).0, 2);
    assert_eq!(
        invoke(&["synth-local", "--instance", "no-such-instance"]).0,
        2
    );
    assert_eq!(invoke(&["bench", "--m", "2..4"]).0, 2);
}
