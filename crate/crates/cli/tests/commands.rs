use std::path::Path;
use std::process::{Command, Output};

fn bmkn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bmkn")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = bmkn(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: [&str; 8] = ["--frames", "5", "--vertices", "500", "--gof-size", "3", "--nodes", "16"];

fn rmse_lines(log: &str) -> Vec<f64> {
    log.lines()
        .filter(|l| l.contains("rmse "))
        .map(|l| l.split_whitespace().last().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn no_arguments_prints_usage() {
    let out = bmkn(&[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn encode_logs_one_mask_per_gof_and_decode_matches() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("w.bmkn");
    let mut args = vec!["encode", "walker", "-o", s(&file)];
    args.extend(SMALL);
    let log = ok(&args);
    assert!(file.exists());
    let gofs: Vec<&str> = log.lines().filter(|l| l.starts_with("gof ")).collect();
    assert_eq!(gofs.len(), 2);
    assert!(gofs.iter().all(|l| l.contains(" mask ")));

    let check = ok(&["decode", s(&file), "--check", "walker", "--frames", "5", "--vertices", "500"]);
    let (a, b) = (rmse_lines(&log), rmse_lines(&check));
    assert_eq!(a.len(), 5);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
    }
}

#[test]
fn ablation_flags_show_in_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("d.bmkn");
    let mut args = vec!["encode", "drift", "-o", s(&file), "--no-pred-coding", "--rd-strategy", "per-frame"];
    args.extend(SMALL);
    let log = ok(&args);
    let frames: Vec<&str> = log.lines().filter(|l| l.trim_start().starts_with("frame ")).collect();
    assert_eq!(frames.len(), 3);
    assert!(frames.iter().all(|l| l.contains("mode direct") && l.contains(" mask ")));
}

#[test]
fn synthesized_directory_encodes_like_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    ok(&["synthesize", "swish:0.25", "-o", s(&frames), "--frames", "5", "--vertices", "500", "--format", "ply"]);
    let (a, b) = (dir.path().join("a.bmkn"), dir.path().join("b.bmkn"));
    let mut from_dir = vec!["encode", s(&frames), "-o", s(&a)];
    from_dir.extend(SMALL);
    let mut from_scenario = vec!["encode", "swish:0.25", "-o", s(&b)];
    from_scenario.extend(SMALL);
    ok(&from_dir);
    ok(&from_scenario);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());

    let out = dir.path().join("decoded");
    ok(&["decode", s(&dir.path().join("b.bmkn")), "-o", s(&out)]);
    assert_eq!(std::fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "obj").count(), 5);
}

#[test]
fn sweep_writes_sorted_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("rd.csv");
    let mut args = vec!["sweep", "walker", "-o", s(&csv_path), "--lambdas", "1e-6,1e-2", "--node-counts", "12,16"];
    args.extend(&SMALL[..6]);
    ok(&args);
    let mut r = csv::Reader::from_path(&csv_path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["scenario", "lambda", "qstep_t", "qstep_p", "nodes", "mask", "rate_bytes", "rmse"]);
    let rates: Vec<u64> = r.records().map(|rec| rec.unwrap()[6].parse().unwrap()).collect();
    assert_eq!(rates.len(), 4);
    assert!(rates.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn corrupt_input_fails() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("junk.bmkn");
    std::fs::write(&file, b"BMKN\x01\x00garbage").unwrap();
    let out = bmkn(&["decode", s(&file)]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}

#[test]
fn bad_flags_are_rejected() {
    assert!(!bmkn(&["encode", "walker", "-o", "/dev/null", "--seg-mode", "sideways"]).status.success());
    assert!(!bmkn(&["encode", "walker", "-o", "/dev/null", "--force-mask", "RS"]).status.success());
    assert!(!bmkn(&["encode", "nowhere", "-o", "/dev/null"]).status.success());
}
