use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn longstep(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_longstep"))
        .args(args)
        .current_dir(dir)
        .env_remove("LONGSTEP_PRECISION")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = longstep(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Compares against tests/golden/<name>; LONGSTEP_BLESS=1 rewrites the file.
fn golden(name: &str, bytes: &[u8]) {
    let path = golden_dir().join(name);
    if std::env::var_os("LONGSTEP_BLESS").is_some() {
        std::fs::write(&path, bytes).unwrap();
        return;
    }
    let want = std::fs::read(&path).unwrap_or_else(|_| panic!("missing golden {name}"));
    assert!(want == bytes, "{name} differs from its golden file");
}

fn golden_file(dir: &Path, produced: &str, name: &str) {
    golden(name, &std::fs::read(dir.join(produced)).unwrap());
}

fn overrides() -> String {
    golden_dir().join("overrides.json").to_string_lossy().into_owned()
}

#[test]
fn pattern_range_and_single() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["pattern", "--k", "0..3", "--out", "pattern.json"]);
    for k in 0..=3 {
        golden_file(tmp.path(), &format!("pattern_k{k}.json"), &format!("pattern_k{k}.json"));
    }
    let single = ok(tmp.path(), &["pattern", "--k", "2"]);
    assert_eq!(single.stdout, std::fs::read(tmp.path().join("pattern_k2.json")).unwrap());
    let doc: serde_json::Value = serde_json::from_slice(&single.stdout).unwrap();
    assert_eq!(doc["steps"].as_array().unwrap().len(), 7);
    assert_eq!(doc["closed_form"][3], "7+4*sqrt(2)");
}

#[test]
fn schedules() {
    let tmp = tempfile::tempdir().unwrap();
    let a = ok(tmp.path(), &["schedule", "--stages", "3", "--delta-override", &overrides()]);
    golden("schedule_override.json", &a.stdout);
    let b = ok(tmp.path(), &["schedule", "--eta", "0.5"]);
    golden("schedule_conservative.json", &b.stdout);
}

#[test]
fn certify_writes_one_report_per_stage() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["certify", "--k", "1..3", "--bisect", "20", "--out", "certify.json"]);
    for k in 1..=3 {
        let name = format!("certify_k{k}.json");
        golden_file(tmp.path(), &name, &name);
        let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join(&name)).unwrap()).unwrap();
        assert_eq!(doc["passed"], true);
    }
}

#[test]
fn zero_psd_tolerance_fails_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let out = longstep(tmp.path(), &["certify", "--k", "1", "--psd-tol", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["membership_ok"], false);
    assert_eq!(doc["rank_one_ok"], true);
}

#[test]
fn delta_bisection_and_override_file() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        tmp.path(),
        &["delta", "--k", "1..3", "--iterations", "20", "--out", "delta.json", "--emit-override", "ov.json"],
    );
    for k in 1..=3 {
        golden_file(tmp.path(), &format!("delta_k{k}.json"), &format!("delta_k{k}.json"));
    }
    golden_file(tmp.path(), "ov.json", "delta_override.json");
    // The emitted file feeds straight back into a schedule.
    ok(tmp.path(), &["schedule", "--delta-override", "ov.json"]);
}

#[test]
fn runs_with_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let ov = overrides();
    let args = ["run", "--objective", "huber", "--x0", "-7", "--budget", "3000", "--stages", "2", "--delta-override"];
    let mut plain: Vec<&str> = args.to_vec();
    plain.extend([ov.as_str(), "--trace", "trace.csv", "--out", "run.json"]);
    ok(tmp.path(), &plain);
    golden_file(tmp.path(), "run.json", "run_huber.json");
    golden_file(tmp.path(), "trace.csv", "trace_huber.csv");
    let mut gz: Vec<&str> = args.to_vec();
    gz.extend([ov.as_str(), "--trace", "trace.csv.gz"]);
    ok(tmp.path(), &gz);
    let mut text = Vec::new();
    flate2::read::GzDecoder::new(std::fs::File::open(tmp.path().join("trace.csv.gz")).unwrap())
        .read_to_end(&mut text)
        .unwrap();
    golden("trace_huber.csv", &text);

    let q = ok(tmp.path(), &["run", "--objective", "diag-quadratic", "--dim", "4", "--budget", "400", "--delta-override", &ov]);
    golden("run_diag_quadratic.json", &q.stdout);
    let l = ok(tmp.path(), &["run", "--objective", "logsumexp", "--dim", "3", "--x0", "2", "--budget", "200"]);
    golden("run_logsumexp.json", &l.stdout);
    let doc: serde_json::Value = serde_json::from_slice(&l.stdout).unwrap();
    assert_eq!(doc["delta_source"], "conservative");
    assert_eq!(doc["passed"], true);
}

#[test]
fn adversary_instances() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = ok(tmp.path(), &["adversary", "--steps", "2.25,4,2.25"]);
    golden("adversary_violated.json", &bad.stdout);
    let doc: serde_json::Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert_eq!(doc["all_descended"], false);
    let good = ok(tmp.path(), &["adversary", "--k", "2", "--scale", "0.5"]);
    golden("adversary_k2_half.json", &good.stdout);
    let doc: serde_json::Value = serde_json::from_slice(&good.stdout).unwrap();
    assert_eq!(doc["all_descended"], true);
}

#[test]
fn sweep_table_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["sweep", "--k", "1..3", "--bisect", "20", "--out", "sweep.md", "--reports", "reports", "--jobs", "2"]);
    golden_file(tmp.path(), "sweep.md", "sweep.md");
    // Per-stage reports agree with certify under the same options.
    for k in 1..=3 {
        golden_file(tmp.path(), &format!("reports/report_k{k}.json"), &format!("certify_k{k}.json"));
    }
}

#[test]
fn repeated_invocations_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["certify", "--k", "2", "--bisect", "10"];
    assert_eq!(ok(tmp.path(), &args).stdout, ok(tmp.path(), &args).stdout);
    let run = ["run", "--objective", "quadratic", "--budget", "100"];
    assert_eq!(ok(tmp.path(), &run).stdout, ok(tmp.path(), &run).stdout);
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 7] = [
        &["pattern", "--k", "3..1"],
        &["pattern", "--k", "1", "--precision", "32"],
        &["schedule", "--eta", "1"],
        &["run", "--objective", "rosenbrock", "--budget", "10"],
        &["run", "--objective", "huber", "--dim", "3", "--budget", "10"],
        &["certify", "--k", "1", "--psd-tol", "-1"],
        &["adversary"],
    ];
    for args in cases {
        assert_eq!(longstep(tmp.path(), args).status.code(), Some(2), "{args:?}");
    }
    std::fs::write(tmp.path().join("bad.json"), "{\"x\": 1}").unwrap();
    let out = longstep(tmp.path(), &["schedule", "--delta-override", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    // Fewer overrides than stage boundaries.
    let out = longstep(tmp.path(), &["schedule", "--stages", "5", "--delta-override", &overrides()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn version_states_precision_policy() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), &["--version"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("128 bits"));
    assert!(text.contains("psd tolerance"));
}

#[test]
fn precision_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_longstep"))
        .args(["pattern", "--k", "1"])
        .env("LONGSTEP_PRECISION", "200")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["precision_bits"], 200);
}
