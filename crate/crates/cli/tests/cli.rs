use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn case_study() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/case_study.json")
}

fn polsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polsynth"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn scenario_file(dir: &Path, text: &str) -> String {
    let p = dir.join("scenario.json");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn synth_writes_all_formats() {
    let out = tempfile::tempdir().unwrap();
    let o = polsynth(&[
        "synth",
        case_study().to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ipt = fs::read_to_string(out.path().join("firewall.iptables")).unwrap();
    assert_eq!(ipt.lines().count(), 12);
    assert!(ipt.starts_with("FORWARD DROP\n"));
    assert!(out.path().join("flows.openflow").exists());
    assert!(out.path().join("policy.dot").exists());
}

#[test]
fn synth_respects_format_selection() {
    let out = tempfile::tempdir().unwrap();
    let o = polsynth(&[
        "synth",
        case_study().to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--format",
        "dot",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let files: Vec<_> = fs::read_dir(out.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files, vec!["policy.dot"]);
}

#[test]
fn verification_failure_withholds_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario_file(
        dir.path(),
        r#"{"entities": ["A", "L"],
            "invariants": [{"template": "sink", "attrs": {"L": "sink"}}],
            "refinements": [{"op": "add", "from": "L", "to": "A"}]}"#,
    );
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();

    let o = polsynth(&["synth", &s, "--out", out_s]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let o = polsynth(&["synth", &s, "--out", out_s, "--force"]);
    assert_eq!(o.status.code(), Some(2));
    let dot = fs::read_to_string(out.join("policy.dot")).unwrap();
    assert!(dot.starts_with("// WARNING"));

    let o = polsynth(&["verify", &s]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("FAIL sink"));
}

#[test]
fn scenario_errors_exit_3_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario_file(
        dir.path(),
        r#"{"entities": ["A"], "invariants": [{"template": "blp", "attrs": {"B": {"level": 1}}}]}"#,
    );
    let o = polsynth(&["verify", &s]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("invariants[0].attrs.B"), "{}", stderr(&o));

    let o = polsynth(&["verify", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn serialization_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario_file(dir.path(), r#"{"entities": ["A", "B"]}"#);
    let out = dir.path().join("out");
    let o = polsynth(&["synth", &s, "--out", out.to_str().unwrap(), "--format", "iptables"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("[serialize]"));
}

#[test]
fn stateful_and_report() {
    let cs = case_study();
    let o = polsynth(&["stateful", cs.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "stateful edges: INET->WebFrnt, WebApp->INET\n");

    let o = polsynth(&["report", cs.to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["verified"], true);
    assert_eq!(v["policy_edges"].as_array().unwrap().len(), 9);
    assert_eq!(v["constructed_edges"].as_array().unwrap().len(), 10);

    // identical input, identical bytes
    let again = polsynth(&["report", cs.to_str().unwrap(), "--json"]);
    assert_eq!(o.stdout, again.stdout);
}
