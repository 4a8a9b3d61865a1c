use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn bisimlearn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bisimlearn")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &PathBuf) -> &str {
    p.to_str().unwrap()
}

#[test]
fn learn_prints_three_regions() {
    let o = bisimlearn(&["--seed", "1", "learn", path(&fixture("nested_loop.bsys"))]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let regions: Vec<&str> = out.lines().filter(|l| l.contains(": ")).collect();
    assert_eq!(regions.len(), 3, "{out}");
    assert!(regions.iter().any(|l| l.ends_with(": x <= 0")), "{out}");
}

#[test]
fn saved_classifier_drives_quotient_and_check() {
    let dir = tempfile::tempdir().unwrap();
    let cls = dir.path().join("nested_loop.json");
    let o = bisimlearn(&["learn", path(&fixture("nested_loop.bsys")), "--save-classifier", path(&cls)]);
    assert_eq!(o.status.code(), Some(0));

    let o = bisimlearn(&["quotient", path(&fixture("nested_loop.bsys")), "--load-classifier", path(&cls)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).matches("->").count(), 4);

    let o = bisimlearn(&[
        "check",
        path(&fixture("nested_loop.bsys")),
        "--load-classifier",
        path(&cls),
        "--prop",
        path(&fixture("nested_loop.ctl")),
    ]);
    // The initial condition admits states with x <= 0, so the property fails.
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
}

#[test]
fn unbounded_branching_is_rejected() {
    let o = bisimlearn(&["learn", path(&fixture("havoc.bsys"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unbounded branching"));
}

#[test]
fn oracle_on_five_state_example() {
    let o = bisimlearn(&["oracle", "coarsest", path(&fixture("five_state.ets"))]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["blocks"].as_array().unwrap().len(), 3);

    let o = bisimlearn(&[
        "oracle",
        "check",
        path(&fixture("five_state.ets")),
        "--partition",
        path(&fixture("five_state_partition.json")),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "valid");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"blocks":[["s0","s1","s2","s3","s4"]]}"#).unwrap();
    let o = bisimlearn(&["oracle", "check", path(&fixture("five_state.ets")), "--partition", path(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("invalid"));
}

#[test]
fn empty_bench_manifest_prints_header() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("bench.toml");
    std::fs::write(&m, "repetitions = 1\n").unwrap();
    let csv = dir.path().join("out.csv");
    let o = bisimlearn(&["bench", path(&m), "--csv", path(&csv)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().trim(), "case,rep,phase,seconds,iters,classes,result");
}

#[test]
fn bench_writes_phase_rows() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("bench.toml");
    std::fs::write(
        &m,
        format!("repetitions = 1\n\n[[case]]\nname = \"nested_loop\"\nsystem = \"{}\"\n", path(&fixture("nested_loop.bsys"))),
    )
    .unwrap();
    let csv = dir.path().join("out.csv");
    let o = bisimlearn(&["bench", path(&m), "--csv", path(&csv)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let phases: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(phases, ["learn", "verify", "extract", "check", "total"]);
    assert!(stdout(&o).contains("nested_loop"));
}
