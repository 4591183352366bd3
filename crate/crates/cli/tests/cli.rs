use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_alignprobe"))
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(bin().arg("no-such-command").output().unwrap().status.code(), Some(1));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));

    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[world]\nnum_scenes = \"many\"\n").unwrap();
    let out = bin().args(["--config", bad.to_str().unwrap(), "show-config"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.toml"));
}

#[test]
fn show_config_round_trips() {
    let out = bin().args(["--smoke", "--seed", "9", "show-config"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let c = alignprobe::pipeline::ExperimentConfig::from_toml(&text).unwrap();
    assert_eq!(c.seed, 9);
    assert_eq!(c.world.num_scenes, 200);
}

#[test]
fn stage_failure_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["--smoke", "--out", tmp.path().to_str().unwrap(), "train-ce"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train-ce") && err.contains("lexicon.tsv"), "{err}");
}

#[test]
fn stages_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let d = dir.to_str().unwrap();
    for cmd in ["gen-data", "train-matcher", "train-ce", "train-scst", "caption", "analyze", "probe"] {
        let st = bin().args(["--smoke", "--out", d, cmd]).output().unwrap().status;
        assert!(st.success(), "{cmd}");
    }
    let skipped = bin().args(["--smoke", "--out", d, "gen-data"]).output().unwrap();
    assert!(String::from_utf8_lossy(&skipped.stdout).contains("skipped"));
    assert!(bin().args(["--out", d, "report"]).output().unwrap().status.success());
    let report = std::fs::read_to_string(dir.join("report/report.md")).unwrap();
    assert!(report.contains("## Template probe"));
    let all = bin().args(["--smoke", "--out", d, "pipeline"]).output().unwrap();
    assert!(String::from_utf8_lossy(&all.stdout).contains("all stages complete"));
}
