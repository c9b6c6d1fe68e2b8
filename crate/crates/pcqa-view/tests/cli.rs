use std::process::Command;

fn cli(args: &[&str], dir: &std::path::Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pcqa-view")).args(args).current_dir(dir).output().unwrap()
}

#[test]
fn count_only_prints_the_pair_count() {
    let dir = tempfile::tempdir().unwrap();
    for (shape, expected) in [(["9", "54", "7", "6"], "71442"), (["20", "54", "12", "3"], "77760")] {
        let sets = [
            "count_only=true".to_string(),
            format!("count_clouds={}", shape[0]),
            format!("count_viewpoints={}", shape[1]),
            format!("count_kinds={}", shape[2]),
            format!("count_levels={}", shape[3]),
        ];
        let mut args = vec!["pairs"];
        for s in &sets {
            args.extend(["--set", s.as_str()]);
        }
        let out = cli(&args, dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), expected);
    }
}

#[test]
fn errors_are_one_line_and_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["--config", "missing.cfg", "pairs"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: ") && err.contains("missing.cfg"), "{err}");

    let out = cli(&["--set", "grid=0", "pairs", "--store", "."], dir.path());
    assert!(!out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stderr).trim().lines().count(), 1);
}

#[test]
fn rank_sweep_reports_every_rank() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let cfg = "resolution = 32\nkinds = CN\nlevels = 3\ngrid = 9\nssvrn_epochs = 2\n";
    std::fs::write(p.join("small.cfg"), cfg).unwrap();
    let steps: [&[&str]; 4] = [
        &["synth", "--out", "clouds", "--count", "2", "--points", "800"],
        &["distort", "--in", "clouds", "--out", "ladders"],
        &["pairs", "--store", "ladders", "--out", "pairs.jsonl"],
        &["train-ssvrn", "--pairs", "pairs.jsonl", "--out", "ssvrn.json"],
    ];
    for step in steps {
        let mut args = vec!["--config", "small.cfg"];
        args.extend_from_slice(step);
        let out = cli(&args, p);
        assert!(out.status.success(), "{step:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = cli(
        &[
            "--config", "small.cfg", "evaluate", "--mode", "rank-sweep", "--store", "ladders", "--model", "ssvrn.json",
            "--out", "sweep.json",
        ],
        p,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let reports: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(p.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(reports.len(), 9);
}
