use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qkan(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkan"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest_hash(dir: &Path) -> String {
    let text = fs::read_to_string(dir.join("manifest.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["config_hash"].as_str().unwrap().to_string()
}

#[test]
fn resources_prints_the_full_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = qkan(&["resources", "--csv", "r.csv"], dir.path());
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 11);
    let csv = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "3,4,36,1,3,12,4,4,1"));
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn resources_single_row_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = qkan(
        &["resources", "--n", "4", "--d", "5", "--csv", "r.csv"],
        dir.path(),
    );
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("4,5,60,1,3,20,5,5,2"));

    let out = qkan(&["resources", "--n", "0", "--d", "3"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = qkan(&["resources", "--n", "3"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "n = 2\nlearning_rate = 0.1\n").unwrap();
    let out = qkan(&["train", "--config", "c.toml", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("learning_rate"), "{}", stderr(&out));
}

#[test]
fn train_writes_results_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "n = 2\ndegree = 2\n[condition]\nkind = \"ideal\"\n",
    )
    .unwrap();
    let out = qkan(&["train", "--config", "c.toml", "--out", "a"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let first = fs::read(dir.path().join("a/results.csv")).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(text.lines().count(), 22);
    assert!(text.starts_with("config_n,config_d,model,condition,noise_mode,seed,step,loss\n"));

    let out = qkan(&["train", "--config", "c.toml", "--out", "a"], dir.path());
    assert!(out.status.success());
    assert_eq!(fs::read(dir.path().join("a/results.csv")).unwrap(), first);
}

#[test]
fn manifest_hash_tracks_semantic_fields_only() {
    let dir = tempfile::tempdir().unwrap();
    let base = "configs = [[2, 2]]\nmodels = [\"original\"]\nseeds = \"0..2\"\nconditions = [{ kind = \"ideal\" }]\n[train]\nsteps = 2\n";
    fs::write(dir.path().join("a.toml"), base).unwrap();
    fs::write(
        dir.path().join("b.toml"),
        base.replace("steps = 2", "steps = 3"),
    )
    .unwrap();
    for (cfg, out, extra) in [
        ("a.toml", "a", None),
        ("a.toml", "w", Some("2")),
        ("b.toml", "b", None),
    ] {
        let mut args = vec!["grid", "--config", cfg, "--out", out];
        if let Some(w) = extra {
            args.extend(["--workers", w]);
        }
        let o = qkan(&args, dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (a, w, b) = (
        manifest_hash(&dir.path().join("a")),
        manifest_hash(&dir.path().join("w")),
        manifest_hash(&dir.path().join("b")),
    );
    assert_eq!(a, w);
    assert_ne!(a, b);
    assert_eq!(
        fs::read(dir.path().join("a/results.csv")).unwrap(),
        fs::read(dir.path().join("w/results.csv")).unwrap()
    );

    let o = qkan(
        &[
            "grid",
            "--config",
            "a.toml",
            "--out",
            "s",
            "--seed-range",
            "0..3",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    assert_ne!(manifest_hash(&dir.path().join("s")), a);
}

#[test]
fn stats_round_trip_through_a_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("g.toml"),
        "configs = [[2, 2]]\nseeds = \"0..16\"\nconditions = [{ kind = \"ideal\" }]\n[train]\nsteps = 2\n",
    )
    .unwrap();
    let o = qkan(&["grid", "--config", "g.toml", "--out", "g"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = qkan(
        &["stats", "--results", "g/results.csv", "--out", "s"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s/summary.json")).unwrap())
            .unwrap();
    let pairs = summary["configs"]["n2_d2"]["ideal"]["pairs"]
        .as_object()
        .unwrap();
    assert_eq!(pairs.len(), 3);
    for p in pairs.values() {
        assert!(p.get("p").is_some() && p.get("label").is_some());
    }
    assert!(dir.path().join("s/curves.csv").exists());

    let o = qkan(
        &[
            "stats",
            "--results",
            "g/results.csv",
            "--out",
            "s",
            "--seed-range",
            "0..20",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn missing_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = qkan(
        &["stats", "--results", "missing.csv", "--out", "s"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    fs::write(
        dir.path().join("m.toml"),
        "digits = \"missing.csv\"\nwidths = [2]\nsplits = 1\n",
    )
    .unwrap();
    let o = qkan(
        &["mnist-binary", "--config", "m.toml", "--out", "m"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("missing.csv"));
}

#[test]
fn mnist_binary_small_run() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("m.toml"),
        "widths = [2]\nsplits = 2\nmodels = [\"original\", \"red_t\"]\n",
    )
    .unwrap();
    let o = qkan(
        &["mnist-binary", "--config", "m.toml", "--out", "m"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "results.csv",
        "accuracy.csv",
        "report.json",
        "manifest.json",
    ] {
        assert!(dir.path().join("m").join(f).exists(), "{f}");
    }
    let acc = fs::read_to_string(dir.path().join("m/accuracy.csv")).unwrap();
    assert_eq!(acc.lines().count(), 5);
}
