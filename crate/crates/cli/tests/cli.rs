mod common;

use common::{dir_contents, path_str, run, three_file_corpus, TINY_CONFIG};

fn stdout(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_train_eval_report_round() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, TINY_CONFIG).unwrap();
    let data = dir.path().join("data/synth.bin");
    let o = run(&["synth", "--config", path_str(&cfg), "--out", path_str(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("wrote 8 records"));
    assert!(data.with_extension("manifest.json").exists());

    let mut runs = Vec::new();
    for model in ["gcn", "lstm"] {
        let out = dir.path().join(model);
        let o = run(&[
            "train", "--config", path_str(&cfg), "--dataset", path_str(&data), "--model", model,
            "--out", path_str(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let names: Vec<String> = dir_contents(&out).into_iter().map(|(n, _)| n).collect();
        for f in [
            "config.toml", "loss-0.csv", "loss-1.csv", "loss_curves.svg", "rmse_per_layer.svg",
            "summary.json", "summary.txt", "trial-0.ckpt", "trial-0.json", "trial-1.ckpt",
            "trial-1.json",
        ] {
            assert!(names.contains(&f.to_string()), "{model}: missing {f} in {names:?}");
        }
        let table = std::fs::read_to_string(out.join("summary.txt")).unwrap();
        assert!(table.contains(" ± "), "{table}");
        let echo = std::fs::read_to_string(out.join("config.toml")).unwrap();
        assert!(echo.contains(&format!("model = \"{model}\"")), "{echo}");
        runs.push(out);
    }

    let ck = runs[0].join("trial-0.ckpt");
    let o = run(&["eval", "--checkpoint", path_str(&ck), "--dataset", path_str(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["sequences"], 8);
    assert!(v["rmse"]["total"].as_f64().unwrap() > 0.0);

    let rep = dir.path().join("report");
    let o = run(&["report", path_str(&runs[0]), path_str(&runs[1]), "--out", path_str(&rep)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(rep.join("table.txt")).unwrap();
    assert!(table.contains("GCN") && table.contains("LSTM"), "{table}");
    assert!(rep.join("rmse_per_layer.svg").exists() && rep.join("loss_curves.svg").exists());
}

#[test]
fn environment_overrides_flags_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, TINY_CONFIG).unwrap();
    let data = dir.path().join("d.bin");
    let o = common::bin()
        .args(["synth", "--config", path_str(&cfg)])
        .env("ICEGNN_OUT", &data)
        .env("ICEGNN_SEED", "42")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(data.exists());
    let again = dir.path().join("e.bin");
    let o = run(&["synth", "--config", path_str(&cfg), "--seed", "42", "--out", path_str(&again)]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&data).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "epochz = 3\n").unwrap();
    let o = run(&["synth", "--config", path_str(&bad), "--out", "x.bin"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("epochz"));

    assert_eq!(run(&["train", "--trials"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let o = run(&["train", "--model", "rnn", "--dataset", "x", "--out", "y"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["train", "--out", path_str(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn runtime_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.bin");
    let o = run(&["train", "--dataset", path_str(&missing), "--out", path_str(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("none.bin"));

    let (masks, tracks) = three_file_corpus(dir.path());
    std::fs::write(masks.join("echo-d.png"), b"definitely not a png").unwrap();
    std::fs::copy(tracks.join("echo-a.csv"), tracks.join("echo-d.csv")).unwrap();
    let o = run(&[
        "ingest", "--masks", path_str(&masks), "--tracks", path_str(&tracks), "--out",
        path_str(&dir.path().join("x.bin")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("echo-d.png"), "{}", stderr(&o));
}

#[test]
fn ingest_corpus_and_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let (masks, tracks) = three_file_corpus(dir.path());
    let out = dir.path().join("ingested.bin");
    let o = run(&[
        "ingest", "--masks", path_str(&masks), "--tracks", path_str(&tracks), "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("accepted 2 of 3"), "{}", stdout(&o));

    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let out = dir.path().join("none.bin");
    let o = run(&[
        "ingest", "--masks", path_str(&empty), "--tracks", path_str(&empty), "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("accepted 0 of 0"));
}

#[test]
fn verify_passes_and_catches_injected_fault() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("verify.json");
    let o = run(&["verify", "--seeds", "2", "--out", path_str(&json)]);
    assert!(o.status.success(), "{}", stdout(&o));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 7);
    assert!(lines.iter().all(|l| l.starts_with("PASS") && l.contains("max error")));
    let parsed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(parsed.as_array().unwrap().len(), 7);

    let o = run(&["verify", "--seeds", "2", "--inject-fault", "hardswish-grad"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("FAIL") && l.contains("gradient-primitives")), "{out}");
}
