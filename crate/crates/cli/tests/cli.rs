use std::path::Path;
use std::process::{Command, Output};

use oblivnet::dataio::{synth_xc, write_xc};
use oblivnet_cli::exit::{code_of, tag, Kind};

fn oblivnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oblivnet"))
        .current_dir(dir)
        .env_remove("OBLIVNET_TRACE")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path) {
    let cfg = r#"{
        "network": {"d_input": 50, "n0": 8, "c": 16},
        "train": {"batch_size": 4, "epochs": 2, "lr": 0.001},
        "lsh": {"k": 2, "m": 4, "pad_size": 8, "rebuild_period": 4, "seed": 2},
        "seed": 3,
        "train_path": "train.txt",
        "test_path": "test.txt"
    }"#;
    std::fs::write(dir.join("cfg.json"), cfg).unwrap();
    let data = synth_xc(50, 16, 48, 5, 2, 4);
    let (tr, te) = data.examples.split_at(32);
    for (name, part) in [("train.txt", tr), ("test.txt", te)] {
        let mut d = data.clone();
        d.examples = part.to_vec();
        write_xc(dir.join(name), &d).unwrap();
    }
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_config(d);
    let o = oblivnet(d, &["train", "--config", "cfg.json", "--trace-out", "trace.bin"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("trained 16 batches (4 refreshes)"), "{out}");
    assert!(out.contains("trace digest"));
    for f in [
        "model.tnnr",
        "model.tnnr.run.json",
        "metrics.csv",
        "metrics.csv.run.json",
        "trace.bin",
    ] {
        assert!(d.join(f).exists(), "{f}");
    }

    let o = oblivnet(
        d,
        &[
            "eval",
            "--checkpoint",
            "model.tnnr",
            "--test",
            "test.txt",
            "--metrics-out",
            "metrics.csv",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("P@1 "));
    let metrics = std::fs::read_to_string(d.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "epoch,batch,p_at_1,loss,wall_seconds");
    assert_eq!(lines.len(), 1 + 2 + 1);
    assert!(lines[3].starts_with("0,16,"));

    let o = oblivnet(d, &["plot-data", "--metrics", "metrics.csv"]);
    assert!(o.status.success());
    let plot = stdout(&o);
    assert!(plot.starts_with("series,x,y\n"));
    assert_eq!(plot.lines().count(), 1 + 3 * 3);
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_config(d);
    let mut digests = Vec::new();
    for w in ["1", "3"] {
        let ck = format!("m{w}.tnnr");
        let o = oblivnet(
            d,
            &[
                "train",
                "--config",
                "cfg.json",
                "--workers",
                w,
                "--checkpoint",
                &ck,
                "--metrics-out",
                "x.csv",
            ],
        );
        assert!(o.status.success());
        let o = oblivnet(d, &["eval", "--checkpoint", &ck, "--test", "test.txt"]);
        digests.push(stdout(&o));
    }
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn audit_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = oblivnet(dir.path(), &["audit-trace", "--trials", "3"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("audit passed: 3 pair(s)"));
    let o = oblivnet(dir.path(), &["audit-trace", "--trials", "10", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).contains("traces diverge at event"));
}

#[test]
fn config_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = oblivnet(d, &["train", "--config", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));
    let o = oblivnet(d, &["train", "--batch-size", "0"]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(d.join("bad.json"), "{ not json").unwrap();
    assert_eq!(oblivnet(d, &["train", "--config", "bad.json"]).status.code(), Some(2));

    write_config(d);
    std::fs::write(d.join("train.txt"), "2 50 16\n1 3:0.5\n").unwrap();
    let o = oblivnet(d, &["train", "--config", "cfg.json"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::write(d.join("garbage.tnnr"), b"nope").unwrap();
    let o = oblivnet(d, &["eval", "--checkpoint", "garbage.tnnr", "--test", "test.txt"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn nested_context_keeps_exit_code() {
    let e = tag::<()>(Err(anyhow::anyhow!("root")), Kind::Capacity)
        .map_err(|e| e.context("outer"))
        .unwrap_err();
    assert_eq!(code_of(&e), 5);
}

#[test]
fn bench_and_subset() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = r#"{
        "network": {"d_input": 50, "n0": 8, "c": 16},
        "train": {"batch_size": 4},
        "lsh": {"k": 2, "m": 4, "pad_size": 8},
        "bench": {"dim": 16, "vectors": 100, "queries": 5, "tables": [1, 3], "trials": 1}
    }"#;
    std::fs::write(d.join("cfg.json"), cfg).unwrap();
    let o = oblivnet(d, &["bench-lsh", "--config", "cfg.json", "--out", "recall.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.join("recall.csv")).unwrap();
    assert!(csv.starts_with("method,tables,probes,recall,table_memory\n"));
    assert_eq!(csv.lines().count(), 1 + 2 + 27);

    let data = synth_xc(30, 20, 60, 4, 2, 8);
    write_xc(d.join("src_train.txt"), &data).unwrap();
    write_xc(d.join("src_test.txt"), &data).unwrap();
    let o = oblivnet(
        d,
        &[
            "subset",
            "--train",
            "src_train.txt",
            "--test",
            "src_test.txt",
            "--target-instances",
            "20",
            "--target-labels",
            "6",
            "--seed",
            "1",
            "--out",
            "small",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "train.small.txt",
        "test.small.txt",
        "label_map.json",
        "kept_train_idx.txt",
        "stats.json",
    ] {
        assert!(d.join("small").join(f).exists(), "{f}");
    }
    let o = oblivnet(
        d,
        &[
            "subset",
            "--train",
            "src_train.txt",
            "--test",
            "src_test.txt",
            "--multiplier",
            "7",
            "--out",
            "x",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}
