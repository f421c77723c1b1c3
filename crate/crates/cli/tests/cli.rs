use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn f3s(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_f3s")).args(args).env("F3S_THREADS", "0").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = r#"{"people": 2, "febrile": 1, "arrival_interval": [1.0, 1.5]}"#;

fn simulate(dir: &Path, seed: &str) -> std::path::PathBuf {
    let cfg = dir.join("scenario.json");
    fs::write(&cfg, TINY).unwrap();
    let out = dir.join(format!("data{seed}-{}", fs::read_dir(dir).unwrap().count()));
    let o = f3s(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = simulate(tmp.path(), "7");
    let b = simulate(tmp.path(), "7");
    let (ca, cb) = (dir_contents(&a), dir_contents(&b));
    assert!(ca.len() > 3);
    assert!(ca == cb, "datasets differ");
}

#[test]
fn eval_reproduces_table_counts() {
    let tmp = tempfile::tempdir().unwrap();
    // 7 febrile and 98 normal people; all febrile plus 3 normal alerted.
    let mut gt = String::from("frame,person_id,core_temp_c,distance_m,visible\n");
    let mut alerts = String::new();
    for id in 1..=105u32 {
        let febrile = id <= 7;
        let temp = if febrile { 38.8 } else { 36.6 };
        gt.push_str(&format!("0,{id},{temp},2.0,1\n"));
        if febrile || id <= 10 {
            alerts.push_str(&format!(
                "{{\"person_id\":{id},\"temp\":38.4,\"priority\":\"eye_forehead\",\"frame_seq\":3,\"reason\":\"first\",\"truth_id\":{id}}}\n"
            ));
        }
    }
    let (gp, ap) = (tmp.path().join("groundtruth.csv"), tmp.path().join("alerts.jsonl"));
    fs::write(&gp, gt).unwrap();
    fs::write(&ap, alerts).unwrap();
    let o = f3s(&["eval", "--alerts", ap.to_str().unwrap(), "--groundtruth", gp.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("TP 7 FP 3 TN 95 FN 0"), "{text}");
    assert!(text.contains("sensitivity 1.000"), "{text}");
    assert!(text.contains("specificity 0.969"), "{text}");
}

#[test]
fn missing_dataset_is_a_data_error_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("no-such-dataset");
    let out = tmp.path().join("out");
    let o = f3s(&["run", "--dataset", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no-such-dataset"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    let o = f3s(&["run", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    assert_eq!(f3s(&[]).status.code(), Some(1));
    assert_eq!(f3s(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn help_documents_every_subcommand() {
    for (sub, flags) in [
        ("simulate", &["--config", "--seed", "--out"][..]),
        ("run", &["--dataset", "--config", "--out"]),
        ("train-compensation", &["--data", "--config", "--out"]),
        ("calibrate", &["--dataset", "--config", "--out"]),
        ("align-report", &["--dataset", "--config", "--out"]),
        ("eval", &["--alerts", "--groundtruth", "--threshold"]),
    ] {
        let o = f3s(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
        let text = stdout(&o);
        for f in flags {
            assert!(text.contains(f), "{sub} help lacks {f}");
        }
    }
    let run = stdout(&f3s(&["run", "--help"]));
    assert!(run.contains("\"fever_threshold\": 38.0"), "{run}");
    assert!(run.contains("F3S_THREADS"));
}

#[test]
fn subcommands_chain_on_a_small_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), "3");
    let d = data.to_str().unwrap();
    let out = tmp.path().join("run");
    let o = f3s(&["run", "--dataset", d, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["readings.csv", "readings_gt.csv", "alerts.jsonl", "metrics.json", "latency.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }

    let o = f3s(&[
        "eval",
        "--alerts",
        out.join("alerts.jsonl").to_str().unwrap(),
        "--groundtruth",
        data.join("groundtruth.csv").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(out.join("metrics.json")).unwrap()).unwrap();
    let expected = format!("TP {} FP {} TN {} FN {}", metrics["tp"], metrics["fp"], metrics["tn"], metrics["fn"]);
    assert!(stdout(&o).contains(&expected), "{} vs {expected}", stdout(&o));

    let trace = tmp.path().join("trace.csv");
    let o = f3s(&["calibrate", "--dataset", d, "--out", trace.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(&trace).unwrap().starts_with("time_s,measured_c,error_c,offset_c\n"));

    let report = tmp.path().join("report.csv");
    let o = f3s(&["align-report", "--dataset", d, "--out", report.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.lines().next().unwrap().starts_with("distance_ft,x_err_before"));
    assert!(text.lines().count() > 1);

    let model = tmp.path().join("model").join("model.json");
    let o = f3s(&[
        "train-compensation",
        "--data",
        out.join("readings_gt.csv").to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(model.is_file());
    assert!(model.with_file_name("loss_history.csv").is_file());

    // A pipeline config may name the model relative to itself.
    let cfg = tmp.path().join("model").join("pipeline.json");
    fs::write(&cfg, r#"{"compensation_model": "model.json"}"#).unwrap();
    let out2 = tmp.path().join("run2");
    let o = f3s(&["run", "--dataset", d, "--config", cfg.to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}
