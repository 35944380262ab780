use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn qcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcert"))
        .args(args)
        .env_remove("QCERT_DATA_DIR")
        .output()
        .expect("spawn qcert")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "qcert failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_idx(path: &Path, magic: u32, dims: &[u32], payload: &[u8]) {
    let mut b = magic.to_be_bytes().to_vec();
    for d in dims {
        b.extend(d.to_be_bytes());
    }
    b.extend(payload);
    std::fs::write(path, b).unwrap();
}

/// Digits 0, 1 and 2 drawn as bright bands in different rows, with a little
/// deterministic texture.
fn synthetic_split(dir: &Path, prefix: &str, n: usize) {
    let mut pixels = Vec::with_capacity(n * 784);
    let mut labels = Vec::with_capacity(n);
    for k in 0..n {
        let label = (k % 3) as u8;
        labels.push(label);
        for r in 0..28 {
            for c in 0..28 {
                let band = r / 10 == label as usize;
                let texture = ((r * 7 + c * 13 + k * 5) % 40) as u8;
                pixels.push(if band { 200 + texture } else { texture });
            }
        }
    }
    write_idx(&dir.join(format!("{prefix}-images-idx3-ubyte")), 0x803, &[n as u32, 28, 28], &pixels);
    write_idx(&dir.join(format!("{prefix}-labels-idx1-ubyte")), 0x801, &[n as u32], &labels);
}

fn data_root() -> TempDir {
    let root = TempDir::new().unwrap();
    let dir = root.path().join("synth");
    std::fs::create_dir_all(&dir).unwrap();
    synthetic_split(&dir, "train", 90);
    synthetic_split(&dir, "t10k", 30);
    root
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn base_args<'a>(root: &'a Path, out: &'a Path) -> Vec<&'a str> {
    vec![
        "--data-dir", s(root), "--dataset", "synth", "--out", s(out), "--epochs", "4",
        "--warmup-epochs", "1", "--ramp-epochs", "2", "--batch-size", "16", "--lr", "0.05",
        "--steps", "5", "--quiet",
    ]
}

#[test]
fn train_writes_artifacts_and_snapshot_reproduces_bitwise() {
    let root = data_root();
    let work = TempDir::new().unwrap();
    let out = work.path().join("run");
    let mut args = vec!["train"];
    args.extend(base_args(root.path(), &out));
    args.extend(["--qubits", "4", "--classes", "2", "--layers", "2", "--loss", "margin", "--epsilon", "0.001", "--kappa", "0.5"]);
    ok(&qcert(&args));
    for f in ["model.json", "history.csv", "config.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    let mut lines = history.lines();
    assert_eq!(lines.next().unwrap(), "epoch,kappa,epsilon,loss,clean_acc,cert_frac");
    assert_eq!(lines.count(), 4);

    let snapshot: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(snapshot["eval"]["epsilon"], 0.001);
    assert_eq!(snapshot["data"]["root"], s(root.path()));

    let replay = work.path().join("replay");
    ok(&qcert(&["train", "--config", s(&out.join("config.json")), "--out", s(&replay), "--quiet"]));
    let model = |dir: &PathBuf| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(dir.join("model.json")).unwrap()).unwrap()
    };
    assert_eq!(model(&out)["theta"], model(&replay)["theta"]);
}

#[test]
fn init_eval_and_certify_on_random_model() {
    let root = data_root();
    let work = TempDir::new().unwrap();
    let model_dir = work.path().join("init");
    ok(&qcert(&["init", "--out", s(&model_dir), "--qubits", "2", "--classes", "2", "--layers", "1", "--seed", "5"]));
    let model = model_dir.join("model.json");

    let eval_dir = work.path().join("eval");
    let mut args = vec!["eval", "--checkpoint", s(&model), "--epsilon", "0.01"];
    args.extend(base_args(root.path(), &eval_dir));
    let stdout = ok(&qcert(&args));
    assert!(stdout.contains("test_acc"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_dir.join("report.json")).unwrap()).unwrap();
    let (cert, pgd) = (report["cert_acc"].as_f64().unwrap(), report["pgd_acc"].as_f64().unwrap());
    assert!(cert <= pgd);
    assert_eq!(report["n_samples"], 20);
    let row = std::fs::read_to_string(eval_dir.join("eval.csv")).unwrap();
    assert!(row.starts_with("dataset,qubits,classes,layers,arithmetic,loss,epsilon,kappa,test_acc,cert_acc,pgd_acc,seed,wall_time\nsynth,2,2,1,"));

    let cert_dir = work.path().join("certify");
    let mut args = vec!["certify", "--checkpoint", s(&model), "--epsilon", "0.01"];
    args.extend(base_args(root.path(), &cert_dir));
    ok(&qcert(&args));
    let rows = std::fs::read_to_string(cert_dir.join("certify.csv")).unwrap();
    assert!(rows.starts_with("index,label,prediction,certified,margin\n"));
    assert_eq!(rows.lines().count(), 21);
}

#[test]
fn sweep_and_plot_data() {
    let root = data_root();
    let work = TempDir::new().unwrap();
    let config = work.path().join("sweep.toml");
    std::fs::write(
        &config,
        r#"
        [model]
        qubits = 2
        layers = 1
        [sweep]
        epsilon = [0.001, 0.005, 0.010]
        "#,
    )
    .unwrap();
    let out = work.path().join("sweep");
    let mut args = vec!["sweep", "--config", s(&config)];
    args.extend(base_args(root.path(), &out));
    ok(&qcert(&args));
    let table = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(table.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["dataset", "qubits", "classes", "layers", "arithmetic", "loss", "epsilon", "kappa", "test_acc", "cert_acc", "pgd_acc", "seed", "wall_time"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    let eps: Vec<f64> = rows.iter().map(|r| r[6].parse().unwrap()).collect();
    assert_eq!(eps, vec![0.001, 0.005, 0.01]);
    for r in &rows {
        let cert: f64 = r[9].parse().unwrap();
        let pgd: f64 = r[10].parse().unwrap();
        assert!(cert <= pgd);
    }

    let long = work.path().join("long.csv");
    ok(&qcert(&["plot-data", s(&out.join("sweep.csv")), "--out", s(&long)]));
    let text = std::fs::read_to_string(&long).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "dataset,qubits,classes,layers,arithmetic,loss,epsilon,kappa,metric,value");
    assert_eq!(lines.len(), 10);
}

#[test]
fn bad_inputs_fail_with_messages() {
    let work = TempDir::new().unwrap();
    let config = work.path().join("bad.toml");
    std::fs::write(&config, "[model]\nqbits = 4\n").unwrap();
    let out = qcert(&["train", "--config", s(&config)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("qbits"));

    let out = qcert(&["train", "--classes", "9", "--data-dir", "/nonexistent"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_classes"));

    let missing = work.path().join("nowhere");
    let out = qcert(&["train", "--data-dir", s(&missing), "--out", s(&work.path().join("o"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train-images-idx3-ubyte"), "{err}");

    let out = qcert(&["train", "--out", s(&work.path().join("o2"))]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("QCERT_DATA_DIR"));

    let csv_path = work.path().join("bad.csv");
    std::fs::write(&csv_path, "epoch,kappa,epsilon,loss,clean_acc,cert_frac\n0,1,0,x,0.5,0.5\n").unwrap();
    let out = qcert(&["plot-data", s(&csv_path)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}
