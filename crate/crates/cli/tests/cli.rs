use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn monograd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_monograd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const SMALL_TRAIN: &str = "\
# tiny synthetic run
data.samples = 200
data.dim = 10
data.monotone_count = 2
model.hidden = 8
train.epochs = 3
train.batch_size = 32
train.random_samples = 64
train.mixup_pairs = 64
audit.random_points = 500
run.variants = none, mixup
";

const SMALL_GROUP: &str = "\
data.source = blobs
data.classes = 3
data.per_class = 40
data.blob_dim = 4
model.trunk_hidden = 8
model.slice_per_class = 2
train.penalty = group
train.gamma = 1
train.epochs = 3
train.batch_size = 16
train.selection = last
attack.epsilon_fraction = 0.1
";

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_writes_reports_and_reruns_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "train.cfg", SMALL_TRAIN);
    let out = dir.path().join("out");
    let files = [
        "report.json",
        "aggregate.csv",
        "summary.txt",
        "config.txt",
        "mixup/repeat-0/report.json",
        "mixup/repeat-0/history.jsonl",
        "mixup/repeat-0/model.txt",
    ];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let o = monograd(&[
            "train",
            "--config",
            path_str(&cfg),
            "--out",
            path_str(&out),
            "--seed",
            "4",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("rho_random"));
        let contents: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(out.join(f)).unwrap()).collect();
        std::fs::remove_dir_all(&out).unwrap();
        runs.push((o.stdout, contents));
    }
    assert_eq!(runs[0].0, runs[1].0);
    for (i, file) in files.iter().enumerate() {
        assert_eq!(runs[0].1[i], runs[1].1[i], "{file} differs between reruns");
    }
    let report = String::from_utf8_lossy(&runs[0].1[0]);
    assert!(report.contains("\"seed\": 4"));
    assert!(report.contains("\"train.gamma\""));
    assert!(!report.contains("ci_low"), "a single repeat has no interval");
}

#[test]
fn repeats_flag_adds_confidence_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "train.cfg", SMALL_TRAIN);
    let out = dir.path().join("out");
    let o = monograd(&[
        "train",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&out),
        "--repeats",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert!(csv.starts_with("group,metric,mean,ci_low,ci_high,n\n"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",2")));
    assert!(out.join("none/repeat-1/report.json").exists());
}

#[test]
fn unknown_key_fails_with_one_line_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "train.gamma = 1\ntrain.gamme = 2\n");
    let o = monograd(&["train", "--config", path_str(&cfg)]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("train.gamme"), "{err}");
}

#[test]
fn missing_config_file_fails() {
    let o = monograd(&["train", "--config", "/nonexistent/monograd.cfg"]);
    assert!(!o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stderr).trim_end().lines().count(), 1);
}

#[test]
fn sphere_prints_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.cfg",
        "sphere.dims = 10\nsphere.radii = 0.5, 1\nsphere.draws = 2000\n",
    );
    let o = monograd(&["sphere", "--config", path_str(&cfg)]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("n,r,uniform_analytic"));
    assert!(lines[1].starts_with("10,0.5,0.9990234375,"));
    assert!(lines[2].starts_with("10,1.0,0.0,"));
}

#[test]
fn synth_output_feeds_csv_training_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let gen = write_config(
        dir.path(),
        "gen.cfg",
        "data.samples = 200\ndata.dim = 10\ndata.monotone_count = 2\n",
    );
    let o = monograd(&["synth", "--config", path_str(&gen), "--out", path_str(&data)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(data.join("train.csv").exists() && data.join("manifest.txt").exists());

    let text = format!(
        "data.source = csv\ndata.manifest = {}\nmodel.hidden = 8\ntrain.epochs = 2\naudit.random_points = 200\n",
        data.join("manifest.txt").display()
    );
    let cfg = write_config(dir.path(), "csv.cfg", &text);
    let run = dir.path().join("run");
    let o = monograd(&["train", "--config", path_str(&cfg), "--out", path_str(&run)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let model = run.join("none/repeat-0/model.txt");
    let first = monograd(&["audit", "--config", path_str(&cfg), "--model", path_str(&model)]);
    let second = monograd(&["audit", "--config", path_str(&cfg), "--model", path_str(&model)]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(first.stdout, second.stdout);
    let report = String::from_utf8_lossy(&first.stdout);
    assert!(report.contains("\"rho_random\"") && report.contains("\"random\": 200"));
}

#[test]
fn audit_rejects_a_model_of_the_wrong_width() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "train.cfg", SMALL_TRAIN);
    let run = dir.path().join("run");
    assert!(
        monograd(&["train", "--config", path_str(&cfg), "--out", path_str(&run)])
            .status
            .success()
    );
    let wide = write_config(
        dir.path(),
        "wide.cfg",
        "data.samples = 200\ndata.dim = 12\ndata.monotone_count = 2\n",
    );
    let model = run.join("none/repeat-0/model.txt");
    let o = monograd(&["audit", "--config", path_str(&wide), "--model", path_str(&model)]);
    assert!(!o.status.success());
}

#[test]
fn group_and_attack_eval_run_on_blobs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "group.cfg", SMALL_GROUP);
    let out = dir.path().join("out");
    let o = monograd(&["group", "--config", path_str(&cfg), "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("[baseline@1]") && text.contains("[group@1]"));
    assert!(text.contains("detection_auc") && text.contains("total_activation_accuracy"));

    let model = out.join("fraction-1/group/repeat-0/model.txt");
    let o = monograd(&["attack-eval", "--config", path_str(&cfg), "--model", path_str(&model)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = String::from_utf8_lossy(&o.stdout);
    assert!(report.contains("\"adversarial_accuracy\"") && report.contains("\"detection_auc\""));
}

#[test]
fn audit_without_a_model_names_the_key() {
    let o = monograd(&["audit"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("audit.model"));
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            let cfg = monograd::experiment::ExperimentConfig::load(&path).unwrap();
            cfg.validate().unwrap();
            seen += 1;
        }
    }
    assert_eq!(seen, 3);
}
