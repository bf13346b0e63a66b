use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SCENARIO: &str = r#"
name = "cli-small"
seed = 5
samples_per_label = 10
train_fraction = 0.6

[sim]
modes = 64
height = 40
width = 40
model_seed = 2

[noise]
read_noise_sigma = 0.05

[jitter]
position = 0.003
depth = 0.05

[[labels]]
name = "A"
position = 0.2
depth = 8.0

[[labels]]
name = "B"
position = 0.8
depth = 8.0

[[labels]]
name = "None"

[experiment]
n_list = [3, 9, 18]
p_list = [0.5, 1.0]
n_new_list = [2, 4]
"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speckle-hdc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    bin(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, text: &str) -> std::path::PathBuf {
    let cfg = dir.join("scenario.toml");
    fs::write(&cfg, text).unwrap();
    let data = dir.join("data");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&data)]);
    data
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = simulate(tmp.path(), SCENARIO);
    let b = tmp.path().join("again");
    ok(&["simulate", "--config", s(&tmp.path().join("scenario.toml")), "--out", s(&b)]);
    let manifest = fs::read_to_string(a.join("manifest.csv")).unwrap();
    assert_eq!(manifest, fs::read_to_string(b.join("manifest.csv")).unwrap());
    assert_eq!(manifest.lines().filter(|l| l.ends_with(".pgm") || l.contains(".pgm,")).count(), 30);
    for entry in fs::read_dir(a.join("frames")).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            fs::read(a.join("frames").join(&name)).unwrap(),
            fs::read(b.join("frames").join(&name)).unwrap()
        );
    }
    let c = tmp.path().join("reseeded");
    ok(&["simulate", "--config", s(&tmp.path().join("scenario.toml")), "--out", s(&c), "--seed", "6"]);
    assert_ne!(manifest, fs::read_to_string(c.join("manifest.csv")).unwrap());
}

#[test]
fn train_eval_sweep_recalibrate_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), SCENARIO);
    let model = tmp.path().join("model.hdcm");
    let report = ok(&["train", "--dataset", s(&data), "--model", s(&model)]);
    assert!(report.contains("N=18 L=3 D=1600"), "{report}");
    assert!(report.contains("train_time_s="));
    let first = fs::read(&model).unwrap();
    ok(&["train", "--dataset", s(&data), "--model", s(&model)]);
    assert_eq!(fs::read(&model).unwrap(), first);

    let confusion = tmp.path().join("confusion.csv");
    let eval = ok(&["eval", "--dataset", s(&data), "--model", s(&model), "--out", s(&confusion)]);
    assert!(eval.contains("accuracy"), "{eval}");
    let csv = fs::read_to_string(&confusion).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let sweep = ok(&["sweep-n", "--dataset", s(&data)]);
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines[0], "n,per_class,accuracy");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("3,1,"));
    let sweep2 = ok(&["sweep-n", "--dataset", s(&data), "--n-list", "6,18"]);
    assert_eq!(sweep2.lines().count(), 3);

    let grid = ok(&["recalibrate", "--model", s(&model), "--dataset", s(&data)]);
    let rows: Vec<&str> = grid.lines().collect();
    assert_eq!(rows[0], "p,n_new,acc_before,acc_after");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("0.5,2,"));

    let updated = tmp.path().join("updated.hdcm");
    let one = ok(&[
        "recalibrate", "--model", s(&model), "--dataset", s(&data), "--p", "0", "--n-new", "3", "--seed", "4",
        "--out", s(&updated),
    ]);
    let fields: Vec<&str> = one.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(fields[2], fields[3], "p = 0 must not change accuracy");
    assert!(updated.exists());
    assert_eq!(
        code(&["recalibrate", "--model", s(&model), "--dataset", s(&data), "--p", "0.5,1", "--n-new", "3", "--out", s(&updated)]),
        2
    );

    let out = tmp.path().join("analysis");
    let text = ok(&["analyze", "--dataset", s(&data), "--model", s(&model), "--out", s(&out)]);
    assert!(text.contains("matrix,contrast"));
    for name in ["speckle", "hv", "prototype"] {
        let m = fs::read_to_string(out.join(format!("{name}.csv"))).unwrap();
        assert_eq!(m.lines().count(), 4, "{name}");
        assert!(m.starts_with(&format!("{name},A,B,None")));
    }
    assert_eq!(fs::read_to_string(out.join("contrast.csv")).unwrap().lines().count(), 4);
}

#[test]
fn exit_codes_distinguish_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "name = \"x\"\nseed = 1\nsamples_per_label = 0\n[sim]\nmodes = 4\nheight = 4\nwidth = 4\nmodel_seed = 1\n").unwrap();
    assert_eq!(code(&["simulate", "--config", s(&bad), "--out", s(tmp.path())]), 2);
    assert_eq!(code(&["simulate", "--config", s(&tmp.path().join("missing.toml")), "--out", s(tmp.path())]), 3);
    assert_eq!(code(&["train", "--dataset", s(&tmp.path().join("nowhere")), "--model", "m.hdcm"]), 3);
    assert_eq!(code(&["frobnicate"]), 2);

    let data = simulate(tmp.path(), SCENARIO);
    let model = tmp.path().join("model.hdcm");
    ok(&["train", "--dataset", s(&data), "--model", s(&model)]);
    let other_dir = tmp.path().join("other");
    fs::create_dir(&other_dir).unwrap();
    let other = simulate(&other_dir, &SCENARIO.replace("height = 40", "height = 20"));
    assert_eq!(code(&["eval", "--dataset", s(&other), "--model", s(&model)]), 4);

    let out = Command::new(env!("CARGO_BIN_EXE_speckle-hdc"))
        .args(["train", "--dataset", s(&data), "--model", s(&model)])
        .env("HDC_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_speckle-hdc"))
        .args(["train", "--dataset", s(&data), "--model", s(&model)])
        .env("HDC_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
}
