use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mula(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mula"))
        .args(args)
        .env_remove("MULA_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/pairs")
}

fn copy_pairs(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    let (i, r) = (dir.join("input"), dir.join("reference"));
    std::fs::create_dir_all(&i).unwrap();
    std::fs::create_dir_all(&r).unwrap();
    for k in 0..n {
        let name = format!("pair_{k:02}.png");
        std::fs::copy(fixtures().join("input").join(&name), i.join(&name)).unwrap();
        std::fs::copy(fixtures().join("reference").join(&name), r.join(&name)).unwrap();
    }
    (i, r)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gradcheck_passes_with_seed_7() {
    let o = mula(&["gradcheck", "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.lines().count() > 20);
    assert!(!out.contains("FAIL"));
}

#[test]
fn train_enhance_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    copy_pairs(dir.path(), 3);
    // Relative paths resolve against the config's directory.
    let cfg = r#"{
        "channel_widths": [4, 8, 8, 16, 16],
        "disc_widths": [4, 8, 8, 16],
        "epochs": 1,
        "seed": 3,
        "input_dir": "input",
        "reference_dir": "reference",
        "output_dir": "run"
    }"#;
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, cfg).unwrap();
    let o = mula(&["train", "--config", s(&cfg_path)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ckpt = dir.path().join("run/final.mlag");
    assert!(ckpt.exists());
    let log = std::fs::read_to_string(dir.path().join("run/runlog.csv")).unwrap();
    assert_eq!(log.lines().count(), 3, "header plus two steps");

    let input = dir.path().join("input");
    std::fs::write(input.join("broken.png"), b"not a png").unwrap();
    let out = dir.path().join("enhanced");
    let o = mula(&["enhance", "--ckpt", s(&ckpt), "--input", s(&input), "--output", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 3);

    let report = dir.path().join("report.csv");
    let o = mula(&[
        "evaluate",
        "--input",
        s(&out),
        "--reference",
        s(&out),
        "--report",
        s(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("ssim 1.0000"));
    let csv = std::fs::read_to_string(&report).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "filename,psnr,ssim,uiqm,uciqe,niqe");
    assert_eq!(csv.lines().count(), 4);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["means"]["ssim"], 1.0);

    let o = mula(&[
        "enhance",
        "--ckpt",
        s(&ckpt),
        "--input",
        s(&input),
        "--output",
        s(&out),
        "--size",
        "48",
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).starts_with("error_code=usage_error"));
}

#[test]
fn fit_niqe_writes_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/clean");
    let model = dir.path().join("niqe.mlag");
    let o = mula(&["fit-niqe", "--corpus", s(&corpus), "--out", s(&model), "--patch", "32"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = dir.path().join("r.csv");
    let o = mula(&[
        "evaluate",
        "--input",
        s(&corpus),
        "--niqe-model",
        s(&model),
        "--report",
        s(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(&report).unwrap();
    // No references: the PSNR and SSIM cells stay empty.
    assert!(csv.lines().nth(1).unwrap().starts_with("clean_00.png,,,"));
}

#[test]
fn exit_codes_follow_the_error_table() {
    let dir = tempfile::tempdir().unwrap();

    let o = mula(&["frobnicate"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).starts_with("error_code=usage_error"));

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"epochs": 1, "learning_rat": 0.1}"#).unwrap();
    let o = mula(&["train", "--config", s(&cfg)]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error_code=config_error"));

    let o = mula(&[
        "enhance",
        "--ckpt",
        "/nonexistent.mlag",
        "--input",
        ".",
        "--output",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).starts_with("error_code=io_error"));

    let garbage = dir.path().join("garbage.mlag");
    std::fs::write(&garbage, b"MLAGxxxx").unwrap();
    let o = mula(&[
        "enhance",
        "--ckpt",
        s(&garbage),
        "--input",
        ".",
        "--output",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).starts_with("error_code=format_error"), "{}", stderr(&o));

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let o = mula(&[
        "evaluate",
        "--input",
        s(&empty),
        "--report",
        s(&dir.path().join("r.csv")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).starts_with("error_code=data_error"));

    let pairs = tempfile::tempdir().unwrap();
    copy_pairs(pairs.path(), 2);
    let wild = dir.path().join("wild.json");
    let text = format!(
        r#"{{"channel_widths": [4, 8, 8, 16, 16], "disc_widths": [4, 8, 8, 16], "epochs": 3, "learning_rate": 1e30,
            "input_dir": "{}", "reference_dir": "{}", "output_dir": "{}"}}"#,
        s(&pairs.path().join("input")),
        s(&pairs.path().join("reference")),
        s(&dir.path().join("wild"))
    );
    std::fs::write(&wild, text).unwrap();
    let o = mula(&["train", "--config", s(&wild)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error_code=training_divergence"));

    let o = mula(&["--help"]);
    assert_eq!(code(&o), 0);
}
