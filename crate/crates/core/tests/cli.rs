mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use colorgan::dataio::{load_image, save_png};
use common::*;
use tempfile::tempdir;

fn colorgan(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_colorgan"))
        .args(args)
        .current_dir(dir)
        .env_remove("COLORGAN_DEVICE")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TOY_CONFIG: &str = r#"
out_dir = "run"

[data]
root = "data"

[train]
batch_size = 4
epochs = 2
seed = 3

[network]
image_size = 16
levels = 2
base_channels = 4
max_channels = 8
head_hidden = 8
disc_channels = [4, 4, 8, 8]
disc_hidden = 8

[network.extractor]
width = 4
"#;

/// Dataset of `colourful` class images plus some gray ones, and the toy config.
fn workspace(colourful_per_class: usize, gray: usize) -> tempfile::TempDir {
    let dir = tempdir().unwrap();
    write_class_dataset(&dir.path().join("data"), 2, colourful_per_class, 20, 1);
    let mut r = rng(2);
    for i in 0..gray {
        save_png(
            &grayscale_image(&mut r, 20, 20),
            &dir.path().join(format!("data/class_0/gray_{i}.png")),
        )
        .unwrap();
    }
    fs::write(dir.path().join("toy.toml"), TOY_CONFIG).unwrap();
    dir
}

fn metric_values(text: &str) -> Vec<(String, f64)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_owned(), v.parse().unwrap()))
        .collect()
}

#[test]
fn prepare_data_counts_and_is_idempotent() {
    let ws = workspace(4, 3);
    let o = colorgan(&["--config", "toy.toml", "prepare-data"], ws.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let count = |key: &str| -> usize {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{key} ")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert_eq!(count("total"), 11);
    assert!(count("surviving") <= 8);
    assert_eq!(
        count("rejected_grayscale") + count("rejected_low_chroma") + count("surviving"),
        count("total")
    );
    let first = fs::read(ws.path().join("run/manifest.tsv")).unwrap();
    assert!(colorgan(&["--config", "toy.toml", "prepare-data"], ws.path())
        .status
        .success());
    assert_eq!(first, fs::read(ws.path().join("run/manifest.tsv")).unwrap());

    fs::create_dir_all(ws.path().join("empty")).unwrap();
    let o = colorgan(&["--config", "toy.toml", "prepare-data", "--root", "empty"], ws.path());
    assert_eq!(o.status.code(), Some(2));
    let o = colorgan(
        &["--config", "toy.toml", "prepare-data", "--root", "nowhere"],
        ws.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_colorize_evaluate() {
    let ws = workspace(5, 0);
    assert!(colorgan(&["--config", "toy.toml", "prepare-data"], ws.path())
        .status
        .success());
    let o = colorgan(&["--config", "toy.toml", "train"], ws.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = ws.path().join("run");
    // 10 images, 1 held out, 9 train -> 2 steps per epoch
    let log = fs::read_to_string(run.join("train.log")).unwrap();
    assert_eq!(log.lines().count(), 4);
    assert!(run.join("ckpt_4.bin").is_file());
    assert!(run.join("config.toml").is_file());
    assert_eq!(fs::read_to_string(run.join("latest")).unwrap().trim(), "ckpt_4.bin");

    // colourize a true single-channel file
    let gray = image::GrayImage::from_fn(30, 18, |x, y| image::Luma([(x * 7 + y * 3) as u8]));
    gray.save(ws.path().join("in.png")).unwrap();
    for out in ["a.png", "b.png"] {
        let o = colorgan(
            &[
                "colorize",
                "--checkpoint",
                "run/ckpt_4.bin",
                "--input",
                "in.png",
                "--output",
                out,
            ],
            ws.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = image::open(ws.path().join("a.png")).unwrap();
    assert_eq!((a.width(), a.height()), (30, 18));
    assert_eq!(a.color(), image::ColorType::Rgb8);
    assert_eq!(
        fs::read(ws.path().join("a.png")).unwrap(),
        fs::read(ws.path().join("b.png")).unwrap()
    );

    fs::write(ws.path().join("corrupt.bin"), b"CLGNARCH garbage").unwrap();
    let o = colorgan(
        &[
            "colorize",
            "--checkpoint",
            "corrupt.bin",
            "--input",
            "in.png",
            "--output",
            "c.png",
        ],
        ws.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    let o = colorgan(
        &[
            "colorize",
            "--checkpoint",
            "run/ckpt_4.bin",
            "--input",
            "nope.png",
            "--output",
            "c.png",
        ],
        ws.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let o = colorgan(
        &[
            "colorize",
            "--checkpoint",
            "missing.bin",
            "--input",
            "in.png",
            "--output",
            "c.png",
        ],
        ws.path(),
    );
    assert_eq!(o.status.code(), Some(2));

    let oracle = colorgan(
        &["--config", "toy.toml", "evaluate", "--oracle", "--key-value"],
        ws.path(),
    );
    assert!(oracle.status.success(), "{}", String::from_utf8_lossy(&oracle.stderr));
    let vals = metric_values(&stdout(&oracle));
    let names: Vec<&str> = vals.iter().map(|(k, _)| k.as_str()).collect();
    assert_eq!(names, ["psnr", "ssim", "mse", "uqi", "vif"]);
    assert_eq!(
        vals.iter().map(|(_, v)| *v).collect::<Vec<_>>(),
        [99.0, 1.0, 0.0, 1.0, 1.0]
    );

    let e1 = colorgan(&["--config", "toy.toml", "evaluate"], ws.path());
    assert!(e1.status.success(), "{}", String::from_utf8_lossy(&e1.stderr));
    let table = stdout(&e1);
    let rows: Vec<&str> = table
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    assert_eq!(rows, ["PSNR", "SSIM", "MSE", "UQI", "VIF"]);
    assert_eq!(
        table,
        stdout(&colorgan(&["--config", "toy.toml", "evaluate"], ws.path()))
    );

    // the truth image survives loading for the held-out split
    assert!(load_image(&ws.path().join("data/class_0/img_000.png")).is_ok());
}

#[test]
fn config_and_environment_errors() {
    let ws = workspace(2, 0);
    fs::write(ws.path().join("bad.toml"), "[train]\nbatch_size = \"many\"\n").unwrap();
    assert_eq!(
        colorgan(&["--config", "bad.toml", "train"], ws.path()).status.code(),
        Some(2)
    );
    fs::write(ws.path().join("typo.toml"), "[trian]\nepochs = 1\n").unwrap();
    assert_eq!(
        colorgan(&["--config", "typo.toml", "train"], ws.path()).status.code(),
        Some(2)
    );
    assert_eq!(
        colorgan(&["--config", "absent.toml", "train"], ws.path()).status.code(),
        Some(2)
    );
    assert_eq!(colorgan(&["frobnicate"], ws.path()).status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_colorgan"))
        .args(["--config", "toy.toml", "prepare-data"])
        .current_dir(ws.path())
        .env("COLORGAN_DEVICE", "cuda:0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_override_changes_training() {
    let ws = workspace(4, 0);
    assert!(colorgan(&["--config", "toy.toml", "prepare-data"], ws.path())
        .status
        .success());
    assert!(colorgan(
        &["--config", "toy.toml", "--out-dir", "r1", "--seed", "1", "train"],
        ws.path()
    )
    .status
    .success());
    assert!(colorgan(
        &["--config", "toy.toml", "--out-dir", "r2", "--seed", "2", "train"],
        ws.path()
    )
    .status
    .success());
    assert!(colorgan(
        &["--config", "toy.toml", "--out-dir", "r3", "--seed", "1", "train"],
        ws.path()
    )
    .status
    .success());
    let log = |d: &str| fs::read_to_string(ws.path().join(d).join("train.log")).unwrap();
    assert_ne!(log("r1"), log("r2"));
    assert_eq!(log("r1"), log("r3"));
}

#[test]
fn ablate_writes_three_runs_and_a_stable_table() {
    let ws = workspace(6, 0);
    assert!(colorgan(&["--config", "toy.toml", "prepare-data"], ws.path())
        .status
        .success());
    let o = colorgan(&["--config", "toy.toml", "ablate"], ws.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let header: Vec<&str> = text.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["metric", "L1", "per", "L1+per"]);
    let table: Vec<&str> = text.lines().take(6).collect();
    assert!(table[1..].iter().all(|l| l.split_whitespace().count() == 4));
    for mode in ["l1_only", "per_only", "l1_plus_per"] {
        let dir = ws.path().join("run/ablation").join(mode);
        assert!(fs::read_dir(&dir)
            .unwrap()
            .any(|e| e.unwrap().file_name().to_string_lossy().starts_with("ckpt_")));
    }
    let saved = fs::read_to_string(ws.path().join("run/ablation/ablation.txt")).unwrap();
    let again = colorgan(&["--config", "toy.toml", "ablate"], ws.path());
    assert_eq!(
        saved,
        fs::read_to_string(ws.path().join("run/ablation/ablation.txt")).unwrap()
    );
    assert!(stdout(&again).starts_with(&saved));
}
