//! The `layergauge` binary: exit codes and outputs.

use std::path::Path;
use std::process::{Command, Output};

use layergauge::report::read_report;
use layergauge::svm_io::load_features;

fn layergauge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layergauge")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    let help = layergauge(&["--help"]);
    assert_eq!(code(&help), 0);
    assert!(String::from_utf8_lossy(&help.stdout).contains("extract"));
    assert_eq!(code(&layergauge(&["--bogus"])), 2);
    assert_eq!(code(&layergauge(&["gen-random", "--arch", "vgg16", "--seed", "1", "--out", "x"])), 2);
}

#[test]
fn gen_random_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.otsw");
    let b = dir.path().join("b.otsw");
    let c = dir.path().join("c.otsw");
    for (path, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        let out = layergauge(&["gen-random", "--arch", "two-block", "--seed", seed, "--out", s(path)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

/// Three tiny images and their manifest.
fn toy_dataset(dir: &Path) -> std::path::PathBuf {
    for (i, shade) in [30u8, 120, 220].into_iter().enumerate() {
        image::RgbImage::from_pixel(8 + i as u32, 10, image::Rgb([shade, shade / 2, 255 - shade]))
            .save(dir.join(format!("im{i}.png")))
            .unwrap();
    }
    let manifest = dir.join("manifest.csv");
    std::fs::write(&manifest, "relativePath,className\nim0.png,a\nim1.png,b\nim2.png,a\n").unwrap();
    manifest
}

#[test]
fn extract_writes_one_row_per_image() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = toy_dataset(dir.path());
    let out_dir = dir.path().join("feat");
    let out = layergauge(&[
        "extract", "--manifest", s(&manifest), "--n", "1", "--variant", "R", "--random-seed", "3", "--out", s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m = load_features(&out_dir.join("features.otsw")).unwrap();
    assert_eq!((m.rows(), m.cols()), (3, 69984));
    assert_eq!(m.labels(), [0, 1, 0]);
}

#[test]
fn extract_rejects_bad_requests() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = toy_dataset(dir.path());
    let out_dir = dir.path().join("feat");
    let base = ["extract", "--manifest", s(&manifest), "--out", s(&out_dir)];
    let with = |extra: &[&str]| layergauge(&[&base[..], extra].concat());
    assert_eq!(code(&with(&["--n", "9", "--variant", "R"])), 2);
    assert_eq!(code(&with(&["--n", "1", "--variant", "Z"])), 2);
    // Pretrained layers without a bundle.
    assert_eq!(code(&with(&["--n", "1", "--variant", "A"])), 2);
    // A bundle path that does not exist.
    let missing = dir.path().join("nope.otsw");
    let out = with(&["--n", "1", "--variant", "A", "--weights", s(&missing)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.otsw"));
}

#[test]
fn run_and_report_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let weights = dir.path().join("edges.otsw");
    let gen = layergauge(&["gen-synthetic", "--per-class", "3", "--size", "24", "--seed", "1", "--out", s(&data)]);
    assert_eq!(code(&gen), 0, "{}", String::from_utf8_lossy(&gen.stderr));
    let w = layergauge(&["gen-edge-weights", "--arch", "two-block", "--out", s(&weights)]);
    assert_eq!(code(&w), 0);
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "arch = 'two-block'\nweights = 'edges.otsw'\nmanifest = 'data/manifest.csv'\nrepeats = 2\nout = 'results'\n\
         [augment]\ncopies_per_image = 1\n[cache]\nmode = 'memory'\n",
    )
    .unwrap();

    assert_eq!(code(&layergauge(&["run", "--config", s(&config), "--repeats", "0"])), 2);

    let out = layergauge(&["run", "--config", s(&config)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let results = dir.path().join("results");
    let report = read_report(&results.join("report.json")).unwrap();
    assert_eq!(report.trials.len(), 2 * 3 * 2);
    assert!(results.join("plot_accuracy.csv").exists());
    assert!(results.join("plot_gains.csv").exists());

    let again = dir.path().join("again");
    let out = layergauge(&["report", "--report", s(&results.join("report.json")), "--out", s(&again)]);
    assert_eq!(code(&out), 0);
    for f in ["plot_accuracy.csv", "plot_gains.csv"] {
        assert_eq!(std::fs::read(results.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap());
    }
}

#[test]
fn run_with_missing_manifest_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "arch = 'two-block'\nmanifest = 'nowhere.csv'\nvariants = ['R']\n").unwrap();
    let out = layergauge(&["run", "--config", s(&config)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.csv"));
}
