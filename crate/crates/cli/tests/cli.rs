//! End-to-end runs of the `bitshield` binary on a small model.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use bitshield::container::load_model;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bitshield"));
    c.env_remove("BITSHIELD_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A 32x32 model shared by the tests; training takes about a second.
fn small_model() -> &'static Path {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    &DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("small.bsm");
        let o = run(&[
            "gen-model",
            "--seed",
            "3",
            "--hidden",
            "32,32",
            "--epochs",
            "200",
            "--out",
            s(&path),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        (dir, path)
    })
    .1
}

#[test]
fn gen_model_is_deterministic_and_readable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.bsm"), dir.path().join("b.bsm"));
    for p in [&a, &b] {
        let o = run(&[
            "gen-model",
            "--seed",
            "5",
            "--hidden",
            "16,16",
            "--epochs",
            "150",
            "--out",
            s(p),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let out = stdout(&o);
        let acc: f64 = out
            .split("clean accuracy: ")
            .nth(1)
            .and_then(|t| t.split_whitespace().next())
            .and_then(|t| t.parse().ok())
            .expect("accuracy printed");
        assert!(acc >= 0.90, "{out}");
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let (model, manifest) = load_model(&a).unwrap();
    assert_eq!(
        model.to_fp32().parameter_count(),
        2 * 16 + 16 + 16 * 16 + 16 + 16 * 3 + 3
    );
    assert_eq!(manifest.metadata.dataset_seed, Some(5));
}

#[test]
fn encode_reports_overhead() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.bsi");
    let o = run(&[
        "encode",
        "--model",
        s(small_model()),
        "--scheme",
        "mset",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("0 bytes"));

    let o = run(&[
        "encode",
        "--model",
        s(small_model()),
        "--scheme",
        "secded",
        "--line",
        "64",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success());
    // 32x32 model: 1251 parameters, 4 FP16 words per line.
    let lines = 1251u64.div_ceil(4);
    assert!(stdout(&o).contains(&format!("{} bits", lines * 8)), "{}", stdout(&o));
    assert!(bitshield::container::load_image(&out).is_ok());

    let o = run(&[
        "encode",
        "--model",
        s(small_model()),
        "--scheme",
        "cep",
        "--chunk",
        "5",
        "--dtype",
        "fp16",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).lines().count(), 1);
    assert!(stderr(&o).starts_with("error[precondition]"));
}

#[test]
fn campaign_rows_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let o = run(&[
            "campaign",
            "--model",
            s(small_model()),
            "--scheme",
            "none,secded",
            "--bers",
            "1e-5,1e-4,1e-3",
            "--seed",
            "9",
            "--out",
            s(p),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("scheme,line_width,dtype,ber,mean_accuracy,std,iterations,mean_flips,corrected,due")
    );
    assert_eq!(lines.count(), 2 * 3);
}

#[test]
fn campaign_defaults_to_decade_grid_and_announces_seed() {
    let o = run(&["campaign", "--model", s(small_model()), "--max-iterations", "100"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    let bers: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(bers, vec![1e-8, 1e-7, 1e-6, 1e-5, 1e-4]);
    assert!(stderr(&o).contains("seed: "));
}

#[test]
fn bitscan_covers_every_bit() {
    let o = run(&[
        "bitscan",
        "--model",
        s(small_model()),
        "--all-bits",
        "--reps",
        "20",
        "--mode",
        "unprotected",
        "--seed",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1 + 16);

    let o = run(&["bitscan", "--model", s(small_model()), "--bit", "0", "--seed", "1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let header: Vec<&str> = out.lines().next().unwrap().split(',').collect();
    let reps = header.iter().position(|&h| h == "reps").unwrap();
    let within = header.iter().position(|&h| h == "within_0p5pt").unwrap();
    for row in out.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[reps], "1000");
        assert_eq!(cols[within], "1");
    }
}

#[test]
fn chunk_explore_sweeps_feasible_sizes() {
    let o = run(&["chunk-explore", "--model", s(small_model()), "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let sizes: Vec<&str> = out.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(sizes, ["1", "3", "7", "15"]);
    assert!(out.lines().skip(1).all(|l| l.split(',').nth(3) == Some("0.00003")));
}

#[test]
fn verify_runs_the_oracles() {
    let o = run(&[
        "verify", "--scheme", "secded", "--line", "64", "--seed", "1", "--lines", "4",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("72 per line"), "{}", stdout(&o));
    let o = run(&["verify", "--scheme", "cep", "--line", "64", "--seed", "1"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("16 independent groups"));
    let o = run(&["verify", "--scheme", "mset", "--seed", "1"]);
    assert!(o.status.success());
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn report_plots_without_touching_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let svg = dir.path().join("r.svg");
    let o = run(&[
        "campaign",
        "--model",
        s(small_model()),
        "--scheme",
        "none,cep,secded",
        "--bers",
        "1e-4,1e-3",
        "--seed",
        "2",
        "--out",
        s(&csv),
    ]);
    assert!(o.status.success());
    let before = std::fs::read(&csv).unwrap();
    let o = run(&["report", "--in", s(&csv), "--svg", s(&svg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(&csv).unwrap(), before);
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
    assert_eq!(text.matches("<polyline").count(), 3);
    assert!(!text.contains("href") && !text.contains("<image"));

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let o = run(&["report", "--in", s(&empty), "--svg", s(&svg)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exit_codes_follow_the_error_class() {
    let o = run(&["no-such-command"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr(&o).lines().count(), 1);

    let o = run(&[
        "encode",
        "--model",
        s(small_model()),
        "--scheme",
        "parity",
        "--out",
        "/tmp/never.bsi",
    ]);
    assert_eq!(o.status.code(), Some(1));

    let o = run(&["campaign", "--model", "/definitely/missing.bsm"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error[io]"));

    let o = run(&[
        "campaign",
        "--model",
        s(small_model()),
        "--bers",
        "1e-4,1e-5",
        "--seed",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = bin()
        .env("BITSHIELD_THREADS", "many")
        .args(["verify"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn thread_cap_does_not_change_results() {
    let args = [
        "campaign",
        "--model",
        s(small_model()),
        "--scheme",
        "cep",
        "--bers",
        "1e-3",
        "--seed",
        "6",
    ];
    let one = bin().env("BITSHIELD_THREADS", "1").args(args).output().unwrap();
    let many = bin().env("BITSHIELD_THREADS", "4").args(args).output().unwrap();
    assert!(one.status.success() && many.status.success());
    assert_eq!(one.stdout, many.stdout);
}
