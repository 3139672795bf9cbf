use std::path::Path;
use std::process::{Command, Output};

use sparse_ppf::simulation::{study1, FilterKind, Study1Config};

const SMALL_STUDY1: &str = "mode = \"study1\"\n[study1]\nduration = 1.0\ndim = 21\nrealizations = 3\ncv_grid = [0.25, 0.5]\n";

fn sparse_ppf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparse-ppf"))
        .args(args)
        .env("SPARSE_PPF_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn study1_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s1.toml", SMALL_STUDY1);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = sparse_ppf(&["run", "--mode", "study1", "--seed", "7", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (fa, fb) = (csv_files(&a), csv_files(&b));
    assert_eq!(fa.len(), 4);
    assert_eq!(fa, fb);
    let manifest = std::fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed=7"));
    assert!(manifest.contains("file=study1_mse.csv"));
}

#[test]
fn missing_config_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.toml");
    let o = sparse_ppf(&["run", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(missing.to_str().unwrap()), "{err}");
    assert!(err.contains("\"error\":\"config\""), "{err}");
}

#[test]
fn unknown_keys_and_bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "mode = \"study1\"\n[study1]\nrealisations = 3\n");
    assert_eq!(sparse_ppf(&["run", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(sparse_ppf(&["run", "--mode", "study1", "--filters", "kalman"]).status.code(), Some(2));
    assert_eq!(sparse_ppf(&["run", "--mode", "strf", "--ensemble", "3"]).status.code(), Some(2));
    assert_eq!(sparse_ppf(&["run", "--mode", "bogus"]).status.code(), Some(2));
}

#[test]
fn study1_emits_four_series_matching_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s1.toml", SMALL_STUDY1);
    let out = dir.path().join("o");
    let o = sparse_ppf(&["run", "--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    for name in ["study1_mse.csv", "study1_spm.csv"] {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# schema="));
        assert_eq!(lines.next().unwrap(), "window,time,series,value");
        let mut series: Vec<&str> = lines.map(|l| l.split(',').nth(2).unwrap()).collect();
        series.dedup();
        assert_eq!(series, ["l1_ppf1", "l1_ppf0", "ssppf", "sdppf"]);
    }

    let lib_cfg = Study1Config {
        duration: 1.0,
        dim: 21,
        realizations: 3,
        cv_grid: vec![0.25, 0.5],
        seed: 3,
        ..Study1Config::default()
    };
    let res = study1(&lib_cfg).unwrap();
    let summary = std::fs::read_to_string(out.join("study1_summary.csv")).unwrap();
    let row = summary.lines().find(|l| l.starts_with("l1_ppf1,")).unwrap();
    let mse: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(mse, res.steady_mse_db(FilterKind::Ppf1, &[0, 1, 2]));
}

#[test]
fn silent_data_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let spikes: String = std::iter::once("# delta=0.001\n".to_string()).chain((0..200).map(|_| "0\n".to_string())).collect();
    let stim: String = std::iter::once("# pad=4\n".to_string())
        .chain((0..204).map(|i| format!("{}\n", (i as f64 * 0.37).sin() * 0.1)))
        .collect();
    write(dir.path(), "spk.txt", &spikes);
    write(dir.path(), "stim.txt", &stim);
    let cfg = write(
        dir.path(),
        "c.toml",
        "mode = \"custom\"\n[custom]\nspikes = \"spk.txt\"\nstimulus = \"stim.txt\"\ndim = 5\ncv_grid = [0.1, 1.0]\n",
    );
    let out = dir.path().join("o");
    let o = sparse_ppf(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("\"error\":\"numerical\""));
}

#[test]
fn custom_mode_writes_estimates_and_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let n = 3000;
    let stim: Vec<f64> = (0..n + 4).map(|i| ((i * 7919 % 1000) as f64 / 1000.0 - 0.5) * 0.6).collect();
    let mut spikes = String::from("# delta=0.001\n");
    for t in 0..n {
        let e = -2.0 + 3.0 * stim[t + 4 - 1];
        let p = 1.0 / (1.0 + (-e as f64).exp());
        let u = ((t * 104_729) % 9973) as f64 / 9973.0;
        spikes.push_str(if u < p { "1\n" } else { "0\n" });
    }
    let stim_text: String = std::iter::once("# pad=4\n".to_string()).chain(stim.iter().map(|v| format!("{v}\n"))).collect();
    write(dir.path(), "spk.txt", &spikes);
    write(dir.path(), "stim.txt", &stim_text);
    let cfg = write(
        dir.path(),
        "c.toml",
        "mode = \"custom\"\n[custom]\nspikes = \"spk.txt\"\nstimulus = \"stim.txt\"\ndim = 5\nci_coords = [2]\ntrace_every = 500\n",
    );
    let out = dir.path().join("o");
    let o = sparse_ppf(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--stride-ci", "100"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let est = std::fs::read_to_string(out.join("custom_estimates.csv")).unwrap();
    assert_eq!(est.lines().nth(1).unwrap(), "window,time,w0,w1,w2,w3,w4");
    assert_eq!(est.lines().count(), 2 + n / 500);
    let ci = std::fs::read_to_string(out.join("custom_ci.csv")).unwrap();
    assert_eq!(ci.lines().count(), 2 + n / 100);
    assert!(out.join("custom_rate.csv").exists());
}
