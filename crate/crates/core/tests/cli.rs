//! End-to-end runs of the binary on a tiny geometry. Every artifact is
//! parsed here from raw bytes rather than through the crate's readers.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_csi-p2d");

const TINY: &str = r#"{
    "n_samples": 24,
    "channel": {"n_b": 4, "n_f": 64, "n_t": 8, "n_paths": 3, "max_delay_tap": 6},
    "dr_f": [0.25, 0.125],
    "d": [1, 2],
    "cr": [0.5],
    "timeslots": 3,
    "cr_t1": 0.5,
    "train": {"epochs": 2, "batch_size": 8},
    "ista": {"n_blocks": 2}
}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("cfg.json");
    if !cfg.exists() {
        fs::write(&cfg, TINY).unwrap();
    }
    let out = Command::new(BIN)
        .args(["--config", cfg.to_str().unwrap(), "--seed", "3", "--out", dir.to_str().unwrap()])
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn u32_at(b: &[u8], at: usize) -> usize {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap()) as usize
}

/// Splits a checkpoint into its JSON header and f64 payload.
fn read_checkpoint(path: &Path) -> (Value, Vec<f64>) {
    let b = fs::read(path).unwrap();
    let n = u32_at(&b, 0);
    let header: Value = serde_json::from_slice(&b[4..4 + n]).unwrap();
    let body = &b[4 + n..];
    assert_eq!(body.len() % 8, 0);
    let vals = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    (header, vals)
}

fn ista_param_count(h: &Value) -> usize {
    let n = h["n_total"].as_u64().unwrap() as usize;
    let m = h["m"].as_u64().unwrap() as usize;
    let cfg = &h["config"];
    let p = cfg["patch_len"].as_u64().unwrap() as usize;
    let c = cfg["channels"].as_u64().unwrap() as usize;
    let blocks = cfg["n_blocks"].as_u64().unwrap() as usize;
    2 * m * n + blocks * (2 + 2 * p * c + 2 * c * c)
}

#[test]
fn generate_writes_dcst() {
    let tmp = tempfile::tempdir().unwrap();
    run(tmp.path(), &["generate"]);
    let b = fs::read(tmp.path().join("dataset.dcst")).unwrap();
    assert_eq!(&b[..4], b"DCST");
    let (n, t, nb, nf) = (u32_at(&b, 6), u32_at(&b, 10), u32_at(&b, 14), u32_at(&b, 18));
    // Single-shot modes need one timeslot per sequence.
    assert_eq!((n, t, nb, nf), (24, 1, 4, 64));
    let payload = 22 + n * t * nb * nf * 16;
    let n_train = u32_at(&b, payload);
    assert_eq!(n_train, 18);
    assert_eq!(b.len(), payload + 4 + 4 * n_train);
    let mut idx: Vec<usize> = (0..n_train).map(|k| u32_at(&b, payload + 4 + 4 * k)).collect();
    idx.sort_unstable();
    idx.dedup();
    assert_eq!(idx.len(), n_train);
    assert!(idx.iter().all(|&i| i < n));
    let m: Value = serde_json::from_slice(&fs::read(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "generate");
    assert_eq!(m["config"]["seed"], 3);
}

#[test]
fn chain_mode_generates_sequences() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("cfg.json"), TINY.replace("\"n_samples\": 24", "\"mode\": \"chain\", \"n_samples\": 24")).unwrap();
    run(tmp.path(), &["generate"]);
    let b = fs::read(tmp.path().join("dataset.dcst")).unwrap();
    assert_eq!(u32_at(&b, 10), 3);
}

#[test]
fn seed_flag_changes_data_and_repeats_exactly() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    run(a.path(), &["generate"]);
    run(b.path(), &["generate"]);
    fs::write(c.path().join("cfg.json"), TINY).unwrap();
    let out = Command::new(BIN)
        .args(["--config", c.path().join("cfg.json").to_str().unwrap(), "--seed", "4", "--out", c.path().to_str().unwrap(), "generate"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let read = |d: &Path| fs::read(d.join("dataset.dcst")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_ne!(read(a.path()), read(c.path()));
}

#[test]
fn p2d_eval_writes_results_and_charts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["p2d-eval"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("wrote"));
    let csv = fs::read_to_string(tmp.path().join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "dr_f,d,cr,timeslot,codec,nmse_db,wall_seconds");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // Grid order: dr_f outer, d inner. (0.125, 2) is valid since the stride is 8.
    let keys: Vec<(&str, &str)> = rows.iter().map(|r| (r[0], r[1])).collect();
    assert_eq!(keys, [("0.250000", "1"), ("0.250000", "2"), ("0.125000", "1"), ("0.125000", "2")]);
    for r in &rows {
        assert_eq!(r.len(), 7);
        assert_eq!(r[4], "p2d");
        for f in [r[0], r[2], r[5], r[6]] {
            let frac = f.trim_start_matches('-').split('.').nth(1).unwrap();
            assert_eq!(frac.len(), 6, "{f} is not %.6f");
        }
        // Noise-free and leakage-free with m_f >= n_t: exact recovery.
        assert!(r[5].parse::<f64>().unwrap() < -100.0, "{r:?}");
        assert_eq!(r[6], "0.000000");
    }
    let svgs: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "svg"))
        .collect();
    assert_eq!(svgs.len(), 1);
    let svg = fs::read_to_string(svgs[0].path()).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert!(svg.trim_end().ends_with("</svg>"));
    assert!(tmp.path().join("timings.csv").exists());
}

#[test]
fn plot_redraws_from_csv() {
    let tmp = tempfile::tempdir().unwrap();
    run(tmp.path(), &["p2d-eval"]);
    let svg = |d: &Path| {
        fs::read_dir(d)
            .unwrap()
            .filter_map(|e| e.ok())
            .find(|e| e.path().extension().is_some_and(|x| x == "svg"))
            .map(|e| (e.file_name(), fs::read(e.path()).unwrap()))
            .unwrap()
    };
    let before = svg(tmp.path());
    let other = tempfile::tempdir().unwrap();
    fs::write(other.path().join("cfg.json"), TINY).unwrap();
    let input = tmp.path().join("results.csv");
    run(other.path(), &["plot", "--input", input.to_str().unwrap()]);
    assert_eq!(svg(other.path()), before);
}

#[test]
fn train_writes_checkpoint_history_and_pattern() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["train"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("validation NMSE"));

    let (h, vals) = read_checkpoint(&tmp.path().join("codec.ckpt"));
    assert_eq!(h["kind"], "ista");
    assert_eq!(h["n_total"], 2 * 4 * 8);
    assert_eq!(h["m"], 32);
    assert_eq!(vals.len(), ista_param_count(&h));
    assert!(vals.iter().all(|v| v.is_finite()));

    let hist = fs::read_to_string(tmp.path().join("history.csv")).unwrap();
    let mut lines = hist.lines();
    assert_eq!(lines.next().unwrap(), "epoch,train_mse,val_mse,l_sym");
    let recs: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(recs.len(), 2);
    for (k, r) in recs.iter().enumerate() {
        assert_eq!(r[0] as usize, k + 1);
        assert!(r[1..].iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    let p: Value = serde_json::from_slice(&fs::read(tmp.path().join("pattern.json")).unwrap()).unwrap();
    assert_eq!(p, serde_json::json!({"n_f": 64, "m_f": 16, "d": 1}));
}

#[test]
fn chain_train_writes_manifest_and_codecs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["chain-train"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).matches("validation NMSE").count(), 3);
    let dir = tmp.path().join("chain");
    let m: Value = serde_json::from_slice(&fs::read(dir.join("chain.json")).unwrap()).unwrap();
    assert_eq!(m["timeslots"], 3);
    assert_eq!((m["n_b"].as_u64(), m["n_t"].as_u64()), (Some(4), Some(8)));
    assert_eq!(m["gamma_ls"].as_array().unwrap().len(), 2);
    let codecs = m["codecs"].as_array().unwrap();
    assert_eq!(codecs.len(), 3);
    assert_eq!(codecs[0]["cr"], 0.5);
    for (t, c) in codecs.iter().enumerate() {
        let file = c["file"].as_str().unwrap();
        assert_eq!(file, format!("codec_{}.ckpt", t + 1));
        let (h, vals) = read_checkpoint(&dir.join(file));
        assert_eq!(h["kind"], c["kind"]);
        assert_eq!(vals.len(), ista_param_count(&h));
    }
    for t in 1..=3 {
        assert!(tmp.path().join(format!("history_t{t}.csv")).exists());
    }
}

#[test]
fn sweep_is_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        fs::write(d.path().join("cfg.json"), TINY.replace("\"n_samples\": 24", "\"mode\": \"codec\", \"n_samples\": 24")).unwrap();
        run(d.path(), &["sweep"]);
    }
    let read = |d: &Path| fs::read(d.join("results.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"no_such_key": 1}"#).unwrap();
    let out = Command::new(BIN).args(["--config", cfg.to_str().unwrap(), "generate"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = Command::new(BIN).args(["--profile", "huge", "generate"]).output().unwrap();
    assert!(!out.status.success());

    let missing = tmp.path().join("missing.csv");
    let out = Command::new(BIN)
        .args(["--out", tmp.path().to_str().unwrap(), "plot", "--input", missing.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
