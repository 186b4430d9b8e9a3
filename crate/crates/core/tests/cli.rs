// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

use tdcsync::calibration::CalibrationTable;
use tdcsync::cli::{
    ALIGNMENTS_FILE, REPORT_FILE, RESIDUALS_FILE, RESIDUAL_HISTOGRAM_FILE, TABLE_FILE,
};
use tdcsync::config::SimConfig;
use tdcsync::io::{self, RunManifest};
use tdcsync::montecarlo::SyncReport;
use tdcsync::stats;

fn tdcsync(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdcsync"))
        .args(args)
        .output()
        .unwrap()
}

fn small_config(dir: &Path) -> String {
    let mut cfg = SimConfig {
        num_trials: 20,
        num_events: 200_000,
        ..SimConfig::default()
    };
    cfg.alignment.num_samples = 256;
    let p = dir.join("run.json");
    std::fs::write(&p, cfg.to_canonical_json()).unwrap();
    p.to_str().unwrap().to_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn malformed_json_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\n  \"num_trials\": 3,\n  \"tdl\": {\n}").unwrap();
    let out = tdcsync(&[
        "calibrate",
        "--config",
        p(&cfg),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 4") && err.contains("column"), "{err}");
}

#[test]
fn invalid_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"acquisition": {"bubble_depth": 2, "bubble_probability": 1.5}}"#,
    )
    .unwrap();
    let out = tdcsync(&[
        "calibrate",
        "--config",
        p(&cfg),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("bubble_probability"));
}

#[test]
fn one_trial_gives_one_row_per_slave() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_dir = dir.path().join("s");
    let out = tdcsync(&[
        "sync",
        "--config",
        &cfg,
        "--auto-calibrate",
        "--trials",
        "1",
        "--out",
        p(&out_dir),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = io::read_residuals_csv(&out_dir.join(RESIDUALS_FILE)).unwrap();
    let slaves: Vec<usize> = rows.iter().map(|r| r.channel).collect();
    assert_eq!(slaves, (1..8).collect::<Vec<_>>());
    assert!(rows.iter().all(|r| r.trial == 0));
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = |name: &str, seed: &str| {
        let d = dir.path().join(name);
        let out = tdcsync(&[
            "sync",
            "--config",
            &cfg,
            "--auto-calibrate",
            "--seed",
            seed,
            "--out",
            p(&d),
        ]);
        assert!(out.status.success());
        std::fs::read(d.join(REPORT_FILE)).unwrap()
    };
    assert_eq!(run("a", "7"), run("b", "7"));
    assert_ne!(run("a", "7"), run("c", "8"));
}

#[test]
fn sync_without_table_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = tdcsync(&["sync", "--config", &cfg, "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("--auto-calibrate"));
}

#[test]
fn sync_uses_stored_table_and_rejects_corrupt_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = small_config(dir.path());
    let cal = dir.path().join("cal");
    assert!(
        tdcsync(&["calibrate", "--config", &cfg_path, "--out", p(&cal)])
            .status
            .success()
    );

    let mut cfg = SimConfig::load(Path::new(&cfg_path)).unwrap();
    cfg.table_path = Some(Path::new("cal").join(TABLE_FILE));
    std::fs::write(&cfg_path, cfg.to_canonical_json()).unwrap();
    let out = tdcsync(&[
        "sync",
        "--config",
        &cfg_path,
        "--out",
        p(&dir.path().join("s")),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let table_path = cal.join(TABLE_FILE);
    let mut table: CalibrationTable = io::read_json(&table_path).unwrap();
    table.counts[10] += 500;
    std::fs::write(&table_path, io::json_bytes(&table)).unwrap();
    let out = tdcsync(&[
        "sync",
        "--config",
        &cfg_path,
        "--out",
        p(&dir.path().join("s2")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inspect_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cal = dir.path().join("cal");
    assert!(tdcsync(&["calibrate", "--config", &cfg, "--out", p(&cal)])
        .status
        .success());
    let table_path = cal.join(TABLE_FILE);

    let out = tdcsync(&["inspect", p(&table_path)]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for label in ["mean bin width", "max |DNL|", "max |INL|", "INL period"] {
        assert!(text.contains(label), "{label}: {text}");
    }

    // Edit one count in the JSON text itself.
    let original = std::fs::read_to_string(&table_path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&original).unwrap();
    let c = v["counts"][5].as_u64().unwrap();
    let mut edited: serde_json::Value = v.clone();
    edited["counts"][5] = serde_json::json!(c + 1000);
    std::fs::write(&table_path, serde_json::to_string_pretty(&edited).unwrap()).unwrap();
    let out = tdcsync(&["inspect", p(&table_path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL"));

    let mut wrong_version = v;
    wrong_version["version"] = serde_json::json!(99);
    std::fs::write(&table_path, serde_json::to_string(&wrong_version).unwrap()).unwrap();
    assert_eq!(tdcsync(&["inspect", p(&table_path)]).status.code(), Some(2));

    assert_eq!(
        tdcsync(&["inspect", p(&dir.path().join("missing.json"))])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn exported_csv_reproduces_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_dir = dir.path().join("s");
    assert!(tdcsync(&[
        "sync",
        "--config",
        &cfg,
        "--auto-calibrate",
        "--out",
        p(&out_dir)
    ])
    .status
    .success());
    let report: SyncReport = io::read_json(&out_dir.join(REPORT_FILE)).unwrap();

    let rows = io::read_residuals_csv(&out_dir.join(RESIDUALS_FILE)).unwrap();
    let ok: Vec<f64> = rows
        .iter()
        .filter(|r| r.converged)
        .map(|r| r.residual_ps)
        .collect();
    assert_eq!(
        stats::rms_about_mean(&ok).to_bits(),
        report.rms_ps.to_bits()
    );
    assert_eq!(stats::mean(&ok).to_bits(), report.mean_ps.to_bits());
    assert_eq!(
        stats::max_abs_deviation(&ok).to_bits(),
        report.max_abs_deviation_ps.to_bits()
    );
    let rate = ok.len() as f64 / rows.len() as f64;
    assert_eq!(rate, report.convergence_rate);

    let aligned = io::read_alignments_csv(&out_dir.join(ALIGNMENTS_FILE)).unwrap();
    assert_eq!(aligned.len(), report.residuals.len());
    for (a, r) in aligned.iter().zip(&report.residuals) {
        assert_eq!(
            (a.trial, a.iterations, a.pi_code),
            (r.trial, r.iterations, r.pi_code)
        );
        assert_eq!(a.residual_ps.to_bits(), r.residual_ps.to_bits());
    }

    let bins = io::read_residual_histogram_csv(&out_dir.join(RESIDUAL_HISTOGRAM_FILE)).unwrap();
    assert_eq!(bins, report.histogram);
    assert_eq!(bins.iter().map(|b| b.count).sum::<u64>() as usize, ok.len());
}

#[test]
fn histogram_csv_matches_table_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cal = dir.path().join("cal");
    assert!(tdcsync(&["calibrate", "--config", &cfg, "--out", p(&cal)])
        .status
        .success());
    let table = io::read_table(&cal.join(TABLE_FILE)).unwrap();
    let rows = io::read_histogram_csv(&cal.join("histogram.csv")).unwrap();
    let counts: Vec<u64> = rows.iter().map(|r| r.count).collect();
    assert_eq!(counts, table.counts);
    let rebuilt = CalibrationTable::from_counts(counts, table.clock_period).unwrap();
    assert_eq!(rebuilt, table);
}

#[test]
fn one_manifest_describing_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_dir = dir.path().join("s");
    for _ in 0..2 {
        let out = tdcsync(&[
            "sync",
            "--config",
            &cfg,
            "--auto-calibrate",
            "--out",
            p(&out_dir),
        ]);
        assert!(out.status.success());
    }
    let manifests = std::fs::read_dir(&out_dir)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .contains("manifest")
        })
        .count();
    assert_eq!(manifests, 1);
    let m: RunManifest = io::read_json(&out_dir.join(io::MANIFEST_FILE)).unwrap();
    let config_bytes = std::fs::read(out_dir.join(io::CONFIG_FILE)).unwrap();
    assert_eq!(m.config_digest, io::sha256_hex(&config_bytes));
    assert_eq!(m.master_seed, 1);
    assert!(m.finished_unix_ms >= m.started_unix_ms);
    for o in &m.outputs {
        assert_eq!(
            io::sha256_hex(&std::fs::read(out_dir.join(&o.file)).unwrap()),
            o.sha256
        );
    }
    // Every file except the manifest is listed.
    let on_disk = std::fs::read_dir(&out_dir).unwrap().count();
    assert_eq!(m.outputs.len() + 1, on_disk);
}
