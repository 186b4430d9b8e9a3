// SPDX-License-Identifier: Apache-2.0

//! The `calibrate`, `sync` and `inspect` commands.
//!
//! Each command takes its output stream explicitly so it can be driven from
//! tests. Exit codes: 0 success, 1 config, validation or I/O error, 2 an input
//! table that breaks its own invariants.

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::calibration::{
    derive_table, run_code_density, table_stats, CalibrationTable, InvariantViolation, TableStats,
};
use crate::config::{ConfigError, Overrides, SimConfig};
use crate::io::{self, IoError, RunManifest, RunWriter};
use crate::montecarlo::{self, Bench, CampaignError, SyncReport};
use crate::rng::{self, Domain};
use crate::tdl::build_tdl;

pub const TABLE_FILE: &str = "calibration.json";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const STATS_FILE: &str = "stats.json";
pub const REPORT_FILE: &str = "sync_report.json";
pub const RESIDUALS_FILE: &str = "residuals.csv";
pub const ALIGNMENTS_FILE: &str = "alignments.csv";
pub const RESIDUAL_HISTOGRAM_FILE: &str = "residual_histogram.csv";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid config: {0}")]
    Campaign(#[from] CampaignError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("no calibration table: set table_path in the config or pass --auto-calibrate")]
    MissingTable,
    #[error("table {path} does not fit the configured line: {reason}")]
    TableMismatch { path: PathBuf, reason: String },
    #[error("table {path} fails {}", describe(.violations))]
    InvalidTable {
        path: PathBuf,
        violations: Vec<InvariantViolation>,
    },
    #[error("cannot write to stdout: {0}")]
    Stdout(#[from] std::io::Error),
}

fn describe(v: &[InvariantViolation]) -> String {
    v.iter()
        .map(|x| format!("{} ({})", x.name, x.detail))
        .collect::<Vec<_>>()
        .join("; ")
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::InvalidTable { .. } => 2,
            _ => 1,
        }
    }
}

/// Options shared by `calibrate` and `sync`.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub overrides: Overrides,
}

fn resolve_config(opts: &RunOptions) -> Result<SimConfig, CliError> {
    let mut cfg = match &opts.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    cfg.apply(&opts.overrides);
    cfg.validate()?;
    Ok(cfg)
}

/// Calibrates the configured line and records the table inside `w`.
fn calibrate_into(cfg: &SimConfig, w: &mut RunWriter) -> Result<(Bench, TableStats), CliError> {
    let tdl = build_tdl(&cfg.tdl).map_err(CampaignError::from)?;
    let mut rng = rng::stream(cfg.master_seed, Domain::Calibration, 0);
    let hist = run_code_density(&tdl, &cfg.acquisition, cfg.num_events, &mut rng);
    let table = derive_table(&hist).map_err(CampaignError::from)?;
    let stats = table_stats(&table);
    w.write(TABLE_FILE, &io::json_bytes(&table))?;
    w.write(HISTOGRAM_FILE, &io::histogram_csv(&hist))?;
    w.write(STATS_FILE, &io::json_bytes(&stats))?;
    Ok((Bench { tdl, table }, stats))
}

fn print_stats(out: &mut impl Write, s: &TableStats) -> std::io::Result<()> {
    writeln!(out, "populated bins: {}", s.populated_bins)?;
    writeln!(out, "mean bin width: {:.3} ps", s.mean_bin_width_ps)?;
    writeln!(out, "max |DNL|: {:.3} LSB", s.max_abs_dnl)?;
    writeln!(out, "max |INL|: {:.3} LSB", s.max_abs_inl)?;
    match s.inl_period_bins {
        Some(p) => writeln!(out, "INL period: {p} bins"),
        None => writeln!(out, "INL period: none"),
    }
}

pub fn cmd_calibrate(opts: &RunOptions, out: &mut impl Write) -> Result<RunManifest, CliError> {
    let cfg = resolve_config(opts)?;
    let mut w = RunWriter::create(
        &opts.out_dir,
        "calibrate",
        cfg.master_seed,
        &cfg.to_canonical_json(),
    )?;
    let (_, stats) = calibrate_into(&cfg, &mut w)?;
    print_stats(out, &stats)?;
    Ok(w.finish()?)
}

/// Loads a table and rejects it unless it is self-consistent.
pub fn load_checked_table(path: &Path) -> Result<CalibrationTable, CliError> {
    let table = io::read_table(path)?;
    let violations = table.check_invariants();
    if !violations.is_empty() {
        return Err(CliError::InvalidTable {
            path: path.to_owned(),
            violations,
        });
    }
    Ok(table)
}

fn load_bench(cfg: &SimConfig, path: &Path) -> Result<Bench, CliError> {
    let table = load_checked_table(path)?;
    let tdl = build_tdl(&cfg.tdl).map_err(CampaignError::from)?;
    let mismatch = |reason: String| CliError::TableMismatch {
        path: path.to_owned(),
        reason,
    };
    if table.max_code() != tdl.num_taps() {
        return Err(mismatch(format!(
            "{} codes for a {}-tap line",
            table.max_code() + 1,
            tdl.num_taps()
        )));
    }
    if table.clock_period != tdl.clock_period() {
        return Err(mismatch(format!(
            "clock period {} ps, config has {} ps",
            table.clock_period,
            tdl.clock_period()
        )));
    }
    Ok(Bench { tdl, table })
}

pub fn cmd_sync(
    opts: &RunOptions,
    baseline: bool,
    auto_calibrate: bool,
    out: &mut impl Write,
) -> Result<RunManifest, CliError> {
    let cfg = resolve_config(opts)?;
    if cfg.table_path.is_none() && !auto_calibrate {
        return Err(CliError::MissingTable);
    }
    let mut w = RunWriter::create(
        &opts.out_dir,
        "sync",
        cfg.master_seed,
        &cfg.to_canonical_json(),
    )?;
    let bench = match (&cfg.table_path, auto_calibrate) {
        (_, true) => calibrate_into(&cfg, &mut w)?.0,
        (Some(p), false) => load_bench(&cfg, p)?,
        (None, false) => unreachable!("checked above"),
    };
    let trials = cfg.trial_config();
    let (report, base) = if baseline {
        let cmp = montecarlo::compare_methods_on(&trials, &bench)?;
        (cmp.tdc, Some(cmp.baseline))
    } else {
        (montecarlo::run_trials_on(&trials, &bench)?, None)
    };
    write_report(&mut w, &report)?;

    writeln!(out, "channels aligned: {}", report.residuals.len())?;
    writeln!(out, "convergence rate: {:.4}", report.convergence_rate)?;
    writeln!(out, "mean skew: {:.3} ps", report.mean_ps)?;
    writeln!(out, "rms: {:.3} ps", report.rms_ps)?;
    writeln!(out, "max deviation: {:.3} ps", report.max_abs_deviation_ps)?;
    if let Some(b) = base {
        writeln!(out, "baseline rms: {:.3} ps", b.rms_ps)?;
        writeln!(
            out,
            "baseline max deviation: {:.3} ps",
            b.max_abs_deviation_ps
        )?;
        writeln!(out, "rms ratio: {:.2}", b.rms_ps / report.rms_ps)?;
    }
    Ok(w.finish()?)
}

fn write_report(w: &mut RunWriter, report: &SyncReport) -> Result<(), CliError> {
    w.write(REPORT_FILE, &io::json_bytes(report))?;
    w.write(RESIDUALS_FILE, &io::residuals_csv(&report.residuals))?;
    w.write(ALIGNMENTS_FILE, &io::alignments_csv(&report.residuals))?;
    w.write(
        RESIDUAL_HISTOGRAM_FILE,
        &io::residual_histogram_csv(&report.histogram),
    )?;
    Ok(())
}

/// Prints the table statistics and the outcome of each invariant check.
pub fn cmd_inspect(table_path: &Path, out: &mut impl Write) -> Result<TableStats, CliError> {
    let table = io::read_table(table_path)?;
    let violations = table.check_invariants();
    if violations
        .iter()
        .any(|v| v.name == "version" || v.name == "lengths")
    {
        return Err(CliError::InvalidTable {
            path: table_path.to_owned(),
            violations,
        });
    }
    let stats = table_stats(&table);
    print_stats(out, &stats)?;
    for v in &violations {
        writeln!(out, "FAIL {}: {}", v.name, v.detail)?;
    }
    if !violations.is_empty() {
        return Err(CliError::InvalidTable {
            path: table_path.to_owned(),
            violations,
        });
    }
    writeln!(out, "all invariants hold")?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tdl::TdlConfig;

    fn small_config(dir: &Path) -> PathBuf {
        let mut cfg = SimConfig {
            num_trials: 3,
            num_channels: 3,
            num_events: 200_000,
            ..SimConfig::default()
        };
        cfg.alignment.num_samples = 64;
        let p = dir.join("in.json");
        std::fs::write(&p, cfg.to_canonical_json()).unwrap();
        p
    }

    fn opts(config: Option<PathBuf>, out: &Path) -> RunOptions {
        RunOptions {
            config,
            out_dir: out.to_owned(),
            overrides: Overrides::default(),
        }
    }

    #[test]
    fn calibrate_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let out_dir = dir.path().join("cal");
        let mut out = Vec::new();
        let m = cmd_calibrate(&opts(Some(cfg), &out_dir), &mut out).unwrap();
        let names: Vec<_> = m.outputs.iter().map(|o| o.file.as_str()).collect();
        assert_eq!(
            names,
            [io::CONFIG_FILE, TABLE_FILE, HISTOGRAM_FILE, STATS_FILE]
        );
        for o in &m.outputs {
            let bytes = std::fs::read(out_dir.join(&o.file)).unwrap();
            assert_eq!(io::sha256_hex(&bytes), o.sha256, "{}", o.file);
        }
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("mean bin width"), "{text}");
        let stats = cmd_inspect(&out_dir.join(TABLE_FILE), &mut Vec::new()).unwrap();
        let stored: TableStats = io::read_json(&out_dir.join(STATS_FILE)).unwrap();
        assert_eq!(stats, stored);
    }

    #[test]
    fn sync_requires_a_table() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let err =
            cmd_sync(&opts(Some(cfg), dir.path()), false, false, &mut Vec::new()).unwrap_err();
        assert!(matches!(err, CliError::MissingTable));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn sync_from_stored_table_matches_auto_calibration() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = small_config(dir.path());
        let auto_dir = dir.path().join("auto");
        cmd_sync(
            &opts(Some(cfg_path.clone()), &auto_dir),
            false,
            true,
            &mut Vec::new(),
        )
        .unwrap();

        let mut cfg = SimConfig::load(&cfg_path).unwrap();
        cfg.table_path = Some(PathBuf::from("auto").join(TABLE_FILE));
        std::fs::write(&cfg_path, cfg.to_canonical_json()).unwrap();
        let stored_dir = dir.path().join("stored");
        cmd_sync(
            &opts(Some(cfg_path), &stored_dir),
            false,
            false,
            &mut Vec::new(),
        )
        .unwrap();

        let a = std::fs::read(auto_dir.join(REPORT_FILE)).unwrap();
        let b = std::fs::read(stored_dir.join(REPORT_FILE)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_table_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let table = CalibrationTable::from_counts(vec![5; 11], 6400.0).unwrap();
        let tp = dir.path().join("t.json");
        std::fs::write(&tp, io::json_bytes(&table)).unwrap();
        let cfg = SimConfig {
            table_path: Some(tp),
            ..SimConfig::default()
        };
        let cp = dir.path().join("c.json");
        std::fs::write(&cp, cfg.to_canonical_json()).unwrap();
        let err = cmd_sync(
            &opts(Some(cp), &dir.path().join("o")),
            false,
            false,
            &mut Vec::new(),
        )
        .unwrap_err();
        assert!(matches!(err, CliError::TableMismatch { .. }), "{err}");
    }

    #[test]
    fn inspect_reports_bank_period() {
        let cfg = TdlConfig {
            tap_delay_jitter: 0.0,
            ..TdlConfig::default()
        };
        let tdl = build_tdl(&cfg).unwrap();
        let widths = tdl.bin_widths_within_period();
        // Counts proportional to widths give an exact table without sampling.
        let counts: Vec<u64> = widths.iter().map(|w| (w * 1000.0).round() as u64).collect();
        let table = CalibrationTable::from_counts(counts, cfg.clock_period).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.json");
        std::fs::write(&p, io::json_bytes(&table)).unwrap();
        let mut out = Vec::new();
        let stats = cmd_inspect(&p, &mut out).unwrap();
        assert_eq!(stats.inl_period_bins, Some(cfg.bank_period));
        assert!(String::from_utf8(out)
            .unwrap()
            .contains("INL period: 24 bins"));
    }

    #[test]
    fn inspect_flags_edited_count() {
        let dir = tempfile::tempdir().unwrap();
        let mut table = CalibrationTable::from_counts(vec![10, 20, 30, 0], 400.0).unwrap();
        table.counts[1] += 1;
        let p = dir.path().join("t.json");
        std::fs::write(&p, io::json_bytes(&table)).unwrap();
        let mut out = Vec::new();
        let err = cmd_inspect(&p, &mut out).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(String::from_utf8(out).unwrap().contains("FAIL"));
    }

    #[test]
    fn inspect_missing_file_is_exit_1() {
        let err = cmd_inspect(Path::new("/nonexistent/t.json"), &mut Vec::new()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
