//! Report directories: `report.json`, per-solver series CSVs, field snapshots,
//! cross distances and the Picard trace.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crossdiff_core::grid::{write_binary, write_csv, FieldState, Space};
use crossdiff_core::model::EntropyKind;
use crossdiff_core::solver::{RunReport, Trajectory};
use serde::{Deserialize, Serialize};

use crate::config::OutputFormat;

pub const REPORT_FILE: &str = "report.json";
pub const SNAPSHOT_DIR: &str = "snapshots";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub label: String,
    pub index: usize,
    pub t: f64,
    /// Paths relative to the report directory.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub command: String,
    pub status: String,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seed: u64,
    pub config_path: String,
    pub initial: Vec<String>,
    pub snapshots: Vec<SnapshotEntry>,
    pub series_files: Vec<String>,
    pub run: Option<RunReport>,
}

pub fn snapshot_name(label: &str, index: usize, ext: &str) -> String {
    format!("{SNAPSHOT_DIR}/{label}_{index:04}.{ext}")
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:e}")
    }
}

fn write_lines(path: &Path, header: &str, rows: impl Iterator<Item = Vec<String>>) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()
}

fn write_series(path: &Path, traj: &Trajectory, n: usize) -> std::io::Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("mass_{i}")));
    header.extend(EntropyKind::ALL.iter().map(|k| k.label().to_string()));
    header.push("min_density".into());
    header.push("hs_norm".into());
    write_lines(
        path,
        &header.join(","),
        traj.series.iter().map(|r| {
            let mut row = vec![fmt(r.t)];
            row.extend(r.masses.iter().map(|&m| fmt(m)));
            row.extend(r.entropies.iter().map(|e| fmt(e.unwrap_or(f64::NAN))));
            row.push(fmt(r.min_density));
            row.push(fmt(r.hs_norm));
            row
        }),
    )
}

fn write_snapshots(
    dir: &Path,
    report: &RunReport,
    traj: &Trajectory,
    format: OutputFormat,
) -> std::io::Result<Vec<SnapshotEntry>> {
    let names: Vec<String> = (1..=report.spec.n).map(|i| format!("u{i}")).collect();
    let mut entries = Vec::with_capacity(traj.times.len());
    for (index, (t, u)) in traj.times.iter().zip(&traj.u).enumerate() {
        let state = FieldState::new(report.grid, u.clone(), Space::U, *t).map_err(std::io::Error::other)?;
        let mut files = Vec::new();
        if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
            let rel = snapshot_name(&traj.label, index, "csv");
            write_csv(&dir.join(&rel), &state, &names).map_err(std::io::Error::other)?;
            files.push(rel);
        }
        if matches!(format, OutputFormat::Binary | OutputFormat::Both) {
            let rel = snapshot_name(&traj.label, index, "bin");
            write_binary(&dir.join(&rel), &state).map_err(std::io::Error::other)?;
            files.push(rel);
        }
        entries.push(SnapshotEntry {
            label: traj.label.clone(),
            index,
            t: *t,
            files,
        });
    }
    Ok(entries)
}

/// Writes all artefacts of a finished run and fills in the file index of `file`.
pub fn write_run(dir: &Path, file: &mut ReportFile, format: OutputFormat) -> std::io::Result<()> {
    fs::create_dir_all(dir.join(SNAPSHOT_DIR))?;
    if let Some(report) = &file.run {
        for traj in [&report.direct, &report.normal_form].into_iter().flatten() {
            let rel = format!("series_{}.csv", traj.label);
            write_series(&dir.join(&rel), traj, report.spec.n)?;
            file.series_files.push(rel);
            file.snapshots.extend(write_snapshots(dir, report, traj, format)?);
        }
        if !report.cross_distance.is_empty() {
            write_lines(
                &dir.join("cross_distance.csv"),
                "t,distance",
                report.cross_distance.iter().map(|c| vec![fmt(c.t), fmt(c.distance)]),
            )?;
        }
        if let Some(trace) = &report.picard {
            write_lines(
                &dir.join("picard_trace.csv"),
                "iter,sup_l2_increment,parabolic_gradient_increment,n_ell,ratio,max_hs_norm,bound,min_wn",
                trace.records.iter().map(|r| {
                    vec![
                        r.iter.to_string(),
                        fmt(r.sup_l2_increment),
                        fmt(r.parabolic_gradient_increment),
                        fmt(r.n_ell),
                        fmt(r.ratio.unwrap_or(f64::NAN)),
                        fmt(r.max_hs_norm),
                        fmt(trace.bound()),
                        fmt(r.min_wn),
                    ]
                }),
            )?;
        }
    }
    write_json(dir, file)
}

pub fn write_json(dir: &Path, file: &ReportFile) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(file).map_err(std::io::Error::other)?;
    fs::write(dir.join(REPORT_FILE), text + "\n")
}

pub fn read_json(dir: &Path) -> Result<ReportFile, String> {
    let path: PathBuf = dir.join(REPORT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}
