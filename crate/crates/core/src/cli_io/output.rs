//! CSV and JSON serialization of logs and scalar tables.
//!
//! Reals are written with 17 significant digits, which parse back to the
//! identical `f64`. Missing values are empty fields.

use std::fs;
use std::path::Path;

use crate::diagnostics::TrajectoryLog;
use crate::error::{Error, Result};
use crate::experiments::SeriesTable;

/// Round-trip-exact decimal form of `x`.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Column names of a log's CSV form.
pub fn csv_header(log: &TrajectoryLog) -> Vec<String> {
    let first = log.records.first();
    let r = first.map_or(0, |x| x.product_singular_values.len());
    let k = first.and_then(|x| x.core.as_ref()).map_or(r.min(log.metadata.config.rank), |c| c.d.len());
    let mut h: Vec<String> = ["step", "time", "loss"].map(String::from).to_vec();
    h.extend((1..=r).map(|i| format!("sv_{i}")));
    h.extend((1..=k).map(|i| format!("d_{i}")));
    h.extend((1..=k).map(|i| format!("e_{i}")));
    h.extend(["off_g_fro", "xz_perp_fro", "active_count", "effective_rank", "balancedness_drift"].map(String::from));
    h
}

pub fn log_to_csv(log: &TrajectoryLog) -> String {
    let header = csv_header(log);
    let r = header.iter().filter(|c| c.starts_with("sv_")).count();
    let k = header.iter().filter(|c| c.starts_with("d_")).count();
    let mut out = header.join(",");
    out.push('\n');
    let opt = |x: Option<f64>| x.map(format_real).unwrap_or_default();
    for rec in &log.records {
        let mut row = vec![rec.step.to_string(), format_real(rec.time), format_real(rec.loss)];
        row.extend((0..r).map(|i| opt(rec.product_singular_values.get(i).copied())));
        let core = rec.core.as_ref();
        row.extend((0..k).map(|i| opt(core.and_then(|c| c.d.get(i).copied()))));
        row.extend((0..k).map(|i| opt(core.and_then(|c| c.e.get(i).copied()))));
        row.push(opt(core.map(|c| c.off_g_fro)));
        row.push(opt(core.map(|c| c.xz_perp_fro)));
        row.push(rec.active_set.len().to_string());
        row.push(format_real(rec.effective_rank));
        row.push(opt(rec.balancedness_drift));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(log: &TrajectoryLog, path: &Path) -> Result<()> {
    write_text(path, &log_to_csv(log))
}

pub fn table_to_csv(table: &SeriesTable) -> String {
    let mut out = table.columns.join(",");
    out.push('\n');
    for row in &table.rows {
        out.push_str(&row.iter().map(|&x| format_real(x)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

pub fn write_table_csv(table: &SeriesTable, path: &Path) -> Result<()> {
    write_text(path, &table_to_csv(table))
}

/// Parsed CSV: header and rows, empty fields as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvData {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

pub fn parse_csv(text: &str) -> std::result::Result<CsvData, String> {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().ok_or("missing header row")?.split(',').map(String::from).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(format!("row {} has {} fields, header has {}", i + 1, fields.len(), header.len()));
        }
        let row = fields
            .iter()
            .map(|f| {
                if f.is_empty() {
                    Ok(None)
                } else {
                    f.parse::<f64>().map(Some).map_err(|_| format!("row {}: bad number `{f}`", i + 1))
                }
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(CsvData { header, rows })
}

pub fn read_csv(path: &Path) -> Result<CsvData> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_csv(&text).map_err(|message| Error::Format { path: path.to_path_buf(), message })
}

pub fn write_json(log: &TrajectoryLog, path: &Path) -> Result<()> {
    write_json_value(log, path)
}

pub fn write_json_value<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })?;
    write_text(path, &(text + "\n"))
}

pub fn read_json(path: &Path) -> Result<TrajectoryLog> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })
}
