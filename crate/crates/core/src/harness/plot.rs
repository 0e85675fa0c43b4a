//! Tidy plot data: one row per (cell, metric).

use std::fs;
use std::path::Path;

use serde_json::json;

use super::run::ResultSet;
use crate::error::{Error, Result};

pub const PLOT_CSV: &str = "plot.csv";
pub const PLOT_SCHEMA: &str = "plot.schema.json";
pub const PLOT_COLUMNS: [&str; 8] = ["prior", "channel", "constellation", "K", "snr_db", "metric", "value", "n"];
const METRICS: [&str; 9] = ["ber", "ter", "bleu1", "bleu2", "bleu3", "bleu4", "bpc", "bps", "similarity"];

pub fn plot_schema() -> serde_json::Value {
    json!({
        "format": "csv",
        "header": true,
        "columns": [
            {"name": "prior", "type": "string"},
            {"name": "channel", "type": "string", "enum": ["awgn", "rayleigh"]},
            {"name": "constellation", "type": "string", "enum": ["qpsk", "8qam", "16qam"]},
            {"name": "K", "type": "integer", "minimum": 1},
            {"name": "snr_db", "type": "number"},
            {"name": "metric", "type": "string", "enum": METRICS},
            {"name": "value", "type": "number"},
            {"name": "n", "type": "integer", "minimum": 1, "description": "sentences in the cell"}
        ]
    })
}

/// Rows for every successful cell, sorted so the output is independent of
/// cell completion order.
pub fn plot_rows(results: &ResultSet) -> Vec<[String; 8]> {
    let mut rows = Vec::new();
    for cell in &results.cells {
        let Some(report) = &cell.report else { continue };
        let k = &cell.key;
        let bleu = |n: usize| report.bleu.get(&n).copied();
        let values = [
            Some(report.ber),
            Some(report.ter),
            bleu(1),
            bleu(2),
            bleu(3),
            bleu(4),
            Some(report.bpc),
            Some(report.bps),
            report.similarity,
        ];
        let prior = if k.prior == "none" { k.receiver.as_str().to_string() } else { k.prior.clone() };
        for (metric, value) in METRICS.iter().zip(values) {
            let Some(value) = value else { continue };
            rows.push([
                prior.clone(),
                k.channel.clone(),
                k.constellation.clone(),
                k.beam_width.to_string(),
                k.snr_db.to_string(),
                metric.to_string(),
                value.to_string(),
                report.counts.sentences.to_string(),
            ]);
        }
    }
    rows.sort_by(|a, b| {
        let num = |r: &[String; 8], i: usize| r[i].parse::<f64>().unwrap_or(f64::NAN);
        (&a[0], &a[1], &a[2], &a[5])
            .cmp(&(&b[0], &b[1], &b[2], &b[5]))
            .then(num(a, 3).total_cmp(&num(b, 3)))
            .then(num(a, 4).total_cmp(&num(b, 4)))
    });
    rows
}

pub fn emit_plot_data(results: &ResultSet, dir: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(PLOT_COLUMNS).map_err(err)?;
    for row in plot_rows(results) {
        w.write_record(&row).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    fs::write(dir.join(PLOT_CSV), bytes)?;
    let mut schema = serde_json::to_string_pretty(&plot_schema())?;
    schema.push('\n');
    fs::write(dir.join(PLOT_SCHEMA), schema)?;
    Ok(())
}

/// Checks a plot CSV against [`plot_schema`]. Returns the number of rows.
pub fn validate_plot_csv(text: &str) -> Result<usize> {
    let schema = plot_schema();
    let columns = schema["columns"].as_array().expect("schema columns");
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    if header.iter().ne(PLOT_COLUMNS) {
        return Err(Error::Format(format!("unexpected plot header {:?}", header)));
    }
    let mut count = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        for (field, col) in record.iter().zip(columns) {
            let name = col["name"].as_str().unwrap_or_default();
            let bad = || Error::Format(format!("row {}: bad {name} value {field:?}", line + 1));
            match col["type"].as_str() {
                Some("integer") => {
                    let v: i64 = field.parse().map_err(|_| bad())?;
                    if col["minimum"].as_i64().is_some_and(|m| v < m) {
                        return Err(bad());
                    }
                }
                Some("number") => {
                    field.parse::<f64>().map_err(|_| bad())?;
                }
                _ => {
                    if field.is_empty() {
                        return Err(bad());
                    }
                    if let Some(allowed) = col["enum"].as_array() {
                        if !allowed.iter().any(|a| a.as_str() == Some(field)) {
                            return Err(bad());
                        }
                    }
                }
            }
        }
        count += 1;
    }
    Ok(count)
}
