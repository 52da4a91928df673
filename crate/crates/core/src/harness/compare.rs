use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::{Summary, SUMMARY_FILE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub run: String,
    pub method: String,
    pub dataset: String,
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
    /// Mean minus the mean of the first run on the same dataset.
    pub diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Sorted by dataset, then by mean descending.
    pub rows: Vec<ComparisonRow>,
}

pub fn read_summary(dir: &Path) -> Result<Summary> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| {
        Error::Invalid(format!("run directory {}: no readable {SUMMARY_FILE} ({e})", dir.display()))
    })?;
    Ok(serde_json::from_str(&text)?)
}

pub fn compare(dirs: &[PathBuf]) -> Result<Comparison> {
    if dirs.len() < 2 {
        return Err(Error::Config("compare needs at least two run directories".into()));
    }
    let mut rows: Vec<ComparisonRow> = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let s = read_summary(dir)?;
        let baseline = rows
            .iter()
            .find(|r| r.dataset == s.dataset)
            .map_or(s.mean, |r| r.mean);
        rows.push(ComparisonRow {
            run: dir.display().to_string(),
            method: s.method.to_string(),
            dataset: s.dataset,
            mean: s.mean,
            std: s.std,
            seeds: s.finals.len(),
            diff: s.mean - baseline,
        });
    }
    rows.sort_by(|a, b| a.dataset.cmp(&b.dataset).then(b.mean.total_cmp(&a.mean)));
    Ok(Comparison { rows })
}

impl Comparison {
    /// Plain-text table in percent; the best mean of each dataset is
    /// wrapped in `**`.
    pub fn to_text(&self) -> String {
        let cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let best = i == 0 || self.rows[i - 1].dataset != r.dataset;
                let score = format!("{:.2} ± {:.2}", 100.0 * r.mean, 100.0 * r.std);
                let score = if best { format!("**{score}**") } else { score };
                [
                    r.dataset.clone(),
                    r.method.clone(),
                    score,
                    format!("{:+.2}", 100.0 * r.diff),
                    r.run.clone(),
                ]
            })
            .collect();
        let header = ["dataset", "method", "accuracy", "diff", "run"];
        let widths: Vec<usize> = (0..5)
            .map(|c| {
                cells
                    .iter()
                    .map(|row| row[c].chars().count())
                    .chain([header[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, row: &[&str]| {
            let padded: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:<w$}", w = *w))
                .collect();
            let _ = writeln!(out, "{}", padded.join("  ").trim_end());
        };
        line(&mut out, &header);
        for row in &cells {
            line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Invalid(format!("writing comparison: {}", e.error())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
