use std::fmt::Write as _;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{FeatureSet, RowSpec, Variant};
use crate::error::{Error, Result};
use crate::features::SegmentStrategy;
use crate::metrics::MetricReport;
use crate::sampling::SamplerKind;

/// JSON schema for [`ReportFormat::Json`] output.
pub const REPORT_SCHEMA: &str = include_str!("../../../../schemas/report.schema.json");

/// Fold-averaged metrics of one configuration.
///
/// An undefined τ or ρ on a fold (constant predictions) counts as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub model: Variant,
    pub sampler: Option<SamplerKind>,
    pub features: FeatureSet,
    pub segment: SegmentStrategy,
    /// Folds that completed.
    pub folds: usize,
    pub ndcg: Option<f64>,
    pub kendall: Option<f64>,
    pub spearman: Option<f64>,
    pub failed: Option<String>,
}

impl ReportRow {
    pub fn summarize(spec: &RowSpec, folds: &[MetricReport], failure: Option<String>) -> Self {
        let mean = |f: &dyn Fn(&MetricReport) -> f64| {
            if failure.is_some() || folds.is_empty() {
                None
            } else {
                Some(folds.iter().map(f).sum::<f64>() / folds.len() as f64)
            }
        };
        Self {
            name: spec.name.clone(),
            model: spec.variant,
            sampler: spec.sampler,
            features: spec.features,
            segment: spec.segment,
            folds: folds.len(),
            ndcg: mean(&|r| r.ndcg),
            kendall: mean(&|r| r.kendall.unwrap_or(0.0)),
            spearman: mean(&|r| r.spearman.unwrap_or(0.0)),
            failed: failure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Text,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Self::Text),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

fn text_table(rows: &[ReportRow]) -> String {
    let header = [
        "row", "network", "sampling", "feature", "segment", "folds", "nDCG@10%", "Kendall@10%", "Spearman@10%", "status",
    ];
    let body: Vec<[String; 10]> = rows
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                r.model.to_string(),
                r.sampler.map_or_else(|| "-".into(), |s| s.to_string()),
                r.features.to_string(),
                r.segment.tag().to_string(),
                r.folds.to_string(),
                cell(r.ndcg),
                cell(r.kendall),
                cell(r.spearman),
                r.failed.as_ref().map_or_else(|| "ok".into(), |e| format!("failed: {e}")),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for line in &body {
        for (w, c) in widths.iter_mut().zip(line) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let emit = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        let line: Vec<String> = cells
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    };
    emit(&mut out, &mut header.iter().copied());
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("  "));
    for line in &body {
        emit(&mut out, &mut line.iter().map(String::as_str));
    }
    out
}

/// Renders rows as an aligned text table, CSV with a header line, or a JSON array.
pub fn render(rows: &[ReportRow], format: ReportFormat) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Empty("report"));
    }
    match format {
        ReportFormat::Text => Ok(text_table(rows)),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| Error::Format {
                    what: "csv report",
                    detail: e.to_string(),
                })?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Format {
                what: "csv report",
                detail: e.to_string(),
            })?;
            String::from_utf8(bytes).map_err(|e| Error::Format {
                what: "csv report",
                detail: e.to_string(),
            })
        }
        ReportFormat::Json => Ok(serde_json::to_string_pretty(rows)? + "\n"),
    }
}

/// Parses CSV produced by [`render`].
pub fn read_csv<R: Read>(input: R) -> Result<Vec<ReportRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<Vec<ReportRow>, _>>()
        .map_err(|e| Error::Format {
            what: "csv report",
            detail: e.to_string(),
        })
}
