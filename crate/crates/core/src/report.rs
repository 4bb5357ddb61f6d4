//! Report rendering: JSON, aligned text tables and CSV.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{to_json, PipelineReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Table,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "table" | "text" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

/// Column header of [`render_csv`].
pub const CSV_HEADER: &str = "confidence,z,n_bar,classifier,case,channels,mean_pct,std_pct,selected_features";

pub fn emit_report(report: &PipelineReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => to_json(report).into_bytes(),
        ReportFormat::Table => render_table(report).into_bytes(),
        ReportFormat::Csv => render_csv(report).into_bytes(),
    }
}

pub fn parse_json_report(text: &str) -> Result<PipelineReport> {
    serde_json::from_str(text).map_err(|e| Error::Format {
        format: "report json",
        message: e.to_string(),
    })
}

/// One block per (level, classifier): a row per case plus the weighted AC
/// row. With several levels a summary grid follows (levels x cases + AC).
pub fn render_table(report: &PipelineReport) -> String {
    let mut out = String::new();
    for level in &report.levels {
        for eval in &level.evaluations {
            let _ = writeln!(
                out,
                "confidence {}  z = {}  classifier {}",
                level.level, level.z, eval.classifier
            );
            let _ = writeln!(
                out,
                "{:<8} {:>8} {:>14} {:>9} {:>9}",
                "case", "n_bar", "accuracy (%)", "channels", "features"
            );
            for case in &eval.cases {
                let features = case
                    .selected_features
                    .as_ref()
                    .map_or_else(|| "all".to_string(), |s| s.names.len().to_string());
                let n_bar = level.n_bar.get(&case.case_id).copied().unwrap_or(0);
                let _ = writeln!(
                    out,
                    "{:<8} {:>8} {:>14} {:>9} {:>9}",
                    case.case_id,
                    n_bar,
                    format!("{:.2} ± {:.2}", case.mean, case.std),
                    case.weight,
                    features
                );
            }
            let _ = writeln!(out, "{:<8} {:>8} {:>14.2}", "AC", "", eval.weighted_average);
            out.push('\n');
        }
    }
    if report.levels.len() > 1 {
        let classifiers: Vec<&str> = report
            .levels
            .first()
            .map(|l| l.evaluations.iter().map(|e| e.classifier.as_str()).collect())
            .unwrap_or_default();
        for clf in classifiers {
            let cases: Vec<&str> = report.levels[0]
                .evaluations
                .iter()
                .find(|e| e.classifier == clf)
                .map(|e| e.cases.iter().map(|c| c.case_id.as_str()).collect())
                .unwrap_or_default();
            let _ = write!(out, "summary ({clf})\n{:<10}", "level");
            for c in &cases {
                let _ = write!(out, " {:>16}", c);
            }
            let _ = writeln!(out, " {:>8}", "AC");
            for level in &report.levels {
                let Some(eval) = level.evaluations.iter().find(|e| e.classifier == clf) else {
                    continue;
                };
                let _ = write!(out, "{:<10}", level.level);
                for c in &eval.cases {
                    let _ = write!(out, " {:>16}", format!("{:.2} ± {:.2}", c.mean, c.std));
                }
                let _ = writeln!(out, " {:>8.2}", eval.weighted_average);
            }
            out.push('\n');
        }
    }
    out
}

/// One row per (level, classifier, case) plus an `AC` row per
/// (level, classifier) carrying the weighted average.
pub fn render_csv(report: &PipelineReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for level in &report.levels {
        let conf = level.confidence.map(|c| c.to_string()).unwrap_or_default();
        for eval in &level.evaluations {
            let mut channels = 0;
            for case in &eval.cases {
                channels += case.weight;
                let selected = case
                    .selected_features
                    .as_ref()
                    .map(|s| s.names.join(";"))
                    .unwrap_or_default();
                let n_bar = level.n_bar.get(&case.case_id).copied().unwrap_or(0);
                let _ = writeln!(
                    out,
                    "{conf},{},{n_bar},{},{},{},{:.6},{:.6},{selected}",
                    level.z, eval.classifier, case.case_id, case.weight, case.mean, case.std
                );
            }
            let _ = writeln!(
                out,
                "{conf},{},,{},AC,{channels},{:.6},,",
                level.z, eval.classifier, eval.weighted_average
            );
        }
    }
    out
}
