use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EvalError, EvalReport, TrialRecord};
use crate::bridge::RobotCommand;
use crate::gateway::RobotState;
use crate::model::Joint;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Md,
}

impl ReportFormat {
    pub fn content_type(self) -> &'static str {
        match self {
            ReportFormat::Csv => "text/csv; charset=utf-8",
            ReportFormat::Md => "text/markdown; charset=utf-8",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Md),
            _ => Err(EvalError::UnknownFormat(s.to_string())),
        }
    }
}

/// One CSV line: a (trial, metric) pair, or the bare trial when unscored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub prompt: String,
    pub label: String,
    pub metric: String,
    pub intended: String,
    pub achieved: String,
    pub error: Option<f64>,
    pub success: Option<bool>,
}

fn to_json<T: Serialize>(v: &Option<T>) -> String {
    v.as_ref()
        .map(|v| serde_json::to_string(v).expect("state serializes"))
        .unwrap_or_default()
}

impl EvalReport {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let mut rows = Vec::new();
        for t in &self.trials {
            let base = CsvRow {
                prompt: t.prompt.clone(),
                label: t.label.label.to_string(),
                metric: String::new(),
                intended: to_json(&t.intended),
                achieved: to_json(&t.achieved),
                error: None,
                success: None,
            };
            if t.errors.is_empty() {
                rows.push(base);
                continue;
            }
            for m in &t.errors {
                rows.push(CsvRow {
                    metric: m.metric.clone(),
                    error: Some(m.value),
                    success: Some(m.success),
                    ..base.clone()
                });
            }
        }
        rows
    }
}

pub fn parse_csv(bytes: &[u8]) -> Result<Vec<CsvRow>, csv::Error> {
    csv::Reader::from_reader(bytes).deserialize().collect()
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Md => render_md(report).into_bytes(),
    }
}

/// Like [`render_report`] with the format given by name.
pub fn render_report_named(report: &EvalReport, format: &str) -> Result<Vec<u8>, EvalError> {
    Ok(render_report(report, format.parse()?))
}

fn render_csv(report: &EvalReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let rows = report.csv_rows();
    if rows.is_empty() {
        w.write_record([
            "prompt", "label", "metric", "intended", "achieved", "error", "success",
        ])
        .expect("in-memory write");
    }
    for row in rows {
        w.serialize(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn cell(t: &TrialRecord) -> (String, String) {
    let err = t
        .errors
        .iter()
        .map(|m| format!("{} {:.4}", m.metric, m.value))
        .collect::<Vec<_>>()
        .join(", ");
    let ok = if t.is_scored() {
        if t.succeeded() { "yes" } else { "no" }.to_string()
    } else {
        String::new()
    };
    (err, ok)
}

fn escape(s: &str) -> String {
    s.replace('|', "\\|")
}

fn render_md(report: &EvalReport) -> String {
    let mut out = String::from("# Evaluation report\n");

    let arm: Vec<&TrialRecord> = report
        .trials
        .iter()
        .filter(|t| matches!(t.achieved, Some(RobotState::Arm { .. })))
        .collect();
    if !arm.is_empty() {
        out.push_str("\n## Arm\n\n| Prompt |");
        for j in Joint::ALL {
            let _ = write!(out, " {} |", j.name());
        }
        out.push_str(" x | y | z | Label | Error | Success |\n|---|");
        out.push_str(&"---:|".repeat(10));
        out.push_str("---|---|---|\n");
        for t in arm {
            let Some(RobotState::Arm { joints, pose }) = &t.achieved else {
                continue;
            };
            let _ = write!(out, "| {} |", escape(&t.prompt));
            for (_, a) in joints.iter() {
                let _ = write!(out, " {a:.3} |");
            }
            let (err, ok) = cell(t);
            let _ = writeln!(
                out,
                " {:.3} | {:.3} | {:.3} | {} | {err} | {ok} |",
                pose.position_x, pose.position_y, pose.position_z, t.label.label
            );
        }
    }

    let base: Vec<&TrialRecord> = report
        .trials
        .iter()
        .filter(|t| matches!(t.achieved, Some(RobotState::Base(_))))
        .collect();
    if !base.is_empty() {
        out.push_str(
            "\n## Base\n\n| Prompt | v_x (m/s) | ω (rad/s) | t (s) | x (m) | y (m) | θ (deg) | Label | Error | Success |\n\
             |---|---:|---:|---:|---:|---:|---:|---|---|---|\n",
        );
        for t in base {
            let Some(RobotState::Base(odom)) = &t.achieved else {
                continue;
            };
            let (v, w, d) = match t.command {
                Some(RobotCommand::Drive(c)) => (
                    format!("{:.2}", c.v_x),
                    format!("{:.2}", c.omega),
                    format!("{:.2}", c.duration),
                ),
                _ => Default::default(),
            };
            let (err, ok) = cell(t);
            let _ = writeln!(
                out,
                "| {} | {v} | {w} | {d} | {:.3} | {:.3} | {:.1} | {} | {err} | {ok} |",
                escape(&t.prompt),
                odom.x,
                odom.y,
                odom.theta_deg,
                t.label.label
            );
        }
    }

    let other: Vec<&TrialRecord> = report
        .trials
        .iter()
        .filter(|t| t.achieved.is_none())
        .collect();
    if !other.is_empty() {
        out.push_str("\n## No motion\n\n| Prompt | Label | Outcome |\n|---|---|---|\n");
        for t in other {
            let _ = writeln!(
                out,
                "| {} | {} | {:?} |",
                escape(&t.prompt),
                t.label.label,
                t.outcome
            );
        }
    }

    out.push_str(
        "\n## Aggregates\n\n| Label | Metric | n | Mean | Max | Success rate |\n|---|---|---:|---:|---:|---:|\n",
    );
    for a in &report.aggregates {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.4} | {:.4} | {:.2} |",
            a.label, a.metric, a.count, a.mean, a.max, a.success_rate
        );
    }

    if !report.notes.is_empty() {
        out.push_str("\n## Notes\n\n");
        for n in &report.notes {
            let _ = writeln!(out, "- {} ({}): {}", n.prompt_id, escape(&n.prompt), n.note);
        }
    }
    out
}
