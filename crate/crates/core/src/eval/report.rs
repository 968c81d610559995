//! Rendering metrics reports as JSON and as markdown tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{ErrorClass, MetricsReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Markdown,
}

/// Serializes reports. JSON output is a single report object when given one
/// report and an array otherwise; fields and map keys have a fixed order,
/// so equal reports render to identical bytes.
pub fn emit_report(reports: &[MetricsReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let json = match reports {
                [one] => serde_json::to_string_pretty(one),
                many => serde_json::to_string_pretty(many),
            };
            let mut s = json.expect("reports serialize");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => markdown(reports),
    }
}

/// Parses JSON written by [`emit_report`].
pub fn parse_reports(text: &str) -> Result<Vec<MetricsReport>, serde_json::Error> {
    match serde_json::from_str::<Vec<MetricsReport>>(text) {
        Ok(many) => Ok(many),
        Err(_) => serde_json::from_str::<MetricsReport>(text).map(|one| vec![one]),
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

fn markdown(reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    out.push_str("| Model | Accuracy | BERTScore |\n|---|---:|---:|\n");
    for r in reports {
        let sim = r
            .semantic_similarity
            .as_ref()
            .map(|s| format!("{:.2}", s.mean))
            .unwrap_or_else(|| "---".into());
        writeln!(out, "| {} | {} | {sim} |", r.system, pct(r.exact_match_accuracy)).unwrap();
    }

    let timed: Vec<&MetricsReport> = reports.iter().filter(|r| r.latency.is_some()).collect();
    if !timed.is_empty() {
        out.push_str("\n| Model | CPU | T/Q (s) | Load (s) |\n|---|---:|---:|---:|\n");
        for r in timed {
            let l = r.latency.as_ref().unwrap();
            writeln!(
                out,
                "| {} | {} | {:.2} ± {:.2} | {:.2} |",
                r.system, l.worker_threads, l.mean_seconds, l.std_seconds, l.load_seconds
            )
            .unwrap();
        }
    }

    out.push_str("\n| Model | Samples |");
    for c in ErrorClass::ALL {
        write!(out, " {c:?} |").unwrap();
    }
    out.push_str("\n|---|---:|");
    out.push_str(&"---:|".repeat(ErrorClass::ALL.len()));
    out.push('\n');
    for r in reports {
        write!(out, "| {} | {} |", r.system, r.total).unwrap();
        for c in ErrorClass::ALL {
            write!(out, " {} |", r.errors.get(&c).copied().unwrap_or(0)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Error classes whose rate in `current` exceeds the rate in `previous`,
/// plus a drop in accuracy. Empty means no regression.
pub fn regressions(current: &MetricsReport, previous: &MetricsReport) -> Vec<String> {
    let mut found = Vec::new();
    if current.exact_match_accuracy + 1e-12 < previous.exact_match_accuracy {
        found.push(format!(
            "accuracy {} -> {}",
            pct(previous.exact_match_accuracy),
            pct(current.exact_match_accuracy)
        ));
    }
    for c in ErrorClass::ALL {
        let (now, before) = (current.error_fraction(c), previous.error_fraction(c));
        if now > before + 1e-12 {
            found.push(format!("{c:?} {} -> {}", pct(before), pct(now)));
        }
    }
    found
}
