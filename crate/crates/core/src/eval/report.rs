//! Report assembly and CSV/JSON emission.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::navigation::NavigationReport;
use super::retrieval_eval::{GeneratorRetrieval, RetrievalMetrics, RetrievalScores};
use super::EvalError;

pub const CSV_HEADER: &str = "generator,metric,value";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub retrieval: Option<RetrievalMetrics>,
    pub navigation: Option<NavigationReport>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn retrieval_rows(g: &GeneratorRetrieval, rows: &mut Vec<(String, String, String)>) {
    rows.push((g.generator.clone(), "retrieval.n".into(), g.n.to_string()));
    for (name, v) in RetrievalScores::METRICS.iter().zip(g.accuracy.values()) {
        rows.push((g.generator.clone(), format!("retrieval.{name}"), cell(v)));
    }
    for (name, v) in RetrievalScores::METRICS.iter().zip(g.specialty_std.values()) {
        rows.push((g.generator.clone(), format!("retrieval.{name}.specialty_std"), cell(v)));
    }
}

/// One row per generator and metric, in a fixed order. Absent values are empty.
pub fn to_csv(report: &EvalReport) -> String {
    let mut rows: Vec<(String, String, String)> = Vec::new();
    if let Some(r) = &report.retrieval {
        for g in r.generators.iter().chain(std::iter::once(&r.pooled)) {
            retrieval_rows(g, &mut rows);
        }
        for (name, v) in RetrievalScores::METRICS.iter().zip(r.unweighted_mean.values()) {
            rows.push(("unweighted_mean".into(), format!("retrieval.{name}"), cell(v)));
        }
    }
    if let Some(nav) = &report.navigation {
        for g in nav.generators.iter().chain(std::iter::once(&nav.pooled)) {
            let tag = &g.generator;
            rows.push((tag.clone(), "navigation.n".into(), g.n.to_string()));
            rows.push((tag.clone(), "navigation.excluded".into(), g.excluded.to_string()));
            rows.push((tag.clone(), "navigation.acceptable".into(), cell(g.acceptable)));
            for p in &g.patterns {
                let prefix = format!("navigation.{}", p.pattern);
                rows.push((tag.clone(), format!("{prefix}.n"), p.n.to_string()));
                rows.push((tag.clone(), format!("{prefix}.excluded"), p.excluded.to_string()));
                for (c, share) in &p.shares {
                    rows.push((tag.clone(), format!("{prefix}.{c}"), cell(*share)));
                }
                rows.push((tag.clone(), format!("{prefix}.acceptable"), cell(p.acceptable)));
                rows.push((tag.clone(), format!("{prefix}.unacceptable"), cell(p.unacceptable)));
            }
        }
        rows.push(("unweighted_mean".into(), "navigation.acceptable".into(), cell(nav.unweighted_acceptable)));
    }
    let mut out = format!("{CSV_HEADER}\n");
    for (g, m, v) in rows {
        out.push_str(&format!("{},{},{}\n", quote(&g), quote(&m), v));
    }
    out
}

pub fn to_json(report: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<EvalReport, EvalError> {
    serde_json::from_str(text).map_err(|e| EvalError::Record { origin: "report".into(), line: e.line(), detail: e.to_string() })
}

pub fn load_report(path: &Path) -> Result<EvalReport, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })?;
    from_json(&text)
}

/// Writes `report.csv` and `report.json` into `dir`, returning their paths.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<(PathBuf, PathBuf), EvalError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| EvalError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let csv = dir.join(REPORT_CSV);
    let json = dir.join(REPORT_JSON);
    std::fs::write(&csv, to_csv(report)).map_err(io(&csv))?;
    std::fs::write(&json, to_json(report)).map_err(io(&json))?;
    Ok((csv, json))
}
