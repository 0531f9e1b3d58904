//! The immutable set of flowcharts a deployment serves.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::document::{parse_flowchart, to_document};
use super::validate::{validate_against, Locus, RuleCode, ValidationReport};
use super::Flowchart;

#[derive(Debug, thiserror::Error)]
pub enum LibraryError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no flowchart loaded cleanly ({} error(s) reported)", report.errors.len())]
    EmptyLibrary { report: ValidationReport },
}

#[derive(Debug, Clone, Default)]
pub struct FlowchartLibrary {
    charts: BTreeMap<String, Flowchart>,
}

impl FlowchartLibrary {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Cross-validates `charts` and keeps those without errors.
    ///
    /// Excluding a chart can strand redirects in other charts, so validation
    /// repeats until the kept set is stable.
    pub fn from_charts(charts: impl IntoIterator<Item = Flowchart>) -> (Self, ValidationReport) {
        let mut report = ValidationReport::default();
        let mut kept: BTreeMap<String, Flowchart> = BTreeMap::new();
        for chart in charts {
            if kept.contains_key(&chart.id) {
                report.error(&chart.id, Locus::Chart, RuleCode::DuplicateChartId, "flowchart id already loaded; later copy ignored");
                continue;
            }
            kept.insert(chart.id.clone(), chart);
        }

        let mut excluded: BTreeMap<String, ValidationReport> = BTreeMap::new();
        loop {
            let ids: HashSet<String> = kept.keys().cloned().collect();
            let failing: Vec<(String, ValidationReport)> = kept
                .values()
                .map(|c| (c.id.clone(), validate_against(c, |t| ids.contains(t))))
                .filter(|(_, r)| !r.is_clean())
                .collect();
            if failing.is_empty() {
                break;
            }
            for (id, r) in failing {
                kept.remove(&id);
                excluded.insert(id, r);
            }
        }

        let ids: HashSet<String> = kept.keys().cloned().collect();
        for chart in kept.values() {
            report.warnings.extend(validate_against(chart, |t| ids.contains(t)).warnings);
        }
        for r in excluded.into_values() {
            report.extend(r);
        }
        (FlowchartLibrary { charts: kept }, report)
    }

    pub fn get(&self, id: &str) -> Option<&Flowchart> {
        self.charts.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.charts.contains_key(id)
    }

    /// Charts in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &Flowchart> {
        self.charts.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.charts.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.charts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charts.is_empty()
    }

    /// Looks a chart up by id, or failing that by case-insensitive display name.
    pub fn find(&self, id_or_name: &str) -> Option<&Flowchart> {
        let needle = id_or_name.trim();
        self.charts
            .get(needle)
            .or_else(|| self.charts.values().find(|c| c.name.eq_ignore_ascii_case(needle)))
    }

    pub fn total_questions(&self) -> usize {
        self.charts.values().map(Flowchart::question_count).sum()
    }

    /// SHA-256 over every chart's canonical document, hex-encoded.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for chart in self.charts.values() {
            hasher.update(to_document(chart).as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(hasher.finalize())
    }
}

/// Loads every `*.json` file in `dir` (sorted by file name) into a library.
///
/// Documents that fail to parse or validate are excluded and reported.
pub fn load_library(dir: &Path) -> Result<(FlowchartLibrary, ValidationReport), LibraryError> {
    let io = |source| LibraryError::Io { path: dir.to_path_buf(), source };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .map(|entry| entry.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io)?;
    files.retain(|p| p.extension().is_some_and(|ext| ext == "json") && p.is_file());
    files.sort();

    let mut parse_report = ValidationReport::default();
    let mut charts = Vec::with_capacity(files.len());
    for path in files {
        let bytes = std::fs::read(&path).map_err(|source| LibraryError::Io { path: path.clone(), source })?;
        match parse_flowchart(&bytes) {
            Ok(chart) => charts.push(chart),
            Err(e) => {
                let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                parse_report.error(&name, Locus::Chart, RuleCode::ParseFailure, e.to_string());
            }
        }
    }

    let (lib, mut report) = FlowchartLibrary::from_charts(charts);
    parse_report.extend(std::mem::take(&mut report));
    if lib.is_empty() {
        return Err(LibraryError::EmptyLibrary { report: parse_report });
    }
    Ok((lib, parse_report))
}
