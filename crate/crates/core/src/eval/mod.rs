//! Synthetic evaluation: dataset generation, replay, metrics and reports.

pub mod generate;
pub mod navigation;
pub mod records;
pub mod report;
pub mod retrieval_eval;

use std::path::PathBuf;

pub use generate::{generate_opening_statements, generate_responses, MAX_REGENERATIONS};
pub use navigation::{aggregate_navigation, categorize, eval_navigation, NavCategory, NavigationOutcome, NavigationReport, PatternCell};
pub use records::{AnswerLabel, OpeningStatementRecord, OpeningStyle, Pattern, PatientResponseRecord};
pub use report::{emit_report, load_report, to_csv, EvalReport, CSV_HEADER};
pub use retrieval_eval::{aggregate_retrieval, eval_retrieval, RetrievalMetrics, RetrievalModes, RetrievalOutcome, RetrievalScores};

use crate::demographics::DemographicsError;
use crate::gateway::prompts::TemplateError;
use crate::gateway::GatewayError;
use crate::retrieval::RetrievalError;

/// Generator tag under which all-record aggregates are reported.
pub const POOLED: &str = "pooled";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("provider failure: {0}")]
    ProviderFailure(#[from] GatewayError),
    #[error("unparsable generation: {0}")]
    UnparsableGeneration(String),
    #[error("label {0} is not a flowchart in the library")]
    LabelNotInLibrary(String),
    #[error("record {id}: pattern {pattern} cannot carry label {label:?}")]
    InconsistentLabel { id: String, pattern: Pattern, label: AnswerLabel },
    #[error(transparent)]
    Demographics(#[from] DemographicsError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("{origin}:{line}: {detail}")]
    Record { origin: String, line: usize, detail: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

/// `num / den`, or `None` for an empty denominator.
pub(crate) fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Population standard deviation; `None` for no values.
pub(crate) fn population_std(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return None;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    Some((v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt())
}

/// Order-preserving map over scoped worker threads.
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}
