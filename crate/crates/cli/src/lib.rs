//! Command implementations behind the `radio` binary, kept in a library so
//! tests can call them without spawning processes.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use radio_core::analytics::{render_report, stats_report, AnalysisUnit, StatsReport};
use radio_core::catalog::{load_catalog, Catalog};
use radio_core::domain::Rating;
use radio_core::store::{LogRecord, RadioStore};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Core(#[from] radio_core::Error),
    #[error("{0}")]
    Service(#[from] radio_service::ServiceError),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub fn read_catalog(path: &Path) -> Result<Catalog, CliError> {
    Ok(load_catalog(BufReader::new(File::open(path)?))?)
}

/// Ratings from either an event log (lines carrying `kind`) or plain
/// `Rating` JSON lines. Event logs are replayed against `catalog`; plain
/// ratings are ordered the way the store orders them.
pub fn load_ratings(path: &Path, catalog: impl FnOnce() -> Result<Catalog, CliError>) -> Result<Vec<Rating>, CliError> {
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            lines.push((i + 1, line));
        }
    }
    let is_log = lines.first().is_some_and(|(_, l)| {
        serde_json::from_str::<serde_json::Value>(l).is_ok_and(|v| v.get("kind").is_some())
    });
    if is_log {
        let records = lines
            .iter()
            .map(|(n, l)| {
                serde_json::from_str::<LogRecord>(l).map_err(|e| CliError::Parse {
                    line: *n,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let store = RadioStore::replay(catalog()?, usize::MAX, &records)?;
        return Ok(store.ratings_vec());
    }
    let mut ratings = lines
        .iter()
        .map(|(n, l)| {
            serde_json::from_str::<Rating>(l).map_err(|e| CliError::Parse {
                line: *n,
                reason: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    ratings.sort_by(|a, b| (&a.song_id, &a.listener_id).cmp(&(&b.song_id, &b.listener_id)));
    Ok(ratings)
}

/// Same bytes as `GET /api/stats` for the same ratings.
pub fn stats_json(ratings: &[Rating], unit: AnalysisUnit) -> (StatsReport, String) {
    let report = stats_report(ratings, unit);
    let json = render_report(&report);
    (report, json)
}

/// The correlation matrix as one row per cell.
pub fn write_matrix_csv<W: Write>(report: &StatsReport, out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["question_a", "question_b", "r", "n", "t", "p_value", "stars", "status"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for cell in report.correlations.iter().flatten() {
        w.write_record([
            name(&cell.question_a),
            name(&cell.question_b),
            opt(cell.r),
            cell.n.to_string(),
            opt(cell.t),
            opt(cell.p_value),
            name(&cell.stars),
            name(&cell.status),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// serde's string form of a unit enum variant.
fn name<T: serde::Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}
