//! Experiment orchestration: configuration, the scheme comparison, metrics
//! rows, CSV output and the summary table.

mod config;
mod metrics;
mod run;
mod summary;

pub use config::{DatasetConfig, ExperimentConfig, FederatedConfig, OutputConfig, RunConfig};
pub use metrics::{failed_row, mse_db, read_csv, write_csv, CsvRecord, MetricsRow, CSV_HEADER, ERROR_MARKER};
pub use run::{run_comparison, run_scheme, Cell, SchemeRun};
pub use summary::{format_summary, summarize, SummaryRow};

/// CSV records of a finished comparison, failed cells as error markers.
pub fn cell_records(cells: &[Cell]) -> Vec<CsvRecord> {
    let mut out = Vec::new();
    for c in cells {
        match &c.result {
            Ok(run) => out.extend(run.rows.iter().cloned().map(CsvRecord::Row)),
            Err(_) => out.push(CsvRecord::Failed {
                scheme: c.scheme,
                seed: c.seed,
            }),
        }
    }
    out
}
