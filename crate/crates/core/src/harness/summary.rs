use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::privacy::Scheme;

use super::metrics::{CsvRecord, MetricsRow};

/// Seed-averaged headline numbers for one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scheme: Scheme,
    /// Seeds that completed.
    pub seeds: usize,
    /// Seeds that failed.
    pub failed: usize,
    /// Minimum over rounds of the validation MSE in dB, averaged over seeds.
    pub best_val_mse_db: Option<f64>,
    /// Last-round privacy RMSE, averaged over the seeds that report one.
    pub final_privacy_rmse_m: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// One row per scheme present in `records`, in canonical scheme order.
pub fn summarize(records: &[CsvRecord]) -> Vec<SummaryRow> {
    let mut runs: BTreeMap<(usize, u64), Vec<&MetricsRow>> = BTreeMap::new();
    let mut failed: BTreeMap<usize, usize> = BTreeMap::new();
    let pos = |s: Scheme| Scheme::ALL.iter().position(|&k| k == s).unwrap_or(usize::MAX);
    for r in records {
        match r {
            CsvRecord::Row(m) => runs.entry((pos(m.scheme), m.seed)).or_default().push(m),
            CsvRecord::Failed { scheme, .. } => *failed.entry(pos(*scheme)).or_default() += 1,
        }
    }
    Scheme::ALL
        .iter()
        .enumerate()
        .filter_map(|(i, &scheme)| {
            let cells: Vec<&Vec<&MetricsRow>> = runs.range((i, 0)..=(i, u64::MAX)).map(|(_, v)| v).collect();
            let n_failed = failed.get(&i).copied().unwrap_or(0);
            if cells.is_empty() && n_failed == 0 {
                return None;
            }
            let best: Vec<f64> = cells
                .iter()
                .map(|rows| rows.iter().map(|m| m.val_mse_db).fold(f64::INFINITY, f64::min))
                .collect();
            let last: Vec<f64> = cells
                .iter()
                .filter_map(|rows| rows.iter().max_by_key(|m| m.round).and_then(|m| m.privacy_rmse_m))
                .collect();
            Some(SummaryRow {
                scheme,
                seeds: cells.len(),
                failed: n_failed,
                best_val_mse_db: mean(&best),
                final_privacy_rmse_m: mean(&last),
            })
        })
        .collect()
}

/// Plain-text table of a summary.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:<18} {:>6} {:>7} {:>18} {:>22}\n",
        "scheme", "seeds", "failed", "best val MSE (dB)", "final privacy RMSE (m)"
    );
    let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.2}"));
    for r in rows {
        let _ = writeln!(
            s,
            "{:<18} {:>6} {:>7} {:>18} {:>22}",
            r.scheme.name(),
            r.seeds,
            r.failed,
            cell(r.best_val_mse_db),
            cell(r.final_privacy_rmse_m)
        );
    }
    s
}
