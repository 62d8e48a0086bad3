use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::privacy::Scheme;

pub const CSV_HEADER: &str =
    "scheme,seed,round,train_mse,val_mse,val_mse_db,privacy_rmse_m,w_1,w_2,w_3,sigma_1,sigma_2,sigma_3";

/// Value written in the round column of a failed (scheme, seed) cell.
pub const ERROR_MARKER: &str = "ERROR";

const GROUPS: usize = 3;

/// `10 log10(mse)`
pub fn mse_db(mse: f64) -> Result<f64> {
    if mse > 0.0 && mse.is_finite() {
        Ok(10.0 * mse.log10())
    } else {
        Err(Error::InvalidArgument(format!(
            "mse must be positive and finite, got {mse}"
        )))
    }
}

/// One round of one (scheme, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scheme: Scheme,
    pub seed: u64,
    pub round: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub val_mse_db: f64,
    pub privacy_rmse_m: Option<f64>,
    /// Mean allocation weights over the round's uploads; empty without noise.
    pub weights: Vec<f64>,
    /// Mean per-group noise scales over the round's uploads; empty without noise.
    pub sigmas: Vec<f64>,
}

/// A line of a results file: a metrics row or a failed cell.
#[derive(Debug, Clone, PartialEq)]
pub enum CsvRecord {
    Row(MetricsRow),
    Failed { scheme: Scheme, seed: u64 },
}

/// 9 significant digits.
fn num(v: f64) -> String {
    format!("{v:.8e}")
}

fn opt(v: Option<&f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |&x| num(x))
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{},{},{}",
            self.scheme,
            self.seed,
            self.round,
            num(self.train_mse),
            num(self.val_mse),
            num(self.val_mse_db),
            opt(self.privacy_rmse_m.as_ref())
        );
        for v in [&self.weights, &self.sigmas] {
            for g in 0..GROUPS {
                let _ = write!(s, ",{}", opt(v.get(g)));
            }
        }
        s
    }
}

pub fn failed_row(scheme: Scheme, seed: u64) -> String {
    let mut s = format!("{scheme},{seed},{ERROR_MARKER}");
    for _ in 0..10 {
        s.push_str(",NA");
    }
    s
}

/// Header plus one line per record, newline terminated.
pub fn write_csv(records: &[CsvRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        match r {
            CsvRecord::Row(m) => s.push_str(&m.to_csv()),
            CsvRecord::Failed { scheme, seed } => s.push_str(&failed_row(*scheme, *seed)),
        }
        s.push('\n');
    }
    s
}

fn field(v: &str, line: usize) -> Result<Option<f64>> {
    if v == "NA" {
        return Ok(None);
    }
    v.parse()
        .map(Some)
        .map_err(|_| Error::Format(format!("line {line}: bad number {v:?}")))
}

pub fn read_csv(text: &str) -> Result<Vec<CsvRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == CSV_HEADER => {}
        _ => return Err(Error::Format("missing or unexpected CSV header".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 13 {
            return Err(Error::Format(format!("line {n}: expected 13 fields, got {}", f.len())));
        }
        let scheme: Scheme = f[0]
            .parse()
            .map_err(|_| Error::Format(format!("line {n}: bad scheme")))?;
        let seed: u64 = f[1].parse().map_err(|_| Error::Format(format!("line {n}: bad seed")))?;
        if f[2] == ERROR_MARKER {
            out.push(CsvRecord::Failed { scheme, seed });
            continue;
        }
        let round: usize = f[2]
            .parse()
            .map_err(|_| Error::Format(format!("line {n}: bad round")))?;
        let req = |v: &str| field(v, n)?.ok_or_else(|| Error::Format(format!("line {n}: missing value")));
        let group = |vals: &[&str]| -> Result<Vec<f64>> {
            let parsed = vals.iter().map(|v| field(v, n)).collect::<Result<Vec<_>>>()?;
            Ok(parsed.into_iter().flatten().collect())
        };
        out.push(CsvRecord::Row(MetricsRow {
            scheme,
            seed,
            round,
            train_mse: req(f[3])?,
            val_mse: req(f[4])?,
            val_mse_db: req(f[5])?,
            privacy_rmse_m: field(f[6], n)?,
            weights: group(&f[7..10])?,
            sigmas: group(&f[10..13])?,
        }));
    }
    Ok(out)
}
