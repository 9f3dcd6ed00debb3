use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use super::series::{floor_hour, HourlySeries};
use crate::error::{Error, Result};

/// One sub-hourly observation; `values` follow the table's variable order.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecord {
    pub timestamp: NaiveDateTime,
    pub values: Vec<Option<f64>>,
}

/// Records read from a CSV file, sorted by timestamp with duplicates removed.
#[derive(Clone, Debug)]
pub struct RawTable {
    pub variables: Vec<String>,
    pub records: Vec<RawRecord>,
    /// Rows dropped because a later row carried the same timestamp.
    pub duplicate_timestamps: usize,
}

const FORMATS: &[&str] = &[
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%d %H:%M",
];

/// Parses an ISO 8601 timestamp. Offsets are accepted and dropped, keeping
/// local wall-clock time.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_local());
    }
    for f in FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, f) {
            return Some(dt);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

fn parse_cell(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a comma-separated file with a header row.
///
/// Cells that do not parse as finite numbers become missing. When several
/// rows share a timestamp, the one appearing last in the file wins.
pub fn load_csv(path: &Path, timestamp_column: &str, schema: &[String]) -> Result<RawTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_csv_from_reader(file, path, timestamp_column, schema)
}

pub(crate) fn load_csv_from_reader<R: std::io::Read>(
    reader: R,
    path: &Path,
    timestamp_column: &str,
    schema: &[String],
) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(Error::format(path, "empty file"));
    }
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let ts_col = find(timestamp_column).ok_or_else(|| {
        Error::format(path, format!("missing timestamp column `{timestamp_column}`"))
    })?;
    let cols = schema
        .iter()
        .map(|name| find(name).ok_or_else(|| Error::Schema(name.clone())))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
        let raw_ts = row.get(ts_col).unwrap_or("");
        let timestamp = parse_timestamp(raw_ts).ok_or_else(|| {
            Error::format(path, format!("line {line}: bad timestamp `{raw_ts}`"))
        })?;
        let values = cols.iter().map(|&c| row.get(c).and_then(parse_cell)).collect();
        records.push(RawRecord { timestamp, values });
    }
    if records.is_empty() {
        return Err(Error::format(path, "no data rows"));
    }

    // stable sort keeps file order among equal timestamps, so the last one wins
    records.sort_by_key(|r| r.timestamp);
    let before = records.len();
    let mut deduped: Vec<RawRecord> = Vec::with_capacity(before);
    for r in records {
        match deduped.last_mut() {
            Some(last) if last.timestamp == r.timestamp => *last = r,
            _ => deduped.push(r),
        }
    }
    let duplicate_timestamps = before - deduped.len();
    if duplicate_timestamps > 0 {
        log::warn!("{}: {duplicate_timestamps} duplicate timestamps, later rows kept", path.display());
    }
    Ok(RawTable {
        variables: schema.to_vec(),
        records: deduped,
        duplicate_timestamps,
    })
}

/// Averages the available points of each hour onto a dense hourly grid.
/// Hours without any point are `NaN`.
pub fn aggregate_hourly(table: &RawTable, target_name: &str) -> Result<HourlySeries> {
    let first = table
        .records
        .first()
        .ok_or_else(|| Error::Contract("aggregate_hourly needs at least one record".into()))?;
    let start = floor_hour(first.timestamp);
    let last = floor_hour(table.records.iter().map(|r| r.timestamp).max().unwrap());
    let hours = (last - start).num_hours() as usize + 1;
    let d = table.variables.len();
    let mut sums = vec![vec![0.0; hours]; d];
    let mut counts = vec![vec![0usize; hours]; d];
    for r in &table.records {
        let h = (floor_hour(r.timestamp) - start).num_hours() as usize;
        for (v, val) in r.values.iter().enumerate() {
            if let Some(x) = val {
                sums[v][h] += x;
                counts[v][h] += 1;
            }
        }
    }
    let values = sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| {
            s.into_iter()
                .zip(c)
                .map(|(s, c)| if c == 0 { f64::NAN } else { s / c as f64 })
                .collect()
        })
        .collect();
    HourlySeries::new(start, table.variables.clone(), target_name, values)
}
