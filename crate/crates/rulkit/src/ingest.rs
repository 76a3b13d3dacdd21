//! Daily-snapshot CSV ingestion and per-device history assembly.
//!
//! Input files follow the Backblaze drive-stats layout: one CSV per calendar
//! day, header-addressed columns, one row per active device. Only the five
//! raw SMART counters the pipeline consumes are extracted; everything else is
//! passed over. Column order in the file is irrelevant.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::{MATRIX_DAYS, NUM_FEATURES, SMART_IDS};

/// Minimum complete-feature days inside the 151-day range before a device
/// may contribute a training matrix (one 25-step window plus slack).
pub const MIN_VALID_DAYS: usize = 31;

/// One device-day snapshot. A missing CSV cell stays `None`; it is never
/// silently zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SmartRecord {
    pub date: NaiveDate,
    pub serial: String,
    pub model: String,
    pub capacity_bytes: i64,
    pub failed: bool,
    pub features: [Option<f64>; NUM_FEATURES],
}

impl SmartRecord {
    /// True when every feature cell is present.
    pub fn is_complete(&self) -> bool {
        self.features.iter().all(|f| f.is_some())
    }
}

/// Ordered daily records for one serial number.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceHistory {
    pub serial: String,
    pub model: String,
    /// Strictly ascending by date, no duplicates.
    pub days: Vec<SmartRecord>,
    /// Failure day; when present it is the date of the last record.
    pub failure_date: Option<NaiveDate>,
}

impl DeviceHistory {
    pub fn first_date(&self) -> Option<NaiveDate> {
        self.days.first().map(|r| r.date)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.days.last().map(|r| r.date)
    }

    /// Copy of this history with every record dated after `cutoff` removed.
    /// The failure flag is dropped with the truncated records.
    pub fn truncated_at(&self, cutoff: NaiveDate) -> DeviceHistory {
        let days: Vec<SmartRecord> = self
            .days
            .iter()
            .filter(|r| r.date <= cutoff)
            .cloned()
            .collect();
        let failure_date = self.failure_date.filter(|&d| d <= cutoff);
        DeviceHistory {
            serial: self.serial.clone(),
            model: self.model.clone(),
            days,
            failure_date,
        }
    }

    /// Complete-feature records, the only ones the numeric pipeline trusts.
    pub fn valid_days(&self) -> impl Iterator<Item = &SmartRecord> {
        self.days.iter().filter(|r| r.is_complete())
    }
}

/// A days-by-features matrix aligned to an anchor day (failure day for
/// training, current day for simulation). Row 0 is the oldest day.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub serial: String,
    pub anchor: NaiveDate,
    pub rows: Vec<[f64; NUM_FEATURES]>,
    /// False where the row was imputed (calendar gap or incomplete record).
    pub row_valid: Vec<bool>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

/// Row-level counters from parsing one day file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub rows_filtered: usize,
    pub rows_skipped: usize,
}

/// Counters accumulated while building histories.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub devices: usize,
    pub failed_devices: usize,
    pub records: usize,
    pub duplicates: usize,
    pub post_failure_dropped: usize,
    pub rows_skipped: usize,
}

impl std::fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "devices: {}", self.devices)?;
        writeln!(f, "failed devices: {}", self.failed_devices)?;
        writeln!(f, "records kept: {}", self.records)?;
        writeln!(f, "duplicate rows collapsed: {}", self.duplicates)?;
        writeln!(f, "post-failure rows dropped: {}", self.post_failure_dropped)?;
        write!(f, "unparseable rows skipped: {}", self.rows_skipped)
    }
}

fn raw_column_name(smart_id: u32) -> String {
    format!("smart_{smart_id}_raw")
}

/// Parse one day file. Rows whose model does not match the filter are
/// dropped; rows with an unparseable date or empty serial are counted and
/// skipped rather than failing the file.
pub fn parse_day_file<R: Read>(
    reader: R,
    model_filter: Option<&str>,
) -> Result<(Vec<SmartRecord>, ParseStats)> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| Error::format(format!("unreadable header: {e}")))?
        .clone();
    if headers.is_empty() {
        return Err(Error::format("empty file"));
    }

    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::format(format!("missing column {name}")))
    };

    let i_date = find("date")?;
    let i_serial = find("serial_number")?;
    let i_model = find("model")?;
    let i_failure = find("failure")?;
    let i_capacity = headers.iter().position(|h| h == "capacity_bytes");
    let mut i_features = [0usize; NUM_FEATURES];
    for (slot, id) in i_features.iter_mut().zip(SMART_IDS) {
        *slot = find(&raw_column_name(id))?;
    }

    let mut stats = ParseStats::default();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        stats.rows_read += 1;

        let get = |i: usize| record.get(i).unwrap_or("");

        let model = get(i_model);
        if let Some(filter) = model_filter {
            if model != filter {
                stats.rows_filtered += 1;
                continue;
            }
        }

        let date = match NaiveDate::parse_from_str(get(i_date), "%Y-%m-%d") {
            Ok(d) => d,
            Err(_) => {
                stats.rows_skipped += 1;
                continue;
            }
        };
        let serial = get(i_serial).trim();
        if serial.is_empty() {
            stats.rows_skipped += 1;
            continue;
        }

        let mut features = [None; NUM_FEATURES];
        for (slot, &col) in features.iter_mut().zip(i_features.iter()) {
            let cell = get(col).trim();
            if !cell.is_empty() {
                *slot = cell.parse::<f64>().ok().filter(|v| v.is_finite());
            }
        }

        out.push(SmartRecord {
            date,
            serial: serial.to_string(),
            model: model.to_string(),
            capacity_bytes: i_capacity
                .and_then(|i| get(i).trim().parse::<i64>().ok())
                .unwrap_or(0),
            failed: get(i_failure).trim() == "1",
            features,
        });
        stats.rows_kept += 1;
    }

    if stats.rows_read == 0 {
        return Err(Error::format("empty file"));
    }
    Ok((out, stats))
}

/// Group records by serial into date-sorted histories.
///
/// Duplicate (serial, date) pairs keep the last-seen record. Records dated
/// after a failure record are dropped and counted. The result is keyed and
/// iterated in serial order, so the merge is independent of input order.
pub fn build_histories(
    records: Vec<SmartRecord>,
) -> (BTreeMap<String, DeviceHistory>, IngestSummary) {
    let mut by_serial: BTreeMap<String, Vec<SmartRecord>> = BTreeMap::new();
    for rec in records {
        by_serial.entry(rec.serial.clone()).or_default().push(rec);
    }

    let mut summary = IngestSummary::default();
    let mut histories = BTreeMap::new();
    for (serial, mut recs) in by_serial {
        // Stable sort keeps input order within a date so "last seen wins"
        // is well defined when collapsing duplicates below.
        recs.sort_by_key(|r| r.date);

        let mut days: Vec<SmartRecord> = Vec::with_capacity(recs.len());
        for rec in recs {
            match days.last_mut() {
                Some(last) if last.date == rec.date => {
                    *last = rec;
                    summary.duplicates += 1;
                }
                _ => days.push(rec),
            }
        }

        let failure_idx = days.iter().position(|r| r.failed);
        let failure_date = failure_idx.map(|i| {
            summary.post_failure_dropped += days.len() - i - 1;
            days.truncate(i + 1);
            days[i].date
        });

        summary.devices += 1;
        if failure_date.is_some() {
            summary.failed_devices += 1;
        }
        summary.records += days.len();

        let model = days.first().map(|r| r.model.clone()).unwrap_or_default();
        histories.insert(
            serial.clone(),
            DeviceHistory {
                serial,
                model,
                days,
                failure_date,
            },
        );
    }
    (histories, summary)
}

/// Extract the 151-row matrix ending at `anchor`, requiring at least
/// [`MIN_VALID_DAYS`] complete days in range. Training path.
pub fn extract_matrix(history: &DeviceHistory, anchor: NaiveDate) -> Result<FeatureMatrix> {
    extract_matrix_with_min(history, anchor, MIN_VALID_DAYS)
}

/// As [`extract_matrix`] but with a caller-chosen validity floor. The
/// simulation path uses a floor of 1; its real history gate is the
/// 60-day statistics window.
pub(crate) fn extract_matrix_with_min(
    history: &DeviceHistory,
    anchor: NaiveDate,
    min_valid: usize,
) -> Result<FeatureMatrix> {
    let last = history
        .last_date()
        .ok_or_else(|| Error::argument(format!("device {} has no records", history.serial)))?;
    if anchor > last {
        return Err(Error::argument(format!(
            "anchor {anchor} is after last recorded day {last} for device {}",
            history.serial
        )));
    }

    let start = anchor - chrono::Days::new((MATRIX_DAYS - 1) as u64);
    // Validity gate counts complete days in (anchor-150, anchor].
    let valid_days = history
        .valid_days()
        .filter(|r| r.date > start && r.date <= anchor)
        .count();
    if valid_days < min_valid {
        return Err(Error::InsufficientHistory {
            serial: history.serial.clone(),
            valid_days,
            needed: min_valid,
        });
    }

    let mut rows: Vec<[f64; NUM_FEATURES]> = Vec::with_capacity(MATRIX_DAYS);
    let mut row_valid = Vec::with_capacity(MATRIX_DAYS);
    let mut records = history
        .days
        .iter()
        .filter(|r| r.is_complete() && r.date <= anchor)
        .peekable();
    let mut carried: Option<[f64; NUM_FEATURES]> = None;
    let mut prefix_len = 0usize;

    for offset in 0..MATRIX_DAYS {
        let day = start + chrono::Days::new(offset as u64);
        while let Some(rec) = records.peek() {
            if rec.date < day {
                let rec = records.next().unwrap();
                carried = Some(rec.features.map(|f| f.unwrap()));
            } else {
                break;
            }
        }
        let exact = records
            .peek()
            .filter(|r| r.date == day)
            .map(|r| r.features.map(|f| f.unwrap()));
        if let Some(values) = exact {
            records.next();
            carried = Some(values);
            rows.push(values);
            row_valid.push(true);
        } else if let Some(values) = carried {
            rows.push(values);
            row_valid.push(false);
        } else {
            // No data yet; back-filled with the first valid row below.
            prefix_len += 1;
        }
    }

    let first = rows
        .first()
        .copied()
        .ok_or_else(|| Error::InsufficientHistory {
            serial: history.serial.clone(),
            valid_days: 0,
            needed: min_valid,
        })?;
    let mut full_rows = vec![first; prefix_len];
    full_rows.extend(rows);
    let mut full_valid = vec![false; prefix_len];
    full_valid.extend(row_valid);

    debug_assert_eq!(full_rows.len(), MATRIX_DAYS);
    Ok(FeatureMatrix {
        serial: history.serial.clone(),
        anchor,
        rows: full_rows,
        row_valid: full_valid,
    })
}

// ---------------------------------------------------------------------------
// History cache (versioned, tab-delimited; documented in FORMATS.md)
// ---------------------------------------------------------------------------

const CACHE_MAGIC: &str = "rulkit-history-cache v1";

fn fmt_cell(v: Option<f64>) -> String {
    // `{}` on f64 prints the shortest decimal that parses back bit-exactly.
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write histories to the cache format, one record per line.
pub fn write_history_cache<W: Write>(
    out: &mut W,
    histories: &BTreeMap<String, DeviceHistory>,
) -> Result<()> {
    writeln!(out, "{CACHE_MAGIC}")?;
    for history in histories.values() {
        for rec in &history.days {
            let cells: Vec<String> = rec.features.iter().map(|&f| fmt_cell(f)).collect();
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                rec.serial,
                rec.model,
                rec.date.format("%Y-%m-%d"),
                if rec.failed { 1 } else { 0 },
                rec.capacity_bytes,
                cells.join("\t"),
            )?;
        }
    }
    Ok(())
}

/// Read a cache produced by [`write_history_cache`].
pub fn read_history_cache<R: Read>(reader: R) -> Result<BTreeMap<String, DeviceHistory>> {
    let mut lines = BufReader::new(reader).lines();
    let magic = lines
        .next()
        .ok_or_else(|| Error::format("empty cache file"))??;
    if magic.trim() != CACHE_MAGIC {
        return Err(Error::format(format!(
            "unsupported cache version line: {magic:?}"
        )));
    }

    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 + NUM_FEATURES {
            return Err(Error::format(format!(
                "cache line {}: expected {} fields, got {}",
                lineno + 2,
                5 + NUM_FEATURES,
                fields.len()
            )));
        }
        let date = NaiveDate::parse_from_str(fields[2], "%Y-%m-%d")
            .map_err(|e| Error::format(format!("cache line {}: bad date: {e}", lineno + 2)))?;
        let mut features = [None; NUM_FEATURES];
        for (slot, cell) in features.iter_mut().zip(&fields[5..]) {
            if !cell.is_empty() {
                *slot = Some(cell.parse::<f64>().map_err(|e| {
                    Error::format(format!("cache line {}: bad feature: {e}", lineno + 2))
                })?);
            }
        }
        records.push(SmartRecord {
            date,
            serial: fields[0].to_string(),
            model: fields[1].to_string(),
            capacity_bytes: fields[4]
                .parse()
                .map_err(|e| Error::format(format!("cache line {}: bad capacity: {e}", lineno + 2)))?,
            failed: fields[3] == "1",
            features,
        });
    }
    let (histories, _) = build_histories(records);
    Ok(histories)
}

// ---------------------------------------------------------------------------
// Day-file writer (same schema the parser reads; used by the fleet generator)
// ---------------------------------------------------------------------------

/// Header of an emitted day file. Normalized columns are present to match
/// the upstream layout but left empty; the pipeline ignores them.
pub fn day_file_header() -> Vec<String> {
    let mut cols = vec![
        "date".to_string(),
        "serial_number".to_string(),
        "model".to_string(),
        "capacity_bytes".to_string(),
        "failure".to_string(),
    ];
    for id in SMART_IDS {
        cols.push(format!("smart_{id}_normalized"));
        cols.push(raw_column_name(id));
    }
    cols
}

/// Write one CSV day file per calendar date present across `histories`.
/// Returns the number of files written.
pub fn write_day_files(
    histories: &BTreeMap<String, DeviceHistory>,
    dir: &Path,
) -> Result<usize> {
    let mut by_date: BTreeMap<NaiveDate, Vec<&SmartRecord>> = BTreeMap::new();
    for history in histories.values() {
        for rec in &history.days {
            by_date.entry(rec.date).or_default().push(rec);
        }
    }

    std::fs::create_dir_all(dir)?;
    for (date, recs) in &by_date {
        let path = dir.join(format!("{}.csv", date.format("%Y-%m-%d")));
        let mut wtr = csv::Writer::from_path(&path)?;
        wtr.write_record(day_file_header())?;
        for rec in recs {
            let mut row = vec![
                rec.date.format("%Y-%m-%d").to_string(),
                rec.serial.clone(),
                rec.model.clone(),
                rec.capacity_bytes.to_string(),
                if rec.failed { "1" } else { "0" }.to_string(),
            ];
            for f in rec.features {
                row.push(String::new());
                row.push(fmt_cell(f));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
    }
    Ok(by_date.len())
}

/// Parse every `*.csv` under `dir` and assemble histories.
pub fn ingest_dir(
    dir: &Path,
    model_filter: Option<&str>,
) -> Result<(BTreeMap<String, DeviceHistory>, IngestSummary)> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::format(format!("no .csv files under {}", dir.display())));
    }

    let mut records = Vec::new();
    let mut skipped = 0usize;
    for path in &paths {
        let file = std::fs::File::open(path)?;
        let (recs, stats) = parse_day_file(std::io::BufReader::new(file), model_filter)
            .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        skipped += stats.rows_skipped;
        records.extend(recs);
    }
    let (histories, mut summary) = build_histories(records);
    summary.rows_skipped = skipped;
    Ok((histories, summary))
}
