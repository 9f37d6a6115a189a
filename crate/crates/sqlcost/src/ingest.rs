//! Query request log ingestion: parsing, windowing and cleaning.
//!
//! Logs arrive as JSON-lines (primary) or CSV with a header row
//! (secondary). Each record carries the seven columns used for
//! training; anything else in the source logs is ignored.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A UTC timestamp at hour granularity, serialized as the 10-digit
/// string `YYYYMMDDHH`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DateHour(NaiveDateTime);

impl DateHour {
    pub fn from_parts(year: i32, month: u32, day: u32, hour: u32) -> Result<Self> {
        let date = NaiveDate::from_ymd_opt(year, month, day).ok_or_else(|| {
            Error::InvalidDatehour(format!("{year:04}{month:02}{day:02}{hour:02}"))
        })?;
        let dt = date.and_hms_opt(hour, 0, 0).ok_or_else(|| {
            Error::InvalidDatehour(format!("{year:04}{month:02}{day:02}{hour:02}"))
        })?;
        Ok(DateHour(dt))
    }

    pub fn as_datetime(&self) -> NaiveDateTime {
        self.0
    }

    pub fn minus_days(&self, days: i64) -> DateHour {
        let dt = self
            .0
            .checked_sub_signed(chrono::Duration::days(days))
            .unwrap_or(NaiveDateTime::MIN);
        DateHour(dt)
    }

    pub fn minus_hours(&self, hours: i64) -> DateHour {
        let dt = self
            .0
            .checked_sub_signed(chrono::Duration::hours(hours))
            .unwrap_or(NaiveDateTime::MIN);
        DateHour(dt)
    }
}

impl FromStr for DateHour {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() != 10 || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::InvalidDatehour(s.to_string()));
        }
        let year: i32 = s[0..4].parse().unwrap();
        let month: u32 = s[4..6].parse().unwrap();
        let day: u32 = s[6..8].parse().unwrap();
        let hour: u32 = s[8..10].parse().unwrap();
        DateHour::from_parts(year, month, day, hour)
            .map_err(|_| Error::InvalidDatehour(s.to_string()))
    }
}

impl fmt::Display for DateHour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:04}{:02}{:02}{:02}",
            self.0.year(),
            self.0.month(),
            self.0.day(),
            self.0.hour()
        )
    }
}

impl Serialize for DateHour {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for DateHour {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One historical query request, as logged by the SQL engine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLogRecord {
    pub query_id: String,
    pub user: String,
    pub cluster: String,
    pub query: String,
    pub cpu_time_ms: u64,
    pub peak_memory_bytes: u64,
    pub datehour: DateHour,
}

/// Input serialization of one log line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogFormat {
    Jsonl,
    Csv,
}

const COLUMNS: [&str; 7] = [
    "query_id",
    "user",
    "cluster",
    "query",
    "cpu_time_ms",
    "peak_memory_bytes",
    "datehour",
];

/// Parse a single log line in the given format.
///
/// CSV lines are assumed to follow the canonical column order
/// (`query_id,user,cluster,query,cpu_time_ms,peak_memory_bytes,datehour`);
/// [`load_logs`] adapts to reordered headers.
pub fn parse_log_line(line: &str, format: LogFormat) -> Result<QueryLogRecord> {
    match format {
        LogFormat::Jsonl => parse_jsonl_line(line),
        LogFormat::Csv => {
            let fields = split_csv_line(line);
            parse_csv_fields(&fields, &[0, 1, 2, 3, 4, 5, 6])
        }
    }
}

fn parse_jsonl_line(line: &str) -> Result<QueryLogRecord> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|_| Error::TypeMismatch {
        field: "<line>".to_string(),
        expected: "a JSON object".to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| Error::TypeMismatch {
        field: "<line>".to_string(),
        expected: "a JSON object".to_string(),
    })?;

    let get_str = |name: &str| -> Result<String> {
        let v = obj
            .get(name)
            .ok_or_else(|| Error::MissingField(name.to_string()))?;
        v.as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::TypeMismatch {
                field: name.to_string(),
                expected: "string".to_string(),
            })
    };
    let get_u64 = |name: &str| -> Result<u64> {
        let v = obj
            .get(name)
            .ok_or_else(|| Error::MissingField(name.to_string()))?;
        v.as_u64().ok_or_else(|| Error::TypeMismatch {
            field: name.to_string(),
            expected: "non-negative integer".to_string(),
        })
    };

    let datehour_raw = get_str("datehour")?;
    Ok(QueryLogRecord {
        query_id: get_str("query_id")?,
        user: get_str("user")?,
        cluster: get_str("cluster")?,
        query: get_str("query")?,
        cpu_time_ms: get_u64("cpu_time_ms")?,
        peak_memory_bytes: get_u64("peak_memory_bytes")?,
        datehour: datehour_raw.parse()?,
    })
}

/// Split one CSV line into fields, honoring double-quoted fields with
/// doubled-quote escaping.
fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut chars = line.chars().peekable();
    let mut in_quotes = false;
    while let Some(c) = chars.next() {
        if in_quotes {
            if c == '"' {
                if chars.peek() == Some(&'"') {
                    cur.push('"');
                    chars.next();
                } else {
                    in_quotes = false;
                }
            } else {
                cur.push(c);
            }
        } else {
            match c {
                '"' => in_quotes = true,
                ',' => fields.push(std::mem::take(&mut cur)),
                _ => cur.push(c),
            }
        }
    }
    fields.push(cur);
    fields
}

/// Assemble a record from CSV fields, `positions[i]` giving the field
/// index of canonical column `i`.
fn parse_csv_fields(fields: &[String], positions: &[usize; 7]) -> Result<QueryLogRecord> {
    let get = |i: usize| -> Result<&str> {
        fields
            .get(positions[i])
            .map(String::as_str)
            .ok_or_else(|| Error::MissingField(COLUMNS[i].to_string()))
    };
    let get_u64 = |i: usize| -> Result<u64> {
        get(i)?.trim().parse().map_err(|_| Error::TypeMismatch {
            field: COLUMNS[i].to_string(),
            expected: "non-negative integer".to_string(),
        })
    };
    Ok(QueryLogRecord {
        query_id: get(0)?.to_string(),
        user: get(1)?.to_string(),
        cluster: get(2)?.to_string(),
        query: get(3)?.to_string(),
        cpu_time_ms: get_u64(4)?,
        peak_memory_bytes: get_u64(5)?,
        datehour: get(6)?.trim().parse()?,
    })
}

/// Serialize a record as one JSONL line (the seven canonical keys).
pub fn record_to_jsonl(record: &QueryLogRecord) -> String {
    serde_json::to_string(record).expect("record serialization cannot fail")
}

/// Result of loading a log file: surviving records plus the number of
/// malformed lines that were skipped.
#[derive(Debug, Clone)]
pub struct LoadedLogs {
    pub records: Vec<QueryLogRecord>,
    pub skipped: usize,
}

/// Load records from a JSONL or CSV file (chosen by `.csv` extension),
/// keeping only those whose datehour falls within
/// `[now - window_days, now]`. Malformed lines are counted and skipped;
/// file order is preserved.
pub fn load_logs(path: &Path, now: DateHour, window_days: u32) -> Result<LoadedLogs> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => LogFormat::Csv,
        _ => LogFormat::Jsonl,
    };
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let earliest = now.minus_days(window_days as i64);

    let mut records = Vec::new();
    let mut skipped = 0usize;
    let mut positions: [usize; 7] = [0, 1, 2, 3, 4, 5, 6];
    let mut header_seen = false;

    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if format == LogFormat::Csv && !header_seen {
            header_seen = true;
            positions = resolve_csv_header(&line)?;
            continue;
        }
        let parsed = match format {
            LogFormat::Jsonl => parse_jsonl_line(&line),
            LogFormat::Csv => parse_csv_fields(&split_csv_line(&line), &positions),
        };
        match parsed {
            Ok(record) => {
                if record.datehour >= earliest && record.datehour <= now {
                    records.push(record);
                }
            }
            Err(_) => skipped += 1,
        }
    }

    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(LoadedLogs { records, skipped })
}

fn resolve_csv_header(line: &str) -> Result<[usize; 7]> {
    let names = split_csv_line(line);
    let mut positions = [usize::MAX; 7];
    for (i, col) in COLUMNS.iter().enumerate() {
        match names.iter().position(|n| n.trim() == *col) {
            Some(p) => positions[i] = p,
            None => return Err(Error::MissingField(format!("csv header column `{col}`"))),
        }
    }
    Ok(positions)
}

/// Drop records that cannot be labeled or featurized: empty query text,
/// never-executed queries (zero CPU time and zero peak memory), or an
/// empty query_id. Exact query_id collisions keep the first record.
pub fn clean(records: Vec<QueryLogRecord>) -> Result<Vec<QueryLogRecord>> {
    let mut seen = std::collections::HashSet::new();
    let kept: Vec<QueryLogRecord> = records
        .into_iter()
        .filter(|r| {
            !r.query_id.is_empty()
                && !r.query.trim().is_empty()
                && !(r.cpu_time_ms == 0 && r.peak_memory_bytes == 0)
        })
        .filter(|r| seen.insert(r.query_id.clone()))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(kept)
}
