//! Loading and saving daily capitalization panels.
//!
//! The interchange format is UTF-8 CSV with header `date,stock_id,cap,dlret`
//! and one row per stock per day. A stock's delisting return sits on its
//! last listed row; an empty field means the return is missing. A stock id
//! present one day and absent the next produces a delisting event dated by
//! the first absent day. Per-day vectors are ordered by first appearance of
//! the stock id over the whole file, so entrants join at the tail.

use crate::market::{MarketError, MarketPath};
use chrono::NaiveDate;
use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("stock {id} appears twice on {date}")]
    DuplicateStockDay { date: String, id: String },
    #[error("non-positive capitalization for {id} on {date}: {value}")]
    NonPositiveCap {
        date: String,
        id: String,
        value: f64,
    },
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// How missing delisting returns are resolved at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DlretPolicy {
    /// Missing returns become -1: the position is written off entirely.
    Conservative,
    /// Missing returns become 0: the position is recovered at its last value.
    Optimistic,
    /// Missing returns stay missing.
    #[default]
    AsGiven,
}

impl DlretPolicy {
    pub fn resolve(self, dlret: Option<f64>) -> Option<f64> {
        match self {
            DlretPolicy::Conservative => Some(dlret.unwrap_or(-1.0)),
            DlretPolicy::Optimistic => Some(dlret.unwrap_or(0.0)),
            DlretPolicy::AsGiven => dlret,
        }
    }

    pub fn parse(s: &str) -> Option<DlretPolicy> {
        match s {
            "conservative" => Some(DlretPolicy::Conservative),
            "optimistic" => Some(DlretPolicy::Optimistic),
            "as-given" | "as_given" => Some(DlretPolicy::AsGiven),
            _ => None,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            DlretPolicy::Conservative => "conservative",
            DlretPolicy::Optimistic => "optimistic",
            DlretPolicy::AsGiven => "as-given",
        }
    }
}

impl MarketPath {
    /// Copy of the path with missing delisting returns resolved per policy.
    pub fn with_dlret_policy(&self, policy: DlretPolicy) -> MarketPath {
        self.map_dlrets(|r| policy.resolve(r))
    }
}

pub fn load_csv(file: impl AsRef<Path>, policy: DlretPolicy) -> Result<MarketPath, IngestError> {
    load_csv_reader(File::open(file)?, policy)
}

pub fn load_csv_reader<R: Read>(reader: R, policy: DlretPolicy) -> Result<MarketPath, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    {
        let headers = rdr.headers()?;
        let fields: Vec<&str> = headers.iter().map(str::trim).collect();
        if fields != ["date", "stock_id", "cap", "dlret"] && fields != ["date", "stock_id", "cap"] {
            return Err(IngestError::MalformedRow {
                line: 1,
                reason: format!("unexpected header `{}`", fields.join(",")),
            });
        }
    }

    struct Row {
        cap: f64,
        dlret: Option<f64>,
    }
    // Rows per date, keyed by stock id; dates collected in sorted order.
    let mut by_date: Vec<(NaiveDate, Vec<(String, Row)>)> = Vec::new();
    let mut date_slot: HashMap<NaiveDate, usize> = HashMap::new();

    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record?;
        if record.len() < 3 || record.len() > 4 {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected 3 or 4 fields, got {}", record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(record[0].trim(), "%Y-%m-%d").map_err(|e| {
            IngestError::MalformedRow {
                line,
                reason: format!("bad date `{}`: {e}", &record[0]),
            }
        })?;
        let id = record[1].trim().to_string();
        if id.is_empty() {
            return Err(IngestError::MalformedRow {
                line,
                reason: "empty stock_id".into(),
            });
        }
        let cap: f64 = record[2]
            .trim()
            .parse()
            .map_err(|_| IngestError::MalformedRow {
                line,
                reason: format!("bad cap `{}`", &record[2]),
            })?;
        if !cap.is_finite() || cap <= 0.0 {
            return Err(IngestError::NonPositiveCap {
                date: date.to_string(),
                id,
                value: cap,
            });
        }
        let dlret = match record.get(3).map(str::trim) {
            None | Some("") => None,
            Some(text) => {
                let value: f64 = text.parse().map_err(|_| IngestError::MalformedRow {
                    line,
                    reason: format!("bad dlret `{text}`"),
                })?;
                if !value.is_finite() || value < -1.0 {
                    return Err(IngestError::MalformedRow {
                        line,
                        reason: format!("dlret {value} must be >= -1"),
                    });
                }
                Some(value)
            }
        };
        let slot = *date_slot.entry(date).or_insert_with(|| {
            by_date.push((date, Vec::new()));
            by_date.len() - 1
        });
        if by_date[slot].1.iter().any(|(other, _)| *other == id) {
            return Err(IngestError::DuplicateStockDay {
                date: date.to_string(),
                id,
            });
        }
        by_date[slot].1.push((id, Row { cap, dlret }));
    }
    by_date.sort_by_key(|(date, _)| *date);

    // Order each day's vector by global first appearance.
    let mut first_seen: HashMap<String, usize> = HashMap::new();
    let mut rank = 0usize;
    for (_, rows) in &by_date {
        for (id, _) in rows {
            if !first_seen.contains_key(id) {
                first_seen.insert(id.clone(), rank);
                rank += 1;
            }
        }
    }

    let mut dates = Vec::with_capacity(by_date.len());
    let mut caps_by_day = Vec::with_capacity(by_date.len());
    let mut ids_by_day = Vec::with_capacity(by_date.len());
    let mut dlret_by_id: HashMap<String, Option<f64>> = HashMap::new();
    let mut dlrets: Vec<(usize, String, Option<f64>)> = Vec::new();

    for (day, (date, rows)) in by_date.iter().enumerate() {
        let mut ordered: Vec<&(String, Row)> = rows.iter().collect();
        ordered.sort_by_key(|(id, _)| first_seen[id]);
        if day > 0 {
            for id in &ids_by_day[day - 1] as &Vec<String> {
                if !ordered.iter().any(|(other, _)| other == id) {
                    let raw = dlret_by_id.get(id).copied().flatten();
                    dlrets.push((day, id.clone(), policy.resolve(raw)));
                }
            }
        }
        dates.push(*date);
        ids_by_day.push(ordered.iter().map(|(id, _)| id.clone()).collect());
        caps_by_day.push(ordered.iter().map(|(_, row)| row.cap).collect());
        for (id, row) in ordered {
            dlret_by_id.insert(id.clone(), row.dlret);
        }
    }

    Ok(MarketPath::from_days(
        caps_by_day,
        ids_by_day,
        &dlrets,
        Some(dates),
    )?)
}

/// Writes a path back out in the canonical panel format. Paths built
/// without dates get synthetic consecutive dates starting 2000-01-03.
pub fn write_csv<W: Write>(path: &MarketPath, writer: W) -> Result<(), IngestError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["date", "stock_id", "cap", "dlret"])?;
    let base = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid base date");
    for day in 0..path.num_days() {
        let date = path
            .date(day)
            .unwrap_or_else(|| base + chrono::Days::new(day as u64));
        let ids = path.ids(day);
        for (i, cap) in path.caps(day).iter().enumerate() {
            let dlret = if day + 1 < path.num_days() {
                path.delistings_on(day + 1)
                    .find(|d| d.id == ids[i])
                    .and_then(|d| d.dlret)
            } else {
                None
            };
            out.write_record([
                date.to_string(),
                ids[i].clone(),
                cap.to_string(),
                dlret.map(|r| r.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_csv(path: &MarketPath, file: impl AsRef<Path>) -> Result<(), IngestError> {
    write_csv(path, File::create(file)?)
}

pub fn to_csv_string(path: &MarketPath) -> String {
    let mut buf = Vec::new();
    write_csv(path, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BY_TWO: &str = "\
date,stock_id,cap,dlret
2001-01-01,A,2.0,
2001-01-01,B,2.0,
2001-01-02,A,3.0,
2001-01-02,B,1.0,
";

    #[test]
    fn constant_universe_single_epoch() {
        let path = load_csv_reader(TWO_BY_TWO.as_bytes(), DlretPolicy::AsGiven).unwrap();
        assert_eq!(path.num_days(), 2);
        assert_eq!(path.num_epochs(), 1);
        assert!(path.delistings().is_empty());
        assert_eq!(path.caps(1), &[3.0, 1.0]);
        assert_eq!(path.ids(0), &["A".to_string(), "B".to_string()]);
    }

    const B_DISAPPEARS: &str = "\
date,stock_id,cap,dlret
2001-01-01,A,2.0,
2001-01-01,B,2.0,
2001-01-02,A,3.0,
2001-01-02,B,1.0,
2001-01-03,A,3.0,
";

    #[test]
    fn conservative_policy_fills_minus_one() {
        let path = load_csv_reader(B_DISAPPEARS.as_bytes(), DlretPolicy::Conservative).unwrap();
        assert_eq!(path.delistings().len(), 1);
        let d = &path.delistings()[0];
        assert_eq!((d.day, d.id.as_str(), d.dlret), (2, "B", Some(-1.0)));
    }

    #[test]
    fn optimistic_policy_fills_zero() {
        let path = load_csv_reader(B_DISAPPEARS.as_bytes(), DlretPolicy::Optimistic).unwrap();
        assert_eq!(path.delistings()[0].dlret, Some(0.0));
        let as_given = load_csv_reader(B_DISAPPEARS.as_bytes(), DlretPolicy::AsGiven).unwrap();
        assert_eq!(as_given.delistings()[0].dlret, None);
        assert_eq!(
            as_given
                .with_dlret_policy(DlretPolicy::Conservative)
                .delistings()[0]
                .dlret,
            Some(-1.0)
        );
    }

    #[test]
    fn explicit_dlret_passes_through() {
        let text = "\
date,stock_id,cap,dlret
2001-01-01,A,2.0,
2001-01-01,B,2.0,
2001-01-02,A,3.0,
2001-01-02,B,1.0,-0.35
2001-01-03,A,3.0,
";
        let path = load_csv_reader(text.as_bytes(), DlretPolicy::Conservative).unwrap();
        assert_eq!(path.delistings()[0].dlret, Some(-0.35));
    }

    #[test]
    fn entrant_joins_at_tail_and_dates_sort() {
        let text = "\
date,stock_id,cap
2001-01-02,A,3.0
2001-01-02,B,1.0
2001-01-01,A,2.0
2001-01-01,B,2.0
2001-01-03,B,1.0
2001-01-03,C,1.0
2001-01-03,A,3.0
";
        let path = load_csv_reader(text.as_bytes(), DlretPolicy::AsGiven).unwrap();
        assert_eq!(path.ids(2), &["A".to_string(), "B".into(), "C".into()]);
        assert_eq!(path.caps(0), &[2.0, 2.0]);
        assert_eq!(path.jump_days(), &[2]);
    }

    #[test]
    fn same_day_entry_and_exit_is_a_reset() {
        let text = "\
date,stock_id,cap
2001-01-01,A,2.0
2001-01-01,B,2.0
2001-01-02,A,3.0
2001-01-02,C,1.0
";
        let path = load_csv_reader(text.as_bytes(), DlretPolicy::AsGiven).unwrap();
        assert_eq!(path.dim(0), 2);
        assert_eq!(path.dim(1), 2);
        assert_eq!(path.jump_days(), &[1]);
        assert_eq!(path.delistings().len(), 1);
        assert_eq!(path.delistings()[0].id, "B");
    }

    #[test]
    fn error_cases() {
        let dup = "date,stock_id,cap,dlret\n2001-01-01,A,2.0,\n2001-01-01,A,1.0,\n";
        assert!(matches!(
            load_csv_reader(dup.as_bytes(), DlretPolicy::AsGiven),
            Err(IngestError::DuplicateStockDay { .. })
        ));
        let bad_cap = "date,stock_id,cap,dlret\n2001-01-01,A,-2.0,\n";
        assert!(matches!(
            load_csv_reader(bad_cap.as_bytes(), DlretPolicy::AsGiven),
            Err(IngestError::NonPositiveCap { .. })
        ));
        let bad_date = "date,stock_id,cap,dlret\n01/02/2001,A,2.0,\n";
        assert!(matches!(
            load_csv_reader(bad_date.as_bytes(), DlretPolicy::AsGiven),
            Err(IngestError::MalformedRow { .. })
        ));
        let bad_dlret = "date,stock_id,cap,dlret\n2001-01-01,A,2.0,-1.5\n";
        assert!(matches!(
            load_csv_reader(bad_dlret.as_bytes(), DlretPolicy::AsGiven),
            Err(IngestError::MalformedRow { .. })
        ));
        let bad_header = "when,stock_id,cap\n2001-01-01,A,2.0\n";
        assert!(matches!(
            load_csv_reader(bad_header.as_bytes(), DlretPolicy::AsGiven),
            Err(IngestError::MalformedRow { line: 1, .. })
        ));
    }

    #[test]
    fn round_trip_is_a_fixed_point() {
        let text = "\
date,stock_id,cap,dlret
2001-01-01,A,2.5,
2001-01-01,B,2.0,
2001-01-02,A,3.0,
2001-01-02,B,1.0,-0.35
2001-01-03,A,3.25,
2001-01-03,C,0.75,
";
        let first = load_csv_reader(text.as_bytes(), DlretPolicy::AsGiven).unwrap();
        let emitted = to_csv_string(&first);
        let second = load_csv_reader(emitted.as_bytes(), DlretPolicy::AsGiven).unwrap();
        assert_eq!(first, second);
        assert_eq!(emitted, to_csv_string(&second));
    }

    #[test]
    fn delisting_count_matches_disappearances() {
        let text = "\
date,stock_id,cap
2001-01-01,A,1.0
2001-01-01,B,1.0
2001-01-01,C,1.0
2001-01-02,A,1.0
2001-01-03,A,1.0
2001-01-03,D,1.0
";
        let path = load_csv_reader(text.as_bytes(), DlretPolicy::AsGiven).unwrap();
        assert_eq!(path.delistings().len(), 2);
        assert!(path.delistings().iter().all(|d| d.day == 1));
    }
}
