//! Per-day decomposition series and their CSV interchange format.

use std::io::{self, Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed series row {row}: {reason}")]
    Malformed { row: usize, reason: String },
}

/// What the relative-wealth column of a series is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    TotalMarket,
    SelfFinancingMarket,
    TopM { m: usize },
}

impl Baseline {
    pub fn tag(&self) -> String {
        match self {
            Baseline::TotalMarket => "total_market".into(),
            Baseline::SelfFinancingMarket => "sfm".into(),
            Baseline::TopM { m } => format!("top_m:m={m}"),
        }
    }

    pub fn parse(s: &str) -> Option<Baseline> {
        match s {
            "total_market" => Some(Baseline::TotalMarket),
            "sfm" => Some(Baseline::SelfFinancingMarket),
            _ => {
                let rest = s.strip_prefix("top_m")?;
                if rest.is_empty() {
                    return Some(Baseline::TopM { m: 1 });
                }
                let m = rest.strip_prefix(":m=")?.parse().ok()?;
                Some(Baseline::TopM { m })
            }
        }
    }
}

/// Cumulative decomposition of a multiplicatively generated strategy's log
/// relative wealth. At every day,
/// `log_v = log_g + eg + c_tm + c_g + dlret` and `log_u = log_v - c_tm`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionSeries {
    pub baseline: Baseline,
    pub days: Vec<usize>,
    pub log_g: Vec<f64>,
    pub eg: Vec<f64>,
    pub c_tm: Vec<f64>,
    pub c_g: Vec<f64>,
    pub dlret: Vec<f64>,
    pub log_v: Vec<f64>,
    pub log_u: Vec<f64>,
}

impl DecompositionSeries {
    pub(crate) fn with_capacity(n: usize, baseline: Baseline) -> Self {
        DecompositionSeries {
            baseline,
            days: Vec::with_capacity(n),
            log_g: Vec::with_capacity(n),
            eg: Vec::with_capacity(n),
            c_tm: Vec::with_capacity(n),
            c_g: Vec::with_capacity(n),
            dlret: Vec::with_capacity(n),
            log_v: Vec::with_capacity(n),
            log_u: Vec::with_capacity(n),
        }
    }

    pub(crate) fn push(
        &mut self,
        day: usize,
        log_g: f64,
        eg: f64,
        c_tm: f64,
        c_g: f64,
        dlret: f64,
    ) {
        let log_v = log_g + eg + c_tm + c_g + dlret;
        self.days.push(day);
        self.log_g.push(log_g);
        self.eg.push(eg);
        self.c_tm.push(c_tm);
        self.c_g.push(c_g);
        self.dlret.push(dlret);
        self.log_v.push(log_v);
        self.log_u.push(log_v - c_tm);
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// Largest violation of the two defining identities; useful in tests.
    pub fn identity_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            let sum = self.log_g[i] + self.eg[i] + self.c_tm[i] + self.c_g[i] + self.dlret[i];
            worst = worst.max((self.log_v[i] - sum).abs());
            worst = worst.max((self.log_u[i] - (self.log_v[i] - self.c_tm[i])).abs());
        }
        worst
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SeriesError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "day", "log_g", "eg", "c_tm", "c_g", "dlret", "log_v", "log_u", "baseline",
        ])?;
        let tag = self.baseline.tag();
        for i in 0..self.len() {
            out.write_record([
                self.days[i].to_string(),
                self.log_g[i].to_string(),
                self.eg[i].to_string(),
                self.c_tm[i].to_string(),
                self.c_g[i].to_string(),
                self.dlret[i].to_string(),
                self.log_v[i].to_string(),
                self.log_u[i].to_string(),
                tag.clone(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, SeriesError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut series = DecompositionSeries::with_capacity(0, Baseline::TotalMarket);
        let parse = |row: usize, field: &str| -> Result<f64, SeriesError> {
            field.parse().map_err(|_| SeriesError::Malformed {
                row,
                reason: format!("`{field}` is not a number"),
            })
        };
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 9 {
                return Err(SeriesError::Malformed {
                    row,
                    reason: format!("expected 9 fields, got {}", rec.len()),
                });
            }
            let day = rec[0].parse().map_err(|_| SeriesError::Malformed {
                row,
                reason: format!("bad day `{}`", &rec[0]),
            })?;
            series.days.push(day);
            series.log_g.push(parse(row, &rec[1])?);
            series.eg.push(parse(row, &rec[2])?);
            series.c_tm.push(parse(row, &rec[3])?);
            series.c_g.push(parse(row, &rec[4])?);
            series.dlret.push(parse(row, &rec[5])?);
            series.log_v.push(parse(row, &rec[6])?);
            series.log_u.push(parse(row, &rec[7])?);
            series.baseline = Baseline::parse(&rec[8]).ok_or_else(|| SeriesError::Malformed {
                row,
                reason: format!("unknown baseline `{}`", &rec[8]),
            })?;
        }
        Ok(series)
    }
}

/// Decomposition of an additively generated strategy's relative wealth:
/// `v = g + eg_add + c_add` at every day, with everything normalized so the
/// generating function starts at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveSeries {
    pub days: Vec<usize>,
    pub g: Vec<f64>,
    pub eg_add: Vec<f64>,
    pub c_add: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdditiveSeries {
    pub(crate) fn with_capacity(n: usize) -> Self {
        AdditiveSeries {
            days: Vec::with_capacity(n),
            g: Vec::with_capacity(n),
            eg_add: Vec::with_capacity(n),
            c_add: Vec::with_capacity(n),
            v: Vec::with_capacity(n),
        }
    }

    pub(crate) fn push(&mut self, day: usize, g: f64, eg_add: f64, c_add: f64) {
        self.days.push(day);
        self.g.push(g);
        self.eg_add.push(eg_add);
        self.c_add.push(c_add);
        self.v.push(g + eg_add + c_add);
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn identity_residual(&self) -> f64 {
        (0..self.len())
            .map(|i| (self.v[i] - (self.g[i] + self.eg_add[i] + self.c_add[i])).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SeriesError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["day", "g", "eg_add", "c_add", "v"])?;
        for i in 0..self.len() {
            out.write_record([
                self.days[i].to_string(),
                self.g[i].to_string(),
                self.eg_add[i].to_string(),
                self.c_add[i].to_string(),
                self.v[i].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn baseline_tags_round_trip() {
        for b in [
            Baseline::TotalMarket,
            Baseline::SelfFinancingMarket,
            Baseline::TopM { m: 7 },
        ] {
            assert_eq!(Baseline::parse(&b.tag()), Some(b));
        }
        assert_eq!(Baseline::parse("nonsense"), None);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(values in proptest::collection::vec(
            (-1e9..1e9f64, -1e9..1e9f64),
            1..40,
        )) {
            let mut s = DecompositionSeries::with_capacity(values.len(), Baseline::TotalMarket);
            for (day, (a, b)) in values.iter().enumerate() {
                s.push(day, *a, *b, a * b, a - b, 0.0);
            }
            let text = s.to_csv_string();
            let back = DecompositionSeries::read_csv(text.as_bytes()).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
