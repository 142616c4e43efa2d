//! Reading and writing commodity series as comma-separated text.
//!
//! A series file has a header naming `period`, `price` and `sur` columns in
//! any order and any case; other columns are ignored. Periods are years
//! (`1998`) or quarters (`2001Q1`). Numbers use a plain `.` decimal point.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elasticity::{CommoditySeries, ElasticityError, Period, Record};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{source_name}: {message}")]
    Csv { source_name: String, message: String },
    #[error("{source_name}: missing column `{column}` in header")]
    MissingColumn { source_name: String, column: &'static str },
    #[error("{source_name}: line {line}, column {column} (`{header}`): cannot parse {value:?}: {reason}")]
    Cell {
        source_name: String,
        line: u64,
        column: usize,
        header: String,
        value: String,
        reason: String,
    },
    #[error("{source_name}: line {line}: expected {expected} cells, found {found}")]
    Ragged {
        source_name: String,
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("{source_name}: line {line}: {source}")]
    Invalid {
        source_name: String,
        line: u64,
        source: ElasticityError,
    },
    #[error("{source_name}: {source}")]
    Series { source_name: String, source: ElasticityError },
    #[error("{source_name}: period {period} appears on lines {first} and {second}")]
    DuplicatePeriod {
        source_name: String,
        period: Period,
        first: u64,
        second: u64,
    },
    #[error("deflator index must be positive and finite, got {index} for {period}")]
    DeflatorIndex { period: Period, index: f64 },
    #[error("base period {0} is not in the deflator table")]
    MissingBase(Period),
    #[error("deflator has no index for {}", list_periods(.0))]
    MissingDeflatorPeriods(Vec<Period>),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn list_periods(ps: &[Period]) -> String {
    ps.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ")
}

/// Which period syntax a file must use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodFormat {
    /// Whatever the first row uses; mixing is still rejected.
    #[default]
    Auto,
    Year,
    Quarter,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOptions {
    pub allow_negative_sur: bool,
    pub period_format: PeriodFormat,
}

/// Header and cells of a rectangular CSV file, untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub source: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// 1-based line number of every row.
    pub lines: Vec<u64>,
}

impl RawTable {
    pub fn read<R: Read>(source: &str, reader: R) -> Result<Self, IngestError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
        let csv_err = |e: csv::Error| IngestError::Csv {
            source_name: source.to_string(),
            message: e.to_string(),
        };
        let headers: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();
        let mut rows = Vec::new();
        let mut lines = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            // a blank trailing line parses as a single empty cell
            if rec.len() == 1 && rec[0].trim().is_empty() {
                continue;
            }
            if rec.len() != headers.len() {
                return Err(IngestError::Ragged {
                    source_name: source.to_string(),
                    line,
                    expected: headers.len(),
                    found: rec.len(),
                });
            }
            rows.push(rec.iter().map(|c| c.to_string()).collect());
            lines.push(line);
        }
        Ok(RawTable {
            source: source.to_string(),
            headers,
            rows,
            lines,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, IngestError> {
        let file = File::open(path).map_err(|e| IngestError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::read(&path.display().to_string(), file)
    }

    fn column(&self, name: &'static str) -> Result<usize, IngestError> {
        self.headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| IngestError::MissingColumn {
                source_name: self.source.clone(),
                column: name,
            })
    }

    fn cell_error(&self, row: usize, col: usize, reason: impl Into<String>) -> IngestError {
        IngestError::Cell {
            source_name: self.source.clone(),
            line: self.lines[row],
            column: col + 1,
            header: self.headers[col].clone(),
            value: self.rows[row][col].clone(),
            reason: reason.into(),
        }
    }

    fn number(&self, row: usize, col: usize) -> Result<f64, IngestError> {
        let text = self.rows[row][col].trim();
        let x: f64 = text.parse().map_err(|_| self.cell_error(row, col, "not a decimal number"))?;
        if !x.is_finite() {
            return Err(self.cell_error(row, col, "not a finite number"));
        }
        Ok(x)
    }

    fn period(&self, row: usize, col: usize, format: PeriodFormat) -> Result<Period, IngestError> {
        let p: Period = self.rows[row][col]
            .parse()
            .map_err(|_| self.cell_error(row, col, "expected a year like 1998 or a quarter like 2001Q1"))?;
        match (format, p.is_quarter()) {
            (PeriodFormat::Year, true) => Err(self.cell_error(row, col, "quarter given but yearly periods requested")),
            (PeriodFormat::Quarter, false) => Err(self.cell_error(row, col, "year given but quarterly periods requested")),
            _ => Ok(p),
        }
    }
}

/// Parses a series from CSV text held in memory.
pub fn parse_series_str(name: &str, text: &str, options: ParseOptions) -> Result<CommoditySeries, IngestError> {
    parse_table(&RawTable::read(name, text.as_bytes())?, name, options)
}

/// Parses a series file; the series is named after the file stem.
pub fn parse_series(path: &Path, options: ParseOptions) -> Result<CommoditySeries, IngestError> {
    let table = RawTable::from_path(path)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_table(&table, &name, options)
}

pub fn parse_table(table: &RawTable, name: &str, options: ParseOptions) -> Result<CommoditySeries, IngestError> {
    let (cp, cx, cs) = (table.column("period")?, table.column("price")?, table.column("sur")?);
    let mut records = Vec::with_capacity(table.rows.len());
    let mut seen: BTreeMap<Period, u64> = BTreeMap::new();
    let mut quarterly = None;
    for row in 0..table.rows.len() {
        let period = table.period(row, cp, options.period_format)?;
        let line = table.lines[row];
        match quarterly {
            None => quarterly = Some(period.is_quarter()),
            Some(q) if q != period.is_quarter() => {
                return Err(IngestError::Invalid {
                    source_name: table.source.clone(),
                    line,
                    source: ElasticityError::MixedGranularity,
                })
            }
            _ => {}
        }
        if let Some(first) = seen.insert(period, line) {
            return Err(IngestError::DuplicatePeriod {
                source_name: table.source.clone(),
                period,
                first,
                second: line,
            });
        }
        let price = table.number(row, cx)?;
        let sur = table.number(row, cs)?;
        let record = Record { period, price, sur };
        // row-level checks here so the error carries the line
        CommoditySeries::new(name, vec![record], options.allow_negative_sur).map_err(|e| IngestError::Invalid {
            source_name: table.source.clone(),
            line,
            source: e,
        })?;
        records.push(record);
    }
    CommoditySeries::new(name, records, options.allow_negative_sur).map_err(|e| IngestError::Series {
        source_name: table.source.clone(),
        source: e,
    })
}

/// Writes `period,price,sur` with shortest round-trip number formatting.
pub fn write_series<W: Write>(series: &CommoditySeries, writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["period", "price", "sur"])?;
    for r in series.records() {
        w.write_record([r.period.to_string(), r.price.to_string(), r.sur.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Price index per period, normalised so the base period has index 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeflatorTable {
    pub base: Period,
    pub index: BTreeMap<Period, f64>,
}

impl DeflatorTable {
    pub fn new(entries: impl IntoIterator<Item = (Period, f64)>, base: Period) -> Result<Self, IngestError> {
        let mut index = BTreeMap::new();
        for (p, x) in entries {
            if !(x > 0.0 && x.is_finite()) {
                return Err(IngestError::DeflatorIndex { period: p, index: x });
            }
            index.insert(p, x);
        }
        let b = *index.get(&base).ok_or(IngestError::MissingBase(base))?;
        for x in index.values_mut() {
            *x /= b;
        }
        Ok(DeflatorTable { base, index })
    }

    /// Reads a `period,index` file.
    pub fn from_table(table: &RawTable, base: Period) -> Result<Self, IngestError> {
        let (cp, ci) = (table.column("period")?, table.column("index")?);
        let mut entries = Vec::with_capacity(table.rows.len());
        for row in 0..table.rows.len() {
            entries.push((table.period(row, cp, PeriodFormat::Auto)?, table.number(row, ci)?));
        }
        Self::new(entries, base)
    }
}

/// Converts nominal prices to base-period currency:
/// `real(t) = nominal(t) * index(base) / index(t)`.
pub fn apply_deflator(series: &CommoditySeries, deflator: &DeflatorTable) -> Result<CommoditySeries, IngestError> {
    let missing: Vec<Period> = series
        .records()
        .iter()
        .map(|r| r.period)
        .filter(|p| !deflator.index.contains_key(p))
        .collect();
    if !missing.is_empty() {
        return Err(IngestError::MissingDeflatorPeriods(missing));
    }
    let records = series
        .records()
        .iter()
        .map(|r| Record {
            price: r.price / deflator.index[&r.period],
            ..*r
        })
        .collect();
    CommoditySeries::new(format!("{} @{}", series.name, deflator.base), records, series.allow_negative_sur).map_err(|e| {
        IngestError::Series {
            source_name: series.name.clone(),
            source: e,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_record() {
        let s = parse_series_str("t", "period,price,sur\n1998,10.0,0.5", ParseOptions::default()).unwrap();
        assert_eq!(s.records(), &[Record { period: Period::Year(1998), price: 10.0, sur: 0.5 }]);
    }

    #[test]
    fn columns_by_name_any_case_and_order() {
        let text = "Note,SUR,Period,PRICE\nx,0.2,2001Q2,5\ny,0.1,2001Q1,6\n";
        let s = parse_series_str("t", text, ParseOptions::default()).unwrap();
        assert_eq!(s.records()[0].period, Period::Quarter { year: 2001, quarter: 1 });
        assert_eq!(s.records()[1].price, 5.0);
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse_series_str("t", "period,price,sur\n1998,10,0.5\n1999,1o,0.5\n", ParseOptions::default()).unwrap_err();
        match err {
            IngestError::Cell { line, column, .. } => assert_eq!((line, column), (3, 2)),
            e => panic!("{e}"),
        }
        let err = parse_series_str("t", "period,price,sur\n1998,10,0.5\n1998,11,0.6\n", ParseOptions::default()).unwrap_err();
        assert!(err.to_string().contains("1998"), "{err}");
        let err = parse_series_str("t", "period,price\n1998,10\n", ParseOptions::default()).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn { column: "sur", .. }));
        let err = parse_series_str("t", "period,price,sur\n1998,10,-0.5\n", ParseOptions::default()).unwrap_err();
        assert!(matches!(err, IngestError::Invalid { line: 2, .. }), "{err}");
        let ok = ParseOptions {
            allow_negative_sur: true,
            ..Default::default()
        };
        assert!(parse_series_str("t", "period,price,sur\n1998,10,-0.5\n", ok).is_ok());
        let err = parse_series_str("t", "period,price,sur\n1998,10,0.5,9\n", ParseOptions::default()).unwrap_err();
        assert!(matches!(err, IngestError::Ragged { line: 2, .. }), "{err}");
        assert!(parse_series_str("t", "period,price,sur\n1998,1e400,0.5\n", ParseOptions::default()).is_err());
        assert!(parse_series_str("t", "period,price,sur\n1998,\"1,5\",0.5\n", ParseOptions::default()).is_err());
    }

    #[test]
    fn deflation() {
        let s = parse_series_str("oil", "period,price,sur\n2000,10,0.1\n2001,10,0.2\n", ParseOptions::default()).unwrap();
        let d = DeflatorTable::new([(Period::Year(2000), 100.0), (Period::Year(2001), 200.0)], Period::Year(2000)).unwrap();
        let r = apply_deflator(&s, &d).unwrap();
        assert_eq!(r.records()[1].price, 5.0);
        assert_eq!(r.name, "oil @2000");
        let gap = DeflatorTable::new([(Period::Year(2000), 1.0)], Period::Year(2000)).unwrap();
        match apply_deflator(&s, &gap) {
            Err(IngestError::MissingDeflatorPeriods(p)) => assert_eq!(p, vec![Period::Year(2001)]),
            other => panic!("{other:?}"),
        }
    }
}
