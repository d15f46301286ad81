//! Daily percentage returns and their date-aligned matrix.
//!
//! Returns are stored as decimal fractions (`0.05` for +5%).

use std::collections::{BTreeSet, HashSet};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{AssetId, DatasetWindow, PriceSeries};

#[derive(Debug, Error)]
pub enum ReturnsError {
    #[error("{symbol} has {points} price point(s); at least 2 are needed for a return")]
    TooShort { symbol: String, points: usize },

    #[error("aligning returns needs at least 2 series, got {got}")]
    TooFewSeries { got: usize },

    #[error("asset {0} appears more than once")]
    DuplicateAsset(String),

    #[error("{symbol} has {rows} non-missing return(s); at least 3 are needed")]
    TooFewRows { symbol: String, rows: usize },

    #[error("returns matrix shape mismatch: {0}")]
    Shape(String),

    #[error("malformed returns CSV at line {line}: {message}")]
    MalformedCsv { line: u64, message: String },
}

pub type Result<T, E = ReturnsError> = std::result::Result<T, E>;

/// How a return is formed across a calendar gap in the price series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapPolicy {
    /// Compare with the previous available observation, however old.
    #[default]
    Bridge,
    /// A return spanning more than one calendar day is missing.
    Strict,
}

impl FromStr for GapPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bridge" => Ok(GapPolicy::Bridge),
            "strict" => Ok(GapPolicy::Strict),
            other => Err(format!("unknown gap policy {other:?} (expected bridge or strict)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnPoint {
    pub date: NaiveDate,
    /// `None` when the return is missing under the gap policy.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub asset: AssetId,
    pub points: Vec<ReturnPoint>,
}

impl ReturnSeries {
    pub fn non_missing(&self) -> usize {
        self.points.iter().filter(|p| p.value.is_some()).count()
    }
}

/// `p(d) / p(prev) - 1` for every observation after the first.
pub fn daily_returns(series: &PriceSeries, gap_policy: GapPolicy) -> Result<ReturnSeries> {
    let points = series.points();
    if points.len() < 2 {
        return Err(ReturnsError::TooShort {
            symbol: series.symbol().to_string(),
            points: points.len(),
        });
    }
    let points = points
        .windows(2)
        .map(|w| {
            let (prev, cur) = (w[0], w[1]);
            let spans_gap = (cur.date - prev.date).num_days() > 1;
            let value = match gap_policy {
                GapPolicy::Strict if spans_gap => None,
                _ => Some(cur.price_usd / prev.price_usd - 1.0),
            };
            ReturnPoint {
                date: cur.date,
                value,
            }
        })
        .collect();
    Ok(ReturnSeries {
        asset: series.asset().clone(),
        points,
    })
}

/// Rectangular date × asset table of returns with explicit missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsMatrix {
    dates: Vec<NaiveDate>,
    assets: Vec<AssetId>,
    // row-major
    cells: Vec<Option<f64>>,
}

impl ReturnsMatrix {
    /// Builds a matrix from per-asset columns aligned to `dates`.
    pub fn from_columns(
        dates: Vec<NaiveDate>,
        assets: Vec<AssetId>,
        columns: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        if assets.len() != columns.len() {
            return Err(ReturnsError::Shape(format!(
                "{} assets but {} columns",
                assets.len(),
                columns.len()
            )));
        }
        if let Some((a, c)) = assets.iter().zip(&columns).find(|(_, c)| c.len() != dates.len()) {
            return Err(ReturnsError::Shape(format!(
                "column {} has {} cells for {} dates",
                a.symbol,
                c.len(),
                dates.len()
            )));
        }
        if dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ReturnsError::Shape("dates must be strictly increasing".into()));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = assets.iter().find(|a| !seen.insert(a.symbol.as_str())) {
            return Err(ReturnsError::DuplicateAsset(dup.symbol.clone()));
        }
        let mut cells = Vec::with_capacity(dates.len() * assets.len());
        for row in 0..dates.len() {
            cells.extend(columns.iter().map(|c| c[row]));
        }
        let m = Self {
            dates,
            assets,
            cells,
        };
        for (asset, rows) in m.assets.iter().zip(m.non_missing_counts()) {
            if rows < 3 {
                return Err(ReturnsError::TooFewRows {
                    symbol: asset.symbol.clone(),
                    rows,
                });
            }
        }
        Ok(m)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[AssetId] {
        &self.assets
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row * self.assets.len() + col]
    }

    pub fn column(&self, col: usize) -> Vec<Option<f64>> {
        (0..self.n_rows()).map(|r| self.get(r, col)).collect()
    }

    pub fn column_of(&self, symbol: &str) -> Option<Vec<Option<f64>>> {
        self.assets
            .iter()
            .position(|a| a.symbol == symbol)
            .map(|c| self.column(c))
    }

    /// Non-missing cells per asset, in asset order.
    pub fn non_missing_counts(&self) -> Vec<usize> {
        (0..self.n_assets())
            .map(|c| (0..self.n_rows()).filter(|&r| self.get(r, c).is_some()).count())
            .collect()
    }

    pub fn missing_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    /// Wide CSV: `date` then one column per symbol, missing cells empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date");
        for a in &self.assets {
            out.push(',');
            out.push_str(&a.symbol);
        }
        out.push('\n');
        for (r, date) in self.dates.iter().enumerate() {
            out.push_str(&date.to_string());
            for c in 0..self.n_assets() {
                out.push(',');
                if let Some(v) = self.get(r, c) {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    /// Parses the wide CSV written by [`ReturnsMatrix::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut records = reader.records();
        let malformed = |line: u64, message: String| ReturnsError::MalformedCsv { line, message };

        let header = records
            .next()
            .ok_or_else(|| malformed(1, "missing header".into()))?
            .map_err(|e| malformed(1, e.to_string()))?;
        if header.get(0) != Some("date") {
            return Err(malformed(1, "first column must be `date`".into()));
        }
        let assets = header
            .iter()
            .skip(1)
            .map(|s| AssetId::from_symbol(s).map_err(|e| malformed(1, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let width = header.len();

        let mut dates = Vec::new();
        let mut columns = vec![Vec::new(); assets.len()];
        for (idx, record) in records.enumerate() {
            let line = idx as u64 + 2;
            let record = record.map_err(|e| malformed(line, e.to_string()))?;
            if record.len() != width {
                return Err(malformed(
                    line,
                    format!("expected {width} fields, found {}", record.len()),
                ));
            }
            let date = record[0]
                .parse()
                .map_err(|_| malformed(line, format!("bad date {:?}", &record[0])))?;
            dates.push(date);
            for (col, field) in columns.iter_mut().zip(record.iter().skip(1)) {
                let cell = if field.is_empty() {
                    None
                } else {
                    let v: f64 = field
                        .parse()
                        .ok()
                        .filter(|v: &f64| v.is_finite())
                        .ok_or_else(|| malformed(line, format!("bad return {field:?}")))?;
                    Some(v)
                };
                col.push(cell);
            }
        }
        Self::from_columns(dates, assets, columns)
    }
}

/// Aligns return series on the union of their dates inside `window`.
pub fn align(series: &[ReturnSeries], window: &DatasetWindow) -> Result<ReturnsMatrix> {
    if series.len() < 2 {
        return Err(ReturnsError::TooFewSeries { got: series.len() });
    }
    let dates: BTreeSet<NaiveDate> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.date))
        .filter(|d| window.contains(*d))
        .collect();
    let dates: Vec<NaiveDate> = dates.into_iter().collect();
    let columns = series
        .iter()
        .map(|s| {
            let mut col = vec![None; dates.len()];
            for p in s.points.iter().filter(|p| window.contains(p.date)) {
                let row = dates.binary_search(&p.date).expect("date is in the union");
                col[row] = p.value;
            }
            col
        })
        .collect();
    let assets = series.iter().map(|s| s.asset.clone()).collect();
    ReturnsMatrix::from_columns(dates, assets, columns)
}
