//! Daily USD price series: CSV parsing, REST fetching with an on-disk cache,
//! windowing into datasets, and missing-date reports.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("invalid asset symbol {0:?}: expected a non-empty lowercase token without whitespace or commas")]
    InvalidSymbol(String),

    #[error("malformed CSV at line {line}: {message}")]
    MalformedCsv { line: u64, message: String },

    #[error("non-positive price {price} on {date}")]
    NonPositivePrice { date: NaiveDate, price: f64 },

    #[error("no price observations for {symbol}")]
    EmptySeries { symbol: String },

    #[error("dates for {symbol} are not strictly increasing at {date}")]
    UnorderedDates { symbol: String, date: NaiveDate },

    #[error("window start {start} is after window end {end}")]
    InvalidWindow { start: NaiveDate, end: NaiveDate },

    #[error("HTTP request failed{}: {message}", status.map(|s| format!(" with status {s}")).unwrap_or_default())]
    HttpFailure { status: Option<u16>, message: String },

    #[error("malformed price response: {0}")]
    MalformedResponse(String),

    #[error("cache I/O error at {}: {source}", path.display())]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("a dataset needs at least 2 series, got {got}")]
    TooFewSeries { got: usize },

    #[error("asset {0} appears more than once")]
    DuplicateAsset(String),

    #[error("insufficient coverage of the window: {}", format_gaps(.gaps))]
    InsufficientCoverage { gaps: Vec<CoverageGap> },
}

fn format_gaps(gaps: &[CoverageGap]) -> String {
    gaps.iter()
        .map(|g| format!("{} (data {}..{})", g.symbol, g.first, g.last))
        .collect::<Vec<_>>()
        .join(", ")
}

/// An asset that does not cover a requested window, with the span it does cover.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageGap {
    pub symbol: String,
    pub first: NaiveDate,
    pub last: NaiveDate,
}

pub type Result<T, E = MarketDataError> = std::result::Result<T, E>;

/// Short lowercase ticker (`btc`) plus a human-readable name (`Bitcoin`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AssetId {
    pub symbol: String,
    pub display_name: String,
}

impl AssetId {
    pub fn new(symbol: impl Into<String>, display_name: impl Into<String>) -> Result<Self> {
        let symbol = symbol.into();
        let valid = !symbol.is_empty()
            && symbol
                .chars()
                .all(|c| !c.is_whitespace() && c != ',' && !c.is_uppercase());
        if !valid {
            return Err(MarketDataError::InvalidSymbol(symbol));
        }
        Ok(Self {
            symbol,
            display_name: display_name.into(),
        })
    }

    /// Asset whose display name is its symbol.
    pub fn from_symbol(symbol: impl Into<String>) -> Result<Self> {
        let symbol = symbol.into();
        Self::new(symbol.clone(), symbol)
    }
}

impl fmt::Display for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.symbol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub date: NaiveDate,
    pub price_usd: f64,
}

/// Date-ordered observations for one asset. Calendar gaps are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    asset: AssetId,
    points: Vec<PricePoint>,
}

impl PriceSeries {
    pub fn new(asset: AssetId, points: Vec<PricePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(MarketDataError::EmptySeries {
                symbol: asset.symbol,
            });
        }
        for p in &points {
            if !(p.price_usd.is_finite() && p.price_usd > 0.0) {
                return Err(MarketDataError::NonPositivePrice {
                    date: p.date,
                    price: p.price_usd,
                });
            }
        }
        if let Some(w) = points.windows(2).find(|w| w[1].date <= w[0].date) {
            return Err(MarketDataError::UnorderedDates {
                symbol: asset.symbol,
                date: w[1].date,
            });
        }
        Ok(Self { asset, points })
    }

    pub fn asset(&self) -> &AssetId {
        &self.asset
    }

    pub fn symbol(&self) -> &str {
        &self.asset.symbol
    }

    pub fn points(&self) -> &[PricePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_date(&self) -> NaiveDate {
        self.points[0].date
    }

    pub fn last_date(&self) -> NaiveDate {
        self.points[self.points.len() - 1].date
    }

    /// Restricts the series to `window`, failing if nothing remains.
    pub fn windowed(&self, window: &DatasetWindow) -> Result<Self> {
        let points: Vec<_> = self
            .points
            .iter()
            .copied()
            .filter(|p| window.contains(p.date))
            .collect();
        Self::new(self.asset.clone(), points)
    }

    /// Serializes to the generic `date,price` format.
    pub fn to_generic_csv(&self) -> String {
        let mut out = String::from("date,price\n");
        for p in &self.points {
            out.push_str(&format!("{},{}\n", p.date, p.price_usd));
        }
        out
    }
}

/// Inclusive date range `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawWindow")]
pub struct DatasetWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Deserialize)]
struct RawWindow {
    start: NaiveDate,
    end: NaiveDate,
}

impl TryFrom<RawWindow> for DatasetWindow {
    type Error = MarketDataError;

    fn try_from(raw: RawWindow) -> Result<Self> {
        Self::new(raw.start, raw.end)
    }
}

impl DatasetWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(MarketDataError::InvalidWindow { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    /// Every calendar day in the window, in order.
    pub fn days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.start.iter_days().take_while(move |d| *d <= self.end)
    }

    pub fn num_days(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }
}

impl fmt::Display for DatasetWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// Windowed series for a set of distinct assets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    window: DatasetWindow,
    series: Vec<PriceSeries>,
}

impl Dataset {
    pub fn window(&self) -> &DatasetWindow {
        &self.window
    }

    pub fn series(&self) -> &[PriceSeries] {
        &self.series
    }

    pub fn into_series(self) -> Vec<PriceSeries> {
        self.series
    }

    pub fn assets(&self) -> Vec<&AssetId> {
        self.series.iter().map(|s| s.asset()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvFormat {
    /// Header `snapped_at,price,market_cap,total_volume`.
    CoingeckoExport,
    /// Header `date,price`.
    GenericTwoColumn,
}

impl CsvFormat {
    fn header(self) -> &'static [&'static str] {
        match self {
            CsvFormat::CoingeckoExport => &["snapped_at", "price", "market_cap", "total_volume"],
            CsvFormat::GenericTwoColumn => &["date", "price"],
        }
    }
}

impl FromStr for CsvFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "coingecko_export" | "coingecko" => Ok(CsvFormat::CoingeckoExport),
            "generic_two_column" | "generic" => Ok(CsvFormat::GenericTwoColumn),
            other => Err(format!(
                "unknown CSV format {other:?} (expected coingecko_export or generic_two_column)"
            )),
        }
    }
}

/// Parses a date or timestamp and truncates it to its UTC calendar day.
///
/// Accepts `YYYY-MM-DD`, `YYYY-MM-DD HH:MM:SS UTC` (the coingecko export
/// form), `YYYY-MM-DD HH:MM:SS`, and RFC 3339.
pub fn parse_utc_day(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d);
    }
    let naive = s.strip_suffix(" UTC").unwrap_or(s);
    if let Ok(dt) = NaiveDateTime::parse_from_str(naive, "%Y-%m-%d %H:%M:%S") {
        return Some(dt.date());
    }
    DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|dt| dt.with_timezone(&Utc).date_naive())
}

/// Parses a price CSV into a date-sorted series.
///
/// The header must match `format` exactly. Rows sharing a UTC day collapse
/// to the last one in file order.
pub fn parse_price_csv(asset: AssetId, text: &str, format: CsvFormat) -> Result<PriceSeries> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let expected = format.header();
    let mut by_day = BTreeMap::new();
    let mut saw_header = false;

    for (idx, record) in reader.records().enumerate() {
        let line = idx as u64 + 1;
        let record = record.map_err(|e| MarketDataError::MalformedCsv {
            line,
            message: e.to_string(),
        })?;
        if !saw_header {
            if record.iter().ne(expected.iter().copied()) {
                return Err(MarketDataError::MalformedCsv {
                    line,
                    message: format!(
                        "expected header {:?}, found {:?}",
                        expected.join(","),
                        record.iter().collect::<Vec<_>>().join(",")
                    ),
                });
            }
            saw_header = true;
            continue;
        }
        if record.len() != expected.len() {
            return Err(MarketDataError::MalformedCsv {
                line,
                message: format!("expected {} fields, found {}", expected.len(), record.len()),
            });
        }
        let date = parse_utc_day(&record[0]).ok_or_else(|| MarketDataError::MalformedCsv {
            line,
            message: format!("unparseable date {:?}", &record[0]),
        })?;
        let price: f64 = record[1]
            .trim()
            .parse()
            .ok()
            .filter(|p: &f64| p.is_finite())
            .ok_or_else(|| MarketDataError::MalformedCsv {
                line,
                message: format!("unparseable price {:?}", &record[1]),
            })?;
        if price <= 0.0 {
            return Err(MarketDataError::NonPositivePrice { date, price });
        }
        by_day.insert(date, price);
    }
    if !saw_header {
        return Err(MarketDataError::MalformedCsv {
            line: 1,
            message: "missing header".into(),
        });
    }
    series_from_days(asset, by_day)
}

fn series_from_days(asset: AssetId, by_day: BTreeMap<NaiveDate, f64>) -> Result<PriceSeries> {
    let points = by_day
        .into_iter()
        .map(|(date, price_usd)| PricePoint { date, price_usd })
        .collect();
    PriceSeries::new(asset, points)
}

/// Converts a JSON body of `[epoch_millis, price]` pairs into a series.
///
/// A coingecko `market_chart` object (`{"prices": [...]}`) is also accepted.
/// Several observations on one UTC day collapse to the last.
pub fn parse_price_json(asset: AssetId, body: &str) -> Result<PriceSeries> {
    let pairs = price_pairs_from_json(body)?;
    let mut by_day = BTreeMap::new();
    for (millis, price) in pairs {
        let date = DateTime::from_timestamp_millis(millis)
            .ok_or_else(|| MarketDataError::MalformedResponse(format!("timestamp {millis} out of range")))?
            .date_naive();
        if !(price.is_finite() && price > 0.0) {
            return Err(MarketDataError::NonPositivePrice { date, price });
        }
        by_day.insert(date, price);
    }
    series_from_days(asset, by_day)
}

fn price_pairs_from_json(body: &str) -> Result<Vec<(i64, f64)>> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| MarketDataError::MalformedResponse(e.to_string()))?;
    let array = match &value {
        serde_json::Value::Array(a) => a,
        serde_json::Value::Object(o) => match o.get("prices") {
            Some(serde_json::Value::Array(a)) => a,
            _ => {
                return Err(MarketDataError::MalformedResponse(
                    "object without a \"prices\" array".into(),
                ))
            }
        },
        _ => {
            return Err(MarketDataError::MalformedResponse(
                "expected a JSON array of [epoch_millis, price]".into(),
            ))
        }
    };
    array
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let pair = item.as_array().filter(|p| p.len() == 2);
            let parsed = pair.and_then(|p| {
                let millis = p[0].as_i64().or_else(|| p[0].as_f64().map(|f| f as i64))?;
                Some((millis, p[1].as_f64()?))
            });
            parsed.ok_or_else(|| {
                MarketDataError::MalformedResponse(format!("element {i} is not [epoch_millis, price]"))
            })
        })
        .collect()
}

/// Environment variable naming the fetch cache directory.
pub const CACHE_DIR_ENV: &str = "CORRNET_CACHE_DIR";

/// Cache file for one `(symbol, window)` request.
pub fn cache_path(cache_dir: &Path, symbol: &str, window: &DatasetWindow) -> PathBuf {
    cache_dir.join(format!("{symbol}_{}_{}.json", window.start, window.end))
}

/// Expands `{symbol}`, `{name}`, `{from}` and `{to}` in an endpoint template.
///
/// `{from}`/`{to}` are epoch seconds spanning the window's first to last UTC
/// day; `{name}` is the display name lowercased with spaces as dashes.
pub fn expand_endpoint(template: &str, asset: &AssetId, window: &DatasetWindow) -> String {
    let from = window.start.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp();
    let to = window.end.and_hms_opt(23, 59, 59).unwrap().and_utc().timestamp();
    let name = asset.display_name.to_lowercase().replace(' ', "-");
    template
        .replace("{symbol}", &asset.symbol)
        .replace("{name}", &name)
        .replace("{from}", &from.to_string())
        .replace("{to}", &to.to_string())
}

/// Fetches one asset's history from a coingecko-compatible endpoint.
///
/// When `cache_dir` is given, a cached response for the same symbol and
/// window is used instead of the network, and fresh responses are written
/// there as a normalized `[[epoch_millis, price], ...]` array.
pub fn fetch_price_history(
    asset: &AssetId,
    window: &DatasetWindow,
    endpoint: &str,
    cache_dir: Option<&Path>,
) -> Result<PriceSeries> {
    let cached = cache_dir.map(|dir| cache_path(dir, &asset.symbol, window));
    let body = match cached.as_deref().filter(|p| p.exists()) {
        Some(path) => fs::read_to_string(path).map_err(|source| MarketDataError::Cache {
            path: path.to_path_buf(),
            source,
        })?,
        None => {
            let body = http_get(&expand_endpoint(endpoint, asset, window))?;
            let pairs = price_pairs_from_json(&body)?;
            let normalized = serde_json::to_string(&pairs).expect("pairs serialize");
            if let Some(path) = &cached {
                write_cache(path, &normalized)?;
            }
            normalized
        }
    };
    parse_price_json(asset.clone(), &body)?.windowed(window)
}

/// Fetches several assets concurrently, one thread per asset.
pub fn fetch_many(
    assets: &[AssetId],
    window: &DatasetWindow,
    endpoint: &str,
    cache_dir: Option<&Path>,
) -> Vec<Result<PriceSeries>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = assets
            .iter()
            .map(|a| scope.spawn(move || fetch_price_history(a, window, endpoint, cache_dir)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fetch thread panicked"))
            .collect()
    })
}

fn http_get(url: &str) -> Result<String> {
    let mut response = ureq::get(url).call().map_err(|e| match e {
        ureq::Error::StatusCode(status) => MarketDataError::HttpFailure {
            status: Some(status),
            message: format!("GET {url}"),
        },
        other => MarketDataError::HttpFailure {
            status: None,
            message: format!("GET {url}: {other}"),
        },
    })?;
    response
        .body_mut()
        .read_to_string()
        .map_err(|e| MarketDataError::HttpFailure {
            status: None,
            message: format!("reading body of {url}: {e}"),
        })
}

fn write_cache(path: &Path, contents: &str) -> Result<()> {
    let cache_err = |source| MarketDataError::Cache {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(cache_err)?;
    let tmp = path.with_extension("json.tmp");
    let mut file = fs::File::create(&tmp).map_err(cache_err)?;
    file.write_all(contents.as_bytes()).map_err(cache_err)?;
    file.sync_all().map_err(cache_err)?;
    fs::rename(&tmp, path).map_err(cache_err)
}

/// Truncates every series to `window`.
///
/// Series that start after `window.start` (or have no data inside it) are
/// rejected as a group rather than silently shortened.
pub fn build_dataset(series: Vec<PriceSeries>, window: DatasetWindow) -> Result<Dataset> {
    if series.len() < 2 {
        return Err(MarketDataError::TooFewSeries { got: series.len() });
    }
    let mut seen = HashSet::new();
    for s in &series {
        if !seen.insert(s.symbol()) {
            return Err(MarketDataError::DuplicateAsset(s.symbol().to_string()));
        }
    }
    let gaps: Vec<CoverageGap> = series
        .iter()
        .filter(|s| s.first_date() > window.start || s.last_date() < window.start)
        .map(|s| CoverageGap {
            symbol: s.symbol().to_string(),
            first: s.first_date(),
            last: s.last_date(),
        })
        .collect();
    if !gaps.is_empty() {
        return Err(MarketDataError::InsufficientCoverage { gaps });
    }
    let series = series
        .iter()
        .map(|s| s.windowed(&window))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { window, series })
}

/// Calendar days in the window that one asset has no observation for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingDates {
    pub asset: AssetId,
    pub dates: Vec<NaiveDate>,
}

pub fn report_missing(dataset: &Dataset) -> Vec<MissingDates> {
    dataset
        .series
        .iter()
        .map(|s| {
            let observed: HashSet<NaiveDate> = s.points.iter().map(|p| p.date).collect();
            MissingDates {
                asset: s.asset.clone(),
                dates: dataset.window.days().filter(|d| !observed.contains(d)).collect(),
            }
        })
        .collect()
}

/// `symbol,date` CSV listing every missing day.
pub fn missing_report_csv(report: &[MissingDates]) -> String {
    let mut out = String::from("symbol,date\n");
    for m in report {
        for d in &m.dates {
            out.push_str(&format!("{},{}\n", m.asset.symbol, d));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader};
    use std::net::TcpListener;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn asset(s: &str) -> AssetId {
        AssetId::from_symbol(s).unwrap()
    }

    fn series(sym: &str, days: &[(&str, f64)]) -> PriceSeries {
        let points = days
            .iter()
            .map(|(date, p)| PricePoint {
                date: d(date),
                price_usd: *p,
            })
            .collect();
        PriceSeries::new(asset(sym), points).unwrap()
    }

    fn window(a: &str, b: &str) -> DatasetWindow {
        DatasetWindow::new(d(a), d(b)).unwrap()
    }

    #[test]
    fn minimal_generic_csv() {
        let s = parse_price_csv(
            asset("btc"),
            "date,price\n2018-01-01,100\n2018-01-02,110",
            CsvFormat::GenericTwoColumn,
        )
        .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.points()[1].price_usd, 110.0);
    }

    #[test]
    fn duplicate_dates_keep_last_row() {
        let s = parse_price_csv(
            asset("btc"),
            "date,price\n2018-01-01,100\n2018-01-01,105\n",
            CsvFormat::GenericTwoColumn,
        )
        .unwrap();
        assert_eq!(s.points(), &[PricePoint { date: d("2018-01-01"), price_usd: 105.0 }]);
    }

    #[test]
    fn zero_price_rejected() {
        let err = parse_price_csv(asset("btc"), "date,price\n2018-01-01,0\n", CsvFormat::GenericTwoColumn)
            .unwrap_err();
        assert!(matches!(err, MarketDataError::NonPositivePrice { price, .. } if price == 0.0));
    }

    #[test]
    fn bad_header_and_arity() {
        let err = parse_price_csv(asset("btc"), "day,price\n2018-01-01,1\n", CsvFormat::GenericTwoColumn)
            .unwrap_err();
        assert!(matches!(err, MarketDataError::MalformedCsv { line: 1, .. }));
        let err = parse_price_csv(asset("btc"), "date,price\n2018-01-01,1,2\n", CsvFormat::GenericTwoColumn)
            .unwrap_err();
        assert!(matches!(err, MarketDataError::MalformedCsv { line: 2, .. }));
    }

    #[test]
    fn header_only_is_empty() {
        let err = parse_price_csv(asset("btc"), "date,price\n", CsvFormat::GenericTwoColumn).unwrap_err();
        assert!(matches!(err, MarketDataError::EmptySeries { .. }));
    }

    #[test]
    fn coingecko_export_truncates_timestamps() {
        let text = "snapped_at,price,market_cap,total_volume\n\
                    2018-01-02 00:00:00 UTC,110.5,1000,10\n\
                    2018-01-01 00:00:00 UTC,100,900,\n";
        let s = parse_price_csv(asset("btc"), text, CsvFormat::CoingeckoExport).unwrap();
        assert_eq!(s.first_date(), d("2018-01-01"));
        assert_eq!(s.last_date(), d("2018-01-02"));
        assert_eq!(s.points()[1].price_usd, 110.5);
    }

    #[test]
    fn rfc3339_truncated_to_utc_day() {
        assert_eq!(parse_utc_day("2018-01-01T23:30:00-02:00"), Some(d("2018-01-02")));
        assert_eq!(parse_utc_day("2018-01-01 12:00:00"), Some(d("2018-01-01")));
        assert_eq!(parse_utc_day("yesterday"), None);
    }

    #[test]
    fn symbols_are_validated() {
        assert!(AssetId::from_symbol("btc").is_ok());
        assert!(AssetId::from_symbol("").is_err());
        assert!(AssetId::from_symbol("BTC").is_err());
        assert!(AssetId::from_symbol("b c").is_err());
    }

    #[test]
    fn window_rejects_reversed_bounds() {
        assert!(DatasetWindow::new(d("2018-01-02"), d("2018-01-01")).is_err());
        let w: std::result::Result<DatasetWindow, _> =
            serde_json::from_str(r#"{"start":"2018-01-02","end":"2018-01-01"}"#);
        assert!(w.is_err());
        assert_eq!(window("2018-01-01", "2018-01-03").num_days(), 3);
    }

    #[test]
    fn json_epoch_millis_to_utc_day() {
        let s = parse_price_json(asset("btc"), "[[1514764800000, 100.0]]").unwrap();
        assert_eq!(s.points(), &[PricePoint { date: d("2018-01-01"), price_usd: 100.0 }]);
        let s = parse_price_json(asset("btc"), r#"{"prices": [[1514764800000, 100.0]], "market_caps": []}"#)
            .unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn empty_json_is_empty_series() {
        let err = parse_price_json(asset("btc"), "[]").unwrap_err();
        assert!(matches!(err, MarketDataError::EmptySeries { .. }));
        assert!(matches!(
            parse_price_json(asset("btc"), "[[1, 2, 3]]").unwrap_err(),
            MarketDataError::MalformedResponse(_)
        ));
    }

    /// Serves `responses` in order, one per connection, returning the URL.
    fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut paths = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                reader.read_line(&mut request_line).unwrap();
                paths.push(request_line.split_whitespace().nth(1).unwrap_or("").to_string());
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                }
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
            paths
        });
        (url, handle)
    }

    #[test]
    fn fetch_windows_and_caches() {
        let body = "[[1514764800000, 100.0], [1514851200000, 101.0], [1514937600000, 102.0]]";
        let (url, server) = serve(vec![(200, body.to_string())]);
        let cache = tempfile::tempdir().unwrap();
        let w = window("2018-01-02", "2018-01-03");
        let btc = AssetId::new("btc", "Bitcoin").unwrap();
        let endpoint = format!("{url}/coins/{{name}}/range?from={{from}}&to={{to}}");
        let s = fetch_price_history(&btc, &w, &endpoint, Some(cache.path())).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.first_date(), d("2018-01-02"));
        let paths = server.join().unwrap();
        assert_eq!(paths, vec!["/coins/bitcoin/range?from=1514851200&to=1515023999"]);

        // Second call is served from the cache; the server is gone.
        assert!(cache_path(cache.path(), "btc", &w).exists());
        let again = fetch_price_history(&btc, &w, &endpoint, Some(cache.path())).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn fetch_passes_through_http_status() {
        let (url, server) = serve(vec![(429, "{}".to_string())]);
        let err = fetch_price_history(&asset("btc"), &window("2018-01-01", "2018-01-02"), &url, None)
            .unwrap_err();
        server.join().unwrap();
        assert!(matches!(err, MarketDataError::HttpFailure { status: Some(429), .. }), "{err}");
    }

    #[test]
    fn fetch_empty_array_is_empty_series() {
        let (url, server) = serve(vec![(200, "[]".to_string())]);
        let err = fetch_price_history(&asset("btc"), &window("2018-01-01", "2018-01-02"), &url, None)
            .unwrap_err();
        server.join().unwrap();
        assert!(matches!(err, MarketDataError::EmptySeries { .. }));
    }

    #[test]
    fn dataset_from_full_coverage() {
        let a = series("a", &[("2018-01-01", 1.0), ("2018-01-02", 2.0), ("2018-01-03", 3.0)]);
        let b = series("b", &[("2017-12-31", 1.0), ("2018-01-01", 2.0), ("2018-01-03", 3.0)]);
        let ds = build_dataset(vec![a, b], window("2018-01-01", "2018-01-02")).unwrap();
        assert_eq!(ds.series().len(), 2);
        assert_eq!(ds.series()[0].len(), 2);
        assert_eq!(ds.series()[1].len(), 1);
    }

    #[test]
    fn dataset_rejects_late_starters_by_name() {
        let a = series("a", &[("2018-01-01", 1.0), ("2018-01-05", 2.0)]);
        let b = series("b", &[("2018-01-03", 1.0), ("2018-01-05", 2.0)]);
        let err = build_dataset(vec![a, b], window("2018-01-01", "2018-01-05")).unwrap_err();
        match err {
            MarketDataError::InsufficientCoverage { gaps } => {
                assert_eq!(gaps.len(), 1);
                assert_eq!(gaps[0].symbol, "b");
                assert_eq!(gaps[0].first, d("2018-01-03"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn dataset_needs_two_distinct_series() {
        let a = series("a", &[("2018-01-01", 1.0)]);
        assert!(matches!(
            build_dataset(vec![a.clone()], window("2018-01-01", "2018-01-01")),
            Err(MarketDataError::TooFewSeries { got: 1 })
        ));
        assert!(matches!(
            build_dataset(vec![a.clone(), a], window("2018-01-01", "2018-01-01")),
            Err(MarketDataError::DuplicateAsset(_))
        ));
    }

    #[test]
    fn missing_dates_reported() {
        let full = series("a", &[("2018-01-01", 1.0), ("2018-01-02", 1.0), ("2018-01-03", 1.0), ("2018-01-04", 1.0), ("2018-01-05", 1.0)]);
        let holey = series("b", &[("2018-01-01", 1.0), ("2018-01-05", 1.0)]);
        let one = series("c", &[("2018-01-01", 1.0), ("2018-01-02", 1.0), ("2018-01-04", 1.0), ("2018-01-05", 1.0)]);
        let ds = build_dataset(vec![full, holey, one], window("2018-01-01", "2018-01-05")).unwrap();
        let report = report_missing(&ds);
        assert!(report[0].dates.is_empty());
        assert_eq!(report[1].dates, vec![d("2018-01-02"), d("2018-01-03"), d("2018-01-04")]);
        assert_eq!(report[2].dates, vec![d("2018-01-03")]);
        assert_eq!(missing_report_csv(&report).lines().count(), 5);
    }
}
