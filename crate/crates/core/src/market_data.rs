//! Price series ingestion and construction of scaled future paths.
//!
//! Input CSVs have a `date,TICKER1,...,TICKERd` header and one row per trading
//! day. Dates are opaque strings that sort chronologically. Any date with a
//! missing price for a requested ticker is dropped (inner join).

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{s, Array1, Array2, Array3, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TARGET_SPOT: f64 = 100.0;

/// Aligned multi-asset price history, one row per trading day.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    dates: Vec<String>,
    prices: Array2<f64>,
    tickers: Vec<String>,
}

impl PriceSeries {
    pub fn new(dates: Vec<String>, prices: Array2<f64>, tickers: Vec<String>) -> Result<Self> {
        if dates.len() != prices.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} dates for {} price rows",
                dates.len(),
                prices.nrows()
            )));
        }
        if tickers.len() != prices.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "{} tickers for {} price columns",
                tickers.len(),
                prices.ncols()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Parse(format!(
                "dates not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        for ((row, col), &value) in prices.indexed_iter() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonpositivePrice {
                    ticker: tickers[col].clone(),
                    date: dates[row].clone(),
                    value,
                });
            }
        }
        Ok(Self {
            dates,
            prices,
            tickers,
        })
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn prices(&self) -> &Array2<f64> {
        &self.prices
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn len(&self) -> usize {
        self.prices.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.nrows() == 0
    }

    pub fn n_assets(&self) -> usize {
        self.prices.ncols()
    }

    pub fn last_prices(&self) -> ArrayView1<'_, f64> {
        self.prices.row(self.len() - 1)
    }

    /// Rows `start..end` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> PriceSeries {
        PriceSeries {
            dates: self.dates[start..end].to_vec(),
            prices: self.prices.slice(s![start..end, ..]).to_owned(),
            tickers: self.tickers.clone(),
        }
    }

    /// Append the rows of `other` after `self`. Both must quote the same
    /// tickers on the same price scale, and `other` must start after `self` ends.
    pub fn concat(&self, other: &PriceSeries) -> Result<PriceSeries> {
        if self.tickers != other.tickers {
            return Err(Error::ShapeMismatch("ticker lists differ".into()));
        }
        let mut dates = self.dates.clone();
        dates.extend(other.dates.iter().cloned());
        let mut prices = self.prices.clone();
        prices
            .append(Axis(0), other.prices.view())
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        PriceSeries::new(dates, prices, self.tickers.clone())
    }
}

/// Result of [`load_series`]: the aligned series plus how many dates were dropped.
#[derive(Debug, Clone)]
pub struct LoadedSeries {
    pub series: PriceSeries,
    pub dropped_rows: usize,
}

fn parse_cell(raw: &str) -> Result<Option<f64>> {
    let cell = raw.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|e| Error::Parse(format!("bad price '{cell}': {e}")))
}

/// Load a price CSV, keeping `tickers` (all columns when empty).
pub fn load_series(path: impl AsRef<Path>, tickers: &[String]) -> Result<LoadedSeries> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::DataNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .clone();
    if header.len() < 2 {
        return Err(Error::Parse("header needs a date column and at least one ticker".into()));
    }
    let available: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let selected: Vec<String> = if tickers.is_empty() {
        available.clone()
    } else {
        tickers.to_vec()
    };
    let columns = selected
        .iter()
        .map(|t| {
            available
                .iter()
                .position(|a| a == t)
                .map(|p| p + 1)
                .ok_or_else(|| Error::Parse(format!("ticker {t} not in header")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let date = record
            .get(0)
            .ok_or_else(|| Error::Parse("missing date cell".into()))?
            .to_owned();
        let mut values = Vec::with_capacity(columns.len());
        let mut complete = true;
        for (&col, ticker) in columns.iter().zip(&selected) {
            match parse_cell(record.get(col).unwrap_or(""))? {
                Some(v) if v > 0.0 && v.is_finite() => values.push(v),
                Some(v) => {
                    return Err(Error::NonpositivePrice {
                        ticker: ticker.clone(),
                        date,
                        value: v,
                    })
                }
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if !complete {
            dropped += 1;
            continue;
        }
        if rows.insert(date.clone(), values).is_some() {
            return Err(Error::Parse(format!("duplicate date {date}")));
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let d = selected.len();
    let mut prices = Array2::zeros((rows.len(), d));
    let mut dates = Vec::with_capacity(rows.len());
    for (r, (date, values)) in rows.into_iter().enumerate() {
        prices.row_mut(r).assign(&Array1::from(values));
        dates.push(date);
    }
    Ok(LoadedSeries {
        series: PriceSeries::new(dates, prices, selected)?,
        dropped_rows: dropped,
    })
}

/// Write a series in the same CSV layout `load_series` reads.
pub fn write_series(series: &PriceSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    let mut header = vec!["date".to_owned()];
    header.extend(series.tickers.iter().cloned());
    writer
        .write_record(&header)
        .map_err(|e| Error::Parse(e.to_string()))?;
    for (date, row) in series.dates.iter().zip(series.prices.rows()) {
        let mut record = vec![date.clone()];
        record.extend(row.iter().map(|v| v.to_string()));
        writer
            .write_record(&record)
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Scale each asset column so that its last price equals `target_spot`.
pub fn normalize_spot(series: &PriceSeries, target_spot: f64) -> PriceSeries {
    let mut prices = series.prices.clone();
    let last = series.last_prices().to_owned();
    for (mut col, &l) in prices.columns_mut().into_iter().zip(last.iter()) {
        let factor = target_spot / l;
        col.mapv_inplace(|p| p * factor);
        // exact anchor; the product above can be off by an ulp
        let n = col.len();
        col[n - 1] = target_spot;
    }
    PriceSeries {
        dates: series.dates.clone(),
        prices,
        tickers: series.tickers.clone(),
    }
}

/// Price-space bounds `[lower_j, upper_j]` per asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub delta: f64,
}

impl AssetBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, delta: f64) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::ShapeMismatch("bound vectors differ in length".into()));
        }
        if let Some(j) = (0..lower.len()).find(|&j| !(lower[j] < upper[j])) {
            return Err(Error::Config(format!(
                "lower bound {} not below upper bound {} for asset {j}",
                lower[j], upper[j]
            )));
        }
        Ok(Self {
            lower,
            upper,
            delta,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, asset: usize) -> f64 {
        self.upper[asset] - self.lower[asset]
    }

    pub fn contains(&self, point: ArrayView1<'_, f64>) -> bool {
        point
            .iter()
            .enumerate()
            .all(|(j, &x)| self.lower[j] <= x && x <= self.upper[j])
    }

    /// Rescale every interval about its midpoint by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::Config(format!("width factor {factor} must be positive")));
        }
        let mut lower = Vec::with_capacity(self.dim());
        let mut upper = Vec::with_capacity(self.dim());
        let mut extra = f64::INFINITY;
        for j in 0..self.dim() {
            let mid = 0.5 * (self.lower[j] + self.upper[j]);
            let half = 0.5 * factor * self.width(j);
            lower.push(mid - half);
            upper.push(mid + half);
            extra = extra.min(0.5 * (factor - 1.0) * self.width(j));
        }
        AssetBounds::new(lower, upper, self.delta + extra)
    }
}

/// The `N - n` historical `n`-step paths rescaled to start at `spot`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMatrix {
    /// Shape `(N - n, n, d)`.
    pub paths: Array3<f64>,
    pub spot: Array1<f64>,
}

impl PathMatrix {
    pub fn new(paths: Array3<f64>, spot: Array1<f64>) -> Result<Self> {
        if paths.shape()[2] != spot.len() {
            return Err(Error::ShapeMismatch(format!(
                "paths have {} assets, spot has {}",
                paths.shape()[2],
                spot.len()
            )));
        }
        if paths.shape()[0] == 0 || paths.shape()[1] == 0 {
            return Err(Error::InsufficientData("empty path matrix".into()));
        }
        Ok(Self { paths, spot })
    }

    pub fn n_paths(&self) -> usize {
        self.paths.shape()[0]
    }

    pub fn horizon(&self) -> usize {
        self.paths.shape()[1]
    }

    pub fn n_assets(&self) -> usize {
        self.paths.shape()[2]
    }
}

/// Path `l`, step `i`, asset `j` is `spot[j] * Y[l + i][j] / Y[l][j]` for `i = 1..=n`.
pub fn build_paths(series: &PriceSeries, spot: ArrayView1<'_, f64>, n: usize) -> Result<PathMatrix> {
    let big_n = series.len();
    let d = series.n_assets();
    if n == 0 {
        return Err(Error::Config("horizon n must be at least 1".into()));
    }
    if big_n <= n {
        return Err(Error::InsufficientData(format!(
            "{big_n} observations for horizon {n}; need more than {n}"
        )));
    }
    if spot.len() != d {
        return Err(Error::ShapeMismatch(format!("spot has {} entries for {d} assets", spot.len())));
    }
    if spot.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Config("spot must be componentwise positive".into()));
    }
    let y = &series.prices;
    let m = big_n - n;
    let mut paths = Array3::zeros((m, n, d));
    for l in 0..m {
        for i in 1..=n {
            for j in 0..d {
                paths[[l, i - 1, j]] = spot[j] * y[[l + i, j]] / y[[l, j]];
            }
        }
    }
    PathMatrix::new(paths, spot.to_owned())
}

/// Componentwise min/max over all path values and the spot, widened by `delta`.
pub fn compute_bounds(paths: &PathMatrix, delta: f64) -> Result<AssetBounds> {
    if !(delta >= 0.0) {
        return Err(Error::Config(format!("delta {delta} must be nonnegative")));
    }
    let d = paths.n_assets();
    let mut lower = paths.spot.to_vec();
    let mut upper = paths.spot.to_vec();
    for ((_, _, j), &v) in paths.paths.indexed_iter() {
        lower[j] = lower[j].min(v);
        upper[j] = upper[j].max(v);
    }
    for j in 0..d {
        lower[j] -= delta;
        upper[j] += delta;
    }
    if delta == 0.0 {
        // a constant asset would give an empty interval
        for j in 0..d {
            if lower[j] == upper[j] {
                return Err(Error::Config(format!(
                    "asset {j} is constant; bounds need delta > 0"
                )));
            }
        }
    }
    AssetBounds::new(lower, upper, delta)
}
