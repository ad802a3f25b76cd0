//! Price ingestion and return preprocessing.

use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Daily closing prices of one instrument.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub symbol: String,
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<f64>,
}

impl PriceSeries {
    /// Checks strictly increasing dates and at least two rows. Positivity of
    /// closes is checked by [`compound_returns`], which knows the row.
    pub fn new(symbol: impl Into<String>, dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self> {
        if dates.len() != closes.len() {
            return Err(Error::DimensionMismatch {
                field: "closes",
                expected: dates.len(),
                found: closes.len(),
            });
        }
        if closes.len() < 2 {
            return Err(Error::DegenerateData(format!(
                "a price series needs at least 2 rows, got {}",
                closes.len()
            )));
        }
        if let Some(i) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::DegenerateData(format!(
                "dates must be strictly increasing: {} then {} at row {}",
                dates[i],
                dates[i + 1],
                i + 2
            )));
        }
        Ok(PriceSeries {
            symbol: symbol.into(),
            dates,
            closes,
        })
    }

    /// Reads a `date,close` CSV. The symbol defaults to the file stem.
    pub fn load(path: &Path, symbol: Option<&str>) -> Result<Self> {
        let display = path.display().to_string();
        let parse_err = |line: usize, message: String| Error::Parse {
            path: display.clone(),
            line,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                other => parse_err(1, format!("{other:?}")),
            })?;
        let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["date", "close"] {
            return Err(parse_err(1, format!("expected header `date,close`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }

        let mut dates = Vec::new();
        let mut closes = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
                .map_err(|e| parse_err(line, format!("bad date `{}`: {e}", &record[0])))?;
            let close: f64 = record[1]
                .parse()
                .map_err(|e| parse_err(line, format!("bad close `{}`: {e}", &record[1])))?;
            if !close.is_finite() {
                return Err(parse_err(line, format!("non-finite close `{}`", &record[1])));
            }
            dates.push(date);
            closes.push(close);
        }
        let symbol = symbol.map(str::to_owned).unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
        PriceSeries::new(symbol, dates, closes)
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }

    /// Writes the series as a `date,close` CSV.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::from("date,close\n");
        for (d, c) in self.dates.iter().zip(&self.closes) {
            out.push_str(&format!("{},{}\n", d.format("%Y-%m-%d"), c));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// `R_t = log(P_t / P_{t-1})`. Rows are numbered from 1 after the header.
pub fn compound_returns(prices: &PriceSeries) -> Result<Vec<f64>> {
    if let Some(i) = prices.closes.iter().position(|c| !(*c > 0.0)) {
        return Err(Error::InvalidPrice {
            row: i + 1,
            value: prices.closes[i],
        });
    }
    Ok(prices.closes.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}
