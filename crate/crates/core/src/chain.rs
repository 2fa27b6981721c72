//! File formats: price histories, option chains, parameter curves and
//! exported surfaces.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::calibration::QuoteRow;
use crate::diffusion::{ParamCurves, PiecewiseLinear};
use crate::error::{Error, Result};
use crate::model::{MarketParams, RowStatus, Surface, SurfaceRow};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(io_err(path))?;
    Ok(s)
}

/// Reads a headed CSV, checking the header starts with `required` (and
/// allowing only `optional` columns after it). Yields `(line, record)`.
fn read_csv(path: &Path, required: &[&str], optional: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let text = read_to_string(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    let ok = names.len() >= required.len()
        && names.len() <= required.len() + optional.len()
        && names[..required.len()] == *required
        && names[required.len()..] == optional[..names.len() - required.len()];
    if !ok {
        return Err(parse_err(
            path,
            1,
            format!(
                "expected header `{}` (optional: `{}`), found `{}`",
                required.join(","),
                optional.join(","),
                names.join(",")
            ),
        ));
    }
    let width = names.len();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() != width {
            return Err(parse_err(path, line, format!("expected {width} fields, found {}", rec.len())));
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn field_f64(path: &Path, line: u64, rec: &csv::StringRecord, i: usize, name: &str) -> Result<f64> {
    let raw = &rec[i];
    let v: f64 = raw
        .parse()
        .map_err(|_| parse_err(path, line, format!("{name}: `{raw}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("{name}: `{raw}` is not finite")));
    }
    Ok(v)
}

/// Daily closing prices in increasing date order.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceHistory {
    rows: Vec<(NaiveDate, f64)>,
}

impl PriceHistory {
    pub fn new(rows: Vec<(NaiveDate, f64)>) -> Result<Self> {
        if let Some((d, c)) = rows.iter().find(|(_, c)| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::Data(format!("close on {d} must be positive, got {c}")));
        }
        if let Some(w) = rows.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::Data(format!(
                "dates must be strictly increasing: {} then {}",
                w[0].0, w[1].0
            )));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[(NaiveDate, f64)] {
        &self.rows
    }

    /// Reads a `date,close` CSV with ISO-8601 dates.
    pub fn load(path: &Path) -> Result<Self> {
        let mut rows = Vec::new();
        for (line, rec) in read_csv(path, &["date", "close"], &[])? {
            let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
                .map_err(|e| parse_err(path, line, format!("date `{}`: {e}", &rec[0])))?;
            let close = field_f64(path, line, &rec, 1, "close")?;
            if !(close > 0.0) {
                return Err(parse_err(path, line, format!("close must be positive, got {close}")));
            }
            if let Some(&(prev, _)) = rows.last() {
                if date <= prev {
                    return Err(parse_err(path, line, format!("date {date} does not follow {prev}")));
                }
            }
            rows.push((date, close));
        }
        Self::new(rows)
    }
}

/// Per-day estimates from daily log-returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedParams {
    /// Fraction of log-returns that are `>= 0`.
    pub p_hat: f64,
    /// Mean daily log-return.
    pub mu_hat: f64,
    /// Sample standard deviation of daily log-returns.
    pub sigma_hat: f64,
    /// Number of prices used.
    pub window: usize,
}

impl EstimatedParams {
    /// Annualizes with step `dt` (years per observation): `mu = mu_hat / dt`,
    /// `sigma = sigma_hat / sqrt(dt)`, `p0 = p_hat`; the tree step is `dt`.
    pub fn annualize(&self, dt: f64, r: f64) -> Result<MarketParams> {
        MarketParams {
            mu: self.mu_hat / dt,
            sigma: self.sigma_hat / dt.sqrt(),
            r,
            p0: self.p_hat,
            dt,
        }
        .validated()
    }
}

pub fn estimate_params(h: &PriceHistory) -> Result<EstimatedParams> {
    let rows = h.rows();
    if rows.len() < 2 {
        return Err(Error::Data(format!("need at least 2 prices, got {}", rows.len())));
    }
    let rets: Vec<f64> = rows.windows(2).map(|w| (w[1].1 / w[0].1).ln()).collect();
    let n = rets.len() as f64;
    let p_hat = rets.iter().filter(|&&x| x >= 0.0).count() as f64 / n;
    let mu_hat = rets.iter().sum::<f64>() / n;
    let sigma_hat = if rets.len() > 1 {
        (rets.iter().map(|x| (x - mu_hat).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(EstimatedParams {
        p_hat,
        mu_hat,
        sigma_hat,
        window: rows.len(),
    })
}

/// A chain row that was not turned into a quote.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub quotes: Vec<QuoteRow>,
    pub rejected: Vec<Rejection>,
    /// Data lines read (accepted plus rejected).
    pub lines: usize,
}

/// Reads an `expiry_years,strike,bid,ask[,last]` CSV. Rows with crossed or
/// non-positive prices are rejected and reported; malformed rows are errors.
/// Quote prices are bid-ask mids.
pub fn load_chain(path: &Path, spot: f64) -> Result<Chain> {
    if !(spot > 0.0 && spot.is_finite()) {
        return Err(Error::Data(format!("spot must be positive, got {spot}")));
    }
    let records = read_csv(path, &["expiry_years", "strike", "bid", "ask"], &["last"])?;
    let lines = records.len();
    let mut quotes = Vec::new();
    let mut rejected = Vec::new();
    for (line, rec) in records {
        let expiry = field_f64(path, line, &rec, 0, "expiry_years")?;
        let strike = field_f64(path, line, &rec, 1, "strike")?;
        let bid = field_f64(path, line, &rec, 2, "bid")?;
        let ask = field_f64(path, line, &rec, 3, "ask")?;
        let reason = if !(expiry > 0.0) {
            Some(format!("non-positive expiry {expiry}"))
        } else if !(strike > 0.0) {
            Some(format!("non-positive strike {strike}"))
        } else if !(bid > 0.0 && ask > 0.0) {
            Some(format!("non-positive price (bid {bid}, ask {ask})"))
        } else if bid > ask {
            Some(format!("bid {bid} above ask {ask}"))
        } else {
            None
        };
        match reason {
            Some(reason) => rejected.push(Rejection { line, reason }),
            None => quotes.push(QuoteRow::new(quotes.len(), strike, expiry, 0.5 * (bid + ask), spot)?),
        }
    }
    if quotes.is_empty() {
        return Err(Error::Data(format!(
            "{}: no usable quotes ({} rejected)",
            path.display(),
            rejected.len()
        )));
    }
    Ok(Chain {
        quotes,
        rejected,
        lines,
    })
}

/// Reads annualized market parameters from JSON
/// (`{"mu":..,"sigma":..,"r":..,"p0":..,"dt":..}`).
pub fn load_params(path: &Path) -> Result<MarketParams> {
    let text = read_to_string(path)?;
    let m: MarketParams = serde_json::from_str(&text).map_err(|e| parse_err(path, e.line() as u64, e.to_string()))?;
    m.validated().map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Reads `t,mu,sigma,r,p,psi` knots into piecewise-linear curves on
/// `[0, horizon]`.
pub fn load_curves(path: &Path, horizon: f64) -> Result<ParamCurves> {
    let cols = ["t", "mu", "sigma", "r", "p", "psi"];
    let records = read_csv(path, &cols, &[])?;
    let mut knots: Vec<Vec<(f64, f64)>> = vec![Vec::new(); 5];
    for (line, rec) in records {
        let t = field_f64(path, line, &rec, 0, "t")?;
        for (j, knot) in knots.iter_mut().enumerate() {
            knot.push((t, field_f64(path, line, &rec, j + 1, cols[j + 1])?));
        }
    }
    let mut curves = knots.into_iter().map(|k| {
        PiecewiseLinear::new(k)
            .map(PiecewiseLinear::into_curve)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    });
    let mut next = || curves.next().expect("five curves");
    let c = ParamCurves::new(next()?, next()?, next()?, next()?, next()?, horizon)?;
    c.validate(1000).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(c)
}

/// Output format for surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceFormat {
    Csv,
    Json,
}

impl SurfaceFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Self::Csv),
            "json" => Some(Self::Json),
            _ => None,
        }
    }

    /// Guesses the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::Json,
            _ => Self::Csv,
        }
    }
}

/// Rounds to 10 significant digits.
pub fn round_sig10(x: f64) -> f64 {
    format!("{x:.9e}").parse().unwrap_or(x)
}

fn fmt_num(x: f64) -> String {
    let y = round_sig10(x);
    if y == 0.0 || (1e-5..1e15).contains(&y.abs()) {
        format!("{y}")
    } else {
        format!("{y:e}")
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    moneyness: f64,
    maturity_years: f64,
    value: Option<f64>,
    residual: Option<f64>,
    status: RowStatus,
}

/// Writes `s` to `out` as CSV or JSON, rows sorted by maturity then
/// moneyness, numbers rounded to 10 significant digits.
pub fn write_surface(s: &Surface, out: &mut impl Write, format: SurfaceFormat) -> std::io::Result<()> {
    match format {
        SurfaceFormat::Csv => {
            writeln!(out, "moneyness,maturity_years,value,residual,status")?;
            for r in s.rows() {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    fmt_num(r.moneyness),
                    fmt_num(r.maturity_years),
                    r.value.map(fmt_num).unwrap_or_default(),
                    r.residual.map(fmt_num).unwrap_or_default(),
                    r.status.as_str()
                )?;
            }
        }
        SurfaceFormat::Json => {
            let rows: Vec<JsonRow> = s
                .rows()
                .iter()
                .map(|r| JsonRow {
                    moneyness: round_sig10(r.moneyness),
                    maturity_years: round_sig10(r.maturity_years),
                    value: r.value.map(round_sig10),
                    residual: r.residual.map(round_sig10),
                    status: r.status,
                })
                .collect();
            serde_json::to_writer_pretty(&mut *out, &rows)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn export_surface(s: &Surface, path: &Path, format: SurfaceFormat) -> Result<()> {
    if s.is_empty() {
        return Err(Error::Data("refusing to export an empty surface".into()));
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_surface(s, &mut w, format)
        .and_then(|_| w.flush())
        .map_err(io_err(path))
}

/// Reads a surface written by [`export_surface`].
pub fn read_surface(path: &Path, format: SurfaceFormat) -> Result<Surface> {
    let rows = match format {
        SurfaceFormat::Json => {
            let text = read_to_string(path)?;
            let rows: Vec<JsonRow> =
                serde_json::from_str(&text).map_err(|e| parse_err(path, e.line() as u64, e.to_string()))?;
            rows.into_iter()
                .map(|r| SurfaceRow {
                    moneyness: r.moneyness,
                    maturity_years: r.maturity_years,
                    value: r.value,
                    residual: r.residual,
                    status: r.status,
                })
                .collect()
        }
        SurfaceFormat::Csv => {
            let cols = ["moneyness", "maturity_years", "value", "residual", "status"];
            let mut rows = Vec::new();
            for (line, rec) in read_csv(path, &cols, &[])? {
                let opt = |i: usize, name: &str| -> Result<Option<f64>> {
                    if rec[i].is_empty() {
                        Ok(None)
                    } else {
                        field_f64(path, line, &rec, i, name).map(Some)
                    }
                };
                let status = RowStatus::parse(&rec[4])
                    .ok_or_else(|| parse_err(path, line, format!("unknown status `{}`", &rec[4])))?;
                rows.push(SurfaceRow {
                    moneyness: field_f64(path, line, &rec, 0, "moneyness")?,
                    maturity_years: field_f64(path, line, &rec, 1, "maturity_years")?,
                    value: opt(2, "value")?,
                    residual: opt(3, "residual")?,
                    status,
                });
            }
            rows
        }
    };
    Surface::new(rows).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}
