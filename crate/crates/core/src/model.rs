//! Market parameters, option contracts and calibrated surfaces shared by
//! every pricing module.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One trading day as a year fraction.
pub const DAILY_DT: f64 = 1.0 / 252.0;

/// Natural-world parameters of a geometric Brownian motion market.
///
/// All rates are annualized; `dt` is the lattice step in years.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
    pub p0: f64,
    pub dt: f64,
}

impl MarketParams {
    /// Validated constructor with a daily step.
    pub fn new(mu: f64, sigma: f64, r: f64, p0: f64) -> Result<Self> {
        Self {
            mu,
            sigma,
            r,
            p0,
            dt: DAILY_DT,
        }
        .validated()
    }

    pub fn with_dt(self, dt: f64) -> Result<Self> {
        Self { dt, ..self }.validated()
    }

    pub fn with_mu(self, mu: f64) -> Result<Self> {
        Self { mu, ..self }.validated()
    }

    pub fn with_p0(self, p0: f64) -> Result<Self> {
        Self { p0, ..self }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        for (what, v) in [
            ("mu", self.mu),
            ("sigma", self.sigma),
            ("r", self.r),
            ("p0", self.p0),
            ("dt", self.dt),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("{what} = {v}")));
            }
        }
        if self.sigma <= 0.0 {
            return Err(Error::domain("sigma", self.sigma, "> 0"));
        }
        if self.dt <= 0.0 {
            return Err(Error::domain("dt", self.dt, "> 0"));
        }
        check_open_unit("p0", self.p0)?;
        Ok(self)
    }

    pub fn sqrt_dt(&self) -> f64 {
        self.dt.sqrt()
    }

    /// Market price of risk (mu - r) / sigma.
    pub fn theta(&self) -> f64 {
        market_price_of_risk(self)
    }

    /// Errors unless the market price of risk is strictly positive.
    pub fn require_positive_theta(&self) -> Result<f64> {
        let theta = self.theta();
        if theta > 0.0 {
            Ok(theta)
        } else {
            Err(Error::Precondition(format!(
                "market price of risk must be > 0 (mu > r), got {theta}"
            )))
        }
    }
}

pub fn market_price_of_risk(m: &MarketParams) -> f64 {
    (m.mu - m.r) / m.sigma
}

/// Three-valued sign with sign(0) = 0.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn check_open_unit(what: &'static str, p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        Ok(p)
    } else {
        Err(Error::domain(what, p, "(0, 1)"))
    }
}

/// Terminal payoff g(S_T).
#[derive(Clone)]
pub enum Payoff {
    Call,
    Put,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Payoff {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Payoff::Custom(Arc::new(f))
    }
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::Call => f.write_str("Call"),
            Payoff::Put => f.write_str("Put"),
            Payoff::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A European contract: strike, maturity in years and payoff.
#[derive(Debug, Clone)]
pub struct OptionSpec {
    pub strike: f64,
    pub maturity: f64,
    pub payoff: Payoff,
}

impl OptionSpec {
    pub fn new(strike: f64, maturity: f64, payoff: Payoff) -> Result<Self> {
        if !(strike > 0.0 && strike.is_finite()) {
            return Err(Error::domain("strike", strike, "> 0"));
        }
        if !(maturity > 0.0 && maturity.is_finite()) {
            return Err(Error::domain("maturity", maturity, "> 0"));
        }
        Ok(Self {
            strike,
            maturity,
            payoff,
        })
    }

    pub fn call(strike: f64, maturity: f64) -> Result<Self> {
        Self::new(strike, maturity, Payoff::Call)
    }

    pub fn put(strike: f64, maturity: f64) -> Result<Self> {
        Self::new(strike, maturity, Payoff::Put)
    }

    pub fn payoff(&self, terminal_price: f64) -> Result<f64> {
        payoff_eval(self, terminal_price)
    }
}

pub fn payoff_eval(spec: &OptionSpec, terminal_price: f64) -> Result<f64> {
    if !(terminal_price >= 0.0) {
        return Err(Error::domain("terminal price", terminal_price, ">= 0"));
    }
    match &spec.payoff {
        Payoff::Call => Ok((terminal_price - spec.strike).max(0.0)),
        Payoff::Put => Ok((spec.strike - terminal_price).max(0.0)),
        Payoff::Custom(g) => {
            let v = g(terminal_price);
            if !v.is_finite() {
                Err(Error::NonFinite(format!(
                    "custom payoff at S = {terminal_price} returned {v}"
                )))
            } else if v < 0.0 {
                Err(Error::domain("custom payoff", v, ">= 0"))
            } else {
                Ok(v)
            }
        }
    }
}

/// Outcome of calibrating a single quote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    /// The optimum sits on a search bound.
    Boundary,
    Failed,
}

impl RowStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Boundary => "boundary",
            RowStatus::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ok" => Some(RowStatus::Ok),
            "boundary" => Some(RowStatus::Boundary),
            "failed" => Some(RowStatus::Failed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub moneyness: f64,
    pub maturity_years: f64,
    /// `None` when calibration failed.
    pub value: Option<f64>,
    pub residual: Option<f64>,
    pub status: RowStatus,
}

impl SurfaceRow {
    pub fn failed(moneyness: f64, maturity_years: f64) -> Self {
        Self {
            moneyness,
            maturity_years,
            value: None,
            residual: None,
            status: RowStatus::Failed,
        }
    }
}

/// Calibrated values over (moneyness K/S, maturity), sorted by maturity then
/// moneyness. Each key appears once.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Surface {
    rows: Vec<SurfaceRow>,
}

impl Surface {
    pub fn new(mut rows: Vec<SurfaceRow>) -> Result<Self> {
        for row in &rows {
            if let Some(res) = row.residual {
                if !(res >= 0.0) {
                    return Err(Error::domain("objective residual", res, ">= 0"));
                }
            }
            if row.status == RowStatus::Failed && row.value.is_some() {
                return Err(Error::Data(
                    "failed surface row must not carry a value".into(),
                ));
            }
        }
        rows.sort_by(|a, b| {
            a.maturity_years
                .total_cmp(&b.maturity_years)
                .then(a.moneyness.total_cmp(&b.moneyness))
        });
        if let Some(w) = rows
            .windows(2)
            .find(|w| w[0].maturity_years == w[1].maturity_years && w[0].moneyness == w[1].moneyness)
        {
            return Err(Error::Data(format!(
                "duplicate surface key (moneyness {}, maturity {})",
                w[0].moneyness, w[0].maturity_years
            )));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[SurfaceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, moneyness: f64, maturity_years: f64) -> Option<&SurfaceRow> {
        self.rows
            .iter()
            .find(|r| r.moneyness == moneyness && r.maturity_years == maturity_years)
    }

    /// Applies `f` to every calibrated value, keeping keys and statuses.
    pub fn map_values(&self, mut f: impl FnMut(f64) -> Result<f64>) -> Result<Self> {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                Ok(match row.value {
                    Some(v) => SurfaceRow {
                        value: Some(f(v)?),
                        ..row.clone()
                    },
                    None => row.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(mu: f64, sigma: f64, r: f64) -> MarketParams {
        MarketParams::new(mu, sigma, r, 0.5).unwrap()
    }

    #[test]
    fn theta_examples() {
        assert_eq!(market_price_of_risk(&params(0.03, 0.2, 0.03)), 0.0);
        assert!((market_price_of_risk(&params(0.05, 0.2, 0.01)) - 0.2).abs() < 1e-15);
        let m = params(1.80e-4 * 252.0, 0.02 * 252f64.sqrt(), 0.0064);
        assert!((m.theta() - 0.122712).abs() < 1e-6);
    }

    #[test]
    fn theta_antisymmetric_in_mu_and_r() {
        let a = params(0.07, 0.3, 0.02).theta();
        let b = params(0.02, 0.3, 0.07).theta();
        assert!((a + b).abs() < 1e-15);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(MarketParams::new(0.05, 0.0, 0.01, 0.5).is_err());
        assert!(MarketParams::new(0.05, 0.2, 0.01, 1.0).is_err());
        assert!(MarketParams::new(f64::NAN, 0.2, 0.01, 0.5).is_err());
        assert!(params(0.05, 0.2, 0.01).with_dt(0.0).is_err());
    }

    #[test]
    fn payoff_examples() {
        let call = OptionSpec::call(100.0, 1.0).unwrap();
        let put = OptionSpec::put(100.0, 1.0).unwrap();
        assert_eq!(call.payoff(120.0).unwrap(), 20.0);
        assert_eq!(call.payoff(100.0).unwrap(), 0.0);
        assert_eq!(put.payoff(80.0).unwrap(), 20.0);
        assert!(call.payoff(-1.0).is_err());
    }

    #[test]
    fn custom_payoff_must_be_finite() {
        let spec = OptionSpec::new(1.0, 1.0, Payoff::custom(|s| 1.0 / (s - 2.0))).unwrap();
        assert!(spec.payoff(2.0).is_err());
        assert!(spec.payoff(1.0).is_err());
        assert!((spec.payoff(3.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn surface_sorts_and_rejects_duplicates() {
        let row = |m, t| SurfaceRow {
            moneyness: m,
            maturity_years: t,
            value: Some(0.1),
            residual: Some(0.0),
            status: RowStatus::Ok,
        };
        let s = Surface::new(vec![row(1.1, 0.5), row(0.9, 0.5), row(1.0, 0.25)]).unwrap();
        let keys: Vec<_> = s.rows().iter().map(|r| (r.maturity_years, r.moneyness)).collect();
        assert_eq!(keys, vec![(0.25, 1.0), (0.5, 0.9), (0.5, 1.1)]);
        assert!(Surface::new(vec![row(1.0, 0.5), row(1.0, 0.5)]).is_err());
        let mut bad = row(1.0, 0.5);
        bad.residual = Some(-1.0);
        assert!(Surface::new(vec![bad]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn call_put_parity_at_maturity(s in 0.0f64..1e4, k in 1e-3f64..1e4) {
            let call = OptionSpec::call(k, 1.0).unwrap().payoff(s).unwrap();
            let put = OptionSpec::put(k, 1.0).unwrap().payoff(s).unwrap();
            proptest::prop_assert!((call - put - (s - k)).abs() <= 1e-12 * s.max(k));
        }
    }
}
