//! Implied parameter surfaces: for each quoted call, the value of one free
//! model parameter minimizing the squared relative pricing error.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{bsm_call, BsmInputs, DyConvention};
use crate::error::{Error, Result};
use crate::informed::{dividend_yield, guess_probability};
use crate::lattice::{price_on_tree, KsrfForm, TreeModel};
use crate::mean_info::{dev_from_delta, mean_info_price, DevForm, MeanInfoSpec};
use crate::model::{MarketParams, OptionSpec, RowStatus, Surface, SurfaceRow};

/// A quoted European call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuoteRow {
    pub id: usize,
    pub strike: f64,
    /// Years to expiry.
    pub expiry: f64,
    /// Mid of bid and ask.
    pub market_price: f64,
    pub spot: f64,
}

impl QuoteRow {
    pub fn new(id: usize, strike: f64, expiry: f64, market_price: f64, spot: f64) -> Result<Self> {
        for (what, v) in [
            ("strike", strike),
            ("expiry", expiry),
            ("market price", market_price),
            ("spot", spot),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(what, v, "> 0"));
            }
        }
        Ok(Self {
            id,
            strike,
            expiry,
            market_price,
            spot,
        })
    }

    /// `K / S`.
    pub fn moneyness(&self) -> f64 {
        self.strike / self.spot
    }
}

/// The free parameter of a calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// Drift of the KSRF tree at fixed `p0`.
    Mu,
    /// Upturn probability of the KSRF tree at fixed `mu`.
    P,
    /// Information intensity in the dividend-yield Black-Scholes formula.
    Lambda,
    /// Probability shift `delta` of the mean-information tree at fixed `rho`.
    Dev,
}

impl Target {
    pub fn name(&self) -> &'static str {
        match self {
            Target::Mu => "mu",
            Target::P => "p",
            Target::Lambda => "lambda",
            Target::Dev => "delta",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mu" => Some(Target::Mu),
            "p" => Some(Target::P),
            "lambda" => Some(Target::Lambda),
            "dev" => Some(Target::Dev),
            _ => None,
        }
    }

    pub fn default_bounds(&self) -> (f64, f64) {
        match self {
            Target::Mu => (-0.5, 0.5),
            Target::P => (0.01, 0.99),
            Target::Lambda => (-0.5, 0.5),
            Target::Dev => (0.5, 1.0),
        }
    }
}

pub const DEFAULT_RHO_BOUNDS: (f64, f64) = (0.0, 5.0);

/// Grid `0.50, 0.51, ..., 1.00`.
pub fn default_delta_grid() -> Vec<f64> {
    (50..=100).map(|i| i as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationProblem {
    pub quotes: Vec<QuoteRow>,
    /// Annualized estimates; `fixed.dt` is the nominal tree step.
    pub fixed: MarketParams,
    pub target: Target,
    pub bounds: (f64, f64),
    /// Search tolerance relative to the bound width.
    pub tol: f64,
    pub ksrf_form: KsrfForm,
    pub dy_convention: DyConvention,
    /// Betting skill used when pricing with [`Target::Dev`].
    pub rho: f64,
    /// Number of grid points in the bracketing scan.
    pub scan_points: usize,
}

impl CalibrationProblem {
    pub fn new(quotes: Vec<QuoteRow>, fixed: MarketParams, target: Target) -> Self {
        Self {
            quotes,
            fixed,
            target,
            bounds: target.default_bounds(),
            tol: 1e-12,
            ksrf_form: KsrfForm::FirstOrder,
            dy_convention: DyConvention::AsPrinted,
            rho: 0.0,
            scan_points: 41,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fixed.validated()?;
        let (lo, hi) = self.bounds;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Precondition(format!("invalid bounds [{lo}, {hi}]")));
        }
        if !(self.tol > 0.0) {
            return Err(Error::domain("tol", self.tol, "> 0"));
        }
        if self.scan_points < 3 {
            return Err(Error::Precondition("scan needs at least 3 points".into()));
        }
        if self.target == Target::Lambda {
            self.fixed.require_positive_theta()?;
        }
        Ok(())
    }

    /// Number of tree steps for `expiry`: daily-ish steps that land exactly
    /// on the expiry.
    pub fn tree_steps(&self, expiry: f64) -> usize {
        ((expiry / self.fixed.dt).round() as usize).max(1)
    }

    /// Model call price for `quote` with the free parameter set to `x`.
    pub fn model_price(&self, quote: &QuoteRow, x: f64) -> Result<f64> {
        let wrap = |e: Error| Error::Pricing {
            parameter: self.target.name(),
            value: x,
            source: Box::new(e),
        };
        self.model_price_inner(quote, x).map_err(wrap)
    }

    fn model_price_inner(&self, quote: &QuoteRow, x: f64) -> Result<f64> {
        let call = OptionSpec::call(quote.strike, quote.expiry)?;
        let n = self.tree_steps(quote.expiry);
        let m = self.fixed.with_dt(quote.expiry / n as f64)?;
        match self.target {
            Target::Mu => price_on_tree(
                TreeModel::Ksrf {
                    p: m.p0,
                    form: self.ksrf_form,
                },
                quote.spot,
                &m.with_mu(x)?,
                &call,
                n,
            ),
            Target::P => price_on_tree(
                TreeModel::Ksrf {
                    p: x,
                    form: self.ksrf_form,
                },
                quote.spot,
                &m,
                &call,
                n,
            ),
            Target::Lambda => {
                let d_y = dividend_yield(m.sigma, m.theta(), x);
                let inp = BsmInputs::new(quote.spot, quote.strike, quote.expiry, m.r, m.sigma, d_y)?;
                bsm_call(&inp, self.dy_convention)
            }
            Target::Dev => mean_info_price(quote.spot, &m, &MeanInfoSpec::new(x, self.rho)?, &call, n),
        }
    }

    /// Starting estimate of the free parameter, clamped into `bounds`: the
    /// fixed estimate for `mu` and `p`, the bound midpoint otherwise. Lattice
    /// prices oscillate in `mu`, `p` and `delta`, so a quote can match at
    /// several values; the root nearest this estimate is reported.
    pub fn prior(&self) -> f64 {
        let (lo, hi) = self.bounds;
        let x = match self.target {
            Target::Mu => self.fixed.mu,
            Target::P => self.fixed.p0,
            Target::Lambda | Target::Dev => 0.5 * (lo + hi),
        };
        x.clamp(lo, hi)
    }

    /// Signed relative pricing error at `x`.
    pub fn relative_error(&self, quote: &QuoteRow, x: f64) -> Result<f64> {
        Ok((self.model_price(quote, x)? - quote.market_price) / quote.market_price)
    }
}

/// Result of a single-quote calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Implied {
    pub value: f64,
    /// Squared relative pricing error at `value`.
    pub residual: f64,
    pub status: RowStatus,
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimization of a unimodal `f` on `[a, b]`.
fn golden_section(mut f: impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64, xtol: f64) -> Result<f64> {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a).abs() > xtol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Bisection on a sign change of `f` between `a` and `b`.
fn bisect(mut f: impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64, mut fa: f64, xtol: f64) -> Result<f64> {
    while (b - a).abs() > xtol {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Scan, then refine: bisection on the signed error when the scan finds a
/// sign change (the one nearest `prior` if there are several), golden-section
/// on the squared error otherwise.
fn minimize_scalar(
    mut err: impl FnMut(f64) -> Result<f64>,
    (lo, hi): (f64, f64),
    points: usize,
    tol: f64,
    prior: f64,
) -> Result<Implied> {
    let xtol = tol * (hi - lo);
    let xs: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    let es = xs.iter().map(|&x| err(x)).collect::<Result<Vec<_>>>()?;
    let at_bound = |x: f64| (x - lo).abs() <= xtol.max(1e-9 * (hi - lo)) || (hi - x).abs() <= xtol.max(1e-9 * (hi - lo));

    // Exact zeros and sign changes, ranked by distance to the prior.
    let mut best: Option<(f64, usize, bool)> = None;
    for i in 0..points {
        let cand = if es[i] == 0.0 {
            Some(((xs[i] - prior).abs(), true))
        } else if i + 1 < points && (es[i] < 0.0) != (es[i + 1] < 0.0) && es[i + 1] != 0.0 {
            let d = if prior < xs[i] {
                xs[i] - prior
            } else if prior > xs[i + 1] {
                prior - xs[i + 1]
            } else {
                0.0
            };
            Some((d, false))
        } else {
            None
        };
        if let Some((d, exact)) = cand {
            if best.is_none_or(|(s, _, _)| d < s) {
                best = Some((d, i, exact));
            }
        }
    }

    let x = match best {
        Some((_, i, true)) => xs[i],
        Some((_, i, false)) => bisect(&mut err, xs[i], xs[i + 1], es[i], xtol)?,
        None => {
            let i = (0..points)
                .min_by(|&a, &b| es[a].abs().total_cmp(&es[b].abs()))
                .unwrap_or(0);
            let a = xs[i.saturating_sub(1)];
            let b = xs[(i + 1).min(points - 1)];
            let x = golden_section(|x| Ok(err(x)?.powi(2)), a, b, xtol)?;
            // keep the scan point if refinement did not improve on it
            if err(x)?.abs() <= es[i].abs() {
                x
            } else {
                xs[i]
            }
        }
    };
    let e = err(x)?;
    Ok(Implied {
        value: x,
        residual: e * e,
        status: if at_bound(x) { RowStatus::Boundary } else { RowStatus::Ok },
    })
}

/// Implied value of the free parameter for one quote.
pub fn implied_scalar(prob: &CalibrationProblem, quote: &QuoteRow) -> Result<Implied> {
    prob.validate()?;
    minimize_scalar(
        |x| prob.relative_error(quote, x),
        prob.bounds,
        prob.scan_points,
        prob.tol,
        prob.prior(),
    )
}

/// Per-quote implied values keyed by `(K/S, T)`, computed in parallel.
/// Quotes that fail are marked failed; if every quote fails the first
/// error is returned.
pub fn implied_surface(prob: &CalibrationProblem) -> Result<Surface> {
    prob.validate()?;
    if prob.quotes.is_empty() {
        return Err(Error::Calibration("no quotes to calibrate".into()));
    }
    let results: Vec<Result<Implied>> = prob.quotes.par_iter().map(|q| implied_scalar(prob, q)).collect();
    let mut first_err = None;
    let rows = prob
        .quotes
        .iter()
        .zip(results)
        .map(|(q, r)| match r {
            Ok(imp) => SurfaceRow {
                moneyness: q.moneyness(),
                maturity_years: q.expiry,
                value: Some(imp.value),
                residual: Some(imp.residual),
                status: imp.status,
            },
            Err(e) => {
                first_err.get_or_insert(e);
                SurfaceRow::failed(q.moneyness(), q.expiry)
            }
        })
        .collect::<Vec<_>>();
    if rows.iter().all(|r| r.status == RowStatus::Failed) {
        let e = first_err.expect("at least one quote");
        return Err(Error::Calibration(format!("every quote failed; first error: {e}")));
    }
    Surface::new(rows)
}

/// Per-step guess probability implied by `lambda`:
/// `(1 + lambda / sqrt(p0 (1 - p0)) sqrt(dt)) / 2`.
pub fn implied_p_from_lambda(lambda: f64, p0: f64, dt: f64) -> Result<f64> {
    guess_probability(lambda, p0, dt)
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoDevFit {
    pub rho: f64,
    /// Summed squared relative error at `rho` over quotes and grid deltas.
    pub objective: f64,
    pub rho_status: RowStatus,
    /// Implied `delta` per quote at `rho`.
    pub delta: Surface,
    /// `delta` mapped to the mean-return deviation.
    pub dev: Surface,
}

/// Two-stage fit: choose `rho` minimizing the squared relative errors
/// summed over all quotes and every `delta` in `delta_grid`, then imply
/// `delta` per quote with that `rho`.
pub fn fit_rho_then_dev(
    prob: &CalibrationProblem,
    delta_grid: &[f64],
    rho_bounds: (f64, f64),
    dev_form: DevForm,
) -> Result<RhoDevFit> {
    if delta_grid.is_empty() {
        return Err(Error::Precondition("delta grid is empty".into()));
    }
    if prob.quotes.is_empty() {
        return Err(Error::Calibration("no quotes to calibrate".into()));
    }
    let mut stage = prob.clone();
    stage.target = Target::Dev;
    stage.validate()?;
    let sdt = prob.fixed.sqrt_dt();
    if let Some(&d) = delta_grid
        .iter()
        .find(|&&d| !(prob.fixed.p0 + d * sdt > 0.0 && prob.fixed.p0 + d * sdt < 1.0))
    {
        return Err(Error::domain("grid delta", d, "p0 + delta sqrt(dt) in (0, 1)"));
    }

    let pairs: Vec<(&QuoteRow, f64)> = prob
        .quotes
        .iter()
        .flat_map(|q| delta_grid.iter().map(move |&d| (q, d)))
        .collect();
    // a rho whose tree breaks down (negative factors, q outside (0, 1)) for
    // any pair is infeasible and scores +inf rather than aborting the search
    let objective = |rho: f64| -> f64 {
        let mut s = stage.clone();
        s.rho = rho;
        pairs
            .par_iter()
            .map(|(q, d)| s.relative_error(q, *d).map(|e| e * e))
            .collect::<Result<Vec<_>>>()
            .map_or(f64::INFINITY, |terms| pairwise_sum(&terms))
    };
    // objective >= 0, so minimizing sqrt(objective) is equivalent and lets
    // the scalar search reuse the signed-error machinery without sign changes
    let fit = minimize_scalar(
        |rho| Ok(objective(rho).sqrt()),
        rho_bounds,
        prob.scan_points,
        prob.tol,
        rho_bounds.0,
    )?;
    if !fit.residual.is_finite() {
        return Err(Error::Calibration(format!(
            "rho stage: no feasible rho in [{}, {}]",
            rho_bounds.0, rho_bounds.1
        )));
    }

    stage.rho = fit.value;
    let lo = delta_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = delta_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    stage.bounds = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let delta = implied_surface(&stage)?;
    let m = prob.fixed;
    let dev = delta.map_values(|d| Ok(dev_from_delta(&m, d, dev_form)))?;
    Ok(RhoDevFit {
        rho: fit.value,
        objective: fit.residual,
        rho_status: fit.status,
        delta,
        dev,
    })
}
