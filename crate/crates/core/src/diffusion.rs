//! Time-varying parameters: deterministic curves for drift, volatility,
//! rate, upturn probability and information intensity, the trees built
//! from them, and a seeded Monte Carlo pricer for the risk-neutral
//! dynamics `dX = (r_t - D_t) X dt + sigma_t X dB`.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::closed_form::DyConvention;
use crate::error::{Error, Result};
use crate::informed::Moments;
use crate::lattice::{
    backward_induction_with_discounts, build_lattice, first_order_q, max_theta_sqrt_dt, Lattice, LatticeKind,
    StepParams,
};
use crate::model::{sign, OptionSpec};

pub type Curve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Piecewise-linear interpolation through `(t, value)` knots, flat outside.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Data("curve needs at least one knot".into()));
        }
        if knots.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::Data("curve knots must be finite".into()));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Data("curve knot times must be strictly increasing".into()));
        }
        Ok(Self { knots })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        if t >= k[k.len() - 1].0 {
            return k[k.len() - 1].1;
        }
        let i = k.partition_point(|&(x, _)| x <= t);
        let ((t0, v0), (t1, v1)) = (k[i - 1], k[i]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    pub fn into_curve(self) -> Curve {
        Arc::new(move |t| self.eval(t))
    }
}

/// Deterministic parameter curves on `[0, horizon]`.
#[derive(Clone)]
pub struct ParamCurves {
    pub mu: Curve,
    pub sigma: Curve,
    pub r: Curve,
    pub p: Curve,
    pub psi: Curve,
    pub horizon: f64,
}

impl fmt::Debug for ParamCurves {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParamCurves").field("horizon", &self.horizon).finish_non_exhaustive()
    }
}

fn constant(v: f64) -> Curve {
    Arc::new(move |_| v)
}

/// Point values of the curves at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
    pub p: f64,
    pub psi: f64,
}

impl CurvePoint {
    pub fn theta(&self) -> f64 {
        (self.mu - self.r) / self.sigma
    }
}

impl ParamCurves {
    pub fn constant(mu: f64, sigma: f64, r: f64, p: f64, psi: f64, horizon: f64) -> Result<Self> {
        Self::new(constant(mu), constant(sigma), constant(r), constant(p), constant(psi), horizon)
    }

    pub fn new(mu: Curve, sigma: Curve, r: Curve, p: Curve, psi: Curve, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::domain("horizon", horizon, "> 0"));
        }
        Ok(Self {
            mu,
            sigma,
            r,
            p,
            psi,
            horizon,
        })
    }

    /// Curve values at `t`, checked for finiteness, `sigma > 0` and
    /// `p` in (0, 1).
    pub fn at(&self, t: f64) -> Result<CurvePoint> {
        let pt = CurvePoint {
            mu: (self.mu)(t),
            sigma: (self.sigma)(t),
            r: (self.r)(t),
            p: (self.p)(t),
            psi: (self.psi)(t),
        };
        for (what, v) in [
            ("mu", pt.mu),
            ("sigma", pt.sigma),
            ("r", pt.r),
            ("p", pt.p),
            ("psi", pt.psi),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("{what}({t}) = {v}")));
            }
        }
        if !(pt.sigma > 0.0) {
            return Err(Error::domain("sigma(t)", pt.sigma, "> 0"));
        }
        if !(pt.p > 0.0 && pt.p < 1.0) {
            return Err(Error::domain("p(t)", pt.p, "(0, 1)"));
        }
        Ok(pt)
    }

    /// Checks every curve at `samples + 1` evenly spaced times.
    pub fn validate(&self, samples: usize) -> Result<()> {
        let samples = samples.max(1);
        for i in 0..=samples {
            self.at(self.horizon * i as f64 / samples as f64)?;
        }
        Ok(())
    }
}

fn require_premium(pt: &CurvePoint, t: f64) -> Result<f64> {
    let theta = pt.theta();
    if theta > 0.0 {
        Ok(theta)
    } else {
        Err(Error::Precondition(format!(
            "market price of risk at t = {t} must be > 0, got {theta}"
        )))
    }
}

/// `p_k - theta_k sqrt(p_k (1 - p_k) dt)` with curves evaluated at `k dt`.
pub fn tv_risk_neutral_q(c: &ParamCurves, k: usize, dt: f64) -> Result<f64> {
    let pt = c.at(k as f64 * dt)?;
    let q = first_order_q(pt.p, pt.theta(), dt);
    if q > 0.0 && q < 1.0 {
        Ok(q)
    } else {
        Err(Error::Regime {
            step: k,
            value: q,
            max_theta_sqrt_dt: max_theta_sqrt_dt(pt.p),
        })
    }
}

fn with_step(e: Error, k: usize) -> Error {
    match e {
        Error::Regime {
            value,
            max_theta_sqrt_dt,
            ..
        } => Error::Regime {
            step: k,
            value,
            max_theta_sqrt_dt,
        },
        Error::Positivity { which, factor, .. } => Error::Positivity { step: k, which, factor },
        other => other,
    }
}

/// Natural-world step `k`: gross factors
/// `1 + mu_k dt +/- sigma_k sqrt(.) sqrt(dt)` with [`tv_risk_neutral_q`].
pub fn tv_step(c: &ParamCurves, k: usize, dt: f64) -> Result<StepParams> {
    let pt = c.at(k as f64 * dt)?;
    crate::lattice::first_order_step(pt.mu, pt.sigma, pt.p, pt.theta(), dt).map_err(|e| with_step(e, k))
}

/// Risk-neutral step `k`: gross factors
/// `1 + r_k dt + sigma_k sqrt((1 - q)/q) sqrt(dt)` and
/// `1 + r_k dt - sigma_k sqrt(q/(1 - q)) sqrt(dt)` taken with probability `q`.
pub fn tv_risk_neutral_step(c: &ParamCurves, k: usize, dt: f64) -> Result<StepParams> {
    let pt = c.at(k as f64 * dt)?;
    let q = tv_risk_neutral_q(c, k, dt)?;
    let sdt = dt.sqrt();
    let up = 1.0 + pt.r * dt + pt.sigma * ((1.0 - q) / q).sqrt() * sdt;
    let down = 1.0 + pt.r * dt - pt.sigma * (q / (1.0 - q)).sqrt() * sdt;
    StepParams::from_gross(up, down, q, q).map_err(|e| with_step(e, k))
}

/// `n`-step tree over the curve horizon. Recombines only when every step
/// has the same log spread.
pub fn tv_lattice(s0: f64, c: &ParamCurves, n: usize) -> Result<Lattice> {
    if n == 0 {
        return Err(Error::Precondition("tree needs n >= 1 steps".into()));
    }
    let dt = c.horizon / n as f64;
    let steps = (0..n).map(|k| tv_step(c, k, dt)).collect::<Result<Vec<_>>>()?;
    build_lattice(s0, steps, dt, LatticeKind::KsrfFirstOrder)
}

/// Backward induction over [`tv_lattice`], discounting step `k` at
/// `e^{-r_k dt}`.
pub fn tv_price(s0: f64, c: &ParamCurves, opt: &OptionSpec, n: usize) -> Result<f64> {
    let l = tv_lattice(s0, c, n)?;
    let dt = l.dt();
    let discounts = (0..n)
        .map(|k| Ok((-c.at(k as f64 * dt)?.r * dt).exp()))
        .collect::<Result<Vec<_>>>()?;
    backward_induction_with_discounts(&l, opt, |k| discounts[k])
}

fn info_sharpe(theta: f64, p: f64, psi: f64) -> f64 {
    (theta * theta + 4.0 * p * (1.0 - p) * psi * psi).sqrt()
}

/// Information-adjusted market price of risk at `t`.
///
/// `PdeConsistent`: `sqrt(theta^2 + 4 p (1 - p) psi^2)`.
/// `AsPrinted`: `theta + (1 - theta / sqrt(theta^2 + 4 p (1 - p) psi^2))`.
pub fn tv_theta_info(c: &ParamCurves, t: f64, conv: DyConvention) -> Result<f64> {
    let pt = c.at(t)?;
    let theta = require_premium(&pt, t)?;
    let s = info_sharpe(theta, pt.p, pt.psi);
    Ok(match conv {
        DyConvention::PdeConsistent => s,
        DyConvention::AsPrinted => theta + (1.0 - theta / s),
    })
}

/// Dividend-yield equivalent of the information at `t`.
///
/// `AsPrinted`: `sign(psi) (1 - theta / sqrt(theta^2 + 4 p (1 - p) psi^2))`,
/// which carries no volatility factor. `PdeConsistent`:
/// `sign(psi) sigma (sqrt(theta^2 + 4 p (1 - p) psi^2) - theta)`.
pub fn tv_yield(c: &ParamCurves, t: f64, conv: DyConvention) -> Result<f64> {
    let pt = c.at(t)?;
    let theta = require_premium(&pt, t)?;
    let s = info_sharpe(theta, pt.p, pt.psi);
    Ok(sign(pt.psi)
        * match conv {
            DyConvention::AsPrinted => 1.0 - theta / s,
            DyConvention::PdeConsistent => pt.sigma * (s - theta),
        })
}

/// Leading-order moments of the overlay at step `k` holding `n_fwd(k dt)`
/// forwards: mean `2 N psi sigma sqrt(p (1 - p)) dt`, variance
/// `N^2 sigma^2 dt`.
pub fn tv_forward_moments(c: &ParamCurves, n_fwd: impl Fn(f64) -> f64, k: usize, dt: f64) -> Result<Moments> {
    let t = k as f64 * dt;
    let pt = c.at(t)?;
    let n = n_fwd(t);
    if !n.is_finite() {
        return Err(Error::NonFinite(format!("forward count at t = {t}")));
    }
    Ok(Moments {
        mean: 2.0 * n * pt.psi * pt.sigma * (pt.p * (1.0 - pt.p)).sqrt() * dt,
        variance: n * n * pt.sigma * pt.sigma * dt,
    })
}

/// Optimal forward count `2 (psi / theta) sqrt(p (1 - p))` at `t`.
pub fn tv_optimal_n(c: &ParamCurves, t: f64) -> Result<f64> {
    let pt = c.at(t)?;
    let theta = require_premium(&pt, t)?;
    Ok(2.0 * pt.psi / theta * (pt.p * (1.0 - pt.p)).sqrt())
}

/// Sharpe ratio of the stock plus `n` forwards at `t`.
pub fn tv_overlay_sharpe(c: &ParamCurves, t: f64, n: f64) -> Result<f64> {
    let pt = c.at(t)?;
    let lambda = pt.psi * (pt.p * (1.0 - pt.p)).sqrt();
    Ok(crate::informed::overlay_sharpe(pt.theta(), lambda, n))
}

/// Monte Carlo settings. Paths are split into fixed-size chunks, each with
/// its own ChaCha stream derived from `seed`, so results do not depend on
/// the number of worker threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
}

pub const MIN_PATHS: usize = 1000;
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Gauss-Legendre 3-point integral of `f` over `[a, b]`.
fn gauss3(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const X: f64 = 0.774_596_669_241_483_4;
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    half * (5.0 / 9.0 * f(mid - half * X) + 8.0 / 9.0 * f(mid) + 5.0 / 9.0 * f(mid + half * X))
}

#[derive(Clone, Copy, Default)]
struct Welford {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Welford) -> Welford {
        if o.n == 0.0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Welford {
            n,
            mean: self.mean + d * o.n / n,
            m2: self.m2 + o.m2 + d * d * self.n * o.n / n,
        }
    }
}

/// Discounted risk-neutral expectation of the payoff, simulating
/// `log X` exactly over `cfg.steps` sub-steps: each increment is normal with
/// mean `int (r - D - sigma^2/2)` and variance `int sigma^2` over the
/// sub-step, the integrals taken by 3-point Gauss-Legendre quadrature.
pub fn feynman_kac_price(
    s0: f64,
    c: &ParamCurves,
    d_y: impl Fn(f64) -> f64,
    opt: &OptionSpec,
    cfg: McConfig,
) -> Result<McEstimate> {
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::domain("S0", s0, "> 0"));
    }
    if cfg.paths < MIN_PATHS {
        return Err(Error::Precondition(format!(
            "need at least {MIN_PATHS} paths, got {}",
            cfg.paths
        )));
    }
    if cfg.steps == 0 {
        return Err(Error::Precondition("need at least one time step".into()));
    }
    if (c.horizon - opt.maturity).abs() > 1e-9 * opt.maturity.max(1.0) {
        return Err(Error::MaturityMismatch {
            lattice: c.horizon,
            maturity: opt.maturity,
        });
    }
    let h = c.horizon / cfg.steps as f64;
    let mut drift = Vec::with_capacity(cfg.steps);
    let mut vol = Vec::with_capacity(cfg.steps);
    let mut rate_integral = 0.0;
    for i in 0..cfg.steps {
        let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
        let r_int = gauss3(&*c.r, a, b);
        let d_int = gauss3(&d_y, a, b);
        let var_int = gauss3(|t| (c.sigma)(t).powi(2), a, b);
        for (name, v) in [("r", r_int), ("d_y", d_int), ("sigma^2", var_int)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("integral of {name} over [{a}, {b}] is {v}")));
            }
        }
        c.at(0.5 * (a + b))?;
        rate_integral += r_int;
        drift.push(r_int - d_int - 0.5 * var_int);
        vol.push(var_int.sqrt());
    }
    let log_drift: f64 = drift.iter().sum();
    let discount = (-rate_integral).exp();

    let chunks = cfg.paths.div_ceil(CHUNK);
    let stats = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(chunk as u64);
            let count = CHUNK.min(cfg.paths - chunk * CHUNK);
            let mut w = Welford::default();
            for _ in 0..count {
                let mut x = log_drift;
                for &v in &vol {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x += v * z;
                }
                let payoff = opt.payoff(s0 * x.exp())?;
                w.push(discount * payoff);
            }
            Ok(w)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = stats.into_iter().fold(Welford::default(), Welford::merge);
    let variance = total.m2 / (total.n - 1.0);
    Ok(McEstimate {
        value: total.mean,
        std_error: (variance / total.n).sqrt(),
    })
}
