//! Binomial trees: CRR, JR and the KSRF parameterization that keeps the
//! natural-world upturn probability and drift in the risk-neutral step.
//!
//! Step factors are stored as log-returns. Recombining trees keep only the
//! per-step cumulative down move and the (constant) up-down spread, so the
//! price at step `k` after `j` up moves is `s0 * exp(cum_down[k] + j * spread)`
//! and a 10 000-step tree costs O(n) memory.

use crate::error::{Error, Result};
use crate::model::{check_open_unit, MarketParams, OptionSpec};

/// Maximum depth of a non-recombining tree (2^n leaves).
pub const MAX_NON_RECOMBINING_STEPS: usize = 24;

const RECOMBINE_RTOL: f64 = 1e-12;
const MATURITY_TOL: f64 = 1e-9;

/// One step of a binomial tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    /// Log-return of an up move.
    pub up: f64,
    /// Log-return of a down move.
    pub down: f64,
    /// Natural-world up probability.
    pub p: f64,
    /// Risk-neutral up probability.
    pub q: f64,
}

impl StepParams {
    pub fn gross_up(&self) -> f64 {
        self.up.exp()
    }

    pub fn gross_down(&self) -> f64 {
        self.down.exp()
    }

    /// Step with the exact martingale probability `(e^{r dt} - d) / (u - d)`.
    pub fn arbitrage_free(up: f64, down: f64, p: f64, r: f64, dt: f64) -> Result<Self> {
        let q = martingale_q(up, down, r, dt)?;
        let step = Self { up, down, p, q };
        step.validate(0)?;
        Ok(step)
    }

    /// Builds a step from gross factors `1 + mu dt +/- ...`, failing when a
    /// factor is not positive.
    pub fn from_gross(gross_up: f64, gross_down: f64, p: f64, q: f64) -> Result<Self> {
        if !(gross_up > 0.0) {
            return Err(Error::Positivity {
                step: 0,
                which: "up",
                factor: gross_up,
            });
        }
        if !(gross_down > 0.0) {
            return Err(Error::Positivity {
                step: 0,
                which: "down",
                factor: gross_down,
            });
        }
        let step = Self {
            up: gross_up.ln(),
            down: gross_down.ln(),
            p,
            q,
        };
        step.validate(0)?;
        Ok(step)
    }

    fn validate(&self, step: usize) -> Result<()> {
        if !(self.up.is_finite() && self.down.is_finite()) {
            return Err(Error::NonFinite(format!(
                "step {step}: log factors ({}, {})",
                self.up, self.down
            )));
        }
        if !(self.up > self.down) {
            return Err(Error::Precondition(format!(
                "step {step}: up move {} must exceed down move {}",
                self.up, self.down
            )));
        }
        check_open_unit("natural step probability", self.p)?;
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::Regime {
                step,
                value: self.q,
                max_theta_sqrt_dt: max_theta_sqrt_dt(self.p),
            });
        }
        Ok(())
    }
}

/// Largest theta*sqrt(dt) keeping `p - theta sqrt(p(1-p) dt)` above zero.
pub fn max_theta_sqrt_dt(p: f64) -> f64 {
    (p / (1.0 - p)).sqrt()
}

fn regime_error(step: usize, q: f64, p: f64) -> Error {
    Error::Regime {
        step,
        value: q,
        max_theta_sqrt_dt: max_theta_sqrt_dt(p),
    }
}

/// `(e^{r dt} - e^{down}) / (e^{up} - e^{down})` evaluated with `expm1`.
pub fn martingale_q(up: f64, down: f64, r: f64, dt: f64) -> Result<f64> {
    let q = ((r * dt).exp_m1() - down.exp_m1()) / (up.exp_m1() - down.exp_m1());
    if q > 0.0 && q < 1.0 {
        Ok(q)
    } else {
        Err(Error::Arbitrage {
            up: up.exp(),
            growth: (r * dt).exp(),
            down: down.exp(),
        })
    }
}

/// First-order risk-neutral probability `p - theta sqrt(p (1 - p) dt)`.
pub fn first_order_q(p: f64, theta: f64, dt: f64) -> f64 {
    p - theta * (p * (1.0 - p) * dt).sqrt()
}

/// Cox-Ross-Rubinstein step: `+/- sigma sqrt(dt)`.
pub fn crr_step(m: &MarketParams) -> Result<StepParams> {
    let s = m.sigma * m.sqrt_dt();
    let denom = s.exp() - (-s).exp();
    let p = ((m.mu * m.dt).exp() - (-s).exp()) / denom;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Precondition(format!(
            "CRR natural probability {p} outside (0, 1): mu*dt too large relative to sigma*sqrt(dt)"
        )));
    }
    let q = ((m.r * m.dt).exp() - (-s).exp()) / denom;
    if !(q > 0.0 && q < 1.0) {
        return Err(regime_error(0, q, p));
    }
    Ok(StepParams {
        up: s,
        down: -s,
        p,
        q,
    })
}

/// Jarrow-Rudd step: drift `(mu - sigma^2/2) dt`, p = 1/2, first-order q.
pub fn jr_step(m: &MarketParams) -> Result<StepParams> {
    let s = m.sigma * m.sqrt_dt();
    let drift = (m.mu - 0.5 * m.sigma * m.sigma) * m.dt;
    let q = 0.5 - 0.5 * m.theta() * m.sqrt_dt();
    if !(q > 0.0 && q < 1.0) {
        return Err(regime_error(0, q, 0.5));
    }
    Ok(StepParams {
        up: drift + s,
        down: drift - s,
        p: 0.5,
        q,
    })
}

/// Which KSRF step form to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KsrfForm {
    /// Exponential log-factors with the exact martingale probability.
    Exact,
    /// Gross factors `1 + mu dt +/- sigma sqrt(.) sqrt(dt)` with
    /// `q = p - theta sqrt(p(1-p) dt)`.
    #[default]
    FirstOrder,
}

/// KSRF step for natural upturn probability `p`.
pub fn ksrf_step(m: &MarketParams, p: f64, form: KsrfForm) -> Result<StepParams> {
    check_open_unit("p", p)?;
    match form {
        KsrfForm::Exact => {
            let sdt = m.sqrt_dt();
            let odds_up = (1.0 - p) / p;
            let odds_down = p / (1.0 - p);
            let var = m.sigma * m.sigma * m.dt;
            let up = m.mu * m.dt - 0.5 * var * odds_up + m.sigma * odds_up.sqrt() * sdt;
            let down = m.mu * m.dt - 0.5 * var * odds_down - m.sigma * odds_down.sqrt() * sdt;
            let q = martingale_q(up, down, m.r, m.dt).map_err(|_| {
                let q = ((m.r * m.dt).exp() - down.exp()) / (up.exp() - down.exp());
                regime_error(0, q, p)
            })?;
            let step = StepParams { up, down, p, q };
            step.validate(0)?;
            Ok(step)
        }
        KsrfForm::FirstOrder => first_order_step(m.mu, m.sigma, p, m.theta(), m.dt),
    }
}

/// First-order KSRF step for drift `mu`, volatility `sigma` and the
/// risk-neutral probability built from `theta`.
pub fn first_order_step(mu: f64, sigma: f64, p: f64, theta: f64, dt: f64) -> Result<StepParams> {
    check_open_unit("p", p)?;
    let sdt = dt.sqrt();
    let gross_up = 1.0 + mu * dt + sigma * ((1.0 - p) / p).sqrt() * sdt;
    let gross_down = 1.0 + mu * dt - sigma * (p / (1.0 - p)).sqrt() * sdt;
    let q = first_order_q(p, theta, dt);
    if !(q > 0.0 && q < 1.0) {
        return Err(regime_error(0, q, p));
    }
    StepParams::from_gross(gross_up, gross_down, p, q)
}

/// How a lattice was parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeKind {
    Crr,
    Jr,
    Ksrf,
    KsrfFirstOrder,
    Custom,
}

#[derive(Debug, Clone)]
enum Layout {
    Recombining { cum_down: Vec<f64>, spread: f64 },
    /// `levels[k][i]`: children of node `i` are `2i` (down) and `2i + 1` (up).
    NonRecombining { levels: Vec<Vec<f64>> },
}

/// An immutable binomial tree with per-step parameters.
#[derive(Debug, Clone)]
pub struct Lattice {
    s0: f64,
    dt: f64,
    steps: Vec<StepParams>,
    kind: LatticeKind,
    layout: Layout,
}

impl Lattice {
    /// Tree with the same step repeated `n` times.
    pub fn uniform(s0: f64, step: StepParams, n: usize, dt: f64, kind: LatticeKind) -> Result<Self> {
        build_lattice(s0, vec![step; n], dt, kind)
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn steps(&self) -> &[StepParams] {
        &self.steps
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn horizon(&self) -> f64 {
        self.steps.len() as f64 * self.dt
    }

    pub fn is_recombining(&self) -> bool {
        matches!(self.layout, Layout::Recombining { .. })
    }

    /// Number of nodes at step `k`.
    pub fn width(&self, k: usize) -> usize {
        match self.layout {
            Layout::Recombining { .. } => k + 1,
            Layout::NonRecombining { .. } => 1 << k,
        }
    }

    /// Price at step `k`, node `j`. For a recombining tree `j` counts up
    /// moves; otherwise it is the path index whose bit `k-1-i` records
    /// whether step `i` went up.
    pub fn node_price(&self, k: usize, j: usize) -> f64 {
        assert!(k <= self.n_steps() && j < self.width(k), "node ({k}, {j}) out of range");
        match &self.layout {
            Layout::Recombining { cum_down, spread } => {
                self.s0 * (cum_down[k] + j as f64 * spread).exp()
            }
            Layout::NonRecombining { levels } => levels[k][j],
        }
    }

    /// Materialized node prices, one vector per step. Quadratic (or
    /// exponential) in size; meant for inspection of small trees.
    pub fn node_prices(&self) -> Vec<Vec<f64>> {
        (0..=self.n_steps())
            .map(|k| (0..self.width(k)).map(|j| self.node_price(k, j)).collect())
            .collect()
    }

    fn terminal_prices(&self) -> Vec<f64> {
        let n = self.n_steps();
        (0..self.width(n)).map(|j| self.node_price(n, j)).collect()
    }
}

/// Builds a tree from per-step parameters. Trees whose up-down spread is
/// the same at every step recombine; others are stored path by path up to
/// [`MAX_NON_RECOMBINING_STEPS`].
pub fn build_lattice(s0: f64, steps: Vec<StepParams>, dt: f64, kind: LatticeKind) -> Result<Lattice> {
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::domain("S0", s0, "> 0"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::domain("dt", dt, "> 0"));
    }
    if steps.is_empty() {
        return Err(Error::Precondition("lattice needs at least one step".into()));
    }
    for (k, step) in steps.iter().enumerate() {
        step.validate(k)?;
    }

    let spread0 = steps[0].up - steps[0].down;
    let recombines = steps
        .iter()
        .all(|s| ((s.up - s.down) - spread0).abs() <= RECOMBINE_RTOL * spread0.abs());

    let layout = if recombines {
        let mut cum_down = Vec::with_capacity(steps.len() + 1);
        cum_down.push(0.0);
        let mut acc = 0.0;
        // node prices may underflow to zero deep in the tree; gross factors
        // themselves were checked positive above
        for s in &steps {
            acc += s.down;
            cum_down.push(acc);
        }
        Layout::Recombining {
            cum_down,
            spread: spread0,
        }
    } else {
        if steps.len() > MAX_NON_RECOMBINING_STEPS {
            return Err(Error::Precondition(format!(
                "non-recombining tree with {} steps exceeds the {} step budget; \
                 use the Monte Carlo pricer",
                steps.len(),
                MAX_NON_RECOMBINING_STEPS
            )));
        }
        let mut levels = vec![vec![s0]];
        for (k, s) in steps.iter().enumerate() {
            let (gu, gd) = (s.gross_up(), s.gross_down());
            let prev = &levels[k];
            let mut next = Vec::with_capacity(prev.len() * 2);
            for &x in prev {
                next.push(x * gd);
                next.push(x * gu);
            }
            if next.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::Positivity {
                    step: k,
                    which: "node",
                    factor: gd,
                });
            }
            levels.push(next);
        }
        Layout::NonRecombining { levels }
    };

    Ok(Lattice {
        s0,
        dt,
        steps,
        kind,
        layout,
    })
}

/// Values `spec` by discounting with `e^{-r dt}` at every step.
pub fn backward_induction(l: &Lattice, spec: &OptionSpec, r: f64) -> Result<f64> {
    let disc = (-r * l.dt()).exp();
    backward_induction_with_discounts(l, spec, |_| disc)
}

/// Backward induction where `discount(k)` is the one-period discount factor
/// applied when rolling back from step `k + 1` to `k`.
pub fn backward_induction_with_discounts(
    l: &Lattice,
    spec: &OptionSpec,
    discount: impl Fn(usize) -> f64,
) -> Result<f64> {
    let horizon = l.horizon();
    if (horizon - spec.maturity).abs() > MATURITY_TOL * spec.maturity.max(1.0) {
        return Err(Error::MaturityMismatch {
            lattice: horizon,
            maturity: spec.maturity,
        });
    }
    let mut values = l
        .terminal_prices()
        .into_iter()
        .map(|s| spec.payoff(s))
        .collect::<Result<Vec<_>>>()?;

    let recombining = l.is_recombining();
    for k in (0..l.n_steps()).rev() {
        let q = l.steps[k].q;
        let disc = discount(k);
        if recombining {
            for j in 0..=k {
                values[j] = disc * (q * values[j + 1] + (1.0 - q) * values[j]);
            }
            values.truncate(k + 1);
        } else {
            values = values
                .chunks_exact(2)
                .map(|pair| disc * (q * pair[1] + (1.0 - q) * pair[0]))
                .collect();
        }
    }
    // node prices can overflow at extreme volatility and step counts
    if !values[0].is_finite() {
        return Err(Error::NonFinite(format!("tree value {}", values[0])));
    }
    Ok(values[0])
}

/// Tree parameterizations available to [`price_on_tree`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeModel {
    Crr,
    Jr,
    Ksrf { p: f64, form: KsrfForm },
}

/// Prices `spec` on an `n`-step tree spanning its maturity; `m.dt` is
/// replaced by `maturity / n`.
pub fn price_on_tree(model: TreeModel, s0: f64, m: &MarketParams, spec: &OptionSpec, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Precondition("tree needs n >= 1 steps".into()));
    }
    let m = m.with_dt(spec.maturity / n as f64)?;
    let (step, kind) = match model {
        TreeModel::Crr => (crr_step(&m)?, LatticeKind::Crr),
        TreeModel::Jr => (jr_step(&m)?, LatticeKind::Jr),
        TreeModel::Ksrf { p, form } => (
            ksrf_step(&m, p, form)?,
            match form {
                KsrfForm::Exact => LatticeKind::Ksrf,
                KsrfForm::FirstOrder => LatticeKind::KsrfFirstOrder,
            },
        ),
    };
    let lattice = Lattice::uniform(s0, step, n, m.dt, kind)?;
    backward_induction(&lattice, spec, m.r)
}

/// One-period price for a trader who moment-matches `u`, `d` to
/// `(mu_t T, sigma_t^2 T)` under upturn probability `p0`, discounting with
/// simple interest `1 + r_t T`.
pub fn one_period_informed_price(
    s0: f64,
    p0: f64,
    mu_t: f64,
    sigma_t: f64,
    r_t: f64,
    maturity: f64,
    spec: &OptionSpec,
) -> Result<f64> {
    check_open_unit("p0", p0)?;
    if !(sigma_t > 0.0) {
        return Err(Error::domain("sigma_T", sigma_t, "> 0"));
    }
    let (u, d) = moment_matched_factors(p0, mu_t, sigma_t, maturity);
    let growth = 1.0 + r_t * maturity;
    if !(u > growth && growth > d) {
        return Err(Error::Arbitrage { up: u, growth, down: d });
    }
    let theta = (mu_t - r_t) / sigma_t;
    let q = first_order_q(p0, theta, maturity);
    if !(q > 0.0 && q < 1.0) {
        return Err(regime_error(0, q, p0));
    }
    Ok((q * spec.payoff(s0 * u)? + (1.0 - q) * spec.payoff(s0 * d)?) / growth)
}

/// Gross factors `(u, d)` giving return mean `mu T` and variance
/// `sigma^2 T` when up has probability `p`.
pub fn moment_matched_factors(p: f64, mu: f64, sigma: f64, horizon: f64) -> (f64, f64) {
    let u = 1.0 + mu * horizon + sigma * ((1.0 - p) / p * horizon).sqrt();
    let d = 1.0 + mu * horizon - sigma * (p / (1.0 - p) * horizon).sqrt();
    (u, d)
}
