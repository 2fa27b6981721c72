//! Trader informed about the sign of the deviation of the true mean return
//! from the market-perceived one.
//!
//! The true upturn probability is `p0 + delta sqrt(dt)`; the trader bets on
//! direction with skill `rho`, guessing right with probability
//! `(1 + rho / sqrt(p (1 - p)) sqrt(dt)) / 2`.

use crate::error::{Error, Result};
use crate::lattice::{backward_induction, first_order_q, first_order_step, Lattice, LatticeKind, StepParams};
use crate::model::{check_open_unit, MarketParams, OptionSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanInfoSpec {
    /// Deviation of the upturn probability per root year (signed).
    pub delta: f64,
    /// Betting skill, `>= 0`.
    pub rho: f64,
}

impl MeanInfoSpec {
    pub fn new(delta: f64, rho: f64) -> Result<Self> {
        if !delta.is_finite() {
            return Err(Error::NonFinite(format!("delta = {delta}")));
        }
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::domain("rho", rho, ">= 0"));
        }
        Ok(Self { delta, rho })
    }
}

/// Denominator used when mapping `delta` to the mean-return deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DevForm {
    /// `sigma delta / sqrt(p0 (1 - p0))`
    #[default]
    Rooted,
    /// `sigma delta / (p0 (1 - p0))`
    Unrooted,
}

/// Deviation of the true mean return from `mu` implied by `delta`.
pub fn dev_from_delta(m: &MarketParams, delta: f64, form: DevForm) -> f64 {
    let v = m.p0 * (1.0 - m.p0);
    let denom = match form {
        DevForm::Rooted => v.sqrt(),
        DevForm::Unrooted => v,
    };
    m.sigma * delta / denom
}

/// True per-step upturn probability `p0 + delta sqrt(dt)`.
pub fn shifted_probability(m: &MarketParams, spec: &MeanInfoSpec) -> Result<f64> {
    check_open_unit("p0 + delta sqrt(dt)", m.p0 + spec.delta * m.sqrt_dt())
}

/// Probability that the trader's direction bet is right.
pub fn bet_probability(m: &MarketParams, spec: &MeanInfoSpec) -> Result<f64> {
    let p = shifted_probability(m, spec)?;
    crate::informed::guess_probability(spec.rho, p, m.dt)
}

/// Information-adjusted market price of risk `sqrt(theta^2 + 4 rho^2)`.
pub fn theta_delta_rho(theta: f64, rho: f64) -> f64 {
    (theta * theta + 4.0 * rho * rho).sqrt()
}

/// Risk-neutral step probability
/// `p_dt - sqrt(theta^2 + 4 rho^2) sqrt(p_dt (1 - p_dt) dt)`.
pub fn mean_info_q(m: &MarketParams, spec: &MeanInfoSpec) -> Result<f64> {
    let p = shifted_probability(m, spec)?;
    bet_probability(m, spec)?;
    let q = first_order_q(p, theta_delta_rho(m.theta(), spec.rho), m.dt);
    if q > 0.0 && q < 1.0 {
        Ok(q)
    } else {
        Err(Error::Regime {
            step: 0,
            value: q,
            max_theta_sqrt_dt: crate::lattice::max_theta_sqrt_dt(p),
        })
    }
}

/// Drift and volatility of the stock plus optimal overlay:
/// `mu + 4 sigma^2 rho^2 / (mu - r)` and `sigma sqrt(1 + 4 sigma^2 rho^2 / (mu - r)^2)`.
pub fn enhanced_drift_vol(m: &MarketParams, rho: f64) -> Result<(f64, f64)> {
    let theta = m.require_positive_theta()?;
    let excess = m.mu - m.r;
    let v = m.mu + 4.0 * m.sigma * m.sigma * rho * rho / excess;
    let s = m.sigma * (1.0 + 4.0 * rho * rho / (theta * theta)).sqrt();
    Ok((v, s))
}

/// One step of the mean-information tree: first-order factors for the
/// enhanced drift and volatility at the shifted probability, with
/// [`mean_info_q`] as the risk-neutral probability.
pub fn mean_info_step(m: &MarketParams, spec: &MeanInfoSpec) -> Result<StepParams> {
    let (v, s) = enhanced_drift_vol(m, spec.rho)?;
    let p = shifted_probability(m, spec)?;
    let q = mean_info_q(m, spec)?;
    let step = first_order_step(v, s, p, theta_delta_rho(m.theta(), spec.rho), m.dt)?;
    debug_assert!((step.q - q).abs() < 1e-15);
    Ok(step)
}

/// `n`-step tree with step `m.dt`.
pub fn mean_info_lattice(s0: f64, m: &MarketParams, spec: &MeanInfoSpec, n: usize) -> Result<Lattice> {
    Lattice::uniform(s0, mean_info_step(m, spec)?, n, m.dt, LatticeKind::Custom)
}

/// Backward induction over [`mean_info_lattice`], discounting at `e^{-r dt}`.
/// Requires `n * m.dt` to equal the option maturity.
pub fn mean_info_price(s0: f64, m: &MarketParams, spec: &MeanInfoSpec, opt: &OptionSpec, n: usize) -> Result<f64> {
    let l = mean_info_lattice(s0, m, spec, n)?;
    backward_induction(&l, opt, m.r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::informed::{forward_strategy_moments, overlay_branches};
    use crate::lattice::{price_on_tree, KsrfForm, TreeModel};

    fn desk() -> MarketParams {
        MarketParams::new(1.80e-4 * 252.0, 0.02 * 252f64.sqrt(), 0.0064, 0.56).unwrap()
    }

    #[test]
    fn dev_examples() {
        let m = MarketParams::new(0.05, 0.02, 0.01, 0.56).unwrap();
        assert_eq!(dev_from_delta(&m, 0.0, DevForm::Rooted), 0.0);
        let d = dev_from_delta(&m, 0.7, DevForm::Rooted);
        assert!((d - 0.028_203_803_7).abs() < 1e-9);
        assert!((0.0202..=0.0289).contains(&d));
        assert!((dev_from_delta(&m, 1.4, DevForm::Rooted) - 2.0 * d).abs() < 1e-15);
        assert!((dev_from_delta(&m, 0.7, DevForm::Unrooted) - 0.014 / 0.2464).abs() < 1e-15);
    }

    #[test]
    fn q_reduces_to_ksrf() {
        let m = desk();
        let q = mean_info_q(&m, &MeanInfoSpec::new(0.0, 0.0).unwrap()).unwrap();
        assert!((q - first_order_q(m.p0, m.theta(), m.dt)).abs() < 1e-15);
    }

    #[test]
    fn q_at_fitted_point() {
        let m = desk();
        let spec = MeanInfoSpec::new(0.7, 0.49).unwrap();
        assert!((shifted_probability(&m, &spec).unwrap() - 0.604_095_855_2).abs() < 1e-9);
        assert!((theta_delta_rho(m.theta(), 0.49) - 0.987_652_949_8).abs() < 1e-9);
        assert!((mean_info_q(&m, &spec).unwrap() - 0.573_669_351_7).abs() < 1e-9);
        let other = mean_info_q(&m, &MeanInfoSpec::new(0.5, 0.49).unwrap()).unwrap();
        assert!(other != mean_info_q(&m, &spec).unwrap());
    }

    #[test]
    fn theta_delta_rho_dominates() {
        assert_eq!(theta_delta_rho(0.3, 0.0), 0.3);
        assert!(theta_delta_rho(0.3, 0.01) > 0.3);
    }

    #[test]
    fn no_skill_tree_is_ksrf_at_shifted_probability() {
        let m = desk();
        let spec = MeanInfoSpec::new(0.3, 0.0).unwrap();
        let step = mean_info_step(&m, &spec).unwrap();
        let p = shifted_probability(&m, &spec).unwrap();
        let plain = crate::lattice::ksrf_step(&m, p, KsrfForm::FirstOrder).unwrap();
        assert_eq!(step, plain);
    }

    #[test]
    fn step_moments_by_enumeration() {
        let m = desk();
        let spec = MeanInfoSpec::new(0.7, 0.49).unwrap();
        let (v, s) = enhanced_drift_vol(&m, spec.rho).unwrap();
        let st = mean_info_step(&m, &spec).unwrap();
        let (ru, rd) = (st.gross_up() - 1.0, st.gross_down() - 1.0);
        let mean = st.p * ru + (1.0 - st.p) * rd;
        let var = st.p * (ru - mean).powi(2) + (1.0 - st.p) * (rd - mean).powi(2);
        assert!((mean - v * m.dt).abs() < 1e-15);
        assert!((var - s * s * m.dt).abs() < 1e-15);
    }

    #[test]
    fn risk_neutral_growth_is_simple_rate() {
        let m = desk();
        let st = mean_info_step(&m, &MeanInfoSpec::new(0.7, 0.49).unwrap()).unwrap();
        let growth = st.q * st.gross_up() + (1.0 - st.q) * st.gross_down();
        assert!((growth - 1.0 - m.r * m.dt).abs() < 1e-15);
    }

    #[test]
    fn four_branch_overlay_matches_two_branch_moments() {
        let spec = MeanInfoSpec::new(0.7, 0.49).unwrap();
        let mut residuals = Vec::new();
        for dt in [1.0 / 252.0, 1.0 / 2520.0, 1.0 / 25200.0] {
            let m = desk().with_dt(dt).unwrap();
            let p = shifted_probability(&m, &spec).unwrap();
            let g = bet_probability(&m, &spec).unwrap();
            let n_opt = 2.0 * spec.rho / m.theta();
            let b = overlay_branches(&m, p, g, n_opt).unwrap();
            let total = |x: &crate::informed::Branch| x.stock_return + x.forward_payoff;
            let mean: f64 = b.iter().map(|x| x.probability * total(x)).sum();
            let var: f64 = b.iter().map(|x| x.probability * (total(x) - mean).powi(2)).sum();
            let (v, s) = enhanced_drift_vol(&m, spec.rho).unwrap();
            residuals.push(((mean - v * dt).abs(), (var - s * s * dt).abs(), dt));
        }
        for (dm, dv, dt) in residuals {
            assert!(dm <= 5.0 * dt.powf(1.5), "mean residual {dm} at dt {dt}");
            assert!(dv <= 5.0 * dt.powf(1.5), "variance residual {dv} at dt {dt}");
        }
    }

    #[test]
    fn overlay_moment_simplification() {
        let spec = MeanInfoSpec::new(0.7, 0.49).unwrap();
        for dt in [1e-3, 1e-4, 1e-5] {
            let m = desk().with_dt(dt).unwrap();
            let p = shifted_probability(&m, &spec).unwrap();
            let g = bet_probability(&m, &spec).unwrap();
            let n = 2.0;
            let mo = forward_strategy_moments(&m, p, g, n).unwrap();
            assert!((mo.mean - 2.0 * n * m.sigma * spec.rho * dt).abs() <= 2.0 * dt.powf(1.5));
            assert!((mo.variance - n * n * m.sigma * m.sigma * dt).abs() <= 2.0 * dt.powf(1.5));
        }
    }

    #[test]
    fn no_information_price_is_ksrf_price() {
        let m = desk().with_dt(1.0 / 252.0).unwrap();
        let call = OptionSpec::call(300.0, 1.0).unwrap();
        let a = mean_info_price(301.6, &m, &MeanInfoSpec::new(0.0, 0.0).unwrap(), &call, 252).unwrap();
        let b = price_on_tree(
            TreeModel::Ksrf {
                p: m.p0,
                form: KsrfForm::FirstOrder,
            },
            301.6,
            &m,
            &call,
            252,
        )
        .unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn call_price_depends_on_delta_at_finite_n() {
        let m = desk().with_dt(0.5 / 126.0).unwrap();
        let call = OptionSpec::call(300.0, 0.5).unwrap();
        let at = |d| mean_info_price(301.6, &m, &MeanInfoSpec::new(d, 0.49).unwrap(), &call, 126).unwrap();
        let (lo, hi) = (at(0.6), at(0.8));
        assert!(lo != hi);
        assert!((hi - lo).abs() < 1e-2 * lo);
    }
}
