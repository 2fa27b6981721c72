//! Information measures, the forward-overlay strategy of an informed trader
//! and the enhanced price process it induces.
//!
//! The trader guesses the next price direction correctly with probability
//! `p_info = (1 + lambda / sqrt(p (1 - p)) * sqrt(dt)) / 2` and enters `N`
//! forwards per share in the guessed direction. At the optimal `N` the
//! combined position behaves like the stock with drift `mu + 4 sigma
//! lambda^2 / theta`, which prices options as if the stock paid a continuous
//! dividend yield.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::lattice::{first_order_q, first_order_step, StepParams};
use crate::model::{check_open_unit, sign, MarketParams};

/// Bernoulli entropy in nats; 0 at the endpoints.
pub fn shannon_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain("p", p, "[0, 1]"));
    }
    let xlnx = |x: f64| if x == 0.0 { 0.0 } else { x * x.ln() };
    Ok(-xlnx(p) - xlnx(1.0 - p))
}

/// Kullback-Leibler divergence of Bernoulli(p) from the fair coin.
pub fn kl_to_fair(p: f64) -> Result<f64> {
    check_open_unit("p", p)?;
    Ok(p * (2.0 * p).ln() + (1.0 - p) * (2.0 - 2.0 * p).ln())
}

/// Signed information level `sign(p - 1/2) D / (ln 2 - D)`.
pub fn information_level(p: f64) -> Result<f64> {
    let d = kl_to_fair(p)?;
    Ok(sign(p - 0.5) * d / (LN_2 - d))
}

/// Information intensity of a trader. `lambda > 0` is informed, `< 0`
/// misinformed, `0` noisy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InformedTraderSpec {
    pub lambda: f64,
}

impl InformedTraderSpec {
    pub fn new(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::NonFinite(format!("lambda = {lambda}")));
        }
        Ok(Self { lambda })
    }

    /// Builds the spec from the unnormalized intensity `psi` at upturn
    /// probability `p`.
    pub fn from_psi(psi: f64, p: f64) -> Result<Self> {
        Self::new(lambda_from_psi(psi, p)?)
    }

    /// Per-step probability of guessing the direction correctly.
    pub fn guess_probability(&self, p: f64, dt: f64) -> Result<f64> {
        guess_probability(self.lambda, p, dt)
    }
}

/// `lambda = psi sqrt(p (1 - p))`.
pub fn lambda_from_psi(psi: f64, p: f64) -> Result<f64> {
    check_open_unit("p", p)?;
    Ok(psi * (p * (1.0 - p)).sqrt())
}

pub fn psi_from_lambda(lambda: f64, p: f64) -> Result<f64> {
    check_open_unit("p", p)?;
    Ok(lambda / (p * (1.0 - p)).sqrt())
}

/// `(1 + lambda / sqrt(p (1 - p)) sqrt(dt)) / 2`, required to lie in (0, 1).
pub fn guess_probability(lambda: f64, p: f64, dt: f64) -> Result<f64> {
    check_open_unit("p", p)?;
    let g = 0.5 * (1.0 + lambda / (p * (1.0 - p)).sqrt() * dt.sqrt());
    check_open_unit("guess probability", g)
}

/// Mean and variance of a one-step return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

/// Leading-order moments of the forward overlay over one step, dropping
/// `o(dt)` terms.
pub fn forward_strategy_moments(m: &MarketParams, p: f64, p_info: f64, n_fwd: f64) -> Result<Moments> {
    check_open_unit("p", p)?;
    check_open_unit("guess probability", p_info)?;
    if !(n_fwd >= 0.0 && n_fwd.is_finite()) {
        return Err(Error::domain("forward count", n_fwd, ">= 0"));
    }
    let edge = 2.0 * p_info - 1.0;
    let dt = m.dt;
    let mean = n_fwd
        * edge
        * m.sigma
        * (m.theta() * (2.0 * p - 1.0) * dt + 2.0 * (p * (1.0 - p) * dt).sqrt());
    let variance = n_fwd * n_fwd * m.sigma * m.sigma * (1.0 - 4.0 * edge * edge * p * (1.0 - p)) * dt;
    Ok(Moments { mean, variance })
}

/// One branch of the joint (price move, guess) distribution over a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub probability: f64,
    /// Simple return of the stock.
    pub stock_return: f64,
    /// Payoff per unit of spot of the forward position.
    pub forward_payoff: f64,
}

/// The four (move, guess) branches of one step: the stock moves with the
/// first-order factors at probability `p`, the trader's guess is right with
/// probability `p_info`, and `n_fwd` forwards struck at `S (1 + r dt)` are
/// held in the guessed direction.
pub fn overlay_branches(m: &MarketParams, p: f64, p_info: f64, n_fwd: f64) -> Result<[Branch; 4]> {
    check_open_unit("p", p)?;
    check_open_unit("guess probability", p_info)?;
    let sdt = m.sqrt_dt();
    let up = m.mu * m.dt + m.sigma * ((1.0 - p) / p).sqrt() * sdt;
    let down = m.mu * m.dt - m.sigma * (p / (1.0 - p)).sqrt() * sdt;
    let carry = m.r * m.dt;
    let branch = |probability: f64, stock_return: f64, long: bool| Branch {
        probability,
        stock_return,
        forward_payoff: if long { 1.0 } else { -1.0 } * n_fwd * (stock_return - carry),
    };
    Ok([
        branch(p * p_info, up, true),
        branch(p * (1.0 - p_info), up, false),
        branch((1.0 - p) * p_info, down, false),
        branch((1.0 - p) * (1.0 - p_info), down, true),
    ])
}

/// Instantaneous information ratio of the overlay, `2 lambda`.
pub fn information_ratio(lambda: f64) -> f64 {
    2.0 * lambda
}

/// Market price of risk of the stock plus `n` forwards:
/// `(theta + 2 n lambda) / sqrt(1 + n^2)`.
pub fn overlay_sharpe(theta: f64, lambda: f64, n: f64) -> f64 {
    (theta + 2.0 * n * lambda) / (1.0 + n * n).sqrt()
}

/// Signed dividend-yield equivalent of the trader's information,
/// `sign(lambda) sigma (sqrt(theta^2 + 4 lambda^2) - theta)`.
pub fn dividend_yield(sigma: f64, theta: f64, lambda: f64) -> f64 {
    sign(lambda) * sigma * ((theta * theta + 4.0 * lambda * lambda).sqrt() - theta)
}

/// Dividend yield in the `psi` parameterization at upturn probability `p`.
pub fn dividend_yield_psi(sigma: f64, theta: f64, psi: f64, p: f64) -> Result<f64> {
    Ok(dividend_yield(sigma, theta, lambda_from_psi(psi, p)?))
}

/// Parameters of the stock-plus-optimal-overlay process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnhancedProcess {
    pub mu_enh: f64,
    pub sigma_enh: f64,
    pub n_opt: f64,
    pub theta_opt: f64,
    pub d_y: f64,
}

pub fn enhance(m: &MarketParams, t: &InformedTraderSpec) -> Result<EnhancedProcess> {
    let theta = m.require_positive_theta()?;
    let l = t.lambda;
    let ratio = 2.0 * l / theta;
    Ok(EnhancedProcess {
        mu_enh: m.mu + 4.0 * m.sigma * l * l / theta,
        sigma_enh: m.sigma * (1.0 + ratio * ratio).sqrt(),
        n_opt: ratio,
        theta_opt: (theta * theta + 4.0 * l * l).sqrt(),
        d_y: dividend_yield(m.sigma, theta, l),
    })
}

/// KSRF first-order step for the informed trader: stock factors at
/// `(mu, sigma, p)` and risk-neutral probability
/// `p - theta_info sqrt(p (1 - p) dt)` with `theta_info = theta + D_y / sigma`.
///
/// Under this `q` the stock grows at `r - D_y` per unit time, so backward
/// induction at rate `r` converges to the dividend-yield Black-Scholes
/// price. For `lambda >= 0`, `theta_info` is the optimal Sharpe ratio.
pub fn enhanced_lattice_step(m: &MarketParams, t: &InformedTraderSpec, p: f64) -> Result<StepParams> {
    let e = enhance(m, t)?;
    let theta_info = m.theta() + e.d_y / m.sigma;
    let step = first_order_step(m.mu, m.sigma, p, theta_info, m.dt)?;
    debug_assert_eq!(step.q, first_order_q(p, theta_info, m.dt));
    Ok(step)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn market(mu: f64, sigma: f64, r: f64, dt: f64) -> MarketParams {
        MarketParams::new(mu, sigma, r, 0.5).unwrap().with_dt(dt).unwrap()
    }

    #[test]
    fn entropy_values() {
        assert!((shannon_entropy(0.5).unwrap() - LN_2).abs() < 1e-15);
        assert_eq!(shannon_entropy(0.0).unwrap(), 0.0);
        assert_eq!(shannon_entropy(1.0).unwrap(), 0.0);
        assert!(shannon_entropy(1e-300).unwrap() < 1e-290);
        assert!((shannon_entropy(0.9).unwrap() - 0.325_082_973_391_448).abs() < 1e-12);
        assert!(shannon_entropy(1.5).is_err());
    }

    #[test]
    fn kl_values() {
        assert_eq!(kl_to_fair(0.5).unwrap(), 0.0);
        assert!((kl_to_fair(0.75).unwrap() - 0.130_812_035_941_137).abs() < 1e-12);
        assert!((kl_to_fair(1.0 - 1e-12).unwrap() - LN_2).abs() < 1e-9);
        assert!(kl_to_fair(0.0).is_err());
    }

    #[test]
    fn information_level_values() {
        assert_eq!(information_level(0.5).unwrap(), 0.0);
        assert!((information_level(0.75).unwrap() - 0.232_622_906_8).abs() < 1e-9);
        assert!((information_level(0.25).unwrap() + information_level(0.75).unwrap()).abs() < 1e-15);
        assert!(information_level(1.0 - 1e-12).unwrap() > 1e3);
    }

    #[test]
    fn noisy_trader_has_no_edge() {
        let m = market(0.08, 0.2, 0.02, 1.0 / 252.0);
        let mo = forward_strategy_moments(&m, 0.6, 0.5, 3.0).unwrap();
        assert_eq!(mo.mean, 0.0);
        assert!((mo.variance - 9.0 * 0.04 / 252.0).abs() < 1e-15);
    }

    #[test]
    fn forward_mean_equals_branch_enumeration() {
        let m = market(0.08, 0.2, 0.02, 1.0 / 252.0);
        for (p, g, n) in [(0.6, 0.55, 2.0), (0.3, 0.8, 0.7), (0.5, 0.4, 5.0)] {
            let b = overlay_branches(&m, p, g, n).unwrap();
            let mean: f64 = b.iter().map(|x| x.probability * x.forward_payoff).sum();
            let mo = forward_strategy_moments(&m, p, g, n).unwrap();
            assert!((mean - mo.mean).abs() < 1e-15, "{mean} vs {}", mo.mean);
        }
    }

    #[test]
    fn optimal_overlay_moments() {
        let (lambda, p, n) = (0.3, 0.6, 2.0);
        for dt in [1e-2, 1e-3, 1e-4] {
            let m = market(0.08, 0.2, 0.02, dt);
            let g = guess_probability(lambda, p, dt).unwrap();
            let mo = forward_strategy_moments(&m, p, g, n).unwrap();
            let c = 2.0 * m.sigma * m.sigma.max(m.theta().abs());
            assert!((mo.mean - 2.0 * n * lambda * m.sigma * dt).abs() <= c * dt.powf(1.5));
            assert!((mo.variance - n * n * m.sigma * m.sigma * dt).abs() <= c * dt.powf(1.5));
        }
    }

    #[test]
    fn information_ratio_values() {
        assert_eq!(information_ratio(0.0), 0.0);
        assert!((information_ratio(0.0035) - 0.007).abs() < 1e-18);
        assert_eq!(information_ratio(-0.1), -0.2);
    }

    #[test]
    fn enhance_noisy_is_identity() {
        let m = market(0.06, 0.2, 0.02, 0.01);
        let e = enhance(&m, &InformedTraderSpec::new(0.0).unwrap()).unwrap();
        assert_eq!((e.n_opt, e.mu_enh, e.sigma_enh, e.d_y), (0.0, m.mu, m.sigma, 0.0));
        assert!((e.theta_opt - m.theta()).abs() < 1e-15);
    }

    #[test]
    fn enhance_example() {
        // sigma = 0.2, theta = 0.5
        let m = market(0.12, 0.2, 0.02, 0.01);
        let e = enhance(&m, &InformedTraderSpec::new(0.5).unwrap()).unwrap();
        assert!((e.theta_opt - 1.118_033_988_749_895).abs() < 1e-12);
        assert!((e.d_y - 0.123_606_797_749_979).abs() < 1e-12);
        assert!((e.n_opt - 2.0).abs() < 1e-12);
    }

    #[test]
    fn enhanced_sharpe_identity() {
        // lambda = 0.3, theta = 0.4, sigma = 0.25
        let m = market(0.12, 0.25, 0.02, 0.01);
        let e = enhance(&m, &InformedTraderSpec::new(0.3).unwrap()).unwrap();
        assert!(((e.mu_enh - m.r) / e.sigma_enh - e.theta_opt).abs() < 1e-12);
    }

    #[test]
    fn enhance_requires_premium() {
        let m = market(0.01, 0.2, 0.02, 0.01);
        assert!(matches!(
            enhance(&m, &InformedTraderSpec::new(0.1).unwrap()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn enhanced_step_examples() {
        let m = market(0.12, 0.2, 0.02, 0.01);
        let noisy = enhanced_lattice_step(&m, &InformedTraderSpec::new(0.0).unwrap(), 0.4).unwrap();
        let plain = crate::lattice::ksrf_step(&m, 0.4, crate::lattice::KsrfForm::FirstOrder).unwrap();
        assert_eq!(noisy, plain);
        let s = enhanced_lattice_step(&m, &InformedTraderSpec::new(0.5).unwrap(), 0.5).unwrap();
        assert!((s.q - 0.444_098_300_562_505).abs() < 1e-12);
    }

    #[test]
    fn enhanced_step_grows_at_rate_less_yield() {
        let m = market(0.12, 0.2, 0.02, 1.0 / 252.0);
        for lambda in [-0.3, 0.1, 0.4] {
            let t = InformedTraderSpec::new(lambda).unwrap();
            let s = enhanced_lattice_step(&m, &t, 0.45).unwrap();
            let e = enhance(&m, &t).unwrap();
            let growth = s.q * s.gross_up() + (1.0 - s.q) * s.gross_down();
            assert!((growth - 1.0 - (m.r - e.d_y) * m.dt).abs() < 1e-15);
        }
    }

    #[test]
    fn psi_form_matches_lambda_form_at_half() {
        let (sigma, theta, lambda) = (0.2, 0.5, 0.3);
        let via_psi = dividend_yield_psi(sigma, theta, 2.0 * lambda, 0.5).unwrap();
        assert!((via_psi - dividend_yield(sigma, theta, lambda)).abs() < 1e-15);
    }

    #[test]
    fn yield_monotone_and_odd() {
        let (sigma, theta) = (0.2, 0.4);
        let mut prev = 0.0;
        for i in 1..=100 {
            let l = i as f64 / 100.0;
            let d = dividend_yield(sigma, theta, l);
            assert!(d > prev);
            assert_eq!(dividend_yield(sigma, theta, -l), -d);
            prev = d;
        }
        assert_eq!(dividend_yield(sigma, theta, 0.0), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn entropy_bounded(p in 0.0f64..=1.0) {
            let h = shannon_entropy(p).unwrap();
            proptest::prop_assert!((0.0..=LN_2 + 1e-15).contains(&h));
        }

        #[test]
        fn kl_symmetric(p in 1e-6f64..(1.0 - 1e-6)) {
            let a = kl_to_fair(p).unwrap();
            let b = kl_to_fair(1.0 - p).unwrap();
            proptest::prop_assert!((-1e-16..LN_2).contains(&a));
            proptest::prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn information_level_increasing(a in 0.5f64..0.999, b in 0.5f64..0.999) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            proptest::prop_assume!(hi - lo > 1e-9);
            proptest::prop_assert!(information_level(lo).unwrap() < information_level(hi).unwrap());
        }

        #[test]
        fn optimal_sharpe_dominates(theta in 0.01f64..2.0, lambda in -1.0f64..1.0) {
            let m = MarketParams::new(0.02 + theta * 0.2, 0.2, 0.02, 0.5).unwrap();
            let e = enhance(&m, &InformedTraderSpec::new(lambda).unwrap()).unwrap();
            proptest::prop_assert!(e.theta_opt >= m.theta() - 1e-15);
            proptest::prop_assert!((e.d_y < 0.0) == (lambda < 0.0));
        }

        #[test]
        fn guess_probability_antisymmetric(l in -0.5f64..0.5, p in 0.1f64..0.9) {
            let dt = 1.0 / 252.0;
            let a = guess_probability(l, p, dt).unwrap();
            let b = guess_probability(-l, p, dt).unwrap();
            proptest::prop_assert!((a + b - 1.0).abs() < 1e-15);
        }
    }
}
