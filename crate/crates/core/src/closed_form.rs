//! Black-Scholes prices with a continuous dividend yield and a
//! finite-difference residual for the corresponding pricing PDE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which `d1` to use when a dividend yield is present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DyConvention {
    /// `d1 = [ln(S/K) + (r + sigma^2/2) tau] / (sigma sqrt(tau))`, the yield
    /// entering only through the `e^{-D_y tau}` spot discount.
    #[default]
    AsPrinted,
    /// `d1` with `r - D_y`, the solution of the pricing PDE.
    PdeConsistent,
}

impl DyConvention {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "as-printed" | "as_printed" => Some(Self::AsPrinted),
            "pde-consistent" | "pde_consistent" => Some(Self::PdeConsistent),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsmInputs {
    pub spot: f64,
    pub strike: f64,
    pub tau: f64,
    pub r: f64,
    pub sigma: f64,
    pub d_y: f64,
}

impl BsmInputs {
    pub fn new(spot: f64, strike: f64, tau: f64, r: f64, sigma: f64, d_y: f64) -> Result<Self> {
        Self {
            spot,
            strike,
            tau,
            r,
            sigma,
            d_y,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        for (what, v) in [
            ("spot", self.spot),
            ("strike", self.strike),
            ("tau", self.tau),
            ("sigma", self.sigma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(what, v, "> 0"));
            }
        }
        if !(self.r.is_finite() && self.d_y.is_finite()) {
            return Err(Error::NonFinite(format!("r = {}, d_y = {}", self.r, self.d_y)));
        }
        Ok(self)
    }

    fn d1_d2(&self, conv: DyConvention) -> (f64, f64) {
        let carry = match conv {
            DyConvention::AsPrinted => self.r,
            DyConvention::PdeConsistent => self.r - self.d_y,
        };
        let vol = self.sigma * self.tau.sqrt();
        let d1 = ((self.spot / self.strike).ln() + (carry + 0.5 * self.sigma * self.sigma) * self.tau) / vol;
        (d1, d1 - vol)
    }
}

/// Standard normal distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn bsm_call(inp: &BsmInputs, conv: DyConvention) -> Result<f64> {
    let inp = inp.validated()?;
    let (d1, d2) = inp.d1_d2(conv);
    Ok((-inp.d_y * inp.tau).exp() * norm_cdf(d1) * inp.spot
        - norm_cdf(d2) * inp.strike * (-inp.r * inp.tau).exp())
}

/// Put by parity with [`bsm_call`].
pub fn bsm_put(inp: &BsmInputs, conv: DyConvention) -> Result<f64> {
    let call = bsm_call(inp, conv)?;
    Ok(call - inp.spot * (-inp.d_y * inp.tau).exp() + inp.strike * (-inp.r * inp.tau).exp())
}

/// Accuracy order of the central difference stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdOrder {
    Second,
    Fourth,
    Sixth,
}

impl FdOrder {
    /// Half-width of the stencil and the weights `(first, second)` for
    /// offsets `1..=half` (first derivative, odd) and `0..=half` (second
    /// derivative, even).
    fn weights(&self) -> (&'static [f64], &'static [f64]) {
        match self {
            FdOrder::Second => (&[1.0 / 2.0], &[-2.0, 1.0]),
            FdOrder::Fourth => (&[8.0 / 12.0, -1.0 / 12.0], &[-30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0]),
            FdOrder::Sixth => (
                &[45.0 / 60.0, -9.0 / 60.0, 1.0 / 60.0],
                &[-490.0 / 180.0, 270.0 / 180.0, -27.0 / 180.0, 2.0 / 180.0],
            ),
        }
    }

    fn half_width(&self) -> usize {
        self.weights().0.len()
    }
}

/// Finite-difference steps: `h = h_rel * x` in space, `k` in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSteps {
    pub h_rel: f64,
    pub k: f64,
    pub order: FdOrder,
}

impl Default for FdSteps {
    fn default() -> Self {
        Self {
            h_rel: 1e-2,
            k: 1e-4,
            order: FdOrder::Sixth,
        }
    }
}

fn first_derivative(g: impl Fn(f64) -> f64, h: f64, order: FdOrder) -> f64 {
    let (w, _) = order.weights();
    w.iter()
        .enumerate()
        .map(|(i, c)| {
            let j = (i + 1) as f64;
            c * (g(j) - g(-j))
        })
        .sum::<f64>()
        / h
}

fn second_derivative(g: impl Fn(f64) -> f64, h: f64, order: FdOrder) -> f64 {
    let (_, w) = order.weights();
    let mut acc = w[0] * g(0.0);
    for (i, c) in w.iter().enumerate().skip(1) {
        let j = i as f64;
        acc += c * (g(j) + g(-j));
    }
    acc / (h * h)
}

/// Largest absolute value of
/// `f_t + (r - D_y) x f_x + sigma^2 x^2 f_xx / 2 - r f`
/// over `grid` points `(x, t)`, by central differences. `f(x, t)` is a price
/// at calendar time `t` for a claim maturing at `maturity`.
pub fn pde_residual(
    f: impl Fn(f64, f64) -> f64,
    r: f64,
    sigma: f64,
    d_y: f64,
    maturity: f64,
    grid: &[(f64, f64)],
    steps: FdSteps,
) -> Result<f64> {
    if !(steps.h_rel > 0.0 && steps.k > 0.0) {
        return Err(Error::Precondition("finite-difference steps must be positive".into()));
    }
    let reach = steps.order.half_width() as f64;
    let mut worst = 0.0f64;
    for &(x, t) in grid {
        let h = steps.h_rel * x;
        if !(x > 0.0 && x - reach * h > 0.0) {
            return Err(Error::domain("grid spot", x, "> stencil reach"));
        }
        if t + reach * steps.k >= maturity {
            return Err(Error::Precondition(format!(
                "stencil at t = {t} reaches maturity {maturity}"
            )));
        }
        let f0 = f(x, t);
        let ft = first_derivative(|j| f(x, t + j * steps.k), steps.k, steps.order);
        let fx = first_derivative(|j| f(x + j * h, t), h, steps.order);
        let fxx = second_derivative(|j| f(x + j * h, t), h, steps.order);
        let res = ft + (r - d_y) * x * fx + 0.5 * sigma * sigma * x * x * fxx - r * f0;
        if !res.is_finite() {
            return Err(Error::NonFinite(format!("PDE residual at ({x}, {t})")));
        }
        worst = worst.max(res.abs());
    }
    Ok(worst)
}
