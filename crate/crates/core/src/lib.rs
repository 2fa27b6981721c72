//! Option pricing for markets with informed traders: binomial trees that
//! keep the natural-world drift and upturn probability, the dividend-yield
//! Black-Scholes formula encoding a trader's information, time-varying
//! parameter engines and implied-parameter calibration.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod chain;
pub mod closed_form;
pub mod diffusion;
pub mod error;
pub mod informed;
pub mod lattice;
pub mod mean_info;
pub mod model;

pub use calibration::{
    fit_rho_then_dev, implied_p_from_lambda, implied_scalar, implied_surface, CalibrationProblem, Implied,
    QuoteRow, RhoDevFit, Target,
};
pub use closed_form::{bsm_call, bsm_put, norm_cdf, BsmInputs, DyConvention};
pub use diffusion::{feynman_kac_price, McConfig, McEstimate, ParamCurves};
pub use error::{Error, ErrorKind, Result};
pub use informed::{enhance, EnhancedProcess, InformedTraderSpec};
pub use lattice::{backward_induction, build_lattice, price_on_tree, KsrfForm, Lattice, StepParams, TreeModel};
pub use mean_info::{DevForm, MeanInfoSpec};
pub use model::{MarketParams, OptionSpec, Payoff, RowStatus, Surface, SurfaceRow, DAILY_DT};
