//! Domain types shared by every layer of the solver.
//!
//! All equilibrium mathematics runs in dimensionless units where positions
//! are measured in multiples of `sigma_eps / lambda`. In those units the
//! arbitrageur's belief spread is `rho`, price noise has unit variance and
//! the value-function coefficients carry no dimension. Currency values are
//! recovered only when a coefficient set is evaluated at a concrete state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("horizon T must be at least 2, got {0}")]
    HorizonTooShort(usize),
    #[error("price impact lambda must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error("noise volatility sigma_eps must be positive and finite, got {0}")]
    InvalidSigmaEps(f64),
    #[error("relative volume rho0 must be positive and finite, got {0}")]
    InvalidRho0(f64),
    #[error("arbitrageur must have at least one extra period, got {0}")]
    InvalidArbPeriods(usize),
}

fn default_arb_extra_periods() -> usize {
    1
}

/// Full parameterization of one game instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub lambda: f64,
    pub sigma_eps: f64,
    pub rho0: f64,
    #[serde(default = "default_arb_extra_periods")]
    pub arb_extra_periods: usize,
}

impl ModelParams {
    pub fn new(horizon: usize, lambda: f64, sigma_eps: f64, rho0: f64) -> Result<Self, ModelError> {
        let params = Self {
            horizon,
            lambda,
            sigma_eps,
            rho0,
            arb_extra_periods: 1,
        };
        params.validate()?;
        Ok(params)
    }

    /// Dimensionless parameterization with `lambda = sigma_eps = 1`.
    pub fn dimensionless(horizon: usize, rho0: f64) -> Result<Self, ModelError> {
        Self::new(horizon, 1.0, 1.0, rho0)
    }

    /// Builds the parameters from the prior standard deviation of the
    /// trader's position, `rho0 = lambda * sigma0 / sigma_eps`.
    pub fn with_sigma0(horizon: usize, lambda: f64, sigma_eps: f64, sigma0: f64) -> Result<Self, ModelError> {
        if !(sigma_eps.is_finite() && sigma_eps > 0.0) {
            return Err(ModelError::InvalidSigmaEps(sigma_eps));
        }
        Self::new(horizon, lambda, sigma_eps, lambda * sigma0 / sigma_eps)
    }

    pub fn with_arb_extra_periods(mut self, periods: usize) -> Result<Self, ModelError> {
        self.arb_extra_periods = periods;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.horizon < 2 {
            return Err(ModelError::HorizonTooShort(self.horizon));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(ModelError::InvalidLambda(self.lambda));
        }
        if !(self.sigma_eps.is_finite() && self.sigma_eps > 0.0) {
            return Err(ModelError::InvalidSigmaEps(self.sigma_eps));
        }
        if !(self.rho0.is_finite() && self.rho0 > 0.0) {
            return Err(ModelError::InvalidRho0(self.rho0));
        }
        if self.arb_extra_periods < 1 {
            return Err(ModelError::InvalidArbPeriods(self.arb_extra_periods));
        }
        Ok(())
    }

    /// Shares per dimensionless position unit.
    pub fn share_unit(&self) -> f64 {
        self.sigma_eps / self.lambda
    }

    pub fn sigma0(&self) -> f64 {
        self.rho0 * self.share_unit()
    }
}

/// Arbitrageur's Gaussian posterior over the trader's position.
///
/// `mu` is in shares, `rho` is the scaled standard deviation
/// `lambda * sigma / sigma_eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    pub mu: f64,
    pub rho: f64,
}

impl GaussianBelief {
    pub fn new(mu: f64, rho: f64) -> Self {
        debug_assert!(rho >= 0.0, "belief spread must be non-negative");
        Self { mu, rho }
    }

    /// Standard deviation of the belief in shares.
    pub fn sigma(&self, lambda: f64, sigma_eps: f64) -> f64 {
        self.rho * sigma_eps / lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub x: f64,
    pub y: f64,
    pub belief: GaussianBelief,
    pub p: f64,
    pub t: usize,
}

/// Trader decision rule for one period: `u = a_x x + a_y y + a_mu mu`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TraderStage {
    pub a_x: f64,
    pub a_y: f64,
    pub a_mu: f64,
}

impl TraderStage {
    pub const LIQUIDATE: TraderStage = TraderStage {
        a_x: -1.0,
        a_y: 0.0,
        a_mu: 0.0,
    };
    pub const HOLD: TraderStage = TraderStage {
        a_x: 0.0,
        a_y: 0.0,
        a_mu: 0.0,
    };

    pub fn new(a_x: f64, a_y: f64, a_mu: f64) -> Self {
        Self { a_x, a_y, a_mu }
    }

    /// Trades only on the trader's own position.
    pub fn position_only(a_x: f64) -> Self {
        Self {
            a_x,
            a_y: 0.0,
            a_mu: 0.0,
        }
    }

    pub fn trade(&self, x: f64, y: f64, mu: f64) -> f64 {
        self.a_x * x + self.a_y * y + self.a_mu * mu
    }
}

/// Arbitrageur decision rule for one period: `v = b_y y + b_mu mu`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ArbStage {
    pub b_y: f64,
    pub b_mu: f64,
}

impl ArbStage {
    /// Forced stage at the trader's deadline when the arbitrageur has one
    /// extra period.
    pub const AT_DEADLINE: ArbStage = ArbStage { b_y: -0.5, b_mu: 0.0 };
    pub const LIQUIDATE: ArbStage = ArbStage { b_y: -1.0, b_mu: 0.0 };
    pub const IDLE: ArbStage = ArbStage { b_y: 0.0, b_mu: 0.0 };

    pub fn new(b_y: f64, b_mu: f64) -> Self {
        Self { b_y, b_mu }
    }

    pub fn trade(&self, y: f64, mu: f64) -> f64 {
        self.b_y * y + self.b_mu * mu
    }
}

/// Coefficients of a trader-quadratic-decomposable value function.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TraderValueCoeffs {
    pub c_xx: f64,
    pub c_yy: f64,
    pub c_mumu: f64,
    pub c_xy: f64,
    pub c_xmu: f64,
    pub c_ymu: f64,
    pub c_0: f64,
}

impl TraderValueCoeffs {
    pub const ZERO: TraderValueCoeffs = TraderValueCoeffs {
        c_xx: 0.0,
        c_yy: 0.0,
        c_mumu: 0.0,
        c_xy: 0.0,
        c_xmu: 0.0,
        c_ymu: 0.0,
        c_0: 0.0,
    };

    /// Symmetric Hessian of the quadratic part over `(x, y, mu)`.
    pub fn hessian(&self) -> [[f64; 3]; 3] {
        [
            [self.c_xx, self.c_xy, self.c_xmu],
            [self.c_xy, self.c_yy, self.c_ymu],
            [self.c_xmu, self.c_ymu, self.c_mumu],
        ]
    }

    pub fn from_hessian(h: &[[f64; 3]; 3], c_0: f64) -> Self {
        Self {
            c_xx: h[0][0],
            c_yy: h[1][1],
            c_mumu: h[2][2],
            c_xy: 0.5 * (h[0][1] + h[1][0]),
            c_xmu: 0.5 * (h[0][2] + h[2][0]),
            c_ymu: 0.5 * (h[1][2] + h[2][1]),
            c_0,
        }
    }

    /// Value in dimensionless units (`lambda = sigma_eps = 1`).
    pub fn value_scaled(&self, x: f64, y: f64, mu: f64) -> f64 {
        -(0.5 * self.c_xx * x * x
            + 0.5 * self.c_yy * y * y
            + 0.5 * self.c_mumu * mu * mu
            + self.c_xy * x * y
            + self.c_xmu * x * mu
            + self.c_ymu * y * mu
            - self.c_0)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        [
            self.c_xx - other.c_xx,
            self.c_yy - other.c_yy,
            self.c_mumu - other.c_mumu,
            self.c_xy - other.c_xy,
            self.c_xmu - other.c_xmu,
            self.c_ymu - other.c_ymu,
            self.c_0 - other.c_0,
        ]
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()))
    }
}

/// Coefficients of an arbitrageur-quadratic-decomposable value function.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ArbValueCoeffs {
    pub d_yy: f64,
    pub d_mumu: f64,
    pub d_ymu: f64,
    pub d_0: f64,
}

impl ArbValueCoeffs {
    pub fn hessian(&self) -> [[f64; 2]; 2] {
        [[self.d_yy, self.d_ymu], [self.d_ymu, self.d_mumu]]
    }

    pub fn from_hessian(h: &[[f64; 2]; 2], d_0: f64) -> Self {
        Self {
            d_yy: h[0][0],
            d_mumu: h[1][1],
            d_ymu: 0.5 * (h[0][1] + h[1][0]),
            d_0,
        }
    }

    pub fn value_scaled(&self, y: f64, mu: f64) -> f64 {
        -(0.5 * self.d_yy * y * y + 0.5 * self.d_mumu * mu * mu + self.d_ymu * y * mu - self.d_0)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        [
            self.d_yy - other.d_yy,
            self.d_mumu - other.d_mumu,
            self.d_ymu - other.d_ymu,
            self.d_0 - other.d_0,
        ]
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()))
    }
}

/// Trader value in currency at a concrete state (positions in shares).
pub fn evaluate_trader_value(
    c: &TraderValueCoeffs,
    x: f64,
    y: f64,
    belief: &GaussianBelief,
    lambda: f64,
    sigma_eps: f64,
) -> f64 {
    let mu = belief.mu;
    -lambda
        * (0.5 * c.c_xx * x * x
            + 0.5 * c.c_yy * y * y
            + 0.5 * c.c_mumu * mu * mu
            + c.c_xy * x * y
            + c.c_xmu * x * mu
            + c.c_ymu * y * mu
            - sigma_eps * sigma_eps / (lambda * lambda) * c.c_0)
}

/// Arbitrageur value in currency at a concrete state.
pub fn evaluate_arb_value(d: &ArbValueCoeffs, y: f64, belief: &GaussianBelief, lambda: f64, sigma_eps: f64) -> f64 {
    let mu = belief.mu;
    -lambda
        * (0.5 * d.d_yy * y * y + 0.5 * d.d_mumu * mu * mu + d.d_ymu * y * mu
            - sigma_eps * sigma_eps / (lambda * lambda) * d.d_0)
}
