//! Gaussian filter for the arbitrageur's belief about the trader's position.
//!
//! Positions may be given in any unit as long as `delta_p_over_lambda`, `y`,
//! `v` and `mu` share it; `rho` is always the dimensionless spread.

use thiserror::Error;

use crate::model::{GaussianBelief, TraderStage};

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum BeliefError {
    #[error("degenerate filter: prior spread is zero (a_x = {a_x})")]
    DegenerateFilter { a_x: f64 },
}

/// Filter gain `(1 + a_x) / (1/rho^2 + a_x^2)`.
pub fn gain(rho_prev: f64, a_x: f64) -> f64 {
    if rho_prev == 0.0 {
        return 0.0;
    }
    (1.0 + a_x) / (1.0 / (rho_prev * rho_prev) + a_x * a_x)
}

pub fn update_rho(rho_prev: f64, a_x: f64) -> f64 {
    if rho_prev == 0.0 || a_x == -1.0 {
        return 0.0;
    }
    (1.0 + a_x).abs() / (1.0 / (rho_prev * rho_prev) + a_x * a_x).sqrt()
}

/// Posterior mean of the trader's position after observing one price move.
///
/// `delta_p_over_lambda` is the observed `Δp / λ`; `v` is the arbitrageur's
/// own trade, which it subtracts before filtering.
pub fn update_mean(
    belief_prev: &GaussianBelief,
    y_prev: f64,
    v: f64,
    delta_p_over_lambda: f64,
    assumed: &TraderStage,
) -> Result<f64, BeliefError> {
    let GaussianBelief { mu, rho } = *belief_prev;
    if rho == 0.0 {
        return Err(BeliefError::DegenerateFilter { a_x: assumed.a_x });
    }
    let predictable = assumed.a_y * y_prev + assumed.a_mu * mu;
    let innovation = delta_p_over_lambda - predictable - v;
    let g = gain(rho, assumed.a_x);
    Ok(predictable + g * (mu / (rho * rho) + innovation * assumed.a_x))
}

/// Like [`update_mean`] but falls back to the full-revelation limit
/// `a_y y + (1 + a_x + a_mu) mu` when the prior spread is zero.
pub fn update_mean_with_limit(
    belief_prev: &GaussianBelief,
    y_prev: f64,
    v: f64,
    delta_p_over_lambda: f64,
    assumed: &TraderStage,
) -> f64 {
    match update_mean(belief_prev, y_prev, v, delta_p_over_lambda, assumed) {
        Ok(mu) => mu,
        Err(BeliefError::DegenerateFilter { .. }) => {
            assumed.a_y * y_prev + (1.0 + assumed.a_x + assumed.a_mu) * belief_prev.mu
        }
    }
}

/// One-step update of a belief under an assumed stage.
pub fn update_belief(
    belief_prev: &GaussianBelief,
    y_prev: f64,
    v: f64,
    delta_p_over_lambda: f64,
    assumed: &TraderStage,
) -> GaussianBelief {
    GaussianBelief {
        mu: update_mean_with_limit(belief_prev, y_prev, v, delta_p_over_lambda, assumed),
        rho: update_rho(belief_prev.rho, assumed.a_x),
    }
}

/// Moments of the next posterior mean, in dimensionless units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefMoments {
    pub gamma: f64,
    /// Given the trader's position and actual trade `u`.
    pub mean_trader_view: f64,
    pub var_trader_view: f64,
    /// Given only `(y, mu)`, with the trade drawn from the assumed policy.
    pub mean_arb_view: f64,
    pub var_arb_view: f64,
}

/// Conditional moments of `mu_t` before the price move is observed.
///
/// The trader-view mean needs the state it conditions on, so this takes
/// `y_prev` and the realized trade `u` next to the prior belief.
pub fn posterior_moments(belief_prev: &GaussianBelief, y_prev: f64, u: f64, stage: &TraderStage) -> BeliefMoments {
    let GaussianBelief { mu, rho } = *belief_prev;
    let a = stage.a_x;
    let predictable = stage.a_y * y_prev + stage.a_mu * mu;
    if rho == 0.0 {
        let m = predictable + (1.0 + a) * mu;
        return BeliefMoments {
            gamma: 0.0,
            mean_trader_view: m,
            var_trader_view: 0.0,
            mean_arb_view: m,
            var_arb_view: 0.0,
        };
    }
    let g = gain(rho, a);
    let ga = g * a;
    BeliefMoments {
        gamma: g,
        mean_trader_view: predictable + g * (mu / (rho * rho) + (u - predictable) * a),
        var_trader_view: ga * ga,
        mean_arb_view: predictable + (1.0 + a) * mu,
        var_arb_view: ga * ga * (1.0 + a * a * rho * rho),
    }
}
