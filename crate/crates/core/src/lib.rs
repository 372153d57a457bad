//! Linear-Gaussian equilibria of a trader liquidating a position against an
//! arbitrageur who infers it from price moves.
//!
//! Solver mathematics is dimensionless: positions are measured in units of
//! `sigma_eps / lambda` and the game depends only on the horizon `T` and the
//! relative volume `rho0`. See [`model`] for the conventions.

pub mod analytics;
pub mod belief;
pub mod equilibrium;
pub mod model;
pub mod policies;
pub mod sim;
pub mod stage;
