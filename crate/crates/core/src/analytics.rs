//! Normalized profit metrics and trade decompositions.
//!
//! Under linear policies every state variable is a linear function of the
//! standardized shocks `z = (x0, eps_1, .., eps_T)`, with `x0 ~ N(0, rho0^2)`
//! and unit-variance `eps`. The trader's profit is then a quadratic form in
//! `z`, which gives its mean and variance exactly.

use serde::Serialize;

use crate::belief::{gain, update_rho};
use crate::model::{ArbValueCoeffs, TraderValueCoeffs};
use crate::policies::{evaluate_pair, ArbPolicy, TraderPolicy};
use crate::sim::{simulate_profits, SimInit};

pub fn normalized_trader_profit(c0: &TraderValueCoeffs, rho0: f64) -> f64 {
    -0.5 * c0.c_xx + c0.c_0 / (rho0 * rho0)
}

pub fn normalized_arb_profit(d0: &ArbValueCoeffs, rho0: f64) -> f64 {
    d0.d_0 / (rho0 * rho0)
}

/// Normalized profit of equipartition with no arbitrageur present.
pub fn equipartition_alone(horizon: usize) -> f64 {
    -((horizon + 1) as f64) / (2.0 * horizon as f64)
}

pub fn spillover(u_bar: f64, v_bar: f64, horizon: usize) -> f64 {
    equipartition_alone(horizon) - (u_bar + v_bar)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfitSummary {
    pub u_bar: f64,
    pub v_bar: f64,
    pub spillover: f64,
    pub var_u: f64,
}

pub fn summarize(trader: &TraderPolicy, arb: &ArbPolicy, rho0: f64) -> ProfitSummary {
    let values = evaluate_pair(trader, arb, rho0);
    ProfitSummary {
        u_bar: values.u_bar,
        v_bar: values.v_bar,
        spillover: spillover(values.u_bar, values.v_bar, trader.horizon()),
        var_u: profit_variance(trader, arb, rho0),
    }
}

/// Loadings of `x_t, y_t, mu_t` on `z` for `t = 0..=T`, plus the loading of
/// each price move `dp_t` for `t = 1..=T`.
struct Loadings {
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    mu: Vec<Vec<f64>>,
    dp: Vec<Vec<f64>>,
}

fn axpy(out: &mut [f64], k: f64, v: &[f64]) {
    for (o, vi) in out.iter_mut().zip(v) {
        *o += k * vi;
    }
}

fn loadings(trader: &TraderPolicy, arb: &ArbPolicy, rho0: f64) -> Loadings {
    let horizon = trader.horizon();
    let n = horizon + 1;
    let mut x = vec![0.0; n];
    x[0] = 1.0;
    let mut y = vec![0.0; n];
    let mut mu = vec![0.0; n];
    let mut rho = rho0;
    let mut out = Loadings {
        x: vec![x.clone()],
        y: vec![y.clone()],
        mu: vec![mu.clone()],
        dp: Vec::with_capacity(horizon),
    };
    for t in 1..=horizon {
        let a = trader.stages[t - 1];
        let b = arb.stages[t - 1];
        let mut u = vec![0.0; n];
        axpy(&mut u, a.a_x, &x);
        axpy(&mut u, a.a_y, &y);
        axpy(&mut u, a.a_mu, &mu);
        let mut v = vec![0.0; n];
        axpy(&mut v, b.b_y, &y);
        axpy(&mut v, b.b_mu, &mu);

        let mut dp = u.clone();
        axpy(&mut dp, 1.0, &v);
        dp[t] += 1.0;

        // predictable part of the trade, then the filtered innovation
        let mut next_mu = vec![0.0; n];
        axpy(&mut next_mu, a.a_y, &y);
        axpy(&mut next_mu, a.a_mu, &mu);
        if rho == 0.0 {
            axpy(&mut next_mu, 1.0 + a.a_x, &mu);
        } else {
            let g = gain(rho, a.a_x);
            let mut innovation = dp.clone();
            axpy(&mut innovation, -1.0, &v);
            axpy(&mut innovation, -a.a_y, &y);
            axpy(&mut innovation, -a.a_mu, &mu);
            axpy(&mut next_mu, g / (rho * rho), &mu);
            axpy(&mut next_mu, g * a.a_x, &innovation);
        }

        axpy(&mut x, 1.0, &u);
        axpy(&mut y, 1.0, &v);
        mu = next_mu;
        rho = update_rho(rho, a.a_x);
        out.x.push(x.clone());
        out.y.push(y.clone());
        out.mu.push(mu.clone());
        out.dp.push(dp);
    }
    out
}

/// Normalized variance of the trader's profit; equals one for immediate
/// liquidation.
pub fn profit_variance(trader: &TraderPolicy, arb: &ArbPolicy, rho0: f64) -> f64 {
    let l = loadings(trader, arb, rho0);
    let n = trader.horizon() + 1;
    let mut a = vec![vec![0.0; n]; n];
    for (dp, x) in l.dp.iter().zip(&l.x) {
        for i in 0..n {
            for j in 0..n {
                a[i][j] += 0.5 * (dp[i] * x[j] + x[i] * dp[j]);
            }
        }
    }
    let r2 = rho0 * rho0;
    let sigma = |j: usize| if j == 0 { r2 } else { 1.0 };
    // tr((A S)^2) = sum_ij A_ij S_j A_ji S_i
    let tr: f64 = a
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, aij)| (i, j, aij)))
        .map(|(i, j, aij)| aij * sigma(j) * a[j][i] * sigma(i))
        .sum();
    2.0 * tr / (2.0 * r2 * r2 + r2)
}

/// Deterministic and noise-driven components of the state for `t = 0..=T`.
///
/// Noise loadings are rows of length `t` on `eps_1..eps_t`, in position
/// units per unit of price noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    pub alpha_x0: Vec<f64>,
    pub beta_x0: Vec<f64>,
    pub gamma_x0: Vec<f64>,
    pub alpha_eps: Vec<Vec<f64>>,
    pub beta_eps: Vec<Vec<f64>>,
    pub gamma_eps: Vec<Vec<f64>>,
}

pub fn decompose(trader: &TraderPolicy, arb: &ArbPolicy, rho0: f64) -> Decomposition {
    let l = loadings(trader, arb, rho0);
    let head = |m: &[Vec<f64>]| m.iter().map(|r| r[0]).collect::<Vec<_>>();
    let tails = |m: &[Vec<f64>]| m.iter().enumerate().map(|(t, r)| r[1..=t].to_vec()).collect::<Vec<_>>();
    Decomposition {
        alpha_x0: head(&l.x),
        beta_x0: head(&l.y),
        gamma_x0: head(&l.mu),
        alpha_eps: tails(&l.x),
        beta_eps: tails(&l.y),
        gamma_eps: tails(&l.mu),
    }
}

pub fn relative_uncertainty(rho_path: &[f64], rho0: f64) -> Vec<f64> {
    rho_path.iter().map(|r| r / rho0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdfPoint {
    pub profit: f64,
    pub probability: f64,
}

/// Empirical distribution of the trader's normalized profit.
pub fn profit_cdf(trader: &TraderPolicy, arb: &ArbPolicy, rho0: f64, n_paths: usize, seed: u64) -> Vec<CdfPoint> {
    let init = SimInit::dimensionless(rho0);
    let mut profits: Vec<f64> = simulate_profits(trader, arb, &init, n_paths, seed, false)
        .into_iter()
        .map(|(p, _)| p / (rho0 * rho0))
        .collect();
    profits.sort_by(f64::total_cmp);
    let n = profits.len() as f64;
    profits
        .into_iter()
        .enumerate()
        .map(|(i, profit)| CdfPoint {
            profit,
            probability: (i + 1) as f64 / n,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TraderStage;
    use crate::policies::{arb_best_response_policy, equipartition, minimum_revelation, zero_arb};
    use proptest::prelude::*;

    #[test]
    fn spillover_arithmetic() {
        assert!((spillover(-0.6, 0.02, 20) - 0.055).abs() < 1e-15);
        assert_eq!(equipartition_alone(20), -0.525);
    }

    #[test]
    fn immediate_liquidation_has_unit_variance() {
        for rho0 in [0.1, 1.0, 30.0] {
            let mut stages = vec![TraderStage::LIQUIDATE];
            stages.extend(vec![TraderStage::HOLD; 4]);
            let mut t = TraderPolicy::custom(stages);
            t.stages[4] = TraderStage::LIQUIDATE;
            let v = profit_variance(&t, &zero_arb(5, 1), rho0);
            assert!((v - 1.0).abs() < 1e-13, "{v}");
        }
    }

    /// Direct summation for equipartition without an arbitrageur: profit is
    /// `-k x0^2 + x0 * sum_t eps_t (T - t + 1) / T`.
    #[test]
    fn equipartition_alone_variance_by_summation() {
        let horizon = 20;
        for rho0 in [0.05, 1.0, 12.0] {
            let r2 = rho0 * rho0;
            let k = -equipartition_alone(horizon);
            let s: f64 = (1..=horizon)
                .map(|t| ((horizon - t + 1) as f64 / horizon as f64).powi(2))
                .sum();
            let want = (2.0 * k * k * r2 * r2 + s * r2) / (2.0 * r2 * r2 + r2);
            let got = profit_variance(&equipartition(horizon), &zero_arb(horizon, 1), rho0);
            assert!((got - want).abs() < 1e-12 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn deterministic_schedules() {
        let horizon = 20;
        for (trader, rho0) in [(equipartition(horizon), 3.0), (minimum_revelation(horizon), 0.2)] {
            let (arb, _) = arb_best_response_policy(&trader, rho0, 1).unwrap();
            let dec = decompose(&trader, &arb, rho0);
            assert_eq!(dec.alpha_x0.len(), horizon + 1);
            for (x, want) in dec.alpha_x0.iter().zip(trader.noiseless_path()) {
                assert!((x - want).abs() < 1e-14);
            }
            assert!(dec.alpha_eps.iter().flatten().all(|&v| v == 0.0));
            assert_eq!(*dec.alpha_x0.last().unwrap(), 0.0);
        }
    }

    #[test]
    fn minimum_revelation_hides_until_the_end() {
        let trader = minimum_revelation(20);
        let rho = crate::equilibrium::forward_rho(7.0, &trader.stages);
        let rel = relative_uncertainty(&rho[..20], 7.0);
        assert_eq!(rel[0], 1.0);
        assert!(rel[..=18].iter().all(|&r| r == 1.0));
    }

    #[test]
    fn cdf_is_monotone() {
        let cdf = profit_cdf(&equipartition(5), &zero_arb(5, 1), 2.0, 500, 42);
        assert_eq!(cdf.len(), 500);
        assert!(cdf
            .windows(2)
            .all(|w| w[0].profit <= w[1].profit && w[0].probability < w[1].probability));
        assert_eq!(cdf.last().unwrap().probability, 1.0);
        assert!(cdf[0].probability > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn quadratic_form_mean_matches_backup(horizon in 2usize..10, log_rho in -1.5f64..2.5) {
            let rho0 = 10f64.powf(log_rho);
            let trader = equipartition(horizon);
            let (arb, _) = arb_best_response_policy(&trader, rho0, 1).unwrap();
            let l = loadings(&trader, &arb, rho0);
            let mut mean = 0.0;
            for (dp, x) in l.dp.iter().zip(&l.x) {
                mean += dp[0] * x[0] * rho0 * rho0;
                for j in 1..dp.len() {
                    mean += dp[j] * x[j];
                }
            }
            let u = evaluate_pair(&trader, &arb, rho0).u_bar;
            prop_assert!((mean / (rho0 * rho0) - u).abs() < 1e-10 * (1.0 + u.abs()));
        }
    }
}
