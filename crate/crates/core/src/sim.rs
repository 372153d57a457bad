//! Seeded Monte Carlo paths for a pair of linear policies.
//!
//! Each path owns a ChaCha8 stream: the key comes from the run seed and the
//! stream id is the path index, so paths are independent of thread count and
//! scheduling. The first normal of a stream draws `x0` (when it is not
//! fixed), the following ones the price shocks `eps_1, eps_2, ..`. In
//! antithetic mode paths `2k` and `2k + 1` share stream `k` and the same
//! `x0`, with the shocks negated on the odd path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::update_belief;
use crate::model::{GaussianBelief, TraderStage};
use crate::policies::{ArbPolicy, TraderPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimInit {
    /// Fixed initial position; drawn from `N(mu0, sigma0^2)` when absent.
    pub x0: Option<f64>,
    pub y0: f64,
    pub mu0: f64,
    pub sigma0: f64,
    pub lambda: f64,
    pub sigma_eps: f64,
    pub p0: f64,
}

impl SimInit {
    pub fn new(lambda: f64, sigma_eps: f64, sigma0: f64) -> Self {
        Self {
            x0: None,
            y0: 0.0,
            mu0: 0.0,
            sigma0,
            lambda,
            sigma_eps,
            p0: 0.0,
        }
    }

    /// `lambda = sigma_eps = 1`, so positions are in scaled units.
    pub fn dimensionless(rho0: f64) -> Self {
        Self::new(1.0, 1.0, rho0)
    }

    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = Some(x0);
        self
    }

    /// Scaled spread of the arbitrageur's prior; infinite without noise.
    pub fn rho0(&self) -> f64 {
        self.lambda * self.sigma0 / self.sigma_eps
    }
}

/// One simulated path, indexed by `t = 0..=T + T_a`.
///
/// Trades and price moves at `t = 0` are zero; `*_profit_increment[t]` is
/// the gain on the position held from `t` to `t + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub path: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
    pub p: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub delta_p: Vec<f64>,
    pub trader_profit_increment: Vec<f64>,
    pub arb_profit_increment: Vec<f64>,
    /// `eps_1..eps_{T+T_a}`.
    pub eps: Vec<f64>,
}

impl PathRecord {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn trader_profit(&self) -> f64 {
        self.trader_profit_increment.iter().sum()
    }

    pub fn arb_profit(&self) -> f64 {
        self.arb_profit_increment.iter().sum()
    }
}

struct Stepper<'a> {
    trader: &'a TraderPolicy,
    arb: &'a ArbPolicy,
    lambda: f64,
    x: f64,
    y: f64,
    belief: GaussianBelief,
    p: f64,
}

struct Step {
    u: f64,
    v: f64,
    dp: f64,
}

impl Stepper<'_> {
    fn step(&mut self, t: usize, eps: f64) -> Step {
        let stage = self.trader.stages.get(t - 1).copied().unwrap_or(TraderStage::HOLD);
        let arb = self.arb.stages[t - 1];
        let mu = self.belief.mu;
        let u = stage.trade(self.x, self.y, mu);
        let v = arb.trade(self.y, mu);
        let dp = self.lambda * (u + v) + eps;
        self.belief = update_belief(&self.belief, self.y, v, dp / self.lambda, &stage);
        self.x += u;
        self.y += v;
        self.p += dp;
        Step { u, v, dp }
    }
}

struct Draws {
    x0: f64,
    eps: Vec<f64>,
}

fn draws(init: &SimInit, periods: usize, seed: u64, path: usize, antithetic: bool) -> Draws {
    let (stream, sign) = if antithetic {
        (path / 2, if path % 2 == 1 { -1.0 } else { 1.0 })
    } else {
        (path, 1.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    let z0: f64 = rng.sample(StandardNormal);
    let eps = (0..periods)
        .map(|_| sign * init.sigma_eps * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Draws {
        x0: init.x0.unwrap_or(init.mu0 + init.sigma0 * z0),
        eps,
    }
}

fn stepper<'a>(trader: &'a TraderPolicy, arb: &'a ArbPolicy, init: &SimInit, x0: f64) -> Stepper<'a> {
    Stepper {
        trader,
        arb,
        lambda: init.lambda,
        x: x0,
        y: init.y0,
        belief: GaussianBelief::new(init.mu0, init.rho0()),
        p: init.p0,
    }
}

fn simulate_path(
    trader: &TraderPolicy,
    arb: &ArbPolicy,
    init: &SimInit,
    seed: u64,
    path: usize,
    antithetic: bool,
) -> PathRecord {
    let periods = arb.stages.len();
    let d = draws(init, periods, seed, path, antithetic);
    let mut s = stepper(trader, arb, init, d.x0);
    let n = periods + 1;
    let mut rec = PathRecord {
        path,
        x: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        mu: Vec::with_capacity(n),
        rho: Vec::with_capacity(n),
        p: Vec::with_capacity(n),
        u: vec![0.0; n],
        v: vec![0.0; n],
        delta_p: vec![0.0; n],
        trader_profit_increment: vec![0.0; n],
        arb_profit_increment: vec![0.0; n],
        eps: d.eps.clone(),
    };
    let push_state = |rec: &mut PathRecord, s: &Stepper| {
        rec.x.push(s.x);
        rec.y.push(s.y);
        rec.mu.push(s.belief.mu);
        rec.rho.push(s.belief.rho);
        rec.p.push(s.p);
    };
    push_state(&mut rec, &s);
    for t in 1..n {
        let (x_prev, y_prev) = (s.x, s.y);
        let step = s.step(t, d.eps[t - 1]);
        rec.u[t] = step.u;
        rec.v[t] = step.v;
        rec.delta_p[t] = step.dp;
        rec.trader_profit_increment[t - 1] = step.dp * x_prev;
        rec.arb_profit_increment[t - 1] = step.dp * y_prev;
        push_state(&mut rec, &s);
    }
    rec
}

/// Full path records, in path order.
pub fn simulate(
    trader: &TraderPolicy,
    arb: &ArbPolicy,
    init: &SimInit,
    n_paths: usize,
    seed: u64,
    antithetic: bool,
) -> Vec<PathRecord> {
    (0..n_paths)
        .into_par_iter()
        .map(|i| simulate_path(trader, arb, init, seed, i, antithetic))
        .collect()
}

/// Total `(trader, arbitrageur)` profit per path, in path order.
pub fn simulate_profits(
    trader: &TraderPolicy,
    arb: &ArbPolicy,
    init: &SimInit,
    n_paths: usize,
    seed: u64,
    antithetic: bool,
) -> Vec<(f64, f64)> {
    let periods = arb.stages.len();
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let d = draws(init, periods, seed, i, antithetic);
            let mut s = stepper(trader, arb, init, d.x0);
            let (mut pt, mut pa) = (0.0, 0.0);
            for t in 1..=periods {
                let (x_prev, y_prev) = (s.x, s.y);
                let dp = s.step(t, d.eps[t - 1]).dp;
                pt += dp * x_prev;
                pa += dp * y_prev;
            }
            (pt, pa)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueEstimate {
    pub trader: Estimate,
    pub arb: Estimate,
    pub n_paths: usize,
}

fn estimate(samples: impl Iterator<Item = f64> + Clone) -> Estimate {
    let n = samples.clone().count() as f64;
    let mean = samples.clone().sum::<f64>() / n;
    let var = samples.map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    Estimate {
        mean,
        std_error: (var / n).sqrt(),
    }
}

/// Sample mean and standard error of each player's total profit. In
/// antithetic mode the error is computed over pair averages.
pub fn estimate_value(
    trader: &TraderPolicy,
    arb: &ArbPolicy,
    init: &SimInit,
    n_paths: usize,
    seed: u64,
    antithetic: bool,
) -> ValueEstimate {
    assert!(n_paths >= 2, "need at least two paths");
    assert!(
        !antithetic || n_paths.is_multiple_of(2),
        "antithetic runs need an even path count"
    );
    let profits = simulate_profits(trader, arb, init, n_paths, seed, antithetic);
    let units: Vec<(f64, f64)> = if antithetic {
        profits
            .chunks_exact(2)
            .map(|c| (0.5 * (c[0].0 + c[1].0), 0.5 * (c[0].1 + c[1].1)))
            .collect()
    } else {
        profits
    };
    ValueEstimate {
        trader: estimate(units.iter().map(|p| p.0)),
        arb: estimate(units.iter().map(|p| p.1)),
        n_paths,
    }
}
