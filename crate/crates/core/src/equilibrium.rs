//! Damped fixed-point iteration on the belief-spread path.
//!
//! A guess of the trader's policy fixes the spreads `rho_1..rho_{T-1}`. A
//! backward pass then solves every stage for the spread it must produce,
//! and the resulting policy induces a new forward path. The two paths agree
//! at an equilibrium.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{gain, update_rho};
use crate::model::{ArbStage, ArbValueCoeffs, ModelError, ModelParams, TraderStage, TraderValueCoeffs};
use crate::stage::{
    arb_tail_stages, backup_arb_value, backup_arb_value_best_response, backup_trader_value, backup_trader_value_for,
    best_response_arb, no_deviation_audit, solve_stage, terminal_values, terminal_values_flexible, StageError,
    StageSolution,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    InvalidParams(#[from] ModelError),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        rho_path: Vec<f64>,
    },
    #[error("stage t={t} failed at iteration {iteration}: {source}")]
    Stage {
        t: usize,
        iteration: usize,
        source: StageError,
    },
    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Weight kept on the previous guess at each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant {
        gamma: f64,
    },
    /// Starts at `gamma` and moves geometrically toward `ceiling` by `factor`
    /// every time the residual grows.
    Adaptive {
        gamma: f64,
        ceiling: f64,
        factor: f64,
    },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Constant { gamma: 0.5 }
    }
}

impl StepSchedule {
    pub fn adaptive() -> Self {
        StepSchedule::Adaptive {
            gamma: 0.5,
            ceiling: 0.9,
            factor: 0.5,
        }
    }

    fn initial(&self) -> f64 {
        match *self {
            StepSchedule::Constant { gamma } | StepSchedule::Adaptive { gamma, .. } => gamma,
        }
    }

    fn next(&self, gamma: f64, residual_grew: bool) -> f64 {
        match *self {
            StepSchedule::Adaptive { ceiling, factor, .. } if residual_grew => ceiling - (ceiling - gamma) * factor,
            _ => gamma,
        }
    }

    fn validate(&self) -> Result<(), SolveError> {
        let in_range = |g: f64| (0.0..1.0).contains(&g);
        let ok = match *self {
            StepSchedule::Constant { gamma } => in_range(gamma),
            StepSchedule::Adaptive { gamma, ceiling, factor } => {
                in_range(gamma) && in_range(ceiling) && (0.0..1.0).contains(&factor)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(SolveError::InvalidOptions(format!(
                "step sizes must lie in [0, 1): {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub step: StepSchedule,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 500,
            step: StepSchedule::default(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(SolveError::InvalidOptions(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(SolveError::InvalidOptions("max_iters must be at least 1".into()));
        }
        self.step.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub params: ModelParams,
    /// Trader stages for `t = 1..=T`.
    pub trader_stages: Vec<TraderStage>,
    /// Arbitrageur stages for `t = 1..=T + T_a`.
    pub arb_stages: Vec<ArbStage>,
    /// `rho_0..rho_{T-1}`.
    pub rho_path: Vec<f64>,
    /// Value coefficients for `t = 0..T-1`.
    pub trader_values: Vec<TraderValueCoeffs>,
    pub arb_values: Vec<ArbValueCoeffs>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StageRecord {
    pub t: usize,
    pub a_x: f64,
    pub a_y: f64,
    pub a_mu: f64,
    pub b_y: f64,
    pub b_mu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EquilibriumRecord {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub rho0: f64,
    pub stages: Vec<StageRecord>,
    pub rho_path: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Stage records in the shared policy schema; trader coefficients are zero
/// past the deadline.
pub fn stage_records(trader: &[TraderStage], arb: &[ArbStage]) -> Vec<StageRecord> {
    (0..arb.len().max(trader.len()))
        .map(|i| {
            let a = trader.get(i).copied().unwrap_or_default();
            let b = arb.get(i).copied().unwrap_or_default();
            StageRecord {
                t: i + 1,
                a_x: a.a_x,
                a_y: a.a_y,
                a_mu: a.a_mu,
                b_y: b.b_y,
                b_mu: b.b_mu,
            }
        })
        .collect()
}

impl Equilibrium {
    pub fn horizon(&self) -> usize {
        self.params.horizon
    }

    pub fn record(&self) -> EquilibriumRecord {
        EquilibriumRecord {
            horizon: self.params.horizon,
            rho0: self.params.rho0,
            stages: stage_records(&self.trader_stages, &self.arb_stages),
            rho_path: self.rho_path.clone(),
            iterations: self.iterations,
            residual: self.residual,
        }
    }

    /// Stage solution at free period `t` in `1..T`.
    pub fn stage_solution(&self, t: usize) -> StageSolution {
        assert!((1..self.horizon()).contains(&t), "free stages are 1..T-1");
        let trader = self.trader_stages[t - 1];
        let rho_prev = self.rho_path[t - 1];
        StageSolution {
            trader,
            arb: self.arb_stages[t - 1],
            alpha: trader.a_x * gain(rho_prev, trader.a_x),
            rho_prev,
            rho_next: self.rho_path[t],
        }
    }

    /// Worst normalized no-deviation slope across free stages, checked at a
    /// fixed spread of states.
    pub fn audit(&self) -> f64 {
        let states = [
            (1.0, 0.0, 0.0),
            (0.0, 1.0, 0.0),
            (0.0, 0.0, 1.0),
            (0.7, -0.4, 1.3),
            (-1.5, 0.9, -0.2),
        ];
        (1..self.horizon())
            .map(|t| {
                let sol = self.stage_solution(t);
                no_deviation_audit(&self.trader_values[t], &self.arb_values[t], &sol, &states).max()
            })
            .fold(0.0, f64::max)
    }
}

pub fn forward_rho(rho0: f64, trader_stages: &[TraderStage]) -> Vec<f64> {
    let mut path = Vec::with_capacity(trader_stages.len() + 1);
    path.push(rho0);
    let mut rho = rho0;
    for s in trader_stages {
        rho = update_rho(rho, s.a_x);
        path.push(rho);
    }
    path
}

pub fn residual(rho_hat: &[f64], rho_tilde: &[f64], rho0: f64) -> Result<f64, SolveError> {
    if rho_hat.len() != rho_tilde.len() {
        return Err(SolveError::LengthMismatch(rho_hat.len(), rho_tilde.len()));
    }
    Ok(rho_hat
        .iter()
        .zip(rho_tilde)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / rho0)
}

/// Trader liquidation stage at `T` and the arbitrageur's response to it,
/// together with both value functions at `T - 1`.
fn deadline(params: &ModelParams) -> (ArbStage, TraderValueCoeffs, ArbValueCoeffs) {
    if params.arb_extra_periods == 1 {
        let (c, d) = terminal_values();
        return (ArbStage::AT_DEADLINE, c, d);
    }
    let d_t = terminal_values_flexible(params.arb_extra_periods);
    let arb = best_response_arb(&d_t, &TraderStage::LIQUIDATE).expect("terminal curvature is positive");
    // the rho argument is irrelevant once the trader fully liquidates
    let c = backup_trader_value_for(&TraderValueCoeffs::ZERO, &TraderStage::LIQUIDATE, &arb, 0.0);
    let d = backup_arb_value_best_response(&d_t, &TraderStage::LIQUIDATE, 0.0).expect("terminal curvature is positive");
    (arb, c, d)
}

struct Pass {
    solutions: Vec<StageSolution>,
    trader_values: Vec<TraderValueCoeffs>,
    arb_values: Vec<ArbValueCoeffs>,
}

/// Solves stages `T-1..1` against a fixed spread path `rho_hat[0..T]`.
fn backward_pass(params: &ModelParams, rho_hat: &[f64], warm: &[f64], iteration: usize) -> Result<Pass, SolveError> {
    let horizon = params.horizon;
    let (_, mut c, mut d) = deadline(params);
    let mut solutions = vec![None; horizon - 1];
    let mut trader_values = vec![TraderValueCoeffs::ZERO; horizon];
    let mut arb_values = vec![ArbValueCoeffs::default(); horizon];
    trader_values[horizon - 1] = c;
    arb_values[horizon - 1] = d;
    for t in (1..horizon).rev() {
        let sol = solve_stage(rho_hat[t], &c, &d, Some(warm[t - 1])).map_err(|source| SolveError::Stage {
            t,
            iteration,
            source,
        })?;
        c = backup_trader_value(&c, &sol);
        d = backup_arb_value(&d, &sol).map_err(|source| SolveError::Stage { t, iteration, source })?;
        trader_values[t - 1] = c;
        arb_values[t - 1] = d;
        solutions[t - 1] = Some(sol);
    }
    Ok(Pass {
        solutions: solutions.into_iter().map(|s| s.expect("every stage solved")).collect(),
        trader_values,
        arb_values,
    })
}

fn assemble(params: &ModelParams, pass: Pass, rho_path: Vec<f64>, iterations: usize, residual: f64) -> Equilibrium {
    let (arb_deadline, _, _) = deadline(params);
    let mut trader_stages: Vec<TraderStage> = pass.solutions.iter().map(|s| s.trader).collect();
    trader_stages.push(TraderStage::LIQUIDATE);
    let mut arb_stages: Vec<ArbStage> = pass.solutions.iter().map(|s| s.arb).collect();
    arb_stages.push(arb_deadline);
    arb_stages.extend(arb_tail_stages(params.arb_extra_periods));
    Equilibrium {
        params: *params,
        trader_stages,
        arb_stages,
        rho_path,
        trader_values: pass.trader_values,
        arb_values: pass.arb_values,
        iterations,
        residual,
    }
}

/// Equipartition guess for the free stages `1..T-1`.
fn equipartition_guess(horizon: usize) -> Vec<TraderStage> {
    (1..horizon)
        .map(|t| TraderStage::position_only(-1.0 / (horizon - t + 1) as f64))
        .collect()
}

pub fn solve_pbe(params: &ModelParams, opts: &SolverOptions) -> Result<Equilibrium, SolveError> {
    params.validate()?;
    opts.validate()?;
    let rho0 = params.rho0;
    let mut guess = equipartition_guess(params.horizon);
    let mut warm: Vec<f64> = guess.iter().map(|s| s.a_x).collect();
    let mut gamma = opts.step.initial();
    let mut last_residual = f64::INFINITY;

    for iteration in 0..opts.max_iters {
        let rho_hat = forward_rho(rho0, &guess);
        let pass = backward_pass(params, &rho_hat, &warm, iteration)?;
        let solved: Vec<TraderStage> = pass.solutions.iter().map(|s| s.trader).collect();
        let rho_tilde = forward_rho(rho0, &solved);
        let res = residual(&rho_hat, &rho_tilde, rho0)?;
        if res <= opts.tol {
            return Ok(assemble(params, pass, rho_hat, iteration + 1, res));
        }
        if iteration + 1 == opts.max_iters {
            return Err(SolveError::NotConverged {
                iterations: iteration + 1,
                residual: res,
                rho_path: rho_hat,
            });
        }
        gamma = opts.step.next(gamma, res > last_residual);
        last_residual = res;
        for (g, s) in guess.iter_mut().zip(&solved) {
            g.a_x = gamma * g.a_x + (1.0 - gamma) * s.a_x;
            g.a_y = gamma * g.a_y + (1.0 - gamma) * s.a_y;
            g.a_mu = gamma * g.a_mu + (1.0 - gamma) * s.a_mu;
        }
        warm = solved.iter().map(|s| s.a_x).collect();
    }
    unreachable!("loop returns on its last iteration")
}

/// Spread `rho_0` implied by running the stages backward from a terminal
/// spread `rho_{T-1}`.
fn shoot(params: &ModelParams, rho_last: f64) -> Result<(f64, Pass, Vec<f64>), StageError> {
    let horizon = params.horizon;
    let (_, mut c, mut d) = deadline(params);
    let mut rho_path = vec![0.0; horizon];
    rho_path[horizon - 1] = rho_last;
    let mut solutions = vec![None; horizon - 1];
    let mut trader_values = vec![TraderValueCoeffs::ZERO; horizon];
    let mut arb_values = vec![ArbValueCoeffs::default(); horizon];
    trader_values[horizon - 1] = c;
    arb_values[horizon - 1] = d;
    let mut prev_ax = None;
    for t in (1..horizon).rev() {
        let sol = solve_stage(rho_path[t], &c, &d, prev_ax)?;
        c = backup_trader_value(&c, &sol);
        d = backup_arb_value(&d, &sol)?;
        rho_path[t - 1] = sol.rho_prev;
        trader_values[t - 1] = c;
        arb_values[t - 1] = d;
        prev_ax = Some(sol.trader.a_x);
        solutions[t - 1] = Some(sol);
    }
    let pass = Pass {
        solutions: solutions.into_iter().map(|s| s.expect("every stage solved")).collect(),
        trader_values,
        arb_values,
    };
    Ok((rho_path[0], pass, rho_path))
}

/// Cross-check solver: bisects on `rho_{T-1}` until the backward chain of
/// stage solutions reproduces `rho0`.
///
/// Reliable only for small `rho0`; the backward map amplifies errors as the
/// spread grows.
pub fn solve_pbe_bisection(params: &ModelParams, opts: &SolverOptions) -> Result<Equilibrium, SolveError> {
    params.validate()?;
    opts.validate()?;
    let target = params.rho0;
    let implied = |rho_last: f64| shoot(params, rho_last).map(|(r0, _, _)| r0).ok();

    // rho_{T-1} <= rho0 when every stage sells; failures mean "too large"
    let mut lo = target * 1e-12;
    let mut hi = target;
    for iteration in 0..opts.max_iters {
        let mid = (lo * hi).sqrt();
        match implied(mid) {
            Some(r0) if r0 < target => lo = mid,
            _ => hi = mid,
        }
        if (hi / lo).ln() < 1e-15 {
            let (r0, pass, rho_path) = shoot(params, lo).map_err(|source| SolveError::Stage {
                t: 0,
                iteration,
                source,
            })?;
            let res = (r0 - target).abs() / target;
            return Ok(assemble(params, pass, rho_path, iteration + 1, res));
        }
    }
    Err(SolveError::NotConverged {
        iterations: opts.max_iters,
        residual: f64::NAN,
        rho_path: Vec::new(),
    })
}
