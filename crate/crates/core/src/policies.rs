//! Benchmark liquidation schedules and arbitrageur best responses.

use serde::{Deserialize, Serialize};

use crate::analytics::{normalized_arb_profit, normalized_trader_profit};
use crate::equilibrium::{forward_rho, stage_records, Equilibrium, StageRecord};
use crate::model::{ArbStage, ArbValueCoeffs, TraderStage, TraderValueCoeffs};
use crate::stage::{
    arb_tail_stages, backup_arb_value_best_response, backup_arb_value_for, backup_trader_value_for, best_response_arb,
    terminal_values_flexible, StageError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PolicyKind {
    Pbe,
    Eq,
    Mr,
    Vt,
    Zero,
    Custom,
}

/// Trader stages for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraderPolicy {
    pub kind: PolicyKind,
    pub stages: Vec<TraderStage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<usize>,
}

/// Arbitrageur stages for `t = 1..=T + T_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbPolicy {
    pub kind: PolicyKind,
    pub stages: Vec<ArbStage>,
}

impl TraderPolicy {
    pub fn custom(stages: Vec<TraderStage>) -> Self {
        Self {
            kind: PolicyKind::Custom,
            stages,
            tau: None,
        }
    }

    pub fn from_equilibrium(eq: &Equilibrium) -> Self {
        Self {
            kind: PolicyKind::Pbe,
            stages: eq.trader_stages.clone(),
            tau: None,
        }
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    /// Whether the last stage liquidates whatever is left.
    pub fn liquidates(&self) -> bool {
        self.stages.last() == Some(&TraderStage::LIQUIDATE)
    }

    /// Position path from `x0 = 1` with no noise and no arbitrageur.
    pub fn noiseless_path(&self) -> Vec<f64> {
        let mut x = 1.0;
        let mut path = vec![x];
        for s in &self.stages {
            x += s.a_x * x;
            path.push(x);
        }
        path
    }
}

impl ArbPolicy {
    pub fn from_equilibrium(eq: &Equilibrium) -> Self {
        Self {
            kind: PolicyKind::Pbe,
            stages: eq.arb_stages.clone(),
        }
    }

    pub fn extra_periods(&self, horizon: usize) -> usize {
        self.stages.len() - horizon
    }
}

pub fn policy_records(trader: &TraderPolicy, arb: &ArbPolicy) -> Vec<StageRecord> {
    stage_records(&trader.stages, &arb.stages)
}

fn position_only(kind: PolicyKind, a_x: impl Iterator<Item = f64>, tau: Option<usize>) -> TraderPolicy {
    TraderPolicy {
        kind,
        stages: a_x.map(TraderStage::position_only).collect(),
        tau,
    }
}

pub fn equipartition(horizon: usize) -> TraderPolicy {
    assert!(horizon >= 2, "horizon must be at least 2");
    position_only(
        PolicyKind::Eq,
        (1..=horizon).map(|t| -1.0 / (horizon - t + 1) as f64),
        None,
    )
}

pub fn minimum_revelation(horizon: usize) -> TraderPolicy {
    assert!(horizon >= 2, "horizon must be at least 2");
    position_only(
        PolicyKind::Mr,
        (1..=horizon).map(|t| match horizon - t {
            0 => -1.0,
            1 => -0.5,
            _ => 0.0,
        }),
        None,
    )
}

/// Constant-rate liquidation over the last `tau` periods.
pub fn variable_time_window(horizon: usize, tau: usize) -> TraderPolicy {
    assert!((1..=horizon).contains(&tau), "window must fit in the horizon");
    position_only(
        PolicyKind::Vt,
        (1..=horizon).map(|t| {
            let remaining = horizon - t + 1;
            if remaining > tau {
                0.0
            } else {
                -1.0 / remaining as f64
            }
        }),
        Some(tau),
    )
}

pub fn zero_arb(horizon: usize, extra_periods: usize) -> ArbPolicy {
    let mut stages = vec![ArbStage::IDLE; horizon];
    stages.extend(arb_tail_stages(extra_periods));
    ArbPolicy {
        kind: PolicyKind::Zero,
        stages,
    }
}

/// Arbitrageur's optimal linear response to a known trader policy, with
/// value coefficients for `t = 0..=T`.
pub fn arb_best_response_policy(
    trader: &TraderPolicy,
    rho0: f64,
    extra_periods: usize,
) -> Result<(ArbPolicy, Vec<ArbValueCoeffs>), StageError> {
    let horizon = trader.horizon();
    let rho = forward_rho(rho0, &trader.stages);
    let mut d = terminal_values_flexible(extra_periods);
    let mut values = vec![d; horizon + 1];
    let mut stages = vec![ArbStage::IDLE; horizon];
    for t in (1..=horizon).rev() {
        let s = &trader.stages[t - 1];
        stages[t - 1] = best_response_arb(&d, s)?;
        d = backup_arb_value_best_response(&d, s, rho[t - 1])?;
        values[t - 1] = d;
    }
    stages.extend(arb_tail_stages(extra_periods));
    let kind = match trader.kind {
        PolicyKind::Pbe | PolicyKind::Eq | PolicyKind::Mr | PolicyKind::Vt => trader.kind,
        PolicyKind::Zero | PolicyKind::Custom => PolicyKind::Custom,
    };
    Ok((ArbPolicy { kind, stages }, values))
}

/// Both players' value coefficients for `t = 0..=T` under a fixed pair, with
/// the arbitrageur's belief correctly specified.
#[derive(Debug, Clone, PartialEq)]
pub struct PairValues {
    pub trader: Vec<TraderValueCoeffs>,
    pub arb: Vec<ArbValueCoeffs>,
    pub u_bar: f64,
    pub v_bar: f64,
}

pub fn evaluate_pair(trader: &TraderPolicy, arb: &ArbPolicy, rho0: f64) -> PairValues {
    let horizon = trader.horizon();
    let rho = forward_rho(rho0, &trader.stages);
    let mut c = TraderValueCoeffs::ZERO;
    let mut d = terminal_values_flexible(arb.extra_periods(horizon));
    let mut cs = vec![c; horizon + 1];
    let mut ds = vec![d; horizon + 1];
    for t in (1..=horizon).rev() {
        let (s, b) = (&trader.stages[t - 1], &arb.stages[t - 1]);
        c = backup_trader_value_for(&c, s, b, rho[t - 1]);
        d = backup_arb_value_for(&d, s, b, rho[t - 1]);
        cs[t - 1] = c;
        ds[t - 1] = d;
    }
    PairValues {
        u_bar: normalized_trader_profit(&cs[0], rho0),
        v_bar: normalized_arb_profit(&ds[0], rho0),
        trader: cs,
        arb: ds,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableTime {
    pub trader: TraderPolicy,
    pub arb: ArbPolicy,
    pub tau: usize,
    /// `(tau, u_bar)` for every window tried.
    pub profits: Vec<(usize, f64)>,
}

/// Best constant-rate window against a best-responding arbitrageur.
pub fn variable_time(horizon: usize, rho0: f64, extra_periods: usize) -> Result<VariableTime, StageError> {
    let mut best: Option<VariableTime> = None;
    let mut profits = Vec::with_capacity(horizon - 1);
    for tau in 2..=horizon {
        let trader = variable_time_window(horizon, tau);
        let (arb, _) = arb_best_response_policy(&trader, rho0, extra_periods)?;
        let u = evaluate_pair(&trader, &arb, rho0).u_bar;
        profits.push((tau, u));
        let better = best.as_ref().is_none_or(|b| u >= profits[b.tau - 2].1);
        if better {
            best = Some(VariableTime {
                trader,
                arb,
                tau,
                profits: Vec::new(),
            });
        }
    }
    let mut best = best.expect("at least one window");
    best.profits = profits;
    Ok(best)
}
