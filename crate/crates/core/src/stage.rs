//! Single-period equilibrium and one-step value backups.
//!
//! Everything here is dimensionless. A stage at time `t` maps the value
//! functions at `t` to those at `t - 1` given the spread `rho_prev` of the
//! arbitrageur's belief entering the period.

pub mod cubic;

use thiserror::Error;

use crate::belief::{gain, update_rho};
use crate::model::{ArbStage, ArbValueCoeffs, GaussianBelief, TraderStage, TraderValueCoeffs};

const SOC_MARGIN: f64 = 1e-12;
const SINGULAR_DET: f64 = 1e-14;
const ROOT_IMAG_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StageError {
    #[error("no cubic root satisfies the stage conditions at rho_next = {rho_next}")]
    NoValidRoot { rho_next: f64, roots: Vec<f64> },
    #[error("several cubic roots satisfy the stage conditions: {roots:?}")]
    MultipleValidRoots { roots: Vec<f64> },
    #[error("stage linear system is singular (det = {det:e})")]
    SingularStageSystem { det: f64 },
    #[error("objective is not strictly concave (curvature = {curvature:e})")]
    UnboundedObjective { curvature: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSolution {
    pub trader: TraderStage,
    pub arb: ArbStage,
    /// Sensitivity of the posterior mean to the trader's own trade.
    pub alpha: f64,
    pub rho_prev: f64,
    pub rho_next: f64,
}

/// Value coefficients at `T - 1` for the one-extra-period arbitrageur.
pub fn terminal_values() -> (TraderValueCoeffs, ArbValueCoeffs) {
    (
        TraderValueCoeffs {
            c_xx: 2.0,
            c_xy: 0.5,
            ..TraderValueCoeffs::ZERO
        },
        ArbValueCoeffs {
            d_yy: 1.5,
            d_ymu: 1.0,
            ..Default::default()
        },
    )
}

/// Arbitrageur value at `T` when it splits its remaining position evenly
/// over `extra_periods` periods.
pub fn terminal_values_flexible(extra_periods: usize) -> ArbValueCoeffs {
    assert!(extra_periods >= 1, "arbitrageur needs at least one extra period");
    let ta = extra_periods as f64;
    ArbValueCoeffs {
        d_yy: (ta + 1.0) / ta,
        ..Default::default()
    }
}

/// Equipartition stages the arbitrageur runs after the trader's deadline.
pub fn arb_tail_stages(extra_periods: usize) -> Vec<ArbStage> {
    (1..=extra_periods)
        .map(|k| ArbStage::new(-1.0 / (extra_periods + 1 - k) as f64, 0.0))
        .collect()
}

/// Conditional mean of the next belief as seen by the trader:
/// `e_y y + e_mu mu + g u`.
#[derive(Debug, Clone, Copy)]
struct TraderView {
    g: f64,
    e_y: f64,
    e_mu: f64,
}

fn trader_view(assumed: &TraderStage, rho_prev: f64) -> TraderView {
    if rho_prev == 0.0 {
        return TraderView {
            g: 0.0,
            e_y: assumed.a_y,
            e_mu: 1.0 + assumed.a_x + assumed.a_mu,
        };
    }
    let gm = gain(rho_prev, assumed.a_x);
    let g = gm * assumed.a_x;
    TraderView {
        g,
        e_y: assumed.a_y * (1.0 - g),
        e_mu: assumed.a_mu * (1.0 - g) + gm / (rho_prev * rho_prev),
    }
}

fn trader_curvature(c: &TraderValueCoeffs, g: f64) -> f64 {
    c.c_xx + 2.0 * g * c.c_xmu + g * g * c.c_mumu
}

/// Solves one period's equilibrium given the belief spread it must produce.
///
/// `warm_start` picks among several admissible roots the one closest to a
/// previous `a_x`; without it an ambiguous stage is an error.
pub fn solve_stage(
    rho_next: f64,
    c: &TraderValueCoeffs,
    d: &ArbValueCoeffs,
    warm_start: Option<f64>,
) -> Result<StageSolution, StageError> {
    let r = rho_next * rho_next;
    let roots = cubic::real_roots(
        c.c_xx + 2.0 * r * c.c_xmu + r * r * c.c_mumu,
        3.0 * c.c_xx + 3.0 * r * c.c_xmu - 1.0,
        3.0 * c.c_xx + r * c.c_xmu - 2.0,
        c.c_xx - 1.0,
    );

    let mut admissible: Vec<(f64, f64)> = Vec::new();
    if rho_next > 0.0 && d.d_yy > SOC_MARGIN {
        for &a in &roots {
            let inv = (1.0 + a) * (1.0 + a) / r - a * a;
            if !inv.is_finite() || inv <= 0.0 {
                continue;
            }
            let rho_prev = 1.0 / inv.sqrt();
            let g = a * gain(rho_prev, a);
            let concavity = trader_curvature(c, g);
            let coupling = c.c_xx + (g + 1.0) * c.c_xmu + g * c.c_mumu;
            if concavity <= SOC_MARGIN || coupling <= SOC_MARGIN {
                continue;
            }
            if admissible.iter().any(|&(b, _)| (a - b).abs() < ROOT_IMAG_TOL) {
                continue;
            }
            admissible.push((a, rho_prev));
        }
    }

    let (a_x, rho_prev) = match (admissible.len(), warm_start) {
        (0, _) => return Err(StageError::NoValidRoot { rho_next, roots }),
        (1, _) => admissible[0],
        (_, Some(w)) => *admissible
            .iter()
            .min_by(|x, y| (x.0 - w).abs().total_cmp(&(y.0 - w).abs()))
            .expect("non-empty"),
        (_, None) => {
            return Err(StageError::MultipleValidRoots {
                roots: admissible.iter().map(|r| r.0).collect(),
            })
        }
    };

    let gm = gain(rho_prev, a_x);
    let g = a_x * gm;
    let big_d = c.c_xx + (g + 1.0) * c.c_xmu + g * c.c_mumu;
    let k = c.c_xy + g * c.c_ymu;
    let l = c.c_xmu + g * c.c_mumu;
    let m21 = d.d_ymu / d.d_yy;
    let det = big_d - k * m21;
    if det.abs() < SINGULAR_DET {
        return Err(StageError::SingularStageSystem { det });
    }
    let solve = |r1: f64, r2: f64| ((r1 - k * r2) / det, (big_d * r2 - m21 * r1) / det);
    let (a_y, b_y) = solve(-k, 1.0 / d.d_yy - 1.0);
    let (a_mu, b_mu) = solve(-l * gm / (rho_prev * rho_prev), -(1.0 + a_x) * m21);

    Ok(StageSolution {
        trader: TraderStage { a_x, a_y, a_mu },
        arb: ArbStage { b_y, b_mu },
        alpha: g,
        rho_prev,
        rho_next,
    })
}

fn mat3_congruence(l: &[[f64; 3]; 3], h: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for p in 0..3 {
                for q in 0..3 {
                    s += l[p][i] * h[p][q] * l[q][j];
                }
            }
            out[i][j] = s;
        }
    }
    out
}

/// Trader value one period earlier when both players follow the given
/// stages and the arbitrageur's belief is correctly specified.
pub fn backup_trader_value_for(
    c: &TraderValueCoeffs,
    trader: &TraderStage,
    arb: &ArbStage,
    rho_prev: f64,
) -> TraderValueCoeffs {
    let TraderStage { a_x, a_y, a_mu } = *trader;
    let view = trader_view(trader, rho_prev);
    // mean of mu_t in terms of (x, y, mu) once u is substituted
    let l = [
        [1.0 + a_x, a_y, a_mu],
        [0.0, 1.0 + arb.b_y, arb.b_mu],
        [view.g * a_x, view.e_y + view.g * a_y, view.e_mu + view.g * a_mu],
    ];
    let w = [a_x, a_y + arb.b_y, a_mu + arb.b_mu];
    let mut h = mat3_congruence(&l, &c.hessian());
    for i in 0..3 {
        h[0][i] -= w[i];
        h[i][0] -= w[i];
    }
    TraderValueCoeffs::from_hessian(&h, c.c_0 - 0.5 * c.c_mumu * view.g * view.g)
}

pub fn backup_trader_value(c: &TraderValueCoeffs, sol: &StageSolution) -> TraderValueCoeffs {
    backup_trader_value_for(c, &sol.trader, &sol.arb, sol.rho_prev)
}

fn arb_noise_variance(trader: &TraderStage, rho_prev: f64) -> f64 {
    let ga = gain(rho_prev, trader.a_x) * trader.a_x;
    ga * ga * (1.0 + trader.a_x * trader.a_x * rho_prev * rho_prev)
}

/// Arbitrageur value one period earlier for arbitrary linear stages.
pub fn backup_arb_value_for(d: &ArbValueCoeffs, trader: &TraderStage, arb: &ArbStage, rho_prev: f64) -> ArbValueCoeffs {
    let TraderStage { a_x, a_y, a_mu } = *trader;
    let l = [[1.0 + arb.b_y, arb.b_mu], [a_y, 1.0 + a_x + a_mu]];
    let w = [a_y + arb.b_y, a_x + a_mu + arb.b_mu];
    let hd = d.hessian();
    let mut h = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut s = 0.0;
            for p in 0..2 {
                for q in 0..2 {
                    s += l[p][i] * hd[p][q] * l[q][j];
                }
            }
            h[i][j] = s - (if i == 0 { w[j] } else { 0.0 }) - (if j == 0 { w[i] } else { 0.0 });
        }
    }
    ArbValueCoeffs::from_hessian(&h, d.d_0 - 0.5 * d.d_mumu * arb_noise_variance(trader, rho_prev))
}

/// Arbitrageur value one period earlier when its stage is a best response.
///
/// Closed form of [`backup_arb_value_for`] after substituting the optimal
/// `b_y, b_mu`; only depends on the trader's stage.
pub fn backup_arb_value(d: &ArbValueCoeffs, sol: &StageSolution) -> Result<ArbValueCoeffs, StageError> {
    backup_arb_value_best_response(d, &sol.trader, sol.rho_prev)
}

pub fn backup_arb_value_best_response(
    d: &ArbValueCoeffs,
    trader: &TraderStage,
    rho_prev: f64,
) -> Result<ArbValueCoeffs, StageError> {
    if d.d_yy.abs() < SINGULAR_DET {
        return Err(StageError::SingularStageSystem { det: d.d_yy });
    }
    let TraderStage { a_x, a_y, a_mu } = *trader;
    let k = 1.0 + a_x + a_mu;
    let ratio = d.d_ymu / d.d_yy;
    let schur = d.d_mumu - d.d_ymu * ratio;
    Ok(ArbValueCoeffs {
        d_yy: schur * a_y * a_y + 2.0 * (ratio - 1.0) * a_y - 1.0 / d.d_yy + 2.0,
        d_ymu: -a_mu - a_x + (ratio + schur * a_y) * k,
        d_mumu: schur * k * k,
        d_0: d.d_0 - 0.5 * d.d_mumu * arb_noise_variance(trader, rho_prev),
    })
}

/// Trader's optimal stage against an arbitrageur that believes the trader
/// plays `assumed` and itself plays `arb`.
pub fn best_response_trader(
    c: &TraderValueCoeffs,
    assumed: &TraderStage,
    arb: &ArbStage,
    rho_prev: f64,
) -> Result<TraderStage, StageError> {
    let view = trader_view(assumed, rho_prev);
    let g = view.g;
    let s = trader_curvature(c, g);
    if s <= SOC_MARGIN {
        return Err(StageError::UnboundedObjective { curvature: s });
    }
    let k = c.c_xy + g * c.c_ymu;
    let l = c.c_xmu + g * c.c_mumu;
    Ok(TraderStage {
        a_x: (1.0 - c.c_xx - g * c.c_xmu) / s,
        a_y: -(l * view.e_y + k * (1.0 + arb.b_y)) / s,
        a_mu: -(l * view.e_mu + k * arb.b_mu) / s,
    })
}

pub fn best_response_arb(d: &ArbValueCoeffs, trader: &TraderStage) -> Result<ArbStage, StageError> {
    if d.d_yy <= SOC_MARGIN {
        return Err(StageError::UnboundedObjective { curvature: d.d_yy });
    }
    let k = 1.0 + trader.a_x + trader.a_mu;
    Ok(ArbStage {
        b_y: (1.0 - d.d_ymu * trader.a_y) / d.d_yy - 1.0,
        b_mu: -k * d.d_ymu / d.d_yy,
    })
}

/// Expected trader payoff of trading `u` this period, dimensionless.
pub fn trader_stage_objective(
    c: &TraderValueCoeffs,
    x: f64,
    y: f64,
    belief: &GaussianBelief,
    u: f64,
    assumed: &TraderStage,
    arb: &ArbStage,
) -> f64 {
    let view = trader_view(assumed, belief.rho);
    let v = arb.trade(y, belief.mu);
    let m = view.e_y * y + view.e_mu * belief.mu + view.g * u;
    (u + v) * x + c.value_scaled(x + u, y + v, m) - 0.5 * c.c_mumu * view.g * view.g
}

/// Expected arbitrageur payoff of trading `v` this period, dimensionless.
pub fn arb_stage_objective(d: &ArbValueCoeffs, y: f64, belief: &GaussianBelief, v: f64, trader: &TraderStage) -> f64 {
    let mu = belief.mu;
    let expected_u = trader.trade(mu, y, mu);
    let m = trader.a_y * y + (1.0 + trader.a_x + trader.a_mu) * mu;
    let var = if belief.rho == 0.0 {
        0.0
    } else {
        arb_noise_variance(trader, belief.rho)
    };
    (expected_u + v) * y + d.value_scaled(y + v, m) - 0.5 * d.d_mumu * var
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeviationAudit {
    pub trader_slope: f64,
    pub arb_slope: f64,
}

impl DeviationAudit {
    pub fn max(&self) -> f64 {
        self.trader_slope.max(self.arb_slope)
    }
}

/// Largest central-difference slope of either stage objective at the
/// prescribed action, over the given `(x, y, mu)` states, normalized by the
/// state size.
pub fn no_deviation_audit(
    c: &TraderValueCoeffs,
    d: &ArbValueCoeffs,
    sol: &StageSolution,
    states: &[(f64, f64, f64)],
) -> DeviationAudit {
    let mut audit = DeviationAudit::default();
    for &(x, y, mu) in states {
        let belief = GaussianBelief::new(mu, sol.rho_prev);
        let norm = 1.0 + x.abs() + y.abs() + mu.abs();

        let u = sol.trader.trade(x, y, mu);
        let h = 1e-4 * (1.0 + u.abs());
        let f = |u: f64| trader_stage_objective(c, x, y, &belief, u, &sol.trader, &sol.arb);
        let slope = (f(u + h) - f(u - h)) / (2.0 * h);
        audit.trader_slope = audit.trader_slope.max(slope.abs() / norm);

        let v = sol.arb.trade(y, mu);
        let h = 1e-4 * (1.0 + v.abs());
        let g = |v: f64| arb_stage_objective(d, y, &belief, v, &sol.trader);
        let slope = (g(v + h) - g(v - h)) / (2.0 * h);
        audit.arb_slope = audit.arb_slope.max(slope.abs() / norm);
    }
    audit
}

/// Checks that `sol` is consistent with the spread it was solved for.
pub fn rho_consistency_error(sol: &StageSolution) -> f64 {
    (update_rho(sol.rho_prev, sol.trader.a_x) - sol.rho_next).abs() / sol.rho_next
}
