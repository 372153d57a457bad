//! Acceptance criteria. Each test prints one PASS/FAIL line to stdout, bypassing
//! the harness capture, then asserts.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use execution_game::analytics::{equipartition_alone, profit_variance, spillover};
use execution_game::belief::{gain, update_mean, update_rho};
use execution_game::equilibrium::{solve_pbe, Equilibrium, SolverOptions};
use execution_game::model::{ArbStage, ArbValueCoeffs, GaussianBelief, ModelParams, TraderStage, TraderValueCoeffs};
use execution_game::policies::{
    arb_best_response_policy, equipartition, evaluate_pair, minimum_revelation, variable_time, zero_arb, ArbPolicy,
    TraderPolicy,
};
use execution_game::sim::{estimate_value, SimInit};
use execution_game::stage::{
    backup_arb_value, best_response_arb, terminal_values, terminal_values_flexible, StageSolution,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

fn report(id: &str, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "{verdict} criterion {id} ({name}): {detail}").unwrap();
    out.flush().unwrap();
}

fn solve(horizon: usize, rho0: f64) -> Equilibrium {
    solve_pbe(
        &ModelParams::dimensionless(horizon, rho0).unwrap(),
        &SolverOptions::default(),
    )
    .unwrap()
}

fn best_responded(trader: TraderPolicy, rho0: f64) -> (TraderPolicy, ArbPolicy) {
    let (arb, _) = arb_best_response_policy(&trader, rho0, 1).unwrap();
    (trader, arb)
}

fn log_grid() -> Vec<f64> {
    (0..40).map(|i| 10f64.powf(-2.0 + 5.0 * i as f64 / 39.0)).collect()
}

#[test]
fn criterion_1_closed_form_constants() {
    let horizon = 20;
    let mut worst: f64 = 0.0;
    for rho0 in [1e-2, 0.3, 1.0, 8.0, 1e3] {
        let (trader, arb) = best_responded(minimum_revelation(horizon), rho0);
        let mr = evaluate_pair(&trader, &arb, rho0);
        worst = worst.max((mr.u_bar + 0.75).abs()).max(mr.v_bar.abs());
        let alone = evaluate_pair(&equipartition(horizon), &zero_arb(horizon, 1), rho0);
        worst = worst.max((alone.u_bar + 0.525).abs()).max(alone.v_bar.abs());
    }
    worst = worst.max((equipartition_alone(horizon) + 0.525).abs());
    let pass = worst <= 1e-12;
    report(
        "1",
        "closed-form constants",
        pass,
        format!("max deviation {worst:.3e}, tolerance 1e-12"),
    );
    assert!(pass);
}

#[test]
fn criterion_2_terminal_structure() {
    let d_t = terminal_values_flexible(1);
    let trader = TraderStage::LIQUIDATE;
    let arb = best_response_arb(&d_t, &trader).unwrap();
    let (_, want) = terminal_values();
    let mut terminal_err: f64 = (arb.b_y + 0.5).abs() + arb.b_mu.abs();
    for rho_prev in [0.1, 1.0, 8.0] {
        let sol = StageSolution {
            trader,
            arb,
            alpha: trader.a_x * gain(rho_prev, trader.a_x),
            rho_prev,
            rho_next: update_rho(rho_prev, trader.a_x),
        };
        let got = backup_arb_value(&d_t, &sol).unwrap();
        terminal_err = terminal_err.max(got.max_abs_diff(&want));
    }

    let horizon = 20;
    let mut eq_err: f64 = 0.0;
    for k in 0..10 {
        let rho0 = 10f64.powf(-2.0 + 5.0 * k as f64 / 9.0);
        let (_, psi) = best_responded(equipartition(horizon), rho0);
        for t in 1..=horizon {
            let (n1, n2) = ((horizon + 1 - t) as f64, (horizon + 2 - t) as f64);
            let k = (horizon - t) as f64;
            let s = psi.stages[t - 1];
            eq_err = eq_err.max((s.b_y + 1.0 / n2).abs());
            eq_err = eq_err.max((s.b_mu + k * (k + 3.0) / (2.0 * n1 * n2)).abs());
        }
        let tail = psi.stages[horizon];
        eq_err = eq_err.max((tail.b_y + 1.0).abs()).max(tail.b_mu.abs());
    }
    let pass = terminal_err == 0.0 && eq_err <= 1e-8;
    report(
        "2",
        "terminal structure",
        pass,
        format!("terminal coefficients off by {terminal_err:.3e} (exact required); EQ response off by {eq_err:.3e}, tolerance 1e-8"),
    );
    assert!(pass);
}

/// Normalized metrics of every benchmark pair on the 40-point grid at T=20.
struct GridRow {
    rho0: f64,
    u_pbe: f64,
    v_pbe: f64,
    u_eq: f64,
    u_mr: f64,
    u_vt: f64,
    var_pbe: f64,
    var_eq: f64,
    var_mr: f64,
}

fn grid_rows() -> &'static [GridRow] {
    static ROWS: OnceLock<Vec<GridRow>> = OnceLock::new();
    ROWS.get_or_init(|| {
        let horizon = 20;
        log_grid()
            .into_par_iter()
            .map(|rho0| {
                let eq = solve(horizon, rho0);
                let pbe = (TraderPolicy::from_equilibrium(&eq), ArbPolicy::from_equilibrium(&eq));
                let eqp = best_responded(equipartition(horizon), rho0);
                let mrp = best_responded(minimum_revelation(horizon), rho0);
                let vt = variable_time(horizon, rho0, 1).unwrap();
                let p = evaluate_pair(&pbe.0, &pbe.1, rho0);
                GridRow {
                    rho0,
                    u_pbe: p.u_bar,
                    v_pbe: p.v_bar,
                    u_eq: evaluate_pair(&eqp.0, &eqp.1, rho0).u_bar,
                    u_mr: evaluate_pair(&mrp.0, &mrp.1, rho0).u_bar,
                    u_vt: evaluate_pair(&vt.trader, &vt.arb, rho0).u_bar,
                    var_pbe: profit_variance(&pbe.0, &pbe.1, rho0),
                    var_eq: profit_variance(&eqp.0, &eqp.1, rho0),
                    var_mr: profit_variance(&mrp.0, &mrp.1, rho0),
                }
            })
            .collect()
    })
}

#[test]
fn criterion_3_small_and_large_volume_limits() {
    let rows = grid_rows();
    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    let low_ok = (first.u_pbe + 0.525).abs() <= 0.02;
    let high_ok = (last.u_pbe + 0.75).abs() <= 0.02;
    let v_range_ok = [first.v_pbe, last.v_pbe].iter().all(|v| (-1e-9..=0.05).contains(v));
    let (imax, vmax) = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r.v_pbe))
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let interior_ok = imax > 0 && imax < rows.len() - 1 && vmax > first.v_pbe && vmax > last.v_pbe;
    let pass = low_ok && high_ok && v_range_ok && interior_ok;
    report(
        "3",
        "small and large volume limits",
        pass,
        format!(
            "U(1e-2)={:.6}, U(1e3)={:.6}, V endpoints {:.3e}/{:.3e}, V max {:.6} at rho0={:.4}",
            first.u_pbe, last.u_pbe, first.v_pbe, last.v_pbe, vmax, rows[imax].rho0
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_dominance_and_spillover() {
    let rows = grid_rows();
    let mut worst_dom = f64::INFINITY;
    let mut worst_vt = f64::INFINITY;
    let mut worst_spill = f64::INFINITY;
    for r in rows {
        worst_dom = worst_dom.min(r.u_pbe - r.u_eq.max(r.u_mr).max(r.u_vt));
        worst_vt = worst_vt.min(r.u_vt - r.u_eq.max(r.u_mr));
        worst_spill = worst_spill.min(spillover(r.u_pbe, r.v_pbe, 20));
    }
    let pass = worst_dom >= -1e-6 && worst_vt >= -1e-12 && worst_spill >= -1e-9;
    report(
        "4",
        "dominance and spill-over",
        pass,
        format!("min PBE margin {worst_dom:.3e} (slack 1e-6), min VT margin {worst_vt:.3e}, min spill-over {worst_spill:.3e} (slack 1e-9)"),
    );
    assert!(pass);
}

#[test]
fn criterion_4_variance_ordering() {
    let rows = grid_rows();
    let above = |worse: &dyn Fn(&GridRow) -> bool| -> Vec<&GridRow> { rows.iter().filter(|r| worse(r)).collect() };
    let over_eq = above(&|r| r.var_pbe > r.var_eq);
    let over_mr = above(&|r| r.var_pbe > r.var_mr);
    let describe = |label: &str, hits: &[&GridRow], bench: fn(&GridRow) -> f64| match (hits.first(), hits.last()) {
        (Some(a), Some(b)) => format!(
            "above {label} at {} points, rho0 {:.4}..{:.4} (e.g. {:.8} vs {:.8})",
            hits.len(),
            a.rho0,
            b.rho0,
            a.var_pbe,
            bench(a)
        ),
        _ => format!("below {label} everywhere"),
    };
    let pass = over_eq.is_empty() && over_mr.is_empty();
    let detail = format!(
        "PBE variance {}; {}",
        describe("EQ/EQ", &over_eq, |r| r.var_eq),
        describe("MR/MR", &over_mr, |r| r.var_mr)
    );
    report("4", "variance ordering", pass, detail);
    assert!(pass);
}

#[test]
fn criterion_5a_no_deviation_audit() {
    let cases: Vec<(usize, f64)> = [6, 20]
        .into_iter()
        .flat_map(|t| [0.1, 1.0, 8.0, 100.0].map(|r| (t, r)))
        .collect();
    let worst = cases
        .par_iter()
        .map(|&(t, r)| solve(t, r).audit())
        .reduce(|| 0.0, f64::max);
    let pass = worst < 1e-6;
    report(
        "5a",
        "no-deviation audit",
        pass,
        format!("worst normalized slope {worst:.3e} over 8 equilibria"),
    );
    assert!(pass);
}

#[test]
fn criterion_5b_value_functions_by_simulation() {
    let eq = solve(6, 5.0);
    let states = [(1.3, -0.4, 0.6), (-0.8, 0.9, -1.1)];
    let mut worst_z: f64 = 0.0;
    for t in 0..6 {
        let trader = TraderPolicy::custom(eq.trader_stages[t..].to_vec());
        let mut arb = ArbPolicy::from_equilibrium(&eq);
        arb.stages.drain(..t);
        for (k, &(x, y, mu)) in states.iter().enumerate() {
            let mut init = SimInit::dimensionless(eq.rho_path[t]).with_x0(x);
            init.y0 = y;
            init.mu0 = mu;
            let seed = 500 + (10 * t + k) as u64;
            let est = estimate_value(&trader, &arb, &init, 1_000_000, seed, false);
            let want = eq.trader_values[t].value_scaled(x, y, mu);
            worst_z = worst_z.max((est.trader.mean - want).abs() / est.trader.std_error);
            init.x0 = None;
            let est = estimate_value(&trader, &arb, &init, 1_000_000, seed + 1000, false);
            let want = eq.arb_values[t].value_scaled(y, mu);
            worst_z = worst_z.max((est.arb.mean - want).abs() / est.arb.std_error);
        }
    }
    let pass = worst_z <= 3.0;
    report(
        "5b",
        "value functions by simulation",
        pass,
        format!("worst |z| {worst_z:.2} over 24 checks at 1e6 paths"),
    );
    assert!(pass);
}

fn gauss_hermite3(f: impl Fn(f64) -> f64) -> f64 {
    let r = 3f64.sqrt();
    (2.0 * f(0.0) + 0.5 * f(r) + 0.5 * f(-r)) / 3.0
}

fn grid_argmax(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let n = 4001;
    let h = (hi - lo) / (n - 1) as f64;
    let (mut best, mut best_val) = (1, f64::NEG_INFINITY);
    for i in 1..n - 1 {
        let val = f(lo + h * i as f64);
        if val > best_val {
            best = i;
            best_val = val;
        }
    }
    let x = lo + h * best as f64;
    let (fm, f0, fp) = (f(x - h), f(x), f(x + h));
    x + 0.5 * h * (fm - fp) / (fm - 2.0 * f0 + fp)
}

fn numeric_trader(c: &TraderValueCoeffs, assumed: &TraderStage, arb: &ArbStage, rho: f64) -> TraderStage {
    let at = |x: f64, y: f64, mu: f64| {
        let belief = GaussianBelief::new(mu, rho);
        let v = arb.trade(y, mu);
        let payoff = |u: f64| {
            gauss_hermite3(|e| {
                let dp = u + v + e;
                let m = update_mean(&belief, y, v, dp, assumed).unwrap();
                dp * x + c.value_scaled(x + u, y + v, m)
            })
        };
        grid_argmax(payoff, -10.0, 10.0)
    };
    let base = at(0.0, 0.0, 0.0);
    TraderStage::new(
        at(1.0, 0.0, 0.0) - base,
        at(0.0, 1.0, 0.0) - base,
        at(0.0, 0.0, 1.0) - base,
    )
}

fn numeric_arb(d: &ArbValueCoeffs, trader: &TraderStage, rho: f64) -> ArbStage {
    let at = |y: f64, mu: f64| {
        let belief = GaussianBelief::new(mu, rho);
        let payoff = |v: f64| {
            gauss_hermite3(|zx| {
                let x = mu + rho * zx;
                gauss_hermite3(|e| {
                    let dp = trader.trade(x, y, mu) + v + e;
                    let m = update_mean(&belief, y, v, dp, trader).unwrap();
                    dp * y + d.value_scaled(y + v, m)
                })
            })
        };
        grid_argmax(payoff, -10.0, 10.0)
    };
    let base = at(0.0, 0.0);
    ArbStage::new(at(1.0, 0.0) - base, at(0.0, 1.0) - base)
}

#[test]
fn criterion_5c_two_period_brute_force() {
    let (c, d) = terminal_values();
    let mut worst: f64 = 0.0;
    for rho0 in [0.2, 1.0, 6.0] {
        let mut trader = TraderStage::HOLD;
        let mut arb = ArbStage::IDLE;
        for _ in 0..60 {
            trader = numeric_trader(&c, &trader, &arb, rho0);
            arb = numeric_arb(&d, &trader, rho0);
        }
        let eq = solve(2, rho0);
        let (s, b) = (eq.trader_stages[0], eq.arb_stages[0]);
        for diff in [
            trader.a_x - s.a_x,
            trader.a_y - s.a_y,
            trader.a_mu - s.a_mu,
            arb.b_y - b.b_y,
            arb.b_mu - b.b_mu,
        ] {
            worst = worst.max(diff.abs());
        }
    }
    let pass = worst <= 1e-6;
    report(
        "5c",
        "two-period brute force",
        pass,
        format!("max coefficient gap {worst:.3e}, tolerance 1e-6"),
    );
    assert!(pass);
}

/// Posterior mean of `x` under prior `N(m, s^2)` given `z = a x + N(0, k^2)`,
/// by Simpson's rule on a dense grid.
fn grid_posterior_mean(m: f64, s: f64, a: f64, z: f64, k: f64) -> f64 {
    let n = 40_001;
    let lo = m - 12.0 * s;
    let h = 24.0 * s / (n - 1) as f64;
    let logw: Vec<f64> = (0..n)
        .map(|i| {
            let x = lo + h * i as f64;
            -0.5 * ((x - m) / s).powi(2) - 0.5 * ((z - a * x) / k).powi(2)
        })
        .collect();
    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, lw) in logw.iter().enumerate() {
        let c = if i == 0 || i == n - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let w = c * (lw - top).exp();
        num += w * (lo + h * i as f64);
        den += w;
    }
    num / den
}

#[test]
fn criterion_6_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_mean: f64 = 0.0;
    let mut worst_identity: f64 = 0.0;
    for _ in 0..100 {
        let lambda = rng.random_range(0.5..2.0);
        let sigma_eps = rng.random_range(0.5..2.0);
        let unit = sigma_eps / lambda;
        let rho = rng.random_range(0.05..10.0);
        let mu = rng.random_range(-3.0..3.0);
        let y = rng.random_range(-3.0..3.0);
        let v = rng.random_range(-1.0..1.0);
        let a_x = loop {
            let a: f64 = rng.random_range(-1.0..0.5);
            if a.abs() > 1e-3 {
                break a;
            }
        };
        let stage = TraderStage::new(a_x, rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let x = mu + rho * unit * rng.sample::<f64, _>(StandardNormal);
        let dp = lambda * (stage.trade(x, y, mu) + v) + sigma_eps * rng.sample::<f64, _>(StandardNormal);

        let got = update_mean(&GaussianBelief::new(mu, rho), y, v, dp / lambda, &stage).unwrap();
        let z = dp / lambda - stage.a_y * y - stage.a_mu * mu - v;
        let post = grid_posterior_mean(mu, rho * unit, a_x, z, unit);
        let want = (1.0 + a_x) * post + stage.a_y * y + stage.a_mu * mu;
        worst_mean = worst_mean.max((got - want).abs());

        let r = update_rho(rho, a_x);
        let lhs = r * r * (1.0 / (rho * rho) + a_x * a_x);
        let rhs = (1.0 + a_x) * (1.0 + a_x);
        worst_identity = worst_identity.max((lhs - rhs).abs() / rhs.max(f64::MIN_POSITIVE) / f64::EPSILON);
    }
    let pass = worst_mean <= 1e-6 && worst_identity <= 8.0;
    report(
        "6",
        "filter",
        pass,
        format!("max posterior-mean error {worst_mean:.3e} (tolerance 1e-6), variance identity within {worst_identity:.1} ulp"),
    );
    assert!(pass);
}

fn exgame(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_exgame")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn criterion_7_reproducibility() {
    let solve_args = ["solve", "--T", "20", "--rho0", "8", "--seedless"];
    let solve_same = exgame(&solve_args) == exgame(&solve_args);

    let sim_args = [
        "simulate",
        "--T",
        "20",
        "--sigma0",
        "1e5",
        "--x0",
        "1e5",
        "--lambda",
        "1e-5",
        "--sigma-eps",
        "0.125",
        "--paths",
        "3",
        "--seed",
        "42",
    ];
    let first = exgame(&sim_args);
    let sim_same = first == exgame(&sim_args);
    let sim_rows = String::from_utf8(first).unwrap().lines().count();

    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, jobs) in dirs.iter().zip(["1", "4", "4"]) {
        exgame(&[
            "--jobs",
            jobs,
            "sweep",
            "--T",
            "20",
            "--grid",
            "log:1e-2:1e3:40",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
    }
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let files = ["profits.csv", "variance.csv", "uncertainty.csv"];
    let sweep_same = files.iter().all(|f| {
        let base = read(dirs[0].path(), f);
        dirs[1..].iter().all(|d| read(d.path(), f) == base)
    });
    let golden_same = files.iter().all(|f| read(&golden, f) == read(dirs[0].path(), f));

    let pass = solve_same && sim_same && sim_rows == 1 + 3 * 22 && sweep_same && golden_same;
    report(
        "7",
        "reproducibility",
        pass,
        format!(
            "solve repeat {}, simulate repeat {} ({sim_rows} lines), sweep across --jobs {}, sweep vs golden files {}",
            same(solve_same),
            same(sim_same),
            same(sweep_same),
            same(golden_same)
        ),
    );
    assert!(pass);
}

fn same(b: bool) -> &'static str {
    if b {
        "identical"
    } else {
        "DIFFERS"
    }
}
