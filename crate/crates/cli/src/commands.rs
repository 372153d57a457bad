use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use execution_game::analytics::{decompose, equipartition_alone, profit_cdf, profit_variance, spillover, summarize};
use execution_game::equilibrium::{forward_rho, solve_pbe, solve_pbe_bisection, Equilibrium, SolverOptions};
use execution_game::model::ModelParams;
use execution_game::policies::{
    arb_best_response_policy, equipartition, evaluate_pair, minimum_revelation, variable_time, zero_arb, ArbPolicy,
    TraderPolicy,
};
use execution_game::sim::{simulate, SimInit};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{
    parse_grid, resolve_model, resolve_solver, BenchArgs, CdfArgs, Cli, Command, DecomposeArgs, Method, PolicyName,
    RunConfig, SimulateArgs, SolveArgs, SweepArgs, DEFAULT_GRID, DEFAULT_SEED,
};
use crate::error::CliError;
use crate::output::{csv_writer, num, write_json};

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = RunConfig::load(cli.config.as_deref())?;
    let jobs = cli.jobs.or(file.jobs).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Solve(a) => cmd_solve(a, &file),
        Command::Sweep(a) => cmd_sweep(a, &file),
        Command::Simulate(a) => cmd_simulate(a, &file),
        Command::Bench(a) => cmd_bench(a, &file),
        Command::Decompose(a) => cmd_decompose(a, &file),
        Command::Cdf(a) => cmd_cdf(a, &file),
    })
}

fn out_path<'a>(flag: &'a Option<PathBuf>, file: &'a RunConfig) -> Option<&'a Path> {
    flag.as_deref().or(file.out.as_deref())
}

fn solve(params: &ModelParams, opts: &SolverOptions, method: Method) -> Result<Equilibrium, CliError> {
    Ok(match method {
        Method::FixedPoint => solve_pbe(params, opts)?,
        Method::Bisection => solve_pbe_bisection(params, opts)?,
    })
}

/// Trader policy and the arbitrageur strategy it is benchmarked against.
fn policy_pair(
    name: PolicyName,
    params: &ModelParams,
    opts: &SolverOptions,
    method: Method,
) -> Result<(TraderPolicy, ArbPolicy), CliError> {
    let (horizon, rho0, extra) = (params.horizon, params.rho0, params.arb_extra_periods);
    let responded = |trader: TraderPolicy| -> Result<(TraderPolicy, ArbPolicy), CliError> {
        let (arb, _) = arb_best_response_policy(&trader, rho0, extra)?;
        Ok((trader, arb))
    };
    match name {
        PolicyName::Pbe => {
            let eq = solve(params, opts, method)?;
            Ok((TraderPolicy::from_equilibrium(&eq), ArbPolicy::from_equilibrium(&eq)))
        }
        PolicyName::Eq => responded(equipartition(horizon)),
        PolicyName::Mr => responded(minimum_revelation(horizon)),
        PolicyName::Vt => {
            let vt = variable_time(horizon, rho0, extra)?;
            Ok((vt.trader, vt.arb))
        }
        PolicyName::EqAlone => Ok((equipartition(horizon), zero_arb(horizon, extra))),
    }
}

fn dedup(list: Vec<PolicyName>) -> Vec<PolicyName> {
    let mut out = Vec::with_capacity(list.len());
    for p in list {
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

fn cmd_solve(a: &SolveArgs, file: &RunConfig) -> Result<(), CliError> {
    let params = resolve_model(&a.model, file)?;
    let (opts, method) = resolve_solver(&a.solver, file)?;
    let eq = solve(&params, &opts, method)?;
    write_json(out_path(&a.out, file), &eq.record())
}

/// Metrics of one policy at one grid point.
struct PolicyPoint {
    u: f64,
    v: f64,
    var: f64,
    rel_rho: Vec<f64>,
}

impl PolicyPoint {
    fn missing(horizon: usize) -> Self {
        Self {
            u: f64::NAN,
            v: f64::NAN,
            var: f64::NAN,
            rel_rho: vec![f64::NAN; horizon],
        }
    }
}

fn sweep_point(
    name: PolicyName,
    params: &ModelParams,
    opts: &SolverOptions,
    method: Method,
) -> Result<PolicyPoint, CliError> {
    let (trader, arb) = policy_pair(name, params, opts, method)?;
    let values = evaluate_pair(&trader, &arb, params.rho0);
    let rho = forward_rho(params.rho0, &trader.stages);
    Ok(PolicyPoint {
        u: values.u_bar,
        v: values.v_bar,
        var: profit_variance(&trader, &arb, params.rho0),
        rel_rho: rho[..params.horizon].iter().map(|r| r / params.rho0).collect(),
    })
}

fn cmd_sweep(a: &SweepArgs, file: &RunConfig) -> Result<(), CliError> {
    let base = resolve_model(&a.model, file)?;
    let (opts, method) = resolve_solver(&a.solver, file)?;
    let grid = parse_grid(a.grid.as_deref().or(file.grid.as_deref()).unwrap_or(DEFAULT_GRID))?;
    let policies = dedup(a.policies.clone().or_else(|| file.policies.clone()).unwrap_or_else(|| {
        vec![
            PolicyName::Pbe,
            PolicyName::Eq,
            PolicyName::Mr,
            PolicyName::Vt,
            PolicyName::EqAlone,
        ]
    }));
    if policies.is_empty() {
        return Err(CliError::Validation("no policies requested".into()));
    }
    let dir = a
        .out_dir
        .as_deref()
        .or(file.out_dir.as_deref())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))?;

    let horizon = base.horizon;
    let rows: Vec<Vec<Result<PolicyPoint, CliError>>> = grid
        .par_iter()
        .map(|&rho0| {
            let params = ModelParams { rho0, ..base };
            policies
                .iter()
                .map(|&p| {
                    params
                        .validate()
                        .map_err(|e| CliError::Validation(e.to_string()))
                        .and_then(|_| sweep_point(p, &params, &opts, method))
                })
                .collect()
        })
        .collect();

    let mut failures = Vec::new();
    let points: Vec<Vec<PolicyPoint>> = rows
        .into_iter()
        .zip(&grid)
        .map(|(row, rho0)| {
            row.into_iter()
                .zip(&policies)
                .map(|(r, p)| {
                    r.unwrap_or_else(|e| {
                        failures.push((*rho0, *p, e));
                        PolicyPoint::missing(horizon)
                    })
                })
                .collect()
        })
        .collect();

    let pbe = policies.iter().position(|p| *p == PolicyName::Pbe);

    let mut w = csv_writer(Some(&dir.join("profits.csv")))?;
    let mut header = vec!["rho0".to_string()];
    for p in &policies {
        header.push(format!("u_{}", p.label()));
        if *p != PolicyName::EqAlone {
            header.push(format!("v_{}", p.label()));
        }
    }
    if pbe.is_some() {
        header.push("spillover".into());
    }
    w.write_record(&header)?;
    for (rho0, row) in grid.iter().zip(&points) {
        let mut rec = vec![num(*rho0)];
        for (p, m) in policies.iter().zip(row) {
            rec.push(num(m.u));
            if *p != PolicyName::EqAlone {
                rec.push(num(m.v));
            }
        }
        if let Some(i) = pbe {
            rec.push(num(spillover(row[i].u, row[i].v, horizon)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv_writer(Some(&dir.join("variance.csv")))?;
    let mut header = vec!["rho0".to_string()];
    header.extend(policies.iter().map(|p| format!("var_{}", p.label())));
    w.write_record(&header)?;
    for (rho0, row) in grid.iter().zip(&points) {
        let mut rec = vec![num(*rho0)];
        rec.extend(row.iter().map(|m| num(m.var)));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv_writer(Some(&dir.join("uncertainty.csv")))?;
    let mut header = vec!["rho0".to_string(), "t".to_string()];
    header.extend(policies.iter().map(|p| p.label().to_string()));
    w.write_record(&header)?;
    for (rho0, row) in grid.iter().zip(&points) {
        for t in 0..horizon {
            let mut rec = vec![num(*rho0), t.to_string()];
            rec.extend(row.iter().map(|m| num(m.rel_rho[t])));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;

    match failures.len() {
        0 => Ok(()),
        n => {
            let (rho0, p, first) = failures.swap_remove(0);
            let msg = format!(
                "{n} sweep cell(s) failed; first at rho0={rho0} policy={}: {first}",
                p.label()
            );
            Err(match first {
                CliError::NotConverged(_) => CliError::NotConverged(msg),
                CliError::Validation(_) => CliError::Validation(msg),
                CliError::Io(_) => CliError::Io(msg),
                CliError::Stage(_) => CliError::Stage(msg),
            })
        }
    }
}

fn cmd_simulate(a: &SimulateArgs, file: &RunConfig) -> Result<(), CliError> {
    let params = resolve_model(&a.model, file)?;
    let (opts, method) = resolve_solver(&a.solver, file)?;
    let policy = a.policy.or(file.policy).unwrap_or(PolicyName::Pbe);
    let n_paths = a.paths.or(file.paths).unwrap_or(3);
    let seed = a.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let antithetic = a.antithetic || file.antithetic.unwrap_or(false);
    if antithetic && !n_paths.is_multiple_of(2) {
        return Err(CliError::Validation("antithetic runs need an even path count".into()));
    }
    let (trader, arb) = policy_pair(policy, &params, &opts, method)?;
    let mut init = SimInit::new(params.lambda, params.sigma_eps, params.sigma0());
    if let Some(x0) = a.x0.or(file.x0) {
        if !x0.is_finite() {
            return Err(CliError::Validation(format!("x0 must be finite, got {x0}")));
        }
        init = init.with_x0(x0);
    }

    let mut w = csv_writer(out_path(&a.out, file))?;
    w.write_record([
        "path",
        "t",
        "x",
        "y",
        "mu",
        "rho",
        "p",
        "u",
        "v",
        "delta_p",
        "trader_profit_increment",
        "arb_profit_increment",
        "eps",
    ])?;
    for rec in simulate(&trader, &arb, &init, n_paths, seed, antithetic) {
        for t in 0..rec.len() {
            let eps = if t == 0 { 0.0 } else { rec.eps[t - 1] };
            w.write_record([
                rec.path.to_string(),
                t.to_string(),
                num(rec.x[t]),
                num(rec.y[t]),
                num(rec.mu[t]),
                num(rec.rho[t]),
                num(rec.p[t]),
                num(rec.u[t]),
                num(rec.v[t]),
                num(rec.delta_p[t]),
                num(rec.trader_profit_increment[t]),
                num(rec.arb_profit_increment[t]),
                num(eps),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_bench(a: &BenchArgs, file: &RunConfig) -> Result<(), CliError> {
    let params = resolve_model(&a.model, file)?;
    let (opts, method) = resolve_solver(&a.solver, file)?;
    let eq = solve(&params, &opts, method)?;
    let rho0 = params.rho0;
    let extra = params.arb_extra_periods;
    let mut policies = BTreeMap::new();
    policies.insert(
        "pbe",
        summarize(
            &TraderPolicy::from_equilibrium(&eq),
            &ArbPolicy::from_equilibrium(&eq),
            rho0,
        ),
    );
    for name in [PolicyName::Eq, PolicyName::Mr, PolicyName::EqAlone] {
        let (trader, arb) = policy_pair(name, &params, &opts, method)?;
        policies.insert(name.label(), summarize(&trader, &arb, rho0));
    }
    let vt = variable_time(params.horizon, rho0, extra)?;
    policies.insert("vt", summarize(&vt.trader, &vt.arb, rho0));
    let summary = json!({
        "T": params.horizon,
        "rho0": rho0,
        "arb_extra_periods": extra,
        "equipartition_alone": equipartition_alone(params.horizon),
        "vt_tau": vt.tau,
        "iterations": eq.iterations,
        "residual": eq.residual,
        "policies": policies,
    });
    write_json(out_path(&a.out, file), &summary)
}

fn cmd_decompose(a: &DecomposeArgs, file: &RunConfig) -> Result<(), CliError> {
    let params = resolve_model(&a.model, file)?;
    let (opts, method) = resolve_solver(&a.solver, file)?;
    let policy = a.policy.or(file.policy).unwrap_or(PolicyName::Pbe);
    let (trader, arb) = policy_pair(policy, &params, &opts, method)?;
    let dec = decompose(&trader, &arb, params.rho0);
    let mut w = csv_writer(out_path(&a.out, file))?;
    w.write_record(["t", "source", "alpha", "beta", "gamma"])?;
    for t in 0..dec.alpha_x0.len() {
        w.write_record([
            t.to_string(),
            "x0".into(),
            num(dec.alpha_x0[t]),
            num(dec.beta_x0[t]),
            num(dec.gamma_x0[t]),
        ])?;
        for s in 0..t {
            w.write_record([
                t.to_string(),
                format!("eps_{}", s + 1),
                num(dec.alpha_eps[t][s]),
                num(dec.beta_eps[t][s]),
                num(dec.gamma_eps[t][s]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_cdf(a: &CdfArgs, file: &RunConfig) -> Result<(), CliError> {
    let params = resolve_model(&a.model, file)?;
    let (opts, method) = resolve_solver(&a.solver, file)?;
    let policies = dedup(
        a.policies
            .clone()
            .or_else(|| file.policies.clone())
            .unwrap_or_else(|| vec![PolicyName::Pbe, PolicyName::Eq, PolicyName::Mr]),
    );
    let n_paths = a.paths.or(file.paths).unwrap_or(100_000);
    let seed = a.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let mut w = csv_writer(out_path(&a.out, file))?;
    w.write_record(["policy", "profit", "probability"])?;
    for name in policies {
        let (trader, arb) = policy_pair(name, &params, &opts, method)?;
        for point in profit_cdf(&trader, &arb, params.rho0, n_paths, seed) {
            w.write_record([name.label().to_string(), num(point.profit), num(point.probability)])?;
        }
    }
    w.flush()?;
    Ok(())
}
