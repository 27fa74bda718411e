use std::path::Path;

use pdmarket_core::{
    check_pareto, demonstrate_second_welfare_failure, grid_equilibrium_scan, grid_optimize,
    r_star, second_welfare_moneys, solve, u_of_r, verify_equilibrium, Allocation,
    EquilibriumCertificate, GridSpec, KktResiduals, Market, PriceVector, RateCurvePoint,
    RateProblem, SolveConfig, UtilityCase,
};
use serde::Serialize;
use serde_json::json;

use crate::error::CliError;
use crate::report::{fmt_f64, to_json};
use crate::scenario::{load_market, load_solution};
use crate::{Case, Cli, Command, Flags, Format, Mode, Output};

#[derive(Serialize)]
struct ConfigEcho<'a> {
    #[serde(flatten)]
    command: &'a Command,
    #[serde(flatten)]
    flags: &'a Flags,
}

#[derive(Serialize)]
struct SolveReport<'a> {
    prices: &'a PriceVector,
    allocation: &'a Allocation,
    rates: Option<Vec<f64>>,
    utilities: Vec<f64>,
    objective: f64,
    kkt_residuals: KktResiduals,
    middleman_profit: Option<f64>,
    seller_revenue: Option<f64>,
    converged: bool,
    certificate_passed: bool,
    iterations: usize,
    config_echo: ConfigEcho<'a>,
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    passed: bool,
    certificate: EquilibriumCertificate,
    config_echo: ConfigEcho<'a>,
}

#[derive(Serialize)]
struct BuyerRates {
    buyer: usize,
    money: f64,
    r_star: f64,
    #[serde(rename = "U_at_r_star")]
    u_at_r_star: f64,
    curve: Vec<RateCurvePoint>,
}

#[derive(Serialize)]
struct RatesReport<'a> {
    prices: Vec<f64>,
    buyers: Vec<BuyerRates>,
    config_echo: ConfigEcho<'a>,
}

fn echo(cli: &Cli) -> ConfigEcho<'_> {
    ConfigEcho {
        command: &cli.command,
        flags: &cli.flags,
    }
}

fn solve_config(f: &Flags) -> SolveConfig {
    SolveConfig {
        tol_kkt: f.tol,
        max_iters: f.max_iter,
        seed: f.seed,
        starts: f.starts,
        case: match f.case {
            Case::Concave => UtilityCase::Concave,
            Case::Quasiconcave => UtilityCase::Quasiconcave,
        },
        ..SolveConfig::default()
    }
}

fn check_flags(f: &Flags) -> Result<(), CliError> {
    if !(f.tol > 0.0 && f.tol.is_finite()) {
        return Err(CliError::usage("--tol must be a positive number"));
    }
    if !(f.step > 0.0 && f.step <= 0.5) {
        return Err(CliError::usage("--step must lie in (0, 0.5]"));
    }
    Ok(())
}

fn json_only(f: &Flags, what: &str) -> Result<(), CliError> {
    match f.format {
        Format::Json => Ok(()),
        Format::Csv => Err(CliError::usage(format!("{what} has no CSV output; CSV is available for `rates`"))),
    }
}

fn not_certified(what: &str) -> serde_json::Value {
    json!({ "level": "warning", "kind": "not_certified", "message": what })
}

pub fn run(cli: &Cli) -> Result<Output, CliError> {
    check_flags(&cli.flags)?;
    match &cli.command {
        Command::Solve { scenario } => cmd_solve(cli, scenario),
        Command::Verify { scenario, solution } => cmd_verify(cli, scenario, solution),
        Command::Rates {
            scenario,
            prices,
            buyer,
            points,
        } => cmd_rates(cli, scenario, prices.as_deref(), *buyer, *points),
        Command::Welfare {
            scenario,
            mode,
            target,
        } => cmd_welfare(cli, scenario, *mode, target.as_deref()),
        Command::Counterexample { a, delta } => {
            json_only(&cli.flags, "counterexample")?;
            let report = demonstrate_second_welfare_failure(*a, *delta)?;
            Ok(Output {
                body: to_json(&json!({ "report": report, "config_echo": echo(cli) })),
                code: 0,
                warnings: vec![],
            })
        }
        Command::Oracle {
            scenario,
            saturate,
            scan,
        } => cmd_oracle(cli, scenario, *saturate, *scan),
    }
}

fn cmd_solve(cli: &Cli, scenario: &Path) -> Result<Output, CliError> {
    json_only(&cli.flags, "solve")?;
    let m = load_market(scenario)?;
    let r = solve(&m, &solve_config(&cli.flags))?;
    let cert = verify_equilibrium(&m, &r.x, &r.p, cli.flags.tol).ok();
    let passed = cert.as_ref().is_some_and(|c| c.passed());
    let report = SolveReport {
        prices: &r.p,
        allocation: &r.x,
        rates: cert.as_ref().map(|c| c.rates.0.clone()),
        utilities: m.utilities(&r.x)?,
        objective: r.objective,
        kkt_residuals: r.kkt_residuals,
        middleman_profit: cert.as_ref().map(|c| c.middleman_profit),
        seller_revenue: cert.as_ref().map(|c| c.seller_revenue),
        converged: r.converged,
        certificate_passed: passed,
        iterations: r.iterations,
        config_echo: echo(cli),
    };
    let mut warnings = vec![];
    if !r.converged {
        warnings.push(json!({
            "level": "warning",
            "kind": "not_converged",
            "message": format!("stopped after {} iterations with KKT residual {:e}", r.iterations, r.kkt_residuals.max()),
        }));
    } else if !passed {
        warnings.push(not_certified("equilibrium certificate failed at --tol"));
    }
    Ok(Output {
        body: to_json(&report),
        code: if r.converged && passed { 0 } else { 2 },
        warnings,
    })
}

fn cmd_verify(cli: &Cli, scenario: &Path, solution: &Path) -> Result<Output, CliError> {
    json_only(&cli.flags, "verify")?;
    let m = load_market(scenario)?;
    let (x, p) = load_solution(solution)?;
    let certificate = verify_equilibrium(&m, &x, &p, cli.flags.tol)?;
    let passed = certificate.passed();
    Ok(Output {
        body: to_json(&VerifyReport {
            passed,
            certificate,
            config_echo: echo(cli),
        }),
        code: if passed { 0 } else { 2 },
        warnings: if passed { vec![] } else { vec![not_certified("certificate failed")] },
    })
}

fn equilibrium_prices(cli: &Cli, m: &Market) -> Result<(PriceVector, Vec<serde_json::Value>), CliError> {
    let r = solve(m, &solve_config(&cli.flags))?;
    let warnings = if r.converged {
        vec![]
    } else {
        vec![json!({ "level": "warning", "kind": "not_converged", "message": "prices taken from an unconverged solve" })]
    };
    Ok((r.p, warnings))
}

fn cmd_rates(
    cli: &Cli,
    scenario: &Path,
    prices: Option<&[f64]>,
    buyer: usize,
    points: usize,
) -> Result<Output, CliError> {
    let m = load_market(scenario)?;
    if buyer >= m.n_buyers() {
        return Err(CliError::usage(format!("--buyer {buyer} out of range ({} buyers)", m.n_buyers())));
    }
    if points < 2 {
        return Err(CliError::usage("--points must be at least 2"));
    }
    let (p, warnings) = match prices {
        Some(p) => (PriceVector::new(p.to_vec())?, vec![]),
        None => equilibrium_prices(cli, &m)?,
    };
    let mut buyers = Vec::with_capacity(m.n_buyers());
    for (i, b) in m.buyers().iter().enumerate() {
        let prob = RateProblem::new(b.utility.clone(), p.clone(), b.money)?;
        let star = r_star(&prob)?;
        let curve = (0..points)
            .map(|k| {
                let e = -1.0 + 2.0 * k as f64 / (points - 1) as f64;
                u_of_r(&prob, star * 10f64.powf(e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        buyers.push(BuyerRates {
            buyer: i,
            money: b.money,
            r_star: star,
            u_at_r_star: u_of_r(&prob, star)?.u,
            curve,
        });
    }
    let body = match cli.flags.format {
        Format::Json => to_json(&RatesReport {
            prices: p.0.clone(),
            buyers,
            config_echo: echo(cli),
        }),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| CliError::usage(e.to_string());
            w.write_record(["r", "U", "capped"]).map_err(csv_err)?;
            for pt in &buyers[buyer].curve {
                w.write_record([fmt_f64(pt.r), fmt_f64(pt.u), pt.capped.to_string()])
                    .map_err(csv_err)?;
            }
            String::from_utf8(w.into_inner().map_err(|e| CliError::usage(e.to_string()))?)
                .expect("utf-8")
        }
    };
    Ok(Output {
        body,
        code: 0,
        warnings,
    })
}

fn cmd_welfare(cli: &Cli, scenario: &Path, mode: Mode, target: Option<&[f64]>) -> Result<Output, CliError> {
    json_only(&cli.flags, "welfare")?;
    let m = load_market(scenario)?;
    let step = cli.flags.step;
    match mode {
        Mode::First => {
            if target.is_some() {
                return Err(CliError::usage("--target is only used with --mode second"));
            }
            let r = solve(&m, &solve_config(&cli.flags))?;
            let utilities = m.utilities(&r.x)?;
            let pareto = check_pareto(&m, &utilities, step)?;
            let ok = pareto.pareto_ok;
            let mut warnings = vec![];
            if !r.converged {
                warnings.push(json!({ "level": "warning", "kind": "not_converged", "message": "checked an unconverged solve" }));
            }
            if !ok {
                warnings.push(not_certified("a grid allocation dominates the equilibrium"));
            }
            Ok(Output {
                body: to_json(&json!({
                    "mode": mode,
                    "utilities": utilities,
                    "converged": r.converged,
                    "pareto": pareto,
                    "config_echo": echo(cli),
                })),
                code: if ok && r.converged { 0 } else { 2 },
                warnings,
            })
        }
        Mode::Second => {
            let target = target.ok_or_else(|| CliError::usage("--mode second needs --target u1,u2,..."))?;
            let sw = second_welfare_moneys(&m, target, step)?;
            let resolved = solve(&m.with_moneys(&sw.moneys)?, &solve_config(&cli.flags))?;
            let utilities = m.utilities(&resolved.x)?;
            let err = utilities
                .iter()
                .zip(target)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            Ok(Output {
                body: to_json(&json!({
                    "mode": mode,
                    "target": target,
                    "second_welfare": sw,
                    "resolved_utilities": utilities,
                    "round_trip_error": err,
                    "converged": resolved.converged,
                    "config_echo": echo(cli),
                })),
                code: if resolved.converged { 0 } else { 2 },
                warnings: vec![],
            })
        }
    }
}

fn cmd_oracle(cli: &Cli, scenario: &Path, saturate: bool, scan: bool) -> Result<Output, CliError> {
    json_only(&cli.flags, "oracle")?;
    let m = load_market(scenario)?;
    let spec = if saturate {
        GridSpec::saturating(cli.flags.step)?
    } else {
        GridSpec::new(cli.flags.step)?
    };
    let best = grid_optimize(&m, &spec)?;
    let utilities = m.utilities(&best.allocation)?;
    let entries = if scan {
        Some(grid_equilibrium_scan(&m, &spec, cli.flags.tol)?)
    } else {
        None
    };
    Ok(Output {
        body: to_json(&json!({
            "objective": best.objective,
            "allocation": best.allocation,
            "utilities": utilities,
            "points": best.points,
            "grid": spec,
            "scan": entries,
            "config_echo": echo(cli),
        })),
        code: 0,
        warnings: vec![],
    })
}
