use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use gslope::groups::{build_partition, standardize, StandardizedDesign};
use gslope::sigma::{estimate_sigma_gslope, SigmaConfig, SigmaTrace};
use gslope::sim::{format_float, run_scenario, RunOptions, Scenario};
use gslope::solver::{solve as solve_problem, GSlopeFit, GSlopeProblem, Sigma, SolverConfig};
use gslope::{GroupSpec, LambdaMethod, LambdaSeq, WeightMode};
use nalgebra::DVector;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::io;
use crate::scenarios;
use crate::{LambdaArgs, SimulateArgs, SolveArgs};

/// Group ids in order of first appearance.
fn group_ids(labels: &[String]) -> Vec<String> {
    let mut ids: Vec<String> = Vec::new();
    for l in labels {
        if !ids.contains(l) {
            ids.push(l.clone());
        }
    }
    ids
}

fn load_design(args: &SolveArgs) -> CliResult<(DVector<f64>, StandardizedDesign, Vec<String>)> {
    let x = io::read_matrix(&args.x)?;
    let y = io::read_column(&args.y)?;
    if y.len() != x.nrows() {
        return Err(CliError::input(format!(
            "dimension mismatch: {} has {} rows, {} has {} values",
            args.x.display(),
            x.nrows(),
            args.y.display(),
            y.len()
        )));
    }
    let labels = io::read_groups(&args.groups, x.ncols())?;
    let ids = group_ids(&labels);
    let weights = match &args.weights {
        Some(path) => {
            let table = io::read_weights(path)?;
            let w = ids
                .iter()
                .map(|id| {
                    table
                        .get(id)
                        .copied()
                        .ok_or_else(|| CliError::input(format!("{}: no weight for group '{id}'", path.display())))
                })
                .collect::<CliResult<Vec<f64>>>()?;
            Some(w)
        }
        None => None,
    };
    let partition = build_partition(&labels, weights.as_deref())?;
    let mut design = standardize(&x, &partition, args.rank_tol)?;
    if args.weights.is_none() {
        let mode: WeightMode = args.weights_mode.into();
        let w = mode.weights(&design.ranks());
        design = design.with_weights(w)?;
    }
    Ok((DVector::from_vec(y), design, ids))
}

fn load_lambda(args: &SolveArgs, design: &StandardizedDesign) -> CliResult<LambdaSeq> {
    let m = design.n_groups();
    if let Some(path) = &args.lambda {
        let values = io::read_column(path)?;
        if values.len() != m {
            return Err(CliError::input(format!(
                "dimension mismatch: {} has {} values for {m} groups",
                path.display(),
                values.len()
            )));
        }
        return Ok(LambdaSeq::new(values)?);
    }
    let method: LambdaMethod = args.lambda_method.expect("clap enforces a lambda source").into();
    let q = args.q.expect("clap requires --q with --lambda-method");
    let spec = GroupSpec::new(design.ranks(), design.weights().to_vec(), q)?.with_n(design.n_rows());
    Ok(method.generate(&spec)?)
}

fn fit_json(
    fit: &GSlopeFit,
    design: &StandardizedDesign,
    ids: &[String],
    lambda: &LambdaSeq,
    trace: Option<&SigmaTrace>,
) -> Value {
    let names = |groups: &[usize]| groups.iter().map(|&g| ids[g].clone()).collect::<Vec<_>>();
    let sigma_estimation = trace.map(|t| {
        json!({
            "converged": t.converged,
            "cycle_detected": t.cycle_detected,
            "rounds": t.iterations.iter().map(|r| json!({
                "support": names(&r.support),
                "sigma": r.sigma,
            })).collect::<Vec<_>>(),
        })
    });
    json!({
        "converged": fit.converged,
        "iterations": fit.iterations,
        "duality_gap": fit.duality_gap,
        "infeasibility": fit.infeasibility,
        "objective": fit.objective,
        "sigma_used": fit.sigma_used,
        "sigma_estimation": sigma_estimation,
        "groups": ids,
        "ranks": design.ranks(),
        "weights": design.weights(),
        "lambda": lambda.values(),
        "selected": names(&fit.selected),
        "effects": fit.effects.values(),
        "beta": fit.beta.as_slice(),
    })
}

fn effects_csv(fit: &GSlopeFit, ids: &[String]) -> String {
    let mut out = String::from("group_id,effect\n");
    for (id, e) in ids.iter().zip(fit.effects.values()) {
        let _ = writeln!(out, "{},{}", csv_field(id), format_float(*e));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn solve(args: SolveArgs, force_estimate: bool) -> CliResult<()> {
    let (y, design, ids) = load_design(&args)?;
    let lambda = load_lambda(&args, &design)?;
    let config = SolverConfig {
        gap_tol: args.gap_tol,
        infeas_tol: args.infeas_tol,
        max_iter: args.max_iter,
        ..SolverConfig::default()
    };
    config.validate()?;
    let estimate = force_estimate || args.estimate_sigma;
    let (fit, trace) = if estimate {
        let sigma_config = SigmaConfig {
            intercept: !args.no_intercept,
            ..SigmaConfig::default()
        };
        let (fit, trace) = estimate_sigma_gslope(&y, &design, &lambda, &config, &sigma_config)?;
        (fit, Some(trace))
    } else {
        let problem = GSlopeProblem::new(y, design.clone(), lambda.clone(), Sigma::Known(args.sigma))?;
        (solve_problem(&problem, &config)?, None)
    };
    if !fit.converged {
        return Err(CliError::NotConverged(format!(
            "no convergence after {} iterations (gap {:e}, infeasibility {:e}); nothing written",
            fit.iterations, fit.duality_gap, fit.infeasibility
        )));
    }
    let json = fit_json(&fit, &design, &ids, &lambda, trace.as_ref());
    let text = serde_json::to_string_pretty(&json).expect("plain JSON values") + "\n";
    let effects = effects_csv(&fit, &ids);
    io::create_dir(&args.out)?;
    io::write_file(&args.out.join("fit.json"), &text)?;
    io::write_file(&args.out.join("effects.csv"), &effects)?;
    eprintln!(
        "converged in {} iterations; {} of {} groups selected",
        fit.iterations,
        fit.selected.len(),
        ids.len()
    );
    Ok(())
}

pub fn lambdas(args: LambdaArgs) -> CliResult<()> {
    let (ranks, source) = match (&args.ranks, args.rank) {
        (Some(path), _) => {
            let ranks = io::read_counts(path)?;
            if let Some(m) = args.m {
                if m != ranks.len() {
                    return Err(CliError::input(format!(
                        "dimension mismatch: --m {m} but {} lists {} ranks",
                        path.display(),
                        ranks.len()
                    )));
                }
            }
            (ranks, format!("file {}", path.display()))
        }
        (None, Some(rank)) => {
            let m = args.m.expect("clap requires --m with --rank");
            (vec![rank; m], format!("uniform {rank}"))
        }
        (None, None) => unreachable!("clap requires a rank source"),
    };
    let method: LambdaMethod = args.method.into();
    let mode: WeightMode = args.weights.into();
    if method.needs_n() && args.n.is_none() {
        return Err(CliError::input(format!(
            "--n is required for --method {}",
            method.name()
        )));
    }
    let mut spec = GroupSpec::new(ranks.clone(), mode.weights(&ranks), args.q)?;
    if let Some(n) = args.n {
        spec = spec.with_n(n);
    }
    let lambda = method.generate(&spec)?;

    let mut out = String::new();
    let _ = writeln!(out, "# method={}", method.name());
    let _ = writeln!(out, "# q={}", args.q);
    let _ = writeln!(out, "# m={}", ranks.len());
    match args.n {
        Some(n) => {
            let _ = writeln!(out, "# n={n}");
        }
        None => out.push_str("# n=none\n"),
    }
    let _ = writeln!(out, "# weights={}", mode.name());
    let _ = writeln!(out, "# ranks={source}");
    out.push_str("lambda\n");
    for v in lambda.values() {
        let _ = writeln!(out, "{}", format_float(*v));
    }
    match &args.out {
        Some(path) => io::write_file(path, &out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn load_scenario(name: &str) -> CliResult<Scenario> {
    let path = Path::new(name);
    let text = if path.exists() {
        std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{name}: {e}")))?
    } else if let Some(text) = scenarios::bundled(name) {
        text.to_string()
    } else {
        let names: Vec<&str> = scenarios::BUNDLED.iter().map(|(n, _)| *n).collect();
        return Err(CliError::input(format!(
            "no scenario file or bundled scenario named '{name}' (bundled: {})",
            names.join(", ")
        )));
    };
    Scenario::from_toml(&text).map_err(|e| CliError::input(format!("{name}: {e}")))
}

pub fn simulate(args: SimulateArgs) -> CliResult<()> {
    if args.list {
        for (name, _) in scenarios::BUNDLED {
            println!("{name}");
        }
        return Ok(());
    }
    let mut scenario = load_scenario(args.scenario.as_deref().expect("clap requires a scenario"))?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(r) = args.replicates {
        scenario.replicates = r;
    }
    if args.full_size {
        scenario = scenario.full_size();
    }
    scenario.validate()?;
    if args.threads == Some(0) {
        return Err(CliError::input("--threads must be at least 1"));
    }

    let name = scenario.name.clone();
    let reported = AtomicUsize::new(0);
    let progress = |done: usize, total: usize| {
        let pct = done * 100 / total;
        if pct / 5 > reported.load(Ordering::Relaxed) / 5 || done == total {
            reported.fetch_max(pct, Ordering::Relaxed);
            eprintln!("{name}: {done}/{total} replicates");
        }
    };
    let options = RunOptions {
        threads: args.threads,
        progress: Some(&progress),
        ..RunOptions::default()
    };
    let report = run_scenario(&scenario, &options)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let out = args.out.as_ref().expect("clap requires --out");
    io::create_dir(out)?;
    io::write_file(&out.join(format!("{name}.csv")), &report.to_csv())?;
    if let Some(strg) = report.strg_csv() {
        io::write_file(&out.join(format!("{name}_strg.csv")), &strg)?;
    }
    Ok(())
}
