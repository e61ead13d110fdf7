use std::io::IsTerminal;

use fairthresh_core::ahp::{self, check_consistency, weigh, DEFAULT_MAX_ITER, DEFAULT_TOL};
use fairthresh_core::cohort::{generate_cohort, save_cohort};
use fairthresh_core::fairmetrics::evaluate_point;
use fairthresh_core::optimizer::{grid_minimize, tpe_minimize, write_history, UtilityBasis};
use fairthresh_core::tradeoff::{export_cloud, metric_ranges, sample_cloud};
use fairthresh_core::{
    AhpResult, Objective, OptimizationResult, SyntheticSpec, ThresholdPair, TpeConfig,
};
use fairthresh_service::{serve as run_service, ServiceConfig};
use serde_json::json;

use crate::args::{
    read_raters, Basis, EvaluateArgs, GenerateArgs, OptimizeArgs, Oracle, SampleArgs, ServeArgs, WeightsArgs,
};
use crate::{interactive, report, CliError, CliResult};

pub fn generate(a: GenerateArgs, json: bool) -> CliResult {
    let spec = SyntheticSpec {
        n_total: a.n,
        unprivileged_fraction: a.unp_frac,
        positive_rate_priv: a.pos_rate_priv,
        positive_rate_unp: a.pos_rate_unp,
        seed: a.seed,
        ..SyntheticSpec::default()
    };
    let cohort = generate_cohort(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    save_cohort(&cohort, &a.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    let s = cohort.summary();
    if json {
        report::print_json(&json!({ "out": a.out, "summary": s }))
    } else {
        println!("N_p={} N_unp={}", s.n_privileged, s.n_unprivileged);
        println!(
            "positive rate: privileged {:.4}, unprivileged {:.4}",
            s.positive_rate_privileged, s.positive_rate_unprivileged
        );
        println!("wrote {}", a.out.display());
        Ok(())
    }
}

pub fn evaluate(a: EvaluateArgs, json: bool) -> CliResult {
    let (costs, bounds) = a.costs.resolve()?;
    let thresholds = ThresholdPair::new(a.t_unp, a.t_priv)
        .ok_or_else(|| CliError::Usage(format!("thresholds must lie in [0, 1], got ({}, {})", a.t_unp, a.t_priv)))?;
    let cohort = a.cohort.load()?;
    let p = evaluate_point(&cohort, thresholds, &costs, bounds);
    if json {
        report::print_json(&p)
    } else {
        report::point(&p);
        Ok(())
    }
}

pub fn sample(a: SampleArgs, json: bool) -> CliResult {
    if a.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let (costs, bounds) = a.costs.resolve()?;
    let cohort = a.cohort.load()?;
    let cloud = sample_cloud(&cohort, &costs, a.n, bounds, a.seed, a.keep_infeasible)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    export_cloud(&cloud, &a.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    let ranges = metric_ranges(&cloud).ok();
    if json {
        return report::print_json(&json!({
            "out": a.out,
            "sample_count": cloud.sample_count,
            "kept_count": cloud.kept_count,
            "seed": cloud.seed,
            "ranges": ranges,
        }));
    }
    println!("sampled {} pairs, kept {} -> {}", cloud.sample_count, cloud.kept_count, a.out.display());
    if let Some(r) = ranges {
        report::ranges(&r);
    }
    Ok(())
}

fn solve(a: Option<&fairthresh_core::AhpRatings>, raters: Option<&std::path::PathBuf>) -> CliResult<AhpResult> {
    if let Some(path) = raters {
        let matrix = ahp::aggregate(&read_raters(path)?).map_err(|e| CliError::Usage(e.to_string()))?;
        return ahp::principal_eigen(&matrix, DEFAULT_TOL, DEFAULT_MAX_ITER).map_err(|e| CliError::Runtime(e.to_string()));
    }
    Ok(weigh(a.expect("ratings or raters present")))
}

fn gate(result: &AhpResult) -> CliResult {
    match check_consistency(result) {
        (true, _) => Ok(()),
        (false, message) => Err(CliError::Inconsistent(message)),
    }
}

pub fn weights(a: WeightsArgs, json: bool) -> CliResult {
    let result = if a.interactive {
        let template = a.question_template.as_deref().unwrap_or(ahp::DEFAULT_QUESTION_TEMPLATE);
        let stdin = std::io::stdin();
        if stdin.is_terminal() {
            eprintln!("Answer each question with 1 or 2, then a number from 1 to 9.");
        }
        let ratings = interactive::elicit(stdin.lock(), std::io::stderr(), template)?;
        eprintln!();
        weigh(&ratings)
    } else {
        solve(a.ratings.as_ref(), a.raters.as_ref())?
    };
    if json {
        report::print_json(&result)?;
    } else {
        report::ahp(&result);
    }
    gate(&result)
}

pub fn optimize(a: OptimizeArgs, json: bool) -> CliResult {
    let (costs, bounds) = a.costs.resolve()?;
    let (weights, ahp_result) = match a.weights {
        Some(w) => (w, None),
        None => {
            let r = solve(a.ratings.as_ref(), a.raters.as_ref())?;
            gate(&r)?;
            (r.weights, Some(r))
        }
    };
    let objective = Objective {
        weights,
        scales: a.scales.unwrap_or_default(),
        di_bounds: bounds,
        utility_basis: match a.utility_basis {
            Basis::PerApplicant => UtilityBasis::PerApplicant,
            Basis::Total => UtilityBasis::Total,
        },
    };
    objective.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let config = TpeConfig {
        n_trials: a.trials,
        n_startup: a.startup,
        gamma: a.gamma,
        n_candidates: a.candidates,
        seed: a.seed,
        bandwidth_floor_divisor: a.bandwidth_divisor,
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if a.oracle == Oracle::Grid && !(a.grid_step > 0.0 && a.grid_step <= 0.5) {
        return Err(CliError::Usage("--grid-step must lie in (0, 0.5]".into()));
    }
    let cohort = a.cohort.load()?;

    let result = tpe_minimize(&cohort, &costs, &objective, &config).map_err(|e| CliError::Usage(e.to_string()))?;
    let grid: Option<OptimizationResult> = match a.oracle {
        Oracle::Grid => {
            Some(grid_minimize(&cohort, &costs, &objective, a.grid_step).map_err(|e| CliError::Usage(e.to_string()))?)
        }
        Oracle::None => None,
    };
    let gap = match (&grid, result.best_objective()) {
        (Some(g), Some(t)) => g.best_objective().map(|g| t - g),
        _ => None,
    };

    if let Some(path) = &a.out {
        let text = serde_json::to_string_pretty(&result).map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }
    if let Some(path) = &a.history {
        let file = std::fs::File::create(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        write_history(&result, std::io::BufWriter::new(file)).map_err(|e| CliError::Runtime(e.to_string()))?;
    }

    if json {
        report::print_json(&json!({
            "weights": objective.weights,
            "ahp": ahp_result,
            "scales": objective.scales,
            "best": result.best,
            "diagnostic": result.diagnostic,
            "oracle": grid.as_ref().map(|g| json!({
                "method": "grid",
                "step": a.grid_step,
                "best": g.best,
                "gap": gap,
            })),
        }))?;
    } else {
        let w = objective.weights;
        println!("weights  utility {:.3}  spd {:.3}  waod {:.3}", w.utility, w.spd, w.waod);
        let mut rows = vec![("tpe", result.best.as_ref())];
        if let Some(g) = &grid {
            rows.push(("grid", g.best.as_ref()));
        }
        report::trial_table(&rows);
        if let Some(gap) = gap {
            println!("objective gap (tpe - grid): {gap:+.4}");
        }
    }
    match result.diagnostic {
        Some(d) if result.best.is_none() => Err(CliError::Runtime(d)),
        _ => Ok(()),
    }
}

pub fn serve(a: ServeArgs) -> CliResult {
    let mut config = ServiceConfig::new(&a.data_dir);
    config.workers = a.workers.max(1);
    config.static_dir = a.static_dir;
    if let Some(t) = a.question_template {
        config.question_template = t;
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime
        .block_on(run_service(config, a.addr, |bound| {
            println!("listening on http://{bound} (data dir {})", a.data_dir.display());
        }))
        .map_err(|e| CliError::Runtime(e.to_string()))
}
