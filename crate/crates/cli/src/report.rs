use fairthresh_core::optimizer::Trial;
use fairthresh_core::{AhpResult, MetricPoint, MetricRanges};
use serde::Serialize;

use crate::{CliError, CliResult};

pub fn print_json(value: &impl Serialize) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn kv(rows: &[(&str, String)]) {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in rows {
        println!("{k:<width$}  {v}");
    }
}

pub fn point(p: &MetricPoint) {
    kv(&[
        ("t_unp", format!("{:.4}", p.thresholds.t_unp)),
        ("t_priv", format!("{:.4}", p.thresholds.t_priv)),
        ("spd", format!("{:+.6}", p.spd)),
        ("waod", format!("{:+.6}", p.waod)),
        ("di_ratio", p.di_ratio.to_token(Some(4))),
        ("utility", format!("{:.2}", p.utility_total)),
        ("utility/applicant", format!("{:.2}", p.utility_per_applicant)),
        ("feasible", if p.feasible { "yes" } else { "no" }.into()),
    ]);
}

pub fn ranges(r: &MetricRanges) {
    println!("{:<18}{:>14}{:>14}", "metric", "min", "max");
    for (name, range) in [("spd", r.spd), ("waod", r.waod), ("utility/applicant", r.utility_per_applicant)] {
        println!("{name:<18}{:>14.4}{:>14.4}", range.min, range.max);
    }
}

pub fn ahp(result: &AhpResult) {
    let w = result.weights;
    kv(&[
        ("utility", format!("{:.4}", w.utility)),
        ("spd", format!("{:.4}", w.spd)),
        ("waod", format!("{:.4}", w.waod)),
        ("lambda_max", format!("{:.6}", result.lambda_max)),
        ("CI", format!("{:.6}", result.consistency_index)),
        ("CR", format!("{:.6}", result.consistency_ratio)),
        ("consistent", if result.consistent { "yes" } else { "no" }.into()),
    ]);
}

pub fn trial_table(rows: &[(&str, Option<&Trial>)]) {
    println!(
        "{:<8}{:>9}{:>9}{:>12}{:>10}{:>10}{:>9}{:>11}",
        "method", "t_unp", "t_priv", "util/appl", "spd", "waod", "di", "objective"
    );
    for (name, trial) in rows {
        match trial {
            Some(t) => {
                let p = &t.point;
                let obj = t.objective.value().map_or("-".to_string(), |v| format!("{v:.4}"));
                println!(
                    "{name:<8}{:>9.4}{:>9.4}{:>12.2}{:>10.4}{:>10.4}{:>9}{obj:>11}",
                    p.thresholds.t_unp,
                    p.thresholds.t_priv,
                    p.utility_per_applicant,
                    p.spd,
                    p.waod,
                    p.di_ratio.to_token(Some(3)),
                );
            }
            None => println!("{name:<8}  no feasible trial"),
        }
    }
}
