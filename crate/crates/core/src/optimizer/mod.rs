//! Preference-weighted threshold search under the disparate-impact band.
//!
//! The objective is
//! `-U * w_util / s_util + |SPD| * w_spd / s_spd + |WAOD| * w_waod / s_waod`,
//! where `U` is utility per applicant by default. Points outside the DI
//! band never receive a value; they are recorded as infeasible trials.

pub mod parzen;

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ahp::{Scales, Weights};
use crate::cohort::Cohort;
use crate::fairmetrics::{evaluate_point, CostModel, DiBounds, MetricPoint, ThresholdPair};
use crate::rng::Xoshiro256;
use crate::tradeoff::{point_csv_fields, CLOUD_CSV_HEADER};
use parzen::ParzenEstimator;

#[derive(Debug, Error, PartialEq)]
pub enum OptimizerError {
    #[error("invalid objective: {0}")]
    InvalidObjective(String),
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityBasis {
    #[default]
    PerApplicant,
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub weights: Weights,
    #[serde(default)]
    pub scales: Scales,
    #[serde(default)]
    pub di_bounds: DiBounds,
    #[serde(default)]
    pub utility_basis: UtilityBasis,
}

impl Objective {
    pub fn new(weights: Weights, scales: Scales, di_bounds: DiBounds) -> Result<Self, OptimizerError> {
        let o = Self { weights, scales, di_bounds, utility_basis: UtilityBasis::PerApplicant };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: String| Err(OptimizerError::InvalidObjective(m));
        let w = self.weights.as_array();
        if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return bad(format!("weights must be non-negative, got {w:?}"));
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return bad(format!("weights must sum to 1, got {w:?}"));
        }
        let s = [self.scales.utility, self.scales.spd, self.scales.waod];
        if s.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return bad(format!("scales must be positive, got {s:?}"));
        }
        if !(self.di_bounds.lo > 0.0 && self.di_bounds.lo <= self.di_bounds.hi) {
            return bad("DI bounds need 0 < lo <= hi".into());
        }
        Ok(())
    }
}

/// Scalarized objective value, or the infeasible marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveValue {
    Value(f64),
    Infeasible,
}

impl ObjectiveValue {
    pub fn value(self) -> Option<f64> {
        match self {
            ObjectiveValue::Value(v) => Some(v),
            ObjectiveValue::Infeasible => None,
        }
    }
}

impl fmt::Display for ObjectiveValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectiveValue::Value(v) => write!(f, "{v}"),
            ObjectiveValue::Infeasible => f.write_str("infeasible"),
        }
    }
}

impl Serialize for ObjectiveValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ObjectiveValue::Value(v) => s.serialize_f64(*v),
            ObjectiveValue::Infeasible => s.serialize_str("infeasible"),
        }
    }
}

impl<'de> Deserialize<'de> for ObjectiveValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = ObjectiveValue;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"infeasible\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<ObjectiveValue, E> {
                Ok(ObjectiveValue::Value(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<ObjectiveValue, E> {
                Ok(ObjectiveValue::Value(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<ObjectiveValue, E> {
                Ok(ObjectiveValue::Value(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<ObjectiveValue, E> {
                match v {
                    "infeasible" => Ok(ObjectiveValue::Infeasible),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

pub fn scalarize(point: &MetricPoint, objective: &Objective) -> ObjectiveValue {
    if !point.feasible {
        return ObjectiveValue::Infeasible;
    }
    let (w, s) = (&objective.weights, &objective.scales);
    let u = match objective.utility_basis {
        UtilityBasis::PerApplicant => point.utility_per_applicant,
        UtilityBasis::Total => point.utility_total,
    };
    ObjectiveValue::Value(
        -u * w.utility / s.utility + point.spd.abs() * w.spd / s.spd + point.waod.abs() * w.waod / s.waod,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    #[serde(flatten)]
    pub point: MetricPoint,
    pub objective: ObjectiveValue,
    pub status: TrialStatus,
}

impl Trial {
    pub fn evaluate(index: usize, cohort: &Cohort, thresholds: ThresholdPair, costs: &CostModel, objective: &Objective) -> Self {
        let point = evaluate_point(cohort, thresholds, costs, objective.di_bounds);
        let value = scalarize(&point, objective);
        let status = match value {
            ObjectiveValue::Value(_) => TrialStatus::Feasible,
            ObjectiveValue::Infeasible => TrialStatus::Infeasible,
        };
        Self { index, point, objective: value, status }
    }

    pub fn thresholds(&self) -> ThresholdPair {
        self.point.thresholds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TpeConfig {
    pub n_trials: usize,
    pub n_startup: usize,
    pub gamma: f64,
    pub n_candidates: usize,
    pub seed: u64,
    pub bandwidth_floor_divisor: u32,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self { n_trials: 500, n_startup: 20, gamma: 0.1, n_candidates: 24, seed: 0, bandwidth_floor_divisor: 100 }
    }
}

impl TpeConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: &str| Err(OptimizerError::InvalidConfig(m.into()));
        if self.n_startup >= self.n_trials {
            return bad("n_startup must be below n_trials");
        }
        if self.n_candidates == 0 {
            return bad("n_candidates must be at least 1");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if self.bandwidth_floor_divisor == 0 {
            return bad("bandwidth_floor_divisor must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Tpe(TpeConfig),
    Grid { step: f64 },
    Random { n_trials: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best: Option<Trial>,
    #[serde(rename = "trials")]
    pub history: Vec<Trial>,
    pub config: OptimizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl OptimizationResult {
    fn from_history(history: Vec<Trial>, config: OptimizerConfig) -> Self {
        let best = best_trial(&history);
        let diagnostic = best
            .is_none()
            .then(|| format!("no feasible trial among {} evaluations", history.len()));
        Self { best, history, config, diagnostic }
    }

    pub fn best_objective(&self) -> Option<f64> {
        self.best.and_then(|t| t.objective.value())
    }
}

/// Minimum-objective feasible trial; the earliest index wins ties.
pub fn best_trial(history: &[Trial]) -> Option<Trial> {
    let mut best: Option<(f64, &Trial)> = None;
    for t in history {
        if let ObjectiveValue::Value(v) = t.objective {
            if best.is_none_or(|(b, _)| v < b) {
                best = Some((v, t));
            }
        }
    }
    best.map(|(_, t)| *t)
}

/// Tree-of-Parzen-Estimators search over `[0,1]^2`.
pub fn tpe_minimize(
    cohort: &Cohort,
    costs: &CostModel,
    objective: &Objective,
    config: &TpeConfig,
) -> Result<OptimizationResult, OptimizerError> {
    tpe_minimize_with(cohort, costs, objective, config, |_| {})
}

/// [`tpe_minimize`] with a callback invoked after every trial.
///
/// The first `n_startup` trials (and any trial before the first feasible
/// one) draw uniformly. Afterwards the feasible history is ranked by
/// objective; the best `max(1, ceil(gamma * n_feasible))` trials fit the
/// "good" density `l` and the rest, plus every infeasible trial, fit the
/// "bad" density `g`, independently per threshold. `n_candidates` draws
/// from `l` are scored by `log l - log g` and the first maximizer is
/// evaluated.
pub fn tpe_minimize_with(
    cohort: &Cohort,
    costs: &CostModel,
    objective: &Objective,
    config: &TpeConfig,
    mut on_trial: impl FnMut(&Trial),
) -> Result<OptimizationResult, OptimizerError> {
    objective.validate()?;
    config.validate()?;
    let mut rng = Xoshiro256::seed_from_u64(config.seed);
    let mut history: Vec<Trial> = Vec::with_capacity(config.n_trials);
    for index in 0..config.n_trials {
        let any_feasible = history.iter().any(|t| t.status == TrialStatus::Feasible);
        let thresholds = if index < config.n_startup || !any_feasible {
            uniform_pair(&mut rng)
        } else {
            propose(&history, config, &mut rng)
        };
        let trial = Trial::evaluate(index, cohort, thresholds, costs, objective);
        on_trial(&trial);
        history.push(trial);
    }
    Ok(OptimizationResult::from_history(history, OptimizerConfig::Tpe(*config)))
}

fn uniform_pair(rng: &mut Xoshiro256) -> ThresholdPair {
    let t_unp = rng.next_f64();
    let t_priv = rng.next_f64();
    ThresholdPair { t_unp, t_priv }
}

fn propose(history: &[Trial], config: &TpeConfig, rng: &mut Xoshiro256) -> ThresholdPair {
    let mut feasible: Vec<(f64, &Trial)> = history
        .iter()
        .filter_map(|t| t.objective.value().map(|v| (v, t)))
        .collect();
    feasible.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.index.cmp(&b.1.index)));
    let n_good = ((config.gamma * feasible.len() as f64).ceil() as usize).max(1);
    let good: Vec<ThresholdPair> = feasible[..n_good].iter().map(|(_, t)| t.thresholds()).collect();
    let bad: Vec<ThresholdPair> = feasible[n_good..]
        .iter()
        .map(|(_, t)| t.thresholds())
        .chain(history.iter().filter(|t| t.status == TrialStatus::Infeasible).map(Trial::thresholds))
        .collect();

    let fit = |pairs: &[ThresholdPair], pick: fn(&ThresholdPair) -> f64| {
        let xs: Vec<f64> = pairs.iter().map(pick).collect();
        ParzenEstimator::fit(&xs, 0.0, 1.0, config.bandwidth_floor_divisor)
    };
    let unp = |t: &ThresholdPair| t.t_unp;
    let prv = |t: &ThresholdPair| t.t_priv;
    let (l_unp, l_priv) = (fit(&good, unp), fit(&good, prv));
    let (g_unp, g_priv) = (fit(&bad, unp), fit(&bad, prv));

    let mut best: Option<(f64, ThresholdPair)> = None;
    for _ in 0..config.n_candidates {
        let t_unp = l_unp.sample(rng);
        let t_priv = l_priv.sample(rng);
        let score = l_unp.log_pdf(t_unp) + l_priv.log_pdf(t_priv) - g_unp.log_pdf(t_unp) - g_priv.log_pdf(t_priv);
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, ThresholdPair { t_unp, t_priv }));
        }
    }
    best.expect("n_candidates >= 1").1
}

/// Lattice values `0, step, 2 step, ...` up to 1 inclusive.
pub fn lattice(step: f64) -> Vec<f64> {
    let n = (1.0 / step + 1e-9).floor() as usize;
    (0..=n).map(|k| (k as f64 * step).min(1.0)).collect()
}

/// Exhaustive search on the lattice, `t_unp` outer and `t_priv` inner, so
/// the first-found tie-break prefers lower `t_unp`, then lower `t_priv`.
pub fn grid_minimize(
    cohort: &Cohort,
    costs: &CostModel,
    objective: &Objective,
    step: f64,
) -> Result<OptimizationResult, OptimizerError> {
    objective.validate()?;
    if !(step > 0.0 && step <= 0.5) {
        return Err(OptimizerError::InvalidConfig(format!("grid step must lie in (0, 0.5], got {step}")));
    }
    let axis = lattice(step);
    let pairs: Vec<ThresholdPair> = axis
        .iter()
        .flat_map(|&u| axis.iter().map(move |&p| ThresholdPair { t_unp: u, t_priv: p }))
        .collect();
    let history: Vec<Trial> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, &t)| Trial::evaluate(i, cohort, t, costs, objective))
        .collect();
    Ok(OptimizationResult::from_history(history, OptimizerConfig::Grid { step }))
}

pub fn random_minimize(
    cohort: &Cohort,
    costs: &CostModel,
    objective: &Objective,
    n: usize,
    seed: u64,
) -> Result<OptimizationResult, OptimizerError> {
    objective.validate()?;
    if n == 0 {
        return Err(OptimizerError::InvalidConfig("random search needs at least one trial".into()));
    }
    let mut rng = Xoshiro256::seed_from_u64(seed);
    let history = (0..n)
        .map(|i| Trial::evaluate(i, cohort, uniform_pair(&mut rng), costs, objective))
        .collect();
    Ok(OptimizationResult::from_history(history, OptimizerConfig::Random { n_trials: n, seed }))
}

pub const HISTORY_CSV_EXTRA: &str = "objective,status";

/// History as CSV: `index`, the cloud columns, then `objective,status`.
pub fn write_history<W: Write>(result: &OptimizationResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "index,{CLOUD_CSV_HEADER},{HISTORY_CSV_EXTRA}")?;
    for t in &result.history {
        let objective = match t.objective {
            ObjectiveValue::Value(v) => format!("{v:.6}"),
            ObjectiveValue::Infeasible => "infeasible".into(),
        };
        let status = match t.status {
            TrialStatus::Feasible => "feasible",
            TrialStatus::Infeasible => "infeasible",
        };
        writeln!(out, "{},{},{objective},{status}", t.index, point_csv_fields(&t.point))?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{generate_cohort, SyntheticSpec};
    use crate::fairmetrics::DiRatio;

    fn point(u: f64, spd: f64, waod: f64, di: f64, bounds: DiBounds) -> MetricPoint {
        MetricPoint {
            thresholds: ThresholdPair { t_unp: 0.5, t_priv: 0.5 },
            spd,
            waod,
            di_ratio: DiRatio::Finite(di),
            utility_total: u * 1000.0,
            utility_per_applicant: u,
            feasible: bounds.admits(DiRatio::Finite(di)),
        }
    }

    fn objective(w: [f64; 3]) -> Objective {
        Objective::new(Weights::from_array(w), Scales::default(), DiBounds::default()).unwrap()
    }

    #[test]
    fn scalarize_examples() {
        let b = DiBounds::default();
        let o = objective([1.0, 0.0, 0.0]);
        assert_eq!(scalarize(&point(100.0, 0.0, 0.0, 1.0, b), &o), ObjectiveValue::Value(-1.0));
        assert_eq!(scalarize(&point(100.0, 0.0, 0.0, 0.5, b), &o), ObjectiveValue::Infeasible);
        let o = objective([0.0, 0.5, 0.5]);
        let v = scalarize(&point(0.0, 0.1, -0.1, 1.0, b), &o).value().unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let total = Objective { utility_basis: UtilityBasis::Total, ..objective([1.0, 0.0, 0.0]) };
        assert_eq!(scalarize(&point(100.0, 0.0, 0.0, 1.0, b), &total), ObjectiveValue::Value(-1000.0));
    }

    #[test]
    fn objective_validation() {
        let w = Weights::from_array([0.5, 0.5, 0.5]);
        assert!(Objective::new(w, Scales::default(), DiBounds::default()).is_err());
        let w = Weights::from_array([1.0, 0.0, 0.0]);
        let s = Scales { utility: 0.0, ..Scales::default() };
        assert!(Objective::new(w, s, DiBounds::default()).is_err());
    }

    #[test]
    fn config_validation() {
        let c = TpeConfig { n_startup: 500, ..Default::default() };
        assert!(c.validate().is_err());
        assert!(TpeConfig { n_candidates: 0, ..Default::default() }.validate().is_err());
        assert!(TpeConfig::default().validate().is_ok());
    }

    #[test]
    fn lattice_sizes() {
        assert_eq!(lattice(0.5), vec![0.0, 0.5, 1.0]);
        assert_eq!(lattice(0.005).len(), 201);
        assert_eq!(*lattice(0.005).last().unwrap(), 1.0);
        assert_eq!(lattice(0.3).len(), 4);
    }

    #[test]
    fn grid_counts_and_tie_break() {
        let c = generate_cohort(&SyntheticSpec::default()).unwrap();
        let costs = CostModel::default();
        let r = grid_minimize(&c, &costs, &objective([1.0, 0.0, 0.0]), 0.5).unwrap();
        assert_eq!(r.history.len(), 9);
        // Zero-valued costs make every feasible point tie at 0.
        let flat = CostModel { expected_profit: 0.0, expected_cost: 0.0, ..costs };
        let r = grid_minimize(&c, &flat, &objective([1.0, 0.0, 0.0]), 0.1).unwrap();
        let best = r.best.unwrap();
        let first = r.history.iter().find(|t| t.status == TrialStatus::Feasible).unwrap();
        assert_eq!(best.index, first.index);
        assert!(grid_minimize(&c, &costs, &objective([1.0, 0.0, 0.0]), 0.7).is_err());
    }

    #[test]
    fn constant_objective_any_feasible_is_optimal() {
        let c = generate_cohort(&SyntheticSpec::default()).unwrap();
        let flat = CostModel { expected_profit: 0.0, expected_cost: 0.0, ..CostModel::default() };
        let cfg = TpeConfig { n_trials: 60, seed: 2, ..Default::default() };
        let r = tpe_minimize(&c, &flat, &objective([1.0, 0.0, 0.0]), &cfg).unwrap();
        assert_eq!(r.best_objective().unwrap(), 0.0);
    }

    #[test]
    fn tpe_is_deterministic_and_records_everything() {
        let c = generate_cohort(&SyntheticSpec::default()).unwrap();
        let costs = CostModel::default();
        let cfg = TpeConfig { n_trials: 80, seed: 5, ..Default::default() };
        let o = objective([0.4, 0.4, 0.2]);
        let mut seen = 0;
        let a = tpe_minimize_with(&c, &costs, &o, &cfg, |_| seen += 1).unwrap();
        let b = tpe_minimize(&c, &costs, &o, &cfg).unwrap();
        assert_eq!(seen, 80);
        assert_eq!(a, b);
        assert_eq!(a.history.len(), 80);
        for t in &a.history {
            assert_eq!(scalarize(&t.point, &o), t.objective);
        }
    }

    #[test]
    fn infeasible_everywhere_yields_diagnostic() {
        let c = generate_cohort(&SyntheticSpec::default()).unwrap();
        let mut o = objective([1.0, 0.0, 0.0]);
        o.di_bounds = DiBounds { lo: 50.0, hi: 60.0 };
        let cfg = TpeConfig { n_trials: 30, ..Default::default() };
        let r = tpe_minimize(&c, &CostModel::default(), &o, &cfg).unwrap();
        assert!(r.best.is_none());
        assert!(r.diagnostic.unwrap().contains("no feasible trial"));
    }

    #[test]
    fn random_search_basics() {
        let c = generate_cohort(&SyntheticSpec::default()).unwrap();
        let costs = CostModel::default();
        let o = objective([0.4, 0.4, 0.2]);
        let one = random_minimize(&c, &costs, &o, 1, 3).unwrap();
        assert_eq!(one.history.len(), 1);
        assert_eq!(random_minimize(&c, &costs, &o, 50, 3).unwrap(), random_minimize(&c, &costs, &o, 50, 3).unwrap());
        assert!(random_minimize(&c, &costs, &o, 0, 3).is_err());
    }

    #[test]
    fn result_json_and_history_csv() {
        let c = generate_cohort(&SyntheticSpec::default()).unwrap();
        let o = objective([0.4, 0.4, 0.2]);
        let r = random_minimize(&c, &CostModel::default(), &o, 40, 1).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in ["t_unp", "t_priv", "spd", "waod", "di_ratio", "utility_total", "utility_per_applicant", "objective"] {
            assert!(v["best"].get(key).is_some(), "{key}");
        }
        assert_eq!(v["trials"].as_array().unwrap().len(), 40);
        assert_eq!(v["config"]["method"], "random");
        let back: OptimizationResult = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);

        let mut buf = Vec::new();
        write_history(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 41);
        assert!(text.starts_with("index,t_unp,t_priv,spd,waod,di_ratio,utility_total,utility_per_applicant,feasible,objective,status\n"));
    }
}
