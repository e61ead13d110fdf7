//! Group confusion statistics and the headline fairness/utility metrics.
//!
//! Sign conventions: SPD and WAOD are negative when the unprivileged group
//! is disadvantaged. A record is predicted favorable only when its score is
//! strictly above its group's threshold.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cohort::{Cohort, Group};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub t_unp: f64,
    pub t_priv: f64,
}

impl ThresholdPair {
    /// Returns `None` unless both thresholds lie in `[0, 1]`.
    pub fn new(t_unp: f64, t_priv: f64) -> Option<Self> {
        let ok = |t: f64| (0.0..=1.0).contains(&t);
        (ok(t_unp) && ok(t_priv)).then_some(Self { t_unp, t_priv })
    }

    pub fn for_group(&self, group: Group) -> f64 {
        match group {
            Group::Privileged => self.t_priv,
            Group::Unprivileged => self.t_unp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tpr: f64,
    pub fpr: f64,
    pub favorable_rate: f64,
}

impl GroupConfusion {
    pub fn from_counts(c: ConfusionCounts) -> Self {
        let ConfusionCounts { tp, fp, tn, fn_ } = c;
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Self {
            tp,
            fp,
            tn,
            fn_,
            tpr: ratio(tp, tp + fn_),
            fpr: ratio(fp, fp + tn),
            favorable_rate: ratio(tp + fp, tp + fp + tn + fn_),
        }
    }

    pub fn size(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupConfusions {
    pub privileged: GroupConfusion,
    pub unprivileged: GroupConfusion,
}

/// Expected monetary outcomes and the WAOD error weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    /// Profit per repaid loan (true positive).
    pub expected_profit: f64,
    /// Loss per defaulted loan (false positive).
    pub expected_cost: f64,
    pub w_fp: f64,
    pub w_tp: f64,
}

impl Default for CostModel {
    /// $2,000 profit against $10,000 loss (1:5), false positives weighted 5:1.
    fn default() -> Self {
        Self { expected_profit: 2000.0, expected_cost: 10000.0, w_fp: 5.0, w_tp: 1.0 }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.expected_profit >= 0.0 && self.expected_profit.is_finite()) {
            return Err(format!("expected_profit must be >= 0, got {}", self.expected_profit));
        }
        if !(self.expected_cost >= 0.0 && self.expected_cost.is_finite()) {
            return Err(format!("expected_cost must be >= 0, got {}", self.expected_cost));
        }
        if !(self.w_fp > 0.0 && self.w_tp > 0.0 && self.w_fp.is_finite() && self.w_tp.is_finite()) {
            return Err("w_fp and w_tp must be positive".into());
        }
        Ok(())
    }
}

/// Closed interval of acceptable disparate-impact ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiBounds {
    pub lo: f64,
    pub hi: f64,
}

impl Default for DiBounds {
    /// The four-fifths rule and its reciprocal.
    fn default() -> Self {
        Self { lo: 0.8, hi: 1.25 }
    }
}

impl DiBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self, String> {
        if !(lo > 0.0 && lo <= hi) {
            return Err(format!("DI bounds need 0 < lo <= hi, got ({lo}, {hi})"));
        }
        Ok(Self { lo, hi })
    }

    pub fn admits(&self, di: DiRatio) -> bool {
        match di {
            DiRatio::Finite(r) => self.lo <= r && r <= self.hi,
            DiRatio::Infinite => self.hi == f64::INFINITY,
            DiRatio::Undefined => false,
        }
    }
}

/// Ratio of favorable rates, unprivileged over privileged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiRatio {
    Finite(f64),
    /// Privileged rate is zero while the unprivileged rate is not.
    Infinite,
    /// Both favorable rates are zero.
    Undefined,
}

impl DiRatio {
    pub fn value(self) -> f64 {
        match self {
            DiRatio::Finite(r) => r,
            DiRatio::Infinite => f64::INFINITY,
            DiRatio::Undefined => f64::NAN,
        }
    }

    pub fn is_defined(self) -> bool {
        !matches!(self, DiRatio::Undefined)
    }

    pub fn from_value(v: f64) -> Self {
        if v.is_nan() {
            DiRatio::Undefined
        } else if v.is_infinite() {
            DiRatio::Infinite
        } else {
            DiRatio::Finite(v)
        }
    }

    /// Textual form used in CSV and JSON: a number, `inf` or `undefined`.
    pub fn to_token(self, decimals: Option<usize>) -> String {
        match (self, decimals) {
            (DiRatio::Finite(r), Some(d)) => format!("{r:.d$}"),
            (DiRatio::Finite(r), None) => r.to_string(),
            (DiRatio::Infinite, _) => "inf".into(),
            (DiRatio::Undefined, _) => "undefined".into(),
        }
    }

    pub fn parse_token(s: &str) -> Option<Self> {
        match s.trim() {
            "inf" | "+inf" | "infinity" => Some(DiRatio::Infinite),
            "undefined" | "nan" | "NaN" => Some(DiRatio::Undefined),
            other => other.parse::<f64>().ok().filter(|v| v.is_finite()).map(DiRatio::Finite),
        }
    }
}

impl Serialize for DiRatio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            DiRatio::Finite(r) => s.serialize_f64(*r),
            DiRatio::Infinite => s.serialize_str("inf"),
            DiRatio::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for DiRatio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct DiVisitor;
        impl Visitor<'_> for DiVisitor {
            type Value = DiRatio;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number, \"inf\" or \"undefined\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<DiRatio, E> {
                Ok(DiRatio::from_value(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<DiRatio, E> {
                Ok(DiRatio::Finite(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<DiRatio, E> {
                Ok(DiRatio::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<DiRatio, E> {
                DiRatio::parse_token(v).ok_or_else(|| E::invalid_value(de::Unexpected::Str(v), &self))
            }
        }
        d.deserialize_any(DiVisitor)
    }
}

impl fmt::Display for DiRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiRatio::Finite(r) => write!(f, "{r:.4}"),
            other => f.write_str(&other.to_token(None)),
        }
    }
}

/// All metrics at one threshold pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    #[serde(flatten)]
    pub thresholds: ThresholdPair,
    pub spd: f64,
    pub waod: f64,
    pub di_ratio: DiRatio,
    pub utility_total: f64,
    pub utility_per_applicant: f64,
    pub feasible: bool,
}

pub fn confusion(cohort: &Cohort, thresholds: ThresholdPair) -> GroupConfusions {
    let mut priv_c = ConfusionCounts::default();
    let mut unp_c = ConfusionCounts::default();
    for r in cohort.records() {
        let c = match r.group {
            Group::Privileged => &mut priv_c,
            Group::Unprivileged => &mut unp_c,
        };
        let favorable = r.score > thresholds.for_group(r.group);
        match (favorable, r.label == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    GroupConfusions {
        privileged: GroupConfusion::from_counts(priv_c),
        unprivileged: GroupConfusion::from_counts(unp_c),
    }
}

/// Statistical parity difference: unprivileged favorable rate minus privileged.
pub fn spd(conf_p: &GroupConfusion, conf_unp: &GroupConfusion) -> f64 {
    conf_unp.favorable_rate - conf_p.favorable_rate
}

pub fn di_ratio(conf_p: &GroupConfusion, conf_unp: &GroupConfusion) -> DiRatio {
    match (conf_p.favorable_rate, conf_unp.favorable_rate) {
        (p, u) if p > 0.0 => DiRatio::Finite(u / p),
        (_, u) if u > 0.0 => DiRatio::Infinite,
        _ => DiRatio::Undefined,
    }
}

/// Weighted average odds difference:
/// `[w_fp (FPR_p - FPR_unp) + w_tp (TPR_unp - TPR_p)] / (w_fp + w_tp)`.
pub fn waod(conf_p: &GroupConfusion, conf_unp: &GroupConfusion, costs: &CostModel) -> f64 {
    (costs.w_fp * (conf_p.fpr - conf_unp.fpr) + costs.w_tp * (conf_unp.tpr - conf_p.tpr))
        / (costs.w_fp + costs.w_tp)
}

/// Expected profit of the thresholded classifier, as `(total, per_applicant)`.
///
/// Rates are multiplied by whole-group sizes, not by the group's positive or
/// negative counts: `E[P](TPR_p N_p + TPR_u N_u) - E[C](FPR_p N_p + FPR_u N_u)`.
pub fn utility(
    conf_p: &GroupConfusion,
    conf_unp: &GroupConfusion,
    cohort: &Cohort,
    costs: &CostModel,
) -> (f64, f64) {
    let counts = cohort.counts();
    let (n_p, n_u) = (counts.privileged as f64, counts.unprivileged as f64);
    let total = costs.expected_profit * (conf_p.tpr * n_p + conf_unp.tpr * n_u)
        - costs.expected_cost * (conf_p.fpr * n_p + conf_unp.fpr * n_u);
    (total, total / (n_p + n_u))
}

pub fn evaluate_point(
    cohort: &Cohort,
    thresholds: ThresholdPair,
    costs: &CostModel,
    di_bounds: DiBounds,
) -> MetricPoint {
    let GroupConfusions { privileged: p, unprivileged: u } = confusion(cohort, thresholds);
    let di = di_ratio(&p, &u);
    let (utility_total, utility_per_applicant) = utility(&p, &u, cohort, costs);
    MetricPoint {
        thresholds,
        spd: spd(&p, &u),
        waod: waod(&p, &u, costs),
        di_ratio: di,
        utility_total,
        utility_per_applicant,
        feasible: di_bounds.admits(di),
    }
}
