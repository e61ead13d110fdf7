//! Analytic Hierarchy Process over the three criteria
//! (utility, SPD, WAOD), in that row/column order.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::tradeoff::MetricRanges;

/// Saaty's random consistency index for a 3x3 matrix.
pub const RANDOM_INDEX_3: f64 = 0.58;
pub const CONSISTENCY_THRESHOLD: f64 = 0.1;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

pub const CRITERIA: [&str; 3] = ["utility", "SPD", "WAOD"];

#[derive(Debug, Error, PartialEq)]
pub enum AhpError {
    #[error("rating {0} outside [1/9, 9]")]
    OutOfScale(f64),
    #[error("rating {0} is not on the 1..9 scale or its reciprocal")]
    OffScale(f64),
    #[error("cannot parse rating '{0}'")]
    Parse(String),
    #[error("comparison matrix entries must be positive and reciprocal")]
    NotReciprocal,
    #[error("power iteration did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("no ratings to aggregate")]
    EmptyAggregate,
    #[error("degenerate range for {0}: max equals min")]
    DegenerateRange(&'static str),
    #[error("interval count must be at least 1")]
    NoIntervals,
}

/// A single pairwise rating: `x` means the row criterion is `x` times as
/// important as the column criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Rating(f64);

impl Rating {
    /// Accepts values in `[1/9, 9]` that are (within 1e-6, relative) an
    /// integer `k` or a reciprocal `1/k`, snapping them to the exact value.
    pub fn new(value: f64) -> Result<Self, AhpError> {
        if !value.is_finite() || !(1.0 / 9.0 - 1e-9..=9.0 + 1e-9).contains(&value) {
            return Err(AhpError::OutOfScale(value));
        }
        for k in 1..=9 {
            let k = k as f64;
            if ((value - k) / k).abs() < 1e-6 {
                return Ok(Self(k));
            }
            if ((value - 1.0 / k) * k).abs() < 1e-6 {
                return Ok(Self(1.0 / k));
            }
        }
        Err(AhpError::OffScale(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The same preference stated from the other side.
    pub fn inverted(self) -> Self {
        Self(1.0 / self.0)
    }
}

impl FromStr for Rating {
    type Err = AhpError;

    /// Parses `"3"`, `"0.5"` or `"1/9"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let value = match s.split_once('/') {
            Some((num, den)) => {
                let n: f64 = num.trim().parse().map_err(|_| AhpError::Parse(s.into()))?;
                let d: f64 = den.trim().parse().map_err(|_| AhpError::Parse(s.into()))?;
                n / d
            }
            None => s.parse().map_err(|_| AhpError::Parse(s.into()))?,
        };
        Rating::new(value)
    }
}

impl fmt::Display for Rating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 >= 1.0 {
            write!(f, "{}", self.0.round())
        } else {
            write!(f, "1/{}", (1.0 / self.0).round())
        }
    }
}

impl<'de> Deserialize<'de> for Rating {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct RatingVisitor;
        impl Visitor<'_> for RatingVisitor {
            type Value = Rating;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a rating number or a string like \"1/9\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Rating, E> {
                Rating::new(v).map_err(E::custom)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Rating, E> {
                Rating::new(v as f64).map_err(E::custom)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Rating, E> {
                Rating::new(v as f64).map_err(E::custom)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Rating, E> {
                v.parse().map_err(E::custom)
            }
        }
        d.deserialize_any(RatingVisitor)
    }
}

/// The three questions a policy maker answers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AhpRatings {
    pub util_vs_spd: Rating,
    pub util_vs_waod: Rating,
    pub spd_vs_waod: Rating,
}

impl AhpRatings {
    pub fn new(util_vs_spd: f64, util_vs_waod: f64, spd_vs_waod: f64) -> Result<Self, AhpError> {
        Ok(Self {
            util_vs_spd: Rating::new(util_vs_spd)?,
            util_vs_waod: Rating::new(util_vs_waod)?,
            spd_vs_waod: Rating::new(spd_vs_waod)?,
        })
    }
}

impl FromStr for AhpRatings {
    type Err = AhpError;

    /// Parses `a,b,c`, e.g. `1/9,1,9`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 3 {
            return Err(AhpError::Parse(s.into()));
        }
        Ok(Self {
            util_vs_spd: parts[0].parse()?,
            util_vs_waod: parts[1].parse()?,
            spd_vs_waod: parts[2].parse()?,
        })
    }
}

/// Positive reciprocal 3x3 comparison matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct ComparisonMatrix([[f64; 3]; 3]);

impl TryFrom<[[f64; 3]; 3]> for ComparisonMatrix {
    type Error = AhpError;

    fn try_from(m: [[f64; 3]; 3]) -> Result<Self, Self::Error> {
        ComparisonMatrix::new(m)
    }
}

impl From<ComparisonMatrix> for [[f64; 3]; 3] {
    fn from(m: ComparisonMatrix) -> Self {
        m.0
    }
}

impl ComparisonMatrix {
    #[allow(clippy::needless_range_loop)]
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self, AhpError> {
        for i in 0..3 {
            for j in 0..3 {
                let x = m[i][j];
                if !(x > 0.0 && x.is_finite()) || (x * m[j][i] - 1.0).abs() > 1e-9 {
                    return Err(AhpError::NotReciprocal);
                }
            }
        }
        Ok(Self(m))
    }

    /// Builds the matrix from the upper-triangle entries `(a, b, c)`.
    pub fn from_upper(a: f64, b: f64, c: f64) -> Result<Self, AhpError> {
        Self::new([[1.0, a, b], [1.0 / a, 1.0, c], [1.0 / b, 1.0 / c, 1.0]])
    }

    pub fn entries(&self) -> &[[f64; 3]; 3] {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    fn mul(&self, v: &[f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
    }
}

pub fn build_matrix(ratings: &AhpRatings) -> ComparisonMatrix {
    ComparisonMatrix::from_upper(
        ratings.util_vs_spd.value(),
        ratings.util_vs_waod.value(),
        ratings.spd_vs_waod.value(),
    )
    .expect("ratings are positive and finite")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub utility: f64,
    pub spd: f64,
    pub waod: f64,
}

impl Weights {
    pub fn as_array(&self) -> [f64; 3] {
        [self.utility, self.spd, self.waod]
    }

    pub fn from_array(w: [f64; 3]) -> Self {
        Self { utility: w[0], spd: w[1], waod: w[2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AhpResult {
    pub weights: Weights,
    pub lambda_max: f64,
    #[serde(rename = "ci")]
    pub consistency_index: f64,
    #[serde(rename = "cr")]
    pub consistency_ratio: f64,
    pub consistent: bool,
    pub matrix: ComparisonMatrix,
}

/// Power iteration from the uniform vector, renormalized to unit sum each
/// step, stopping when successive iterates differ by less than `tol` in
/// max-norm. `lambda_max` is the mean of `(M w)_i / w_i`.
pub fn principal_eigen(matrix: &ComparisonMatrix, tol: f64, max_iter: usize) -> Result<AhpResult, AhpError> {
    let mut w = [1.0 / 3.0; 3];
    let mut converged = false;
    for _ in 0..max_iter {
        let mw = matrix.mul(&w);
        let sum: f64 = mw.iter().sum();
        let next = mw.map(|x| x / sum);
        let delta = (0..3).map(|i| (next[i] - w[i]).abs()).fold(0.0, f64::max);
        w = next;
        if delta < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(AhpError::NoConvergence(max_iter));
    }
    let mw = matrix.mul(&w);
    let lambda_max = (0..3).map(|i| mw[i] / w[i]).sum::<f64>() / 3.0;
    // Perron: lambda_max >= n for reciprocal matrices; clamp rounding noise.
    let consistency_index = ((lambda_max - 3.0) / 2.0).max(0.0);
    let consistency_ratio = consistency_index / RANDOM_INDEX_3;
    Ok(AhpResult {
        weights: Weights::from_array(w),
        lambda_max,
        consistency_index,
        consistency_ratio,
        consistent: consistency_ratio <= CONSISTENCY_THRESHOLD,
        matrix: *matrix,
    })
}

/// Ratings to weights with the default solver settings.
pub fn weigh(ratings: &AhpRatings) -> AhpResult {
    principal_eigen(&build_matrix(ratings), DEFAULT_TOL, DEFAULT_MAX_ITER)
        .expect("power iteration converges for positive 3x3 matrices")
}

/// `(true, "")` when consistent; otherwise `false` and a message naming the
/// conflicting comparison.
pub fn check_consistency(result: &AhpResult) -> (bool, String) {
    if result.consistency_ratio <= CONSISTENCY_THRESHOLD {
        return (true, String::new());
    }
    let m = &result.matrix;
    let (a, b, c) = (m.get(0, 1), m.get(0, 2), m.get(1, 2));
    let implied = b / a;
    let message = format!(
        "inconsistent ratings (CR = {:.3} > {CONSISTENCY_THRESHOLD}): {} vs {} = {} and {} vs {} = {} imply {} vs {} = {}, but it was rated {}; please re-rate",
        result.consistency_ratio,
        CRITERIA[0], CRITERIA[1], fmt_ratio(a),
        CRITERIA[0], CRITERIA[2], fmt_ratio(b),
        CRITERIA[1], CRITERIA[2], fmt_ratio(implied),
        fmt_ratio(c),
    );
    (false, message)
}

fn fmt_ratio(x: f64) -> String {
    if x >= 1.0 {
        format!("{}", (x * 100.0).round() / 100.0)
    } else {
        format!("1/{}", ((1.0 / x) * 100.0).round() / 100.0)
    }
}

/// Element-wise geometric mean of the raters' matrices.
pub fn aggregate(ratings: &[AhpRatings]) -> Result<ComparisonMatrix, AhpError> {
    if ratings.is_empty() {
        return Err(AhpError::EmptyAggregate);
    }
    let matrices: Vec<ComparisonMatrix> = ratings.iter().map(build_matrix).collect();
    aggregate_matrices(&matrices)
}

pub fn aggregate_matrices(matrices: &[ComparisonMatrix]) -> Result<ComparisonMatrix, AhpError> {
    if matrices.is_empty() {
        return Err(AhpError::EmptyAggregate);
    }
    let n = matrices.len() as f64;
    let mut log_sum = [[0.0f64; 3]; 3];
    for m in matrices {
        for (i, row) in log_sum.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell += m.get(i, j).ln();
            }
        }
    }
    let mut out = [[1.0f64; 3]; 3];
    for i in 0..3 {
        for j in (i + 1)..3 {
            let g = (log_sum[i][j] / n).exp();
            out[i][j] = g;
            out[j][i] = 1.0 / g;
        }
    }
    ComparisonMatrix::new(out)
}

/// Per-unit scales `(utility, spd, waod)`: each range's width over `intervals`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub utility: f64,
    pub spd: f64,
    pub waod: f64,
}

impl Default for Scales {
    /// $100 per applicant, 0.1 SPD, 0.1 WAOD.
    fn default() -> Self {
        Self { utility: 100.0, spd: 0.1, waod: 0.1 }
    }
}

pub fn elicitation_scales(ranges: &MetricRanges, intervals: usize) -> Result<Scales, AhpError> {
    if intervals == 0 {
        return Err(AhpError::NoIntervals);
    }
    let k = intervals as f64;
    let scale = |name: &'static str, r: crate::tradeoff::Range| {
        let w = r.width();
        if w > 0.0 {
            Ok(w / k)
        } else {
            Err(AhpError::DegenerateRange(name))
        }
    };
    Ok(Scales {
        utility: scale("utility", ranges.utility_per_applicant)?,
        spd: scale("SPD", ranges.spd)?,
        waod: scale("WAOD", ranges.waod)?,
    })
}

/// Question wording; `{a}` and `{b}` are replaced by criterion labels.
pub const DEFAULT_QUESTION_TEMPLATE: &str =
    "Which matters more for this lending policy, {a} or {b}? How many times more (1-9)?";

pub const CRITERION_LABELS: [&str; 3] = [
    "utility (expected profit per applicant)",
    "statistical parity difference (SPD)",
    "weighted average odds difference (WAOD)",
];

/// Pairs asked, in rating order: utility/SPD, utility/WAOD, SPD/WAOD.
pub const QUESTION_PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

pub fn questions(template: &str) -> [String; 3] {
    QUESTION_PAIRS.map(|(a, b)| template.replace("{a}", CRITERION_LABELS[a]).replace("{b}", CRITERION_LABELS[b]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tradeoff::Range;

    #[test]
    fn question_template() {
        let q = questions("{a} / {b}");
        assert!(q[2].starts_with("statistical parity"));
        assert!(q[2].ends_with("(WAOD)"));
    }

    fn ratings(a: f64, b: f64, c: f64) -> AhpRatings {
        AhpRatings::new(a, b, c).unwrap()
    }

    #[test]
    fn matrix_layout() {
        let m = build_matrix(&ratings(9.0, 9.0, 1.0));
        assert_eq!(m.entries(), &[[1.0, 9.0, 9.0], [1.0 / 9.0, 1.0, 1.0], [1.0 / 9.0, 1.0, 1.0]]);
        let m = build_matrix(&ratings(1.0, 1.0, 1.0));
        assert_eq!(m.entries(), &[[1.0; 3]; 3]);
        let m = build_matrix(&ratings(1.0 / 9.0, 1.0, 9.0));
        assert_eq!(m.entries(), &[[1.0, 1.0 / 9.0, 1.0], [9.0, 1.0, 9.0], [1.0, 1.0 / 9.0, 1.0]]);
    }

    #[test]
    fn rating_scale() {
        assert_eq!(Rating::new(12.0), Err(AhpError::OutOfScale(12.0)));
        assert_eq!(Rating::new(0.1), Err(AhpError::OutOfScale(0.1)));
        assert!(matches!(Rating::new(2.5), Err(AhpError::OffScale(_))));
        assert_eq!("1/9".parse::<Rating>().unwrap().value(), 1.0 / 9.0);
        assert_eq!("0.5".parse::<Rating>().unwrap().value(), 0.5);
        assert_eq!(Rating::new(3.0).unwrap().inverted().to_string(), "1/3");
        let r: AhpRatings = "1/9, 1, 9".parse().unwrap();
        assert_eq!(r, ratings(1.0 / 9.0, 1.0, 9.0));
        let json: AhpRatings =
            serde_json::from_str(r#"{"util_vs_spd":"1/9","util_vs_waod":1,"spd_vs_waod":9.0}"#).unwrap();
        assert_eq!(json, r);
        assert!(serde_json::from_str::<AhpRatings>(r#"{"util_vs_spd":12,"util_vs_waod":1,"spd_vs_waod":1}"#).is_err());
    }

    #[test]
    fn max_utility_weights() {
        let r = weigh(&ratings(9.0, 9.0, 1.0));
        let w = r.weights.as_array();
        for (got, want) in w.iter().zip([0.82, 0.09, 0.09]) {
            assert!((got - want).abs() <= 0.01, "{w:?}");
        }
    }

    #[test]
    fn balanced_weights_are_exact() {
        let r = weigh(&ratings(1.0, 2.0, 2.0));
        let w = r.weights.as_array();
        for (got, want) in w.iter().zip([0.4, 0.4, 0.2]) {
            assert!((got - want).abs() <= 0.005);
        }
        assert!(r.consistency_ratio.abs() <= 1e-9);
        assert!((w[1] / w[2] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn indifference_is_uniform() {
        let r = weigh(&ratings(1.0, 1.0, 1.0));
        for w in r.weights.as_array() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(r.lambda_max, 3.0);
    }

    #[test]
    fn consistency_checks() {
        let r = weigh(&ratings(2.0, 4.0, 2.0));
        assert!(r.consistency_ratio <= 1e-9);
        assert!(check_consistency(&r).0);

        let r = weigh(&ratings(9.0, 2.0, 2.0));
        assert!(!r.consistent);
        assert!(r.consistency_ratio > 0.1);
        let (ok, msg) = check_consistency(&r);
        assert!(!ok);
        assert!(msg.contains("re-rate"), "{msg}");
        assert!(msg.contains("SPD vs WAOD = 1/4.5"), "{msg}");
    }

    #[test]
    fn aggregation() {
        let one = ratings(9.0, 9.0, 1.0);
        let single = aggregate(&[one]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((single.get(i, j) - build_matrix(&one).get(i, j)).abs() < 1e-12);
            }
        }
        let opposed = aggregate(&[one, ratings(1.0 / 9.0, 1.0 / 9.0, 1.0)]).unwrap();
        for row in opposed.entries() {
            for x in row {
                assert!((x - 1.0).abs() < 1e-12);
            }
        }
        let bal = ratings(1.0, 2.0, 2.0);
        let twice = aggregate(&[bal, bal]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((twice.get(i, j) - build_matrix(&bal).get(i, j)).abs() < 1e-12);
            }
        }
        assert_eq!(aggregate(&[]), Err(AhpError::EmptyAggregate));
    }

    #[test]
    fn scales_from_ranges() {
        let ranges = MetricRanges {
            spd: Range { min: -0.1, max: 0.1 },
            waod: Range { min: 0.05, max: 0.25 },
            utility_per_applicant: Range { min: 0.0, max: 200.0 },
        };
        let s = elicitation_scales(&ranges, 2).unwrap();
        assert!((s.spd - 0.1).abs() < 1e-15);
        assert_eq!(s.utility, 100.0);
        let full = elicitation_scales(&ranges, 1).unwrap();
        assert_eq!(full.utility, 200.0);
        let flat = MetricRanges { spd: Range { min: 0.0, max: 0.0 }, ..ranges };
        assert_eq!(elicitation_scales(&flat, 2), Err(AhpError::DegenerateRange("SPD")));
        assert_eq!(elicitation_scales(&ranges, 0), Err(AhpError::NoIntervals));
    }

    #[test]
    fn result_json_keys() {
        let v = serde_json::to_value(weigh(&ratings(1.0, 2.0, 2.0))).unwrap();
        for key in ["weights", "lambda_max", "ci", "cr", "consistent"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back: AhpResult = serde_json::from_value(v).unwrap();
        assert!(back.consistent);
    }
}
