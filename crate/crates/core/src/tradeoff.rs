//! Random sampling of the threshold square and the resulting
//! fairness-utility cloud.

use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::Cohort;
use crate::fairmetrics::{evaluate_point, CostModel, DiBounds, DiRatio, MetricPoint, ThresholdPair};
use crate::rng::Xoshiro256;

#[derive(Debug, Error)]
pub enum TradeoffError {
    #[error("no points")]
    EmptyCloud,
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("malformed cloud CSV at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub const CLOUD_CSV_HEADER: &str =
    "t_unp,t_priv,spd,waod,di_ratio,utility_total,utility_per_applicant,feasible";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCloud {
    pub points: Vec<MetricPoint>,
    pub sample_count: usize,
    pub kept_count: usize,
    pub di_bounds: DiBounds,
    pub seed: u64,
}

/// Draws `n` threshold pairs uniformly from `[0,1]^2` (t_unp then t_priv
/// for each sample) and evaluates them. Evaluation runs in parallel but
/// output order always follows sample order.
pub fn sample_cloud(
    cohort: &Cohort,
    costs: &CostModel,
    n: usize,
    di_bounds: DiBounds,
    seed: u64,
    keep_infeasible: bool,
) -> Result<TradeoffCloud, TradeoffError> {
    if n == 0 {
        return Err(TradeoffError::NoSamples);
    }
    let mut rng = Xoshiro256::seed_from_u64(seed);
    let pairs: Vec<ThresholdPair> = (0..n)
        .map(|_| {
            let t_unp = rng.next_f64();
            let t_priv = rng.next_f64();
            ThresholdPair { t_unp, t_priv }
        })
        .collect();
    let evaluated: Vec<MetricPoint> = pairs
        .par_iter()
        .map(|&t| evaluate_point(cohort, t, costs, di_bounds))
        .collect();
    let kept_count = evaluated.iter().filter(|p| p.feasible).count();
    let points = if keep_infeasible {
        evaluated
    } else {
        evaluated.into_iter().filter(|p| p.feasible).collect()
    };
    Ok(TradeoffCloud { points, sample_count: n, kept_count, di_bounds, seed })
}

/// Optional bounds a point must satisfy to survive [`filter_cloud`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CloudFilter {
    /// Exclusive lower bound on utility per applicant.
    pub min_utility: Option<f64>,
    pub max_abs_spd: Option<f64>,
    pub max_abs_waod: Option<f64>,
    pub feasible_only: bool,
}

impl CloudFilter {
    pub fn accepts(&self, p: &MetricPoint) -> bool {
        self.min_utility.is_none_or(|m| p.utility_per_applicant > m)
            && self.max_abs_spd.is_none_or(|m| p.spd.abs() <= m)
            && self.max_abs_waod.is_none_or(|m| p.waod.abs() <= m)
            && (!self.feasible_only || p.feasible)
    }
}

pub fn filter_cloud(cloud: &TradeoffCloud, filter: &CloudFilter) -> TradeoffCloud {
    let points: Vec<MetricPoint> = cloud.points.iter().filter(|p| filter.accepts(p)).copied().collect();
    TradeoffCloud {
        kept_count: points.iter().filter(|p| p.feasible).count(),
        points,
        sample_count: cloud.sample_count,
        di_bounds: cloud.di_bounds,
        seed: cloud.seed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRanges {
    pub spd: Range,
    pub waod: Range,
    pub utility_per_applicant: Range,
}

pub fn metric_ranges(cloud: &TradeoffCloud) -> Result<MetricRanges, TradeoffError> {
    ranges_of(&cloud.points)
}

pub fn ranges_of(points: &[MetricPoint]) -> Result<MetricRanges, TradeoffError> {
    let first = points.first().ok_or(TradeoffError::EmptyCloud)?;
    let seed = |v: f64| Range { min: v, max: v };
    let widen = |r: &mut Range, v: f64| {
        r.min = r.min.min(v);
        r.max = r.max.max(v);
    };
    let mut out = MetricRanges {
        spd: seed(first.spd),
        waod: seed(first.waod),
        utility_per_applicant: seed(first.utility_per_applicant),
    };
    for p in &points[1..] {
        widen(&mut out.spd, p.spd);
        widen(&mut out.waod, p.waod);
        widen(&mut out.utility_per_applicant, p.utility_per_applicant);
    }
    Ok(out)
}

pub(crate) fn point_csv_fields(p: &MetricPoint) -> String {
    format!(
        "{:.6},{:.6},{:.6},{:.6},{},{:.6},{:.6},{}",
        p.thresholds.t_unp,
        p.thresholds.t_priv,
        p.spd,
        p.waod,
        p.di_ratio.to_token(Some(6)),
        p.utility_total,
        p.utility_per_applicant,
        p.feasible
    )
}

pub fn write_cloud<W: Write>(cloud: &TradeoffCloud, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CLOUD_CSV_HEADER}")?;
    for p in &cloud.points {
        writeln!(out, "{}", point_csv_fields(p))?;
    }
    out.flush()
}

pub fn export_cloud(cloud: &TradeoffCloud, path: impl AsRef<Path>) -> Result<(), TradeoffError> {
    let file = std::fs::File::create(path)?;
    write_cloud(cloud, std::io::BufWriter::new(file))?;
    Ok(())
}

/// Parses the cloud CSV back into points (values carry the 6-decimal rounding).
pub fn read_cloud_points<R: BufRead>(reader: R) -> Result<Vec<MetricPoint>, TradeoffError> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != CLOUD_CSV_HEADER {
        return Err(TradeoffError::Parse { line: 1, message: "bad header".into() });
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| TradeoffError::Parse { line: line_no, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(err(format!("expected 8 fields, got {}", fields.len())));
        }
        let num = |k: usize| fields[k].parse::<f64>().map_err(|e| err(format!("field {k}: {e}")));
        points.push(MetricPoint {
            thresholds: ThresholdPair { t_unp: num(0)?, t_priv: num(1)? },
            spd: num(2)?,
            waod: num(3)?,
            di_ratio: DiRatio::parse_token(fields[4]).ok_or_else(|| err("bad di_ratio".into()))?,
            utility_total: num(5)?,
            utility_per_applicant: num(6)?,
            feasible: fields[7].parse().map_err(|_| err("bad feasible flag".into()))?,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{generate_cohort, SyntheticSpec};

    fn cohort() -> Cohort {
        generate_cohort(&SyntheticSpec::default()).unwrap()
    }

    fn point(spd: f64, waod: f64, util: f64, feasible: bool) -> MetricPoint {
        MetricPoint {
            thresholds: ThresholdPair { t_unp: 0.5, t_priv: 0.5 },
            spd,
            waod,
            di_ratio: DiRatio::Finite(1.0),
            utility_total: util * 10.0,
            utility_per_applicant: util,
            feasible,
        }
    }

    fn cloud_of(points: Vec<MetricPoint>) -> TradeoffCloud {
        TradeoffCloud {
            kept_count: points.iter().filter(|p| p.feasible).count(),
            sample_count: points.len(),
            points,
            di_bounds: DiBounds::default(),
            seed: 0,
        }
    }

    #[test]
    fn full_size_cloud_is_partially_filtered_and_deterministic() {
        let c = cohort();
        let costs = CostModel::default();
        let a = sample_cloud(&c, &costs, 10_000, DiBounds::default(), 3, false).unwrap();
        assert!(a.kept_count > 0 && a.kept_count < 10_000, "{}", a.kept_count);
        assert_eq!(a.points.len(), a.kept_count);
        assert!(a.points.iter().all(|p| p.feasible));
        let b = sample_cloud(&c, &costs, 10_000, DiBounds::default(), 3, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn minimal_and_unfiltered_clouds() {
        let c = cohort();
        let costs = CostModel::default();
        let one = sample_cloud(&c, &costs, 1, DiBounds::default(), 1, true).unwrap();
        assert_eq!(one.sample_count, 1);
        assert_eq!(one.points.len(), 1);
        let all = sample_cloud(&c, &costs, 500, DiBounds::default(), 1, true).unwrap();
        assert_eq!(all.points.len(), 500);
        assert_eq!(all.kept_count, all.points.iter().filter(|p| p.feasible).count());
        assert!(matches!(
            sample_cloud(&c, &costs, 0, DiBounds::default(), 1, true),
            Err(TradeoffError::NoSamples)
        ));
    }

    #[test]
    fn quadrants_are_balanced() {
        let n = 10_000usize;
        let cloud = sample_cloud(&cohort(), &CostModel::default(), n, DiBounds::default(), 99, true).unwrap();
        let mut q = [0usize; 4];
        for p in &cloud.points {
            let i = usize::from(p.thresholds.t_unp >= 0.5) * 2 + usize::from(p.thresholds.t_priv >= 0.5);
            q[i] += 1;
        }
        let slack = 5.0 * (n as f64).sqrt();
        for count in q {
            assert!((count as f64 - n as f64 / 4.0).abs() <= slack, "{q:?}");
        }
    }

    #[test]
    fn positive_utility_filter() {
        let cloud = sample_cloud(&cohort(), &CostModel::default(), 2000, DiBounds::default(), 5, true).unwrap();
        let f = CloudFilter { min_utility: Some(0.0), ..Default::default() };
        let out = filter_cloud(&cloud, &f);
        assert!(!out.points.is_empty());
        assert!(out.points.iter().all(|p| p.utility_total > 0.0));
        assert_eq!(filter_cloud(&cloud, &CloudFilter::default()), cloud);
        let nothing = CloudFilter { max_abs_spd: Some(-1.0), ..Default::default() };
        assert!(filter_cloud(&cloud, &nothing).points.is_empty());
    }

    #[test]
    fn ranges() {
        let single = cloud_of(vec![point(0.05, -0.02, 40.0, true)]);
        let r = metric_ranges(&single).unwrap();
        assert_eq!((r.spd.min, r.spd.max), (0.05, 0.05));
        let two = cloud_of(vec![point(-0.1, 0.0, 0.0, true), point(0.1, 0.2, 200.0, true)]);
        let r = metric_ranges(&two).unwrap();
        assert_eq!((r.spd.min, r.spd.max), (-0.1, 0.1));
        assert_eq!(r.utility_per_applicant.width(), 200.0);
        let empty = cloud_of(vec![]);
        assert_eq!(metric_ranges(&empty).unwrap_err().to_string(), "no points");
    }

    #[test]
    fn csv_export_round_trip() {
        let mut pts = vec![point(0.1234567, -0.5, 12.3456789, true), point(0.0, 0.0, -3.0, false)];
        pts.push(MetricPoint { di_ratio: DiRatio::Infinite, feasible: false, ..pts[0] });
        let cloud = cloud_of(pts);
        let mut buf = Vec::new();
        write_cloud(&cloud, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(2).unwrap().ends_with(",false"));
        let back = read_cloud_points(buf.as_slice()).unwrap();
        for (a, b) in cloud.points.iter().zip(&back) {
            assert!((a.spd - b.spd).abs() <= 1e-6);
            assert!((a.utility_per_applicant - b.utility_per_applicant).abs() <= 1e-6);
            assert_eq!(a.feasible, b.feasible);
        }
        assert_eq!(back[2].di_ratio, DiRatio::Infinite);
    }
}
