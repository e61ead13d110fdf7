//! Scored cohorts: CSV ingestion, validation and synthetic generation.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Xoshiro256;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("missing column '{0}'")]
    MissingColumn(&'static str),
    #[error("unparsable score '{value}' at row {row}")]
    BadScore { row: usize, value: String },
    #[error("unparsable label '{value}' at row {row}")]
    BadLabel { row: usize, value: String },
    #[error("score out of range at row {row}")]
    ScoreOutOfRange { row: usize },
    #[error("unmapped group value '{value}' at row {row}")]
    UnmappedGroup { row: usize, value: String },
    #[error("group {0} has no records")]
    EmptyGroup(Group),
    #[error("group {group} has no label-{label} records")]
    SingleLabel { group: Group, label: u8 },
    #[error("malformed CSV at row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl CohortError {
    /// One-based file row (header is row 1) the error points at, if any.
    pub fn row(&self) -> Option<usize> {
        match self {
            Self::BadScore { row, .. }
            | Self::BadLabel { row, .. }
            | Self::ScoreOutOfRange { row }
            | Self::UnmappedGroup { row, .. }
            | Self::Csv { row, .. } => Some(*row),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Privileged,
    Unprivileged,
}

impl Group {
    pub fn token(self) -> &'static str {
        match self {
            Group::Privileged => "privileged",
            Group::Unprivileged => "unprivileged",
        }
    }

    pub fn other(self) -> Group {
        match self {
            Group::Privileged => Group::Unprivileged,
            Group::Unprivileged => Group::Privileged,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::Privileged => f.write_str("Privileged"),
            Group::Unprivileged => f.write_str("Unprivileged"),
        }
    }
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "privileged" | "priv" | "p" => Ok(Group::Privileged),
            "unprivileged" | "unpriv" | "unp" | "u" => Ok(Group::Unprivileged),
            other => Err(format!("unknown group '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub score: f64,
    pub label: u8,
    pub group: Group,
}

/// Maps raw group tokens found in a CSV to the two canonical groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupMap(HashMap<String, Group>);

impl GroupMap {
    pub fn new() -> Self {
        Self(HashMap::new())
    }

    /// Recognizes only the canonical `privileged` / `unprivileged` tokens.
    pub fn canonical() -> Self {
        Self::new()
            .with("privileged", Group::Privileged)
            .with("unprivileged", Group::Unprivileged)
    }

    pub fn with(mut self, raw: impl Into<String>, group: Group) -> Self {
        self.0.insert(raw.into(), group);
        self
    }

    pub fn get(&self, raw: &str) -> Option<Group> {
        self.0.get(raw).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for GroupMap {
    fn default() -> Self {
        Self::canonical()
    }
}

impl FromStr for GroupMap {
    type Err = String;

    /// Parses `raw=group,raw=group`, e.g. `old=privileged,young=unprivileged`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut map = GroupMap::new();
        for pair in s.split(',').filter(|p| !p.trim().is_empty()) {
            let (raw, group) = pair
                .split_once('=')
                .ok_or_else(|| format!("expected raw=group, got '{pair}'"))?;
            map = map.with(raw.trim(), group.parse()?);
        }
        if map.is_empty() {
            return Err("empty group map".into());
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub privileged: usize,
    pub unprivileged: usize,
}

impl GroupCounts {
    pub fn total(&self) -> usize {
        self.privileged + self.unprivileged
    }

    pub fn get(&self, group: Group) -> usize {
        match group {
            Group::Privileged => self.privileged,
            Group::Unprivileged => self.unprivileged,
        }
    }
}

/// A validated, immutable set of scored records in which both groups are
/// present and each group contains both labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ScoredRecord>", into = "Vec<ScoredRecord>")]
pub struct Cohort {
    records: Vec<ScoredRecord>,
    counts: GroupCounts,
}

impl TryFrom<Vec<ScoredRecord>> for Cohort {
    type Error = CohortError;

    fn try_from(records: Vec<ScoredRecord>) -> Result<Self, Self::Error> {
        Cohort::new(records)
    }
}

impl From<Cohort> for Vec<ScoredRecord> {
    fn from(c: Cohort) -> Self {
        c.records
    }
}

impl Cohort {
    pub fn new(records: Vec<ScoredRecord>) -> Result<Self, CohortError> {
        // [group][label]
        let mut cells = [[0usize; 2]; 2];
        for (i, r) in records.iter().enumerate() {
            if !(0.0..=1.0).contains(&r.score) {
                return Err(CohortError::ScoreOutOfRange { row: i + 2 });
            }
            if r.label > 1 {
                return Err(CohortError::BadLabel { row: i + 2, value: r.label.to_string() });
            }
            cells[group_index(r.group)][r.label as usize] += 1;
        }
        for group in [Group::Privileged, Group::Unprivileged] {
            let [neg, pos] = cells[group_index(group)];
            if neg + pos == 0 {
                return Err(CohortError::EmptyGroup(group));
            }
            if pos == 0 {
                return Err(CohortError::SingleLabel { group, label: 1 });
            }
            if neg == 0 {
                return Err(CohortError::SingleLabel { group, label: 0 });
            }
        }
        let counts = GroupCounts {
            privileged: cells[0][0] + cells[0][1],
            unprivileged: cells[1][0] + cells[1][1],
        };
        Ok(Self { records, counts })
    }

    pub fn records(&self) -> &[ScoredRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn counts(&self) -> GroupCounts {
        self.counts
    }

    /// Fraction of label-1 records within `group`.
    pub fn positive_rate(&self, group: Group) -> f64 {
        let pos = self
            .records
            .iter()
            .filter(|r| r.group == group && r.label == 1)
            .count();
        pos as f64 / self.counts.get(group) as f64
    }

    pub fn summary(&self) -> CohortSummary {
        CohortSummary {
            n_privileged: self.counts.privileged,
            n_unprivileged: self.counts.unprivileged,
            positive_rate_privileged: self.positive_rate(Group::Privileged),
            positive_rate_unprivileged: self.positive_rate(Group::Unprivileged),
        }
    }

    /// The same records with group membership exchanged.
    pub fn swap_groups(&self) -> Cohort {
        let records = self
            .records
            .iter()
            .map(|r| ScoredRecord { group: r.group.other(), ..*r })
            .collect();
        Cohort::new(records).expect("swapping groups preserves validity")
    }
}

fn group_index(g: Group) -> usize {
    match g {
        Group::Privileged => 0,
        Group::Unprivileged => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub n_privileged: usize,
    pub n_unprivileged: usize,
    pub positive_rate_privileged: f64,
    pub positive_rate_unprivileged: f64,
}

/// Reads a `score,label,group` CSV from any reader.
pub fn read_cohort<R: std::io::Read>(reader: R, group_map: &GroupMap) -> Result<Cohort, CohortError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CohortError::Csv { row: 1, message: e.to_string() })?
        .clone();
    let col = |name: &'static str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(CohortError::MissingColumn(name))
    };
    let (score_col, label_col, group_col) = (col("score")?, col("label")?, col("group")?);

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 2;
        let row = row.map_err(|e| CohortError::Csv { row: row_no, message: e.to_string() })?;
        let field = |c: usize| row.get(c).unwrap_or("");

        let raw_score = field(score_col);
        let score: f64 = raw_score
            .parse()
            .map_err(|_| CohortError::BadScore { row: row_no, value: raw_score.to_string() })?;
        if !(0.0..=1.0).contains(&score) {
            return Err(CohortError::ScoreOutOfRange { row: row_no });
        }
        let raw_label = field(label_col);
        let label = match raw_label {
            "0" => 0,
            "1" => 1,
            _ => {
                return Err(CohortError::BadLabel { row: row_no, value: raw_label.to_string() })
            }
        };
        let raw_group = field(group_col);
        let group = group_map
            .get(raw_group)
            .ok_or_else(|| CohortError::UnmappedGroup { row: row_no, value: raw_group.to_string() })?;
        records.push(ScoredRecord { score, label, group });
    }
    Cohort::new(records)
}

pub fn load_cohort(path: impl AsRef<Path>, group_map: &GroupMap) -> Result<Cohort, CohortError> {
    let file = std::fs::File::open(path)?;
    read_cohort(std::io::BufReader::new(file), group_map)
}

/// Writes the canonical CSV form. Scores use the shortest representation
/// that parses back to the identical `f64`.
pub fn write_cohort<W: std::io::Write>(cohort: &Cohort, mut out: W) -> std::io::Result<()> {
    writeln!(out, "score,label,group")?;
    for r in cohort.records() {
        writeln!(out, "{},{},{}", r.score, r.label, r.group.token())?;
    }
    out.flush()
}

pub fn save_cohort(cohort: &Cohort, path: impl AsRef<Path>) -> Result<(), CohortError> {
    let file = std::fs::File::create(path)?;
    write_cohort(cohort, std::io::BufWriter::new(file))?;
    Ok(())
}

/// Shape parameters of a Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaShape {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaShape {
    pub const fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }
}

/// Score distributions for each (group, label) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellShapes {
    pub privileged_positive: BetaShape,
    pub privileged_negative: BetaShape,
    pub unprivileged_positive: BetaShape,
    pub unprivileged_negative: BetaShape,
}

impl Default for CellShapes {
    fn default() -> Self {
        Self {
            privileged_positive: BetaShape::new(6.0, 2.0),
            privileged_negative: BetaShape::new(2.0, 4.0),
            unprivileged_positive: BetaShape::new(5.0, 3.0),
            unprivileged_negative: BetaShape::new(2.0, 5.0),
        }
    }
}

impl CellShapes {
    fn get(&self, group: Group, label: u8) -> BetaShape {
        match (group, label) {
            (Group::Privileged, 1) => self.privileged_positive,
            (Group::Privileged, _) => self.privileged_negative,
            (Group::Unprivileged, 1) => self.unprivileged_positive,
            (Group::Unprivileged, _) => self.unprivileged_negative,
        }
    }
}

/// Parameters of a synthetic scored cohort. The defaults mirror a
/// small consumer-credit population: 1000 applicants, 19% of them in
/// the unprivileged group, whose favorable-label rate is 21% (relative)
/// below the privileged one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_total: usize,
    pub unprivileged_fraction: f64,
    pub positive_rate_priv: f64,
    pub positive_rate_unp: f64,
    pub shapes: CellShapes,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_total: 1000,
            unprivileged_fraction: 0.19,
            positive_rate_priv: 0.7249,
            positive_rate_unp: 0.5726,
            shapes: CellShapes::default(),
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), CohortError> {
        let bad = |m: String| Err(CohortError::InvalidSpec(m));
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(self.unprivileged_fraction) {
            return bad(format!("unprivileged_fraction {} not in (0,1)", self.unprivileged_fraction));
        }
        if !open_unit(self.positive_rate_priv) || !open_unit(self.positive_rate_unp) {
            return bad("positive rates must lie in (0,1)".into());
        }
        let s = &self.shapes;
        for shape in [
            s.privileged_positive,
            s.privileged_negative,
            s.unprivileged_positive,
            s.unprivileged_negative,
        ] {
            if !(shape.alpha > 0.0 && shape.beta > 0.0 && shape.alpha.is_finite() && shape.beta.is_finite()) {
                return bad(format!("shape parameters must be positive, got {shape:?}"));
            }
        }
        Ok(())
    }

    /// Group sizes `(privileged, unprivileged)`; the unprivileged size is
    /// `round(n_total * fraction)` and the privileged group takes the rest.
    pub fn group_sizes(&self) -> (usize, usize) {
        let unp = (self.n_total as f64 * self.unprivileged_fraction).round() as usize;
        (self.n_total - unp.min(self.n_total), unp.min(self.n_total))
    }
}

/// Draws a cohort from `spec`. Records are generated group by group
/// (privileged first, label-1 records first within a group), then shuffled
/// with the same generator.
pub fn generate_cohort(spec: &SyntheticSpec) -> Result<Cohort, CohortError> {
    spec.validate()?;
    let mut rng = Xoshiro256::seed_from_u64(spec.seed);
    let (n_priv, n_unp) = spec.group_sizes();
    let mut records = Vec::with_capacity(spec.n_total);
    for (group, size, rate) in [
        (Group::Privileged, n_priv, spec.positive_rate_priv),
        (Group::Unprivileged, n_unp, spec.positive_rate_unp),
    ] {
        let positives = (size as f64 * rate).round() as usize;
        for i in 0..size {
            let label = u8::from(i < positives);
            let shape = spec.shapes.get(group, label);
            let score = rng.beta(shape.alpha, shape.beta).clamp(0.0, 1.0);
            records.push(ScoredRecord { score, label, group });
        }
    }
    rng.shuffle(&mut records);
    Cohort::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn age_map() -> GroupMap {
        GroupMap::new()
            .with("old", Group::Privileged)
            .with("young", Group::Unprivileged)
    }

    #[test]
    fn loads_small_file() {
        let csv = "score,label,group\n0.9,1,old\n0.2,0,old\n0.8,1,young\n0.3,0,young\n";
        let c = read_cohort(csv.as_bytes(), &age_map()).unwrap();
        assert_eq!(c.counts(), GroupCounts { privileged: 2, unprivileged: 2 });
        assert_eq!(c.records()[2].score, 0.8);
        assert_eq!(c.records()[2].group, Group::Unprivileged);
    }

    #[test]
    fn column_order_is_free() {
        let csv = "group,label,score\nold,1,0.9\nold,0,0.2\nyoung,1,0.8\nyoung,0,0.3\n";
        let c = read_cohort(csv.as_bytes(), &age_map()).unwrap();
        assert_eq!(c.len(), 4);
    }

    #[test]
    fn score_out_of_range_reports_row() {
        let csv = "score,label,group\n1.3,1,old\n";
        let err = read_cohort(csv.as_bytes(), &age_map()).unwrap_err();
        assert_eq!(err.to_string(), "score out of range at row 2");
    }

    #[test]
    fn single_label_group_rejected() {
        let csv = "score,label,group\n0.9,1,old\n0.2,0,old\n0.8,1,young\n0.3,1,young\n";
        let err = read_cohort(csv.as_bytes(), &age_map()).unwrap_err();
        assert_eq!(err.to_string(), "group Unprivileged has no label-0 records");
    }

    #[test]
    fn other_errors() {
        let m = age_map();
        let e = read_cohort("score,label\n0.1,1\n".as_bytes(), &m).unwrap_err();
        assert!(matches!(e, CohortError::MissingColumn("group")));
        let e = read_cohort("score,label,group\nabc,1,old\n".as_bytes(), &m).unwrap_err();
        assert!(matches!(e, CohortError::BadScore { row: 2, .. }));
        let e = read_cohort("score,label,group\n0.5,1,old\n0.5,2,old\n".as_bytes(), &m).unwrap_err();
        assert!(matches!(e, CohortError::BadLabel { row: 3, .. }));
        let e = read_cohort("score,label,group\n0.5,1,mid\n".as_bytes(), &m).unwrap_err();
        assert_eq!(e.to_string(), "unmapped group value 'mid' at row 2");
        let e = read_cohort("score,label,group\n0.5,1,old\n0.4,0,old\n".as_bytes(), &m).unwrap_err();
        assert!(matches!(e, CohortError::EmptyGroup(Group::Unprivileged)));
    }

    #[test]
    fn default_spec_matches_lending_population() {
        let c = generate_cohort(&SyntheticSpec::default()).unwrap();
        assert_eq!(c.counts(), GroupCounts { privileged: 810, unprivileged: 190 });
        let rp = c.positive_rate(Group::Privileged);
        let ru = c.positive_rate(Group::Unprivileged);
        assert_eq!(rp, 587.0 / 810.0);
        assert_eq!(ru, 109.0 / 190.0);
        let relative_gap = 1.0 - ru / rp;
        assert!((relative_gap - 0.21).abs() < 0.01, "{relative_gap}");
    }

    #[test]
    fn generation_rounds_group_sizes() {
        let spec = SyntheticSpec { n_total: 10, unprivileged_fraction: 0.5, ..Default::default() };
        let c = generate_cohort(&spec).unwrap();
        assert_eq!(c.counts(), GroupCounts { privileged: 5, unprivileged: 5 });
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec::default();
        let a = generate_cohort(&spec).unwrap();
        let b = generate_cohort(&spec).unwrap();
        assert_eq!(a, b);
        let other = generate_cohort(&SyntheticSpec { seed: 8, ..spec }).unwrap();
        assert!(a.records().iter().zip(other.records()).any(|(x, y)| x.score != y.score));
    }

    #[test]
    fn invalid_specs() {
        let bad = SyntheticSpec { unprivileged_fraction: 1.0, ..Default::default() };
        assert!(generate_cohort(&bad).is_err());
        let mut shapes = CellShapes::default();
        shapes.privileged_negative.alpha = 0.0;
        assert!(generate_cohort(&SyntheticSpec { shapes, ..Default::default() }).is_err());
        // Too small to place both labels in each group.
        let tiny = SyntheticSpec { n_total: 2, unprivileged_fraction: 0.5, ..Default::default() };
        assert!(generate_cohort(&tiny).is_err());
    }

    #[test]
    fn save_writes_header_and_rows() {
        let csv = "score,label,group\n0.9,1,old\n0.2,0,old\n0.8,1,young\n0.3,0,young\n";
        let c = read_cohort(csv.as_bytes(), &age_map()).unwrap();
        let mut buf = Vec::new();
        write_cohort(&c, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(text.lines().next(), Some("score,label,group"));
        assert!(text.contains("0.8,1,unprivileged"));
    }

    #[test]
    fn save_to_empty_path_fails() {
        let c = generate_cohort(&SyntheticSpec::default()).unwrap();
        assert!(matches!(save_cohort(&c, ""), Err(CohortError::Io(_))));
    }

    #[test]
    fn group_map_parsing() {
        let m: GroupMap = "old=privileged, young=unprivileged".parse().unwrap();
        assert_eq!(m, age_map());
        assert!("old".parse::<GroupMap>().is_err());
        assert!("old=middle".parse::<GroupMap>().is_err());
    }
}
