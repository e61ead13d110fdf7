use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{ArgGroup, Args, ValueEnum};
use fairthresh_core::cohort::{generate_cohort, load_cohort};
use fairthresh_core::{AhpRatings, Cohort, CostModel, DiBounds, GroupMap, Scales, SyntheticSpec, Weights};

use crate::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Fraction of records in the unprivileged group.
    #[arg(long, default_value_t = 0.19)]
    pub unp_frac: f64,
    #[arg(long, default_value_t = 0.7249)]
    pub pos_rate_priv: f64,
    #[arg(long, default_value_t = 0.5726)]
    pub pos_rate_unp: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Cohort source: a CSV file, or the default synthetic cohort.
#[derive(Debug, Args)]
pub struct CohortArgs {
    /// Cohort CSV with columns score,label,group.
    #[arg(long)]
    pub cohort: Option<PathBuf>,
    /// Maps raw group tokens, e.g. `old=privileged,young=unprivileged`.
    #[arg(long, requires = "cohort")]
    pub group_map: Option<String>,
    /// Seed of the synthetic cohort used when --cohort is absent.
    #[arg(long, conflicts_with = "cohort")]
    pub synthetic_seed: Option<u64>,
}

impl CohortArgs {
    pub fn load(&self) -> CliResult<Cohort> {
        match &self.cohort {
            Some(path) => {
                let map = match &self.group_map {
                    Some(raw) => raw.parse::<GroupMap>().map_err(CliError::Usage)?,
                    None => GroupMap::canonical(),
                };
                load_cohort(path, &map).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
            }
            None => {
                let mut spec = SyntheticSpec::default();
                if let Some(seed) = self.synthetic_seed {
                    spec.seed = seed;
                }
                generate_cohort(&spec).map_err(|e| CliError::Runtime(e.to_string()))
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Expected profit per true positive.
    #[arg(long, default_value_t = 2000.0)]
    pub profit: f64,
    /// Expected loss per false positive.
    #[arg(long, default_value_t = 10000.0)]
    pub cost: f64,
    #[arg(long, default_value_t = 5.0)]
    pub w_fp: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_tp: f64,
    #[arg(long, default_value_t = 0.8)]
    pub di_lo: f64,
    #[arg(long, default_value_t = 1.25)]
    pub di_hi: f64,
}

impl CostArgs {
    pub fn resolve(&self) -> CliResult<(CostModel, DiBounds)> {
        let costs = CostModel { expected_profit: self.profit, expected_cost: self.cost, w_fp: self.w_fp, w_tp: self.w_tp };
        costs.validate().map_err(CliError::Usage)?;
        let bounds = DiBounds::new(self.di_lo, self.di_hi).map_err(CliError::Usage)?;
        Ok((costs, bounds))
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[command(flatten)]
    pub costs: CostArgs,
    #[arg(long)]
    pub t_unp: f64,
    #[arg(long)]
    pub t_priv: f64,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[command(flatten)]
    pub costs: CostArgs,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep points outside the DI band (flagged feasible=false).
    #[arg(long)]
    pub keep_infeasible: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["ratings", "interactive", "raters"])))]
pub struct WeightsArgs {
    /// utility-vs-SPD, utility-vs-WAOD, SPD-vs-WAOD, e.g. `1,2,2` or `1/9,1,9`.
    #[arg(long, allow_hyphen_values = true)]
    pub ratings: Option<AhpRatings>,
    /// Ask the three questions on the terminal.
    #[arg(long)]
    pub interactive: bool,
    /// File with one `a,b,c` rating line per rater; matrices are combined
    /// by geometric mean.
    #[arg(long)]
    pub raters: Option<PathBuf>,
    /// Question wording with `{a}` and `{b}` placeholders.
    #[arg(long)]
    pub question_template: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Oracle {
    Grid,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Basis {
    PerApplicant,
    Total,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("preference").required(true).args(["ratings", "weights", "raters"])))]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[command(flatten)]
    pub costs: CostArgs,
    #[arg(long)]
    pub ratings: Option<AhpRatings>,
    /// Direct weights `utility,spd,waod`, normalized to sum 1; skips AHP.
    #[arg(long, value_parser = parse_weights)]
    pub weights: Option<Weights>,
    #[arg(long)]
    pub raters: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub startup: usize,
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    #[arg(long, default_value_t = 24)]
    pub candidates: usize,
    #[arg(long, default_value_t = 100)]
    pub bandwidth_divisor: u32,
    /// Objective scales `utility,spd,waod`.
    #[arg(long, value_parser = parse_scales)]
    pub scales: Option<Scales>,
    #[arg(long, value_enum, default_value_t = Basis::PerApplicant)]
    pub utility_basis: Basis,
    /// Also run the exhaustive grid search and report the gap.
    #[arg(long, value_enum, default_value_t = Oracle::None)]
    pub oracle: Oracle,
    #[arg(long, default_value_t = 0.005)]
    pub grid_step: f64,
    /// Result JSON (best trial, full history, config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trial history CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "FAIRTHRESH_ADDR", default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Session storage; created if missing.
    #[arg(long, env = "FAIRTHRESH_DATA_DIR", default_value = "fairthresh-data")]
    pub data_dir: PathBuf,
    #[arg(long, env = "FAIRTHRESH_WORKERS", default_value_t = 2)]
    pub workers: usize,
    /// Directory of web UI assets to serve at `/`.
    #[arg(long, env = "FAIRTHRESH_STATIC_DIR")]
    pub static_dir: Option<PathBuf>,
    #[arg(long)]
    pub question_template: Option<String>,
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got '{s}'"));
    }
    let mut out = [0.0; 3];
    for (slot, p) in out.iter_mut().zip(&parts) {
        *slot = p.parse().map_err(|_| format!("'{p}' is not a number"))?;
    }
    Ok(out)
}

fn parse_weights(s: &str) -> Result<Weights, String> {
    let w = parse_triple(s)?;
    if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err("weights must be non-negative".into());
    }
    let sum: f64 = w.iter().sum();
    if sum <= 0.0 {
        return Err("weights must not all be zero".into());
    }
    Ok(Weights::from_array(w.map(|x| x / sum)))
}

fn parse_scales(s: &str) -> Result<Scales, String> {
    let [utility, spd, waod] = parse_triple(s)?;
    if [utility, spd, waod].iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err("scales must be positive".into());
    }
    Ok(Scales { utility, spd, waod })
}

pub fn read_raters(path: &PathBuf) -> CliResult<Vec<AhpRatings>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut raters = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let r = line
            .parse::<AhpRatings>()
            .map_err(|e| CliError::Usage(format!("{} line {}: {e}", path.display(), i + 1)))?;
        raters.push(r);
    }
    if raters.is_empty() {
        return Err(CliError::Usage(format!("{}: no ratings found", path.display())));
    }
    Ok(raters)
}
