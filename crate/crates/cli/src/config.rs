//! Run configuration: one flat set of keys shared by command-line flags and
//! JSON config files. Flags override file values; every default a command
//! uses is written back, so the echoed configuration reproduces the run.

use crate::error::{CliError, CliResult};
use clap::{Args, ValueEnum};
use panelbounds::bounds::{GridAxis, HeterogeneityGrid, ObjectiveKind, PointSet};
use panelbounds::models::{EvalPoint, Family, Link};
use panelbounds::sims::{DgpKind, Pipeline};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    Static,
    Dynamic,
    RcStatic,
    RcDynamic,
}

impl FamilyArg {
    pub fn family(self) -> Family {
        match self {
            FamilyArg::Static => Family::StaticBinary,
            FamilyArg::Dynamic => Family::DynamicBinary,
            FamilyArg::RcStatic => Family::RandomCoefStatic,
            FamilyArg::RcDynamic => Family::RandomCoefDynamic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LinkArg {
    Logit,
    Probit,
}

impl LinkArg {
    pub fn link(self) -> Link {
        match self {
            LinkArg::Logit => Link::Logit,
            LinkArg::Probit => Link::Probit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EffectArg {
    /// Average effect of moving one covariate between two values.
    Shift,
    /// Average partial derivative with respect to one covariate.
    Derivative,
    /// Random-coefficient shift of one covariate from 0 to 1.
    RcShift,
    /// Effect of the lagged outcome.
    Transition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveArg {
    Uniform,
    Baseline,
}

impl ObjectiveArg {
    pub fn from_kind(kind: &ObjectiveKind) -> Self {
        match kind {
            ObjectiveKind::Uniform => ObjectiveArg::Uniform,
            ObjectiveKind::Baseline { .. } => ObjectiveArg::Baseline,
        }
    }

    pub fn kind(self) -> ObjectiveKind {
        match self {
            ObjectiveArg::Uniform => ObjectiveKind::Uniform,
            ObjectiveArg::Baseline => ObjectiveKind::Baseline { prior: None },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DgpArg {
    StaticDiscrete,
    StaticContinuous,
    Figure1,
    RcStatic,
    Dynamic,
    RcDynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineArg {
    KnownBeta,
    Crossfit,
    Method1,
    Method2,
    Idset,
    Analytic,
}

impl PipelineArg {
    pub fn pipeline(self) -> Pipeline {
        match self {
            PipelineArg::KnownBeta => Pipeline::KnownBetaBounds,
            PipelineArg::Crossfit => Pipeline::CrossFit,
            PipelineArg::Method1 => Pipeline::Method1,
            PipelineArg::Method2 => Pipeline::Method2,
            PipelineArg::Idset => Pipeline::IdsetPercentile,
            PipelineArg::Analytic => Pipeline::AnalyticCfhn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TruthArg {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundsMethodArg {
    Known,
    Crossfit,
    CrossfitSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CiMethodArg {
    Theorem1,
    Method1,
    Method2,
    Tradeoff,
}

fn parse_split(s: &str) -> Result<(f64, f64), String> {
    let (a, g) = s
        .split_once(':')
        .ok_or_else(|| format!("split `{s}` is not of the form ALPHA:GAMMA"))?;
    let a: f64 = a
        .trim()
        .parse()
        .map_err(|_| format!("bad alpha in split `{s}`"))?;
    let g: f64 = g
        .trim()
        .parse()
        .map_err(|_| format!("bad gamma in split `{s}`"))?;
    Ok((a, g))
}

/// All configuration keys. Config files use the field names; flags use the
/// same names with dashes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,

    /// Long-format panel CSV (columns id, t, y, x1..xK, optional y0).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Model family (default: static, or dynamic when the data has y0).
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyArg>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub link: Option<LinkArg>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub effect: Option<EffectArg>,
    /// Covariate the effect refers to (1-based).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariate: Option<usize>,
    /// Shift effect: covariate value whose probability is added.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift_high: Option<f64>,
    /// Shift effect: covariate value whose probability is subtracted.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift_low: Option<f64>,
    /// Derivative effect evaluation point: observed, time-average or a number.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_at: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_min: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_max: Option<f64>,
    /// Known common parameter, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,

    /// Heterogeneity grid lower ends, one per axis.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_lo: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_hi: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<Vec<usize>>,
    /// Verification grid density per axis relative to the construction grid (0: none).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fine_factor: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveArg>,
    /// Use sufficient-statistic outcome classes where available.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduce: Option<bool>,
    /// Shift bound functions so they hold on the verification grid.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine: Option<bool>,

    /// bounds: known | crossfit | crossfit-set; infer: theorem1 | method1 | method2 | tradeoff.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Parameter grid values per component for method1.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_grid_size: Option<usize>,
    /// Trade-off splits as ALPHA:GAMMA, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_split)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub splits: Option<Vec<(f64, f64)>>,
    /// Total level the trade-off splits must sum to.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_total: Option<f64>,
    /// Shuffle units with this seed before the half-sample split.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shuffle_seed: Option<u64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_slack: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub escalate: Option<bool>,
    /// Re-solve just above the minimal feasible slack instead of failing.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub project: Option<bool>,
    /// Treat the covariates as discrete even with more than 64 distinct values.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub force_discrete: Option<bool>,
    /// Cells with fewer units are flagged as thin.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_cell_count: Option<usize>,

    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dgp: Option<DgpArg>,
    /// Covariate support size of the figure1 design.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support: Option<usize>,
    /// Design parameter (β0, the slope mean, or the lag coefficient).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
    /// Covariate slope of the dynamic design.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periods: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    /// Use 1000 replications unless reps is given.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full: Option<bool>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<PipelineArg>,
    /// Parameter values for a sweep, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthArg>,
    /// Quadrature nodes per normal component.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    /// Monte Carlo draws for the true effect.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,

    /// Figure-data CSV path (default: standard output).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Per-replication CSV path.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps_csv: Option<PathBuf>,
    /// Write the solved bound functions to this JSON file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump: Option<PathBuf>,
    /// Write each bound program in LP text format into this directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump_lp: Option<PathBuf>,
    /// Bound-function dump to validate.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

fn object_without_nulls(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => Map::new(),
    }
}

impl RunConfig {
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("configuration serialises")
    }

    /// Keys that carry a value.
    pub fn keys(&self) -> Vec<String> {
        object_without_nulls(self.to_value())
            .into_iter()
            .map(|(k, _)| k)
            .collect()
    }

    /// Reads a JSON config file; unknown keys are rejected.
    pub fn from_file(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}", path.display()), e))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("config {}: {e}", path.display())))?;
        if let Some(v) = cfg.schema_version {
            if v != SCHEMA_VERSION {
                return Err(CliError::validation(format!(
                    "config key `schema_version`: unsupported version {v} (expected {SCHEMA_VERSION})"
                )));
            }
        }
        Ok(cfg)
    }

    /// `self` with every key set in `flags` overridden.
    pub fn merged(self, flags: &RunConfig) -> RunConfig {
        let mut base = object_without_nulls(self.to_value());
        base.extend(object_without_nulls(flags.to_value()));
        serde_json::from_value(Value::Object(base)).expect("merge of valid configurations")
    }

    /// Rejects keys the command does not use.
    pub fn check_keys(&self, command: &str, allowed: &[&str]) -> CliResult<()> {
        for key in self.keys() {
            if key == "schema_version" || key == "command" {
                continue;
            }
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::validation(format!(
                    "config key `{key}` does not apply to `{command}`"
                )));
            }
        }
        Ok(())
    }

    /// Writes the axes and verification densities of `grid` into unset keys.
    pub fn default_grid(&mut self, grid: &HeterogeneityGrid) {
        let axes = grid.points.axes.clone().unwrap_or_default();
        self.grid_lo
            .get_or_insert_with(|| axes.iter().map(|a| a.lo).collect());
        self.grid_hi
            .get_or_insert_with(|| axes.iter().map(|a| a.hi).collect());
        self.grid_points
            .get_or_insert_with(|| axes.iter().map(|a| a.n).collect());
        let fine = grid.fine_points.as_ref().and_then(|f| f.axes.clone());
        self.fine_factor.get_or_insert_with(|| match fine {
            Some(f) => f.iter().zip(&axes).map(|(f, a)| f.n / a.n).collect(),
            None => vec![0; axes.len()],
        });
    }

    /// The grid described by the (materialised) grid keys.
    pub fn grid(&self, dim: usize) -> CliResult<HeterogeneityGrid> {
        let lo = self.grid_lo.as_deref().unwrap_or_default();
        let hi = self.grid_hi.as_deref().unwrap_or_default();
        let n = self.grid_points.as_deref().unwrap_or_default();
        let fine = self.fine_factor.as_deref().unwrap_or_default();
        for (key, len) in [
            ("grid_lo", lo.len()),
            ("grid_hi", hi.len()),
            ("grid_points", n.len()),
            ("fine_factor", fine.len()),
        ] {
            if len != dim {
                return Err(CliError::validation(format!(
                    "config key `{key}` has {len} entries; the heterogeneity has {dim} dimension(s)"
                )));
            }
        }
        for d in 0..dim {
            if !(lo[d] < hi[d]) || n[d] < 2 {
                return Err(CliError::validation(format!(
                    "grid axis {}: need grid_lo < grid_hi and at least two points",
                    d + 1
                )));
            }
        }
        let axes: Vec<GridAxis> = (0..dim)
            .map(|d| GridAxis::new(lo[d], hi[d], n[d]))
            .collect();
        let coarse = HeterogeneityGrid::new(PointSet::product(&axes)?);
        if fine.iter().all(|f| *f == 0) {
            return Ok(coarse);
        }
        if fine.contains(&0) {
            return Err(CliError::validation(
                "config key `fine_factor`: entries must be all zero or all positive",
            ));
        }
        let fine_axes: Vec<GridAxis> = axes
            .iter()
            .zip(fine)
            .map(|(a, f)| GridAxis::new(a.lo, a.hi, a.n * f))
            .collect();
        Ok(coarse.with_fine(PointSet::product(&fine_axes)?)?)
    }

    pub fn eval_point(&self) -> CliResult<EvalPoint> {
        match self.eval_at.as_deref().unwrap_or("observed") {
            "observed" => Ok(EvalPoint::Observed),
            "time-average" | "time_average" => Ok(EvalPoint::TimeAverage),
            other => other.parse::<f64>().ok().filter(|v| v.is_finite()).map(EvalPoint::Fixed).ok_or_else(|| {
                CliError::validation(format!(
                    "config key `eval_at`: expected observed, time-average or a number, got `{other}`"
                ))
            }),
        }
    }

    /// The design chosen by the DGP keys, with defaults written back.
    /// `sample` controls whether `n` and `seed` are part of the run.
    pub fn dgp_spec(&mut self, sample: bool) -> CliResult<panelbounds::sims::DgpSpec> {
        let arg = *self.dgp.get_or_insert(DgpArg::StaticDiscrete);
        let kind = match arg {
            DgpArg::StaticDiscrete => DgpKind::StaticDiscrete,
            DgpArg::StaticContinuous => DgpKind::StaticContinuous,
            DgpArg::Figure1 => DgpKind::Figure1Discrete {
                support: *self.support.get_or_insert(6),
            },
            DgpArg::RcStatic => DgpKind::RcStatic,
            DgpArg::Dynamic => DgpKind::DynamicContinuous,
            DgpArg::RcDynamic => DgpKind::RcDynamic,
        };
        if arg != DgpArg::Figure1 && self.support.is_some() {
            return Err(CliError::validation(
                "config key `support` applies to the figure1 design only",
            ));
        }
        let figure1 = arg == DgpArg::Figure1;
        let param = *self.param.get_or_insert(1.0);
        let periods = *self.periods.get_or_insert(if figure1 { 2 } else { 3 });
        let (n, seed) = if sample {
            (
                *self.n.get_or_insert(if figure1 { 200 } else { 1000 }),
                *self.seed.get_or_insert(1),
            )
        } else {
            (1, 0)
        };
        let mut spec = panelbounds::sims::DgpSpec::new(kind, param, n, periods, seed)?;
        if arg == DgpArg::Dynamic {
            spec = spec.with_slope(*self.slope.get_or_insert(1.0));
        } else if self.slope.is_some() {
            return Err(CliError::validation(
                "config key `slope` applies to the dynamic design only",
            ));
        }
        Ok(spec)
    }
}
