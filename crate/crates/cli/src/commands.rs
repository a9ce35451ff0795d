//! Subcommand implementations. Each takes the merged configuration, writes
//! back the defaults it used, and returns the result record.

use crate::config::{
    BoundsMethodArg, CiMethodArg, EffectArg, FamilyArg, LinkArg, ObjectiveArg, PipelineArg,
    RunConfig, TruthArg,
};
use crate::data::load_panel_csv;
use crate::error::{CliError, CliResult};
use clap::ValueEnum;
use panelbounds::bounds::{
    build_bound_program, solve_bound_function, verify_bound_condition, BoundFunction,
    BoundSettings, HeterogeneityGrid,
};
use panelbounds::estimation::{
    conditional_logit_mle, estimate_bounds_crossfit, estimate_bounds_crossfit_set,
    estimate_bounds_known_beta, split_half, supports_conditional_logit, BoundsEstimate,
    ConditionalLogit, PanelDataset,
};
use panelbounds::idset::{
    estimated_choice_probs, population_choice_probs, sharp_idset, IdsetOptions,
};
use panelbounds::inference::{
    ci_method1, ci_method2, ci_theorem1, tradeoff_search_method2, ConfidenceInterval,
    DEFAULT_SPLITS,
};
use panelbounds::lp::write_lp_format;
use panelbounds::models::{
    default_effect_range, ConditioningValue, EffectKind, EffectSpec, Family, ModelSpec,
};
use panelbounds::sims::{
    run_replications, sweep as run_sweep, true_average_effect, write_replications_csv,
    write_sweep_csv, DgpSpec, PipelineConfig, TrueEffectMethod,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::HashSet;
use std::path::Path;

/// Largest bound-condition violation accepted by `validate-bounds`.
pub const VALIDATION_TOLERANCE: f64 = 1e-9;

/// Covariate paths beyond which data count as continuous for the identified set.
pub const MAX_DISCRETE_CELLS: usize = 64;

/// What a command produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub result: Value,
    pub seeds: Value,
    pub warnings: Vec<String>,
    /// One-line human summary.
    pub summary: String,
    /// Text that goes to standard output instead of the record (CSV output).
    pub stdout: Option<String>,
    /// Failure detected after the result was assembled; reported after the record is written.
    pub failure: Option<CliError>,
}

/// Bound functions as written by `bounds --dump`.
#[derive(Debug, Serialize, Deserialize)]
pub struct BoundDump {
    pub config: RunConfig,
    pub bound_functions: Vec<BoundFunction>,
}

fn required<T: Clone>(value: &Option<T>, key: &str) -> CliResult<T> {
    value
        .clone()
        .ok_or_else(|| CliError::validation(format!("config key `{key}` is required")))
}

fn forbid(present: bool, key: &str, context: &str) -> CliResult<()> {
    if present {
        Err(CliError::validation(format!(
            "config key `{key}` does not apply to {context}"
        )))
    } else {
        Ok(())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes)
        .map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))
}

fn parse_method<M: ValueEnum>(cfg: &mut RunConfig, default: &str) -> CliResult<M> {
    let text = cfg
        .method
        .get_or_insert_with(|| default.to_string())
        .clone();
    M::from_str(&text, false).map_err(|_| {
        let names: Vec<String> = M::value_variants()
            .iter()
            .filter_map(|v| v.to_possible_value().map(|p| p.get_name().to_string()))
            .collect();
        CliError::validation(format!(
            "config key `method`: `{text}` is not one of {}",
            names.join(", ")
        ))
    })
}

const MODEL_KEYS: &[&str] = &[
    "data",
    "family",
    "link",
    "effect",
    "covariate",
    "shift_high",
    "shift_low",
    "eval_at",
    "b_min",
    "b_max",
    "beta",
];
const GRID_KEYS: &[&str] = &[
    "grid_lo",
    "grid_hi",
    "grid_points",
    "fine_factor",
    "objective",
    "reduce",
    "refine",
];

fn keys(groups: &[&[&'static str]]) -> Vec<&'static str> {
    groups.iter().flat_map(|g| g.iter().copied()).collect()
}

/// Loads the panel and fixes the model it is analysed with.
fn data_model(cfg: &mut RunConfig, shuffle: bool) -> CliResult<(PanelDataset, ModelSpec)> {
    let path = required(&cfg.data, "data")?;
    let mut panel = load_panel_csv(&path)?;
    if shuffle {
        if let Some(seed) = cfg.shuffle_seed {
            let mut order: Vec<usize> = (0..panel.n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            panel = panel.select(&order);
        }
    }
    let family = *cfg.family.get_or_insert(if panel.y0.is_some() {
        FamilyArg::Dynamic
    } else {
        FamilyArg::Static
    });
    let link = *cfg.link.get_or_insert(LinkArg::Logit);
    let model = ModelSpec::new(
        family.family(),
        link.link(),
        panel.periods,
        panel.covariates,
    )?;
    panel.check_model(&model)?;
    Ok((panel, model))
}

/// The user-supplied common parameter, checked against the model (empty
/// when the model has none).
fn known_beta(cfg: &mut RunConfig, model: &ModelSpec) -> CliResult<Option<Vec<f64>>> {
    let d = model.beta_dim();
    match &cfg.beta {
        Some(b) if b.len() != d => Err(CliError::validation(format!(
            "config key `beta` has {} entries; the model has {d} common parameter(s)",
            b.len()
        ))),
        Some(b) => Ok(Some(b.clone())),
        None if d == 0 => {
            cfg.beta = Some(Vec::new());
            Ok(Some(Vec::new()))
        }
        None => Ok(None),
    }
}

fn require_estimator(model: &ModelSpec) -> CliResult<()> {
    if supports_conditional_logit(model) {
        Ok(())
    } else {
        Err(CliError::validation(format!(
            "no built-in estimator of the common parameter for the {:?} {:?} model; supply config key `beta`",
            model.family, model.link
        )))
    }
}

/// Full-sample conditional-logit estimate.
fn full_sample_beta(
    panel: &PanelDataset,
    model: &ModelSpec,
) -> CliResult<panelbounds::estimation::BetaEstimate> {
    require_estimator(model)?;
    let all: Vec<usize> = (0..panel.n).collect();
    Ok(conditional_logit_mle(
        panel,
        &all,
        &ConditionalLogit::default(),
    )?)
}

fn covariate_index(cfg: &mut RunConfig, model: &ModelSpec) -> CliResult<usize> {
    let k = *cfg.covariate.get_or_insert(1);
    if k == 0 || k > model.covariates {
        return Err(CliError::validation(format!(
            "config key `covariate`: {k} is not between 1 and {}",
            model.covariates
        )));
    }
    Ok(k - 1)
}

/// The effect chosen by the effect keys. `beta_ref` supplies the parameter
/// around which the derivative range is set when `b_min`/`b_max` are absent.
fn effect_spec(
    cfg: &mut RunConfig,
    model: &ModelSpec,
    beta_ref: &dyn Fn() -> CliResult<Vec<f64>>,
) -> CliResult<EffectSpec> {
    let default = match model.family {
        Family::StaticBinary => EffectArg::Shift,
        Family::RandomCoefStatic => EffectArg::RcShift,
        Family::DynamicBinary | Family::RandomCoefDynamic => EffectArg::Transition,
    };
    let arg = *cfg.effect.get_or_insert(default);
    let context = format!("the {arg:?} effect").to_lowercase();
    forbid(
        arg != EffectArg::Shift && (cfg.shift_high.is_some() || cfg.shift_low.is_some()),
        "shift_high/shift_low",
        &context,
    )?;
    forbid(
        arg != EffectArg::Derivative && cfg.eval_at.is_some(),
        "eval_at",
        &context,
    )?;
    forbid(
        arg == EffectArg::Transition && cfg.covariate.is_some(),
        "covariate",
        &context,
    )?;
    let kind = match arg {
        EffectArg::Shift => EffectKind::DiscreteShift {
            k: covariate_index(cfg, model)?,
            x1: *cfg.shift_high.get_or_insert(1.0),
            x2: *cfg.shift_low.get_or_insert(0.0),
        },
        EffectArg::Derivative => {
            let k = covariate_index(cfg, model)?;
            let at = cfg.eval_point()?;
            cfg.eval_at.get_or_insert_with(|| "observed".into());
            EffectKind::Derivative { k, at }
        }
        EffectArg::RcShift => EffectKind::RandomCoefShift {
            k: covariate_index(cfg, model)?,
        },
        EffectArg::Transition => EffectKind::TransitionEffect,
    };
    let effect = match (cfg.b_min, cfg.b_max) {
        (Some(lo), Some(hi)) => EffectSpec::new(kind, lo, hi)?,
        _ => {
            let beta_box: Vec<(f64, f64)> = if matches!(kind, EffectKind::Derivative { .. }) {
                beta_ref()?.iter().map(|b| (b - 3.0, b + 3.0)).collect()
            } else {
                Vec::new()
            };
            let (lo, hi) = default_effect_range(&kind, model, &beta_box)?;
            EffectSpec::new(
                kind,
                *cfg.b_min.get_or_insert(lo),
                *cfg.b_max.get_or_insert(hi),
            )?
        }
    };
    effect.check_compatible(model)?;
    Ok(effect)
}

/// Bound settings from the grid keys, defaulting to `defaults`.
fn bound_settings(
    cfg: &mut RunConfig,
    model: &ModelSpec,
    defaults: BoundSettings,
) -> CliResult<BoundSettings> {
    cfg.default_grid(&defaults.grid);
    let grid = cfg.grid(model.heterogeneity_dim())?;
    let objective = cfg
        .objective
        .get_or_insert(ObjectiveArg::from_kind(&defaults.objective))
        .kind();
    let reduce = *cfg.reduce.get_or_insert(defaults.reduce);
    let refine = *cfg.refine.get_or_insert(defaults.refine);
    Ok(BoundSettings {
        grid,
        objective,
        reduce,
        refine,
        ..defaults
    })
}

/// Re-creates the settings recorded in a dump's configuration.
pub fn settings_from_config(cfg: &RunConfig, model: &ModelSpec) -> CliResult<BoundSettings> {
    let mut cfg = cfg.clone();
    bound_settings(&mut cfg, model, BoundSettings::default_for(model))
}

fn estimate_warnings(est: &BoundsEstimate, warnings: &mut Vec<String>) {
    if est.capped > 0 {
        warnings.push(format!(
            "{} bound program(s) were contracted towards the effect range during refinement",
            est.capped
        ));
    }
    if est.max_violation > VALIDATION_TOLERANCE {
        warnings.push(format!(
            "largest bound-condition violation is {:e}",
            est.max_violation
        ));
    }
}

/// Distinct conditioning values per anchor set, in unit order.
fn anchor_groups(
    panel: &PanelDataset,
    est: &BoundsEstimate,
) -> CliResult<Vec<(Vec<Vec<f64>>, Vec<ConditioningValue>)>> {
    let unit_sets: Vec<Vec<usize>> = if est.anchors.len() == 1 {
        vec![(0..panel.n).collect()]
    } else {
        let (a, b) = split_half(panel.n)?;
        vec![a, b]
    };
    Ok(unit_sets
        .into_iter()
        .zip(&est.anchors)
        .map(|(units, anchors)| {
            let mut seen = HashSet::new();
            let zs = units
                .into_iter()
                .map(|i| panel.unit_z(i))
                .filter(|z| seen.insert(z.key()))
                .collect();
            (anchors.clone(), zs)
        })
        .collect())
}

fn dump_bounds(
    cfg: &RunConfig,
    panel: &PanelDataset,
    model: &ModelSpec,
    effect: &EffectSpec,
    settings: &BoundSettings,
    est: &BoundsEstimate,
) -> CliResult<()> {
    let groups = anchor_groups(panel, est)?;
    if let Some(path) = &cfg.dump {
        let mut bfs = Vec::new();
        for (anchors, zs) in &groups {
            let solved: Vec<_> = zs
                .par_iter()
                .map(|z| solve_bound_function(model, effect, z, anchors, settings))
                .collect::<Result<_, _>>()?;
            bfs.extend(solved);
        }
        let dump = BoundDump {
            config: cfg.clone(),
            bound_functions: bfs,
        };
        let text = serde_json::to_string_pretty(&dump).expect("dump serialises");
        write_file(path, text.as_bytes())?;
    }
    if let Some(dir) = &cfg.dump_lp {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("cannot create {}", dir.display()), e))?;
        for (s, (anchors, zs)) in groups.iter().enumerate() {
            for (j, z) in zs.iter().enumerate() {
                let program = build_bound_program(model, effect, z, anchors, settings)?;
                let mut buf = Vec::new();
                write_lp_format(&program.lp, &mut buf).expect("writing to memory");
                write_file(&dir.join(format!("set{}_z{}.lp", s + 1, j + 1)), &buf)?;
            }
        }
    }
    Ok(())
}

pub fn bounds(cfg: &mut RunConfig) -> CliResult<Outcome> {
    cfg.check_keys(
        "bounds",
        &keys(&[
            MODEL_KEYS,
            GRID_KEYS,
            &["method", "gamma", "shuffle_seed", "dump", "dump_lp"],
        ]),
    )?;
    let (panel, model) = data_model(cfg, true)?;
    let beta = known_beta(cfg, &model)?;
    let method: BoundsMethodArg =
        parse_method(cfg, if beta.is_some() { "known" } else { "crossfit" })?;
    forbid(
        method != BoundsMethodArg::CrossfitSet && cfg.gamma.is_some(),
        "gamma",
        "this method",
    )?;
    forbid(
        method == BoundsMethodArg::Known && cfg.shuffle_seed.is_some(),
        "shuffle_seed",
        "method known",
    )?;
    if method != BoundsMethodArg::Known {
        forbid(
            model.beta_dim() > 0 && cfg.beta.is_some(),
            "beta",
            "cross-fitted methods (the parameter is estimated)",
        )?;
        require_estimator(&model)?;
    }
    let effect = effect_spec(cfg, &model, &|| match &beta {
        Some(b) => Ok(b.clone()),
        None => Ok(full_sample_beta(&panel, &model)?.beta),
    })?;
    let settings = bound_settings(cfg, &model, BoundSettings::default_for(&model))?;
    let estimator = ConditionalLogit::default();
    let est = match method {
        BoundsMethodArg::Known => {
            let beta = beta.ok_or_else(|| {
                CliError::validation("config key `beta` is required for method known")
            })?;
            estimate_bounds_known_beta(&panel, &model, &effect, &beta, &settings)?
        }
        BoundsMethodArg::Crossfit => {
            estimate_bounds_crossfit(&panel, &model, &effect, &settings, &estimator)?
        }
        BoundsMethodArg::CrossfitSet => {
            let gamma = *cfg.gamma.get_or_insert(0.05 / 3.0);
            estimate_bounds_crossfit_set(&panel, &model, &effect, &settings, gamma, &estimator)?
        }
    };
    let mut warnings = Vec::new();
    estimate_warnings(&est, &mut warnings);
    dump_bounds(cfg, &panel, &model, &effect, &settings, &est)?;
    Ok(Outcome {
        summary: format!(
            "L = {}  U = {}  sigma_L = {}  sigma_U = {}  n = {}",
            est.l_hat, est.u_hat, est.sigma_l, est.sigma_u, est.n
        ),
        result: serde_json::to_value(&est).expect("estimate serialises"),
        seeds: cfg
            .shuffle_seed
            .map_or(json!({}), |s| json!({ "shuffle_seed": s })),
        warnings,
        ..Default::default()
    })
}

pub fn infer(cfg: &mut RunConfig) -> CliResult<Outcome> {
    cfg.check_keys(
        "infer",
        &keys(&[
            MODEL_KEYS,
            GRID_KEYS,
            &[
                "method",
                "alpha",
                "gamma",
                "beta_grid_size",
                "splits",
                "c_total",
                "shuffle_seed",
            ],
        ]),
    )?;
    let (panel, model) = data_model(cfg, true)?;
    let beta = known_beta(cfg, &model)?;
    let method: CiMethodArg = parse_method(
        cfg,
        if beta.is_some() {
            "theorem1"
        } else {
            "method2"
        },
    )?;
    let context = "this interval method";
    forbid(
        method == CiMethodArg::Theorem1 && cfg.gamma.is_some(),
        "gamma",
        context,
    )?;
    forbid(
        method != CiMethodArg::Method1 && cfg.beta_grid_size.is_some(),
        "beta_grid_size",
        context,
    )?;
    let tradeoff = method == CiMethodArg::Tradeoff;
    forbid(!tradeoff && cfg.splits.is_some(), "splits", context)?;
    forbid(!tradeoff && cfg.c_total.is_some(), "c_total", context)?;
    forbid(
        tradeoff && (cfg.alpha.is_some() || cfg.gamma.is_some()),
        "alpha/gamma",
        "tradeoff (use `splits`)",
    )?;
    let estimated = method != CiMethodArg::Theorem1;
    if estimated {
        forbid(
            model.beta_dim() > 0 && cfg.beta.is_some(),
            "beta",
            "estimated-parameter intervals",
        )?;
        require_estimator(&model)?;
    }
    let effect = effect_spec(cfg, &model, &|| match &beta {
        Some(b) => Ok(b.clone()),
        None => Ok(full_sample_beta(&panel, &model)?.beta),
    })?;
    let settings = bound_settings(cfg, &model, BoundSettings::default_for(&model))?;
    let estimator = ConditionalLogit::default();
    let mut warnings = Vec::new();
    let ci: ConfidenceInterval = match method {
        CiMethodArg::Theorem1 => {
            let alpha = *cfg.alpha.get_or_insert(0.05);
            let est = match &beta {
                Some(b) => estimate_bounds_known_beta(&panel, &model, &effect, b, &settings)?,
                None => {
                    require_estimator(&model)?;
                    warnings.push("cross-fitted bounds: the interval ignores estimation noise in the parameter".into());
                    estimate_bounds_crossfit(&panel, &model, &effect, &settings, &estimator)?
                }
            };
            estimate_warnings(&est, &mut warnings);
            ci_theorem1(&est, alpha)?
        }
        CiMethodArg::Method1 => {
            let gamma = *cfg.gamma.get_or_insert(1e-4);
            let alpha = *cfg.alpha.get_or_insert(0.05 - gamma);
            let grid = *cfg.beta_grid_size.get_or_insert(500);
            let beta_hat = full_sample_beta(&panel, &model)?;
            ci_method1(
                &panel, &model, &effect, &settings, &beta_hat, alpha, gamma, grid,
            )?
        }
        CiMethodArg::Method2 => {
            let default_gamma = 0.05 / 3.0;
            let gamma = *cfg.gamma.get_or_insert(default_gamma);
            let alpha = *cfg.alpha.get_or_insert(if gamma == default_gamma {
                0.05 * 2.0 / 3.0
            } else {
                0.05 - gamma
            });
            ci_method2(&panel, &model, &effect, &settings, alpha, gamma, &estimator)?
        }
        CiMethodArg::Tradeoff => {
            let splits = cfg
                .splits
                .get_or_insert_with(|| DEFAULT_SPLITS.to_vec())
                .clone();
            let first = splits.first().copied().unwrap_or((0.0, 0.0));
            let c_total = *cfg.c_total.get_or_insert(first.0 + first.1);
            tradeoff_search_method2(
                &panel, &model, &effect, &settings, &estimator, c_total, &splits,
            )?
        }
    };
    warnings.extend(ci.diagnostics.warnings.iter().cloned());
    Ok(Outcome {
        summary: format!(
            "{:?} interval [{}, {}]  width {}  alpha {}  gamma {}",
            ci.method,
            ci.lower,
            ci.upper,
            ci.width(),
            ci.alpha,
            ci.gamma
        ),
        result: serde_json::to_value(&ci).expect("interval serialises"),
        seeds: cfg
            .shuffle_seed
            .map_or(json!({}), |s| json!({ "shuffle_seed": s })),
        warnings,
        ..Default::default()
    })
}

fn idset_options(cfg: &mut RunConfig, defaults: IdsetOptions) -> IdsetOptions {
    IdsetOptions {
        slack: *cfg.slack.get_or_insert(defaults.slack),
        escalate: *cfg.escalate.get_or_insert(defaults.escalate),
        max_slack: *cfg.max_slack.get_or_insert(defaults.max_slack),
        project: *cfg.project.get_or_insert(defaults.project),
        ..defaults
    }
}

const IDSET_KEYS: &[&str] = &[
    "slack",
    "max_slack",
    "escalate",
    "project",
    "grid_lo",
    "grid_hi",
    "grid_points",
];

/// Construction grid only: the identified set is computed on one grid.
fn idset_grid(
    cfg: &mut RunConfig,
    model: &ModelSpec,
    default: &HeterogeneityGrid,
) -> CliResult<HeterogeneityGrid> {
    cfg.default_grid(&HeterogeneityGrid::new(default.points.clone()));
    let grid = cfg.grid(model.heterogeneity_dim())?;
    if grid.fine_points.is_some() {
        return Err(CliError::validation(
            "config key `fine_factor` does not apply to `idset`",
        ));
    }
    Ok(grid)
}

pub fn idset(cfg: &mut RunConfig) -> CliResult<Outcome> {
    let mut warnings = Vec::new();
    let (table, model, effect, beta0, grid) = if cfg.data.is_some() {
        cfg.check_keys(
            "idset",
            &keys(&[
                MODEL_KEYS,
                IDSET_KEYS,
                &["fine_factor", "force_discrete", "min_cell_count"],
            ]),
        )?;
        let (panel, model) = data_model(cfg, false)?;
        let beta = match known_beta(cfg, &model)? {
            Some(b) => b,
            None => {
                warnings.push(
                    "common parameter estimated by conditional logit on the full sample".into(),
                );
                full_sample_beta(&panel, &model)?.beta
            }
        };
        let effect = effect_spec(cfg, &model, &|| Ok(beta.clone()))?;
        let min_count = *cfg.min_cell_count.get_or_insert(5);
        let table = estimated_choice_probs(&panel, min_count);
        let force = *cfg.force_discrete.get_or_insert(false);
        if table.len() > MAX_DISCRETE_CELLS && !force {
            return Err(CliError::validation(format!(
                "data have {} distinct covariate paths (more than {MAX_DISCRETE_CELLS}); the identified set needs \
                 discrete covariates (set config key `force_discrete` to override)",
                table.len()
            )));
        }
        let thin = table.thin.iter().filter(|t| **t).count();
        if thin > 0 {
            warnings.push(format!(
                "{thin} of {} cells have fewer than {min_count} units",
                table.len()
            ));
        }
        let grid = idset_grid(cfg, &model, &BoundSettings::default_for(&model).grid)?;
        (table, model, effect, beta, grid)
    } else {
        cfg.check_keys(
            "idset",
            &keys(&[
                IDSET_KEYS,
                &[
                    "fine_factor",
                    "dgp",
                    "support",
                    "param",
                    "slope",
                    "periods",
                    "nodes",
                ],
            ]),
        )?;
        let spec = cfg.dgp_spec(false)?;
        let nodes = *cfg.nodes.get_or_insert(80);
        let table = population_choice_probs(&spec, nodes, None)?;
        let model = spec.model();
        let grid = idset_grid(cfg, &model, &spec.default_settings().grid)?;
        (table, model, spec.effect(), spec.beta0(), grid)
    };
    let defaults = if cfg.data.is_some() {
        IdsetOptions::estimated()
    } else {
        IdsetOptions::default()
    };
    let opts = idset_options(cfg, defaults);
    let set = sharp_idset(&table, &model, &effect, &beta0, &grid.points, &opts)?;
    if set.projected > 0 {
        warnings.push(format!(
            "{} cell(s) lie outside the model and were projected (slack {:e})",
            set.projected, set.feasibility_slack
        ));
    }
    let mut result = serde_json::to_value(&set).expect("identified set serialises");
    result["cells"] = json!(table.len());
    result["beta"] = json!(beta0);
    Ok(Outcome {
        summary: format!(
            "identified set [{}, {}]  cells {}",
            set.lower,
            set.upper,
            table.len()
        ),
        result,
        seeds: json!({}),
        warnings,
        ..Default::default()
    })
}

fn truth_method(cfg: &mut RunConfig) -> CliResult<TrueEffectMethod> {
    match *cfg.truth.get_or_insert(TruthArg::Quadrature) {
        TruthArg::Quadrature => {
            forbid(cfg.draws.is_some(), "draws", "quadrature")?;
            Ok(TrueEffectMethod::Quadrature {
                nodes: *cfg.nodes.get_or_insert(80),
            })
        }
        TruthArg::MonteCarlo => {
            forbid(cfg.nodes.is_some(), "nodes", "Monte Carlo truth")?;
            Ok(TrueEffectMethod::MonteCarlo {
                draws: *cfg.draws.get_or_insert(1_000_000),
                seed: *cfg.seed.get_or_insert(1),
            })
        }
    }
}

pub fn true_effect(cfg: &mut RunConfig) -> CliResult<Outcome> {
    cfg.check_keys(
        "true-effect",
        &[
            "dgp", "support", "param", "slope", "periods", "truth", "nodes", "draws", "seed",
        ],
    )?;
    let spec = cfg.dgp_spec(false)?;
    if cfg.truth != Some(TruthArg::MonteCarlo) {
        forbid(cfg.seed.is_some(), "seed", "quadrature")?;
    }
    let method = truth_method(cfg)?;
    let truth = true_average_effect(&spec, method)?;
    let seeds = match method {
        TrueEffectMethod::MonteCarlo { seed, .. } => json!({ "truth_seed": seed }),
        TrueEffectMethod::Quadrature { .. } => json!({}),
    };
    Ok(Outcome {
        summary: format!("true average effect {} ± {}", truth.value, truth.se),
        result: serde_json::to_value(truth).expect("truth serialises"),
        seeds,
        ..Default::default()
    })
}

const SIM_KEYS: &[&str] = &[
    "dgp",
    "support",
    "slope",
    "n",
    "periods",
    "seed",
    "reps",
    "full",
    "pipeline",
    "alpha",
    "gamma",
    "beta_grid_size",
    "slack",
    "max_slack",
    "escalate",
    "project",
    "truth",
    "nodes",
    "draws",
    "csv",
];

/// Design, pipeline configuration and replication count of a simulation.
fn simulation_setup(cfg: &mut RunConfig) -> CliResult<(DgpSpec, PipelineConfig, usize)> {
    let spec = cfg.dgp_spec(true)?;
    let pipeline = *cfg.pipeline.get_or_insert(PipelineArg::KnownBeta);
    let context = format!("the {pipeline:?} pipeline").to_lowercase();
    let with_gamma = matches!(pipeline, PipelineArg::Method1 | PipelineArg::Method2);
    forbid(
        pipeline == PipelineArg::Idset && cfg.alpha.is_some(),
        "alpha",
        &context,
    )?;
    forbid(!with_gamma && cfg.gamma.is_some(), "gamma", &context)?;
    forbid(
        pipeline != PipelineArg::Method1 && cfg.beta_grid_size.is_some(),
        "beta_grid_size",
        &context,
    )?;
    let idset_keys = cfg.slack.is_some()
        || cfg.max_slack.is_some()
        || cfg.escalate.is_some()
        || cfg.project.is_some();
    forbid(
        pipeline != PipelineArg::Idset && idset_keys,
        "slack/max_slack/escalate/project",
        &context,
    )?;
    let mut pc = PipelineConfig::new(pipeline.pipeline());
    match pipeline {
        PipelineArg::Method1 => {
            pc.gamma = *cfg.gamma.get_or_insert(1e-4);
            pc.alpha = *cfg.alpha.get_or_insert(0.05 - pc.gamma);
            pc.beta_grid_size = *cfg.beta_grid_size.get_or_insert(500);
        }
        PipelineArg::Method2 => {
            let default_gamma = 0.05 / 3.0;
            pc.gamma = *cfg.gamma.get_or_insert(default_gamma);
            pc.alpha = *cfg.alpha.get_or_insert(if pc.gamma == default_gamma {
                0.05 * 2.0 / 3.0
            } else {
                0.05 - pc.gamma
            });
        }
        PipelineArg::Idset => pc.idset = idset_options(cfg, IdsetOptions::estimated()),
        _ => pc.alpha = *cfg.alpha.get_or_insert(0.05),
    }
    pc.settings = Some(bound_settings(cfg, &spec.model(), spec.default_settings())?);
    pc.truth = truth_method(cfg)?;
    let full = *cfg.full.get_or_insert(false);
    let reps = *cfg.reps.get_or_insert(if full { 1000 } else { 100 });
    Ok((spec, pc, reps))
}

fn simulation_seeds(spec: &DgpSpec, pc: &PipelineConfig, reps: usize) -> Value {
    let mut seeds = json!({
        "base_seed": spec.seed,
        "rep_seeds": format!("base_seed + rep, rep = 0..{reps}"),
    });
    if let TrueEffectMethod::MonteCarlo { seed, .. } = pc.truth {
        seeds["truth_seed"] = json!(seed);
    }
    seeds
}

fn emit_csv(cfg: &RunConfig, bytes: Vec<u8>, out: &mut Outcome) -> CliResult<()> {
    match &cfg.csv {
        Some(path) => write_file(path, &bytes),
        None => {
            out.stdout = Some(String::from_utf8(bytes).expect("CSV is UTF-8"));
            Ok(())
        }
    }
}

fn failure_warnings(failures: &[String], warnings: &mut Vec<String>) {
    warnings.extend(failures.iter().map(|m| format!("replication failed: {m}")));
}

pub fn simulate(cfg: &mut RunConfig) -> CliResult<Outcome> {
    cfg.check_keys(
        "simulate",
        &keys(&[SIM_KEYS, GRID_KEYS, &["param", "reps_csv"]]),
    )?;
    let (spec, pc, reps) = simulation_setup(cfg)?;
    let summary = run_replications(&spec, &pc, reps)?;
    let mut out = Outcome {
        summary: format!(
            "mean L {}  mean U {}  true {}  coverage {}  reps {}  failures {}",
            summary.mean_l,
            summary.mean_u,
            summary.m_true,
            summary.coverage,
            summary.reps,
            summary.failures
        ),
        seeds: simulation_seeds(&spec, &pc, reps),
        ..Default::default()
    };
    failure_warnings(&summary.failure_messages, &mut out.warnings);
    if let Some(path) = &cfg.reps_csv {
        let mut buf = Vec::new();
        write_replications_csv(&summary, &mut buf).expect("writing to memory");
        write_file(path, &buf)?;
    }
    let mut buf = Vec::new();
    write_sweep_csv(std::slice::from_ref(&summary), &mut buf).expect("writing to memory");
    emit_csv(cfg, buf, &mut out)?;
    out.result = serde_json::to_value(&summary).expect("summary serialises");
    Ok(out)
}

pub fn sweep(cfg: &mut RunConfig) -> CliResult<Outcome> {
    cfg.check_keys("sweep", &keys(&[SIM_KEYS, GRID_KEYS, &["params"]]))?;
    let values = cfg
        .params
        .get_or_insert_with(|| vec![-2.0, -1.0, 0.0, 1.0, 2.0])
        .clone();
    let (spec, pc, reps) = simulation_setup(cfg)?;
    // The swept values replace the design parameter.
    cfg.param = None;
    let rows = run_sweep(&spec, &values, &pc, reps)?;
    let mut out = Outcome {
        summary: format!("{} parameter values, {reps} replications each", rows.len()),
        seeds: simulation_seeds(&spec, &pc, reps),
        ..Default::default()
    };
    for r in &rows {
        failure_warnings(&r.failure_messages, &mut out.warnings);
    }
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf).expect("writing to memory");
    emit_csv(cfg, buf, &mut out)?;
    out.result = serde_json::to_value(&rows).expect("summaries serialise");
    Ok(out)
}

pub fn validate_bounds(cfg: &mut RunConfig) -> CliResult<Outcome> {
    cfg.check_keys("validate-bounds", &["input"])?;
    let path = required(&cfg.input, "input")?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::io(format!("cannot read {}", path.display()), e))?;
    let dump: BoundDump = serde_json::from_str(&text).map_err(|e| {
        CliError::validation(format!(
            "{} is not a bound-function dump: {e}",
            path.display()
        ))
    })?;
    let entries: Vec<Value> = dump
        .bound_functions
        .par_iter()
        .enumerate()
        .map(|(j, bf)| -> CliResult<Value> {
            let settings = settings_from_config(&dump.config, &bf.model)?;
            let again = solve_bound_function(&bf.model, &bf.effect, &bf.z, &bf.betas, &settings)?;
            let same = |a: &[f64], b: &[f64]| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            };
            let identical = same(&again.ell, &bf.ell) && same(&again.u, &bf.u);
            let coarse = verify_bound_condition(bf, &bf.betas, &settings.grid.points);
            let fine = settings
                .grid
                .fine_points
                .as_ref()
                .map(|f| verify_bound_condition(bf, &bf.betas, f));
            Ok(json!({
                "index": j,
                "z": bf.z,
                "identical": identical,
                "violation_grid": coarse,
                "violation_fine_grid": fine,
                "recorded_violation": bf.max_violation,
            }))
        })
        .collect::<CliResult<_>>()?;
    let all_identical = entries.iter().all(|e| e["identical"] == json!(true));
    let worst = entries
        .iter()
        .flat_map(|e| {
            [
                e["violation_grid"].as_f64(),
                e["violation_fine_grid"].as_f64(),
            ]
        })
        .flatten()
        .fold(f64::NEG_INFINITY, f64::max);
    let failure = if !all_identical {
        Some(CliError::Numerical(
            "re-solved bound functions differ from the dump".into(),
        ))
    } else if worst > VALIDATION_TOLERANCE {
        Some(CliError::Numerical(format!(
            "bound condition violated by {worst:e}"
        )))
    } else {
        None
    };
    Ok(Outcome {
        summary: format!(
            "{} bound function(s); identical after re-solve: {all_identical}; worst violation {worst:e}",
            entries.len()
        ),
        result: json!({
            "functions": entries.len(),
            "all_identical": all_identical,
            "worst_violation": worst,
            "tolerance": VALIDATION_TOLERANCE,
            "entries": entries,
        }),
        seeds: json!({}),
        failure,
        ..Default::default()
    })
}
