//! Seeded data-generating processes, the true-effect oracle, and the
//! replication runner that aggregates bounds and intervals across
//! simulated panels.
//!
//! Every unit draws from its own ChaCha8 stream: the generator is seeded
//! with the replication seed and `set_stream(unit)` selects the unit, so
//! panels are reproducible and units can be generated independently.
//! Within a unit variates are drawn in a fixed order: heterogeneity first,
//! then covariates period by period, then the outcome errors.

use crate::bounds::{analytic_cfhn_bounds, BoundSettings, HeterogeneityGrid};
use crate::error::{Error, Result};
use crate::estimation::{
    conditional_logit_mle, estimate_bounds_crossfit, estimate_bounds_crossfit_set,
    estimate_bounds_known_beta, mean_sd, ConditionalLogit, PanelDataset,
};
use crate::idset::{estimated_choice_probs, sharp_idset, IdsetOptions};
use crate::inference::{ci_method1, ci_method2_from_estimate, ci_theorem1};
use crate::models::{
    default_effect_range, effect_value, ConditioningValue, EffectKind, EffectSpec, EvalPoint,
    Family, Link, ModelSpec,
};
use crate::special::{logistic_cdf, logistic_pdf, normal_cdf, NormalQuadrature};
use rand::distributions::Open01;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

/// Standard deviation of each random-coefficient component (variance `1/√2`).
pub fn rc_sd() -> f64 {
    std::f64::consts::FRAC_1_SQRT_2.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    /// `Y_t = 1{X_t β + A ≥ ε_t}`, `A ~ N(0,1)`, `X_t = 1{A ≥ η_t}`, `η_t ~ N(0,1)`.
    StaticDiscrete,
    /// As above with `X_t ~ N(A, 1)`.
    StaticContinuous,
    /// `X_t = x_t/(S−1)`, `x_t` uniform on `{0..S−1}`, `A ~ N(mean_t X_t − 1/2, 1)`.
    Figure1Discrete { support: usize },
    /// `Y_t = 1{X_t A_2 + A_1 ≥ ε_t}`, `A_1 ~ N(0, 1/√2)`, `A_2 ~ N(param, 1/√2)`, `X_t = 1{A_1 ≥ η_t}`.
    RcStatic,
    /// `Y_t = 1{Y_{t−1} γ + X_t β + A ≥ ε_t}`, `Y_0 = 1{X_0 β + A ≥ ε_0}`, `X_t ~ N(A, 1)`.
    DynamicContinuous,
    /// `Y_t = 1{Y_{t−1} A_2 + A_1 ≥ ε_t}`, `Y_0 = 1{A_1 ≥ ε_0}`.
    RcDynamic,
}

/// A data-generating process. `param` is `β0` for the static designs, the
/// mean of `A_2` for the random-coefficient designs and `γ` for the dynamic
/// design, whose covariate slope is `slope`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub param: f64,
    pub slope: f64,
    pub n: usize,
    pub periods: usize,
    pub seed: u64,
}

impl DgpSpec {
    pub fn new(kind: DgpKind, param: f64, n: usize, periods: usize, seed: u64) -> Result<Self> {
        let spec = DgpSpec {
            kind,
            param,
            slope: 1.0,
            n,
            periods,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_slope(mut self, slope: f64) -> Self {
        self.slope = slope;
        self
    }

    pub fn with_param(mut self, param: f64) -> Self {
        self.param = param;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("DGP needs n >= 1"));
        }
        if self.periods < 2 {
            return Err(Error::invalid("DGP needs T >= 2"));
        }
        if self.periods > 20 {
            return Err(Error::invalid("DGP supports at most 20 periods"));
        }
        if !(self.param.is_finite() && self.slope.is_finite()) {
            return Err(Error::invalid("DGP parameters must be finite"));
        }
        if let DgpKind::Figure1Discrete { support } = self.kind {
            if support < 2 {
                return Err(Error::invalid(
                    "covariate support needs at least two values",
                ));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> ModelSpec {
        let (family, k) = match self.kind {
            DgpKind::StaticDiscrete
            | DgpKind::StaticContinuous
            | DgpKind::Figure1Discrete { .. } => (Family::StaticBinary, 1),
            DgpKind::RcStatic => (Family::RandomCoefStatic, 1),
            DgpKind::DynamicContinuous => (Family::DynamicBinary, 1),
            DgpKind::RcDynamic => (Family::RandomCoefDynamic, 0),
        };
        ModelSpec::new(family, Link::Logit, self.periods, k).expect("DGP models are well formed")
    }

    /// The common parameter in model order (`[γ, β]` for the dynamic design).
    pub fn beta0(&self) -> Vec<f64> {
        match self.kind {
            DgpKind::StaticDiscrete
            | DgpKind::StaticContinuous
            | DgpKind::Figure1Discrete { .. } => {
                vec![self.param]
            }
            DgpKind::DynamicContinuous => vec![self.param, self.slope],
            DgpKind::RcStatic | DgpKind::RcDynamic => vec![],
        }
    }

    /// The average effect studied with this design.
    pub fn effect(&self) -> EffectSpec {
        let model = self.model();
        let kind = match self.kind {
            DgpKind::StaticDiscrete | DgpKind::Figure1Discrete { .. } => {
                EffectKind::DiscreteShift {
                    k: 0,
                    x1: 1.0,
                    x2: 0.0,
                }
            }
            DgpKind::StaticContinuous => EffectKind::Derivative {
                k: 0,
                at: EvalPoint::Observed,
            },
            DgpKind::RcStatic => EffectKind::RandomCoefShift { k: 0 },
            DgpKind::DynamicContinuous | DgpKind::RcDynamic => EffectKind::TransitionEffect,
        };
        // Derivative range covers every slope within 3 of the truth.
        let wide = [(self.param - 3.0, self.param + 3.0)];
        let (lo, hi) = default_effect_range(&kind, &model, &wide).expect("finite box");
        EffectSpec::new(kind, lo, hi).expect("finite range")
    }

    /// Bound settings matching the design: 100 grid points on `[-5, 5]` for
    /// scalar heterogeneity (50 for the dynamic design), 50×50 on
    /// `[-5, 5]×[-7, 7]` for random coefficients.
    pub fn default_settings(&self) -> BoundSettings {
        let model = self.model();
        let mut settings = BoundSettings::default_for(&model);
        if self.kind == DgpKind::DynamicContinuous {
            settings.grid = HeterogeneityGrid::scalar(-5.0, 5.0, 50, Some(10)).expect("valid grid");
        }
        settings
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(
            self.kind,
            DgpKind::StaticContinuous | DgpKind::DynamicContinuous
        )
    }
}

#[inline]
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

#[inline]
fn logistic(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.sample(Open01);
    (u / (1.0 - u)).ln()
}

fn unit_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One simulated unit: heterogeneity in model order, covariates, outcomes.
struct UnitDraw {
    a: [f64; 2],
    x: Vec<f64>,
    y0: Option<u8>,
    y: Vec<u8>,
}

fn draw_unit(dgp: &DgpSpec, rng: &mut ChaCha8Rng) -> UnitDraw {
    let t_len = dgp.periods;
    let beta = dgp.param;
    let mut x = Vec::with_capacity(t_len);
    let mut y = Vec::with_capacity(t_len);
    let mut y0 = None;
    let a;
    match dgp.kind {
        DgpKind::StaticDiscrete => {
            let ai = normal(rng);
            for _ in 0..t_len {
                x.push(if ai >= normal(rng) { 1.0 } else { 0.0 });
            }
            for xt in &x {
                y.push(u8::from(xt * beta + ai >= logistic(rng)));
            }
            a = [ai, 0.0];
        }
        DgpKind::StaticContinuous => {
            let ai = normal(rng);
            for _ in 0..t_len {
                x.push(ai + normal(rng));
            }
            for xt in &x {
                y.push(u8::from(xt * beta + ai >= logistic(rng)));
            }
            a = [ai, 0.0];
        }
        DgpKind::Figure1Discrete { support } => {
            let scale = (support - 1) as f64;
            for _ in 0..t_len {
                x.push(rng.gen_range(0..support) as f64 / scale);
            }
            let mean = x.iter().sum::<f64>() / t_len as f64;
            let ai = mean - 0.5 + normal(rng);
            for xt in &x {
                y.push(u8::from(xt * beta + ai >= logistic(rng)));
            }
            a = [ai, 0.0];
        }
        DgpKind::RcStatic => {
            let sd = rc_sd();
            let a1 = sd * normal(rng);
            let a2 = dgp.param + sd * normal(rng);
            for _ in 0..t_len {
                x.push(if a1 >= normal(rng) { 1.0 } else { 0.0 });
            }
            for xt in &x {
                y.push(u8::from(xt * a2 + a1 >= logistic(rng)));
            }
            a = [a1, a2];
        }
        DgpKind::DynamicContinuous => {
            let gamma = dgp.param;
            let slope = dgp.slope;
            let ai = normal(rng);
            let x0 = ai + normal(rng);
            for _ in 0..t_len {
                x.push(ai + normal(rng));
            }
            let mut prev = u8::from(x0 * slope + ai >= logistic(rng));
            y0 = Some(prev);
            for xt in &x {
                let yt = u8::from(f64::from(prev) * gamma + xt * slope + ai >= logistic(rng));
                y.push(yt);
                prev = yt;
            }
            a = [ai, 0.0];
        }
        DgpKind::RcDynamic => {
            let sd = rc_sd();
            let a1 = sd * normal(rng);
            let a2 = dgp.param + sd * normal(rng);
            let mut prev = u8::from(a1 >= logistic(rng));
            y0 = Some(prev);
            for _ in 0..t_len {
                let yt = u8::from(f64::from(prev) * a2 + a1 >= logistic(rng));
                y.push(yt);
                prev = yt;
            }
            a = [a1, a2];
        }
    }
    UnitDraw { a, x, y0, y }
}

/// Draws a panel; identical specs give bit-identical panels.
pub fn generate(dgp: &DgpSpec) -> Result<PanelDataset> {
    dgp.validate()?;
    let model = dgp.model();
    let mut y = Vec::with_capacity(dgp.n * dgp.periods);
    let mut x = Vec::with_capacity(dgp.n * dgp.periods * model.covariates);
    let mut y0 = Vec::with_capacity(dgp.n);
    for i in 0..dgp.n {
        let mut rng = unit_rng(dgp.seed, i as u64);
        let d = draw_unit(dgp, &mut rng);
        y.extend_from_slice(&d.y);
        if model.covariates > 0 {
            x.extend_from_slice(&d.x);
        }
        if let Some(v) = d.y0 {
            y0.push(v);
        }
    }
    let y0 = if model.is_dynamic() { Some(y0) } else { None };
    PanelDataset::new(dgp.n, dgp.periods, model.covariates, y, x, y0)
}

/// One conditioning value with its probability and the conditional law of
/// the heterogeneity as weighted points (weights sum to `weight`).
#[derive(Debug, Clone)]
pub struct MixtureCell {
    pub z: ConditioningValue,
    pub weight: f64,
    pub points: Vec<Vec<f64>>,
    pub point_weights: Vec<f64>,
}

fn binary_vectors(periods: usize) -> impl Iterator<Item = Vec<f64>> {
    (0..1usize << periods).map(move |mask| (0..periods).map(|t| ((mask >> t) & 1) as f64).collect())
}

fn binary_prob(p: f64, x: &[f64]) -> f64 {
    x.iter()
        .map(|&v| if v == 1.0 { p } else { 1.0 - p })
        .product()
}

/// Joint law of `(Z, A)` for designs with discrete conditioning variables,
/// by Gauss–Hermite quadrature over the heterogeneity.
pub fn population_mixture(dgp: &DgpSpec, nodes: usize) -> Result<Vec<MixtureCell>> {
    dgp.validate()?;
    let q = NormalQuadrature::new(nodes)?;
    let t_len = dgp.periods;
    let mut cells = Vec::new();
    match dgp.kind {
        DgpKind::StaticDiscrete => {
            for x in binary_vectors(t_len) {
                let mut points = Vec::with_capacity(nodes);
                let mut pw = Vec::with_capacity(nodes);
                for (a, w) in q.nodes.iter().zip(&q.weights) {
                    points.push(vec![*a]);
                    pw.push(w * binary_prob(normal_cdf(*a), &x));
                }
                let z = ConditioningValue::new(t_len, 1, x, None)?;
                cells.push(MixtureCell {
                    z,
                    weight: pw.iter().sum(),
                    points,
                    point_weights: pw,
                });
            }
        }
        DgpKind::Figure1Discrete { support } => {
            let total = support.pow(t_len as u32);
            let cell_w = 1.0 / total as f64;
            let scale = (support - 1) as f64;
            for idx in 0..total {
                let mut rest = idx;
                let x: Vec<f64> = (0..t_len)
                    .map(|_| {
                        let v = rest % support;
                        rest /= support;
                        v as f64 / scale
                    })
                    .collect();
                let mean = x.iter().sum::<f64>() / t_len as f64 - 0.5;
                let points = q.nodes.iter().map(|a| vec![mean + a]).collect();
                let pw = q.weights.iter().map(|w| w * cell_w).collect();
                let z = ConditioningValue::new(t_len, 1, x, None)?;
                cells.push(MixtureCell {
                    z,
                    weight: cell_w,
                    points,
                    point_weights: pw,
                });
            }
        }
        DgpKind::RcStatic => {
            let sd = rc_sd();
            for x in binary_vectors(t_len) {
                let mut points = Vec::with_capacity(nodes * nodes);
                let mut pw = Vec::with_capacity(nodes * nodes);
                for (n1, w1) in q.nodes.iter().zip(&q.weights) {
                    let a1 = sd * n1;
                    let px = binary_prob(normal_cdf(a1), &x);
                    for (n2, w2) in q.nodes.iter().zip(&q.weights) {
                        points.push(vec![a1, dgp.param + sd * n2]);
                        pw.push(w1 * w2 * px);
                    }
                }
                let z = ConditioningValue::new(t_len, 1, x, None)?;
                cells.push(MixtureCell {
                    z,
                    weight: pw.iter().sum(),
                    points,
                    point_weights: pw,
                });
            }
        }
        DgpKind::RcDynamic => {
            let sd = rc_sd();
            for y0 in 0..=1u8 {
                let mut points = Vec::with_capacity(nodes * nodes);
                let mut pw = Vec::with_capacity(nodes * nodes);
                for (n1, w1) in q.nodes.iter().zip(&q.weights) {
                    let a1 = sd * n1;
                    let p1 = logistic_cdf(a1);
                    let py0 = if y0 == 1 { p1 } else { 1.0 - p1 };
                    for (n2, w2) in q.nodes.iter().zip(&q.weights) {
                        points.push(vec![a1, dgp.param + sd * n2]);
                        pw.push(w1 * w2 * py0);
                    }
                }
                let z = ConditioningValue::new(t_len, 0, vec![], Some(y0))?;
                cells.push(MixtureCell {
                    z,
                    weight: pw.iter().sum(),
                    points,
                    point_weights: pw,
                });
            }
        }
        DgpKind::StaticContinuous | DgpKind::DynamicContinuous => {
            return Err(Error::invalid(
                "design has continuous covariates; supply conditioning values",
            ));
        }
    }
    Ok(cells)
}

/// Conditional law of the heterogeneity given `z` as weighted points
/// (weights sum to one).
pub fn conditional_heterogeneity(
    dgp: &DgpSpec,
    z: &ConditioningValue,
    nodes: usize,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let model = dgp.model();
    model.check_z(z)?;
    let q = NormalQuadrature::new(nodes)?;
    let t_len = dgp.periods as f64;
    match dgp.kind {
        DgpKind::StaticContinuous | DgpKind::DynamicContinuous => {
            // Prior N(0,1) and X_t | A ~ N(A, 1) give a normal posterior.
            let mean = z.x.iter().sum::<f64>() / (1.0 + t_len);
            let sd = (1.0 / (1.0 + t_len)).sqrt();
            let points: Vec<Vec<f64>> = q.nodes.iter().map(|v| vec![mean + sd * v]).collect();
            let mut weights = q.weights.clone();
            if dgp.kind == DgpKind::DynamicContinuous {
                let y0 = z.y0.unwrap_or(0);
                for (w, p) in weights.iter_mut().zip(&points) {
                    let a = p[0];
                    let p1 = q.expect(a, 1.0, |x0| logistic_cdf(x0 * dgp.slope + a));
                    *w *= if y0 == 1 { p1 } else { 1.0 - p1 };
                }
                let total: f64 = weights.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::Numerical(
                        "initial condition has zero probability".into(),
                    ));
                }
                weights.iter_mut().for_each(|w| *w /= total);
            }
            Ok((points, weights))
        }
        _ => {
            let key = z.key();
            let cell = population_mixture(dgp, nodes)?
                .into_iter()
                .find(|c| c.z.key() == key)
                .ok_or_else(|| Error::invalid("conditioning value outside the design's support"))?;
            if !(cell.weight > 0.0) {
                return Err(Error::invalid("conditioning value has zero probability"));
            }
            let w = cell.point_weights.iter().map(|v| v / cell.weight).collect();
            Ok((cell.points, w))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrueEffectMethod {
    /// Gauss–Hermite quadrature with this many nodes per normal component.
    Quadrature { nodes: usize },
    /// Simulation with this many `(Z, A)` draws.
    MonteCarlo { draws: usize, seed: u64 },
}

impl Default for TrueEffectMethod {
    fn default() -> Self {
        TrueEffectMethod::Quadrature { nodes: 80 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueEffect {
    pub value: f64,
    /// Monte Carlo standard error (zero for quadrature).
    pub se: f64,
    pub method: TrueEffectMethod,
}

const MC_BLOCK: usize = 1 << 14;

/// The population average effect `E[m(Z, A, β0)]` of the design's effect.
pub fn true_average_effect(dgp: &DgpSpec, method: TrueEffectMethod) -> Result<TrueEffect> {
    dgp.validate()?;
    let model = dgp.model();
    let effect = dgp.effect();
    let beta0 = dgp.beta0();
    let (value, se) = match method {
        TrueEffectMethod::Quadrature { nodes } => {
            let v = match dgp.kind {
                DgpKind::StaticContinuous => {
                    let q = NormalQuadrature::new(nodes)?;
                    let b = dgp.param;
                    q.expect(0.0, 1.0, |a| {
                        q.expect(a, 1.0, |x| b * logistic_pdf(x * b + a))
                    })
                }
                DgpKind::DynamicContinuous => {
                    let q = NormalQuadrature::new(nodes)?;
                    let (g, b) = (dgp.param, dgp.slope);
                    q.expect(0.0, 1.0, |a| {
                        q.expect(a, 1.0, |x| {
                            logistic_cdf(g + x * b + a) - logistic_cdf(x * b + a)
                        })
                    })
                }
                _ => population_mixture(dgp, nodes)?
                    .iter()
                    .map(|cell| {
                        cell.points
                            .iter()
                            .zip(&cell.point_weights)
                            .map(|(a, w)| {
                                w * effect_value(&effect.kind, &model, &cell.z, a, &beta0)
                            })
                            .sum::<f64>()
                    })
                    .sum(),
            };
            (v, 0.0)
        }
        TrueEffectMethod::MonteCarlo { draws, seed } => {
            if draws < 2 {
                return Err(Error::invalid(
                    "Monte Carlo oracle needs at least two draws",
                ));
            }
            let blocks = draws.div_ceil(MC_BLOCK);
            let sums: Vec<(f64, f64)> = (0..blocks)
                .into_par_iter()
                .map(|b| {
                    let mut rng = unit_rng(seed, b as u64);
                    let count = MC_BLOCK.min(draws - b * MC_BLOCK);
                    let (mut s, mut s2) = (0.0, 0.0);
                    for _ in 0..count {
                        let d = draw_unit(dgp, &mut rng);
                        let z = ConditioningValue {
                            periods: dgp.periods,
                            covariates: model.covariates,
                            x: if model.covariates > 0 { d.x } else { vec![] },
                            y0: d.y0,
                        };
                        let a = &d.a[..model.heterogeneity_dim()];
                        let m = effect_value(&effect.kind, &model, &z, a, &beta0);
                        s += m;
                        s2 += m * m;
                    }
                    (s, s2)
                })
                .collect();
            let (s, s2) = sums
                .iter()
                .fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
            let n = draws as f64;
            let mean = s / n;
            let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
            (mean, (var / n).sqrt())
        }
    };
    Ok(TrueEffect { value, se, method })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Bounds at the true parameter with the known-parameter interval.
    KnownBetaBounds,
    /// Cross-fitted bounds; the interval ignores estimation noise in `β̂`.
    CrossFit,
    /// Full-sample bounds at `β̂` and the envelope interval over a Wald set.
    Method1,
    /// Cross-fitted set-constrained bounds and their Bonferroni interval.
    Method2,
    /// Estimated sharp identified set from cell frequencies.
    IdsetPercentile,
    /// Closed-form bounds for a binary regressor.
    AnalyticCfhn,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub pipeline: Pipeline,
    pub alpha: f64,
    pub gamma: f64,
    /// Parameter grid size per component for [`Pipeline::Method1`].
    pub beta_grid_size: usize,
    /// Bound settings; the design's defaults when `None`.
    pub settings: Option<BoundSettings>,
    /// Identified-set options for [`Pipeline::IdsetPercentile`].
    pub idset: IdsetOptions,
    pub truth: TrueEffectMethod,
}

impl PipelineConfig {
    pub fn new(pipeline: Pipeline) -> Self {
        PipelineConfig {
            pipeline,
            alpha: 0.05,
            gamma: 0.0001,
            beta_grid_size: 500,
            settings: None,
            idset: IdsetOptions::estimated(),
            truth: TrueEffectMethod::default(),
        }
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepResult {
    pub rep: usize,
    pub seed: u64,
    pub lower: f64,
    pub upper: f64,
    pub ci: Option<(f64, f64)>,
    pub beta_hat: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub pipeline: Pipeline,
    pub param: f64,
    /// Successful replications.
    pub reps: usize,
    pub failures: usize,
    pub failure_messages: Vec<String>,
    pub m_true: f64,
    pub m_true_se: f64,
    pub mean_l: f64,
    pub mean_u: f64,
    pub sd_l: f64,
    pub sd_u: f64,
    pub q_low_l: f64,
    pub q_high_l: f64,
    pub q_low_u: f64,
    pub q_high_u: f64,
    /// Share of replications whose interval contains `m_true`; the interval is
    /// the confidence interval when the pipeline has one, else `[L, U]`.
    pub coverage: f64,
    pub mean_ci: Option<(f64, f64)>,
    pub results: Vec<RepResult>,
}

/// Sample quantile with linear interpolation between order statistics
/// (`h = (n−1)p`).
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v
}

fn run_one(
    dgp: &DgpSpec,
    cfg: &PipelineConfig,
    settings: &BoundSettings,
    rep: usize,
) -> Result<RepResult> {
    let seed = dgp.seed.wrapping_add(rep as u64);
    let spec = dgp.with_seed(seed);
    let panel = generate(&spec)?;
    let model = dgp.model();
    let effect = dgp.effect();
    let beta0 = dgp.beta0();
    let clogit = ConditionalLogit::default();
    let needs_estimate = |p: Pipeline| -> Result<()> {
        if model.beta_dim() > 0 && !crate::estimation::supports_conditional_logit(&model) {
            return Err(Error::invalid(format!(
                "{p:?} pipeline needs an estimable common parameter"
            )));
        }
        Ok(())
    };
    let mut out = RepResult {
        rep,
        seed,
        lower: 0.0,
        upper: 0.0,
        ci: None,
        beta_hat: None,
    };
    match cfg.pipeline {
        Pipeline::KnownBetaBounds => {
            let be = estimate_bounds_known_beta(&panel, &model, &effect, &beta0, settings)?;
            let ci = ci_theorem1(&be, cfg.alpha)?;
            (out.lower, out.upper, out.ci) = (be.l_hat, be.u_hat, Some((ci.lower, ci.upper)));
        }
        Pipeline::CrossFit => {
            needs_estimate(cfg.pipeline)?;
            let be = estimate_bounds_crossfit(&panel, &model, &effect, settings, &clogit)?;
            let ci = ci_theorem1(&be, cfg.alpha)?;
            (out.lower, out.upper, out.ci) = (be.l_hat, be.u_hat, Some((ci.lower, ci.upper)));
        }
        Pipeline::Method1 => {
            needs_estimate(cfg.pipeline)?;
            let all: Vec<usize> = (0..panel.n).collect();
            let est = conditional_logit_mle(&panel, &all, &clogit)?;
            let be = estimate_bounds_known_beta(&panel, &model, &effect, &est.beta, settings)?;
            let ci = ci_method1(
                &panel,
                &model,
                &effect,
                settings,
                &est,
                cfg.alpha,
                cfg.gamma,
                cfg.beta_grid_size,
            )?;
            (out.lower, out.upper, out.ci) = (be.l_hat, be.u_hat, Some((ci.lower, ci.upper)));
            out.beta_hat = Some(est.beta);
        }
        Pipeline::Method2 => {
            needs_estimate(cfg.pipeline)?;
            let be = estimate_bounds_crossfit_set(
                &panel, &model, &effect, settings, cfg.gamma, &clogit,
            )?;
            let ci = ci_method2_from_estimate(&be, cfg.alpha, cfg.gamma)?;
            (out.lower, out.upper, out.ci) = (be.l_hat, be.u_hat, Some((ci.lower, ci.upper)));
        }
        Pipeline::IdsetPercentile => {
            let table = estimated_choice_probs(&panel, 1);
            let set = sharp_idset(
                &table,
                &model,
                &effect,
                &beta0,
                &settings.grid.points,
                &cfg.idset,
            )?;
            (out.lower, out.upper) = (set.lower, set.upper);
        }
        Pipeline::AnalyticCfhn => {
            if model.family != Family::StaticBinary || model.covariates != 1 {
                return Err(Error::invalid(
                    "analytic bounds need a static single-regressor design",
                ));
            }
            let mut per_unit = Vec::with_capacity(panel.n);
            for i in 0..panel.n {
                let x: Vec<u8> = panel
                    .unit_x(i)
                    .iter()
                    .map(|v| match *v {
                        v if v == 0.0 => Ok(0),
                        v if v == 1.0 => Ok(1),
                        _ => Err(Error::invalid("analytic bounds need a binary regressor")),
                    })
                    .collect::<Result<_>>()?;
                per_unit.push(analytic_cfhn_bounds(&x, panel.unit_y(i))?);
            }
            let (l, sl) = mean_sd(per_unit.iter().map(|p| p.0));
            let (u, su) = mean_sd(per_unit.iter().map(|p| p.1));
            let c = crate::special::normal_quantile(1.0 - cfg.alpha / 2.0)?;
            let root_n = (panel.n as f64).sqrt();
            (out.lower, out.upper) = (l, u);
            out.ci = Some((l - c * sl / root_n, u + c * su / root_n));
        }
    }
    Ok(out)
}

/// Runs `reps` seeded replications (seed `dgp.seed + rep`) and aggregates
/// them in replication order. Failed replications are counted, not fatal.
pub fn run_replications(
    dgp: &DgpSpec,
    cfg: &PipelineConfig,
    reps: usize,
) -> Result<ReplicationSummary> {
    dgp.validate()?;
    if reps == 0 {
        return Err(Error::invalid("need at least one replication"));
    }
    let truth = true_average_effect(dgp, cfg.truth)?;
    let settings = cfg
        .settings
        .clone()
        .unwrap_or_else(|| dgp.default_settings());
    let outcomes: Vec<Result<RepResult>> = (0..reps)
        .into_par_iter()
        .map(|r| run_one(dgp, cfg, &settings, r))
        .collect();
    let mut results = Vec::with_capacity(reps);
    let mut failure_messages = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => results.push(v),
            Err(e) if e.is_validation() && !matches!(e, Error::HalfSample { .. }) => {
                return Err(e);
            }
            Err(e) => failure_messages.push(format!("rep {r}: {e}")),
        }
    }
    Ok(summarize(
        cfg.pipeline,
        dgp.param,
        truth,
        results,
        failure_messages,
    ))
}

fn summarize(
    pipeline: Pipeline,
    param: f64,
    truth: TrueEffect,
    results: Vec<RepResult>,
    failure_messages: Vec<String>,
) -> ReplicationSummary {
    let m = truth.value;
    let ls = sorted(results.iter().map(|r| r.lower));
    let us = sorted(results.iter().map(|r| r.upper));
    let (mean_l, sd_l) = mean_sd(results.iter().map(|r| r.lower));
    let (mean_u, sd_u) = mean_sd(results.iter().map(|r| r.upper));
    let covered = results
        .iter()
        .filter(|r| {
            let (lo, hi) = r.ci.unwrap_or((r.lower, r.upper));
            lo <= m && m <= hi
        })
        .count();
    let has_ci = !results.is_empty() && results.iter().all(|r| r.ci.is_some());
    let mean_ci = has_ci.then(|| {
        let (lo, _) = mean_sd(results.iter().map(|r| r.ci.unwrap().0));
        let (hi, _) = mean_sd(results.iter().map(|r| r.ci.unwrap().1));
        (lo, hi)
    });
    ReplicationSummary {
        pipeline,
        param,
        reps: results.len(),
        failures: failure_messages.len(),
        failure_messages,
        m_true: m,
        m_true_se: truth.se,
        mean_l,
        mean_u,
        sd_l,
        sd_u,
        q_low_l: quantile_type7(&ls, 0.025),
        q_high_l: quantile_type7(&ls, 0.975),
        q_low_u: quantile_type7(&us, 0.025),
        q_high_u: quantile_type7(&us, 0.975),
        coverage: if results.is_empty() {
            f64::NAN
        } else {
            covered as f64 / results.len() as f64
        },
        mean_ci,
        results,
    }
}

/// One summary per parameter value (replacing `param`), in input order.
pub fn sweep(
    base: &DgpSpec,
    values: &[f64],
    cfg: &PipelineConfig,
    reps: usize,
) -> Result<Vec<ReplicationSummary>> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one parameter value"));
    }
    values
        .iter()
        .map(|&v| run_replications(&base.with_param(v), cfg, reps))
        .collect()
}

pub const SWEEP_HEADER: [&str; 11] = [
    "param", "m_true", "mean_L", "mean_U", "q_low_L", "q_high_U", "ci_lower", "ci_upper",
    "coverage", "reps", "failures",
];

/// Writes figure-data rows; numbers use the shortest round-trip formatting,
/// so identical summaries give byte-identical files.
pub fn write_sweep_csv<W: Write>(rows: &[ReplicationSummary], mut w: W) -> io::Result<()> {
    writeln!(w, "{}", SWEEP_HEADER.join(","))?;
    for r in rows {
        let (cl, cu) = r.mean_ci.unwrap_or((f64::NAN, f64::NAN));
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.param,
            r.m_true,
            r.mean_l,
            r.mean_u,
            r.q_low_l,
            r.q_high_u,
            cl,
            cu,
            r.coverage,
            r.reps,
            r.failures
        )?;
    }
    Ok(())
}

/// Writes one row per replication: `rep,seed,lower,upper,ci_lower,ci_upper`.
pub fn write_replications_csv<W: Write>(summary: &ReplicationSummary, mut w: W) -> io::Result<()> {
    writeln!(w, "rep,seed,lower,upper,ci_lower,ci_upper")?;
    for r in &summary.results {
        let (cl, cu) = r.ci.unwrap_or((f64::NAN, f64::NAN));
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.rep, r.seed, r.lower, r.upper, cl, cu
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn same_seed_same_panel() {
        for kind in [
            DgpKind::StaticDiscrete,
            DgpKind::StaticContinuous,
            DgpKind::Figure1Discrete { support: 6 },
            DgpKind::RcStatic,
            DgpKind::DynamicContinuous,
            DgpKind::RcDynamic,
        ] {
            let dgp = DgpSpec::new(kind, 0.7, 50, 3, 11).unwrap();
            let a = generate(&dgp).unwrap();
            let b = generate(&dgp).unwrap();
            assert_eq!(a, b);
            let c = generate(&dgp.with_seed(12)).unwrap();
            assert_ne!(a.y, c.y);
            a.check_model(&dgp.model()).unwrap();
        }
    }

    #[test]
    fn figure1_support_values() {
        let dgp = DgpSpec::new(DgpKind::Figure1Discrete { support: 6 }, 1.0, 500, 2, 3).unwrap();
        let panel = generate(&dgp).unwrap();
        let allowed = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        assert!(panel
            .x
            .iter()
            .all(|v| allowed.iter().any(|a| (a - v).abs() < 1e-15)));
        for a in allowed {
            assert!(panel.x.iter().any(|v| (a - v).abs() < 1e-15));
        }
    }

    #[test]
    fn static_discrete_marginal_matches_quadrature() {
        // β0 = 0 makes P(Y_t = 1) = E Λ(A) with A ~ N(0, 1), i.e. one half.
        let dgp = DgpSpec::new(DgpKind::StaticDiscrete, 0.0, 100_000, 2, 5).unwrap();
        let panel = generate(&dgp).unwrap();
        let freq = panel.y.iter().map(|v| f64::from(*v)).sum::<f64>() / panel.y.len() as f64;
        let se = (0.25 / panel.y.len() as f64).sqrt() * 2.0;
        assert!((freq - 0.5).abs() <= 3.0 * se, "freq {freq}");
    }

    #[test]
    fn mixture_weights_sum_to_one() {
        for kind in [
            DgpKind::StaticDiscrete,
            DgpKind::Figure1Discrete { support: 3 },
            DgpKind::RcStatic,
            DgpKind::RcDynamic,
        ] {
            let dgp = DgpSpec::new(kind, 0.5, 10, 2, 0).unwrap();
            let cells = population_mixture(&dgp, 30).unwrap();
            let total: f64 = cells.iter().map(|c| c.weight).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
        let cont = DgpSpec::new(DgpKind::StaticContinuous, 0.5, 10, 2, 0).unwrap();
        assert!(population_mixture(&cont, 30).is_err());
    }

    #[test]
    fn true_effect_zero_cases() {
        let q = TrueEffectMethod::Quadrature { nodes: 60 };
        for kind in [
            DgpKind::StaticDiscrete,
            DgpKind::StaticContinuous,
            DgpKind::Figure1Discrete { support: 4 },
        ] {
            let dgp = DgpSpec::new(kind, 0.0, 10, 3, 0).unwrap();
            assert_abs_diff_eq!(
                true_average_effect(&dgp, q).unwrap().value,
                0.0,
                epsilon = 1e-15
            );
        }
        let rc = DgpSpec::new(DgpKind::RcStatic, 0.0, 10, 3, 0).unwrap();
        assert_abs_diff_eq!(
            true_average_effect(&rc, q).unwrap().value,
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn quadrature_and_monte_carlo_agree() {
        let q = TrueEffectMethod::Quadrature { nodes: 80 };
        let mc = TrueEffectMethod::MonteCarlo {
            draws: 200_000,
            seed: 9,
        };
        for kind in [
            DgpKind::StaticDiscrete,
            DgpKind::StaticContinuous,
            DgpKind::Figure1Discrete { support: 6 },
            DgpKind::RcStatic,
            DgpKind::DynamicContinuous,
            DgpKind::RcDynamic,
        ] {
            let dgp = DgpSpec::new(kind, 1.0, 10, 3, 0).unwrap();
            let a = true_average_effect(&dgp, q).unwrap();
            let b = true_average_effect(&dgp, mc).unwrap();
            assert!(b.se > 0.0 && b.se < 2e-3);
            assert!(
                (a.value - b.value).abs() <= 4.0 * b.se,
                "{kind:?}: {} vs {} ± {}",
                a.value,
                b.value,
                b.se
            );
        }
    }

    #[test]
    fn static_discrete_truth_reference() {
        // E[Λ(1 + A) − Λ(A)] with A ~ N(0, 1).
        let dgp = DgpSpec::new(DgpKind::StaticDiscrete, 1.0, 10, 3, 0).unwrap();
        let v = true_average_effect(&dgp, TrueEffectMethod::Quadrature { nodes: 80 })
            .unwrap()
            .value;
        assert_abs_diff_eq!(v, 0.1967346701436834, epsilon = 1e-10);
        let dgp = dgp.with_param(-2.0);
        let v = true_average_effect(&dgp, TrueEffectMethod::Quadrature { nodes: 80 })
            .unwrap()
            .value;
        assert_abs_diff_eq!(v, -0.3445374814698768, epsilon = 1e-10);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_type7(&v, 0.0), 1.0);
        assert_eq!(quantile_type7(&v, 0.5), 3.0);
        assert_abs_diff_eq!(quantile_type7(&v, 0.975), 4.9, epsilon = 1e-12);
        assert_eq!(quantile_type7(&[7.0], 0.025), 7.0);
    }

    #[test]
    fn single_rep_summary_equals_rep() {
        let dgp = DgpSpec::new(DgpKind::StaticDiscrete, 1.0, 200, 3, 42).unwrap();
        let s = run_replications(&dgp, &PipelineConfig::new(Pipeline::KnownBetaBounds), 1).unwrap();
        assert_eq!(s.reps, 1);
        let r = &s.results[0];
        assert_eq!((s.mean_l, s.mean_u), (r.lower, r.upper));
        assert_eq!((s.q_low_l, s.q_high_u), (r.lower, r.upper));
        assert_eq!(s.mean_ci, r.ci);
    }

    #[test]
    fn sweep_csv_is_deterministic() {
        let dgp = DgpSpec::new(DgpKind::StaticDiscrete, 1.0, 100, 2, 7).unwrap();
        let cfg = PipelineConfig::new(Pipeline::KnownBetaBounds);
        let render = || {
            let rows = sweep(&dgp, &[-1.0, 0.0, 1.0], &cfg, 3).unwrap();
            let mut buf = Vec::new();
            write_sweep_csv(&rows, &mut buf).unwrap();
            buf
        };
        let a = render();
        assert_eq!(a, render());
        let text = String::from_utf8(a).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with(
            "param,m_true,mean_L,mean_U,q_low_L,q_high_U,ci_lower,ci_upper,coverage,reps,failures"
        ));
    }
}
