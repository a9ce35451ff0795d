//! Binary-choice panel kernels `f(y | z, a; β)` and the effect functions
//! `m(z, a, β)` whose average is bounded.
//!
//! Outcomes are vectors `y ∈ {0,1}^T`. Internally an outcome is a bit mask
//! with bit `t` holding `y_t` (period `t` counted from zero).
//!
//! Index functions by family, for period `t` with lagged outcome `y_{t-1}`:
//!
//! | family              | heterogeneity `a`        | parameter `β`   | index                                   |
//! |---------------------|--------------------------|-----------------|-----------------------------------------|
//! | `StaticBinary`      | `(a)`                    | `(β_1..β_K)`    | `x_t·β + a`                             |
//! | `DynamicBinary`     | `(a)`                    | `(γ, β_1..β_K)` | `γ y_{t-1} + x_t·β + a`                 |
//! | `RandomCoefStatic`  | `(a_0, a_1..a_K)`        | none            | `a_0 + x_t·a_{1..K}`                    |
//! | `RandomCoefDynamic` | `(a_0, a_lag, a_x..)`    | none            | `a_0 + a_lag y_{t-1} + x_t·a_x`         |

use crate::error::{Error, Result};
use crate::special::{
    log_logistic_cdf, log_normal_cdf, logistic_cdf, logistic_pdf, normal_cdf, normal_pdf,
};
use serde::{Deserialize, Serialize};

/// Largest `T` for which the outcome space is enumerated.
pub const MAX_ENUMERATED_PERIODS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    StaticBinary,
    DynamicBinary,
    RandomCoefStatic,
    RandomCoefDynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Logit,
    Probit,
}

impl Link {
    #[inline]
    pub fn cdf(self, v: f64) -> f64 {
        match self {
            Link::Logit => logistic_cdf(v),
            Link::Probit => normal_cdf(v),
        }
    }

    #[inline]
    pub fn pdf(self, v: f64) -> f64 {
        match self {
            Link::Logit => logistic_pdf(v),
            Link::Probit => normal_pdf(v),
        }
    }

    #[inline]
    fn log_cdf(self, v: f64) -> f64 {
        match self {
            Link::Logit => log_logistic_cdf(v),
            Link::Probit => log_normal_cdf(v),
        }
    }

    /// Peak of the density, attained at zero for both links.
    pub fn density_peak(self) -> f64 {
        self.pdf(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub link: Link,
    pub periods: usize,
    pub covariates: usize,
}

impl ModelSpec {
    pub fn new(family: Family, link: Link, periods: usize, covariates: usize) -> Result<Self> {
        if periods == 0 {
            return Err(Error::invalid("model needs at least one period"));
        }
        if family == Family::RandomCoefStatic && covariates == 0 {
            return Err(Error::invalid(
                "random-coefficient static model needs at least one covariate",
            ));
        }
        Ok(ModelSpec {
            family,
            link,
            periods,
            covariates,
        })
    }

    pub fn static_logit(periods: usize, covariates: usize) -> Result<Self> {
        Self::new(Family::StaticBinary, Link::Logit, periods, covariates)
    }

    pub fn is_dynamic(&self) -> bool {
        matches!(
            self.family,
            Family::DynamicBinary | Family::RandomCoefDynamic
        )
    }

    pub fn heterogeneity_dim(&self) -> usize {
        match self.family {
            Family::StaticBinary | Family::DynamicBinary => 1,
            Family::RandomCoefStatic => 1 + self.covariates,
            Family::RandomCoefDynamic => 2 + self.covariates,
        }
    }

    pub fn beta_dim(&self) -> usize {
        match self.family {
            Family::StaticBinary => self.covariates,
            Family::DynamicBinary => 1 + self.covariates,
            Family::RandomCoefStatic | Family::RandomCoefDynamic => 0,
        }
    }

    /// `|𝒴| = 2^T`, provided the space is small enough to enumerate.
    pub fn outcome_count(&self) -> Result<usize> {
        if self.periods > MAX_ENUMERATED_PERIODS {
            return Err(Error::invalid(format!(
                "outcome space 2^{} too large to enumerate",
                self.periods
            )));
        }
        Ok(1usize << self.periods)
    }

    pub(crate) fn check_z(&self, z: &ConditioningValue) -> Result<()> {
        if z.periods != self.periods || z.covariates != self.covariates {
            return Err(Error::invalid(format!(
                "conditioning value is {}x{}, model expects {}x{}",
                z.periods, z.covariates, self.periods, self.covariates
            )));
        }
        if z.y0.is_some() != self.is_dynamic() {
            return Err(Error::invalid(if self.is_dynamic() {
                "dynamic model needs an initial condition y0"
            } else {
                "static model takes no initial condition"
            }));
        }
        if z.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite covariate value"));
        }
        Ok(())
    }

    pub(crate) fn check_point(&self, a: &[f64], beta: &[f64]) -> Result<()> {
        if a.len() != self.heterogeneity_dim() {
            return Err(Error::invalid(format!(
                "heterogeneity has dimension {}, model expects {}",
                a.len(),
                self.heterogeneity_dim()
            )));
        }
        if beta.len() != self.beta_dim() {
            return Err(Error::invalid(format!(
                "parameter has dimension {}, model expects {}",
                beta.len(),
                self.beta_dim()
            )));
        }
        if a.iter().chain(beta).any(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "non-finite heterogeneity or parameter value",
            ));
        }
        Ok(())
    }

    /// Latent index in period `t` given the lagged outcome.
    #[inline]
    pub(crate) fn index(
        &self,
        z: &ConditioningValue,
        a: &[f64],
        beta: &[f64],
        t: usize,
        prev: u8,
    ) -> f64 {
        let x = z.row(t);
        let lag = f64::from(prev);
        match self.family {
            Family::StaticBinary => dot(x, beta) + a[0],
            Family::DynamicBinary => beta[0] * lag + dot(x, &beta[1..]) + a[0],
            Family::RandomCoefStatic => a[0] + dot(x, &a[1..]),
            Family::RandomCoefDynamic => a[0] + a[1] * lag + dot(x, &a[2..]),
        }
    }

    /// `P(Y_t = 1 | y_{t-1}, z, a; β)` for each period and each lag value.
    pub(crate) fn period_probs(
        &self,
        z: &ConditioningValue,
        a: &[f64],
        beta: &[f64],
        out: &mut [[f64; 2]],
    ) {
        let dynamic = self.is_dynamic();
        for (t, slot) in out.iter_mut().enumerate().take(self.periods) {
            let p0 = self.link.cdf(self.index(z, a, beta, t, 0));
            let p1 = if dynamic {
                self.link.cdf(self.index(z, a, beta, t, 1))
            } else {
                p0
            };
            *slot = [p0, p1];
        }
    }

    /// Fills `out[mask] = f(y | z, a; β)` for every outcome mask.
    pub(crate) fn outcome_probs(
        &self,
        z: &ConditioningValue,
        a: &[f64],
        beta: &[f64],
        scratch: &mut Vec<[f64; 2]>,
        out: &mut [f64],
    ) {
        scratch.resize(self.periods, [0.0; 2]);
        self.period_probs(z, a, beta, scratch);
        let y0 = z.y0.unwrap_or(0);
        for (mask, slot) in out.iter_mut().enumerate() {
            let mut prob = 1.0;
            let mut prev = y0;
            for (t, p) in scratch.iter().enumerate() {
                let yt = ((mask >> t) & 1) as u8;
                let q = p[prev as usize];
                prob *= if yt == 1 { q } else { 1.0 - q };
                prev = yt;
            }
            *slot = prob;
        }
    }
}

#[inline]
fn dot(x: &[f64], b: &[f64]) -> f64 {
    x.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Observed conditioning variables of one unit: covariates `x` (`T × K`,
/// row-major by period) and, for dynamic models, the initial outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningValue {
    pub periods: usize,
    pub covariates: usize,
    pub x: Vec<f64>,
    pub y0: Option<u8>,
}

impl ConditioningValue {
    pub fn new(periods: usize, covariates: usize, x: Vec<f64>, y0: Option<u8>) -> Result<Self> {
        if x.len() != periods * covariates {
            return Err(Error::invalid(format!(
                "covariate array has {} entries, expected {}x{}",
                x.len(),
                periods,
                covariates
            )));
        }
        if matches!(y0, Some(v) if v > 1) {
            return Err(Error::invalid("initial condition must be 0 or 1"));
        }
        Ok(ConditioningValue {
            periods,
            covariates,
            x,
            y0,
        })
    }

    /// Single-covariate convenience constructor.
    pub fn scalar(x: &[f64]) -> Self {
        ConditioningValue {
            periods: x.len(),
            covariates: 1,
            x: x.to_vec(),
            y0: None,
        }
    }

    pub fn with_y0(mut self, y0: u8) -> Self {
        self.y0 = Some(y0);
        self
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.x[t * self.covariates..(t + 1) * self.covariates]
    }

    pub fn at(&self, t: usize, k: usize) -> f64 {
        self.x[t * self.covariates + k]
    }

    /// Key under which numerically identical conditioning values coincide
    /// (covariates quantised to 12 decimal digits).
    pub fn key(&self) -> ZKey {
        ZKey {
            x: self.x.iter().map(|v| quantize(*v)).collect(),
            y0: self.y0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ZKey {
    x: Vec<i128>,
    y0: Option<u8>,
}

#[inline]
pub(crate) fn quantize(v: f64) -> i128 {
    (v * 1e12).round() as i128
}

/// Evaluation point for the derivative effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPoint {
    Observed,
    TimeAverage,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    /// `T⁻¹ Σ_t [F(x_t|x_k=x1 · β + a) − F(x_t|x_k=x2 · β + a)]`, static models.
    DiscreteShift { k: usize, x1: f64, x2: f64 },
    /// `T⁻¹ Σ_t β_k F'(x̃_t β + a)` with `x̃_t` chosen by `at`, static models.
    Derivative { k: usize, at: EvalPoint },
    /// Random-coefficient analogue of `DiscreteShift` with `x_k` moved from 0 to 1.
    RandomCoefShift { k: usize },
    /// Effect of the lagged outcome: `T⁻¹ Σ_t [P(Y_t=1|y_{t-1}=1) − P(Y_t=1|y_{t-1}=0)]`.
    TransitionEffect,
}

/// An effect function together with its known range `[b_min, b_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSpec {
    pub kind: EffectKind,
    pub b_min: f64,
    pub b_max: f64,
}

impl EffectSpec {
    pub fn new(kind: EffectKind, b_min: f64, b_max: f64) -> Result<Self> {
        if !(b_min.is_finite() && b_max.is_finite()) || b_min > b_max {
            return Err(Error::invalid(format!(
                "effect range [{b_min}, {b_max}] is not a finite interval"
            )));
        }
        Ok(EffectSpec { kind, b_min, b_max })
    }

    /// Uses [`default_effect_range`] for the bounds.
    pub fn with_default_range(
        kind: EffectKind,
        model: &ModelSpec,
        beta_box: &[(f64, f64)],
    ) -> Result<Self> {
        let (lo, hi) = default_effect_range(&kind, model, beta_box)?;
        Self::new(kind, lo, hi)
    }

    pub fn check_compatible(&self, model: &ModelSpec) -> Result<()> {
        let ok = match self.kind {
            EffectKind::DiscreteShift { k, .. } | EffectKind::Derivative { k, .. } => {
                model.family == Family::StaticBinary && k < model.covariates
            }
            EffectKind::RandomCoefShift { k } => {
                model.family == Family::RandomCoefStatic && k < model.covariates
            }
            EffectKind::TransitionEffect => model.is_dynamic(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "effect {:?} does not apply to {:?} with {} covariate(s)",
                self.kind, model.family, model.covariates
            )))
        }
    }
}

/// Probability of outcome vector `y` (entries 0/1) under the model kernel.
pub fn choice_prob(
    model: &ModelSpec,
    y: &[u8],
    z: &ConditioningValue,
    a: &[f64],
    beta: &[f64],
) -> Result<f64> {
    model.check_z(z)?;
    model.check_point(a, beta)?;
    if y.len() != model.periods || y.iter().any(|v| *v > 1) {
        return Err(Error::invalid(format!(
            "outcome must be a binary vector of length {}",
            model.periods
        )));
    }
    let mut prev = z.y0.unwrap_or(0);
    if model.periods <= 30 {
        let mut prob = 1.0;
        for (t, &yt) in y.iter().enumerate() {
            let q = model.link.cdf(model.index(z, a, beta, t, prev));
            prob *= if yt == 1 { q } else { 1.0 - q };
            prev = yt;
        }
        Ok(prob)
    } else {
        let mut log_prob = 0.0;
        for (t, &yt) in y.iter().enumerate() {
            let v = model.index(z, a, beta, t, prev);
            log_prob += model.link.log_cdf(if yt == 1 { v } else { -v });
            prev = yt;
        }
        Ok(log_prob.exp())
    }
}

/// Value of the effect function `m(z, a, β)`.
pub fn effect_m(
    effect: &EffectSpec,
    model: &ModelSpec,
    z: &ConditioningValue,
    a: &[f64],
    beta: &[f64],
) -> Result<f64> {
    effect.check_compatible(model)?;
    model.check_z(z)?;
    model.check_point(a, beta)?;
    Ok(effect_value(&effect.kind, model, z, a, beta))
}

/// Unchecked evaluation; callers validate dimensions once up front.
pub(crate) fn effect_value(
    kind: &EffectKind,
    model: &ModelSpec,
    z: &ConditioningValue,
    a: &[f64],
    beta: &[f64],
) -> f64 {
    let link = model.link;
    let periods = model.periods;
    let tf = periods as f64;
    match *kind {
        EffectKind::DiscreteShift { k, x1, x2 } => {
            let mut acc = 0.0;
            for t in 0..periods {
                let base = dot(z.row(t), beta) - z.at(t, k) * beta[k] + a[0];
                acc += link.cdf(base + x1 * beta[k]) - link.cdf(base + x2 * beta[k]);
            }
            acc / tf
        }
        EffectKind::Derivative { k, at } => {
            let mut acc = 0.0;
            match at {
                EvalPoint::Observed => {
                    for t in 0..periods {
                        acc += link.pdf(dot(z.row(t), beta) + a[0]);
                    }
                    beta[k] * acc / tf
                }
                EvalPoint::TimeAverage => {
                    let mut idx = a[0];
                    for (j, b) in beta.iter().enumerate() {
                        let mean = (0..periods).map(|t| z.at(t, j)).sum::<f64>() / tf;
                        idx += mean * b;
                    }
                    beta[k] * link.pdf(idx)
                }
                EvalPoint::Fixed(xk) => {
                    for t in 0..periods {
                        let idx = dot(z.row(t), beta) - z.at(t, k) * beta[k] + xk * beta[k] + a[0];
                        acc += link.pdf(idx);
                    }
                    beta[k] * acc / tf
                }
            }
        }
        EffectKind::RandomCoefShift { k } => {
            let slopes = &a[1..];
            let mut acc = 0.0;
            for t in 0..periods {
                let base = a[0] + dot(z.row(t), slopes) - z.at(t, k) * slopes[k];
                acc += link.cdf(base + slopes[k]) - link.cdf(base);
            }
            acc / tf
        }
        EffectKind::TransitionEffect => {
            let mut acc = 0.0;
            for t in 0..periods {
                acc += link.cdf(model.index(z, a, beta, t, 1))
                    - link.cdf(model.index(z, a, beta, t, 0));
            }
            acc / tf
        }
    }
}

/// Default `[b_min, b_max]` when the user does not supply one.
///
/// Probability differences lie in `[-1, 1]`. For the derivative effect the
/// range is `±β̄·F'(0)` with `β̄` the largest `|β_k|` over the parameter box.
pub fn default_effect_range(
    kind: &EffectKind,
    model: &ModelSpec,
    beta_box: &[(f64, f64)],
) -> Result<(f64, f64)> {
    match *kind {
        EffectKind::DiscreteShift { .. }
        | EffectKind::RandomCoefShift { .. }
        | EffectKind::TransitionEffect => Ok((-1.0, 1.0)),
        EffectKind::Derivative { k, .. } => {
            let &(lo, hi) = beta_box.get(k).ok_or_else(|| {
                Error::invalid(format!("parameter box has no entry for coefficient {k}"))
            })?;
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::invalid(
                    "derivative effect needs a bounded parameter box; supply b_min/b_max explicitly",
                ));
            }
            let bound = lo.abs().max(hi.abs()) * model.link.density_peak();
            Ok((-bound, bound))
        }
    }
}
