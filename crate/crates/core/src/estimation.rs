//! Panel data, conditional-logit estimation of the common parameter, and
//! sample bound estimates (known parameter, cross-fitted, cross-fitted with
//! parameter confidence sets).

use crate::bounds::{outcome_mask, solve_bound_functions, BoundFunction, BoundSettings};
use crate::error::{Error, Result};
use crate::models::{ConditioningValue, EffectSpec, Family, Link, ModelSpec};
use crate::special::normal_quantile;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Balanced binary-outcome panel. `y` is `n × T`, `x` is `n × T × K`
/// (unit-major, then period, then covariate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    pub n: usize,
    pub periods: usize,
    pub covariates: usize,
    pub y: Vec<u8>,
    pub x: Vec<f64>,
    pub y0: Option<Vec<u8>>,
}

impl PanelDataset {
    pub fn new(
        n: usize,
        periods: usize,
        covariates: usize,
        y: Vec<u8>,
        x: Vec<f64>,
        y0: Option<Vec<u8>>,
    ) -> Result<Self> {
        if periods == 0 {
            return Err(Error::invalid("panel needs at least one period"));
        }
        if y.len() != n * periods {
            return Err(Error::invalid(format!(
                "outcome array has {} cells, expected {n}x{periods}",
                y.len()
            )));
        }
        if x.len() != n * periods * covariates {
            return Err(Error::invalid(format!(
                "covariate array has {} cells, expected {n}x{periods}x{covariates}",
                x.len()
            )));
        }
        if y.iter().any(|v| *v > 1) {
            return Err(Error::invalid("outcomes must be 0 or 1"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariates must be finite"));
        }
        if let Some(y0) = &y0 {
            if y0.len() != n || y0.iter().any(|v| *v > 1) {
                return Err(Error::invalid("initial conditions must be n binary values"));
            }
        }
        Ok(PanelDataset {
            n,
            periods,
            covariates,
            y,
            x,
            y0,
        })
    }

    pub fn unit_y(&self, i: usize) -> &[u8] {
        &self.y[i * self.periods..(i + 1) * self.periods]
    }

    pub fn unit_x(&self, i: usize) -> &[f64] {
        let w = self.periods * self.covariates;
        &self.x[i * w..(i + 1) * w]
    }

    pub fn unit_z(&self, i: usize) -> ConditioningValue {
        ConditioningValue {
            periods: self.periods,
            covariates: self.covariates,
            x: self.unit_x(i).to_vec(),
            y0: self.y0.as_ref().map(|v| v[i]),
        }
    }

    /// Units in the given order, as a new panel.
    pub fn select(&self, idx: &[usize]) -> PanelDataset {
        let mut y = Vec::with_capacity(idx.len() * self.periods);
        let mut x = Vec::with_capacity(idx.len() * self.periods * self.covariates);
        for &i in idx {
            y.extend_from_slice(self.unit_y(i));
            x.extend_from_slice(self.unit_x(i));
        }
        PanelDataset {
            n: idx.len(),
            periods: self.periods,
            covariates: self.covariates,
            y,
            x,
            y0: self
                .y0
                .as_ref()
                .map(|v| idx.iter().map(|&i| v[i]).collect()),
        }
    }

    pub fn check_model(&self, model: &ModelSpec) -> Result<()> {
        if model.periods != self.periods || model.covariates != self.covariates {
            return Err(Error::invalid(format!(
                "panel is T={}, K={}; model expects T={}, K={}",
                self.periods, self.covariates, model.periods, model.covariates
            )));
        }
        if model.is_dynamic() != self.y0.is_some() {
            return Err(Error::invalid(if model.is_dynamic() {
                "dynamic model needs initial conditions y0"
            } else {
                "static model does not use initial conditions"
            }));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub beta: Vec<f64>,
    /// Row-major `d × d`.
    pub vcov: Vec<f64>,
    pub n_used: usize,
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
    pub log_likelihood: f64,
}

impl BetaEstimate {
    /// An estimate treated as exact (zero covariance).
    pub fn exact(beta: Vec<f64>) -> Self {
        let d = beta.len();
        BetaEstimate {
            beta,
            vcov: vec![0.0; d * d],
            n_used: 0,
            converged: true,
            iterations: 0,
            score_norm: 0.0,
            log_likelihood: f64::NAN,
        }
    }

    pub fn with_se(beta: Vec<f64>, se: &[f64]) -> Self {
        let d = beta.len();
        let mut est = Self::exact(beta);
        for k in 0..d.min(se.len()) {
            est.vcov[k * d + k] = se[k] * se[k];
        }
        est
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn se(&self, k: usize) -> f64 {
        self.vcov[k * self.dim() + k].max(0.0).sqrt()
    }
}

/// Produces `β̂` from a subset of units.
pub trait BetaEstimator: Sync {
    fn estimate(&self, panel: &PanelDataset, subset: &[usize]) -> Result<BetaEstimate>;
}

/// Conditional maximum likelihood for the static logit model.
#[derive(Debug, Clone, Copy)]
pub struct ConditionalLogit {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ConditionalLogit {
    fn default() -> Self {
        ConditionalLogit {
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

impl BetaEstimator for ConditionalLogit {
    fn estimate(&self, panel: &PanelDataset, subset: &[usize]) -> Result<BetaEstimate> {
        conditional_logit_mle(panel, subset, self)
    }
}

/// Returns the same estimate for every subset.
#[derive(Debug, Clone)]
pub struct FixedEstimate(pub BetaEstimate);

impl BetaEstimator for FixedEstimate {
    fn estimate(&self, _: &PanelDataset, _: &[usize]) -> Result<BetaEstimate> {
        Ok(self.0.clone())
    }
}

/// Log-likelihood, score and Hessian contributions of one unit.
struct UnitTerms {
    loglik: f64,
    score: DVector<f64>,
    hess: DMatrix<f64>,
}

/// Conditional logit contribution `log P(y | Σ_t y_t, x; β)`. The denominator
/// sums over outcome vectors with the same number of ones, accumulated by
/// dynamic programming over periods together with its first two moments in
/// `s = Σ_t d_t x_t`.
fn unit_terms(y: &[u8], x: &[f64], k_dim: usize, beta: &[f64]) -> UnitTerms {
    let t_len = y.len();
    let ones: usize = y.iter().map(|v| *v as usize).sum();
    let idx: Vec<f64> = (0..t_len)
        .map(|t| (0..k_dim).map(|k| x[t * k_dim + k] * beta[k]).sum())
        .collect();
    let shift = idx.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = idx.iter().map(|v| (v - shift).exp()).collect();

    let mut w = vec![0.0; ones + 1];
    let mut m1 = vec![DVector::<f64>::zeros(k_dim); ones + 1];
    let mut m2 = vec![DMatrix::<f64>::zeros(k_dim, k_dim); ones + 1];
    w[0] = 1.0;
    for t in 0..t_len {
        let xt = DVector::from_iterator(k_dim, (0..k_dim).map(|k| x[t * k_dim + k]));
        let xx = &xt * xt.transpose();
        for j in (1..=ones.min(t + 1)).rev() {
            let (w0, s1, s2) = (w[j - 1], m1[j - 1].clone(), m2[j - 1].clone());
            if w0 == 0.0 {
                continue;
            }
            let cross = &xt * s1.transpose();
            w[j] += e[t] * w0;
            m1[j] += e[t] * (&s1 + &xt * w0);
            m2[j] += e[t] * (&s2 + &cross + cross.transpose() + &xx * w0);
        }
    }
    let denom = w[ones];
    let mean = &m1[ones] / denom;
    let second = &m2[ones] / denom;
    let mut obs = DVector::<f64>::zeros(k_dim);
    let mut obs_idx = 0.0;
    for t in 0..t_len {
        if y[t] == 1 {
            obs_idx += idx[t];
            for k in 0..k_dim {
                obs[k] += x[t * k_dim + k];
            }
        }
    }
    UnitTerms {
        loglik: obs_idx - (denom.ln() + ones as f64 * shift),
        score: obs - &mean,
        hess: -(second - &mean * mean.transpose()),
    }
}

fn informative(y: &[u8], x: &[f64], k_dim: usize) -> bool {
    let t_len = y.len();
    let ones: usize = y.iter().map(|v| *v as usize).sum();
    if ones == 0 || ones == t_len {
        return false;
    }
    (1..t_len).any(|t| (0..k_dim).any(|k| x[t * k_dim + k] != x[k]))
}

struct Totals {
    loglik: f64,
    score: DVector<f64>,
    hess: DMatrix<f64>,
}

fn totals(panel: &PanelDataset, units: &[usize], beta: &[f64]) -> Totals {
    let k_dim = panel.covariates;
    let mut acc = Totals {
        loglik: 0.0,
        score: DVector::zeros(k_dim),
        hess: DMatrix::zeros(k_dim, k_dim),
    };
    for &i in units {
        let u = unit_terms(panel.unit_y(i), panel.unit_x(i), k_dim, beta);
        acc.loglik += u.loglik;
        acc.score += u.score;
        acc.hess += u.hess;
    }
    acc
}

/// Conditional MLE of `β` in the static logit model over `subset`, by damped
/// Newton iterations from zero.
pub fn conditional_logit_mle(
    panel: &PanelDataset,
    subset: &[usize],
    opts: &ConditionalLogit,
) -> Result<BetaEstimate> {
    if subset.is_empty() {
        return Err(Error::invalid("estimation subset is empty"));
    }
    if panel.y0.is_some() {
        return Err(Error::invalid(
            "conditional logit applies to static panels only",
        ));
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= panel.n) {
        return Err(Error::invalid(format!("unit index {bad} out of range")));
    }
    let k_dim = panel.covariates;
    if k_dim == 0 {
        return Err(Error::Identification("no covariates to estimate".into()));
    }
    let units: Vec<usize> = subset
        .iter()
        .copied()
        .filter(|&i| informative(panel.unit_y(i), panel.unit_x(i), k_dim))
        .collect();
    if units.is_empty() {
        return Err(Error::Identification(
            "no unit has both outcome switches and covariate variation".into(),
        ));
    }
    let mut beta = vec![0.0; k_dim];
    let mut cur = totals(panel, &units, &beta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it;
        if cur.score.norm() <= opts.tol {
            converged = true;
            break;
        }
        let neg_h = -&cur.hess;
        let Some(chol) = neg_h.clone().cholesky() else {
            return Err(Error::Identification(
                "conditional information matrix is singular".into(),
            ));
        };
        let step = chol.solve(&cur.score);
        let mut scale = 1.0;
        loop {
            let trial: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + scale * s)
                .collect();
            let next = totals(panel, &units, &trial);
            if next.loglik.is_finite() && next.loglik >= cur.loglik - 1e-12 * cur.loglik.abs() {
                beta = trial;
                cur = next;
                break;
            }
            scale *= 0.5;
            if scale < 1e-10 {
                return Err(Error::Numerical(
                    "line search failed in conditional logit".into(),
                ));
            }
        }
        iterations = it + 1;
    }
    if !converged && cur.score.norm() <= opts.tol {
        converged = true;
    }
    let info = -&cur.hess;
    let vcov = info
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| {
            Error::Identification("conditional information matrix is singular".into())
        })?;
    let mut flat = Vec::with_capacity(k_dim * k_dim);
    for r in 0..k_dim {
        for c in 0..k_dim {
            flat.push(0.5 * (vcov[(r, c)] + vcov[(c, r)]));
        }
    }
    Ok(BetaEstimate {
        beta,
        vcov: flat,
        n_used: units.len(),
        converged,
        iterations,
        score_norm: cur.score.norm(),
        log_likelihood: cur.loglik,
    })
}

/// `I1 = {0..⌊n/2⌋}`, `I2` the rest (zero-based).
pub fn split_half(n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::invalid("sample splitting needs at least two units"));
    }
    let h = n / 2;
    Ok(((0..h).collect(), (h..n).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsMethod {
    KnownBeta,
    CrossFit,
    CrossFitSet,
}

/// Mean and standard deviation of per-unit bounds over one half-sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfStats {
    pub n: usize,
    pub l_hat: f64,
    pub u_hat: f64,
    pub sigma_l: f64,
    pub sigma_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsEstimate {
    pub l_hat: f64,
    pub u_hat: f64,
    /// Standard deviations with divisor `n`.
    pub sigma_l: f64,
    pub sigma_u: f64,
    pub n: usize,
    pub per_unit: Vec<(f64, f64)>,
    pub method: BoundsMethod,
    /// Half-sample statistics (cross-fitted methods only), divisor `|I_s|`.
    pub halves: Option<[HalfStats; 2]>,
    /// Parameter values each half was evaluated at (`[I1, I2]`), or the single
    /// anchor for known-parameter bounds.
    pub anchors: Vec<Vec<Vec<f64>>>,
    pub beta_estimates: Option<[BetaEstimate; 2]>,
    /// Largest bound-condition violation over all solved programs.
    pub max_violation: f64,
    /// Number of distinct bound programs whose refinement was capped.
    pub capped: usize,
}

/// Population mean and standard deviation (divisor = count).
pub fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let mut it = values.clone();
    let first = it.next().unwrap_or(f64::NAN);
    if it.all(|v| v == first) {
        // Exact for constant inputs, where rounding would leave a spurious spread.
        return (first, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn evaluate_units(
    panel: &PanelDataset,
    units: &[usize],
    bfs: &[Arc<BoundFunction>],
    out: &mut [(f64, f64)],
) {
    for (&i, bf) in units.iter().zip(bfs) {
        let mask = outcome_mask(panel.unit_y(i));
        out[i] = (bf.lower(mask), bf.upper(mask));
    }
}

fn diagnostics(bfs: &[Arc<BoundFunction>]) -> (f64, usize) {
    let worst = bfs
        .iter()
        .map(|b| b.max_violation)
        .fold(f64::NEG_INFINITY, f64::max);
    let capped = bfs
        .iter()
        .filter(|b| b.capped)
        .map(Arc::as_ptr)
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    (worst, capped)
}

fn solve_for_units(
    panel: &PanelDataset,
    units: &[usize],
    model: &ModelSpec,
    effect: &EffectSpec,
    anchors: &[Vec<f64>],
    settings: &BoundSettings,
) -> Result<Vec<Arc<BoundFunction>>> {
    let zs: Vec<ConditioningValue> = units.iter().map(|&i| panel.unit_z(i)).collect();
    solve_bound_functions(model, effect, &zs, anchors, settings).map_err(|e| match e {
        Error::IterationLimit { unit } => Error::IterationLimit { unit: units[unit] },
        other => other,
    })
}

/// `L̂ = n⁻¹ Σ_i L(Z_i, Y_i, β0)` and `Û` likewise, with divisor-`n` standard deviations.
pub fn estimate_bounds_known_beta(
    panel: &PanelDataset,
    model: &ModelSpec,
    effect: &EffectSpec,
    beta0: &[f64],
    settings: &BoundSettings,
) -> Result<BoundsEstimate> {
    panel.check_model(model)?;
    if panel.n == 0 {
        return Err(Error::invalid("panel has no units"));
    }
    let units: Vec<usize> = (0..panel.n).collect();
    let anchors = vec![beta0.to_vec()];
    let bfs = solve_for_units(panel, &units, model, effect, &anchors, settings)?;
    let mut per_unit = vec![(0.0, 0.0); panel.n];
    evaluate_units(panel, &units, &bfs, &mut per_unit);
    let (l_hat, sigma_l) = mean_sd(per_unit.iter().map(|p| p.0));
    let (u_hat, sigma_u) = mean_sd(per_unit.iter().map(|p| p.1));
    let (max_violation, capped) = diagnostics(&bfs);
    Ok(BoundsEstimate {
        l_hat,
        u_hat,
        sigma_l,
        sigma_u,
        n: panel.n,
        per_unit,
        method: BoundsMethod::KnownBeta,
        halves: None,
        anchors: vec![anchors],
        beta_estimates: None,
        max_violation,
        capped,
    })
}

fn half_estimates(
    panel: &PanelDataset,
    model: &ModelSpec,
    estimator: &dyn BetaEstimator,
    halves: &(Vec<usize>, Vec<usize>),
) -> Result<[BetaEstimate; 2]> {
    if model.beta_dim() == 0 {
        return Ok([BetaEstimate::exact(vec![]), BetaEstimate::exact(vec![])]);
    }
    let (a, b) = rayon::join(
        || estimator.estimate(panel, &halves.0),
        || estimator.estimate(panel, &halves.1),
    );
    let wrap = |half: usize, r: Result<BetaEstimate>| -> Result<BetaEstimate> {
        let est = r.map_err(|e| Error::HalfSample {
            half,
            source: Box::new(e),
        })?;
        if est.beta.len() != model.beta_dim() {
            return Err(Error::HalfSample {
                half,
                source: Box::new(Error::invalid(format!(
                    "estimator returned dimension {}, model needs {}",
                    est.beta.len(),
                    model.beta_dim()
                ))),
            });
        }
        Ok(est)
    };
    Ok([wrap(1, a)?, wrap(2, b)?])
}

/// Cross-fitted bounds from explicit anchor sets: units of `I1` use
/// `sets[0]` (built from `I2`), units of `I2` use `sets[1]`.
pub fn crossfit_with_sets(
    panel: &PanelDataset,
    model: &ModelSpec,
    effect: &EffectSpec,
    settings: &BoundSettings,
    sets: [Vec<Vec<f64>>; 2],
    method: BoundsMethod,
) -> Result<BoundsEstimate> {
    panel.check_model(model)?;
    let halves = split_half(panel.n)?;
    let mut per_unit = vec![(0.0, 0.0); panel.n];
    let bfs1 = solve_for_units(panel, &halves.0, model, effect, &sets[0], settings)?;
    let bfs2 = solve_for_units(panel, &halves.1, model, effect, &sets[1], settings)?;
    evaluate_units(panel, &halves.0, &bfs1, &mut per_unit);
    evaluate_units(panel, &halves.1, &bfs2, &mut per_unit);
    let (l_hat, sigma_l) = mean_sd(per_unit.iter().map(|p| p.0));
    let (u_hat, sigma_u) = mean_sd(per_unit.iter().map(|p| p.1));
    let stats = |units: &[usize]| {
        let (l, sl) = mean_sd(units.iter().map(|&i| per_unit[i].0));
        let (u, su) = mean_sd(units.iter().map(|&i| per_unit[i].1));
        HalfStats {
            n: units.len(),
            l_hat: l,
            u_hat: u,
            sigma_l: sl,
            sigma_u: su,
        }
    };
    let half_stats = [stats(&halves.0), stats(&halves.1)];
    let (v1, c1) = diagnostics(&bfs1);
    let (v2, c2) = diagnostics(&bfs2);
    Ok(BoundsEstimate {
        l_hat,
        u_hat,
        sigma_l,
        sigma_u,
        n: panel.n,
        per_unit,
        method,
        halves: Some(half_stats),
        anchors: sets.to_vec(),
        beta_estimates: None,
        max_violation: v1.max(v2),
        capped: c1 + c2,
    })
}

/// Cross-fitted bounds: units in `I1` are evaluated at `β̂` fitted on `I2` and vice versa.
pub fn estimate_bounds_crossfit(
    panel: &PanelDataset,
    model: &ModelSpec,
    effect: &EffectSpec,
    settings: &BoundSettings,
    estimator: &dyn BetaEstimator,
) -> Result<BoundsEstimate> {
    panel.check_model(model)?;
    let halves = split_half(panel.n)?;
    let [b1, b2] = half_estimates(panel, model, estimator, &halves)?;
    let sets = [vec![b2.beta.clone()], vec![b1.beta.clone()]];
    let mut est = crossfit_with_sets(panel, model, effect, settings, sets, BoundsMethod::CrossFit)?;
    est.beta_estimates = Some([b1, b2]);
    Ok(est)
}

/// Box of `β̂_k ± z_{1−γ/(4·d)}·se_k` corners for each component (Bonferroni
/// over `d` components, two-sided, joint level `1 − γ/2`).
pub fn confidence_box_corners(est: &BetaEstimate, gamma: f64) -> Result<Vec<Vec<f64>>> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    let d = est.dim();
    if d == 0 {
        return Ok(vec![vec![]]);
    }
    if d > 16 {
        return Err(Error::invalid(
            "confidence box with more than 16 components",
        ));
    }
    let z = normal_quantile(1.0 - gamma / (4.0 * d as f64))?;
    let mut ses = Vec::with_capacity(d);
    for k in 0..d {
        let v = est.vcov[k * d + k];
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Numerical(format!(
                "degenerate variance {v} for parameter component {k}"
            )));
        }
        ses.push(v.sqrt());
    }
    Ok((0..1usize << d)
        .map(|corner| {
            (0..d)
                .map(|k| {
                    let sign = if corner >> k & 1 == 1 { 1.0 } else { -1.0 };
                    est.beta[k] + sign * z * ses[k]
                })
                .collect()
        })
        .collect())
}

/// Cross-fitted bounds whose bound functions satisfy the bound condition at
/// every corner of the other half's parameter confidence box.
pub fn estimate_bounds_crossfit_set(
    panel: &PanelDataset,
    model: &ModelSpec,
    effect: &EffectSpec,
    settings: &BoundSettings,
    gamma: f64,
    estimator: &dyn BetaEstimator,
) -> Result<BoundsEstimate> {
    panel.check_model(model)?;
    let halves = split_half(panel.n)?;
    let [b1, b2] = half_estimates(panel, model, estimator, &halves)?;
    let sets = [
        confidence_box_corners(&b2, gamma)?,
        confidence_box_corners(&b1, gamma)?,
    ];
    let mut est = crossfit_with_sets(
        panel,
        model,
        effect,
        settings,
        sets,
        BoundsMethod::CrossFitSet,
    )?;
    est.beta_estimates = Some([b1, b2]);
    Ok(est)
}

/// Whether a conditional-logit fit is available for this model.
pub fn supports_conditional_logit(model: &ModelSpec) -> bool {
    model.family == Family::StaticBinary && model.link == Link::Logit
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t2_panel(n01: usize, n10: usize, rest: usize) -> PanelDataset {
        let n = n01 + n10 + rest;
        let mut y = Vec::new();
        for i in 0..n {
            y.extend_from_slice(if i < n01 {
                &[0, 1]
            } else if i < n01 + n10 {
                &[1, 0]
            } else if i % 2 == 0 {
                &[0, 0]
            } else {
                &[1, 1]
            });
        }
        let x = (0..n).flat_map(|_| [0.0, 1.0]).collect();
        PanelDataset::new(n, 2, 1, y, x, None).unwrap()
    }

    #[test]
    fn two_period_closed_form() {
        let p = t2_panel(300, 100, 57);
        let all: Vec<usize> = (0..p.n).collect();
        let est = conditional_logit_mle(&p, &all, &ConditionalLogit::default()).unwrap();
        assert_abs_diff_eq!(est.beta[0], 3f64.ln(), epsilon = 1e-10);
        assert!(est.converged);
        assert!(est.score_norm <= 1e-8);
        assert_eq!(est.n_used, 400);
        // Information for T=2: Σ Λ(1−Λ) over informative units.
        assert_abs_diff_eq!(est.vcov[0], 1.0 / (400.0 * 0.75 * 0.25), epsilon = 1e-10);
    }

    #[test]
    fn uninformative_panels_are_not_identified() {
        let p = t2_panel(0, 0, 20);
        let all: Vec<usize> = (0..p.n).collect();
        assert!(matches!(
            conditional_logit_mle(&p, &all, &ConditionalLogit::default()),
            Err(Error::Identification(_))
        ));
    }

    #[test]
    fn two_covariates_with_scaling_stability() {
        // Large covariates exercise the exp shift inside the recursion.
        let mut y = Vec::new();
        let mut x = Vec::new();
        let n = 60;
        for i in 0..n {
            for t in 0..4 {
                let a = ((i * 7 + t * 3) % 5) as f64 - 2.0;
                let b = ((i * 3 + t * 5) % 7) as f64 * 40.0;
                x.extend_from_slice(&[a, b]);
                y.push(((i + t * (i % 3 + 1)) % 3 == 0) as u8);
            }
        }
        let p = PanelDataset::new(n, 4, 2, y, x, None).unwrap();
        let all: Vec<usize> = (0..n).collect();
        if let Ok(est) = conditional_logit_mle(&p, &all, &ConditionalLogit::default()) {
            assert!(est.log_likelihood.is_finite());
            if est.converged {
                assert!(est.score_norm <= 1e-8);
            }
        }
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_half(5).unwrap(), (vec![0, 1], vec![2, 3, 4]));
        assert_eq!(split_half(4).unwrap(), (vec![0, 1], vec![2, 3]));
        assert_eq!(split_half(2).unwrap(), (vec![0], vec![1]));
        assert!(split_half(1).is_err());
    }

    #[test]
    fn mean_sd_identity() {
        let (m, s) = mean_sd([0.0, 0.0, 1.0, 1.0].into_iter());
        assert_eq!(m, 0.5);
        assert_eq!(s * s, 0.25);
    }

    #[test]
    fn confidence_box_endpoints() {
        let est = BetaEstimate::with_se(vec![1.0], &[0.1]);
        let corners = confidence_box_corners(&est, 0.05).unwrap();
        assert_eq!(corners.len(), 2);
        assert_abs_diff_eq!(corners[0][0], 0.7758597272395054, epsilon = 1e-10);
        assert_abs_diff_eq!(corners[1][0], 1.2241402727604946, epsilon = 1e-10);
        assert!(confidence_box_corners(&BetaEstimate::exact(vec![1.0]), 0.05).is_err());
        let two = BetaEstimate::with_se(vec![1.0, -1.0], &[0.1, 0.2]);
        assert_eq!(confidence_box_corners(&two, 0.05).unwrap().len(), 4);
    }

    #[test]
    fn panel_validation() {
        assert!(PanelDataset::new(2, 2, 1, vec![0, 1, 1], vec![0.0; 4], None).is_err());
        assert!(PanelDataset::new(1, 2, 1, vec![0, 2], vec![0.0; 2], None).is_err());
        assert!(PanelDataset::new(1, 2, 1, vec![0, 1], vec![0.0, f64::NAN], None).is_err());
        let p = PanelDataset::new(
            2,
            2,
            1,
            vec![0, 1, 1, 0],
            vec![0.0, 1.0, 2.0, 3.0],
            Some(vec![1, 0]),
        )
        .unwrap();
        assert_eq!(p.unit_z(1).y0, Some(0));
        assert_eq!(p.select(&[1]).unit_x(0), &[2.0, 3.0]);
    }
}
