//! Bound functions `ℓ(z, ·)`, `u(z, ·)` satisfying the bound condition
//!
//! ```text
//! Σ_y ℓ(y) f(y | z, a; β)  ≤  m(z, a, β)  ≤  Σ_y u(y) f(y | z, a; β)
//! ```
//!
//! on a grid of heterogeneity values, for one parameter value or for every
//! member of a finite parameter set. `ℓ` and `u` are found jointly by a linear
//! program that minimises their (prior-weighted or worst-case) expected width,
//! and can then be shifted so the condition also holds on a finer grid.

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpOptions, LpStatus};
use crate::models::{effect_value, ConditioningValue, EffectSpec, Family, Link, ModelSpec, ZKey};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;

/// Equidistant axis: `n` points from `lo` to `hi` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl GridAxis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        GridAxis { lo, hi, n }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![0.5 * (self.lo + self.hi)];
        }
        let step = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n).map(|i| self.lo + step * i as f64).collect()
    }
}

/// A finite set of heterogeneity vectors, stored flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub dim: usize,
    pub values: Vec<f64>,
    /// Product-grid axes the points were built from, if any.
    pub axes: Option<Vec<GridAxis>>,
}

impl PointSet {
    pub fn from_points(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.is_empty() || values.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "grid needs a non-empty list of {dim}-dimensional points"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid points must be finite"));
        }
        Ok(PointSet {
            dim,
            values,
            axes: None,
        })
    }

    pub fn product(axes: &[GridAxis]) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::invalid("product grid needs at least one axis"));
        }
        for ax in axes {
            if ax.n == 0 || !(ax.lo.is_finite() && ax.hi.is_finite()) || ax.lo > ax.hi {
                return Err(Error::invalid(format!("invalid grid axis {ax:?}")));
            }
        }
        let dim = axes.len();
        let vals: Vec<Vec<f64>> = axes.iter().map(GridAxis::values).collect();
        let total: usize = axes.iter().map(|a| a.n).product();
        let mut values = Vec::with_capacity(total * dim);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            for (d, &i) in idx.iter().enumerate() {
                values.push(vals[d][i]);
            }
            for d in (0..dim).rev() {
                idx[d] += 1;
                if idx[d] < axes[d].n {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(PointSet {
            dim,
            values,
            axes: Some(axes.to_vec()),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }
}

/// Construction grid `𝒜_g` and optional verification grid `𝒜_G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityGrid {
    pub points: PointSet,
    pub fine_points: Option<PointSet>,
}

impl HeterogeneityGrid {
    pub fn new(points: PointSet) -> Self {
        HeterogeneityGrid {
            points,
            fine_points: None,
        }
    }

    pub fn with_fine(mut self, fine: PointSet) -> Result<Self> {
        if fine.dim != self.points.dim {
            return Err(Error::invalid(
                "fine grid dimension differs from the coarse grid",
            ));
        }
        self.fine_points = Some(fine);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.points.dim
    }

    /// Equidistant scalar grid plus a fine grid with `fine_factor` times as many points.
    pub fn scalar(lo: f64, hi: f64, n: usize, fine_factor: Option<usize>) -> Result<Self> {
        let grid = Self::new(PointSet::product(&[GridAxis::new(lo, hi, n)])?);
        match fine_factor {
            Some(f) => grid.with_fine(PointSet::product(&[GridAxis::new(lo, hi, n * f)])?),
            None => Ok(grid),
        }
    }

    /// 100 points on `[-5, 5]` for scalar heterogeneity; for vector
    /// heterogeneity an intercept axis on `[-5, 5]` and slope axes on
    /// `[-7, 7]` (50 points each in two dimensions, coarser beyond). The fine
    /// grid has ten times as many points.
    pub fn default_for(model: &ModelSpec) -> Self {
        let dim = model.heterogeneity_dim();
        let per_axis = match dim {
            1 => 100,
            2 => 50,
            3 => 20,
            _ => 8,
        };
        let axes: Vec<GridAxis> = (0..dim)
            .map(|d| {
                let half = if d == 0 { 5.0 } else { 7.0 };
                GridAxis::new(-half, half, per_axis)
            })
            .collect();
        let fine_axes: Vec<GridAxis> = axes
            .iter()
            .enumerate()
            .map(|(d, ax)| {
                let factor = match (dim, d) {
                    (1, _) => 10,
                    (_, 0) => 5,
                    (_, 1) => 2,
                    _ => 1,
                };
                GridAxis::new(ax.lo, ax.hi, ax.n * factor)
            })
            .collect();
        let coarse = PointSet::product(&axes).expect("default axes are valid");
        let fine = PointSet::product(&fine_axes).expect("default axes are valid");
        HeterogeneityGrid {
            points: coarse,
            fine_points: Some(fine),
        }
    }
}

/// Partition of the outcome space; outcomes are bit masks (bit `t` = `y_t`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeClasses {
    pub periods: usize,
    pub class_of: Vec<usize>,
    pub members: Vec<Vec<usize>>,
    pub reduced: bool,
}

impl OutcomeClasses {
    pub fn identity(periods: usize) -> Self {
        let count = 1usize << periods;
        OutcomeClasses {
            periods,
            class_of: (0..count).collect(),
            members: (0..count).map(|m| vec![m]).collect(),
            reduced: false,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Class sizes in class order.
    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    fn from_keys<K: Eq + std::hash::Hash>(periods: usize, keys: impl Iterator<Item = K>) -> Self {
        let mut index: HashMap<K, usize> = HashMap::new();
        let mut class_of = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (mask, key) in keys.enumerate() {
            let next = members.len();
            let c = *index.entry(key).or_insert(next);
            if c == next {
                members.push(Vec::new());
            }
            members[c].push(mask);
            class_of.push(c);
        }
        let reduced = members.len() < class_of.len();
        OutcomeClasses {
            periods,
            class_of,
            members,
            reduced,
        }
    }
}

/// Renders an outcome mask as a `0/1` string in period order.
pub fn outcome_label(mask: usize, periods: usize) -> String {
    (0..periods)
        .map(|t| if mask >> t & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Parses a binary outcome vector into a mask.
pub fn outcome_mask(y: &[u8]) -> usize {
    y.iter()
        .enumerate()
        .fold(0, |m, (t, &v)| m | ((v as usize & 1) << t))
}

/// Groups outcomes on which the logit kernel depends only through the
/// sufficient statistic `(Σ_t y_t, Σ_t y_t x_t)`.
///
/// Supported for static logit models (any covariates) and random-coefficient
/// static logit with binary covariates. Dynamic and probit kernels return
/// [`Error::UnsupportedReduction`]; callers then use the identity partition.
pub fn reduce_by_sufficient_statistic(
    model: &ModelSpec,
    z: &ConditioningValue,
) -> Result<OutcomeClasses> {
    model.check_z(z)?;
    if model.link != Link::Logit {
        return Err(Error::UnsupportedReduction(
            "only logit kernels admit a sufficient statistic".into(),
        ));
    }
    match model.family {
        Family::StaticBinary => {}
        Family::RandomCoefStatic => {
            if z.x.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::UnsupportedReduction(
                    "random-coefficient reduction needs binary covariates".into(),
                ));
            }
        }
        Family::DynamicBinary | Family::RandomCoefDynamic => {
            return Err(Error::UnsupportedReduction(
                "dynamic kernels are handled on the full outcome space".into(),
            ));
        }
    }
    let count = model.outcome_count()?;
    let t_len = model.periods;
    let k_len = model.covariates;
    let keys = (0..count).map(|mask| {
        let mut key = Vec::with_capacity(1 + k_len);
        key.push((mask.count_ones() as i128) << 64);
        for k in 0..k_len {
            let s: f64 = (0..t_len)
                .filter(|t| mask >> t & 1 == 1)
                .map(|t| z.at(t, k))
                .sum();
            key.push(crate::models::quantize(s));
        }
        key
    });
    Ok(OutcomeClasses::from_keys(t_len, keys))
}

/// The partition used for bound programs: the sufficient-statistic classes
/// when available and requested, otherwise the identity partition.
pub fn outcome_classes(
    model: &ModelSpec,
    z: &ConditioningValue,
    reduce: bool,
) -> Result<OutcomeClasses> {
    if reduce {
        match reduce_by_sufficient_statistic(model, z) {
            Ok(c) => return Ok(c),
            Err(Error::UnsupportedReduction(_)) => {}
            Err(e) => return Err(e),
        }
    } else {
        model.check_z(z)?;
    }
    Ok(OutcomeClasses::identity(model.periods))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Minimise `Σ_a p(a) Σ_y [u(y) − ℓ(y)] f(y|z,a;β̄)`; `prior = None` means `p ≡ 1`.
    Baseline { prior: Option<Vec<f64>> },
    /// Minimise `max_a Σ_y [u(y) − ℓ(y)] f(y|z,a;β̄)`.
    Uniform,
}

impl ObjectiveKind {
    pub fn default_for(model: &ModelSpec) -> Self {
        if model.family == Family::RandomCoefDynamic {
            ObjectiveKind::Baseline { prior: None }
        } else {
            ObjectiveKind::Uniform
        }
    }
}

/// Options shared by every bound program of an analysis.
#[derive(Debug, Clone)]
pub struct BoundSettings {
    pub grid: HeterogeneityGrid,
    pub objective: ObjectiveKind,
    /// Use sufficient-statistic classes where the kernel allows it.
    pub reduce: bool,
    /// Shift the solution so the bound condition holds on the fine grid.
    pub refine: bool,
    /// Admissible parameter box; anchors outside it are rejected.
    pub param_box: Option<Vec<(f64, f64)>>,
    pub lp: LpOptions,
}

impl BoundSettings {
    pub fn default_for(model: &ModelSpec) -> Self {
        BoundSettings {
            grid: HeterogeneityGrid::default_for(model),
            objective: ObjectiveKind::default_for(model),
            reduce: true,
            refine: true,
            param_box: None,
            lp: LpOptions::default(),
        }
    }
}

/// Variable layout of a bound program: `ℓ` per class, then `u` per class,
/// then the auxiliary `s` for the uniform objective.
#[derive(Debug, Clone)]
pub struct BoundProgram {
    pub lp: LinearProgram,
    pub classes: OutcomeClasses,
    pub has_s: bool,
}

impl BoundProgram {
    pub fn ell_var(&self, class: usize) -> usize {
        class
    }

    pub fn u_var(&self, class: usize) -> usize {
        self.classes.len() + class
    }

    pub fn s_var(&self) -> Option<usize> {
        self.has_s.then(|| 2 * self.classes.len())
    }
}

/// A solved pair of bound functions for one conditioning value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundFunction {
    pub model: ModelSpec,
    pub effect: EffectSpec,
    pub z: ConditioningValue,
    pub classes: OutcomeClasses,
    pub ell: Vec<f64>,
    pub u: Vec<f64>,
    pub betas: Vec<Vec<f64>>,
    pub objective: ObjectiveKind,
    /// Optimal value of the width objective.
    pub objective_value: f64,
    pub grid_points: usize,
    pub fine_points: Option<usize>,
    pub refined: bool,
    /// Refinement had to contract towards the worst-case constants to stay in the box.
    pub capped: bool,
    /// Largest violation of the bound condition on the grid used last.
    pub max_violation: f64,
}

impl BoundFunction {
    #[inline]
    pub fn lower(&self, mask: usize) -> f64 {
        self.ell[self.classes.class_of[mask]]
    }

    #[inline]
    pub fn upper(&self, mask: usize) -> f64 {
        self.u[self.classes.class_of[mask]]
    }

    pub fn lower_for(&self, y: &[u8]) -> f64 {
        self.lower(outcome_mask(y))
    }

    pub fn upper_for(&self, y: &[u8]) -> f64 {
        self.upper(outcome_mask(y))
    }

    /// Key-sorted JSON record.
    pub fn to_json(&self) -> serde_json::Value {
        let labels: Vec<Vec<String>> = self
            .classes
            .members
            .iter()
            .map(|m| {
                m.iter()
                    .map(|&y| outcome_label(y, self.classes.periods))
                    .collect()
            })
            .collect();
        serde_json::json!({
            "model": self.model,
            "effect": self.effect,
            "z": self.z,
            "classes": labels,
            "ell": self.ell,
            "u": self.u,
            "betas": self.betas,
            "objective": self.objective,
            "objective_value": self.objective_value,
            "grid_points": self.grid_points,
            "fine_points": self.fine_points,
            "refined": self.refined,
            "capped": self.capped,
            "max_violation": self.max_violation,
        })
    }
}

/// Evaluates class probabilities `F_c(a, β) = Σ_{y∈c} f(y|z,a;β)` and `m(z,a,β)`.
struct KernelEval<'a> {
    model: &'a ModelSpec,
    effect: &'a EffectSpec,
    z: &'a ConditioningValue,
    classes: &'a OutcomeClasses,
    scratch: Vec<[f64; 2]>,
    probs: Vec<f64>,
}

impl<'a> KernelEval<'a> {
    fn new(
        model: &'a ModelSpec,
        effect: &'a EffectSpec,
        z: &'a ConditioningValue,
        classes: &'a OutcomeClasses,
    ) -> Self {
        KernelEval {
            model,
            effect,
            z,
            classes,
            scratch: Vec::with_capacity(model.periods),
            probs: vec![0.0; classes.class_of.len()],
        }
    }

    fn eval(&mut self, a: &[f64], beta: &[f64], class_probs: &mut [f64]) -> f64 {
        self.model
            .outcome_probs(self.z, a, beta, &mut self.scratch, &mut self.probs);
        class_probs.iter_mut().for_each(|v| *v = 0.0);
        for (mask, p) in self.probs.iter().enumerate() {
            class_probs[self.classes.class_of[mask]] += p;
        }
        effect_value(&self.effect.kind, self.model, self.z, a, beta)
    }
}

fn check_inputs(
    model: &ModelSpec,
    effect: &EffectSpec,
    z: &ConditioningValue,
    betas: &[Vec<f64>],
    settings: &BoundSettings,
) -> Result<()> {
    model.check_z(z)?;
    effect.check_compatible(model)?;
    model.outcome_count()?;
    if betas.is_empty() {
        return Err(Error::invalid(
            "bound program needs at least one parameter value",
        ));
    }
    let grid = &settings.grid;
    if grid.points.is_empty() {
        return Err(Error::invalid("heterogeneity grid is empty"));
    }
    if grid.dim() != model.heterogeneity_dim() {
        return Err(Error::invalid(format!(
            "grid has dimension {}, model heterogeneity has dimension {}",
            grid.dim(),
            model.heterogeneity_dim()
        )));
    }
    for beta in betas {
        if beta.len() != model.beta_dim() || beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "parameter {beta:?} does not match model dimension {}",
                model.beta_dim()
            )));
        }
        if let Some(bx) = &settings.param_box {
            let inside = bx.len() == beta.len()
                && beta
                    .iter()
                    .zip(bx)
                    .all(|(b, (lo, hi))| *lo <= *b && *b <= *hi);
            if !inside {
                return Err(Error::invalid(format!(
                    "parameter {beta:?} lies outside the admissible box"
                )));
            }
        }
    }
    if let ObjectiveKind::Baseline { prior: Some(p) } = &settings.objective {
        if p.len() != grid.points.len() || p.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(
                "prior must give a finite non-negative weight to every grid point",
            ));
        }
    }
    Ok(())
}

fn mean_beta(betas: &[Vec<f64>]) -> Vec<f64> {
    let dim = betas[0].len();
    let mut out = vec![0.0; dim];
    for b in betas {
        for (o, v) in out.iter_mut().zip(b) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|v| *v /= betas.len() as f64);
    out
}

/// Assembles the bound program for one conditioning value.
pub fn build_bound_program(
    model: &ModelSpec,
    effect: &EffectSpec,
    z: &ConditioningValue,
    betas: &[Vec<f64>],
    settings: &BoundSettings,
) -> Result<BoundProgram> {
    check_inputs(model, effect, z, betas, settings)?;
    let classes = outcome_classes(model, z, settings.reduce)?;
    Ok(assemble(model, effect, z, betas, settings, classes))
}

fn assemble(
    model: &ModelSpec,
    effect: &EffectSpec,
    z: &ConditioningValue,
    betas: &[Vec<f64>],
    settings: &BoundSettings,
    classes: OutcomeClasses,
) -> BoundProgram {
    let nc = classes.len();
    let uniform = matches!(settings.objective, ObjectiveKind::Uniform);
    let nv = 2 * nc + usize::from(uniform);
    let points = &settings.grid.points;
    let bbar = mean_beta(betas);

    let mut kernel = KernelEval::new(model, effect, z, &classes);
    let mut fc = vec![0.0; nc];
    let mut c = vec![0.0; nv];
    if uniform {
        c[2 * nc] = 1.0;
    }
    let mut lp = LinearProgram::new(c);
    let rows = nc + 2 * points.len() * betas.len() + if uniform { points.len() } else { 0 };
    lp.a_ub.reserve(rows * nv);
    lp.b_ub.reserve(rows);
    for j in 0..2 * nc {
        lp.set_bounds(j, effect.b_min, effect.b_max);
    }
    let mut row = vec![0.0; nv];
    for k in 0..nc {
        row.iter_mut().for_each(|v| *v = 0.0);
        row[k] = 1.0;
        row[nc + k] = -1.0;
        lp.add_ub(&row, 0.0);
    }
    for beta in betas {
        for a in points.iter() {
            let m = kernel.eval(a, beta, &mut fc);
            row.iter_mut().for_each(|v| *v = 0.0);
            row[..nc].copy_from_slice(&fc);
            lp.add_ub(&row, m);
            row[..nc].iter_mut().for_each(|v| *v = 0.0);
            for k in 0..nc {
                row[nc + k] = -fc[k];
            }
            lp.add_ub(&row, -m);
        }
    }
    match &settings.objective {
        ObjectiveKind::Uniform => {
            for a in points.iter() {
                kernel.eval(a, &bbar, &mut fc);
                for k in 0..nc {
                    row[k] = -fc[k];
                    row[nc + k] = fc[k];
                }
                row[2 * nc] = -1.0;
                lp.add_ub(&row, 0.0);
            }
        }
        ObjectiveKind::Baseline { prior } => {
            for (i, a) in points.iter().enumerate() {
                let w = prior.as_ref().map_or(1.0, |p| p[i]);
                if w == 0.0 {
                    continue;
                }
                kernel.eval(a, &bbar, &mut fc);
                for k in 0..nc {
                    lp.c[k] -= w * fc[k];
                    lp.c[nc + k] += w * fc[k];
                }
            }
        }
    }
    BoundProgram {
        lp,
        classes,
        has_s: uniform,
    }
}

/// Largest violation of the bound condition over `points × betas`
/// (non-positive when the condition holds everywhere).
pub fn verify_bound_condition(bf: &BoundFunction, betas: &[Vec<f64>], points: &PointSet) -> f64 {
    let mut kernel = KernelEval::new(&bf.model, &bf.effect, &bf.z, &bf.classes);
    let mut fc = vec![0.0; bf.classes.len()];
    let mut worst = f64::NEG_INFINITY;
    for beta in betas {
        for a in points.iter() {
            let m = kernel.eval(a, beta, &mut fc);
            let lo: f64 = fc.iter().zip(&bf.ell).map(|(f, l)| f * l).sum();
            let hi: f64 = fc.iter().zip(&bf.u).map(|(f, u)| f * u).sum();
            worst = worst.max(lo - m).max(m - hi);
        }
    }
    worst
}

/// Solves the bound program for one conditioning value and, if enabled and
/// a fine grid is available, refines the result on it.
pub fn solve_bound_function(
    model: &ModelSpec,
    effect: &EffectSpec,
    z: &ConditioningValue,
    betas: &[Vec<f64>],
    settings: &BoundSettings,
) -> Result<BoundFunction> {
    let program = build_bound_program(model, effect, z, betas, settings)?;
    let nc = program.classes.len();
    // An effect that vanishes on every grid point is bounded exactly by ℓ = u = 0;
    // the simplex would only add round-off to that optimum.
    let (ell, u, objective_value) =
        if effect_vanishes(model, effect, z, &program.classes, betas, &settings.grid) {
            (vec![0.0; nc], vec![0.0; nc], 0.0)
        } else {
            let sol = solve_lp(&program.lp, &settings.lp)?;
            match sol.status {
                LpStatus::Optimal => {}
                LpStatus::IterLimit => return Err(Error::IterationLimit { unit: 0 }),
                other => {
                    return Err(Error::Numerical(format!(
                    "bound program returned {other:?} although the worst-case bounds are feasible"
                )))
                }
            }
            let clamp = |v: f64| v.clamp(effect.b_min, effect.b_max);
            let ell: Vec<f64> = (0..nc).map(|k| clamp(sol.v[program.ell_var(k)])).collect();
            let u: Vec<f64> = (0..nc)
                .map(|k| clamp(sol.v[program.u_var(k)]).max(ell[k]))
                .collect();
            (ell, u, sol.objective)
        };
    let mut bf = BoundFunction {
        model: *model,
        effect: *effect,
        z: z.clone(),
        classes: program.classes,
        ell,
        u,
        betas: betas.to_vec(),
        objective: settings.objective.clone(),
        objective_value,
        grid_points: settings.grid.points.len(),
        fine_points: settings.grid.fine_points.as_ref().map(PointSet::len),
        refined: false,
        capped: false,
        max_violation: 0.0,
    };
    bf.max_violation = verify_bound_condition(&bf, betas, &settings.grid.points);
    if settings.refine {
        if let Some(fine) = &settings.grid.fine_points {
            bf = refine_to_fine_grid(bf, betas, fine);
        }
    }
    Ok(bf)
}

fn effect_vanishes(
    model: &ModelSpec,
    effect: &EffectSpec,
    z: &ConditioningValue,
    classes: &OutcomeClasses,
    betas: &[Vec<f64>],
    grid: &HeterogeneityGrid,
) -> bool {
    if effect.b_min > 0.0 || effect.b_max < 0.0 {
        return false;
    }
    let mut kernel = KernelEval::new(model, effect, z, classes);
    let mut fc = vec![0.0; classes.len()];
    let sets = std::iter::once(&grid.points).chain(grid.fine_points.as_ref());
    sets.flat_map(|p| p.iter()).all(|a| {
        betas
            .iter()
            .all(|beta| kernel.eval(a, beta, &mut fc) == 0.0)
    })
}

/// Shifts `ℓ` down and `u` up by the largest violation found on `fine`, so the
/// bound condition holds on every fine-grid point. When a shift would leave
/// `[b_min, b_max]`, the function is instead contracted towards the constant
/// `b_min` (resp. `b_max`) by the smallest factor that restores validity, and
/// `capped` is set.
pub fn refine_to_fine_grid(
    mut bf: BoundFunction,
    betas: &[Vec<f64>],
    fine: &PointSet,
) -> BoundFunction {
    let (b_min, b_max) = (bf.effect.b_min, bf.effect.b_max);
    let mut kernel = KernelEval::new(&bf.model, &bf.effect, &bf.z, &bf.classes);
    let nc = bf.classes.len();
    let mut fc = vec![0.0; nc];
    // Per (β, a): m, Σf, Σℓf, Σuf.
    let mut evals = Vec::with_capacity(betas.len() * fine.len());
    let mut low_gap = 0.0f64;
    let mut high_gap = 0.0f64;
    for beta in betas {
        for a in fine.iter() {
            let m = kernel.eval(a, beta, &mut fc);
            let s: f64 = fc.iter().sum();
            let lo: f64 = fc.iter().zip(&bf.ell).map(|(f, l)| f * l).sum();
            let hi: f64 = fc.iter().zip(&bf.u).map(|(f, u)| f * u).sum();
            low_gap = low_gap.min(m - lo);
            high_gap = high_gap.max(m - hi);
            evals.push((m, s, lo, hi));
        }
    }
    drop(kernel);
    if low_gap < 0.0 {
        let lowest = bf.ell.iter().cloned().fold(f64::INFINITY, f64::min);
        if lowest + low_gap >= b_min {
            bf.ell.iter_mut().for_each(|v| *v += low_gap);
        } else {
            let lambda = contraction(&evals, b_min, |e| e.2, |e| e.0, 1.0);
            bf.ell
                .iter_mut()
                .for_each(|v| *v = b_min + (1.0 - lambda) * (*v - b_min));
            bf.capped = true;
        }
    }
    if high_gap > 0.0 {
        let highest = bf.u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if highest + high_gap <= b_max {
            bf.u.iter_mut().for_each(|v| *v += high_gap);
        } else {
            let lambda = contraction(&evals, b_max, |e| e.3, |e| e.0, -1.0);
            bf.u.iter_mut()
                .for_each(|v| *v = b_max + (1.0 - lambda) * (*v - b_max));
            bf.capped = true;
        }
    }
    bf.refined = true;
    bf.max_violation = verify_bound_condition(&bf, betas, fine);
    bf
}

/// Smallest `λ ∈ [0, 1]` with `sign·(b S + (1−λ)(B − b S)) ≤ sign·m` at every
/// evaluation, where `B` is the current bound expectation and `S = Σ_y f`.
fn contraction(
    evals: &[(f64, f64, f64, f64)],
    anchor: f64,
    bound: impl Fn(&(f64, f64, f64, f64)) -> f64,
    target: impl Fn(&(f64, f64, f64, f64)) -> f64,
    sign: f64,
) -> f64 {
    let mut lambda = 0.0f64;
    for e in evals {
        let s = e.1;
        let d = sign * (bound(e) - anchor * s);
        let r = sign * (target(e) - anchor * s);
        if d > r && d > 0.0 {
            lambda = lambda.max(1.0 - r.max(0.0) / d);
        }
    }
    (lambda * (1.0 + 1e-12) + 1e-15).min(1.0)
}

/// Solves the bound programs for many conditioning values at one anchor set.
/// Numerically identical `z` share a single solve; results are returned in
/// input order. Iteration-limit errors carry the index of the offending unit.
pub fn solve_bound_functions(
    model: &ModelSpec,
    effect: &EffectSpec,
    zs: &[ConditioningValue],
    betas: &[Vec<f64>],
    settings: &BoundSettings,
) -> Result<Vec<Arc<BoundFunction>>> {
    let mut unique: Vec<usize> = Vec::new();
    let mut index: HashMap<ZKey, usize> = HashMap::new();
    let slot: Vec<usize> = zs
        .iter()
        .enumerate()
        .map(|(i, z)| {
            *index.entry(z.key()).or_insert_with(|| {
                unique.push(i);
                unique.len() - 1
            })
        })
        .collect();
    let solved: Vec<Result<Arc<BoundFunction>>> = unique
        .par_iter()
        .map(|&i| {
            solve_bound_function(model, effect, &zs[i], betas, settings)
                .map(Arc::new)
                .map_err(|e| match e {
                    Error::IterationLimit { .. } => Error::IterationLimit { unit: i },
                    other => other,
                })
        })
        .collect();
    let solved: Vec<Arc<BoundFunction>> = solved.into_iter().collect::<Result<_>>()?;
    Ok(slot.into_iter().map(|s| Arc::clone(&solved[s])).collect())
}

/// Closed-form outer bounds for the average treatment effect of a binary
/// regressor in a static model with strictly exogenous, stationary errors.
pub fn analytic_cfhn_bounds(x: &[u8], y: &[u8]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::invalid(
            "x and y must be non-empty and of equal length",
        ));
    }
    if x.iter().chain(y).any(|v| *v > 1) {
        return Err(Error::invalid("analytic bounds need binary x and y"));
    }
    let part = |d: u8| -> (f64, f64) {
        let (n, s) = x
            .iter()
            .zip(y)
            .filter(|(xt, _)| **xt == d)
            .fold((0usize, 0usize), |(n, s), (_, yt)| {
                (n + 1, s + *yt as usize)
            });
        if n == 0 {
            (0.0, 0.0)
        } else {
            (1.0, s as f64 / n as f64)
        }
    };
    let (v1, y1) = part(1);
    let (v0, y0) = part(0);
    let core = v1 * y1 - v0 * y0;
    Ok((core - (1.0 - v0), core + (1.0 - v1)))
}
