//! Sharp identified set for the average effect given conditional choice
//! probabilities, computed by linear programming over heterogeneity-grid
//! weights, plus population and empirical choice-probability tables.

use crate::bounds::PointSet;
use crate::error::{Error, Result};
use crate::estimation::PanelDataset;
use crate::lp::{solve_lp, LinearProgram, LpOptions, LpStatus};
use crate::models::{effect_value, ConditioningValue, EffectSpec, ModelSpec, ZKey};
use crate::sims::{conditional_heterogeneity, population_mixture, DgpSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{self, Write};

/// Outcome-vector probabilities for each conditioning value, with the
/// conditioning values' weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceProbTable {
    pub periods: usize,
    pub support: Vec<ConditioningValue>,
    /// `w(z)`, summing to one.
    pub weights: Vec<f64>,
    /// `probs[j][mask] = P(Y = y | Z = z_j)`.
    pub probs: Vec<Vec<f64>>,
    /// Observation counts per cell for empirical tables.
    pub counts: Option<Vec<usize>>,
    /// Cells with fewer observations than the requested minimum.
    pub thin: Vec<bool>,
}

impl ChoiceProbTable {
    pub fn new(
        periods: usize,
        support: Vec<ConditioningValue>,
        weights: Vec<f64>,
        probs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let table = ChoiceProbTable {
            periods,
            thin: vec![false; support.len()],
            support,
            weights,
            probs,
            counts: None,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.support.len();
        if self.weights.len() != k || self.probs.len() != k || self.thin.len() != k {
            return Err(Error::invalid("table columns have different lengths"));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(
                "cell weights must be finite and non-negative",
            ));
        }
        if k > 0 && (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
            return Err(Error::invalid("cell weights must sum to one"));
        }
        let outcomes = 1usize << self.periods;
        for (j, p) in self.probs.iter().enumerate() {
            if p.len() != outcomes || p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid(format!(
                    "cell {j} needs {outcomes} non-negative probabilities"
                )));
            }
            if (p.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
                return Err(Error::invalid(format!(
                    "probabilities of cell {j} do not sum to one"
                )));
            }
            if self.support[j].periods != self.periods {
                return Err(Error::invalid(format!(
                    "cell {j} has the wrong number of periods"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Long-format CSV: covariate columns `x{t}_{k}`, `y0` when present,
    /// `weight`, outcome pattern `y` (period 1 first) and `prob`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let Some(first) = self.support.first() else {
            return writeln!(w, "weight,y,prob");
        };
        let mut header: Vec<String> = Vec::new();
        for t in 0..first.periods {
            for k in 0..first.covariates {
                header.push(format!("x{}_{}", t + 1, k + 1));
            }
        }
        let dynamic = first.y0.is_some();
        if dynamic {
            header.push("y0".into());
        }
        header.extend(["weight".into(), "y".into(), "prob".into()]);
        writeln!(w, "{}", header.join(","))?;
        for ((z, weight), probs) in self.support.iter().zip(&self.weights).zip(&self.probs) {
            let mut prefix: Vec<String> = z.x.iter().map(|v| v.to_string()).collect();
            if dynamic {
                prefix.push(z.y0.unwrap_or(0).to_string());
            }
            prefix.push(weight.to_string());
            let prefix = prefix.join(",");
            for (mask, p) in probs.iter().enumerate() {
                let label = crate::bounds::outcome_label(mask, self.periods);
                writeln!(w, "{prefix},{label},{p}")?;
            }
        }
        Ok(())
    }
}

/// Feasibility tolerance policy for the identified-set programs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdsetOptions {
    /// Initial slack on `|Σ_a f(y|z,a)π_a − p(y|z)|`.
    pub slack: f64,
    /// Escalate an infeasible slack (zero → 1e-9, then ×10) up to `max_slack`.
    pub escalate: bool,
    pub max_slack: f64,
    /// When still infeasible, re-solve just above the minimal feasible slack
    /// instead of failing (projection of empirical cells onto the model).
    pub project: bool,
    #[serde(skip)]
    pub lp: LpOptions,
}

impl Default for IdsetOptions {
    fn default() -> Self {
        IdsetOptions {
            slack: 0.0,
            escalate: true,
            max_slack: 1e-3,
            project: false,
            lp: LpOptions::default(),
        }
    }
}

impl IdsetOptions {
    /// Settings for frequency-estimated tables: cells outside the model are
    /// projected directly, without escalation.
    pub fn estimated() -> Self {
        IdsetOptions {
            escalate: false,
            project: true,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedSet {
    pub lower: f64,
    pub upper: f64,
    pub per_z: Vec<(f64, f64)>,
    /// Largest slack used over the cells.
    pub feasibility_slack: f64,
    pub slack_per_z: Vec<f64>,
    /// Number of cells solved at their projected (minimal feasible) slack.
    pub projected: usize,
}

/// Kernel matrix `F[y][a] = f(y|z,a;β)` and effect values `m(z,a,β)` on the grid.
struct CellKernel {
    f: Vec<Vec<f64>>,
    m: Vec<f64>,
}

fn cell_kernel(
    model: &ModelSpec,
    effect: &EffectSpec,
    z: &ConditioningValue,
    beta0: &[f64],
    grid: &PointSet,
) -> CellKernel {
    let outcomes = 1usize << model.periods;
    let g = grid.len();
    let mut f = vec![vec![0.0; g]; outcomes];
    let mut m = Vec::with_capacity(g);
    let mut scratch = Vec::new();
    let mut probs = vec![0.0; outcomes];
    for (j, a) in grid.iter().enumerate() {
        model.outcome_probs(z, a, beta0, &mut scratch, &mut probs);
        for (row, p) in f.iter_mut().zip(&probs) {
            row[j] = *p;
        }
        m.push(effect_value(&effect.kind, model, z, a, beta0));
    }
    CellKernel { f, m }
}

fn feasibility_program(kernel: &CellKernel, p: &[f64], slack: f64, sign: f64) -> LinearProgram {
    let g = kernel.m.len();
    let mut lp = LinearProgram::new(kernel.m.iter().map(|v| sign * v).collect());
    lp.add_eq(&vec![1.0; g], 1.0);
    let mut neg = vec![0.0; g];
    for (row, py) in kernel.f.iter().zip(p) {
        lp.add_ub(row, py + slack);
        for (n, v) in neg.iter_mut().zip(row) {
            *n = -v;
        }
        lp.add_ub(&neg, -(py - slack));
    }
    lp
}

/// `min_{π ∈ Δ} max_y |Σ_a f(y|z,a)π_a − p(y)|`.
fn minimal_slack(kernel: &CellKernel, p: &[f64], opts: &LpOptions) -> Result<f64> {
    let g = kernel.m.len();
    let mut c = vec![0.0; g + 1];
    c[g] = 1.0;
    let mut lp = LinearProgram::new(c);
    let mut row = vec![1.0; g + 1];
    row[g] = 0.0;
    lp.add_eq(&row, 1.0);
    for (f, py) in kernel.f.iter().zip(p) {
        row[..g].copy_from_slice(f);
        row[g] = -1.0;
        lp.add_ub(&row, *py);
        for v in row[..g].iter_mut() {
            *v = -*v;
        }
        lp.add_ub(&row, -py);
    }
    let sol = solve_lp(&lp, opts)?;
    if !sol.is_optimal() {
        return Err(Error::Numerical(format!(
            "minimal-slack program ended with {:?}",
            sol.status
        )));
    }
    Ok(sol.objective.max(0.0))
}

/// Solves min and max of `Σ m_a π_a` at `slack`; `None` when infeasible.
fn solve_at(
    kernel: &CellKernel,
    p: &[f64],
    slack: f64,
    opts: &LpOptions,
) -> Result<Option<(f64, f64)>> {
    let lo = solve_lp(&feasibility_program(kernel, p, slack, 1.0), opts)?;
    match lo.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Ok(None),
        s => {
            return Err(Error::Numerical(format!(
                "identified-set program ended with {s:?}"
            )))
        }
    }
    let hi = solve_lp(&feasibility_program(kernel, p, slack, -1.0), opts)?;
    match hi.status {
        LpStatus::Optimal => Ok(Some((lo.objective, -hi.objective))),
        LpStatus::Infeasible => Ok(None),
        s => Err(Error::Numerical(format!(
            "identified-set program ended with {s:?}"
        ))),
    }
}

struct CellResult {
    bounds: (f64, f64),
    slack: f64,
    projected: bool,
}

fn solve_cell(kernel: &CellKernel, p: &[f64], opts: &IdsetOptions) -> Result<CellResult> {
    let mut slack = opts.slack;
    loop {
        if let Some(bounds) = solve_at(kernel, p, slack, &opts.lp)? {
            return Ok(CellResult {
                bounds,
                slack,
                projected: false,
            });
        }
        if !opts.escalate {
            break;
        }
        let next = if slack == 0.0 { 1e-9 } else { slack * 10.0 };
        if next > opts.max_slack * (1.0 + 1e-12) {
            break;
        }
        slack = next;
    }
    let min_slack = minimal_slack(kernel, p, &opts.lp)?;
    if opts.project {
        let s = min_slack * (1.0 + 1e-4) + 1e-7;
        if let Some(bounds) = solve_at(kernel, p, s, &opts.lp)? {
            return Ok(CellResult {
                bounds,
                slack: s,
                projected: true,
            });
        }
    }
    Err(Error::Infeasible { slack, min_slack })
}

/// Sharp identified set on a heterogeneity grid: per cell, the range of
/// `Σ_a m(z,a,β0)π_a` over grid weights `π ≥ 0`, `Σπ = 1`, whose implied
/// choice probabilities match the table within the slack; aggregated by `w(z)`.
pub fn sharp_idset(
    table: &ChoiceProbTable,
    model: &ModelSpec,
    effect: &EffectSpec,
    beta0: &[f64],
    grid: &PointSet,
    opts: &IdsetOptions,
) -> Result<IdentifiedSet> {
    table.validate()?;
    effect.check_compatible(model)?;
    if grid.is_empty() {
        return Err(Error::invalid("heterogeneity grid is empty"));
    }
    if grid.dim != model.heterogeneity_dim() {
        return Err(Error::invalid(format!(
            "grid has dimension {}, model heterogeneity has dimension {}",
            grid.dim,
            model.heterogeneity_dim()
        )));
    }
    if !(opts.slack.is_finite() && opts.slack >= 0.0) {
        return Err(Error::invalid("slack must be non-negative"));
    }
    if table.periods != model.periods {
        return Err(Error::invalid(
            "table and model have different numbers of periods",
        ));
    }
    if table.is_empty() {
        return Err(Error::invalid("choice-probability table is empty"));
    }
    for z in &table.support {
        model.check_z(z)?;
    }
    if beta0.len() != model.beta_dim() {
        return Err(Error::invalid(format!(
            "parameter has dimension {}, model needs {}",
            beta0.len(),
            model.beta_dim()
        )));
    }
    let cells: Vec<CellResult> = table
        .support
        .par_iter()
        .zip(&table.probs)
        .map(|(z, p)| {
            let kernel = cell_kernel(model, effect, z, beta0, grid);
            solve_cell(&kernel, p, opts)
        })
        .collect::<Result<_>>()?;
    let lower = cells
        .iter()
        .zip(&table.weights)
        .map(|(c, w)| w * c.bounds.0)
        .sum();
    let upper = cells
        .iter()
        .zip(&table.weights)
        .map(|(c, w)| w * c.bounds.1)
        .sum();
    Ok(IdentifiedSet {
        lower,
        upper,
        per_z: cells.iter().map(|c| c.bounds).collect(),
        feasibility_slack: cells.iter().map(|c| c.slack).fold(0.0, f64::max),
        slack_per_z: cells.iter().map(|c| c.slack).collect(),
        projected: cells.iter().filter(|c| c.projected).count(),
    })
}

fn probs_from_points(
    model: &ModelSpec,
    z: &ConditioningValue,
    beta0: &[f64],
    points: &[Vec<f64>],
    weights: &[f64],
) -> Vec<f64> {
    let outcomes = 1usize << model.periods;
    let mut acc = vec![0.0; outcomes];
    let mut probs = vec![0.0; outcomes];
    let mut scratch = Vec::new();
    for (a, w) in points.iter().zip(weights) {
        model.outcome_probs(z, a, beta0, &mut scratch, &mut probs);
        for (s, p) in acc.iter_mut().zip(&probs) {
            *s += w * p;
        }
    }
    let total: f64 = acc.iter().sum();
    acc.iter_mut().for_each(|v| *v /= total);
    acc
}

/// Population choice probabilities of a design by Gauss–Hermite quadrature
/// (`nodes` per normal component). Designs with continuous covariates need
/// `conditioning`, which then receive equal weights; for discrete designs a
/// supplied list selects and reweights support points.
pub fn population_choice_probs(
    dgp: &DgpSpec,
    nodes: usize,
    conditioning: Option<&[ConditioningValue]>,
) -> Result<ChoiceProbTable> {
    if nodes < 2 {
        return Err(Error::invalid("quadrature needs at least two nodes"));
    }
    let model = dgp.model();
    model.outcome_count()?;
    let beta0 = dgp.beta0();
    let (support, weights, probs) = match conditioning {
        None => {
            let cells = population_mixture(dgp, nodes)?;
            let mut support = Vec::new();
            let mut weights = Vec::new();
            let mut probs = Vec::new();
            for cell in cells.into_iter().filter(|c| c.weight > 0.0) {
                probs.push(probs_from_points(
                    &model,
                    &cell.z,
                    &beta0,
                    &cell.points,
                    &cell.point_weights,
                ));
                weights.push(cell.weight);
                support.push(cell.z);
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            (support, weights, probs)
        }
        Some(list) => {
            if list.is_empty() {
                return Err(Error::invalid("conditioning list is empty"));
            }
            let mut probs = Vec::with_capacity(list.len());
            for z in list {
                let (points, w) = conditional_heterogeneity(dgp, z, nodes)?;
                probs.push(probs_from_points(&model, z, &beta0, &points, &w));
            }
            let w = 1.0 / list.len() as f64;
            (list.to_vec(), vec![w; list.len()], probs)
        }
    };
    ChoiceProbTable::new(model.periods, support, weights, probs)
}

/// Empirical outcome frequencies within each observed conditioning value;
/// cells are ordered by first appearance and those with fewer than
/// `min_cell_count` units are flagged as thin.
pub fn estimated_choice_probs(panel: &PanelDataset, min_cell_count: usize) -> ChoiceProbTable {
    let outcomes = 1usize << panel.periods;
    let mut index: HashMap<ZKey, usize> = HashMap::new();
    let mut support = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut tallies: Vec<Vec<f64>> = Vec::new();
    for i in 0..panel.n {
        let z = panel.unit_z(i);
        let j = *index.entry(z.key()).or_insert_with(|| {
            support.push(z.clone());
            counts.push(0);
            tallies.push(vec![0.0; outcomes]);
            support.len() - 1
        });
        counts[j] += 1;
        tallies[j][crate::bounds::outcome_mask(panel.unit_y(i))] += 1.0;
    }
    let n = panel.n.max(1) as f64;
    let weights = counts.iter().map(|&c| c as f64 / n).collect();
    let probs = tallies
        .into_iter()
        .zip(&counts)
        .map(|(t, &c)| t.into_iter().map(|v| v / c as f64).collect())
        .collect();
    ChoiceProbTable {
        periods: panel.periods,
        thin: counts.iter().map(|&c| c < min_cell_count).collect(),
        support,
        weights,
        probs,
        counts: Some(counts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{GridAxis, HeterogeneityGrid};
    use crate::models::EffectKind;
    use crate::sims::DgpKind;
    use approx::assert_abs_diff_eq;

    fn shift() -> EffectSpec {
        EffectSpec::new(
            EffectKind::DiscreteShift {
                k: 0,
                x1: 1.0,
                x2: 0.0,
            },
            -1.0,
            1.0,
        )
        .unwrap()
    }

    fn grid(n: usize) -> PointSet {
        HeterogeneityGrid::scalar(-5.0, 5.0, n, None)
            .unwrap()
            .points
    }

    #[test]
    fn point_mass_gives_point_set() {
        let model = ModelSpec::static_logit(3, 1).unwrap();
        let g = grid(21);
        let z = ConditioningValue::scalar(&[0.0, 1.0, 1.0]);
        let a_star = g.point(13).to_vec();
        let mut probs = vec![0.0; 8];
        model.outcome_probs(&z, &a_star, &[0.8], &mut Vec::new(), &mut probs);
        let table = ChoiceProbTable::new(3, vec![z.clone()], vec![1.0], vec![probs]).unwrap();
        let set = sharp_idset(
            &table,
            &model,
            &shift(),
            &[0.8],
            &g,
            &IdsetOptions::default(),
        )
        .unwrap();
        let m = effect_value(&shift().kind, &model, &z, &a_star, &[0.8]);
        assert_abs_diff_eq!(set.lower, m, epsilon = 1e-7);
        assert_abs_diff_eq!(set.upper, m, epsilon = 1e-7);
    }

    #[test]
    fn zero_parameter_collapses() {
        let dgp = DgpSpec::new(DgpKind::StaticDiscrete, 0.0, 10, 2, 0).unwrap();
        let table = population_choice_probs(&dgp, 60, None).unwrap();
        let set = sharp_idset(
            &table,
            &dgp.model(),
            &shift(),
            &[0.0],
            &grid(40),
            &IdsetOptions::default(),
        )
        .unwrap();
        assert!(set.upper - set.lower <= 1e-9);
        assert_abs_diff_eq!(set.lower, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn population_probabilities_reference_values() {
        let one = DgpSpec::new(DgpKind::StaticDiscrete, 0.0, 10, 2, 0).unwrap();
        let table = population_choice_probs(&one, 80, None).unwrap();
        for p in &table.probs {
            assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        // With β0 = 0 outcomes are independent of X, so P(Y = (1,1) | z) at
        // z = (0,0) is E[Λ(A)² (1−Φ(A))²] / E[(1−Φ(A))²], not E[Λ(A)²]; test the
        // unconditional aggregate instead.
        let p11: f64 = table
            .probs
            .iter()
            .zip(&table.weights)
            .map(|(p, w)| w * p[3])
            .sum();
        assert_abs_diff_eq!(p11, 0.29337903585809294, epsilon = 1e-10);
        let p1: f64 = table
            .probs
            .iter()
            .zip(&table.weights)
            .map(|(p, w)| w * (p[1] + p[3]))
            .sum();
        assert_abs_diff_eq!(p1, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn continuous_design_needs_conditioning() {
        let dgp = DgpSpec::new(DgpKind::StaticContinuous, 1.0, 10, 2, 0).unwrap();
        assert!(population_choice_probs(&dgp, 40, None).is_err());
        let zs = [
            ConditioningValue::scalar(&[0.3, -0.2]),
            ConditioningValue::scalar(&[1.0, 2.0]),
        ];
        let table = population_choice_probs(&dgp, 40, Some(&zs)).unwrap();
        assert_eq!(table.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn sandwich_and_monotone_slack() {
        use crate::bounds::{solve_bound_function, BoundSettings};
        let dgp = DgpSpec::new(DgpKind::StaticDiscrete, 1.0, 10, 2, 0).unwrap();
        let model = dgp.model();
        let table = population_choice_probs(&dgp, 80, None).unwrap();
        let g = grid(60);
        let set = sharp_idset(
            &table,
            &model,
            &shift(),
            &[1.0],
            &g,
            &IdsetOptions::default(),
        )
        .unwrap();
        let mut settings = BoundSettings::default_for(&model);
        settings.grid = HeterogeneityGrid::new(g.clone());
        settings.refine = false;
        let (mut lo, mut hi) = (0.0, 0.0);
        for ((z, w), p) in table.support.iter().zip(&table.weights).zip(&table.probs) {
            let bf = solve_bound_function(&model, &shift(), z, &[vec![1.0]], &settings).unwrap();
            for (mask, py) in p.iter().enumerate() {
                lo += w * py * bf.lower(mask);
                hi += w * py * bf.upper(mask);
            }
        }
        assert!(lo <= set.lower + 1e-7 && set.lower <= set.upper && set.upper <= hi + 1e-7);
        let wider = IdsetOptions {
            slack: 1e-4,
            ..IdsetOptions::default()
        };
        let set2 = sharp_idset(&table, &model, &shift(), &[1.0], &g, &wider).unwrap();
        assert!(set2.lower <= set.lower + 1e-12 && set2.upper >= set.upper - 1e-12);
    }

    #[test]
    fn grid_permutation_invariance() {
        let dgp = DgpSpec::new(DgpKind::StaticDiscrete, -1.0, 10, 2, 0).unwrap();
        let table = population_choice_probs(&dgp, 60, None).unwrap();
        let g = grid(30);
        let mut rev = g.values.clone();
        rev.reverse();
        let g2 = PointSet::from_points(1, rev).unwrap();
        let a = sharp_idset(
            &table,
            &dgp.model(),
            &shift(),
            &[-1.0],
            &g,
            &IdsetOptions::default(),
        )
        .unwrap();
        let b = sharp_idset(
            &table,
            &dgp.model(),
            &shift(),
            &[-1.0],
            &g2,
            &IdsetOptions::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(a.lower, b.lower, epsilon = 1e-8);
        assert_abs_diff_eq!(a.upper, b.upper, epsilon = 1e-8);
    }

    #[test]
    fn infeasible_cell_reports_minimal_slack() {
        let model = ModelSpec::static_logit(2, 1).unwrap();
        let z = ConditioningValue::scalar(&[0.0, 0.0]);
        // Outcomes (1,0) and (0,1) share a kernel under β·x = 0, so unequal
        // probabilities are outside the model.
        let table =
            ChoiceProbTable::new(2, vec![z], vec![1.0], vec![vec![0.0, 1.0, 0.0, 0.0]]).unwrap();
        let g = grid(20);
        let err = sharp_idset(
            &table,
            &model,
            &shift(),
            &[0.5],
            &g,
            &IdsetOptions::default(),
        )
        .unwrap_err();
        match err {
            Error::Infeasible { min_slack, .. } => assert!(min_slack > 0.4),
            e => panic!("unexpected {e}"),
        }
        let set = sharp_idset(
            &table,
            &model,
            &shift(),
            &[0.5],
            &g,
            &IdsetOptions::estimated(),
        )
        .unwrap();
        assert_eq!(set.projected, 1);
        assert!(set.lower <= set.upper);
    }

    #[test]
    fn empirical_cells() {
        let panel = PanelDataset::new(
            4,
            2,
            1,
            vec![1, 0, 1, 0, 1, 0, 1, 0],
            vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            None,
        )
        .unwrap();
        let t = estimated_choice_probs(&panel, 1);
        assert_eq!(t.len(), 1);
        assert_eq!(t.probs[0][1], 1.0);
        let panel = PanelDataset::new(
            4,
            2,
            1,
            vec![1, 0, 1, 0, 1, 1, 0, 0],
            vec![0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            None,
        )
        .unwrap();
        let t = estimated_choice_probs(&panel, 3);
        assert_eq!(t.weights, vec![0.5, 0.5]);
        assert_eq!(t.thin, vec![true, true]);
        t.validate().unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x1_1,x2_1,weight,y,prob\n"));
        assert_eq!(text.lines().count(), 9);
    }

    #[test]
    fn rc_population_table_is_valid() {
        let dgp = DgpSpec::new(DgpKind::RcStatic, 0.5, 10, 2, 0).unwrap();
        let table = population_choice_probs(&dgp, 30, None).unwrap();
        assert_eq!(table.len(), 4);
        let g = PointSet::product(&[GridAxis::new(-5.0, 5.0, 12), GridAxis::new(-7.0, 7.0, 12)])
            .unwrap();
        let effect = EffectSpec::new(EffectKind::RandomCoefShift { k: 0 }, -1.0, 1.0).unwrap();
        let set = sharp_idset(
            &table,
            &dgp.model(),
            &effect,
            &[],
            &g,
            &IdsetOptions::default(),
        )
        .unwrap();
        assert!(set.lower <= set.upper);
    }
}
