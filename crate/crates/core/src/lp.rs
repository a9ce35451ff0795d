//! Dense linear programs and a two-phase primal simplex solver.
//!
//! Problems are stated as
//!
//! ```text
//! minimise  c·v   subject to  A_ub v ≤ b_ub,  A_eq v = b_eq,  lo ≤ v ≤ hi
//! ```
//!
//! and rewritten internally to `min c'x, A'x ≤ b', x ≥ 0` (shifted, reflected
//! or split variables; equalities as paired inequalities; finite upper bounds
//! as extra rows). The solver works on a condensed tableau holding only the
//! non-basic columns, with Dantzig pricing that falls back to Bland's rule
//! after a run of degenerate pivots.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    /// Row-major, `b_ub.len() × c.len()`.
    pub a_ub: Vec<f64>,
    pub b_ub: Vec<f64>,
    /// Row-major, `b_eq.len() × c.len()`.
    pub a_eq: Vec<f64>,
    pub b_eq: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// Objective `c`, no constraints, every variable in `[0, ∞)`.
    pub fn new(c: Vec<f64>) -> Self {
        let n = c.len();
        LinearProgram {
            c,
            a_ub: Vec::new(),
            b_ub: Vec::new(),
            a_eq: Vec::new(),
            b_eq: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_ub(&self) -> usize {
        self.b_ub.len()
    }

    pub fn num_eq(&self) -> usize {
        self.b_eq.len()
    }

    pub fn add_ub(&mut self, row: &[f64], rhs: f64) {
        self.a_ub.extend_from_slice(row);
        self.b_ub.push(rhs);
    }

    pub fn add_eq(&mut self, row: &[f64], rhs: f64) {
        self.a_eq.extend_from_slice(row);
        self.b_eq.push(rhs);
    }

    /// Appends `Σ coef·v_j ≤ rhs` given as sparse `(j, coef)` pairs.
    pub fn add_ub_sparse(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let start = self.a_ub.len();
        self.a_ub.resize(start + self.c.len(), 0.0);
        for &(j, v) in terms {
            self.a_ub[start + j] += v;
        }
        self.b_ub.push(rhs);
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.bounds[j] = (lo, hi);
    }

    pub fn ub_row(&self, i: usize) -> &[f64] {
        let n = self.c.len();
        &self.a_ub[i * n..(i + 1) * n]
    }

    pub fn eq_row(&self, i: usize) -> &[f64] {
        let n = self.c.len();
        &self.a_eq[i * n..(i + 1) * n]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.c.len();
        if self.a_ub.len() != self.b_ub.len() * n {
            return Err(Error::invalid(format!(
                "A_ub has {} entries, expected {}x{}",
                self.a_ub.len(),
                self.b_ub.len(),
                n
            )));
        }
        if self.a_eq.len() != self.b_eq.len() * n {
            return Err(Error::invalid(format!(
                "A_eq has {} entries, expected {}x{}",
                self.a_eq.len(),
                self.b_eq.len(),
                n
            )));
        }
        if self.bounds.len() != n {
            return Err(Error::invalid(format!(
                "{} variable bounds for {} variables",
                self.bounds.len(),
                n
            )));
        }
        let finite = self
            .c
            .iter()
            .chain(&self.a_ub)
            .chain(&self.b_ub)
            .chain(&self.a_eq)
            .chain(&self.b_eq)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid(
                "linear program contains NaN or infinite data",
            ));
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan()
                || hi.is_nan()
                || lo > hi
                || lo == f64::INFINITY
                || hi == f64::NEG_INFINITY
            {
                return Err(Error::invalid(format!(
                    "variable {j} has invalid bounds [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Largest violation of any constraint or bound at `v`.
    pub fn max_violation(&self, v: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.num_ub() {
            worst = worst.max(dot(self.ub_row(i), v) - self.b_ub[i]);
        }
        for i in 0..self.num_eq() {
            worst = worst.max((dot(self.eq_row(i), v) - self.b_eq[i]).abs());
        }
        for (x, &(lo, hi)) in v.iter().zip(&self.bounds) {
            worst = worst.max(lo - x).max(x - hi);
        }
        worst
    }

    pub fn objective_at(&self, v: &[f64]) -> f64 {
        dot(&self.c, v)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub v: Vec<f64>,
    pub objective: f64,
    /// One multiplier per `A_ub` row (non-negative) followed by one per `A_eq`
    /// row (free); the optimal value moves by `-dual[i]` per unit increase of
    /// the corresponding right-hand side.
    pub dual: Vec<f64>,
    pub max_primal_residual: f64,
    pub duality_gap: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Consecutive degenerate pivots tolerated before switching to Bland's rule.
    pub bland_after: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            feas_tol: 1e-9,
            gap_tol: 1e-8,
            max_iter: 100_000,
            bland_after: 50,
        }
    }
}

/// Hook for plugging in another LP backend.
pub trait LpSolver: Sync {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution>;
}

/// The built-in simplex solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct Simplex {
    pub opts: LpOptions,
}

impl LpSolver for Simplex {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution> {
        solve_lp(lp, &self.opts)
    }
}

/// How an original variable is recovered from internal columns.
#[derive(Debug, Clone, Copy)]
struct VarMap {
    offset: f64,
    pos: usize,
    pos_sign: f64,
    neg: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
enum RowOrigin {
    Ub(usize),
    EqUpper(usize),
    EqLower(usize),
    Upper,
}

struct StandardForm {
    n: usize,
    rows: Vec<f64>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    origin: Vec<RowOrigin>,
    map: Vec<VarMap>,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Self {
        let mut map = Vec::with_capacity(lp.num_vars());
        let mut n = 0;
        let mut upper_rows = Vec::new();
        for &(lo, hi) in &lp.bounds {
            let m = if lo.is_finite() {
                if hi.is_finite() {
                    upper_rows.push((n, hi - lo));
                }
                VarMap {
                    offset: lo,
                    pos: n,
                    pos_sign: 1.0,
                    neg: None,
                }
            } else if hi.is_finite() {
                VarMap {
                    offset: hi,
                    pos: n,
                    pos_sign: -1.0,
                    neg: None,
                }
            } else {
                n += 1;
                VarMap {
                    offset: 0.0,
                    pos: n - 1,
                    pos_sign: 1.0,
                    neg: Some(n),
                }
            };
            n += 1;
            map.push(m);
        }
        let mut cost = vec![0.0; n];
        for (j, m) in map.iter().enumerate() {
            cost[m.pos] += lp.c[j] * m.pos_sign;
            if let Some(k) = m.neg {
                cost[k] -= lp.c[j];
            }
        }
        let m_total = lp.num_ub() + 2 * lp.num_eq() + upper_rows.len();
        let mut sf = StandardForm {
            n,
            rows: Vec::with_capacity(m_total * n),
            rhs: Vec::with_capacity(m_total),
            cost,
            origin: Vec::with_capacity(m_total),
            map,
        };
        for i in 0..lp.num_ub() {
            sf.push_row(lp.ub_row(i), lp.b_ub[i], 1.0, RowOrigin::Ub(i));
        }
        for i in 0..lp.num_eq() {
            sf.push_row(lp.eq_row(i), lp.b_eq[i], 1.0, RowOrigin::EqUpper(i));
            sf.push_row(lp.eq_row(i), lp.b_eq[i], -1.0, RowOrigin::EqLower(i));
        }
        for (col, width) in upper_rows {
            let start = sf.rows.len();
            sf.rows.resize(start + n, 0.0);
            sf.rows[start + col] = 1.0;
            sf.rhs.push(width);
            sf.origin.push(RowOrigin::Upper);
        }
        sf
    }

    fn push_row(&mut self, row: &[f64], rhs: f64, sign: f64, origin: RowOrigin) {
        let start = self.rows.len();
        self.rows.resize(start + self.n, 0.0);
        let mut b = sign * rhs;
        for (j, &a) in row.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let a = sign * a;
            let m = self.map[j];
            b -= a * m.offset;
            self.rows[start + m.pos] += a * m.pos_sign;
            if let Some(k) = m.neg {
                self.rows[start + k] -= a;
            }
        }
        self.rhs.push(b);
        self.origin.push(origin);
    }

    fn recover(&self, x: &[f64]) -> Vec<f64> {
        self.map
            .iter()
            .map(|m| {
                let mut v = m.offset + m.pos_sign * x[m.pos];
                if let Some(k) = m.neg {
                    v -= x[k];
                }
                v
            })
            .collect()
    }
}

const PIVOT_TOL: f64 = 1e-11;
const HARRIS_TOL: f64 = 1e-11;

/// Condensed tableau: `basic_i = b_i − Σ_k t_ik · nonbasic_k`,
/// objective `z = z0 + Σ_k d_k · nonbasic_k`.
struct Tableau {
    m: usize,
    n: usize,
    t: Vec<f64>,
    b: Vec<f64>,
    d: Vec<f64>,
    z0: f64,
    row_var: Vec<usize>,
    col_var: Vec<usize>,
    blocked: Vec<bool>,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterLimit,
}

impl Tableau {
    /// Internal columns plus the phase-one artificial as the last column.
    fn new(sf: &StandardForm) -> Self {
        let m = sf.rhs.len();
        let n = sf.n + 1;
        let mut t = vec![0.0; m * n];
        for i in 0..m {
            t[i * n..i * n + sf.n].copy_from_slice(&sf.rows[i * sf.n..(i + 1) * sf.n]);
            t[i * n + sf.n] = -1.0;
        }
        Tableau {
            m,
            n,
            t,
            b: sf.rhs.clone(),
            d: vec![0.0; n],
            z0: 0.0,
            row_var: (0..m).map(|i| sf.n + i).collect(),
            col_var: (0..sf.n).chain(std::iter::once(sf.n + m)).collect(),
            blocked: vec![false; n],
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let n = self.n;
        let inv = 1.0 / self.t[r * n + j];
        {
            let row = &mut self.t[r * n..(r + 1) * n];
            for v in row.iter_mut() {
                *v *= inv;
            }
            row[j] = inv;
        }
        self.b[r] *= inv;
        let (before, rest) = self.t.split_at_mut(r * n);
        let (pivot_row, after) = rest.split_at_mut(n);
        let br = self.b[r];
        let update = |row: &mut [f64], bi: &mut f64| {
            let f = row[j];
            if f == 0.0 {
                return;
            }
            for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                *v -= f * p;
            }
            row[j] = -f * inv;
            *bi -= f * br;
        };
        for (i, row) in before.chunks_exact_mut(n).enumerate() {
            update(row, &mut self.b[i]);
        }
        for (i, row) in after.chunks_exact_mut(n).enumerate() {
            update(row, &mut self.b[r + 1 + i]);
        }
        let f = self.d[j];
        if f != 0.0 {
            for (v, p) in self.d.iter_mut().zip(pivot_row.iter()) {
                *v -= f * p;
            }
            self.d[j] = -f * inv;
            self.z0 += f * br;
        }
        std::mem::swap(&mut self.row_var[r], &mut self.col_var[j]);
    }

    /// Two-pass (Harris) ratio test: bound the step allowing violations up
    /// to `HARRIS_TOL`, then pick the largest pivot among rows whose ratio is
    /// within that step. Under Bland's rule the lowest-indexed basic variable
    /// among sizeable candidates leaves instead.
    fn ratio_test(&self, j: usize, bland: bool) -> Option<(usize, f64)> {
        let n = self.n;
        let mut theta = f64::INFINITY;
        for i in 0..self.m {
            let a = self.t[i * n + j];
            if a > PIVOT_TOL {
                theta = theta.min((self.b[i].max(0.0) + HARRIS_TOL) / a);
            }
        }
        if !theta.is_finite() {
            return None;
        }
        let mut biggest = 0.0f64;
        for i in 0..self.m {
            let a = self.t[i * n + j];
            if a > PIVOT_TOL && self.b[i].max(0.0) / a <= theta {
                biggest = biggest.max(a);
            }
        }
        let mut pick: Option<usize> = None;
        for i in 0..self.m {
            let a = self.t[i * n + j];
            if a <= PIVOT_TOL || self.b[i].max(0.0) / a > theta {
                continue;
            }
            pick = match pick {
                None if !bland || a >= 1e-2 * biggest => Some(i),
                None => None,
                Some(p) => {
                    let better = if bland {
                        a >= 1e-2 * biggest && self.row_var[i] < self.row_var[p]
                    } else {
                        let ap = self.t[p * n + j];
                        a > ap || (a == ap && self.row_var[i] < self.row_var[p])
                    };
                    Some(if better { i } else { p })
                }
            };
        }
        pick.map(|r| (r, self.b[r].max(0.0) / self.t[r * n + j]))
    }

    fn run(&mut self, cost_tol: f64, opts: &LpOptions, iters: &mut usize) -> Outcome {
        let n = self.n;
        let mut stall = 0usize;
        loop {
            let bland = stall >= opts.bland_after;
            let mut enter: Option<usize> = None;
            for k in 0..n {
                if self.blocked[k] || self.d[k] >= -cost_tol {
                    continue;
                }
                enter = match enter {
                    None => Some(k),
                    Some(e) => {
                        let better = if bland {
                            self.col_var[k] < self.col_var[e]
                        } else {
                            self.d[k] < self.d[e]
                                || (self.d[k] == self.d[e] && self.col_var[k] < self.col_var[e])
                        };
                        Some(if better { k } else { e })
                    }
                };
            }
            let Some(j) = enter else {
                return Outcome::Optimal;
            };
            if *iters >= opts.max_iter {
                return Outcome::IterLimit;
            }
            let Some((r, ratio)) = self.ratio_test(j, bland) else {
                return Outcome::Unbounded;
            };
            if ratio <= 1e-12 {
                stall += 1;
            } else {
                stall = 0;
            }
            self.pivot(r, j);
            *iters += 1;
        }
    }
}

/// Solves `lp`. Errors only for malformed input; infeasibility, unboundedness
/// and the iteration cap are reported through [`LpSolution::status`].
pub fn solve_lp(lp: &LinearProgram, opts: &LpOptions) -> Result<LpSolution> {
    lp.validate()?;
    let sf = StandardForm::build(lp);
    let mut tab = Tableau::new(&sf);
    let art_col = sf.n;
    let mut iters = 0usize;

    let failed = |status: LpStatus, iters: usize| LpSolution {
        status,
        v: vec![f64::NAN; lp.num_vars()],
        objective: f64::NAN,
        dual: vec![f64::NAN; lp.num_ub() + lp.num_eq()],
        max_primal_residual: f64::NAN,
        duality_gap: f64::NAN,
        iterations: iters,
    };

    // Phase one: minimise the artificial that enters every row with coefficient −1.
    let b_scale = sf.rhs.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let worst = (0..tab.m).min_by(|&a, &b| tab.b[a].total_cmp(&tab.b[b]).then(a.cmp(&b)));
    match worst {
        Some(r) if tab.b[r] < 0.0 => {
            tab.d[art_col] = 1.0;
            tab.pivot(r, art_col);
            iters += 1;
            match tab.run(1e-11, opts, &mut iters) {
                Outcome::Optimal => {}
                Outcome::IterLimit => return Ok(failed(LpStatus::IterLimit, iters)),
                Outcome::Unbounded => {
                    return Err(Error::Numerical(
                        "phase-one problem reported unbounded".into(),
                    ))
                }
            }
            if tab.z0 > opts.feas_tol * b_scale {
                return Ok(failed(LpStatus::Infeasible, iters));
            }
            let art_id = sf.n + tab.m;
            if let Some(r) = tab.row_var.iter().position(|&v| v == art_id) {
                let n = tab.n;
                // The artificial is basic, so every column holds a genuine variable.
                let best = (0..n)
                    .max_by(|&a, &b| tab.t[r * n + a].abs().total_cmp(&tab.t[r * n + b].abs()));
                if let Some(k) = best {
                    if tab.t[r * n + k].abs() > PIVOT_TOL {
                        tab.pivot(r, k);
                        iters += 1;
                    }
                }
            }
        }
        _ => {}
    }
    let art_id = sf.n + tab.m;
    if let Some(k) = tab.col_var.iter().position(|&v| v == art_id) {
        tab.blocked[k] = true;
    }

    // Phase two objective in terms of the current non-basic columns.
    let n = tab.n;
    tab.d.iter_mut().for_each(|v| *v = 0.0);
    tab.z0 = 0.0;
    for k in 0..n {
        let v = tab.col_var[k];
        if v < sf.n {
            tab.d[k] += sf.cost[v];
        }
    }
    for i in 0..tab.m {
        let v = tab.row_var[i];
        if v < sf.n && sf.cost[v] != 0.0 {
            let c = sf.cost[v];
            tab.z0 += c * tab.b[i];
            for k in 0..n {
                tab.d[k] -= c * tab.t[i * n + k];
            }
        }
    }
    let c_scale = sf.cost.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cost_tol = 1e-11 * if c_scale > 0.0 { c_scale } else { 1.0 };
    match tab.run(cost_tol, opts, &mut iters) {
        Outcome::Optimal => {}
        Outcome::Unbounded => return Ok(failed(LpStatus::Unbounded, iters)),
        Outcome::IterLimit => return Ok(failed(LpStatus::IterLimit, iters)),
    }

    let mut x = vec![0.0; sf.n];
    for i in 0..tab.m {
        let v = tab.row_var[i];
        if v < sf.n {
            x[v] = tab.b[i].max(0.0);
        }
    }
    let mut y = vec![0.0; tab.m];
    for k in 0..n {
        let v = tab.col_var[k];
        if v >= sf.n && v < sf.n + tab.m {
            y[v - sf.n] = tab.d[k].max(0.0);
        }
    }
    let gap = dot(&sf.cost, &x) + dot(&sf.rhs, &y);
    let mut dual = vec![0.0; lp.num_ub() + lp.num_eq()];
    for (yi, origin) in y.iter().zip(&sf.origin) {
        match *origin {
            RowOrigin::Ub(i) => dual[i] = *yi,
            RowOrigin::EqUpper(i) => dual[lp.num_ub() + i] += *yi,
            RowOrigin::EqLower(i) => dual[lp.num_ub() + i] -= *yi,
            RowOrigin::Upper => {}
        }
    }
    let v = sf.recover(&x);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: lp.objective_at(&v),
        max_primal_residual: lp.max_violation(&v),
        v,
        dual,
        duality_gap: gap,
        iterations: iters,
    })
}

/// Result of the brute-force vertex oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleOutcome {
    Optimal(f64),
    Infeasible,
}

/// Largest `variables + constraints` accepted by the vertex oracle.
pub const ORACLE_MAX_SIZE: usize = 16;

/// Exhaustive search over basic solutions: every choice of variables held at
/// a bound plus an equal number of active constraints for the rest. Needs
/// every variable bounded on both sides.
pub fn enumerate_vertices_oracle(lp: &LinearProgram) -> Result<OracleOutcome> {
    lp.validate()?;
    let n = lp.num_vars();
    let m = lp.num_ub() + lp.num_eq();
    if n + m > ORACLE_MAX_SIZE {
        return Err(Error::invalid(format!(
            "vertex oracle handles at most {ORACLE_MAX_SIZE} variables plus constraints, got {}",
            n + m
        )));
    }
    if lp
        .bounds
        .iter()
        .any(|(lo, hi)| !lo.is_finite() || !hi.is_finite())
    {
        return Err(Error::invalid(
            "vertex oracle needs finite bounds on every variable",
        ));
    }
    let rows: Vec<(&[f64], f64)> = (0..lp.num_ub())
        .map(|i| (lp.ub_row(i), lp.b_ub[i]))
        .chain((0..lp.num_eq()).map(|i| (lp.eq_row(i), lp.b_eq[i])))
        .collect();
    let scale = rows
        .iter()
        .flat_map(|(r, b)| r.iter().chain(std::iter::once(b)))
        .chain(lp.bounds.iter().flat_map(|(a, b)| [a, b]))
        .fold(1.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-9 * scale;
    let mut best: Option<f64> = None;
    let mut v = vec![0.0; n];
    for basic in 0u32..(1 << n) {
        let k = basic.count_ones() as usize;
        if k > m {
            continue;
        }
        let bvars: Vec<usize> = (0..n).filter(|j| basic >> j & 1 == 1).collect();
        let nvars: Vec<usize> = (0..n).filter(|j| basic >> j & 1 == 0).collect();
        for active in subsets(m, k) {
            for at_hi in 0u32..(1 << nvars.len()) {
                for (idx, &j) in nvars.iter().enumerate() {
                    v[j] = if at_hi >> idx & 1 == 1 {
                        lp.bounds[j].1
                    } else {
                        lp.bounds[j].0
                    };
                }
                if k > 0 {
                    let mut mat = nalgebra::DMatrix::<f64>::zeros(k, k);
                    let mut rhs = nalgebra::DVector::<f64>::zeros(k);
                    for (ri, &row) in active.iter().enumerate() {
                        let (coefs, b) = rows[row];
                        let mut r = b;
                        for &j in &nvars {
                            r -= coefs[j] * v[j];
                        }
                        rhs[ri] = r;
                        for (ci, &j) in bvars.iter().enumerate() {
                            mat[(ri, ci)] = coefs[j];
                        }
                    }
                    let lu = mat.full_piv_lu();
                    if !lu.is_invertible() || lu.determinant().abs() < 1e-12 {
                        continue;
                    }
                    let Some(sol) = lu.solve(&rhs) else { continue };
                    for (ci, &j) in bvars.iter().enumerate() {
                        v[j] = sol[ci];
                    }
                }
                if lp.max_violation(&v) <= tol {
                    let obj = lp.objective_at(&v);
                    best = Some(best.map_or(obj, |b: f64| b.min(obj)));
                }
            }
        }
    }
    Ok(best.map_or(OracleOutcome::Infeasible, OracleOutcome::Optimal))
}

fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << m))
        .filter(|s| s.count_ones() as usize == k)
        .map(|s| (0..m).filter(|i| s >> i & 1 == 1).collect())
        .collect()
}

/// Writes `lp` in CPLEX LP text format (objective, `Subject To`, `Bounds`).
/// Variables are named `v0, v1, …`; inequality rows `c0, …`, equalities `e0, …`.
pub fn write_lp_format<W: Write>(lp: &LinearProgram, mut w: W) -> io::Result<()> {
    fn terms<W: Write>(w: &mut W, coefs: &[f64]) -> io::Result<()> {
        let mut any = false;
        for (j, &a) in coefs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let sign = if a < 0.0 { '-' } else { '+' };
            if any || a < 0.0 {
                write!(w, " {sign} {:e} v{j}", a.abs())?;
            } else {
                write!(w, " {:e} v{j}", a)?;
            }
            any = true;
        }
        if !any {
            write!(w, " 0 v0")?;
        }
        Ok(())
    }
    writeln!(
        w,
        "\\ {} variables, {} inequalities, {} equalities",
        lp.num_vars(),
        lp.num_ub(),
        lp.num_eq()
    )?;
    writeln!(w, "Minimize")?;
    write!(w, " obj:")?;
    terms(&mut w, &lp.c)?;
    writeln!(w)?;
    writeln!(w, "Subject To")?;
    for i in 0..lp.num_ub() {
        write!(w, " c{i}:")?;
        terms(&mut w, lp.ub_row(i))?;
        writeln!(w, " <= {:e}", lp.b_ub[i])?;
    }
    for i in 0..lp.num_eq() {
        write!(w, " e{i}:")?;
        terms(&mut w, lp.eq_row(i))?;
        writeln!(w, " = {:e}", lp.b_eq[i])?;
    }
    writeln!(w, "Bounds")?;
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => writeln!(w, " {lo:e} <= v{j} <= {hi:e}")?,
            (true, false) => writeln!(w, " v{j} >= {lo:e}")?,
            (false, true) => writeln!(w, " -inf <= v{j} <= {hi:e}")?,
            (false, false) => writeln!(w, " v{j} free")?,
        }
    }
    writeln!(w, "End")
}
