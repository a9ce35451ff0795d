//! Confidence intervals for average effects: known common parameter,
//! union over a parameter confidence set, and cross-fitted set-constrained
//! bounds with Bonferroni corrections.

use crate::bounds::BoundSettings;
use crate::error::{Error, Result};
use crate::estimation::{
    estimate_bounds_crossfit_set, estimate_bounds_known_beta, BetaEstimate, BetaEstimator,
    BoundsEstimate, PanelDataset,
};
use crate::models::{EffectSpec, ModelSpec};
use crate::special::normal_quantile;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Theorem1,
    Method1,
    Method2,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CiDiagnostics {
    pub c_value: f64,
    /// `[σ̂_L, σ̂_U]`, or `[σ̂_L1, σ̂_L2, σ̂_U1, σ̂_U2]` for half-sample intervals.
    pub sigmas: Vec<f64>,
    pub beta_grid_size: Option<usize>,
    /// Spacing of the parameter grid per component.
    pub beta_grid_step: Option<Vec<f64>>,
    /// Parameter values attaining the lower and upper envelope.
    pub argmin_beta: Option<Vec<f64>>,
    pub argmax_beta: Option<Vec<f64>>,
    /// Diameters of the two half-sample parameter sets.
    pub set_diameters: Option<[f64; 2]>,
    /// Winning `(α, γ)` of a split search.
    pub split: Option<(f64, f64)>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub method: CiMethod,
    pub diagnostics: CiDiagnostics,
}

impl ConfidenceInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Split grid used by [`tradeoff_search_method2`] when none is given.
pub const DEFAULT_SPLITS: [(f64, f64); 5] = [
    (0.04, 0.01),
    (0.033, 0.017),
    (0.025, 0.025),
    (0.017, 0.033),
    (0.01, 0.04),
];

const DEGENERATE_WARNING: &str = "degenerate variance: interval equals the point bounds";

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )))
    }
}

fn check_gamma(alpha: f64, gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    if alpha + gamma >= 1.0 {
        return Err(Error::invalid(format!(
            "alpha + gamma must be below 1, got {}",
            alpha + gamma
        )));
    }
    Ok(())
}

/// `Φ⁻¹(1 − p)`, with `p = 1/2` giving exactly zero.
fn upper_quantile(p: f64) -> Result<f64> {
    normal_quantile(1.0 - p)
}

fn sigma_ok(s: f64) -> bool {
    s.is_finite() && s > 0.0
}

/// `[L̂ − c_{α/2} σ̂_L/√n, Û + c_{α/2} σ̂_U/√n]`.
pub fn ci_theorem1(be: &BoundsEstimate, alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    if be.n == 0 {
        return Err(Error::invalid("bounds estimate has no units"));
    }
    let c = upper_quantile(alpha / 2.0)?;
    let root_n = (be.n as f64).sqrt();
    let mut diagnostics = CiDiagnostics {
        c_value: c,
        sigmas: vec![be.sigma_l, be.sigma_u],
        ..Default::default()
    };
    if !sigma_ok(be.sigma_l) && !sigma_ok(be.sigma_u) {
        diagnostics.warnings.push(DEGENERATE_WARNING.into());
    }
    Ok(ConfidenceInterval {
        lower: be.l_hat - c * be.sigma_l / root_n,
        upper: be.u_hat + c * be.sigma_u / root_n,
        alpha,
        gamma: 0.0,
        method: CiMethod::Theorem1,
        diagnostics,
    })
}

/// Equidistant parameter values covering the Wald box `β̂ ± z·se`, with
/// `points_per_axis` values per component, plus `β̂` itself.
fn wald_grid(
    beta_hat: &BetaEstimate,
    gamma: f64,
    points_per_axis: usize,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let d = beta_hat.dim();
    let z = upper_quantile(gamma / (2.0 * d as f64))?;
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let half = z * beta_hat.se(k);
            let (lo, hi) = (beta_hat.beta[k] - half, beta_hat.beta[k] + half);
            if points_per_axis == 1 || half == 0.0 {
                vec![beta_hat.beta[k]]
            } else {
                let step = (hi - lo) / (points_per_axis - 1) as f64;
                (0..points_per_axis).map(|j| lo + step * j as f64).collect()
            }
        })
        .collect();
    let steps = axes
        .iter()
        .map(|a| if a.len() > 1 { a[1] - a[0] } else { 0.0 })
        .collect();
    let mut points: Vec<Vec<f64>> = vec![vec![]];
    for axis in &axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    if !points.iter().any(|p| p == &beta_hat.beta) {
        points.push(beta_hat.beta.clone());
    }
    Ok((points, steps))
}

/// Envelope interval over a parameter confidence set: the infimum of
/// `L̂(β) − c_{α/2} σ̂_L(β)/√n` and the supremum of `Û(β) + c_{α/2} σ̂_U(β)/√n`
/// over `β` on a grid of the Wald box `β̂ ± z_{1−γ/2}·se` (Bonferroni
/// `z_{1−γ/4}` per component for two components). `beta_grid_size` is the
/// number of grid values per component; `β̂` is always included.
#[allow(clippy::too_many_arguments)]
pub fn ci_method1(
    panel: &PanelDataset,
    model: &ModelSpec,
    effect: &EffectSpec,
    settings: &BoundSettings,
    beta_hat: &BetaEstimate,
    alpha: f64,
    gamma: f64,
    beta_grid_size: usize,
) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    check_gamma(alpha, gamma)?;
    let d = beta_hat.dim();
    if d != model.beta_dim() {
        return Err(Error::invalid(format!(
            "parameter estimate has dimension {d}, model needs {}",
            model.beta_dim()
        )));
    }
    if d == 0 || d > 2 {
        return Err(Error::invalid(format!(
            "grid search over a {d}-dimensional parameter set is unsupported; use the cross-fitted set method"
        )));
    }
    if beta_grid_size == 0 {
        return Err(Error::invalid("parameter grid size must be positive"));
    }
    let (points, steps) = wald_grid(beta_hat, gamma, beta_grid_size)?;
    let c = upper_quantile(alpha / 2.0)?;
    let envelopes: Vec<(f64, f64, f64, f64)> = points
        .par_iter()
        .map(|beta| {
            let be = estimate_bounds_known_beta(panel, model, effect, beta, settings)?;
            let root_n = (be.n as f64).sqrt();
            Ok((
                be.l_hat - c * be.sigma_l / root_n,
                be.u_hat + c * be.sigma_u / root_n,
                be.sigma_l,
                be.sigma_u,
            ))
        })
        .collect::<Result<_>>()?;
    let mut lo = (f64::INFINITY, 0usize);
    let mut hi = (f64::NEG_INFINITY, 0usize);
    for (j, e) in envelopes.iter().enumerate() {
        if e.0 < lo.0 {
            lo = (e.0, j);
        }
        if e.1 > hi.0 {
            hi = (e.1, j);
        }
    }
    let mut diagnostics = CiDiagnostics {
        c_value: c,
        sigmas: vec![envelopes[lo.1].2, envelopes[hi.1].3],
        beta_grid_size: Some(points.len()),
        beta_grid_step: Some(steps),
        argmin_beta: Some(points[lo.1].clone()),
        argmax_beta: Some(points[hi.1].clone()),
        ..Default::default()
    };
    if envelopes.iter().all(|e| !sigma_ok(e.2) && !sigma_ok(e.3)) {
        diagnostics.warnings.push(DEGENERATE_WARNING.into());
    }
    Ok(ConfidenceInterval {
        lower: lo.0,
        upper: hi.0,
        alpha,
        gamma,
        method: CiMethod::Method1,
        diagnostics,
    })
}

fn set_diameter(points: &[Vec<f64>]) -> f64 {
    let mut best = 0.0f64;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.max(d2.sqrt());
        }
    }
    best
}

/// Interval from an existing cross-fitted set estimate:
/// `[L̂_C − c_{α/4}(σ̂_{L,1}+σ̂_{L,2})/2/√(n/2), Û_C + c_{α/4}(σ̂_{U,1}+σ̂_{U,2})/2/√(n/2)]`.
pub fn ci_method2_from_estimate(
    be: &BoundsEstimate,
    alpha: f64,
    gamma: f64,
) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    check_gamma(alpha, gamma)?;
    let halves = be
        .halves
        .as_ref()
        .ok_or_else(|| Error::invalid("bounds estimate carries no half-sample statistics"))?;
    let c = upper_quantile(alpha / 4.0)?;
    let root = (be.n as f64 / 2.0).sqrt();
    let sl = (halves[0].sigma_l + halves[1].sigma_l) / 2.0;
    let su = (halves[0].sigma_u + halves[1].sigma_u) / 2.0;
    let mut diagnostics = CiDiagnostics {
        c_value: c,
        sigmas: vec![
            halves[0].sigma_l,
            halves[1].sigma_l,
            halves[0].sigma_u,
            halves[1].sigma_u,
        ],
        ..Default::default()
    };
    if be.anchors.len() == 2 {
        diagnostics.set_diameters =
            Some([set_diameter(&be.anchors[0]), set_diameter(&be.anchors[1])]);
    }
    if !sigma_ok(sl) && !sigma_ok(su) {
        diagnostics.warnings.push(DEGENERATE_WARNING.into());
    }
    Ok(ConfidenceInterval {
        lower: be.l_hat - c * sl / root,
        upper: be.u_hat + c * su / root,
        alpha,
        gamma,
        method: CiMethod::Method2,
        diagnostics,
    })
}

/// Cross-fitted bounds valid over each half's parameter confidence box,
/// with a Bonferroni-corrected normal interval.
pub fn ci_method2(
    panel: &PanelDataset,
    model: &ModelSpec,
    effect: &EffectSpec,
    settings: &BoundSettings,
    alpha: f64,
    gamma: f64,
    estimator: &dyn BetaEstimator,
) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    check_gamma(alpha, gamma)?;
    let be = estimate_bounds_crossfit_set(panel, model, effect, settings, gamma, estimator)?;
    ci_method2_from_estimate(&be, alpha, gamma)
}

/// The narrowest Method-2 interval over `(α, γ)` splits that all sum to `c_total`.
#[allow(clippy::too_many_arguments)]
pub fn tradeoff_search_method2(
    panel: &PanelDataset,
    model: &ModelSpec,
    effect: &EffectSpec,
    settings: &BoundSettings,
    estimator: &dyn BetaEstimator,
    c_total: f64,
    split_grid: &[(f64, f64)],
) -> Result<ConfidenceInterval> {
    if split_grid.is_empty() {
        return Err(Error::invalid("split grid is empty"));
    }
    for &(a, g) in split_grid {
        if (a + g - c_total).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "split ({a}, {g}) does not sum to {c_total}"
            )));
        }
    }
    let mut best: Option<ConfidenceInterval> = None;
    for &(a, g) in split_grid {
        let ci = ci_method2(panel, model, effect, settings, a, g, estimator)?;
        if best.as_ref().is_none_or(|b| ci.width() < b.width()) {
            best = Some(ci);
        }
    }
    let mut best = best.expect("nonempty grid");
    best.diagnostics.split = Some((best.alpha, best.gamma));
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::HeterogeneityGrid;
    use crate::estimation::{BoundsMethod, ConditionalLogit, FixedEstimate, HalfStats};
    use crate::models::EffectKind;
    use approx::assert_abs_diff_eq;

    fn point_estimate(l: f64, u: f64, sigma: f64, n: usize) -> BoundsEstimate {
        BoundsEstimate {
            l_hat: l,
            u_hat: u,
            sigma_l: sigma,
            sigma_u: sigma,
            n,
            per_unit: vec![],
            method: BoundsMethod::KnownBeta,
            halves: None,
            anchors: vec![],
            beta_estimates: None,
            max_violation: 0.0,
            capped: 0,
        }
    }

    #[test]
    fn theorem1_reference_interval() {
        let ci = ci_theorem1(&point_estimate(0.0, 0.0, 1.0, 400), 0.05).unwrap();
        assert_abs_diff_eq!(ci.lower, -0.0979981992270027, epsilon = 1e-10);
        assert_abs_diff_eq!(ci.upper, 0.0979981992270027, epsilon = 1e-10);
        assert_eq!(ci.gamma, 0.0);
    }

    #[test]
    fn theorem1_trivial_cases() {
        let ci = ci_theorem1(&point_estimate(-0.1, 0.2, 1.0, 50), 1.0).unwrap();
        assert_eq!((ci.lower, ci.upper), (-0.1, 0.2));
        let ci = ci_theorem1(&point_estimate(-0.1, 0.2, 0.0, 50), 0.05).unwrap();
        assert_eq!((ci.lower, ci.upper), (-0.1, 0.2));
        assert!(!ci.diagnostics.warnings.is_empty());
        assert!(ci_theorem1(&point_estimate(0.0, 0.0, 1.0, 50), 0.0).is_err());
    }

    #[test]
    fn method2_formula_and_collapsed_sets() {
        let mut be = point_estimate(-0.2, 0.3, 0.5, 100);
        be.method = BoundsMethod::CrossFitSet;
        let h = HalfStats {
            n: 50,
            l_hat: -0.2,
            u_hat: 0.3,
            sigma_l: 0.5,
            sigma_u: 0.5,
        };
        be.halves = Some([h, h]);
        be.anchors = vec![vec![vec![1.0]], vec![vec![1.0]]];
        assert!(ci_method2_from_estimate(&be, 0.99, 0.01).is_err());
        let ci = ci_method2_from_estimate(&be, 0.9, 0.05).unwrap();
        let c = normal_quantile(1.0 - 0.9 / 4.0).unwrap();
        assert_abs_diff_eq!(ci.lower, -0.2 - c * 0.5 / 50f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(ci.upper, 0.3 + c * 0.5 / 50f64.sqrt(), epsilon = 1e-14);
        assert_eq!(ci.diagnostics.set_diameters, Some([0.0, 0.0]));
        let h0 = HalfStats {
            sigma_l: 0.0,
            sigma_u: 0.0,
            ..h
        };
        be.halves = Some([h0, h0]);
        let ci = ci_method2_from_estimate(&be, 0.9, 0.05).unwrap();
        assert_eq!((ci.lower, ci.upper), (-0.2, 0.3));
        assert!(!ci.diagnostics.warnings.is_empty());
    }

    fn small_panel() -> PanelDataset {
        // T = 2, one binary covariate, switching pattern fixed per unit.
        let mut y = Vec::new();
        let mut x = Vec::new();
        for i in 0..80 {
            let pattern: [u8; 2] = match i % 5 {
                0 => [0, 1],
                1 => [0, 1],
                2 => [1, 0],
                3 => [1, 1],
                _ => [0, 0],
            };
            y.extend_from_slice(&pattern);
            x.extend_from_slice(if i % 3 == 0 { &[1.0, 0.0] } else { &[0.0, 1.0] });
        }
        PanelDataset::new(80, 2, 1, y, x, None).unwrap()
    }

    fn setup() -> (ModelSpec, EffectSpec, BoundSettings) {
        let model = ModelSpec::static_logit(2, 1).unwrap();
        let effect = EffectSpec::new(
            EffectKind::DiscreteShift {
                k: 0,
                x1: 1.0,
                x2: 0.0,
            },
            -1.0,
            1.0,
        )
        .unwrap();
        let mut settings = BoundSettings::default_for(&model);
        settings.grid = HeterogeneityGrid::scalar(-5.0, 5.0, 30, None).unwrap();
        (model, effect, settings)
    }

    #[test]
    fn method1_singleton_grid_equals_theorem1() {
        let (model, effect, settings) = setup();
        let panel = small_panel();
        let beta_hat = BetaEstimate::with_se(vec![0.7], &[0.3]);
        let ci1 = ci_method1(&panel, &model, &effect, &settings, &beta_hat, 0.05, 0.01, 1).unwrap();
        let be = estimate_bounds_known_beta(&panel, &model, &effect, &[0.7], &settings).unwrap();
        let ci0 = ci_theorem1(&be, 0.05).unwrap();
        assert_eq!((ci1.lower, ci1.upper), (ci0.lower, ci0.upper));
    }

    #[test]
    fn method1_contains_theorem1_and_shrinks_with_gamma() {
        let (model, effect, settings) = setup();
        let panel = small_panel();
        let beta_hat = BetaEstimate::with_se(vec![0.7], &[0.3]);
        let be = estimate_bounds_known_beta(&panel, &model, &effect, &[0.7], &settings).unwrap();
        let ci0 = ci_theorem1(&be, 0.05).unwrap();
        let wide = ci_method1(
            &panel, &model, &effect, &settings, &beta_hat, 0.05, 0.001, 10,
        )
        .unwrap();
        let narrow =
            ci_method1(&panel, &model, &effect, &settings, &beta_hat, 0.05, 0.2, 10).unwrap();
        assert!(wide.lower <= ci0.lower && wide.upper >= ci0.upper);
        assert!(wide.lower <= narrow.lower + 1e-12 && wide.upper >= narrow.upper - 1e-12);
        assert_eq!(wide.diagnostics.beta_grid_size, Some(11));
    }

    #[test]
    fn method1_rejects_high_dimension() {
        let (model, effect, settings) = setup();
        let panel = small_panel();
        let est = BetaEstimate::with_se(vec![0.1, 0.2, 0.3], &[0.1, 0.1, 0.1]);
        assert!(ci_method1(&panel, &model, &effect, &settings, &est, 0.05, 0.01, 5).is_err());
    }

    #[test]
    fn tradeoff_search_picks_narrowest() {
        let (model, effect, settings) = setup();
        let panel = small_panel();
        let est = FixedEstimate(BetaEstimate::with_se(vec![0.5], &[0.2]));
        let single = ci_method2(&panel, &model, &effect, &settings, 0.025, 0.025, &est).unwrap();
        let one = tradeoff_search_method2(
            &panel,
            &model,
            &effect,
            &settings,
            &est,
            0.05,
            &[(0.025, 0.025)],
        )
        .unwrap();
        assert_eq!((single.lower, single.upper), (one.lower, one.upper));
        let all = tradeoff_search_method2(
            &panel,
            &model,
            &effect,
            &settings,
            &est,
            0.05,
            &DEFAULT_SPLITS,
        )
        .unwrap();
        assert!(all.width() <= one.width() + 1e-15);
        assert!(DEFAULT_SPLITS.contains(&all.diagnostics.split.unwrap()));
        assert!(
            tradeoff_search_method2(&panel, &model, &effect, &settings, &est, 0.05, &[]).is_err()
        );
        assert!(tradeoff_search_method2(
            &panel,
            &model,
            &effect,
            &settings,
            &est,
            0.05,
            &[(0.03, 0.03)]
        )
        .is_err());
    }

    #[test]
    fn method2_negates_under_outcome_flip() {
        let (model, effect, settings) = setup();
        let panel = small_panel();
        let mut flipped = panel.clone();
        flipped.y.iter_mut().for_each(|v| *v = 1 - *v);
        let est = ConditionalLogit::default();
        let a = ci_method2(&panel, &model, &effect, &settings, 0.05, 0.01, &est).unwrap();
        let b = ci_method2(&flipped, &model, &effect, &settings, 0.05, 0.01, &est).unwrap();
        assert_abs_diff_eq!(a.lower, -b.upper, epsilon = 1e-7);
        assert_abs_diff_eq!(a.upper, -b.lower, epsilon = 1e-7);
    }
}
