//! Scalar distribution functions and quadrature rules shared by the model
//! kernels, the inference routines and the simulation oracles.

use crate::error::{Error, Result};
use statrs::function::erf::erfc;
use std::f64::consts::{PI, SQRT_2};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard logistic CDF.
#[inline]
pub fn logistic_cdf(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logistic_pdf(v: f64) -> f64 {
    let p = logistic_cdf(v);
    p * (1.0 - p)
}

/// `ln Λ(v)`, accurate in both tails.
#[inline]
pub fn log_logistic_cdf(v: f64) -> f64 {
    if v >= 0.0 {
        -(-v).exp().ln_1p()
    } else {
        v - v.exp().ln_1p()
    }
}

#[inline]
pub fn normal_pdf(v: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * v * v).exp()
}

#[inline]
pub fn normal_cdf(v: f64) -> f64 {
    0.5 * erfc(-v / SQRT_2)
}

/// `ln Φ(v)`; falls back to the Mills-ratio expansion deep in the left tail.
pub fn log_normal_cdf(v: f64) -> f64 {
    if v > -30.0 {
        normal_cdf(v).ln()
    } else {
        let v2 = v * v;
        -0.5 * v2 - (-v).ln() - 0.5 * (2.0 * PI).ln() + (1.0 - 1.0 / v2 + 3.0 / (v2 * v2)).ln()
    }
}

const ACKLAM_A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const ACKLAM_B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const ACKLAM_C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const ACKLAM_D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

/// Inverse standard normal CDF.
///
/// Acklam's rational approximation (relative error about 1e-9) followed by one
/// Halley step against the erfc-based CDF, which brings the absolute error
/// below 1e-10 across (0, 1).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "normal quantile needs 0 < p < 1, got {p}"
        )));
    }
    const P_LOW: f64 = 0.02425;
    let (a, b, c, d) = (&ACKLAM_A, &ACKLAM_B, &ACKLAM_C, &ACKLAM_D);
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    };
    if p == 0.5 {
        return Ok(0.0);
    }
    // Halley polish; Φ(x) - p, written via the upper tail when p > 1/2.
    let e = if p > 0.5 {
        (1.0 - p) - 0.5 * erfc(x / SQRT_2)
    } else {
        normal_cdf(x) - p
    };
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    Ok(x - u / (1.0 + 0.5 * x * u))
}

/// Gauss–Hermite rule for expectations under N(0, 1): `E g(Z) ≈ Σ w_i g(x_i)`,
/// weights summing to one.
#[derive(Debug, Clone)]
pub struct NormalQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NormalQuadrature {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("quadrature needs at least one node"));
        }
        let (x, w) = gauss_hermite(n);
        let norm = PI.sqrt();
        Ok(NormalQuadrature {
            nodes: x.iter().map(|v| v * SQRT_2).collect(),
            weights: w.iter().map(|v| v / norm).collect(),
        })
    }

    /// `E g(μ + σ Z)`.
    pub fn expect(&self, mean: f64, sd: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| w * g(mean + sd * z))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Physicists' Gauss–Hermite nodes and weights (weight function e^{-x²}) by
/// Newton iteration on the orthonormal recurrence.
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quantile_reference_values() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(
            normal_quantile(0.975).unwrap(),
            1.959963984540054,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            normal_quantile(0.9875).unwrap(),
            2.241402727604947,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            normal_quantile(0.025).unwrap(),
            -1.959963984540054,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            normal_quantile(1e-8).unwrap(),
            -5.612001244174789,
            epsilon = 1e-9
        );
    }

    #[test]
    fn quantile_rejects_out_of_range() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(normal_quantile(p).is_err());
        }
    }

    #[test]
    fn quantile_round_trips_through_cdf() {
        for i in 1..200 {
            let p = 0.005 * i as f64;
            let x = normal_quantile(p).unwrap();
            assert!((normal_cdf(x) - p).abs() < 1e-9, "p={p}");
        }
    }

    #[test]
    fn hermite_rule_integrates_moments() {
        let q = NormalQuadrature::new(40).unwrap();
        assert_abs_diff_eq!(q.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(q.expect(0.0, 1.0, |z| z * z), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.expect(0.0, 1.0, |z| z.powi(4)), 3.0, epsilon = 1e-11);
        assert_abs_diff_eq!(q.expect(1.0, 2.0, |z| z), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn logistic_tails_are_stable() {
        assert_eq!(logistic_cdf(0.0), 0.5);
        assert!(logistic_cdf(-800.0) >= 0.0);
        assert_abs_diff_eq!(log_logistic_cdf(-50.0), -50.0, epsilon = 1e-12);
        assert_abs_diff_eq!(logistic_pdf(0.0), 0.25, epsilon = 1e-16);
    }
}
