//! Mean-field energy functionals and their intrinsic derivatives.
//!
//! A potential is a functional F of the empirical position law m. The particle
//! drift uses its intrinsic derivative D_mF(m, x): for the discretized system
//! viewed as a function on (ℝⁿ)^N, ∂_{x_i} F = (1/N)·D_mF(m, x_i), which is the
//! identity [`fd_consistency_check`] verifies numerically.

use crate::error::{Error, Result};
use crate::gan::GanPotential;
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// Supported energy functionals on the empirical position law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    /// F(m) = (λ/2)·∫|x|² dm. No interaction; every particle sees λx.
    QuadraticConfinement { lambda: f64 },
    /// F(m) = (λ/2)·∫|x|² dm − (α/2)·|∫x dm|².
    ///
    /// Each particle is pulled toward the ensemble mean with strength α; the
    /// flat-measure convexity of F degrades as α grows and fails for α ≥ λ.
    MeanAttraction { lambda: f64, alpha: f64 },
    /// Discriminator energy against fixed target and generator samples.
    GanDiscriminator(GanPotential),
}

impl Potential {
    pub fn quadratic(lambda: f64) -> Result<Self> {
        let p = Potential::QuadraticConfinement { lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn mean_attraction(lambda: f64, alpha: f64) -> Result<Self> {
        let p = Potential::MeanAttraction { lambda, alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Potential::QuadraticConfinement { lambda } => {
                if !lambda.is_finite() || *lambda <= 0.0 {
                    return Err(Error::invalid("lambda", format!("{lambda} must be > 0")));
                }
            }
            Potential::MeanAttraction { lambda, alpha } => {
                if !lambda.is_finite() || *lambda <= 0.0 {
                    return Err(Error::invalid("lambda", format!("{lambda} must be > 0")));
                }
                if !alpha.is_finite() {
                    return Err(Error::invalid("alpha", format!("{alpha} must be finite")));
                }
            }
            Potential::GanDiscriminator(g) => g.validate()?,
        }
        Ok(())
    }

    /// Required spatial dimension, if the functional fixes one.
    pub fn dim_constraint(&self) -> Option<usize> {
        match self {
            Potential::GanDiscriminator(_) => Some(3),
            _ => None,
        }
    }

    /// F evaluated at the empirical law of `x` (rows are particles).
    pub fn value(&self, x: ArrayView2<f64>) -> f64 {
        let count = x.nrows() as f64;
        match self {
            Potential::QuadraticConfinement { lambda } => {
                0.5 * lambda * x.iter().map(|v| v * v).sum::<f64>() / count
            }
            Potential::MeanAttraction { lambda, alpha } => {
                let quad = 0.5 * lambda * x.iter().map(|v| v * v).sum::<f64>() / count;
                let mean = x.mean_axis(Axis(0)).expect("non-empty ensemble");
                quad - 0.5 * alpha * mean.iter().map(|v| v * v).sum::<f64>()
            }
            Potential::GanDiscriminator(g) => g.value(x),
        }
    }

    /// D_mF(m, x_i) for every particle, with m the empirical law of `x`.
    ///
    /// Mean-field context (ensemble mean, sample sums) is computed once per call,
    /// so integrators should call this on whole ensembles, not per particle.
    pub fn intrinsic_derivative(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match self {
            Potential::QuadraticConfinement { lambda } => {
                let mut d = x.to_owned();
                d *= *lambda;
                d
            }
            Potential::MeanAttraction { lambda, alpha } => {
                let mean = x.mean_axis(Axis(0)).expect("non-empty ensemble");
                let mut d = x.to_owned();
                d *= *lambda;
                for mut row in d.rows_mut() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v -= alpha * mean[j];
                    }
                }
                d
            }
            Potential::GanDiscriminator(g) => g.intrinsic_derivative(x),
        }
    }
}

/// Compares D_mF against a central finite difference of F through the empirical
/// law, returning the worst relative error over the coordinates of one particle.
///
/// The N-particle lift satisfies ∂_{x_ij} F(m) = D_mF(m, x_i)_j / N exactly, so
/// the returned error is O(h²) plus floating-point noise for smooth functionals.
pub fn fd_consistency_check(
    potential: &Potential,
    x: ArrayView2<f64>,
    particle: usize,
    h: f64,
) -> Result<f64> {
    if particle >= x.nrows() {
        return Err(Error::invalid(
            "particle",
            format!("index {particle} out of range for {} particles", x.nrows()),
        ));
    }
    if !(h > 0.0) {
        return Err(Error::invalid("h", format!("{h} must be > 0")));
    }
    potential.validate()?;
    let count = x.nrows() as f64;
    let analytic = potential.intrinsic_derivative(x);
    let mut worst = 0.0f64;
    let mut work = x.to_owned();
    for j in 0..x.ncols() {
        let base = work[[particle, j]];
        work[[particle, j]] = base + h;
        let plus = potential.value(work.view());
        work[[particle, j]] = base - h;
        let minus = potential.value(work.view());
        work[[particle, j]] = base;
        let fd = count * (plus - minus) / (2.0 * h);
        let exact = analytic[[particle, j]];
        let rel = (fd - exact).abs() / exact.abs().max(1.0);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{init_ensemble, InitSpec};
    use approx::assert_abs_diff_eq;
    use ndarray::{concatenate, Axis};

    #[test]
    fn constructors_reject_bad_strengths() {
        assert!(Potential::quadratic(0.0).is_err());
        assert!(Potential::quadratic(-1.0).is_err());
        assert!(Potential::quadratic(f64::NAN).is_err());
        assert!(Potential::mean_attraction(1.0, f64::INFINITY).is_err());
        // Negative α (mean repulsion) is legitimate.
        assert!(Potential::mean_attraction(1.0, -0.5).is_ok());
    }

    #[test]
    fn mean_attraction_hand_value() {
        // Particles {0, 2} in 1-D, λ = α = 1: (1/2)·2 − (1/2)·1² = 0.5.
        let x = Array2::from_shape_vec((2, 1), vec![0.0, 2.0]).unwrap();
        let p = Potential::mean_attraction(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(p.value(x.view()), 0.5);
        // D_mF(x) = x − mean: at x=0 gives −1, at x=2 gives 1.
        let d = p.intrinsic_derivative(x.view());
        assert_abs_diff_eq!(d[[0, 0]], -1.0);
        assert_abs_diff_eq!(d[[1, 0]], 1.0);
    }

    #[test]
    fn quadratic_value_is_linear_under_concatenation() {
        let p = Potential::quadratic(1.3);
        let p = p.unwrap();
        let a = init_ensemble(&InitSpec::gaussian(0.0, 1.0, 0.0, 1.0, 5), 40, 2).unwrap();
        let b = init_ensemble(&InitSpec::gaussian(2.0, 0.5, 0.0, 1.0, 6), 60, 2).unwrap();
        let joined = concatenate(Axis(0), &[a.positions.view(), b.positions.view()]).unwrap();
        let expect = (40.0 * p.value(a.positions.view()) + 60.0 * p.value(b.positions.view())) / 100.0;
        assert_abs_diff_eq!(p.value(joined.view()), expect, epsilon = 1e-12);
    }

    #[test]
    fn mean_attraction_is_concave_along_mixtures() {
        // |mean|² is convex in m, so the −(α/2)|mean|² term makes
        // F(mix) ≥ mixture of F; equality only when the two means agree.
        let p = Potential::mean_attraction(1.0, 0.8).unwrap();
        let a = init_ensemble(&InitSpec::gaussian(-1.0, 1.0, 0.0, 1.0, 7), 50, 2).unwrap();
        let b = init_ensemble(&InitSpec::gaussian(3.0, 1.0, 0.0, 1.0, 8), 50, 2).unwrap();
        let joined = concatenate(Axis(0), &[a.positions.view(), b.positions.view()]).unwrap();
        let mixture = 0.5 * p.value(a.positions.view()) + 0.5 * p.value(b.positions.view());
        assert!(p.value(joined.view()) >= mixture - 1e-12);
    }

    #[test]
    fn mean_drift_has_effective_strength_lambda_minus_alpha() {
        // Averaging D_mF over the ensemble collapses the interaction to
        // (λ − α)·mean, the linearized restoring force on the barycenter.
        for (lambda, alpha) in [(1.0, 0.5), (1.0, 1.5), (2.0, 2.0)] {
            let p = Potential::mean_attraction(lambda, alpha).unwrap();
            let e = init_ensemble(&InitSpec::gaussian(1.0, 2.0, 0.0, 1.0, 9), 200, 3).unwrap();
            let d = p.intrinsic_derivative(e.positions.view());
            let mean_x = e.positions.mean_axis(Axis(0)).unwrap();
            let mean_d = d.mean_axis(Axis(0)).unwrap();
            for j in 0..3 {
                assert_abs_diff_eq!(mean_d[j], (lambda - alpha) * mean_x[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fd_matches_intrinsic_derivative() {
        let e = init_ensemble(&InitSpec::gaussian(0.3, 1.0, 0.0, 1.0, 12), 25, 2).unwrap();
        for p in [
            Potential::quadratic(1.7).unwrap(),
            Potential::mean_attraction(1.2, 0.6).unwrap(),
            Potential::mean_attraction(1.0, -0.9).unwrap(),
        ] {
            for i in [0usize, 7, 24] {
                let err = fd_consistency_check(&p, e.positions.view(), i, 1e-5).unwrap();
                assert!(err < 1e-9, "{p:?} particle {i}: rel err {err}");
            }
        }
    }

    #[test]
    fn fd_check_rejects_bad_arguments() {
        let e = init_ensemble(&InitSpec::gaussian(0.0, 1.0, 0.0, 1.0, 1), 5, 1).unwrap();
        let p = Potential::quadratic(1.0).unwrap();
        assert!(fd_consistency_check(&p, e.positions.view(), 5, 1e-5).is_err());
        assert!(fd_consistency_check(&p, e.positions.view(), 0, 0.0).is_err());
    }
}
