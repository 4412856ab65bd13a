//! Composite Simpson quadrature and the integral features `∫ φ_m(t) x(t) dt`.

use serde::{Deserialize, Serialize};

use crate::basis::{BasisSystem, Domain, FunctionalObservation, Grid};
use crate::error::{Error, Result};

/// Point count used when an observation grid cannot be reused for Simpson's rule.
pub const DEFAULT_QUADRATURE_POINTS: usize = 101;

/// Composite Simpson weights on a uniform grid with an odd number of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    grid: Grid,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn domain(&self) -> Domain {
        self.grid.span()
    }

    /// `Σ_p w_p · values_p`.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a rule with {} points",
                values.len(),
                self.weights.len()
            )));
        }
        Ok(self.weights.iter().zip(values).map(|(w, v)| w * v).sum())
    }

    /// Reuses `grid` when it is uniform, has an odd point count and spans `domain`;
    /// otherwise falls back to a uniform rule with [`DEFAULT_QUADRATURE_POINTS`].
    pub fn for_grid(domain: Domain, grid: &Grid) -> Result<Self> {
        let slack = 1e-10 * domain.length();
        let spans = (grid.first() - domain.start).abs() <= slack
            && (grid.last() - domain.end).abs() <= slack;
        if spans && grid.len() % 2 == 1 && grid.is_uniform() {
            simpson_rule(domain, grid.len())
        } else {
            simpson_rule(domain, DEFAULT_QUADRATURE_POINTS)
        }
    }
}

/// Composite Simpson's rule on `n_points` equally spaced points of `domain`.
pub fn simpson_rule(domain: Domain, n_points: usize) -> Result<QuadratureRule> {
    if n_points < 3 || n_points.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "Simpson's rule needs an odd number of points >= 3, got {n_points}"
        )));
    }
    let grid = Grid::uniform(domain, n_points)?;
    let h = domain.length() / (n_points - 1) as f64;
    let weights = (0..n_points)
        .map(|p| {
            let pattern = if p == 0 || p == n_points - 1 {
                1.0
            } else if p % 2 == 1 {
                4.0
            } else {
                2.0
            };
            pattern * h / 3.0
        })
        .collect();
    Ok(QuadratureRule { grid, weights })
}

/// `J_m = ∫ φ_m(t) x(t) dt` for every function of `weight_basis`.
pub fn integral_features(
    x: &FunctionalObservation,
    weight_basis: &BasisSystem,
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    let x_domain = x.basis().domain();
    let w_domain = weight_basis.domain();
    let tol = 1e-12 * w_domain.length();
    if (x_domain.start - w_domain.start).abs() > tol || (x_domain.end - w_domain.end).abs() > tol
    {
        return Err(Error::DimensionMismatch(format!(
            "curve domain [{}, {}] differs from weight domain [{}, {}]",
            x_domain.start, x_domain.end, w_domain.start, w_domain.end
        )));
    }
    let r_domain = rule.domain();
    if (r_domain.start - w_domain.start).abs() > tol || (r_domain.end - w_domain.end).abs() > tol {
        return Err(Error::DimensionMismatch(
            "quadrature rule does not cover the weight domain".into(),
        ));
    }
    let tables = FeatureTables::new(x.basis(), weight_basis, rule)?;
    Ok(tables.features(x.coefficients()))
}

/// Basis values of a curve family and of a weight family on a quadrature grid.
///
/// [`integral_features`] and the cached feature extraction both go through
/// [`FeatureTables::features`], so their results agree bit for bit.
#[derive(Debug, Clone)]
pub(crate) struct FeatureTables {
    curve_phi: nalgebra::DMatrix<f64>,
    weight_phi: nalgebra::DMatrix<f64>,
    rule: QuadratureRule,
}

impl FeatureTables {
    pub(crate) fn new(
        curve_basis: &BasisSystem,
        weight_basis: &BasisSystem,
        rule: &QuadratureRule,
    ) -> Result<Self> {
        Ok(Self {
            curve_phi: curve_basis.eval(rule.grid())?,
            weight_phi: weight_basis.eval(rule.grid())?,
            rule: rule.clone(),
        })
    }

    pub(crate) fn features(&self, coefficients: &[f64]) -> Vec<f64> {
        let n_points = self.curve_phi.nrows();
        let curve: Vec<f64> = (0..n_points)
            .map(|p| {
                self.curve_phi
                    .row(p)
                    .iter()
                    .zip(coefficients)
                    .map(|(phi, c)| phi * c)
                    .sum()
            })
            .collect();
        (0..self.weight_phi.ncols())
            .map(|m| {
                let product: Vec<f64> = self
                    .weight_phi
                    .column(m)
                    .iter()
                    .zip(&curve)
                    .map(|(phi, v)| phi * v)
                    .collect();
                self.rule.integrate(&product).expect("tables share the rule grid")
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn values(rule: &QuadratureRule, f: impl Fn(f64) -> f64) -> Vec<f64> {
        rule.grid().points().iter().map(|&t| f(t)).collect()
    }

    #[test]
    fn one_panel_weights() {
        let r = simpson_rule(Domain::unit(), 3).unwrap();
        let expected = [1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0];
        for (w, e) in r.weights().iter().zip(expected) {
            assert_abs_diff_eq!(*w, e, epsilon = 1e-16);
        }
    }

    #[test]
    fn weights_sum_to_length() {
        for (a, b, n) in [(0.0, 1.0, 3), (-2.0, 5.0, 101), (75.0, 100.0, 201)] {
            let r = simpson_rule(Domain::new(a, b).unwrap(), n).unwrap();
            assert_abs_diff_eq!(r.weights().iter().sum::<f64>(), b - a, epsilon = 1e-12);
            assert_abs_diff_eq!(r.integrate(&vec![1.0; n]).unwrap(), b - a, epsilon = 1e-12);
        }
    }

    #[test]
    fn exact_for_cubics() {
        let r = simpson_rule(Domain::unit(), 3).unwrap();
        assert_abs_diff_eq!(r.integrate(&values(&r, |t| t.powi(3))).unwrap(), 0.25, epsilon = 1e-15);
        let r = simpson_rule(Domain::unit(), 11).unwrap();
        let quad = r.integrate(&values(&r, |t| 6.0 * t * t - 6.0 * t + 1.0)).unwrap();
        assert_abs_diff_eq!(quad, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn sine_integral() {
        let r = simpson_rule(Domain::unit(), 101).unwrap();
        let quad = r.integrate(&values(&r, |t| (PI * t).sin())).unwrap();
        assert_abs_diff_eq!(quad, 2.0 / PI, epsilon = 1e-8);
    }

    #[test]
    fn fourth_order_convergence() {
        let f = |t: f64| 3.0 * t.powi(4) - 2.0 * t.powi(3) + t - 0.5;
        let exact = 3.0 / 5.0 - 0.5 + 0.5 - 0.5;
        let errors: Vec<f64> = [11, 21, 41]
            .iter()
            .map(|&n| {
                let r = simpson_rule(Domain::unit(), n).unwrap();
                (r.integrate(&values(&r, f)).unwrap() - exact).abs()
            })
            .collect();
        // Halving h should divide the error by 2^4.
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 4.0).abs() < 0.1, "observed order {order}");
        }
    }

    #[test]
    fn rule_errors() {
        assert!(simpson_rule(Domain::unit(), 4).is_err());
        assert!(simpson_rule(Domain::unit(), 1).is_err());
        let r = simpson_rule(Domain::unit(), 5).unwrap();
        assert!(matches!(r.integrate(&[1.0; 4]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn grid_reuse_policy() {
        let d = Domain::unit();
        let odd = Grid::uniform(d, 51).unwrap();
        assert_eq!(QuadratureRule::for_grid(d, &odd).unwrap().grid().len(), 51);
        let even = Grid::uniform(d, 100).unwrap();
        assert_eq!(QuadratureRule::for_grid(d, &even).unwrap().grid().len(), 101);
        let uneven = Grid::new(vec![0.0, 0.1, 0.5, 0.7, 1.0]).unwrap();
        assert_eq!(QuadratureRule::for_grid(d, &uneven).unwrap().grid().len(), 101);
    }

    #[test]
    fn features_of_zero_and_constant() {
        let d = Domain::unit();
        let rule = simpson_rule(d, 101).unwrap();
        let wb = BasisSystem::fourier(d, 3).unwrap();
        let xb = BasisSystem::fourier(d, 5).unwrap();
        let zero = FunctionalObservation::zero(xb.clone());
        assert!(integral_features(&zero, &wb, &rule).unwrap().iter().all(|&j| j == 0.0));

        let one = FunctionalObservation::new(xb, vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let j = integral_features(&one, &wb, &rule).unwrap();
        assert_abs_diff_eq!(j[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(j[1], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(j[2], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn domain_mismatch_is_rejected() {
        let rule = simpson_rule(Domain::unit(), 11).unwrap();
        let x = FunctionalObservation::zero(BasisSystem::fourier(Domain::new(0.0, 2.0).unwrap(), 3).unwrap());
        let wb = BasisSystem::fourier(Domain::unit(), 3).unwrap();
        assert!(matches!(integral_features(&x, &wb, &rule), Err(Error::DimensionMismatch(_))));
    }

    proptest! {
        #[test]
        fn features_are_linear(
            f in proptest::collection::vec(-4.0f64..4.0, 7),
            g in proptest::collection::vec(-4.0f64..4.0, 7),
            a in -3.0f64..3.0,
        ) {
            let d = Domain::new(1.0, 4.0).unwrap();
            let xb = BasisSystem::bspline(d, 7, 4).unwrap();
            let wb = BasisSystem::legendre(d, 5).unwrap();
            let rule = simpson_rule(d, 101).unwrap();
            let combo: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + y).collect();
            let jf = integral_features(&FunctionalObservation::new(xb.clone(), f).unwrap(), &wb, &rule).unwrap();
            let jg = integral_features(&FunctionalObservation::new(xb.clone(), g).unwrap(), &wb, &rule).unwrap();
            let jc = integral_features(&FunctionalObservation::new(xb, combo).unwrap(), &wb, &rule).unwrap();
            for m in 0..5 {
                prop_assert!((jc[m] - (a * jf[m] + jg[m])).abs() < 1e-10);
            }
        }
    }
}
