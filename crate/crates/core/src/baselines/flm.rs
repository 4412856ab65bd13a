//! Penalized functional multinomial regression.
//!
//! Class `h` scores an observation as `α_h + Σ_k ∫ β_hk(t) x_k(t) dt + Σ_j w_hj z_j`,
//! with `β_hk` expanded in a weight basis so that the integrals reduce to the same
//! integral features the functional network uses. The objective is the mean
//! cross-entropy of the softmax of the scores plus `λ Σ_h c_hᵀ R c_h`, where
//! `R_{mm'} = ∫ φ''_m φ''_{m'} dt` penalizes curvature of each functional weight.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisKind, BasisSystem, Grid};
use crate::data::{Dataset, LabelMap};
use crate::error::{Error, Result};
use crate::fnn::{FeatureExtractor, Prediction, PROBABILITY_FLOOR};
use crate::quadrature::simpson_rule;

/// Quadrature points for the roughness penalty.
pub const PENALTY_POINTS: usize = 401;

/// Armijo sufficient-decrease constant.
const ARMIJO: f64 = 1e-4;

/// Extra full Newton steps taken after the gradient tolerance is met.
const POLISH_STEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlmSolver {
    /// Damped Newton steps with backtracking.
    Newton,
    /// Plain gradient descent with backtracking.
    GradientDescent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlmConfig {
    pub weight_basis: Vec<usize>,
    pub weight_basis_kind: BasisKind,
    pub lambda: f64,
    pub max_iter: usize,
    pub tolerance: f64,
    pub solver: FlmSolver,
    pub seed: u64,
}

impl Default for FlmConfig {
    fn default() -> Self {
        Self {
            weight_basis: vec![11],
            weight_basis_kind: BasisKind::Fourier,
            lambda: 0.0,
            max_iter: 10_000,
            tolerance: 1e-8,
            solver: FlmSolver::Newton,
            seed: 0,
        }
    }
}

/// Default penalty grid searched when tuning.
pub const DEFAULT_LAMBDA_GRID: [f64; 6] = [0.0, 1e-6, 1e-4, 1e-2, 1.0, 100.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub objective: f64,
    pub converged: bool,
    /// Objective value after every accepted step, starting from the initial point.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlmModel {
    pub extractor: FeatureExtractor,
    pub label_map: LabelMap,
    pub lambda: f64,
    /// `H × (1 + Σ M_k + J)`: intercept, functional coefficients, scalar weights.
    pub coefficients: DMatrix<f64>,
    /// `(Σ M_k + J)`-square penalty (zero on the scalar block).
    pub penalty: DMatrix<f64>,
    pub diagnostics: FitDiagnostics,
}

/// `R_{mm'} = ∫ φ''_m(t) φ''_{m'}(t) dt` by Simpson's rule on [`PENALTY_POINTS`] points.
pub fn roughness_penalty(basis: &BasisSystem) -> Result<DMatrix<f64>> {
    let rule = simpson_rule(basis.domain(), PENALTY_POINTS)?;
    let d2 = basis.eval_derivative(rule.grid(), 2)?;
    let w = DVector::from_column_slice(rule.weights());
    let weighted = DMatrix::from_fn(d2.nrows(), d2.ncols(), |p, m| w[p] * d2[(p, m)]);
    let r = d2.tr_mul(&weighted);
    Ok((&r + r.transpose()) * 0.5)
}

/// Objective pieces for a fixed design.
struct Problem<'a> {
    /// `(1 + d) × N` design with a leading row of ones.
    design: &'a DMatrix<f64>,
    labels: &'a [usize],
    n_classes: usize,
    /// `(1 + d)`-square penalty padded with a zero row/column for the intercept.
    penalty: DMatrix<f64>,
    lambda: f64,
}

impl Problem<'_> {
    fn probabilities(&self, theta: &DMatrix<f64>) -> DMatrix<f64> {
        crate::fnn::softmax_columns(&(theta * self.design))
    }

    fn objective(&self, theta: &DMatrix<f64>) -> f64 {
        let probs = self.probabilities(theta);
        let n = self.labels.len() as f64;
        let ce: f64 = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -probs[(l, i)].max(PROBABILITY_FLOOR).ln())
            .sum::<f64>()
            / n;
        let pen: f64 = (0..self.n_classes)
            .map(|h| {
                let row = theta.row(h).transpose();
                (row.transpose() * &self.penalty * &row)[(0, 0)]
            })
            .sum();
        ce + self.lambda * pen
    }

    fn gradient(&self, theta: &DMatrix<f64>, probs: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.labels.len() as f64;
        let mut resid = probs.clone();
        for (i, &l) in self.labels.iter().enumerate() {
            resid[(l, i)] -= 1.0;
        }
        let mut g = resid * self.design.transpose() / n;
        if self.lambda > 0.0 {
            g += theta * &self.penalty * (2.0 * self.lambda);
        }
        g
    }

    /// Hessian over `vec(Θ)` with index `h·(1+d) + j`.
    fn hessian(&self, probs: &DMatrix<f64>) -> DMatrix<f64> {
        let h_count = self.n_classes;
        let p = self.design.nrows();
        let n = self.labels.len();
        let mut hess = DMatrix::zeros(h_count * p, h_count * p);
        for i in 0..n {
            let x = self.design.column(i);
            let xxt = x * x.transpose();
            for a in 0..h_count {
                for b in 0..h_count {
                    let pa = probs[(a, i)];
                    let coef = pa * (if a == b { 1.0 } else { 0.0 } - probs[(b, i)]);
                    if coef != 0.0 {
                        let mut blk = hess.view_mut((a * p, b * p), (p, p));
                        blk += &xxt * coef;
                    }
                }
            }
        }
        hess /= n as f64;
        for a in 0..h_count {
            let mut blk = hess.view_mut((a * p, a * p), (p, p));
            blk += &self.penalty * (2.0 * self.lambda);
        }
        hess
    }
}

fn flatten(theta: &DMatrix<f64>) -> DVector<f64> {
    // Row-major: class blocks are contiguous.
    DVector::from_iterator(theta.len(), theta.transpose().iter().copied())
}

fn unflatten(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, v.as_slice())
}

/// Solves `(A + τI) x = b` after symmetric diagonal scaling, raising `τ` until the
/// Cholesky factorization succeeds.
fn damped_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = a.nrows();
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let d = a[(i, i)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * scale[i] * scale[j]);
    let rhs = DVector::from_fn(n, |i, _| b[i] * scale[i]);
    let mut tau = 1e-12;
    while tau < 1e6 {
        let mut m = scaled.clone();
        for i in 0..n {
            m[(i, i)] += tau;
        }
        if let Some(chol) = m.cholesky() {
            let y = chol.solve(&rhs);
            return Some(DVector::from_fn(n, |i, _| y[i] * scale[i]));
        }
        tau *= 10.0;
    }
    None
}

/// Fits the penalized multinomial model on `data`.
///
/// Non-convergence is not an error: the returned diagnostics carry the final gradient
/// norm and a warning is logged.
pub fn fit_flm(data: &Dataset, config: &FlmConfig) -> Result<FlmModel> {
    if !(config.lambda.is_finite() && config.lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {}", config.lambda)));
    }
    if config.max_iter == 0 {
        return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
    }
    let sizes = match config.weight_basis.len() {
        _ if data.n_functional() == 0 => Vec::new(),
        1 => vec![config.weight_basis[0]; data.n_functional()],
        n if n == data.n_functional() => config.weight_basis.clone(),
        n => {
            return Err(Error::InvalidConfig(format!(
                "{n} weight basis sizes for {} functional covariates",
                data.n_functional()
            )))
        }
    };
    let extractor = FeatureExtractor::new(data, &sizes, config.weight_basis_kind)?;
    let features = extractor.extract(data)?;
    let d = features.nrows();
    let n = data.len();

    let mut penalty = DMatrix::zeros(d, d);
    let mut offset = 0;
    for input in extractor.covariates() {
        let m = input.weight_basis.n_basis();
        if config.lambda > 0.0 {
            penalty
                .view_mut((offset, offset), (m, m))
                .copy_from(&roughness_penalty(&input.weight_basis)?);
        }
        offset += m;
    }
    let mut padded = DMatrix::zeros(d + 1, d + 1);
    padded.view_mut((1, 1), (d, d)).copy_from(&penalty);

    let mut design = DMatrix::from_element(d + 1, n, 1.0);
    design.rows_mut(1, d).copy_from(&features);

    let h = data.n_classes();
    let problem = Problem {
        design: &design,
        labels: data.labels(),
        n_classes: h,
        penalty: padded,
        lambda: config.lambda,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 0.01).expect("valid normal");
    let mut theta = DMatrix::from_fn(h, d + 1, |_, _| normal.sample(&mut rng));
    let mut objective = problem.objective(&theta);
    let mut trace = vec![objective];
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    let mut gd_step = 1.0;

    while iterations < config.max_iter {
        let probs = problem.probabilities(&theta);
        let grad = problem.gradient(&theta, &probs);
        grad_norm = grad.norm();
        if !grad_norm.is_finite() {
            return Err(Error::NonFinite("FLM gradient".into()));
        }
        if grad_norm < config.tolerance {
            converged = true;
            break;
        }
        let g = flatten(&grad);
        let (direction, mut t) = match config.solver {
            FlmSolver::Newton => match damped_solve(&problem.hessian(&probs), &g) {
                Some(s) => (-s, 1.0),
                None => (-g.clone(), gd_step),
            },
            FlmSolver::GradientDescent => (-g.clone(), gd_step),
        };
        let slope = g.dot(&direction);
        let base = flatten(&theta);
        let mut accepted = None;
        while t > 1e-20 {
            let candidate = unflatten(&(&base + &direction * t), h, d + 1);
            let value = problem.objective(&candidate);
            if value <= objective + ARMIJO * t * slope {
                accepted = Some((candidate, value));
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((candidate, value)) => {
                theta = candidate;
                objective = value;
                trace.push(value);
                gd_step = (t * 2.0).min(1e6);
            }
            None => break,
        }
    }
    if !converged {
        let probs = problem.probabilities(&theta);
        grad_norm = problem.gradient(&theta, &probs).norm();
        converged = grad_norm < config.tolerance;
    }
    if converged && config.solver == FlmSolver::Newton {
        // Near the optimum full Newton steps converge quadratically; take a few while
        // they keep reducing both the gradient and the objective.
        for _ in 0..POLISH_STEPS {
            let probs = problem.probabilities(&theta);
            let g = flatten(&problem.gradient(&theta, &probs));
            let Some(s) = damped_solve(&problem.hessian(&probs), &g) else { break };
            let candidate = unflatten(&(flatten(&theta) - s), h, d + 1);
            let value = problem.objective(&candidate);
            let cand_norm = problem.gradient(&candidate, &problem.probabilities(&candidate)).norm();
            if !(cand_norm < grad_norm && value <= objective) {
                break;
            }
            theta = candidate;
            objective = value;
            grad_norm = cand_norm;
            trace.push(value);
        }
    }
    if !converged {
        warn!(
            "functional linear model did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})"
        );
    }

    Ok(FlmModel {
        extractor,
        label_map: data.label_map().clone(),
        lambda: config.lambda,
        coefficients: theta,
        penalty,
        diagnostics: FitDiagnostics {
            iterations,
            gradient_norm: grad_norm,
            objective,
            converged,
            objective_trace: trace,
        },
    })
}

impl FlmModel {
    pub fn predict(&self, data: &Dataset) -> Result<Prediction> {
        let features = self.extractor.extract(data)?;
        let d = features.nrows();
        if d + 1 != self.coefficients.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} features, data yields {d}",
                self.coefficients.ncols() - 1
            )));
        }
        let mut design = DMatrix::from_element(d + 1, data.len(), 1.0);
        design.rows_mut(1, d).copy_from(&features);
        let probs = crate::fnn::softmax_columns(&(&self.coefficients * design));
        Ok(Prediction::from_probabilities(probs.transpose()))
    }

    /// Functional weight of class `h` for covariate `k` evaluated on `grid`.
    pub fn functional_weight(&self, h: usize, k: usize, grid: &Grid) -> Result<Vec<f64>> {
        let input = self
            .extractor
            .covariates()
            .get(k)
            .ok_or_else(|| Error::InvalidArgument(format!("functional covariate {k} does not exist")))?;
        if h >= self.coefficients.nrows() {
            return Err(Error::InvalidArgument(format!("class {h} does not exist")));
        }
        let start = 1 + self.extractor.layout().functional_range(k).start;
        let m = input.weight_basis.n_basis();
        let c: Vec<f64> = (0..m).map(|j| self.coefficients[(h, start + j)]).collect();
        let phi = input.weight_basis.eval(grid)?;
        Ok(phi
            .row_iter()
            .map(|row| row.iter().zip(&c).map(|(p, c)| p * c).sum())
            .collect())
    }

    pub fn n_params(&self) -> usize {
        self.coefficients.len()
    }
}

/// Free-function form of [`FlmModel::predict`].
pub fn predict_flm(model: &FlmModel, data: &Dataset) -> Result<Prediction> {
    model.predict(data)
}
