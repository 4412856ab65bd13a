//! Basis systems for representing curves on a closed interval.
//!
//! Three families are provided: the unnormalized Fourier family
//! `{1, sin(2πr·s), cos(2πr·s)}` with `s = (t − a)/(b − a)`, clamped B-splines with
//! equally spaced interior knots, and shifted Legendre polynomials. Curves sampled on a
//! [`Grid`] are turned into [`FunctionalObservation`]s by ordinary least squares.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack allowed when checking that a point lies inside a domain.
const DOMAIN_SLACK: f64 = 1e-10;

/// A closed interval `[start, end]` with `start < end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub start: f64,
    pub end: f64,
}

impl Domain {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start < end) {
            return Err(Error::InvalidDomain { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn unit() -> Self {
        Self { start: 0.0, end: 1.0 }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// Maps `t` to `[0, 1]`, clamping points that sit within rounding distance of an end.
    fn normalize(&self, t: f64) -> Result<f64> {
        let slack = DOMAIN_SLACK * self.length();
        if !t.is_finite() || t < self.start - slack || t > self.end + slack {
            return Err(Error::OutsideDomain {
                t,
                start: self.start,
                end: self.end,
            });
        }
        Ok(((t - self.start) / self.length()).clamp(0.0, 1.0))
    }

    fn clamp(&self, t: f64) -> Result<f64> {
        Ok(self.start + self.normalize(t)? * self.length())
    }
}

/// A strictly increasing sequence of at least three sample points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 points, got {}",
                points.len()
            )));
        }
        if let Some(bad) = points.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite point {bad}")));
        }
        if let Some(w) = points.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "points must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { points })
    }

    /// `n` equally spaced points from `start` to `end`, both ends included exactly.
    pub fn uniform(domain: Domain, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 points, got {n}")));
        }
        let step = domain.length() / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|p| domain.start + p as f64 * step).collect();
        points[n - 1] = domain.end;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.points[0]
    }

    pub fn last(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// The smallest domain containing every point.
    pub fn span(&self) -> Domain {
        Domain {
            start: self.first(),
            end: self.last(),
        }
    }

    /// True when consecutive spacings agree to a relative tolerance of `1e-9`.
    pub fn is_uniform(&self) -> bool {
        let h = (self.last() - self.first()) / (self.len() - 1) as f64;
        self.points
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h)
    }

    /// Number of distinct points once values closer than `1e-12` (relative) are merged.
    fn distinct_count(&self) -> usize {
        let scale = (self.last() - self.first()).abs().max(1.0);
        1 + self
            .points
            .windows(2)
            .filter(|w| w[1] - w[0] > 1e-12 * scale)
            .count()
    }
}

impl TryFrom<Vec<f64>> for Grid {
    type Error = Error;

    fn try_from(points: Vec<f64>) -> Result<Self> {
        Grid::new(points)
    }
}

impl From<Grid> for Vec<f64> {
    fn from(grid: Grid) -> Self {
        grid.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Fourier,
    #[serde(rename = "bspline")]
    BSpline,
    Legendre,
}

impl std::fmt::Display for BasisKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BasisKind::Fourier => "fourier",
            BasisKind::BSpline => "bspline",
            BasisKind::Legendre => "legendre",
        })
    }
}

impl std::str::FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fourier" => Ok(BasisKind::Fourier),
            "bspline" | "b-spline" => Ok(BasisKind::BSpline),
            "legendre" | "polynomial" => Ok(BasisKind::Legendre),
            other => Err(Error::InvalidBasis(format!("unknown basis kind '{other}'"))),
        }
    }
}

pub const DEFAULT_SPLINE_ORDER: usize = 4;

/// A family of `n_basis` functions on a closed interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSystem {
    kind: BasisKind,
    domain: Domain,
    n_basis: usize,
    order: usize,
}

impl BasisSystem {
    /// Builds a basis. `order` only matters for B-splines.
    pub fn new(kind: BasisKind, domain: Domain, n_basis: usize, order: usize) -> Result<Self> {
        let domain = Domain::new(domain.start, domain.end)?;
        if n_basis == 0 {
            return Err(Error::InvalidBasis("n_basis must be at least 1".into()));
        }
        match kind {
            BasisKind::Fourier if n_basis.is_multiple_of(2) => {
                return Err(Error::InvalidBasis(format!(
                    "a Fourier basis needs an odd number of functions, got {n_basis}"
                )))
            }
            BasisKind::BSpline if order == 0 => {
                return Err(Error::InvalidBasis("B-spline order must be at least 1".into()))
            }
            BasisKind::BSpline if n_basis < order => {
                return Err(Error::InvalidBasis(format!(
                    "a B-spline basis of order {order} needs at least {order} functions, got {n_basis}"
                )))
            }
            _ => {}
        }
        let order = if kind == BasisKind::BSpline { order } else { 0 };
        Ok(Self {
            kind,
            domain,
            n_basis,
            order,
        })
    }

    pub fn fourier(domain: Domain, n_basis: usize) -> Result<Self> {
        Self::new(BasisKind::Fourier, domain, n_basis, 0)
    }

    pub fn bspline(domain: Domain, n_basis: usize, order: usize) -> Result<Self> {
        Self::new(BasisKind::BSpline, domain, n_basis, order)
    }

    pub fn legendre(domain: Domain, n_basis: usize) -> Result<Self> {
        Self::new(BasisKind::Legendre, domain, n_basis, 0)
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    /// Spline order (degree + 1); zero for the other families.
    pub fn order(&self) -> usize {
        self.order
    }

    /// The same family and size on another domain.
    pub fn with_domain(&self, domain: Domain) -> Result<Self> {
        Self::new(self.kind, domain, self.n_basis, self.order)
    }

    /// Full clamped knot vector (length `n_basis + order`) of a B-spline basis.
    pub fn knots(&self) -> Vec<f64> {
        debug_assert_eq!(self.kind, BasisKind::BSpline);
        let k = self.order;
        let interior = self.n_basis - k;
        let Domain { start, end } = self.domain;
        let step = (end - start) / (interior + 1) as f64;
        let mut knots = vec![start; k];
        knots.extend((1..=interior).map(|j| start + j as f64 * step));
        knots.extend(std::iter::repeat_n(end, k));
        knots
    }

    /// Values of every basis function at `t`.
    pub fn eval_point(&self, t: f64) -> Result<Vec<f64>> {
        let s = self.domain.normalize(t)?;
        let mut out = vec![0.0; self.n_basis];
        match self.kind {
            BasisKind::Fourier => fourier_values(s, &mut out),
            BasisKind::Legendre => legendre_values(2.0 * s - 1.0, &mut out),
            BasisKind::BSpline => {
                let t = self.domain.clamp(t)?;
                bspline_values(t, &self.knots(), self.order, &mut out)
            }
        }
        Ok(out)
    }

    /// The `P × M` matrix with entry `(p, m) = φ_m(t_p)`.
    pub fn eval(&self, grid: &Grid) -> Result<DMatrix<f64>> {
        self.eval_points(grid.points())
    }

    pub fn eval_points(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(points.len(), self.n_basis);
        for (p, &t) in points.iter().enumerate() {
            let row = self.eval_point(t)?;
            for (m, v) in row.into_iter().enumerate() {
                out[(p, m)] = v;
            }
        }
        Ok(out)
    }

    /// Maps coefficients in this basis to coefficients of the first derivative.
    ///
    /// Returns the target basis and the matrix `D` such that `c' = D c`.
    pub fn differentiation(&self) -> Result<(BasisSystem, DMatrix<f64>)> {
        let m = self.n_basis;
        match self.kind {
            BasisKind::Fourier => {
                let mut d = DMatrix::zeros(m, m);
                for r in 1..=(m - 1) / 2 {
                    let omega = 2.0 * PI * r as f64 / self.domain.length();
                    let (sin_idx, cos_idx) = (2 * r - 1, 2 * r);
                    d[(sin_idx, cos_idx)] = -omega;
                    d[(cos_idx, sin_idx)] = omega;
                }
                Ok((self.clone(), d))
            }
            BasisKind::Legendre => {
                // P_n' = Σ (2k + 1) P_k over k = n − 1, n − 3, …
                let scale = 2.0 / self.domain.length();
                let mut d = DMatrix::zeros(m, m);
                for n in 1..m {
                    let mut k = n as isize - 1;
                    while k >= 0 {
                        d[(k as usize, n)] = (2 * k + 1) as f64 * scale;
                        k -= 2;
                    }
                }
                Ok((self.clone(), d))
            }
            BasisKind::BSpline => {
                let k = self.order;
                if k < 2 {
                    return Err(Error::InvalidBasis(
                        "an order-1 B-spline is not differentiable".into(),
                    ));
                }
                let knots = self.knots();
                let target = BasisSystem::bspline(self.domain, m - 1, k - 1)?;
                let mut d = DMatrix::zeros(m - 1, m);
                for j in 0..m - 1 {
                    let w = (k - 1) as f64 / (knots[j + k] - knots[j + 1]);
                    d[(j, j + 1)] += w;
                    d[(j, j)] -= w;
                }
                Ok((target, d))
            }
        }
    }

    /// Target basis and coefficient map for the derivative of order `q ∈ {1, 2}`.
    pub fn derivative_map(&self, q: usize) -> Result<(BasisSystem, DMatrix<f64>)> {
        if !(1..=2).contains(&q) {
            return Err(Error::InvalidArgument(format!(
                "derivative order must be 1 or 2, got {q}"
            )));
        }
        if self.kind == BasisKind::BSpline && self.order <= q {
            return Err(Error::InvalidBasis(format!(
                "a B-spline of order {} has no derivative of order {q}",
                self.order
            )));
        }
        let (mut basis, mut map) = self.differentiation()?;
        for _ in 1..q {
            let (next, d) = basis.differentiation()?;
            map = d * map;
            basis = next;
        }
        Ok((basis, map))
    }

    /// The `P × M` matrix of `q`-th derivatives `φ_m^{(q)}(t_p)`.
    pub fn eval_derivative(&self, grid: &Grid, q: usize) -> Result<DMatrix<f64>> {
        let (target, map) = self.derivative_map(q)?;
        Ok(target.eval(grid)? * map)
    }
}

fn fourier_values(s: f64, out: &mut [f64]) {
    out[0] = 1.0;
    for r in 1..=(out.len() - 1) / 2 {
        let arg = 2.0 * PI * r as f64 * s;
        out[2 * r - 1] = arg.sin();
        out[2 * r] = arg.cos();
    }
}

fn legendre_values(x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for n in 1..out.len().saturating_sub(1) {
        let nf = n as f64;
        out[n + 1] = ((2.0 * nf + 1.0) * x * out[n] - nf * out[n - 1]) / (nf + 1.0);
    }
}

/// Cox–de Boor evaluation of all clamped B-spline basis functions at `t`.
fn bspline_values(t: f64, knots: &[f64], order: usize, out: &mut [f64]) {
    let n = out.len();
    let degree = order - 1;
    let span = if t >= knots[n] {
        n - 1
    } else {
        // Last index in [degree, n − 1] with knots[i] <= t.
        let mut i = degree;
        while i + 1 < n && knots[i + 1] <= t {
            i += 1;
        }
        i
    };

    let mut values = vec![0.0; order];
    let mut left = vec![0.0; order];
    let mut right = vec![0.0; order];
    values[0] = 1.0;
    for j in 1..=degree {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = values[r] / (right[r + 1] + left[j - r]);
            values[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        values[j] = saved;
    }
    for (r, v) in values.into_iter().enumerate() {
        out[span - degree + r] = v;
    }
}

/// One curve stored as coefficients against a basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalObservation {
    basis: BasisSystem,
    coefficients: Vec<f64>,
}

impl FunctionalObservation {
    pub fn new(basis: BasisSystem, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != basis.n_basis() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for a basis of {} functions",
                coefficients.len(),
                basis.n_basis()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("basis coefficients".into()));
        }
        Ok(Self {
            basis,
            coefficients,
        })
    }

    pub fn zero(basis: BasisSystem) -> Self {
        let coefficients = vec![0.0; basis.n_basis()];
        Self {
            basis,
            coefficients,
        }
    }

    pub fn basis(&self) -> &BasisSystem {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// `Σ_m c_m φ_m(t_p)` at every grid point.
    pub fn eval(&self, grid: &Grid) -> Result<Vec<f64>> {
        self.eval_points(grid.points())
    }

    pub fn eval_points(&self, points: &[f64]) -> Result<Vec<f64>> {
        points
            .iter()
            .map(|&t| {
                let phi = self.basis.eval_point(t)?;
                Ok(phi.iter().zip(&self.coefficients).map(|(p, c)| p * c).sum())
            })
            .collect()
    }

    /// The derivative of order `q ∈ {1, 2}` as a new observation.
    pub fn derivative(&self, q: usize) -> Result<Self> {
        let (basis, map) = self.basis.derivative_map(q)?;
        let coefficients = (map * DVector::from_column_slice(&self.coefficients))
            .iter()
            .copied()
            .collect();
        Ok(Self {
            basis,
            coefficients,
        })
    }
}

/// A least-squares projector from samples on a fixed grid to basis coefficients.
///
/// The QR factorization of the design matrix is computed once and reused for every curve.
#[derive(Debug, Clone)]
pub struct Smoother {
    basis: BasisSystem,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl Smoother {
    pub fn new(grid: &Grid, basis: &BasisSystem) -> Result<Self> {
        let m = basis.n_basis();
        let distinct = grid.distinct_count();
        if distinct < m {
            return Err(Error::RankDeficient(format!(
                "{distinct} distinct grid points cannot determine {m} coefficients"
            )));
        }
        let design = basis.eval(grid)?;
        let qr = design.qr();
        let (q, r) = (qr.q(), qr.r());
        let diag_max = r.diagonal().amax();
        if let Some(j) = (0..m).find(|&j| r[(j, j)].abs() <= 1e-10 * diag_max) {
            return Err(Error::RankDeficient(format!(
                "basis function {j} is linearly dependent on the others at the grid points"
            )));
        }
        Ok(Self {
            basis: basis.clone(),
            q,
            r,
        })
    }

    pub fn basis(&self) -> &BasisSystem {
        &self.basis
    }

    /// OLS coefficients for one sampled curve.
    pub fn smooth(&self, raw: &[f64]) -> Result<FunctionalObservation> {
        if raw.len() != self.q.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a grid of {} points",
                raw.len(),
                self.q.nrows()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("raw curve values".into()));
        }
        let qty = self.q.tr_mul(&DVector::from_column_slice(raw));
        let c = self
            .r
            .solve_upper_triangular(&qty)
            .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
        FunctionalObservation::new(self.basis.clone(), c.iter().copied().collect())
    }

    /// Smooths every row of an `N × P` matrix, returning `N × M` coefficients.
    pub fn smooth_rows(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if raw.ncols() != self.q.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples per curve for a grid of {} points",
                raw.ncols(),
                self.q.nrows()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("raw curve values".into()));
        }
        let qty = self.q.tr_mul(&raw.transpose());
        let c = self
            .r
            .solve_upper_triangular(&qty)
            .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
        Ok(c.transpose())
    }
}

/// Ordinary least-squares fit of one sampled curve.
pub fn smooth(raw: &[f64], grid: &Grid, basis: &BasisSystem) -> Result<FunctionalObservation> {
    Smoother::new(grid, basis)?.smooth(raw)
}
