//! Synthetic functional data: truncated Karhunen-Loève curves and three two-class
//! scenarios.
//!
//! Curves are `f_i(t) = Σ_m ξ_im φ_m(t)` with `ξ_im ~ N(0, 1/m)` and `φ_m` the functions
//! of the named basis as [`BasisSystem`] defines them. Noise is a `U(0,1)` draw per curve
//! added to every sampled value, or per point when requested.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisKind, BasisSystem, Domain, Grid, DEFAULT_SPLINE_ORDER};
use crate::data::{Dataset, FunctionalCovariate};
use crate::error::{Error, Result};

/// Default number of grid points on `[0, 1]`.
pub const DEFAULT_GRID_POINTS: usize = 100;
/// Default number of Karhunen-Loève terms.
pub const DEFAULT_KL_TERMS: usize = 35;
/// Default size of the Fourier basis used to smooth generated curves.
pub const DEFAULT_SMOOTHING_TERMS: usize = 35;
/// Class-0 amplitude relative to class 1 in scenario 3.
pub const AMPLITUDE_RATIO: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// One `U(0,1)` shift per curve.
    PerCurve,
    /// An independent `U(0,1)` draw at every grid point.
    PerPoint,
    /// No noise.
    None,
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "per_curve" | "per-curve" | "curve" => Ok(Self::PerCurve),
            "per_point" | "per-point" | "point" => Ok(Self::PerPoint),
            "none" | "off" => Ok(Self::None),
            other => Err(Error::InvalidArgument(format!("unknown noise mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Fourier (class 0) versus Legendre (class 1) Karhunen-Loève curves.
    #[serde(rename = "1")]
    BasisFamily,
    /// Scenario-1 curves passed through `f ↦ sin(2πf)`.
    #[serde(rename = "2")]
    Sinusoidal,
    /// Phase-shifted sines whose amplitudes differ between the classes.
    #[serde(rename = "3")]
    Amplitude,
}

impl Scenario {
    pub fn number(self) -> u8 {
        match self {
            Self::BasisFamily => 1,
            Self::Sinusoidal => 2,
            Self::Amplitude => 3,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Self::BasisFamily),
            2 => Ok(Self::Sinusoidal),
            3 => Ok(Self::Amplitude),
            _ => Err(Error::InvalidArgument(format!("scenario must be 1, 2 or 3, got {n}"))),
        }
    }
}

/// Everything needed to regenerate one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub grid: Grid,
    pub kl_terms: usize,
    pub smoothing_terms: usize,
    pub noise: NoiseMode,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, n: usize, seed: u64) -> Self {
        Self {
            scenario,
            n,
            grid: Grid::uniform(Domain::unit(), DEFAULT_GRID_POINTS).expect("valid default grid"),
            kl_terms: DEFAULT_KL_TERMS,
            smoothing_terms: DEFAULT_SMOOTHING_TERMS,
            noise: NoiseMode::PerCurve,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 observations, got {}", self.n)));
        }
        if !self.grid.is_uniform() {
            return Err(Error::InvalidGrid("simulation grids must be uniform".into()));
        }
        if self.kl_terms == 0 {
            return Err(Error::InvalidConfig("kl_terms must be at least 1".into()));
        }
        Ok(())
    }

    /// Raw `n × P` curves (noise included) and labels.
    pub fn generate_raw(&self) -> Result<(DMatrix<f64>, Vec<usize>)> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (mut raw, labels) = match self.scenario {
            Scenario::BasisFamily => basis_family_curves(self.n, self.kl_terms, &self.grid, &mut rng)?,
            Scenario::Sinusoidal => {
                let (mut raw, labels) = basis_family_curves(self.n, self.kl_terms, &self.grid, &mut rng)?;
                raw.apply(|f| *f = (2.0 * PI * *f).sin());
                (raw, labels)
            }
            Scenario::Amplitude => amplitude_curves(self.n, &self.grid, &mut rng),
        };
        add_noise_with(&mut raw, self.noise, &mut rng);
        Ok((raw, labels))
    }

    /// Generated curves smoothed onto a Fourier basis of `smoothing_terms` functions.
    pub fn generate(&self) -> Result<Dataset> {
        let (raw, labels) = self.generate_raw()?;
        let basis = BasisSystem::fourier(self.grid.span(), self.smoothing_terms)?;
        let cov = FunctionalCovariate::from_raw("x", self.grid.clone(), raw, basis)?;
        Dataset::functional_only(vec![cov], labels, 2)
    }
}

pub fn scenario1(n: usize, seed: u64) -> Result<Dataset> {
    ScenarioSpec::new(Scenario::BasisFamily, n, seed).generate()
}

pub fn scenario2(n: usize, seed: u64) -> Result<Dataset> {
    ScenarioSpec::new(Scenario::Sinusoidal, n, seed).generate()
}

pub fn scenario3(n: usize, seed: u64) -> Result<Dataset> {
    ScenarioSpec::new(Scenario::Amplitude, n, seed).generate()
}

fn basis_matrix(kind: BasisKind, m: usize, grid: &Grid) -> Result<DMatrix<f64>> {
    let domain = grid.span();
    let basis = match kind {
        BasisKind::Fourier => BasisSystem::fourier(domain, m)?,
        BasisKind::Legendre => BasisSystem::legendre(domain, m)?,
        BasisKind::BSpline => BasisSystem::bspline(domain, m, DEFAULT_SPLINE_ORDER.min(m))?,
    };
    basis.eval(grid)
}

fn score_distributions(m: usize) -> Vec<Normal<f64>> {
    (1..=m)
        .map(|k| Normal::new(0.0, (1.0 / k as f64).sqrt()).expect("positive variance"))
        .collect()
}

fn kl_curve(phi: &DMatrix<f64>, scores: &[Normal<f64>], rng: &mut impl Rng) -> Vec<f64> {
    let xi: Vec<f64> = scores.iter().map(|d| d.sample(rng)).collect();
    phi.row_iter()
        .map(|row| row.iter().zip(&xi).map(|(p, x)| p * x).sum())
        .collect()
}

/// `n × P` matrix of Karhunen-Loève curves with `ξ_m ~ N(0, 1/m)`.
pub fn generate_kl(n: usize, kind: BasisKind, m: usize, grid: &Grid, seed: u64) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(Error::InvalidArgument("at least one Karhunen-Loève term is required".into()));
    }
    let phi = basis_matrix(kind, m, grid)?;
    let scores = score_distributions(m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = DMatrix::zeros(n, grid.len());
    for i in 0..n {
        let curve = kl_curve(&phi, &scores, &mut rng);
        raw.row_mut(i).copy_from_slice(&curve);
    }
    Ok(raw)
}

fn basis_family_curves(
    n: usize,
    m: usize,
    grid: &Grid,
    rng: &mut impl Rng,
) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let fourier_terms = if m % 2 == 1 { m } else { m + 1 };
    let fourier = basis_matrix(BasisKind::Fourier, fourier_terms, grid)?;
    let legendre = basis_matrix(BasisKind::Legendre, m, grid)?;
    let fourier_scores = score_distributions(fourier_terms);
    let legendre_scores = score_distributions(m);
    let mut raw = DMatrix::zeros(n, grid.len());
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let u: f64 = rng.random();
        let curve = if u > 0.5 {
            labels.push(1);
            kl_curve(&legendre, &legendre_scores, rng)
        } else {
            labels.push(0);
            kl_curve(&fourier, &fourier_scores, rng)
        };
        raw.row_mut(i).copy_from_slice(&curve);
    }
    Ok((raw, labels))
}

/// Class 1: `sin(2πs + ψ)`; class 0: `0.6 sin(2πs + ψ)`, with `ψ ~ U(0, 2π)` and `s`
/// the grid position rescaled to `[0, 1]`.
fn amplitude_curves(n: usize, grid: &Grid, rng: &mut impl Rng) -> (DMatrix<f64>, Vec<usize>) {
    let span = grid.span();
    let s: Vec<f64> = grid
        .points()
        .iter()
        .map(|t| (t - span.start) / span.length())
        .collect();
    let mut raw = DMatrix::zeros(n, grid.len());
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let u: f64 = rng.random();
        let label = usize::from(u > 0.5);
        let amplitude = if label == 1 { 1.0 } else { AMPLITUDE_RATIO };
        let phase = rng.random_range(0.0..2.0 * PI);
        labels.push(label);
        for (p, &sp) in s.iter().enumerate() {
            raw[(i, p)] = amplitude * (2.0 * PI * sp + phase).sin();
        }
    }
    (raw, labels)
}

fn add_noise_with(raw: &mut DMatrix<f64>, mode: NoiseMode, rng: &mut impl Rng) {
    match mode {
        NoiseMode::None => {}
        NoiseMode::PerCurve => {
            for mut row in raw.row_iter_mut() {
                let shift: f64 = rng.random();
                row.add_scalar_mut(shift);
            }
        }
        NoiseMode::PerPoint => {
            for i in 0..raw.nrows() {
                for p in 0..raw.ncols() {
                    raw[(i, p)] += rng.random::<f64>();
                }
            }
        }
    }
}

/// Returns `raw` plus `U(0,1)` noise drawn under `seed`.
pub fn add_noise(raw: &DMatrix<f64>, mode: NoiseMode, seed: u64) -> DMatrix<f64> {
    let mut out = raw.clone();
    add_noise_with(&mut out, mode, &mut ChaCha8Rng::seed_from_u64(seed));
    out
}
