//! Static coupling fluctuations: background rate, signal fluctuations and
//! signal-to-noise ratio for pair-product states.
//!
//! Atom `i < N/2` belongs to set S1 and is paired with atom `i + N/2`.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::fit::mean_and_stderr;
use crate::hilbert::CouplingConfig;
use crate::signal::{alpha_pair_closed_form, f_factor};
use crate::sse::realization_rng;
use crate::states::PairAmplitudes;
use crate::C64;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// `C_ij = ⟨δg̃_i δg̃_j⟩` over all `N` atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    c: DMatrix<f64>,
}

impl CorrelationMatrix {
    pub fn new(c: DMatrix<f64>) -> Result<Self> {
        if !c.is_square() || c.nrows() == 0 {
            return Err(invalid("correlation matrix must be square and non-empty"));
        }
        if c.iter().any(|x| !x.is_finite()) {
            return Err(invalid("correlation matrix has non-finite entries"));
        }
        if (&c - c.transpose()).amax() > SYMMETRY_TOL {
            return Err(Error::InconsistentCorrelation("matrix is not symmetric".into()));
        }
        let min = c.clone().symmetric_eigen().eigenvalues.min();
        if min < -PSD_TOL {
            return Err(Error::InconsistentCorrelation(format!(
                "matrix is not positive semidefinite (min eigenvalue {min:e})"
            )));
        }
        Ok(Self { c })
    }

    /// Numeric grid, one row per line, comma or whitespace separated. A
    /// non-numeric first row is taken as a header; `#` lines are skipped.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> = line
                .split(|ch: char| ch == ',' || ch.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(str::parse::<f64>)
                .collect();
            match parsed {
                Ok(row) => rows.push(row),
                Err(_) if rows.is_empty() => continue,
                Err(e) => return Err(Error::Parse(format!("line {}: {e}", k + 1))),
            }
        }
        let n = rows.len();
        if n == 0 {
            return Err(Error::Parse("no numeric rows".into()));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::Parse(format!(
                "row {} has {} entries, expected {n}",
                bad + 1,
                rows[bad].len()
            )));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_csv_str(&text)
    }

    pub fn n_atoms(&self) -> usize {
        self.c.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[(i, j)]
    }

    fn half(&self) -> Result<usize> {
        let n = self.n_atoms();
        if !n.is_multiple_of(2) {
            return Err(invalid(format!("pair formulas need even N, got {n}")));
        }
        Ok(n / 2)
    }

    /// `C_ij + C_{i+h,j+h} − C_{i,j+h} − C_{i+h,j}`, the covariance of the
    /// pair differences `δg̃_i − δg̃_{i+h}`.
    pub fn pair_difference_covariance(&self, i: usize, j: usize) -> f64 {
        let h = self.n_atoms() / 2;
        self.get(i, j) + self.get(i + h, j + h) - self.get(i, j + h) - self.get(i + h, j)
    }
}

/// The three correlation structures. Blocks are `N/2 × N/2`.
#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationCase {
    /// Independent fluctuations with per-atom variances.
    Uncorrelated(Vec<f64>),
    /// The two atoms of a pair fluctuate identically; the block gives the
    /// correlations between pairs.
    PairwiseIdentical(DMatrix<f64>),
    /// Correlations only within a set; both sets use the same block.
    IntraSet(DMatrix<f64>),
}

impl CorrelationCase {
    pub fn uniform_uncorrelated(n_atoms: usize, variance: f64) -> Self {
        Self::Uncorrelated(vec![variance; n_atoms])
    }

    pub fn fully_correlated_pairs(n_atoms: usize, c: f64) -> Self {
        Self::PairwiseIdentical(DMatrix::from_element(n_atoms / 2, n_atoms / 2, c))
    }

    pub fn fully_correlated_sets(n_atoms: usize, c: f64) -> Self {
        Self::IntraSet(DMatrix::from_element(n_atoms / 2, n_atoms / 2, c))
    }
}

pub fn make_correlation(case: &CorrelationCase, n_atoms: usize) -> Result<CorrelationMatrix> {
    if n_atoms == 0 {
        return Err(invalid("need at least one atom"));
    }
    let check_block = |b: &DMatrix<f64>| -> Result<usize> {
        if !n_atoms.is_multiple_of(2) {
            return Err(invalid(format!("N must be even, got {n_atoms}")));
        }
        let h = n_atoms / 2;
        if b.shape() != (h, h) {
            return Err(Error::DimensionMismatch {
                expected: h,
                found: b.nrows(),
            });
        }
        if b.diagonal().iter().any(|&v| v < 0.0) {
            return Err(invalid("variances must be non-negative"));
        }
        Ok(h)
    };
    let c = match case {
        CorrelationCase::Uncorrelated(var) => {
            if var.len() != n_atoms {
                return Err(Error::DimensionMismatch {
                    expected: n_atoms,
                    found: var.len(),
                });
            }
            if var.iter().any(|&v| v < 0.0) {
                return Err(invalid("variances must be non-negative"));
            }
            DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(var))
        }
        CorrelationCase::PairwiseIdentical(b) => {
            let h = check_block(b)?;
            DMatrix::from_fn(n_atoms, n_atoms, |i, j| b[(i % h, j % h)])
        }
        CorrelationCase::IntraSet(b) => {
            let h = check_block(b)?;
            DMatrix::from_fn(n_atoms, n_atoms, |i, j| {
                if (i < h) == (j < h) {
                    b[(i % h, j % h)]
                } else {
                    0.0
                }
            })
        }
    };
    CorrelationMatrix::new(c)
}

fn check_pairs(c: &CorrelationMatrix, n_pairs: usize) -> Result<usize> {
    let h = c.half()?;
    if h != n_pairs {
        return Err(Error::DimensionMismatch {
            expected: c.n_atoms(),
            found: 2 * n_pairs,
        });
    }
    Ok(h)
}

/// Mean excess rate `γ Σ_i (C_ii + C_{i+h,i+h} − C_{i,i+h} − C_{i+h,i}) |b_i|²`
/// (diagonal pair terms only).
pub fn background_alpha(c: &CorrelationMatrix, b: &[C64], gamma: f64) -> Result<f64> {
    let h = check_pairs(c, b.len())?;
    Ok(gamma
        * (0..h)
            .map(|i| c.pair_difference_covariance(i, i) * b[i].norm_sqr())
            .sum::<f64>())
}

/// Mean excess rate including the inter-pair coherence terms
/// `Σ_{i≠j} a_i* b_i a_j b_j* ⟨ε_i ε_j⟩`, for standard singlets. Equals
/// [`background_alpha`] when pair differences are uncorrelated.
pub fn background_alpha_with_coherences(
    c: &CorrelationMatrix,
    p: &PairAmplitudes,
    gamma: f64,
) -> Result<f64> {
    if !p.in_singlet_span() {
        return Err(invalid("background formula requires c = d = 0 on every pair"));
    }
    let h = check_pairs(c, p.n_pairs())?;
    let x: Vec<C64> = p.pairs().iter().map(|q| q[0].conj() * q[1]).collect();
    let mut total = 0.0;
    for i in 0..h {
        total += c.pair_difference_covariance(i, i) * p.pairs()[i][1].norm_sqr();
        for j in 0..h {
            if i != j {
                total += c.pair_difference_covariance(i, j) * (x[i] * x[j].conj()).re;
            }
        }
    }
    Ok(gamma * total)
}

/// `S_i = |b_i|² + b_i* a_i Σ_{j≠i} b_j a_j*`.
pub fn s_weights(p: &PairAmplitudes) -> Vec<C64> {
    let y: Vec<C64> = p.pairs().iter().map(|q| q[1].conj() * q[0]).collect();
    let total: C64 = y.iter().sum();
    p.pairs()
        .iter()
        .zip(&y)
        .map(|(q, yi)| q[1].norm_sqr() + yi * (total - yi).conj())
        .collect()
}

/// `K = (Σ_ij (C_ij + C_{i+h,j+h} − C_{i,j+h} − C_{i+h,j}) S_i S_j)^{1/2}`,
/// using `Re S_i` (the weights are real for real amplitudes).
pub fn k_factor(c: &CorrelationMatrix, p: &PairAmplitudes) -> Result<f64> {
    let h = check_pairs(c, p.n_pairs())?;
    let s: Vec<f64> = s_weights(p).iter().map(|z| z.re).collect();
    let mut k2 = 0.0;
    for i in 0..h {
        for j in 0..h {
            k2 += c.pair_difference_covariance(i, j) * s[i] * s[j];
        }
    }
    let scale = (0..h).map(|i| c.pair_difference_covariance(i, i).abs() * s[i] * s[i]).sum::<f64>();
    if k2 < -1e-10 * scale.max(1.0) {
        return Err(Error::InconsistentCorrelation(format!("K² = {k2:e} is negative")));
    }
    Ok(k2.max(0.0).sqrt())
}

/// Standard deviation `4γ|δG̃|K` of the emission rate under fluctuations.
pub fn fluctuation_std(c: &CorrelationMatrix, delta_g: f64, p: &PairAmplitudes, gamma: f64) -> Result<f64> {
    Ok(4.0 * gamma * delta_g.abs() * k_factor(c, p)?)
}

/// `K` for uncorrelated fluctuations with common variance `c` and
/// identical pairs: `S√(cN)`.
pub fn k_uniform_uncorrelated(n_atoms: usize, variance: f64, a: f64, b: f64) -> f64 {
    let h = n_atoms as f64 / 2.0;
    let s = b * b + a * a * b * b * (h - 1.0);
    s * (variance * n_atoms as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnrUnderNoise {
    Finite(f64),
    /// `K = 0`: fluctuations do not reach the signal; fall back to shot
    /// noise.
    NoiseFree,
}

impl SnrUnderNoise {
    pub fn value(&self) -> Option<f64> {
        match self {
            SnrUnderNoise::Finite(v) => Some(*v),
            SnrUnderNoise::NoiseFree => None,
        }
    }
}

/// `|δG̃| f(N, b) / (4K)`.
pub fn snr_under_noise(delta_g: f64, n_atoms: usize, b_abs: f64, k: f64) -> Result<SnrUnderNoise> {
    if !(k >= 0.0) {
        return Err(invalid("K must be non-negative"));
    }
    if k == 0.0 {
        return Ok(SnrUnderNoise::NoiseFree);
    }
    Ok(SnrUnderNoise::Finite(delta_g.abs() * f_factor(n_atoms, b_abs) / (4.0 * k)))
}

/// True when fluctuations leave the dark subspace of the reference couplings
/// intact on average: for every pair of pairs `(i, j)`,
/// `G̃1² C_{i+h,j+h} + G̃2² C_ij − G̃1 G̃2 (C_{i,j+h} + C_{i+h,j}) = 0`.
pub fn satisfies_pair_cancellation(c: &CorrelationMatrix, c0: &CouplingConfig, tol: f64) -> Result<bool> {
    let h = c.half()?;
    if c0.n_atoms() != c.n_atoms() {
        return Err(Error::DimensionMismatch {
            expected: c.n_atoms(),
            found: c0.n_atoms(),
        });
    }
    let g = c0.real_couplings()?;
    for i in 0..h {
        for j in 0..h {
            let (gi1, gi2, gj1, gj2) = (g[i], g[i + h], g[j], g[j + h]);
            let v = gi1 * gj1 * c.get(i + h, j + h) + gi2 * gj2 * c.get(i, j)
                - gi1 * gj2 * c.get(i + h, j)
                - gi2 * gj1 * c.get(i, j + h);
            if v.abs() > tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Gaussian coupling deviations with covariance `C`, via the symmetric
/// square root of `C`.
#[derive(Debug, Clone)]
pub struct FluctuationSampler {
    root: DMatrix<f64>,
}

impl FluctuationSampler {
    pub fn new(c: &CorrelationMatrix) -> Result<Self> {
        let eig = c.matrix().clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|v| !v.is_finite() || *v < -PSD_TOL) {
            return Err(Error::InconsistentCorrelation("factorization failed".into()));
        }
        let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let root = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt) * eig.eigenvectors.transpose();
        Ok(Self { root })
    }

    pub fn n_atoms(&self) -> usize {
        self.root.nrows()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let z = nalgebra::DVector::from_fn(self.n_atoms(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.root * z).iter().copied().collect()
    }
}

/// Draws `δg̃` with covariance `C`.
pub fn sample_fluctuations<R: Rng>(c: &CorrelationMatrix, rng: &mut R) -> Result<Vec<f64>> {
    Ok(FluctuationSampler::new(c)?.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloSummary {
    /// Mean of `α(δg̃) − α(0)`.
    pub mean_excess: f64,
    pub mean_stderr: f64,
    /// Sample standard deviation of `α(δg̃)`.
    pub std: f64,
    pub n_samples: usize,
}

/// Direct evaluation of `α` under `c0 + δg̃` for sampled fluctuations.
/// Sample `k` uses random stream `k` of `seed`.
pub fn monte_carlo_alpha(
    c: &CorrelationMatrix,
    p: &PairAmplitudes,
    c0: &CouplingConfig,
    n_samples: usize,
    seed: u64,
) -> Result<MonteCarloSummary> {
    if n_samples < 2 {
        return Err(invalid("need at least two samples"));
    }
    let g0 = c0.real_couplings()?;
    if g0.len() != c.n_atoms() {
        return Err(Error::DimensionMismatch {
            expected: c.n_atoms(),
            found: g0.len(),
        });
    }
    let sampler = FluctuationSampler::new(c)?;
    let alpha0 = alpha_pair_closed_form(p, c0)?;
    let gamma = c0.gamma();
    let values = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = realization_rng(seed, k as u64);
            let dg = sampler.sample(&mut rng);
            let g: Vec<f64> = g0.iter().zip(&dg).map(|(a, b)| a + b).collect();
            alpha_pair_closed_form(p, &CouplingConfig::from_real(&g, gamma)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let excess: Vec<f64> = values.iter().map(|v| v - alpha0).collect();
    let (mean_excess, mean_stderr) = mean_and_stderr(&excess);
    let std = mean_stderr * (n_samples as f64).sqrt();
    Ok(MonteCarloSummary {
        mean_excess,
        mean_stderr,
        std,
        n_samples,
    })
}
