//! State vectors of N two-level atoms and matrix-free collective ladder
//! operators.
//!
//! Basis index bit `i` is the excitation of atom `i`, so `|0…0⟩` is index 0
//! and the fully excited state is index `2^N - 1`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};

/// Largest register that may be materialized as a full state vector.
pub const MAX_ATOMS: usize = 24;

/// Largest register for which dense operator matrices are built.
pub const MAX_DENSE_ATOMS: usize = 6;


pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `⟨a|b⟩`, conjugating the left argument.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// A normalized pure state of `n_atoms` two-level atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    n_atoms: usize,
    amplitudes: Vec<C64>,
}

impl QuantumState {
    /// Builds a state from raw amplitudes, renormalizing them.
    pub fn new(n_atoms: usize, amplitudes: Vec<C64>) -> Result<Self> {
        check_atoms(n_atoms)?;
        let dim = 1usize << n_atoms;
        if amplitudes.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: amplitudes.len(),
            });
        }
        let mut state = Self {
            n_atoms,
            amplitudes,
        };
        state.renormalize()?;
        Ok(state)
    }

    pub fn from_real(n_atoms: usize, amplitudes: &[f64]) -> Result<Self> {
        Self::new(
            n_atoms,
            amplitudes.iter().map(|&x| C64::new(x, 0.0)).collect(),
        )
    }

    /// Computational basis state with the given excitation bitmask.
    pub fn basis(n_atoms: usize, index: usize) -> Result<Self> {
        check_atoms(n_atoms)?;
        let dim = 1usize << n_atoms;
        if index >= dim {
            return Err(invalid(format!("basis index {index} out of range {dim}")));
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(Self {
            n_atoms,
            amplitudes,
        })
    }

    pub fn ground(n_atoms: usize) -> Result<Self> {
        Self::basis(n_atoms, 0)
    }

    pub fn fully_excited(n_atoms: usize) -> Result<Self> {
        check_atoms(n_atoms)?;
        Self::basis(n_atoms, (1usize << n_atoms) - 1)
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amplitudes).sqrt()
    }

    pub fn inner(&self, other: &QuantumState) -> C64 {
        inner(&self.amplitudes, &other.amplitudes)
    }

    /// Rescales to unit norm. Fails on the zero vector.
    pub fn renormalize(&mut self) -> Result<()> {
        let norm = self.norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite { steps: 0 });
        }
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let scale = 1.0 / norm;
        self.amplitudes.iter_mut().for_each(|z| *z *= scale);
        Ok(())
    }

    /// Wraps amplitudes already known to be normalized.
    pub(crate) fn from_normalized(n_atoms: usize, amplitudes: Vec<C64>) -> Self {
        debug_assert_eq!(amplitudes.len(), 1 << n_atoms);
        debug_assert!((norm_sqr(&amplitudes) - 1.0).abs() < 1e-9);
        Self {
            n_atoms,
            amplitudes,
        }
    }
}

fn check_atoms(n_atoms: usize) -> Result<()> {
    if n_atoms == 0 {
        return Err(invalid("n_atoms must be positive"));
    }
    if n_atoms > MAX_ATOMS {
        return Err(Error::TooLarge(format!(
            "{n_atoms} atoms exceeds the state-vector limit of {MAX_ATOMS}"
        )));
    }
    Ok(())
}

/// Per-atom dimensionless couplings `g̃_i` together with the collective rate
/// `γ` and the spontaneous rate `Γ`.
///
/// Atoms `0..N/2` form set S1 and atoms `N/2..N` form set S2.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingConfig {
    g_tilde: Vec<C64>,
    gamma: f64,
    big_gamma: f64,
}

impl CouplingConfig {
    pub fn new(g_tilde: Vec<C64>, gamma: f64, big_gamma: f64) -> Result<Self> {
        if g_tilde.is_empty() {
            return Err(invalid("at least one coupling is required"));
        }
        if g_tilde.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(invalid("couplings must be finite"));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("collective rate must be positive, got {gamma}")));
        }
        if !(big_gamma >= 0.0 && big_gamma.is_finite()) {
            return Err(invalid(format!(
                "spontaneous rate must be non-negative, got {big_gamma}"
            )));
        }
        Ok(Self {
            g_tilde,
            gamma,
            big_gamma,
        })
    }

    pub fn from_real(g_tilde: &[f64], gamma: f64) -> Result<Self> {
        Self::new(g_tilde.iter().map(|&g| C64::new(g, 0.0)).collect(), gamma, 0.0)
    }

    pub fn uniform(n_atoms: usize, g: f64, gamma: f64) -> Result<Self> {
        Self::from_real(&vec![g; n_atoms], gamma)
    }

    /// Coupling `g1` on set S1 and `g2` on set S2.
    pub fn two_set(n_atoms: usize, g1: f64, g2: f64, gamma: f64) -> Result<Self> {
        if n_atoms == 0 || !n_atoms.is_multiple_of(2) {
            return Err(invalid(format!("two-set couplings need even N, got {n_atoms}")));
        }
        let half = n_atoms / 2;
        let g: Vec<f64> = (0..n_atoms).map(|i| if i < half { g1 } else { g2 }).collect();
        Self::from_real(&g, gamma)
    }

    pub fn with_big_gamma(mut self, big_gamma: f64) -> Result<Self> {
        if !(big_gamma >= 0.0 && big_gamma.is_finite()) {
            return Err(invalid("spontaneous rate must be non-negative"));
        }
        self.big_gamma = big_gamma;
        Ok(self)
    }

    pub fn n_atoms(&self) -> usize {
        self.g_tilde.len()
    }

    pub fn g_tilde(&self) -> &[C64] {
        &self.g_tilde
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn big_gamma(&self) -> f64 {
        self.big_gamma
    }

    pub fn is_real(&self) -> bool {
        self.g_tilde.iter().all(|g| g.im == 0.0)
    }

    /// Real parts of the couplings, or an error if any is complex.
    pub fn real_couplings(&self) -> Result<Vec<f64>> {
        if !self.is_real() {
            return Err(Error::ComplexCouplings);
        }
        Ok(self.g_tilde.iter().map(|g| g.re).collect())
    }

    /// `(G̃1, G̃2)` when the couplings are uniform within each set.
    pub fn set_couplings(&self) -> Option<(C64, C64)> {
        let n = self.n_atoms();
        if !n.is_multiple_of(2) {
            return None;
        }
        let (s1, s2) = self.g_tilde.split_at(n / 2);
        let uniform = |s: &[C64]| s.iter().all(|g| *g == s[0]);
        (uniform(s1) && uniform(s2)).then(|| (s1[0], s2[0]))
    }

    /// `δG̃ = (G̃1 − G̃2)/2`.
    pub fn delta_g(&self) -> Option<C64> {
        self.set_couplings().map(|(g1, g2)| (g1 - g2) * 0.5)
    }
}

fn check_dim(n_atoms: usize, c: &CouplingConfig) -> Result<()> {
    if n_atoms != c.n_atoms() {
        return Err(Error::DimensionMismatch {
            expected: c.n_atoms(),
            found: n_atoms,
        });
    }
    Ok(())
}

/// `out = Σ_i g_i σ−^(i) input`. `out` is overwritten.
pub fn lower_into(g: &[C64], input: &[C64], out: &mut [C64]) {
    debug_assert_eq!(input.len(), 1 << g.len());
    debug_assert_eq!(input.len(), out.len());
    out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
    for (s, &amp) in input.iter().enumerate() {
        if amp == C64::new(0.0, 0.0) {
            continue;
        }
        for (i, &gi) in g.iter().enumerate() {
            let bit = 1usize << i;
            if s & bit != 0 {
                out[s ^ bit] += gi * amp;
            }
        }
    }
}

/// `out = Σ_i g_i* σ+^(i) input`. `out` is overwritten.
pub fn raise_into(g: &[C64], input: &[C64], out: &mut [C64]) {
    debug_assert_eq!(input.len(), 1 << g.len());
    debug_assert_eq!(input.len(), out.len());
    out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
    for (s, &amp) in input.iter().enumerate() {
        if amp == C64::new(0.0, 0.0) {
            continue;
        }
        for (i, &gi) in g.iter().enumerate() {
            let bit = 1usize << i;
            if s & bit == 0 {
                out[s | bit] += gi.conj() * amp;
            }
        }
    }
}

/// `J− |ψ⟩` as an unnormalized vector.
pub fn apply_j_minus(state: &QuantumState, c: &CouplingConfig) -> Result<Vec<C64>> {
    check_dim(state.n_atoms(), c)?;
    let mut out = vec![C64::new(0.0, 0.0); state.dim()];
    lower_into(c.g_tilde(), state.amplitudes(), &mut out);
    Ok(out)
}

/// `J+ |ψ⟩` as an unnormalized vector.
pub fn apply_j_plus(state: &QuantumState, c: &CouplingConfig) -> Result<Vec<C64>> {
    check_dim(state.n_atoms(), c)?;
    let mut out = vec![C64::new(0.0, 0.0); state.dim()];
    raise_into(c.g_tilde(), state.amplitudes(), &mut out);
    Ok(out)
}

/// `⟨ψ|J+J−|ψ⟩ = ‖J−ψ‖²`.
pub fn expect_jplus_jminus(state: &QuantumState, c: &CouplingConfig) -> Result<f64> {
    Ok(norm_sqr(&apply_j_minus(state, c)?))
}

/// Diagonal of `J_z` at a basis index.
pub fn jz_eigenvalue(n_atoms: usize, index: usize) -> f64 {
    index.count_ones() as f64 - n_atoms as f64 / 2.0
}

/// `⟨ψ|J_z|ψ⟩`, the population inversion.
pub fn expect_jz(state: &QuantumState) -> f64 {
    let n = state.n_atoms();
    state
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(s, z)| z.norm_sqr() * jz_eigenvalue(n, s))
        .sum()
}

/// Dense `J−` for small registers. Used as an oracle and by the density
/// matrix code paths.
pub fn dense_j_minus(c: &CouplingConfig) -> Result<DMatrix<C64>> {
    let n = c.n_atoms();
    if n > MAX_DENSE_ATOMS {
        return Err(Error::TooLarge(format!(
            "dense operators are limited to {MAX_DENSE_ATOMS} atoms"
        )));
    }
    let dim = 1usize << n;
    let mut m = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
    for s in 0..dim {
        for (i, &gi) in c.g_tilde().iter().enumerate() {
            let bit = 1usize << i;
            if s & bit != 0 {
                m[(s ^ bit, s)] += gi;
            }
        }
    }
    Ok(m)
}
