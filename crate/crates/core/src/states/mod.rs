//! Decoherence-free and nearly decoherence-free initial states.
//!
//! Pair `l` couples atom `l` (set S1) with atom `l + N/2` (set S2). Inside a
//! pair the local computational basis is ordered
//! `|0_l 0_r⟩, |0_l 1_r⟩, |1_l 0_r⟩, |1_l 1_r⟩` (local index `2·bit_l + bit_r`).

mod angular;
mod dfs;

pub use angular::{
    cat_expect_j1pj1m, cat_expect_j1pj1m_brute, cat_state, clebsch_gordan, CatStateSpec,
    CgTable, CoupledState, HalfInt,
};
pub use dfs::{dfs_basis, random_dfs_state, DfsBasis};

use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};
use crate::hilbert::{norm_sqr, CouplingConfig, QuantumState};

const PAIR_NORM_TOL: f64 = 1e-12;

/// Per-pair coefficients over `{|t−⟩, |s⟩, |t0⟩, |t+⟩}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairAmplitudes {
    pairs: Vec<[C64; 4]>,
}

impl PairAmplitudes {
    /// Each entry is `[a, b, c, d]` for one pair; every pair must be
    /// normalized.
    pub fn new(pairs: Vec<[C64; 4]>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(invalid("at least one pair is required"));
        }
        for p in &pairs {
            let n = norm_sqr(p);
            if (n - 1.0).abs() > PAIR_NORM_TOL {
                return Err(Error::NotNormalized { norm_sqr: n });
            }
        }
        Ok(Self { pairs })
    }

    /// Pairs restricted to the `{|t−⟩, |s⟩}` span.
    pub fn from_ab(a: &[C64], b: &[C64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                found: b.len(),
            });
        }
        let zero = C64::new(0.0, 0.0);
        Self::new(a.iter().zip(b).map(|(&a, &b)| [a, b, zero, zero]).collect())
    }

    /// The same `(a, b, c, d)` on every one of `n_pairs` pairs.
    pub fn uniform(n_pairs: usize, abcd: [C64; 4]) -> Result<Self> {
        Self::new(vec![abcd; n_pairs])
    }

    pub fn uniform_real(n_pairs: usize, abcd: [f64; 4]) -> Result<Self> {
        Self::uniform(n_pairs, abcd.map(|x| C64::new(x, 0.0)))
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_atoms(&self) -> usize {
        2 * self.pairs.len()
    }

    pub fn pairs(&self) -> &[[C64; 4]] {
        &self.pairs
    }

    pub fn a(&self) -> Vec<C64> {
        self.pairs.iter().map(|p| p[0]).collect()
    }

    pub fn b(&self) -> Vec<C64> {
        self.pairs.iter().map(|p| p[1]).collect()
    }

    /// True when every pair has `c = d = 0`.
    pub fn in_singlet_span(&self) -> bool {
        self.pairs.iter().all(|p| p[2].norm() == 0.0 && p[3].norm() == 0.0)
    }
}

/// Pair-local computational amplitudes for `a|t−⟩ + b|s⟩ + c|t0⟩ + d|t+⟩`,
/// with the singlet built from the pair couplings `(g_left, g_right)`.
pub fn pair_local_amplitudes(abcd: [C64; 4], g_left: C64, g_right: C64) -> Result<[C64; 4]> {
    let w = (g_left.norm_sqr() + g_right.norm_sqr()).sqrt();
    if w == 0.0 {
        return Err(invalid("generalized singlet undefined: both pair couplings vanish"));
    }
    let [a, b, c, d] = abcd;
    let t0 = c * std::f64::consts::FRAC_1_SQRT_2;
    Ok([a, b * g_left / w + t0, -b * g_right / w + t0, d])
}

/// Tensor product over pairs of pair-local vectors (see module docs for the
/// local ordering).
pub fn product_of_pairs(locals: &[[C64; 4]]) -> Result<QuantumState> {
    let n_pairs = locals.len();
    if n_pairs == 0 {
        return Err(invalid("at least one pair is required"));
    }
    let n_atoms = 2 * n_pairs;
    if n_atoms > crate::hilbert::MAX_ATOMS {
        return Err(Error::TooLarge(format!("{n_atoms} atoms")));
    }
    let amps = (0..1usize << n_atoms)
        .map(|s| {
            locals.iter().enumerate().fold(C64::new(1.0, 0.0), |acc, (l, phi)| {
                let left = (s >> l) & 1;
                let right = (s >> (l + n_pairs)) & 1;
                acc * phi[2 * left + right]
            })
        })
        .collect();
    QuantumState::new(n_atoms, amps)
}

/// `⊗_l (a_l|t−⟩ + b_l|s⟩_l)` with each singlet generalized to the reference
/// couplings, so the result is dark under `c0`.
pub fn pair_product_state(p: &PairAmplitudes, c0: &CouplingConfig) -> Result<QuantumState> {
    if !p.in_singlet_span() {
        return Err(invalid("pair_product_state requires c = d = 0 on every pair"));
    }
    if c0.n_atoms() != p.n_atoms() {
        return Err(Error::DimensionMismatch {
            expected: c0.n_atoms(),
            found: p.n_atoms(),
        });
    }
    let h = p.n_pairs();
    let g = c0.g_tilde();
    let locals = p
        .pairs()
        .iter()
        .enumerate()
        .map(|(l, abcd)| pair_local_amplitudes(*abcd, g[l], g[l + h]))
        .collect::<Result<Vec<_>>>()?;
    product_of_pairs(&locals)
}

/// The same `a|t−⟩ + b|s⟩ + c|t0⟩ + d|t+⟩` on all `N/2` pairs, with the
/// standard singlet `(|01⟩ − |10⟩)/√2`.
pub fn imperfect_pair_state(a: C64, b: C64, c: C64, d: C64, n_atoms: usize) -> Result<QuantumState> {
    if n_atoms == 0 || !n_atoms.is_multiple_of(2) {
        return Err(invalid(format!("N must be even and positive, got {n_atoms}")));
    }
    let p = PairAmplitudes::uniform(n_atoms / 2, [a, b, c, d])?;
    let one = C64::new(1.0, 0.0);
    let local = pair_local_amplitudes(p.pairs()[0], one, one)?;
    product_of_pairs(&vec![local; n_atoms / 2])
}

/// `(cos δ, 1, 0, sin δ)/√2`, the imperfect preparation used for the
/// relaxation study.
pub fn relaxation_amplitudes(delta: f64) -> [f64; 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [delta.cos() * s, s, 0.0, delta.sin() * s]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{apply_j_minus, expect_jplus_jminus};
    use approx::assert_abs_diff_eq;

    fn r(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn smallest_pair_product() {
        let p = PairAmplitudes::from_ab(&[r(S)], &[r(S)]).unwrap();
        let c0 = CouplingConfig::uniform(2, 1.0, 1.0).unwrap();
        let psi = pair_product_state(&p, &c0).unwrap();
        // (|00⟩ + (|0_0 1_1⟩ − |1_0 0_1⟩)/√2)/√2; atom 1 excited is index 2
        let expected = [S, -0.5, 0.5, 0.0];
        for (z, e) in psi.amplitudes().iter().zip(expected) {
            assert_abs_diff_eq!(z.re, e, epsilon = 1e-15);
            assert_eq!(z.im, 0.0);
        }
        assert!(expect_jplus_jminus(&psi, &c0).unwrap() < 1e-30);
    }

    #[test]
    fn double_singlet_is_dark() {
        let p = PairAmplitudes::from_ab(&[r(0.0); 2], &[r(1.0); 2]).unwrap();
        let c0 = CouplingConfig::uniform(4, 1.0, 1.0).unwrap();
        let psi = pair_product_state(&p, &c0).unwrap();
        assert_eq!(expect_jplus_jminus(&psi, &c0).unwrap(), 0.0);
    }

    #[test]
    fn generalized_singlet() {
        let p = PairAmplitudes::from_ab(&[r(0.0)], &[r(1.0)]).unwrap();
        let c0 = CouplingConfig::from_real(&[2.0, 1.0], 1.0).unwrap();
        let psi = pair_product_state(&p, &c0).unwrap();
        let n = 5f64.sqrt();
        // 2|0_0 1_1⟩ − |1_0 0_1⟩
        assert_abs_diff_eq!(psi.amplitudes()[2].re, 2.0 / n, epsilon = 1e-15);
        assert_abs_diff_eq!(psi.amplitudes()[1].re, -1.0 / n, epsilon = 1e-15);
        let out = apply_j_minus(&psi, &c0).unwrap();
        assert!(norm_sqr(&out) < 1e-30);
    }

    #[test]
    fn pair_product_errors() {
        let c0 = CouplingConfig::from_real(&[0.0, 0.0], 1.0).unwrap();
        let p = PairAmplitudes::from_ab(&[r(0.0)], &[r(1.0)]).unwrap();
        assert!(pair_product_state(&p, &c0).is_err());
        assert!(PairAmplitudes::from_ab(&[r(0.0)], &[r(0.0)]).is_err());
        let imperfect = PairAmplitudes::uniform_real(1, [0.0, 0.0, 1.0, 0.0]).unwrap();
        let c0 = CouplingConfig::uniform(2, 1.0, 1.0).unwrap();
        assert!(pair_product_state(&imperfect, &c0).is_err());
    }

    #[test]
    fn imperfect_limits() {
        let ground = imperfect_pair_state(r(1.0), r(0.0), r(0.0), r(0.0), 4).unwrap();
        assert_eq!(ground, QuantumState::ground(4).unwrap());
        let excited = imperfect_pair_state(r(0.0), r(0.0), r(0.0), r(1.0), 4).unwrap();
        assert_eq!(excited, QuantumState::fully_excited(4).unwrap());

        let [a, b, c, d] = relaxation_amplitudes(0.0);
        let imperfect = imperfect_pair_state(r(a), r(b), r(c), r(d), 6).unwrap();
        let p = PairAmplitudes::from_ab(&[r(S); 3], &[r(S); 3]).unwrap();
        let perfect = pair_product_state(&p, &CouplingConfig::uniform(6, 1.0, 1.0).unwrap()).unwrap();
        for (x, y) in imperfect.amplitudes().iter().zip(perfect.amplitudes()) {
            assert!((x - y).norm() < 1e-15);
        }
    }

    #[test]
    fn imperfect_rejects_unnormalized() {
        assert!(matches!(
            imperfect_pair_state(r(1.0), r(1.0), r(0.0), r(0.0), 2),
            Err(Error::NotNormalized { .. })
        ));
        assert!(imperfect_pair_state(r(1.0), r(0.0), r(0.0), r(0.0), 3).is_err());
    }

    #[test]
    fn t0_component_is_symmetric() {
        let psi = imperfect_pair_state(r(0.0), r(0.0), r(1.0), r(0.0), 2).unwrap();
        assert_abs_diff_eq!(psi.amplitudes()[1].re, S, epsilon = 1e-15);
        assert_abs_diff_eq!(psi.amplitudes()[2].re, S, epsilon = 1e-15);
    }
}
