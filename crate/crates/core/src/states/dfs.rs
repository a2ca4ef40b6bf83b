//! Orthonormal bases of the decoherence-free subspace `ker J−`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hilbert::{CouplingConfig, QuantumState};

/// Largest register for which the kernel is computed.
pub const MAX_DFS_ATOMS: usize = 14;

/// Singular values below this fraction of the largest one count as zero.
const NULL_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone)]
struct Sector {
    indices: Vec<usize>,
    vectors: Vec<Vec<C64>>,
}

/// Kernel of `J−`, stored per excitation-number sector.
///
/// `J−` lowers the excitation number by one, so the kernel is the direct sum
/// of the kernels of its sector-to-sector blocks.
#[derive(Debug, Clone)]
pub struct DfsBasis {
    n_atoms: usize,
    sectors: Vec<Sector>,
}

impl DfsBasis {
    pub fn compute(c0: &CouplingConfig) -> Result<Self> {
        let n = c0.n_atoms();
        if n > MAX_DFS_ATOMS {
            return Err(Error::TooLarge(format!(
                "DFS basis limited to {MAX_DFS_ATOMS} atoms, got {n}"
            )));
        }
        let dim = 1usize << n;
        let mut by_weight: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        let mut position = vec![0usize; dim];
        for (s, pos) in position.iter_mut().enumerate() {
            let k = s.count_ones() as usize;
            *pos = by_weight[k].len();
            by_weight[k].push(s);
        }
        let g = c0.g_tilde();
        let mut sectors = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let cols = &by_weight[k];
            if k == 0 {
                sectors.push(Sector {
                    indices: cols.clone(),
                    vectors: vec![vec![C64::new(1.0, 0.0)]],
                });
                continue;
            }
            let n_rows = by_weight[k - 1].len();
            let n_cols = cols.len();
            // pad to at least square so the SVD returns a full right basis
            let mut block = DMatrix::from_element(n_rows.max(n_cols), n_cols, C64::new(0.0, 0.0));
            for (c, &s) in cols.iter().enumerate() {
                for (i, &gi) in g.iter().enumerate() {
                    let bit = 1usize << i;
                    if s & bit != 0 {
                        block[(position[s ^ bit], c)] += gi;
                    }
                }
            }
            let vectors = null_space(block);
            sectors.push(Sector {
                indices: cols.clone(),
                vectors,
            });
        }
        Ok(Self { n_atoms: n, sectors })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dimension(&self) -> usize {
        self.sectors.iter().map(|s| s.vectors.len()).sum()
    }

    /// Kernel dimension in each excitation sector `k = 0..=N`.
    pub fn sector_dimensions(&self) -> Vec<usize> {
        self.sectors.iter().map(|s| s.vectors.len()).collect()
    }

    /// Basis vectors embedded in the full `2^N` space.
    pub fn to_states(&self) -> Vec<QuantumState> {
        let dim = 1usize << self.n_atoms;
        self.sectors
            .iter()
            .flat_map(|sector| {
                sector.vectors.iter().map(move |v| {
                    let mut amps = vec![C64::new(0.0, 0.0); dim];
                    for (&s, &z) in sector.indices.iter().zip(v) {
                        amps[s] = z;
                    }
                    QuantumState::from_normalized(self.n_atoms, amps)
                })
            })
            .collect()
    }

    /// A Haar-random unit vector in the kernel span.
    pub fn random_state(&self, seed: u64) -> Result<QuantumState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut amps = vec![C64::new(0.0, 0.0); 1usize << self.n_atoms];
        for sector in &self.sectors {
            for v in &sector.vectors {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                let coeff = C64::new(re, im);
                for (&s, &z) in sector.indices.iter().zip(v) {
                    amps[s] += coeff * z;
                }
            }
        }
        QuantumState::new(self.n_atoms, amps)
    }
}

/// Orthonormal basis of the null space of `m` (which has at least as many
/// rows as columns).
fn null_space(m: DMatrix<C64>) -> Vec<Vec<C64>> {
    let n_cols = m.ncols();
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = NULL_THRESHOLD * sigma_max;
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| sigma_max == 0.0 || s <= cutoff)
        .map(|(r, _)| (0..n_cols).map(|c| v_t[(r, c)].conj()).collect())
        .collect()
}

/// Orthonormal basis of `ker J−` for the reference couplings.
pub fn dfs_basis(n_atoms: usize, c0: &CouplingConfig) -> Result<Vec<QuantumState>> {
    check_atoms(n_atoms, c0)?;
    Ok(DfsBasis::compute(c0)?.to_states())
}

/// Haar-random state in the DFS of `c0`, reproducible from `seed`.
pub fn random_dfs_state(n_atoms: usize, c0: &CouplingConfig, seed: u64) -> Result<QuantumState> {
    check_atoms(n_atoms, c0)?;
    DfsBasis::compute(c0)?.random_state(seed)
}

fn check_atoms(n_atoms: usize, c0: &CouplingConfig) -> Result<()> {
    if n_atoms != c0.n_atoms() {
        return Err(Error::DimensionMismatch {
            expected: c0.n_atoms(),
            found: n_atoms,
        });
    }
    Ok(())
}
