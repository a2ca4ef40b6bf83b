//! Density-matrix evolution under the collective decay term, for small
//! registers.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::hilbert::{lower_into, raise_into, CouplingConfig, QuantumState, MAX_DENSE_ATOMS};
use crate::states::{imperfect_pair_state, relaxation_amplitudes};
use crate::C64;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const POSITIVITY_TOL: f64 = 1e-10;

/// Default RK4 step budget for [`evolve_to_stationary`].
pub const MAX_RK4_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_atoms: usize,
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(n_atoms: usize, matrix: DMatrix<C64>) -> Result<Self> {
        check_size(n_atoms)?;
        let dim = 1usize << n_atoms;
        if matrix.shape() != (dim, dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: matrix.nrows(),
            });
        }
        let rho = Self { n_atoms, matrix };
        if rho.hermiticity_error() > HERMITIAN_TOL {
            return Err(invalid("density matrix is not Hermitian"));
        }
        if (rho.trace() - 1.0).abs() > TRACE_TOL {
            return Err(invalid(format!("density matrix trace {} ≠ 1", rho.trace())));
        }
        if rho.min_eigenvalue() < -POSITIVITY_TOL {
            return Err(invalid("density matrix is not positive semidefinite"));
        }
        Ok(rho)
    }

    pub fn from_pure(state: &QuantumState) -> Result<Self> {
        check_size(state.n_atoms())?;
        let v = nalgebra::DVector::from_column_slice(state.amplitudes());
        Ok(Self {
            n_atoms: state.n_atoms(),
            matrix: &v * v.adjoint(),
        })
    }

    pub fn maximally_mixed(n_atoms: usize) -> Result<Self> {
        check_size(n_atoms)?;
        let dim = 1usize << n_atoms;
        Ok(Self {
            n_atoms,
            matrix: DMatrix::from_diagonal_element(dim, dim, C64::new(1.0 / dim as f64, 0.0)),
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).camax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigen().eigenvalues.min()
    }

    /// `⟨v|ρ|v⟩`.
    pub fn population(&self, v: &[C64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(v);
        (v.adjoint() * &self.matrix * &v)[(0, 0)].re
    }

    /// `tr(J+J−ρ)`.
    pub fn expect_jplus_jminus(&self, c: &CouplingConfig) -> Result<f64> {
        check_couplings(self.n_atoms, c)?;
        let a = left_lower(c.g_tilde(), &self.matrix);
        let b = left_lower(c.g_tilde(), &a.adjoint());
        Ok(b.trace().re)
    }
}

fn check_size(n_atoms: usize) -> Result<()> {
    if n_atoms == 0 || n_atoms > MAX_DENSE_ATOMS {
        return Err(Error::TooLarge(format!(
            "density matrices limited to 1..={MAX_DENSE_ATOMS} atoms, got {n_atoms}"
        )));
    }
    Ok(())
}

fn check_couplings(n_atoms: usize, c: &CouplingConfig) -> Result<()> {
    if c.n_atoms() != n_atoms {
        return Err(Error::DimensionMismatch {
            expected: n_atoms,
            found: c.n_atoms(),
        });
    }
    Ok(())
}

/// `J− m`, column by column.
fn left_lower(g: &[C64], m: &DMatrix<C64>) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (src, mut dst) in m.column_iter().zip(out.column_iter_mut()) {
        lower_into(g, src.as_slice(), dst.as_mut_slice());
    }
    out
}

fn left_raise(g: &[C64], m: &DMatrix<C64>) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (src, mut dst) in m.column_iter().zip(out.column_iter_mut()) {
        raise_into(g, src.as_slice(), dst.as_mut_slice());
    }
    out
}

/// `γ(2J−ρJ+ − J+J−ρ − ρJ+J−)` for Hermitian `ρ`.
fn rhs(g: &[C64], gamma: f64, rho: &DMatrix<C64>) -> DMatrix<C64> {
    let a = left_lower(g, rho);
    let jump = left_lower(g, &a.adjoint());
    let c = left_raise(g, &a);
    (jump * C64::new(2.0, 0.0) - &c - c.adjoint()) * C64::new(gamma, 0.0)
}

/// Collective dissipator applied to `ρ`.
pub fn lindblad_rhs(rho: &DensityMatrix, c: &CouplingConfig) -> Result<DMatrix<C64>> {
    check_couplings(rho.n_atoms, c)?;
    Ok(rhs(c.g_tilde(), c.gamma(), &rho.matrix))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stationary {
    pub rho: DensityMatrix,
    pub steps: usize,
    /// Frobenius norm of the right-hand side at the returned state.
    pub rhs_norm: f64,
}

/// RK4 integration until `‖L[ρ]‖_F < tol`. `dt` is in units of `1/γ`.
pub fn evolve_to_stationary(
    rho0: &DensityMatrix,
    c0: &CouplingConfig,
    dt: f64,
    tol: f64,
) -> Result<Stationary> {
    evolve_with_budget(rho0, c0, dt, tol, MAX_RK4_STEPS)
}

pub fn evolve_with_budget(
    rho0: &DensityMatrix,
    c0: &CouplingConfig,
    dt: f64,
    tol: f64,
    max_steps: usize,
) -> Result<Stationary> {
    check_couplings(rho0.n_atoms, c0)?;
    if !(dt > 0.0) || !(tol > 0.0) {
        return Err(invalid("dt and tol must be positive"));
    }
    let g = c0.g_tilde();
    let gamma = c0.gamma();
    let h = dt / gamma;
    let half = C64::new(h / 2.0, 0.0);
    let full = C64::new(h, 0.0);
    let sixth = C64::new(h / 6.0, 0.0);
    let two = C64::new(2.0, 0.0);
    let mut rho = rho0.matrix.clone();
    let mut k1 = rhs(g, gamma, &rho);
    for step in 0..=max_steps {
        let norm = k1.norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite { steps: step });
        }
        if norm < tol {
            return Ok(Stationary {
                rho: DensityMatrix {
                    n_atoms: rho0.n_atoms,
                    matrix: rho,
                },
                steps: step,
                rhs_norm: norm,
            });
        }
        if step == max_steps {
            break;
        }
        let k2 = rhs(g, gamma, &(&rho + &k1 * half));
        let k3 = rhs(g, gamma, &(&rho + &k2 * half));
        let k4 = rhs(g, gamma, &(&rho + &k3 * full));
        rho += (k1 + (k2 + k3) * two + k4) * sixth;
        rho = (&rho + rho.adjoint()) * C64::new(0.5, 0.0);
        k1 = rhs(g, gamma, &rho);
    }
    let last = DensityMatrix {
        n_atoms: rho0.n_atoms,
        matrix: rho,
    };
    let dark = last.expect_jplus_jminus(c0).unwrap_or(f64::NAN);
    Err(Error::Timeout {
        steps: max_steps,
        last_step_norm: k1.norm(),
        dark_residual: dark,
    })
}

/// Ensemble-exact `α` after relaxing the imperfect pair state with
/// amplitudes `(cos δ, 1, 0, sin δ)/√2` under `c0_relax`, measured under
/// `c_perturbed`: `2γ tr(J+J−ρ∞)`.
pub fn exact_relaxed_alpha(
    n_atoms: usize,
    delta: f64,
    c0_relax: &CouplingConfig,
    c_perturbed: &CouplingConfig,
) -> Result<f64> {
    if !n_atoms.is_multiple_of(2) {
        return Err(invalid(format!("N must be even, got {n_atoms}")));
    }
    check_size(n_atoms)?;
    let [a, b, c, d] = relaxation_amplitudes(delta).map(|x| C64::new(x, 0.0));
    let psi = imperfect_pair_state(a, b, c, d, n_atoms)?;
    let rho0 = DensityMatrix::from_pure(&psi)?;
    let out = evolve_to_stationary(&rho0, c0_relax, 0.01, 1e-10)?;
    Ok(2.0 * c_perturbed.gamma() * out.rho.expect_jplus_jminus(c_perturbed)?)
}
