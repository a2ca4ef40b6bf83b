//! Collective photon-emission rate `α = 2γ⟨J+J−⟩`, its closed forms, and the
//! sensitivity estimates derived from it.
//!
//! The state-vector evaluation [`alpha_collective`] is the reference; the
//! closed forms are checked against it in the tests.

use num_complex::Complex64 as C64;

use crate::cavity::length_sensitivity;
use crate::error::{invalid, Error, Result};
use crate::hilbert::{expect_jplus_jminus, CouplingConfig, QuantumState};
use crate::states::{imperfect_pair_state, CatStateSpec, PairAmplitudes};

/// Expected photon counts at or above this value break the weak-signal
/// assumption behind the first-order rate.
pub const WEAK_SIGNAL_LIMIT: f64 = 0.1;

/// Ratio treated as "much less than" by [`RegimeCheck`].
pub const REGIME_RATIO: f64 = 0.1;

/// Emission rate over a counting window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalResult {
    pub alpha: f64,
    pub n_ph_expected: f64,
    pub delta_t: f64,
    pub snr: f64,
    /// Set when `n_ph_expected ≥ 0.1`, i.e. the window is too long for the
    /// first-order estimate.
    pub beyond_weak_signal: bool,
}

impl SignalResult {
    pub fn new(alpha: f64, delta_t: f64) -> Result<Self> {
        if !(delta_t > 0.0) {
            return Err(invalid("counting window must be positive"));
        }
        if !(alpha >= 0.0) {
            return Err(invalid(format!("emission rate must be non-negative, got {alpha}")));
        }
        let n_ph_expected = alpha * delta_t;
        Ok(Self {
            alpha,
            n_ph_expected,
            delta_t,
            snr: shot_noise_snr(n_ph_expected),
            beyond_weak_signal: n_ph_expected >= WEAK_SIGNAL_LIMIT,
        })
    }
}

/// Superradiant bad-cavity regime check `Γ ≪ g√N ≪ κ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeCheck {
    pub big_gamma: f64,
    pub g_rms: f64,
    pub kappa: f64,
    pub n_atoms: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeReport {
    pub collective_coupling: f64,
    /// `Γ / (g√N)`
    pub emission_ratio: f64,
    /// `g√N / κ`
    pub cavity_ratio: f64,
    pub pass: bool,
}

impl RegimeCheck {
    pub fn evaluate(&self) -> Result<RegimeReport> {
        if !(self.g_rms > 0.0 && self.kappa > 0.0 && self.big_gamma >= 0.0 && self.n_atoms > 0) {
            return Err(invalid("regime check needs g > 0, κ > 0, Γ ≥ 0, N > 0"));
        }
        let collective = self.g_rms * (self.n_atoms as f64).sqrt();
        let emission_ratio = self.big_gamma / collective;
        let cavity_ratio = collective / self.kappa;
        Ok(RegimeReport {
            collective_coupling: collective,
            emission_ratio,
            cavity_ratio,
            pass: emission_ratio <= REGIME_RATIO && cavity_ratio <= REGIME_RATIO,
        })
    }
}

/// `α = 2γ⟨ψ|J+J−|ψ⟩`.
pub fn alpha_collective(state: &QuantumState, c: &CouplingConfig) -> Result<f64> {
    Ok(2.0 * c.gamma() * expect_jplus_jminus(state, c)?)
}

/// `α` in units of `γ|G̃1 − G̃2|²`.
pub fn in_mismatch_units(alpha: f64, gamma: f64, g1: C64, g2: C64) -> Result<f64> {
    let scale = gamma * (g1 - g2).norm_sqr();
    if scale == 0.0 {
        return Err(invalid("mismatch units undefined for G̃1 = G̃2"));
    }
    Ok(alpha / scale)
}

/// `f(N, b) = 4|b|²[N/2 + N/2 (N/2 − 1)(1 − |b|²)]`.
pub fn f_factor(n_atoms: usize, b_abs: f64) -> f64 {
    let h = n_atoms as f64 / 2.0;
    let b2 = b_abs * b_abs;
    4.0 * b2 * (h + h * (h - 1.0) * (1.0 - b2))
}

/// Pair-sum formula for `α` of `⊗_l (a_l|t−⟩ + b_l|s⟩)` (standard singlets)
/// under arbitrary per-atom couplings.
pub fn alpha_pair_closed_form(p: &PairAmplitudes, c: &CouplingConfig) -> Result<f64> {
    if !p.in_singlet_span() {
        return Err(invalid("closed form requires c = d = 0 on every pair"));
    }
    if p.n_atoms() != c.n_atoms() {
        return Err(Error::DimensionMismatch {
            expected: c.n_atoms(),
            found: p.n_atoms(),
        });
    }
    let h = p.n_pairs();
    let g = c.g_tilde();
    let mut diagonal = 0.0;
    let mut coherent = C64::new(0.0, 0.0);
    let mut coherent_diag = 0.0;
    for (i, pair) in p.pairs().iter().enumerate() {
        let (a, b) = (pair[0], pair[1]);
        let delta = g[i] - g[i + h];
        diagonal += delta.norm_sqr() * b.norm_sqr();
        let w = delta * b * a.conj();
        coherent += w;
        coherent_diag += w.norm_sqr();
    }
    // Σ_{i≠j} w_i* w_j = |Σ w|² − Σ |w|²
    Ok(c.gamma() * (diagonal + coherent.norm_sqr() - coherent_diag))
}

/// `⟨n_ph⟩` for the imperfect preparation `(a, b, c, d)` on every pair,
/// evaluated three ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImperfectComparison {
    /// `Δt · α` from the state vector; authoritative.
    pub brute_force: f64,
    /// Closed form as printed, with `d²(G̃1² + G̃2²)` in the single-pair term.
    pub printed: f64,
    /// Re-derived closed form, with `2d²(G̃1² + G̃2²)`.
    pub derived: f64,
}

impl ImperfectComparison {
    pub fn value(&self) -> f64 {
        self.brute_force
    }
}

#[allow(clippy::too_many_arguments)]
pub fn n_ph_imperfect(
    abcd: [f64; 4],
    n_atoms: usize,
    g1: f64,
    g2: f64,
    gamma: f64,
    delta_t: f64,
) -> Result<ImperfectComparison> {
    let [a, b, c, d] = abcd;
    let r = |x: f64| C64::new(x, 0.0);
    let psi = imperfect_pair_state(r(a), r(b), r(c), r(d), n_atoms)?;
    let cfg = CouplingConfig::two_set(n_atoms, g1, g2, gamma)?;
    let brute_force = alpha_collective(&psi, &cfg)? * delta_t;

    let h = n_atoms as f64 / 2.0;
    let single = ((c - b) * g1 + (c + b) * g2).powi(2);
    let excited = d * d * (g1 * g1 + g2 * g2);
    let cross = ((g2 - g1) * b * (a - d) + (g2 + g1) * c * (a + d)).powi(2);
    let printed = gamma * delta_t * (h * (single + excited) + h * (h - 1.0) * cross);
    let derived = gamma * delta_t * (h * (single + 2.0 * excited) + h * (h - 1.0) * cross);
    Ok(ImperfectComparison {
        brute_force,
        printed,
        derived,
    })
}

/// `⟨n_ph⟩ = (γΔt/3)|δG̃|² N(N+4)` for the total singlet with maximal `ℓ = N/4`.
pub fn n_ph_cat(n_atoms: usize, delta_g: f64, gamma: f64, delta_t: f64) -> Result<f64> {
    CatStateSpec::max_ell_singlet(n_atoms)?;
    let n = n_atoms as f64;
    Ok(gamma * delta_t / 3.0 * delta_g * delta_g * n * (n + 4.0))
}

/// `2γΔt ‖(G̃1 J1− + G̃2 J2−)ψ‖²` in the coupled basis with
/// `G̃1,2 = 1 ± δG̃`.
pub fn n_ph_cat_brute(n_atoms: usize, delta_g: f64, gamma: f64, delta_t: f64) -> Result<f64> {
    let spec = CatStateSpec::max_ell_singlet(n_atoms)?;
    let psi = crate::states::cat_state(&spec)?;
    let out = psi.apply_lowering(C64::new(1.0 + delta_g, 0.0), C64::new(1.0 - delta_g, 0.0));
    let norm: f64 = out.iter().map(|z| z.norm_sqr()).sum();
    Ok(2.0 * gamma * delta_t * norm)
}

/// Spontaneous-emission rate `Γ Σ|b_i|²` of a pair-product state. These
/// photons leave through free space, not the cavity mirror.
pub fn alpha_spontaneous(b: &[C64], big_gamma: f64) -> f64 {
    big_gamma * b.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

/// Shot-noise-limited SNR `⟨n_ph⟩/σ(n_ph) = √⟨n_ph⟩`.
pub fn shot_noise_snr(n_ph_expected: f64) -> f64 {
    n_ph_expected.max(0.0).sqrt()
}

/// Smallest `|δG̃|` reaching `snr_target`.
pub fn min_detectable_delta_g(
    n_atoms: usize,
    b_abs: f64,
    gamma: f64,
    delta_t: f64,
    snr_target: f64,
) -> Result<f64> {
    if !(gamma > 0.0 && delta_t > 0.0 && snr_target > 0.0) {
        return Err(invalid("γ, Δt and the SNR target must be positive"));
    }
    let f = f_factor(n_atoms, b_abs);
    if !(f > 0.0) {
        return Err(Error::InsensitiveState);
    }
    Ok(snr_target / ((gamma * delta_t).sqrt() * f.sqrt()))
}

/// `δL/L` recovered from a measured photon count through the mode geometry.
#[allow(clippy::too_many_arguments)]
pub fn delta_l_inversion(
    n_ph_measured: f64,
    gamma: f64,
    delta_t: f64,
    m: u32,
    n_x: u32,
    x1_over_l: f64,
    n_atoms: usize,
    b_abs: f64,
) -> Result<f64> {
    if n_ph_measured < 0.0 {
        return Err(invalid("photon count must be non-negative"));
    }
    if !(gamma > 0.0 && delta_t > 0.0) {
        return Err(invalid("γ and Δt must be positive"));
    }
    let k = length_sensitivity(m, n_x, x1_over_l)?;
    let f = f_factor(n_atoms, b_abs);
    if !(f > 0.0) {
        return Err(Error::InsensitiveState);
    }
    Ok((n_ph_measured / (gamma * delta_t * k * k * f)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::{delta_g_from_delta_l, CavityGeometry};
    use crate::states::{pair_product_state, relaxation_amplitudes};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn r(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn uniform_pairs(n: usize, a: f64, b: f64) -> PairAmplitudes {
        PairAmplitudes::from_ab(&vec![r(a); n / 2], &vec![r(b); n / 2]).unwrap()
    }

    #[test]
    fn f_factor_values() {
        assert_abs_diff_eq!(f_factor(2, S), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f_factor(8, S), 20.0, epsilon = 1e-13);
        assert_eq!(f_factor(10, 0.0), 0.0);
    }

    #[test]
    fn brute_force_four_atoms() {
        let p = uniform_pairs(4, S, S);
        let psi = pair_product_state(&p, &CouplingConfig::uniform(4, 1.0, 1.0).unwrap()).unwrap();
        let c = CouplingConfig::two_set(4, 1.1, 0.9, 1.0).unwrap();
        let alpha = alpha_collective(&psi, &c).unwrap();
        assert_abs_diff_eq!(alpha, 0.06, epsilon = 1e-14);
        assert_abs_diff_eq!(alpha_pair_closed_form(&p, &c).unwrap(), 0.06, epsilon = 1e-14);
        assert_abs_diff_eq!(0.01 * f_factor(4, S), 0.06, epsilon = 1e-14);
    }

    #[test]
    fn two_atom_mismatch_units() {
        let p = uniform_pairs(2, S, S);
        let psi = pair_product_state(&p, &CouplingConfig::uniform(2, 1.0, 1.0).unwrap()).unwrap();
        let c = CouplingConfig::two_set(2, 1.3, 0.7, 2.0).unwrap();
        let alpha = alpha_collective(&psi, &c).unwrap();
        let units = in_mismatch_units(alpha, 2.0, r(1.3), r(0.7)).unwrap();
        assert_abs_diff_eq!(units, 0.5, epsilon = 1e-13);
    }

    #[test]
    fn dark_state_has_zero_alpha() {
        let p = uniform_pairs(6, 0.6, 0.8);
        let c0 = CouplingConfig::from_real(&[1.0, 0.9, 1.2, 0.7, 1.3, 0.5], 1.0).unwrap();
        let psi = pair_product_state(&p, &c0).unwrap();
        assert!(alpha_collective(&psi, &c0).unwrap() < 1e-28);
    }

    #[test]
    fn closed_form_single_surviving_term() {
        let p = PairAmplitudes::from_ab(&[r(0.0), r(1.0)], &[r(1.0), r(0.0)]).unwrap();
        let c = CouplingConfig::from_real(&[1.2, 1.0, 0.8, 1.0], 1.0).unwrap();
        assert_abs_diff_eq!(alpha_pair_closed_form(&p, &c).unwrap(), 0.16, epsilon = 1e-14);
        let psi = pair_product_state(&p, &CouplingConfig::uniform(4, 1.0, 1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(alpha_collective(&psi, &c).unwrap(), 0.16, epsilon = 1e-14);
        let dark = uniform_pairs(4, 1.0, 0.0);
        assert_eq!(alpha_pair_closed_form(&dark, &c).unwrap(), 0.0);
    }

    #[test]
    fn uniform_pairs_reduce_to_f_factor() {
        for n in [2usize, 4, 6, 8, 10] {
            for b in [0.2, S, 0.9] {
                let a = (1.0 - b * b).sqrt();
                let p = uniform_pairs(n, a, b);
                let c = CouplingConfig::two_set(n, 1.05, 0.93, 1.7).unwrap();
                let dg = (1.05f64 - 0.93) / 2.0;
                let expected = 1.7 * dg * dg * f_factor(n, b);
                assert_relative_eq!(alpha_pair_closed_form(&p, &c).unwrap(), expected, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn imperfect_limits() {
        let cmp = n_ph_imperfect([1.0, 0.0, 0.0, 0.0], 4, 1.1, 0.9, 1.0, 1.0).unwrap();
        assert_eq!(cmp.brute_force, 0.0);

        let cmp = n_ph_imperfect([0.0, 0.0, 0.0, 1.0], 4, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(cmp.brute_force, 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cmp.derived, 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cmp.printed, 4.0, epsilon = 1e-12);

        let (g1, g2, b) = (1.2, 0.8, 0.6);
        let cmp = n_ph_imperfect([0.8, b, 0.0, 0.0], 6, g1, g2, 1.5, 0.2).unwrap();
        let dg: f64 = (g1 - g2) / 2.0;
        let want = 1.5 * 0.2 * dg * dg * f_factor(6, b);
        assert_relative_eq!(cmp.brute_force, want, max_relative = 1e-12);
        assert_relative_eq!(cmp.printed, want, max_relative = 1e-12);
    }

    #[test]
    fn imperfect_derived_form_matches_brute_force() {
        for delta in [0.1, 0.5, 1.2] {
            let [a, b, _, d] = relaxation_amplitudes(delta);
            let c = 0.3;
            let norm = (a * a + b * b + c * c + d * d).sqrt();
            let abcd = [a / norm, b / norm, c / norm, d / norm];
            let cmp = n_ph_imperfect(abcd, 6, 1.1, 0.85, 1.0, 1.0).unwrap();
            assert_relative_eq!(cmp.derived, cmp.brute_force, max_relative = 1e-12);
            assert!((cmp.printed - cmp.brute_force).abs() > 1e-3);
        }
        assert!(n_ph_imperfect([0.5, 0.5, 0.0, 0.0], 4, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn cat_photon_numbers() {
        assert_relative_eq!(n_ph_cat(4, 1.0, 1.0, 1.0).unwrap(), 32.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(n_ph_cat(8, 1.0, 1.0, 1.0).unwrap(), 32.0, max_relative = 1e-14);
        assert_eq!(n_ph_cat(8, 0.0, 1.0, 1.0).unwrap(), 0.0);
        assert!(n_ph_cat(6, 0.1, 1.0, 1.0).is_err());
        for n in [4usize, 8, 12, 16] {
            let closed = n_ph_cat(n, 0.03, 2.0, 0.5).unwrap();
            let brute = n_ph_cat_brute(n, 0.03, 2.0, 0.5).unwrap();
            assert!((closed - brute).abs() < 1e-10);
        }
    }

    #[test]
    fn spontaneous_background() {
        assert_abs_diff_eq!(alpha_spontaneous(&[r(S); 4], 1.0), 2.0, epsilon = 1e-15);
        assert_eq!(alpha_spontaneous(&[r(0.0); 4], 1.0), 0.0);
        assert_eq!(alpha_spontaneous(&[r(1.0), r(0.0), r(0.0)], 3.0), 3.0);
    }

    #[test]
    fn shot_noise() {
        assert_eq!(shot_noise_snr(0.0), 0.0);
        assert_abs_diff_eq!(shot_noise_snr(0.04), 0.2, epsilon = 1e-15);
        let (dg, gdt, n, b) = (0.01, 0.3, 12usize, 0.6);
        let n_ph = gdt * dg * dg * f_factor(n, b);
        assert_relative_eq!(
            shot_noise_snr(n_ph),
            dg * gdt.sqrt() * f_factor(n, b).sqrt(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn signal_result_flags_long_windows() {
        let s = SignalResult::new(0.5, 0.1).unwrap();
        assert!(!s.beyond_weak_signal);
        assert_abs_diff_eq!(s.n_ph_expected, 0.05, epsilon = 1e-15);
        assert!(SignalResult::new(0.5, 0.2).unwrap().beyond_weak_signal);
    }

    #[test]
    fn minimal_delta_g() {
        assert_abs_diff_eq!(min_detectable_delta_g(2, S, 1.0, 1.0, 1.0).unwrap(), S, epsilon = 1e-15);
        assert!(matches!(
            min_detectable_delta_g(8, 0.0, 1.0, 1.0, 1.0),
            Err(Error::InsensitiveState)
        ));
        let ratio = min_detectable_delta_g(4096, S, 1.0, 1.0, 1.0).unwrap()
            / min_detectable_delta_g(1024, S, 1.0, 1.0, 1.0).unwrap();
        assert!((ratio - 0.25).abs() < 1e-3);
    }

    #[test]
    fn length_inversion() {
        // n_x π x1 / L = π/4 gives cot = 1
        let x1 = 0.25 / 3.0;
        let got = delta_l_inversion(2e-3, 1.0, 1.0, 1, 3, x1, 8, S).unwrap();
        let want = (2e-3 / (std::f64::consts::PI.powi(2) * 20.0)).sqrt();
        assert_relative_eq!(got, want, max_relative = 1e-12);
        assert_abs_diff_eq!(got, 3.18e-3, epsilon = 5e-6);
        assert_eq!(delta_l_inversion(0.0, 1.0, 1.0, 1, 3, x1, 8, S).unwrap(), 0.0);
        // antinode
        assert!(delta_l_inversion(1e-3, 1.0, 1.0, 1, 3, 0.5 / 3.0, 8, S).is_err());
    }

    #[test]
    fn length_round_trip() {
        let geom = CavityGeometry::new(1.0, 10, 0.037, 2, 1.0).unwrap();
        let dl = 2.5e-7;
        let dg = delta_g_from_delta_l(&geom, dl).unwrap();
        let (gamma, dt, n, b) = (1.3, 0.4, 16usize, S);
        let n_ph = gamma * dt * dg * dg * f_factor(n, b);
        let back = delta_l_inversion(n_ph, gamma, dt, 2, 10, 0.037, n, b).unwrap();
        assert_relative_eq!(back, dl, max_relative = 1e-12);
    }

    #[test]
    fn regime_check() {
        let report = RegimeCheck { big_gamma: 0.001, g_rms: 1.0, kappa: 100.0, n_atoms: 16 }
            .evaluate()
            .unwrap();
        assert!(report.pass);
        assert_abs_diff_eq!(report.collective_coupling, 4.0, epsilon = 1e-15);
        let report = RegimeCheck { big_gamma: 1.0, g_rms: 1.0, kappa: 100.0, n_atoms: 16 }
            .evaluate()
            .unwrap();
        assert!(!report.pass);
    }
}
