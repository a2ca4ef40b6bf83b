//! Stochastic Schrödinger equation for relaxation into the dark subspace.
//!
//! Homodyne-type unraveling with an Euler step:
//!
//! ```text
//! ψ' = ψ + γ dt (2e J− − J+J− − e²) ψ + √(2γ) dW (J− − e) ψ,   e = Re⟨J−⟩
//! ```
//!
//! For real couplings and real states `e = ⟨J−⟩`. Two state spaces are
//! supported: the full `2^N` register and the pair-permutation-symmetric
//! subspace, which is invariant when both sets have uniform couplings and
//! every pair starts in the same local state.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::fit::{compensated_sum, mean_and_stderr};
use crate::hilbert::{lower_into, norm_sqr, raise_into, CouplingConfig, QuantumState, MAX_ATOMS};
use crate::C64;

/// Reference realization counts per `N = 2, 4, …, 18`.
pub const REFERENCE_REALIZATIONS: [usize; 9] = [100_000, 10_000, 10_000, 2_500, 1_000, 1_250, 250, 200, 250];

/// Default realization count for `n_atoms`, if it is in the reference table.
pub fn reference_realizations(n_atoms: usize) -> Option<usize> {
    if n_atoms < 2 || !n_atoms.is_multiple_of(2) {
        return None;
    }
    REFERENCE_REALIZATIONS.get(n_atoms / 2 - 1).copied()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SseConfig {
    /// Step size in units of `1/γ`.
    pub dt: f64,
    /// Stop once `‖ψ_{k+1} − ψ_k‖` falls below this.
    pub convergence_tol: f64,
    pub max_steps: usize,
    pub seed: u64,
    pub n_realizations: usize,
    pub renormalize: bool,
    /// Keep per-realization records in the result.
    pub keep_records: bool,
    /// `‖J−ψ‖` above this at convergence is counted as a dark-state warning.
    pub dark_tol: f64,
}

impl Default for SseConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            convergence_tol: 1e-12,
            max_steps: 1_000_000,
            seed: 0,
            n_realizations: 1000,
            renormalize: true,
            keep_records: false,
            dark_tol: 1e-6,
        }
    }
}

impl SseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt must be positive"));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(invalid("convergence tolerance must be positive"));
        }
        if self.n_realizations == 0 {
            return Err(invalid("need at least one realization"));
        }
        if self.max_steps == 0 {
            return Err(invalid("max_steps must be positive"));
        }
        Ok(())
    }
}

/// A collective lowering operator on some state space.
pub trait CollectiveLowering: Sync {
    fn dim(&self) -> usize;
    fn n_atoms(&self) -> usize;
    fn gamma(&self) -> f64;
    /// `out = J− input`, overwriting `out`.
    fn lower(&self, input: &[C64], out: &mut [C64]);
    /// `out = J+ input`, overwriting `out`.
    fn raise(&self, input: &[C64], out: &mut [C64]);
    /// Number of excited atoms in basis state `index`.
    fn excitations(&self, index: usize) -> usize;

    /// `2γ‖J−ψ‖²`.
    fn alpha(&self, psi: &[C64]) -> f64 {
        let mut out = vec![C64::new(0.0, 0.0); psi.len()];
        self.lower(psi, &mut out);
        2.0 * self.gamma() * norm_sqr(&out)
    }

    fn expect_jz(&self, psi: &[C64]) -> f64 {
        let half = self.n_atoms() as f64 / 2.0;
        psi.iter()
            .enumerate()
            .map(|(i, z)| z.norm_sqr() * (self.excitations(i) as f64 - half))
            .sum()
    }
}

/// `J−` on the full qubit register.
#[derive(Debug, Clone)]
pub struct QubitLowering {
    g: Vec<C64>,
    gamma: f64,
}

impl QubitLowering {
    pub fn new(c: &CouplingConfig) -> Self {
        Self {
            g: c.g_tilde().to_vec(),
            gamma: c.gamma(),
        }
    }
}

impl CollectiveLowering for QubitLowering {
    fn dim(&self) -> usize {
        1 << self.g.len()
    }

    fn n_atoms(&self) -> usize {
        self.g.len()
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn lower(&self, input: &[C64], out: &mut [C64]) {
        lower_into(&self.g, input, out);
    }

    fn raise(&self, input: &[C64], out: &mut [C64]) {
        raise_into(&self.g, input, out);
    }

    fn excitations(&self, index: usize) -> usize {
        index.count_ones() as usize
    }
}

// (to, from) local-state moves of one pair under σ−: right atom (set S2)
// and left atom (set S1).
const PAIR_MOVES: [(usize, usize, bool); 4] = [(0, 1, false), (0, 2, true), (1, 3, true), (2, 3, false)];

/// Symmetric states of `P` identical pairs, labelled by occupation numbers
/// `(n00, n01, n10, n11)` with sum `P`. Dimension `C(P+3, 3)`.
#[derive(Debug, Clone)]
pub struct PairSymmetricSpace {
    n_pairs: usize,
    states: Vec<[u16; 4]>,
    index: HashMap<[u16; 4], usize>,
    // (to, from, √(n_from (n_to + 1)), uses G1)
    moves: Vec<(usize, usize, f64, bool)>,
}

impl PairSymmetricSpace {
    pub fn new(n_pairs: usize) -> Result<Self> {
        if n_pairs == 0 || n_pairs > u16::MAX as usize {
            return Err(invalid(format!("unsupported number of pairs {n_pairs}")));
        }
        let p = n_pairs as u16;
        let mut states = Vec::new();
        for n0 in (0..=p).rev() {
            for n1 in (0..=p - n0).rev() {
                for n2 in (0..=p - n0 - n1).rev() {
                    states.push([n0, n1, n2, p - n0 - n1 - n2]);
                }
            }
        }
        let index: HashMap<_, _> = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let mut moves = Vec::new();
        for (from_idx, s) in states.iter().enumerate() {
            for &(to, from, left) in &PAIR_MOVES {
                if s[from] == 0 {
                    continue;
                }
                let mut t = *s;
                t[from] -= 1;
                t[to] += 1;
                let coeff = (f64::from(s[from]) * f64::from(s[to] + 1)).sqrt();
                moves.push((index[&t], from_idx, coeff, left));
            }
        }
        Ok(Self {
            n_pairs,
            states,
            index,
            moves,
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn occupations(&self, index: usize) -> [u16; 4] {
        self.states[index]
    }

    /// `J−` for set couplings `(G̃1, G̃2)`.
    pub fn lowering(&self, g1: C64, g2: C64, gamma: f64) -> PairSymmetricLowering<'_> {
        let moves = self
            .moves
            .iter()
            .map(|&(to, from, c, left)| (to, from, if left { g1 } else { g2 } * c))
            .collect();
        PairSymmetricLowering {
            space: self,
            moves,
            gamma,
        }
    }

    /// `⊗_l φ` with `φ` in the pair-local basis `|00⟩, |01⟩, |10⟩, |11⟩`.
    pub fn product_state(&self, local: [C64; 4]) -> Result<Vec<C64>> {
        let n = norm_sqr(&local);
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized { norm_sqr: n });
        }
        Ok(self
            .states
            .iter()
            .map(|s| {
                let mut z = C64::new(multinomial(self.n_pairs, s).sqrt(), 0.0);
                for (phi, &k) in local.iter().zip(s) {
                    z *= phi.powu(u32::from(k));
                }
                z
            })
            .collect())
    }

    /// The same state in the full `2^N` register.
    pub fn embed(&self, amplitudes: &[C64]) -> Result<QuantumState> {
        if amplitudes.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: amplitudes.len(),
            });
        }
        let p = self.n_pairs;
        let n_atoms = 2 * p;
        if n_atoms > MAX_ATOMS {
            return Err(Error::TooLarge(format!("{n_atoms} atoms")));
        }
        let full = (0..1usize << n_atoms)
            .map(|s| {
                let mut occ = [0u16; 4];
                for l in 0..p {
                    occ[2 * ((s >> l) & 1) + ((s >> (l + p)) & 1)] += 1;
                }
                amplitudes[self.index[&occ]] / multinomial(p, &occ).sqrt()
            })
            .collect();
        QuantumState::new(n_atoms, full)
    }
}

fn multinomial(total: usize, parts: &[u16; 4]) -> f64 {
    let mut out = 1.0;
    let mut k = 0usize;
    for &n in parts {
        for j in 1..=n as usize {
            k += 1;
            out *= k as f64 / j as f64;
        }
    }
    debug_assert_eq!(k, total);
    out
}

#[derive(Debug, Clone)]
pub struct PairSymmetricLowering<'a> {
    space: &'a PairSymmetricSpace,
    moves: Vec<(usize, usize, C64)>,
    gamma: f64,
}

impl CollectiveLowering for PairSymmetricLowering<'_> {
    fn dim(&self) -> usize {
        self.space.dim()
    }

    fn n_atoms(&self) -> usize {
        2 * self.space.n_pairs
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn lower(&self, input: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for &(to, from, c) in &self.moves {
            out[to] += c * input[from];
        }
    }

    fn raise(&self, input: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for &(to, from, c) in &self.moves {
            out[from] += c.conj() * input[to];
        }
    }

    fn excitations(&self, index: usize) -> usize {
        let s = self.space.states[index];
        usize::from(s[1]) + usize::from(s[2]) + 2 * usize::from(s[3])
    }
}

/// Scratch buffers for one trajectory.
struct Workspace {
    jm: Vec<C64>,
    jpjm: Vec<C64>,
    next: Vec<C64>,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        let zero = vec![C64::new(0.0, 0.0); dim];
        Self {
            jm: zero.clone(),
            jpjm: zero.clone(),
            next: zero,
        }
    }
}

struct StepInfo {
    step_norm: f64,
    /// `‖J−ψ‖²` before the step.
    residual_sqr: f64,
}

fn euler_step<L: CollectiveLowering>(
    op: &L,
    psi: &mut Vec<C64>,
    ws: &mut Workspace,
    dt: f64,
    dw: f64,
    renormalize: bool,
) -> StepInfo {
    op.lower(psi, &mut ws.jm);
    let residual_sqr = norm_sqr(&ws.jm);
    if residual_sqr == 0.0 {
        return StepInfo {
            step_norm: 0.0,
            residual_sqr,
        };
    }
    let e: f64 = psi.iter().zip(&ws.jm).map(|(p, j)| (p.conj() * j).re).sum();
    op.raise(&ws.jm, &mut ws.jpjm);
    let gamma = op.gamma();
    let drift = gamma * dt;
    let noise = (2.0 * gamma).sqrt() * dw;
    for (((n, &p), &j), &jj) in ws.next.iter_mut().zip(psi.iter()).zip(&ws.jm).zip(&ws.jpjm) {
        *n = p + (j * (2.0 * e) - jj - p * (e * e)) * drift + (j - p * e) * noise;
    }
    if renormalize {
        let scale = 1.0 / norm_sqr(&ws.next).sqrt();
        ws.next.iter_mut().for_each(|z| *z *= scale);
    }
    let step_norm = ws
        .next
        .iter()
        .zip(psi.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    std::mem::swap(psi, &mut ws.next);
    StepInfo {
        step_norm,
        residual_sqr,
    }
}

/// One Euler step of the SSE on the full register. `dt` is the physical
/// step and `dw` a sample of `Normal(0, dt)`.
pub fn sse_step(psi: &QuantumState, c0: &CouplingConfig, dt: f64, dw: f64) -> Result<QuantumState> {
    if !c0.is_real() {
        return Err(Error::ComplexCouplings);
    }
    if psi.n_atoms() != c0.n_atoms() {
        return Err(Error::DimensionMismatch {
            expected: c0.n_atoms(),
            found: psi.n_atoms(),
        });
    }
    let op = QubitLowering::new(c0);
    let mut amps = psi.amplitudes().to_vec();
    let mut ws = Workspace::new(amps.len());
    euler_step(&op, &mut amps, &mut ws, dt, dw, true);
    if !amps.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::NonFinite { steps: 1 });
    }
    Ok(QuantumState::from_normalized(psi.n_atoms(), amps))
}

/// Result of relaxing one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Relaxed<S> {
    pub state: S,
    pub steps: usize,
    /// `‖J−ψ‖` under the relaxation couplings at the end.
    pub dark_residual: f64,
}

impl<S> Relaxed<S> {
    pub fn is_dark(&self, tol: f64) -> bool {
        self.dark_residual < tol
    }
}

/// Per-trajectory random source: the seed selects the generator and the
/// realization index selects an independent stream.
pub fn realization_rng(seed: u64, realization: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(realization);
    rng
}

fn relax_amplitudes<L: CollectiveLowering, R: Rng>(
    op: &L,
    psi0: &[C64],
    cfg: &SseConfig,
    rng: &mut R,
) -> Result<Relaxed<Vec<C64>>> {
    let mut psi = psi0.to_vec();
    let mut ws = Workspace::new(psi.len());
    let dt = cfg.dt / op.gamma();
    let sqrt_dt = dt.sqrt();
    op.lower(&psi, &mut ws.jm);
    if norm_sqr(&ws.jm).sqrt() < cfg.convergence_tol {
        let dark_residual = norm_sqr(&ws.jm).sqrt();
        return Ok(Relaxed {
            state: psi,
            steps: 0,
            dark_residual,
        });
    }
    let mut last = StepInfo {
        step_norm: f64::INFINITY,
        residual_sqr: f64::INFINITY,
    };
    for k in 1..=cfg.max_steps {
        let z: f64 = rng.sample(StandardNormal);
        last = euler_step(op, &mut psi, &mut ws, dt, sqrt_dt * z, cfg.renormalize);
        if !last.step_norm.is_finite() {
            return Err(Error::NonFinite { steps: k });
        }
        if last.step_norm < cfg.convergence_tol {
            op.lower(&psi, &mut ws.jm);
            return Ok(Relaxed {
                dark_residual: norm_sqr(&ws.jm).sqrt(),
                state: psi,
                steps: k,
            });
        }
    }
    Err(Error::Timeout {
        steps: cfg.max_steps,
        last_step_norm: last.step_norm,
        dark_residual: last.residual_sqr.sqrt(),
    })
}

/// Integrates the SSE under `c0` until successive states differ by less
/// than `cfg.convergence_tol`.
pub fn relax_to_dark<R: Rng>(
    psi0: &QuantumState,
    c0: &CouplingConfig,
    cfg: &SseConfig,
    rng: &mut R,
) -> Result<Relaxed<QuantumState>> {
    cfg.validate()?;
    if !c0.is_real() {
        return Err(Error::ComplexCouplings);
    }
    if psi0.n_atoms() != c0.n_atoms() {
        return Err(Error::DimensionMismatch {
            expected: c0.n_atoms(),
            found: psi0.n_atoms(),
        });
    }
    let r = relax_amplitudes(&QubitLowering::new(c0), psi0.amplitudes(), cfg, rng)?;
    let state = if r.steps == 0 {
        psi0.clone()
    } else {
        QuantumState::new(psi0.n_atoms(), r.state)?
    };
    Ok(Relaxed {
        state,
        steps: r.steps,
        dark_residual: r.dark_residual,
    })
}

/// Initial condition for ensemble runs.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Full(QuantumState),
    /// The same pair-local vector (basis `|00⟩, |01⟩, |10⟩, |11⟩`) on every
    /// pair.
    IdenticalPairs { local: [C64; 4], n_pairs: usize },
}

impl From<QuantumState> for InitialState {
    fn from(s: QuantumState) -> Self {
        InitialState::Full(s)
    }
}

impl InitialState {
    pub fn n_atoms(&self) -> usize {
        match self {
            InitialState::Full(s) => s.n_atoms(),
            InitialState::IdenticalPairs { n_pairs, .. } => 2 * n_pairs,
        }
    }

    pub fn to_full(&self) -> Result<QuantumState> {
        match self {
            InitialState::Full(s) => Ok(s.clone()),
            InitialState::IdenticalPairs { local, n_pairs } => {
                crate::states::product_of_pairs(&vec![*local; *n_pairs])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizationRecord {
    pub index: usize,
    pub steps: usize,
    pub alpha: f64,
    pub dark_residual: f64,
}

impl RealizationRecord {
    pub const CSV_HEADER: &'static str = "realization,steps,alpha,dark_residual";

    pub fn csv_row(&self) -> String {
        format!("{},{},{:.17e},{:.3e}", self.index, self.steps, self.alpha, self.dark_residual)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub mean_alpha: f64,
    pub std_error: f64,
    pub n_realizations: usize,
    pub seed: u64,
    /// Realizations that converged with `‖J−ψ‖` above the dark tolerance.
    pub dark_warnings: usize,
    pub mean_steps: f64,
    pub records: Option<Vec<RealizationRecord>>,
}

fn run_ensemble<L, M>(relax: &L, psi0: &[C64], measure: M, cfg: &SseConfig) -> Result<EnsembleResult>
where
    L: CollectiveLowering,
    M: Fn(&[C64]) -> f64 + Sync,
{
    cfg.validate()?;
    let records = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|r| {
            let mut rng = realization_rng(cfg.seed, r as u64);
            let out = relax_amplitudes(relax, psi0, cfg, &mut rng)?;
            Ok(RealizationRecord {
                index: r,
                steps: out.steps,
                alpha: measure(&out.state),
                dark_residual: out.dark_residual,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let alphas: Vec<f64> = records.iter().map(|r| r.alpha).collect();
    let (mean_alpha, std_error) = mean_and_stderr(&alphas);
    let steps: Vec<f64> = records.iter().map(|r| r.steps as f64).collect();
    Ok(EnsembleResult {
        mean_alpha,
        std_error,
        n_realizations: cfg.n_realizations,
        seed: cfg.seed,
        dark_warnings: records.iter().filter(|r| r.dark_residual >= cfg.dark_tol).count(),
        mean_steps: compensated_sum(&steps) / steps.len() as f64,
        records: cfg.keep_records.then_some(records),
    })
}

fn real_set_couplings(c: &CouplingConfig) -> Option<(C64, C64)> {
    c.is_real().then(|| c.set_couplings()).flatten()
}

/// Relax each realization under `c0_relax`, then evaluate `α` under
/// `c_perturbed`. Uses the pair-symmetric space when the initial state and
/// both coupling sets allow it.
pub fn ensemble_alpha(
    initial: &InitialState,
    c0_relax: &CouplingConfig,
    c_perturbed: &CouplingConfig,
    cfg: &SseConfig,
) -> Result<EnsembleResult> {
    for c in [c0_relax, c_perturbed] {
        if c.n_atoms() != initial.n_atoms() {
            return Err(Error::DimensionMismatch {
                expected: c.n_atoms(),
                found: initial.n_atoms(),
            });
        }
    }
    if !c0_relax.is_real() {
        return Err(Error::ComplexCouplings);
    }
    if let InitialState::IdenticalPairs { local, n_pairs } = initial {
        if let (Some((g1, g2)), Some((h1, h2))) =
            (real_set_couplings(c0_relax), c_perturbed.set_couplings())
        {
            let space = PairSymmetricSpace::new(*n_pairs)?;
            let relax = space.lowering(g1, g2, c0_relax.gamma());
            let meas = space.lowering(h1, h2, c_perturbed.gamma());
            let psi0 = space.product_state(*local)?;
            return run_ensemble(&relax, &psi0, |psi| meas.alpha(psi), cfg);
        }
    }
    let psi0 = initial.to_full()?;
    let relax = QubitLowering::new(c0_relax);
    let meas = QubitLowering::new(c_perturbed);
    run_ensemble(&relax, psi0.amplitudes(), |psi| meas.alpha(psi), cfg)
}

/// Ensemble mean of `⟨J_z⟩` sampled every `sample_every` steps over a fixed
/// horizon of `n_steps`. Returns `(time, mean, std_error)` triples.
pub fn mean_jz_history(
    initial: &InitialState,
    c0: &CouplingConfig,
    cfg: &SseConfig,
    n_steps: usize,
    sample_every: usize,
) -> Result<Vec<(f64, f64, f64)>> {
    cfg.validate()?;
    if sample_every == 0 {
        return Err(invalid("sample_every must be positive"));
    }
    if !c0.is_real() {
        return Err(Error::ComplexCouplings);
    }
    if let InitialState::IdenticalPairs { local, n_pairs } = initial {
        if let Some((g1, g2)) = real_set_couplings(c0) {
            let space = PairSymmetricSpace::new(*n_pairs)?;
            let op = space.lowering(g1, g2, c0.gamma());
            return jz_history(&op, &space.product_state(*local)?, cfg, n_steps, sample_every);
        }
    }
    let psi0 = initial.to_full()?;
    jz_history(&QubitLowering::new(c0), psi0.amplitudes(), cfg, n_steps, sample_every)
}

fn jz_history<L: CollectiveLowering>(
    op: &L,
    psi0: &[C64],
    cfg: &SseConfig,
    n_steps: usize,
    sample_every: usize,
) -> Result<Vec<(f64, f64, f64)>> {
    let dt = cfg.dt / op.gamma();
    let traces = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|r| {
            let mut rng = realization_rng(cfg.seed, r as u64);
            let mut psi = psi0.to_vec();
            let mut ws = Workspace::new(psi.len());
            let mut trace = vec![op.expect_jz(&psi)];
            for k in 1..=n_steps {
                let z: f64 = rng.sample(StandardNormal);
                let info = euler_step(op, &mut psi, &mut ws, dt, dt.sqrt() * z, cfg.renormalize);
                if !info.step_norm.is_finite() {
                    return Err(Error::NonFinite { steps: k });
                }
                if k % sample_every == 0 {
                    trace.push(op.expect_jz(&psi));
                }
            }
            Ok(trace)
        })
        .collect::<Result<Vec<_>>>()?;
    let n_samples = traces[0].len();
    Ok((0..n_samples)
        .map(|i| {
            let column: Vec<f64> = traces.iter().map(|t| t[i]).collect();
            let (mean, err) = mean_and_stderr(&column);
            ((i * sample_every) as f64 * dt, mean, err)
        })
        .collect())
}
