//! Standing-wave mode geometry and the lattice-position calibration loop.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{invalid, Error, Result};
use crate::signal::f_factor;

/// `(1 + √5)/2`
pub const GOLDEN_RATIO: f64 = 1.618_033_988_749_895;

const DEGENERATE_TOL: f64 = 1e-12;

/// Two atomic lattices at `x1` and `x2 = x1 + mλ` inside a cavity of length
/// `L` driven on mode `n_x`, with `λ = 2L/n_x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityGeometry {
    length: f64,
    n_x: u32,
    x1: f64,
    m: u32,
    g0: f64,
    g_norm: f64,
}

impl CavityGeometry {
    /// `g0` absorbs the field amplitude and dipole projection into one
    /// positive prefactor. Couplings are normalized by their RMS over all
    /// atoms at this reference geometry.
    pub fn new(length: f64, n_x: u32, x1_over_l: f64, m: u32, g0: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(invalid("cavity length must be positive"));
        }
        if n_x < 2 || m < 1 || m > n_x - 1 {
            return Err(invalid(format!("need 1 ≤ m ≤ n_x − 1, got m = {m}, n_x = {n_x}")));
        }
        if !(g0 > 0.0) {
            return Err(invalid("g0 must be positive"));
        }
        let x1 = x1_over_l * length;
        let x2 = x1 + 2.0 * f64::from(m) * length / f64::from(n_x);
        if !(x1 > 0.0 && x2 < length) {
            return Err(invalid(format!(
                "lattices must satisfy 0 < x1 < x2 < L (x1 = {x1}, x2 = {x2}, L = {length})"
            )));
        }
        let s = (f64::from(n_x) * PI * x1_over_l).sin();
        if s.abs() < DEGENERATE_TOL {
            return Err(Error::DegenerateGeometry("lattices sit at a node of the mode".into()));
        }
        Ok(Self {
            length,
            n_x,
            x1,
            m,
            g0,
            g_norm: g0 * s.abs(),
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_x(&self) -> u32 {
        self.n_x
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn x2(&self) -> f64 {
        self.x1 + self.wavelength() * f64::from(self.m)
    }

    pub fn x1_over_l(&self) -> f64 {
        self.x1 / self.length
    }

    pub fn wavelength(&self) -> f64 {
        2.0 * self.length / f64::from(self.n_x)
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    /// RMS coupling at the reference geometry.
    pub fn normalization(&self) -> f64 {
        self.g_norm
    }

    /// Set couplings `(G̃1, G̃2)` when the cavity length is changed to
    /// `length`, lattice positions and normalization held fixed.
    pub fn set_couplings_at_length(&self, length: f64) -> (f64, f64) {
        let k = f64::from(self.n_x) * PI / length;
        let g = |x: f64| self.g0 * (k * x).sin() / self.g_norm;
        (g(self.x1), g(self.x2()))
    }
}

/// `g̃(x) = g0 sin(n_x π x / L) / g`.
pub fn coupling_at(geometry: &CavityGeometry, x: f64) -> Result<f64> {
    if !(x > 0.0 && x < geometry.length) {
        return Err(invalid(format!("position {x} outside the cavity (0, {})", geometry.length)));
    }
    let k = f64::from(geometry.n_x) * PI / geometry.length;
    Ok(geometry.g0 * (k * x).sin() / geometry.g_norm)
}

/// `m π cot(n_x π x1 / L)`, the factor linking `δG̃` to `δL/L`.
pub fn length_sensitivity(m: u32, n_x: u32, x1_over_l: f64) -> Result<f64> {
    let phase = f64::from(n_x) * PI * x1_over_l;
    let (s, c) = phase.sin_cos();
    if c.abs() < DEGENERATE_TOL {
        return Err(Error::DegenerateGeometry(
            "lattice at an antinode: δG̃ is second order in δL".into(),
        ));
    }
    if s.abs() < DEGENERATE_TOL {
        return Err(Error::DegenerateGeometry("lattice at a node: coupling vanishes".into()));
    }
    Ok(f64::from(m) * PI * c / s)
}

/// First-order `δG̃` for a relative length change `δL/L`.
pub fn delta_g_from_delta_l(geometry: &CavityGeometry, delta_l_over_l: f64) -> Result<f64> {
    Ok(length_sensitivity(geometry.m, geometry.n_x, geometry.x1_over_l())? * delta_l_over_l)
}

/// Rejects lattice-2 brackets in which the mode function changes sign.
pub fn check_bracket_avoids_nodes(geometry: &CavityGeometry, lo: f64, hi: f64) -> Result<()> {
    let k = f64::from(geometry.n_x) * PI / geometry.length;
    let (a, b) = ((k * lo / PI).floor(), (k * hi / PI).floor());
    let on_node = |x: f64| (k * x).sin().abs() < DEGENERATE_TOL;
    if a != b || on_node(lo) || on_node(hi) {
        return Err(Error::DegenerateGeometry(format!(
            "bracket [{lo}, {hi}] crosses a node of the mode"
        )));
    }
    Ok(())
}

/// Pair budget shared between calibration probes and the final measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CalibrationBudget {
    pub total_pairs: usize,
    pub pairs_per_probe: usize,
    /// Pairs kept back for the measurement after calibration.
    pub reserve: usize,
    pub probes_used: usize,
}

impl CalibrationBudget {
    pub fn new(total_pairs: usize, pairs_per_probe: usize, reserve: usize) -> Result<Self> {
        if pairs_per_probe == 0 {
            return Err(invalid("a probe must use at least one pair"));
        }
        if reserve > total_pairs {
            return Err(invalid("reserve exceeds the total number of pairs"));
        }
        Ok(Self {
            total_pairs,
            pairs_per_probe,
            reserve,
            probes_used: 0,
        })
    }

    /// `⌈N / (2 ln N)⌉` pairs, i.e. `O(N/ln N)` atoms per probe.
    pub fn default_pairs_per_probe(n_atoms: usize) -> usize {
        let n = n_atoms as f64;
        (n / (2.0 * n.ln())).ceil().max(1.0) as usize
    }

    /// Budget for `N` measurement atoms: `N/2` reserved pairs plus enough
    /// probe batches for `max_probes` golden-section steps.
    pub fn for_atoms(n_atoms: usize, max_probes: usize) -> Result<Self> {
        if n_atoms < 2 {
            return Err(invalid("need at least two atoms"));
        }
        let per_probe = Self::default_pairs_per_probe(n_atoms);
        let reserve = n_atoms / 2;
        Self::new(reserve + per_probe * max_probes, per_probe, reserve)
    }

    pub fn available_probes(&self) -> usize {
        (self.total_pairs - self.reserve) / self.pairs_per_probe
    }

    pub fn atoms_per_probe(&self) -> usize {
        2 * self.pairs_per_probe
    }

    fn try_consume(&mut self) -> bool {
        if self.probes_used < self.available_probes() {
            self.probes_used += 1;
            true
        } else {
            false
        }
    }
}

/// Probe count needed to shrink a bracket of `width` below `tol`.
pub fn golden_section_probe_bound(width: f64, tol: f64) -> usize {
    if width <= tol {
        return 0;
    }
    ((width / tol).ln() / GOLDEN_RATIO.ln()).ceil() as usize + 2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOutcome {
    pub estimate: f64,
    pub bracket: (f64, f64),
    pub probes_used: usize,
}

/// Golden-section search for the minimum of a (possibly noisy) probe
/// signal. Each call to `measure` consumes one probe batch from `budget`.
/// Stops once the bracket is no wider than `tol` and returns its midpoint.
pub fn calibrate_golden_section<F>(
    mut measure: F,
    bracket: (f64, f64),
    tol: f64,
    budget: &mut CalibrationBudget,
) -> Result<CalibrationOutcome>
where
    F: FnMut(f64) -> f64,
{
    let (mut lo, mut hi) = bracket;
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid(format!("invalid bracket [{lo}, {hi}]")));
    }
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let start = budget.probes_used;
    let done = |lo: f64, hi: f64, budget: &CalibrationBudget| CalibrationOutcome {
        estimate: 0.5 * (lo + hi),
        bracket: (lo, hi),
        probes_used: budget.probes_used - start,
    };
    if hi - lo <= tol {
        return Ok(done(lo, hi, budget));
    }

    let inv_phi = 1.0 / GOLDEN_RATIO;
    let mut probe = |x: f64, budget: &mut CalibrationBudget, lo: f64, hi: f64| {
        if budget.try_consume() {
            Ok(measure(x))
        } else {
            Err(Error::CalibrationFailed {
                probes_used: budget.probes_used - start,
                lo,
                hi,
            })
        }
    };
    let mut c = hi - (hi - lo) * inv_phi;
    let mut d = lo + (hi - lo) * inv_phi;
    let mut fc = probe(c, budget, lo, hi)?;
    let mut fd = probe(d, budget, lo, hi)?;
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - (hi - lo) * inv_phi;
            fc = probe(c, budget, lo, hi)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + (hi - lo) * inv_phi;
            fd = probe(d, budget, lo, hi)?;
        }
    }
    Ok(done(lo, hi, budget))
}

/// Simulated probe measurement: a batch of `atoms` atoms in pair-product
/// states with singlet weight `b` emits a Poisson-distributed photon count
/// with mean `exposure · f(atoms, b) · (sensitivity · (x − x*))²`.
///
/// `exposure` lumps `γΔt` and the number of repetitions averaged per probe.
#[derive(Debug, Clone)]
pub struct ProbeOracle {
    pub x_star: f64,
    pub sensitivity: f64,
    pub exposure: f64,
    pub atoms: usize,
    pub b_abs: f64,
    rng: Option<ChaCha8Rng>,
}

impl ProbeOracle {
    pub fn noiseless(x_star: f64, sensitivity: f64, exposure: f64, atoms: usize, b_abs: f64) -> Self {
        Self {
            x_star,
            sensitivity,
            exposure,
            atoms,
            b_abs,
            rng: None,
        }
    }

    pub fn poisson(
        x_star: f64,
        sensitivity: f64,
        exposure: f64,
        atoms: usize,
        b_abs: f64,
        seed: u64,
    ) -> Self {
        Self {
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
            ..Self::noiseless(x_star, sensitivity, exposure, atoms, b_abs)
        }
    }

    pub fn mean(&self, x: f64) -> f64 {
        let dg = self.sensitivity * (x - self.x_star);
        self.exposure * f_factor(self.atoms, self.b_abs) * dg * dg
    }

    pub fn measure(&mut self, x: f64) -> f64 {
        let mean = self.mean(x);
        match self.rng.as_mut() {
            None => mean,
            Some(rng) if mean > 0.0 => Poisson::new(mean)
                .map(|p| p.sample(rng))
                .unwrap_or(mean),
            Some(_) => 0.0,
        }
    }
}
