//! Angular-momentum coupling of the two atom sets and the pseudo-spin cat
//! states `|(ℓ,ℓ) j, −j⟩`.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64 as C64;

use crate::error::{invalid, Result};

/// A half-integer quantum number, stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const fn from_twice(twice: i32) -> Self {
        Self(twice)
    }

    pub const fn integer(n: i32) -> Self {
        Self(2 * n)
    }

    /// Accepts values that are integer multiples of ½.
    pub fn try_from_f64(x: f64) -> Result<Self> {
        let twice = 2.0 * x;
        if !twice.is_finite() || (twice - twice.round()).abs() > 1e-9 {
            return Err(invalid(format!("{x} is not a multiple of 1/2")));
        }
        Ok(Self(twice.round() as i32))
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    pub const fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// `√(j(j+1) − m(m±1))` in doubled units; `sign` is +1 for raising.
fn ladder(tj: i32, tm: i32, sign: i32) -> f64 {
    let v = tj * (tj + 2) - tm * (tm + 2 * sign);
    if v <= 0 {
        0.0
    } else {
        (f64::from(v) / 4.0).sqrt()
    }
}

/// All Clebsch–Gordan coefficients `⟨j1 m1; j2 m2 | J M⟩` for one coupling
/// `(j1, j2) → J`, Condon–Shortley phase.
#[derive(Debug, Clone)]
pub struct CgTable {
    tj1: i32,
    tj2: i32,
    tj: i32,
    // row per M (from +J down to −J), column per m1 (from +j1 down to −j1)
    coeffs: Vec<f64>,
}

impl CgTable {
    /// Builds the table by recursion from the highest-weight state. Returns
    /// `None` when `(j1, j2, J)` violates the triangle rule.
    pub fn new(j1: HalfInt, j2: HalfInt, j: HalfInt) -> Option<Self> {
        let (tj1, tj2, tj) = (j1.twice(), j2.twice(), j.twice());
        if tj1 < 0 || tj2 < 0 || tj < 0 {
            return None;
        }
        if tj < (tj1 - tj2).abs() || tj > tj1 + tj2 || (tj1 + tj2 + tj) % 2 != 0 {
            return None;
        }
        let n1 = (tj1 + 1) as usize;
        let nm = (tj + 1) as usize;
        let mut coeffs = vec![0.0; nm * n1];
        let col = |tm1: i32| ((tj1 - tm1) / 2) as usize;

        // Highest weight: J+ |J J⟩ = 0 links neighbouring m1 values.
        let lo = (-tj1).max(tj - tj2);
        let hi = tj1.min(tj + tj2);
        let mut top = vec![0.0; n1];
        top[col(lo)] = 1.0;
        let mut tm1 = lo + 2;
        while tm1 <= hi {
            let prev = top[col(tm1 - 2)];
            let denom = ladder(tj2, tj - tm1, 1);
            top[col(tm1)] = -prev * ladder(tj1, tm1 - 2, 1) / denom;
            tm1 += 2;
        }
        let norm = top.iter().map(|x| x * x).sum::<f64>().sqrt();
        let sign = if top[col(tj1)] < 0.0 { -1.0 } else { 1.0 };
        top.iter_mut().for_each(|x| *x *= sign / norm);
        coeffs[..n1].copy_from_slice(&top);

        // Lower with J− = J1− + J2−.
        for row in 1..nm {
            let tm = tj - 2 * row as i32; // target M
            let prev_tm = tm + 2;
            let denom = ladder(tj, prev_tm, -1);
            for c in 0..n1 {
                let tm1 = tj1 - 2 * c as i32;
                let tm2 = tm - tm1;
                if tm2.abs() > tj2 {
                    continue;
                }
                let mut v = 0.0;
                // from (m1 + 1, m2) via J1−
                if tm1 + 2 <= tj1 {
                    v += coeffs[(row - 1) * n1 + col(tm1 + 2)] * ladder(tj1, tm1 + 2, -1);
                }
                // from (m1, m2 + 1) via J2−
                if tm2 + 2 <= tj2 {
                    v += coeffs[(row - 1) * n1 + c] * ladder(tj2, tm2 + 2, -1);
                }
                coeffs[row * n1 + c] = v / denom;
            }
        }
        Some(Self {
            tj1,
            tj2,
            tj,
            coeffs,
        })
    }

    pub fn get(&self, m1: HalfInt, m2: HalfInt, m: HalfInt) -> f64 {
        let (tm1, tm2, tm) = (m1.twice(), m2.twice(), m.twice());
        if tm1 + tm2 != tm || tm1.abs() > self.tj1 || tm2.abs() > self.tj2 || tm.abs() > self.tj {
            return 0.0;
        }
        if (self.tj1 - tm1) % 2 != 0 || (self.tj2 - tm2) % 2 != 0 || (self.tj - tm) % 2 != 0 {
            return 0.0;
        }
        let row = ((self.tj - tm) / 2) as usize;
        let c = ((self.tj1 - tm1) / 2) as usize;
        self.coeffs[row * (self.tj1 + 1) as usize + c]
    }
}

type CgKey = (i32, i32, i32);

fn cg_cache() -> &'static Mutex<HashMap<CgKey, Option<Arc<CgTable>>>> {
    static CACHE: OnceLock<Mutex<HashMap<CgKey, Option<Arc<CgTable>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached_table(j1: HalfInt, j2: HalfInt, j: HalfInt) -> Option<Arc<CgTable>> {
    let key = (j1.twice(), j2.twice(), j.twice());
    let mut cache = cg_cache().lock().unwrap_or_else(|e| e.into_inner());
    cache
        .entry(key)
        .or_insert_with(|| CgTable::new(j1, j2, j).map(Arc::new))
        .clone()
}

/// `⟨j1 m1; j2 m2 | J M⟩`. Arguments violating the selection rules give 0.
pub fn clebsch_gordan(
    j1: HalfInt,
    m1: HalfInt,
    j2: HalfInt,
    m2: HalfInt,
    j: HalfInt,
    m: HalfInt,
) -> f64 {
    match cached_table(j1, j2, j) {
        Some(table) => table.get(m1, m2, m),
        None => 0.0,
    }
}

/// `|(ℓ,ℓ) j, −j⟩`: two sets of pseudo-angular momentum `ℓ` coupled to total
/// `j` with projection `−j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CatStateSpec {
    ell: HalfInt,
    j: u32,
}

impl CatStateSpec {
    pub fn new(ell: HalfInt, j: u32) -> Result<Self> {
        if ell.twice() <= 0 {
            return Err(invalid("ℓ must be positive"));
        }
        if j as i32 > ell.twice() {
            return Err(invalid(format!("j = {j} exceeds 2ℓ = {}", ell.twice())));
        }
        Ok(Self { ell, j })
    }

    /// Total singlet of `N` atoms with each set at its maximal `ℓ = N/4`.
    pub fn max_ell_singlet(n_atoms: usize) -> Result<Self> {
        if n_atoms == 0 || !n_atoms.is_multiple_of(4) {
            return Err(invalid(format!("N must be a positive multiple of 4, got {n_atoms}")));
        }
        Self::new(HalfInt::from_twice((n_atoms / 2) as i32), 0)
    }

    pub fn ell(&self) -> HalfInt {
        self.ell
    }

    pub fn j(&self) -> u32 {
        self.j
    }
}

/// A state in the product basis `|ℓ m1⟩ ⊗ |ℓ m2⟩`, `m` running from `+ℓ`
/// down to `−ℓ` in each factor.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    ell: HalfInt,
    amplitudes: Vec<f64>,
}

impl CoupledState {
    pub fn ell(&self) -> HalfInt {
        self.ell
    }

    pub fn side(&self) -> usize {
        (self.ell.twice() + 1) as usize
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, m1: HalfInt, m2: HalfInt) -> f64 {
        match (self.index_of(m1), self.index_of(m2)) {
            (Some(i1), Some(i2)) => self.amplitudes[i1 * self.side() + i2],
            _ => 0.0,
        }
    }

    fn index_of(&self, m: HalfInt) -> Option<usize> {
        let t = self.ell.twice() - m.twice();
        (t >= 0 && t % 2 == 0 && t <= 2 * self.ell.twice()).then_some((t / 2) as usize)
    }

    fn m_twice(&self, i: usize) -> i32 {
        self.ell.twice() - 2 * i as i32
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `(G1 J1− + G2 J2−)|ψ⟩`, unnormalized.
    pub fn apply_lowering(&self, g1: C64, g2: C64) -> Vec<C64> {
        let n = self.side();
        let tl = self.ell.twice();
        let mut out = vec![C64::new(0.0, 0.0); n * n];
        for i1 in 0..n {
            for i2 in 0..n {
                let amp = self.amplitudes[i1 * n + i2];
                if amp == 0.0 {
                    continue;
                }
                if i1 + 1 < n {
                    out[(i1 + 1) * n + i2] += g1 * amp * ladder(tl, self.m_twice(i1), -1);
                }
                if i2 + 1 < n {
                    out[i1 * n + i2 + 1] += g2 * amp * ladder(tl, self.m_twice(i2), -1);
                }
            }
        }
        out
    }

    pub fn expect_total_jz(&self) -> f64 {
        let n = self.side();
        (0..n * n)
            .map(|k| {
                let m = f64::from(self.m_twice(k / n) + self.m_twice(k % n)) / 2.0;
                self.amplitudes[k] * self.amplitudes[k] * m
            })
            .sum()
    }

    /// `‖(J_z − λ)ψ‖`; zero for a `J_z` eigenstate with eigenvalue `λ`.
    pub fn jz_residual(&self, eigenvalue: f64) -> f64 {
        let n = self.side();
        (0..n * n)
            .map(|k| {
                let m = f64::from(self.m_twice(k / n) + self.m_twice(k % n)) / 2.0;
                ((m - eigenvalue) * self.amplitudes[k]).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// `|(ℓ,ℓ) j, −j⟩ = Σ ⟨ℓ m1; ℓ m2 | j −j⟩ |m1, m2⟩`.
pub fn cat_state(spec: &CatStateSpec) -> Result<CoupledState> {
    let spec = CatStateSpec::new(spec.ell, spec.j)?;
    let ell = spec.ell;
    let tl = ell.twice();
    let tj = 2 * spec.j as i32;
    let table = cached_table(ell, ell, HalfInt::from_twice(tj))
        .ok_or_else(|| invalid("no coupling for this (ℓ, j)"))?;
    let side = (tl + 1) as usize;
    let mut amplitudes = vec![0.0; side * side];
    for i1 in 0..side {
        let tm1 = tl - 2 * i1 as i32;
        let tm2 = -tj - tm1;
        if tm2.abs() > tl {
            continue;
        }
        let i2 = ((tl - tm2) / 2) as usize;
        amplitudes[i1 * side + i2] = table.get(
            HalfInt::from_twice(tm1),
            HalfInt::from_twice(tm2),
            HalfInt::from_twice(-tj),
        );
    }
    Ok(CoupledState { ell, amplitudes })
}

/// Closed form of `⟨(ℓ,ℓ)j,−j| J1+ J1− |(ℓ,ℓ)j,−j⟩` with `J1− = G̃1 Σ_{S1} σ−`.
pub fn cat_expect_j1pj1m(spec: &CatStateSpec, g1: C64) -> f64 {
    let l = spec.ell.value();
    let j = f64::from(spec.j);
    g1.norm_sqr() * (2.0 * j + 1.0) * (2.0 * j + 2.0) / (4.0 * (j + 1.0).powi(2) - 1.0)
        * (l * (l + 1.0) - j * (j + 2.0) / 4.0)
}

/// Same expectation evaluated by applying `J1−` in the coupled basis.
pub fn cat_expect_j1pj1m_brute(spec: &CatStateSpec, g1: C64) -> Result<f64> {
    let psi = cat_state(spec)?;
    Ok(psi
        .apply_lowering(g1, C64::new(0.0, 0.0))
        .iter()
        .map(|z| z.norm_sqr())
        .sum())
}
