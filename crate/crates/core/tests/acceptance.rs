//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use demsim_core::cavity::{calibrate_golden_section, golden_section_probe_bound, CalibrationBudget, ProbeOracle};
use demsim_core::fit::{fit_fourier, fit_log_linear, fit_power_law};
use demsim_core::liouville::exact_relaxed_alpha;
use demsim_core::noise::{
    fluctuation_std, k_factor, make_correlation, monte_carlo_alpha, snr_under_noise, CorrelationCase,
    SnrUnderNoise,
};
use demsim_core::signal::{
    alpha_collective, alpha_pair_closed_form, f_factor, min_detectable_delta_g, n_ph_cat, n_ph_cat_brute,
    n_ph_imperfect,
};
use demsim_core::sse::{ensemble_alpha, reference_realizations, realization_rng, InitialState, SseConfig};
use demsim_core::states::{
    cat_expect_j1pj1m, cat_expect_j1pj1m_brute, pair_local_amplitudes, pair_product_state, relaxation_amplitudes,
    CatStateSpec, DfsBasis, HalfInt, PairAmplitudes,
};
use demsim_core::{CouplingConfig, C64};
use rand::Rng;

const SEED: u64 = 20_240_611;

struct Outcome {
    pass: bool,
    detail: String,
}

fn r(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-300)
}

/// Relaxation couplings (equal sets) and measurement couplings with
/// `G̃1 − G̃2 = 1`, so `α` comes out in units of `γ(G̃1 − G̃2)²`.
fn coupling_pair(n: usize) -> (CouplingConfig, CouplingConfig) {
    (
        CouplingConfig::uniform(n, 1.0, 1.0).unwrap(),
        CouplingConfig::two_set(n, 1.5, 0.5, 1.0).unwrap(),
    )
}

fn relaxation_initial(n: usize, delta: f64) -> InitialState {
    let local = pair_local_amplitudes(relaxation_amplitudes(delta).map(r), r(1.0), r(1.0)).unwrap();
    InitialState::IdenticalPairs { local, n_pairs: n / 2 }
}

fn closed_form(n: usize, delta: f64) -> f64 {
    let (s2, c4) = ((2.0 * delta).sin(), (4.0 * delta).cos());
    match n {
        2 => 0.5,
        4 => (55.0 - 12.0 * s2 - c4) / 36.0,
        6 => (303.0 - 110.0 * s2 - 3.0 * c4) / 100.0,
        _ => unreachable!(),
    }
}

fn even_range(lo: usize, hi: usize) -> Vec<usize> {
    (lo..=hi).step_by(2).collect()
}

fn slope(ns: &[usize], ys: &[f64]) -> f64 {
    let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    fit_power_law(&x, ys).unwrap().coefficients[1]
}

fn criterion_1() -> Outcome {
    let grid: Vec<f64> = (0..9).map(|k| k as f64 * PI / 16.0).collect();
    let mut worst: f64 = 0.0;
    for n in [2, 4, 6] {
        let (c0, cp) = coupling_pair(n);
        for &d in &grid {
            let got = exact_relaxed_alpha(n, d, &c0, &cp).unwrap();
            worst = worst.max(rel_err(got, closed_form(n, d)));
        }
    }
    Outcome {
        pass: worst <= 1e-6,
        detail: format!("max relative error {worst:.2e} over N=2,4,6 x 9 angles"),
    }
}

// Euler-Maruyama has O(dt) weak error, about +0.4·dt in α at N = 2. At
// dt = 0.01/γ that is several standard errors of the N = 2 ensemble
// (n_r = 100000), so the comparison uses the finest step that fits the
// runtime budget.
const CRITERION_2_DT: f64 = 0.0015;

fn criterion_2() -> Outcome {
    let deltas: Vec<f64> = (0..5).map(|k| k as f64 * PI / 9.0).collect();
    let mut pass = true;
    let mut worst_z: f64 = 0.0;
    let mut z_at_default_dt = 0.0;
    for n in [2, 4, 6] {
        let (c0, cp) = coupling_pair(n);
        for (k, &d) in deltas.iter().enumerate() {
            let exact = exact_relaxed_alpha(n, d, &c0, &cp).unwrap();
            let cfg = SseConfig {
                dt: CRITERION_2_DT,
                n_realizations: reference_realizations(n).unwrap(),
                seed: SEED + (100 * n + k) as u64,
                ..SseConfig::default()
            };
            let res = ensemble_alpha(&relaxation_initial(n, d), &c0, &cp, &cfg).unwrap();
            let diff = (res.mean_alpha - exact).abs();
            let ok = diff <= 3.0 * res.std_error + 1e-9;
            if res.std_error > 0.0 {
                worst_z = worst_z.max(diff / res.std_error);
            }
            if !ok {
                println!("    N={n} δ={d:.4}: {} ± {} vs {exact}", res.mean_alpha, res.std_error);
            }
            pass &= ok;
            if n == 2 && k == 4 {
                let coarse = ensemble_alpha(&relaxation_initial(n, d), &c0, &cp, &SseConfig { dt: 0.01, ..cfg })
                    .unwrap();
                z_at_default_dt = (coarse.mean_alpha - exact) / coarse.std_error;
            }
        }
    }
    println!("    (informational) N=2 δ=4π/9 at dt=0.01: deviation {z_at_default_dt:+.2} standard errors");
    Outcome {
        pass,
        detail: format!(
            "15 ensembles with reference n_r at dt={CRITERION_2_DT}, largest deviation {worst_z:.2} standard errors"
        ),
    }
}

fn criterion_3() -> Outcome {
    // δ = 0 series: closed form against state vectors
    let expected = [0.5, 1.5, 3.0, 5.0, 7.5, 10.5];
    let mut worst: f64 = 0.0;
    for (k, n) in even_range(2, 12).into_iter().enumerate() {
        let (c0, cp) = coupling_pair(n);
        let p = PairAmplitudes::from_ab(&vec![r(FRAC_1_SQRT_2); n / 2], &vec![r(FRAC_1_SQRT_2); n / 2]).unwrap();
        let brute = alpha_collective(&pair_product_state(&p, &c0).unwrap(), &cp).unwrap();
        let closed = f_factor(n, FRAC_1_SQRT_2) / 4.0;
        worst = worst.max((brute - closed).abs()).max((closed - expected[k]).abs());
    }
    let mut pass = worst <= 1e-10;

    // Fourier coefficients from relaxed ensembles
    let base: Vec<f64> = (0..5).map(|k| k as f64 * PI / 9.0).collect();
    let grid: Vec<f64> = base.iter().copied().chain(base.iter().map(|d| PI / 2.0 - d)).collect();
    let mut neg_b = Vec::new();
    let mut coeffs = Vec::new();
    for n in even_range(8, 18) {
        let (c0, cp) = coupling_pair(n);
        let alphas: Vec<f64> = grid
            .iter()
            .enumerate()
            .map(|(k, &d)| {
                let cfg = SseConfig {
                    n_realizations: reference_realizations(n).unwrap(),
                    seed: SEED + (1000 * n + k) as u64,
                    ..SseConfig::default()
                };
                ensemble_alpha(&relaxation_initial(n, d), &c0, &cp, &cfg).unwrap().mean_alpha
            })
            .collect();
        let fit = fit_fourier(&grid, &alphas).unwrap();
        let [a, b, c] = [fit.coefficients[0], fit.coefficients[1], fit.coefficients[2]];
        if n <= 12 {
            pass &= a > 0.0 && b < 0.0 && c.abs() <= 0.05 * a;
        }
        coeffs.push(format!("N={n}: A={a:.3} B={b:.3} C={c:.3}"));
        neg_b.push(-b);
    }
    let p_local = slope(&[8, 10, 12], &neg_b[..3]);
    let p_full = slope(&even_range(8, 18), &neg_b);
    pass &= p_local >= 2.0 && (p_local - 2.4).abs() <= 0.4;
    for line in &coeffs {
        println!("    {line}");
    }
    println!("    (informational) -B exponent over N=8..18: {p_full:.3}");
    Outcome {
        pass,
        detail: format!("δ=0 series max error {worst:.1e}; -B exponent over N=8..12 = {p_local:.3}"),
    }
}

fn random_unit_pair<R: Rng>(rng: &mut R) -> [C64; 2] {
    loop {
        let v = [
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        ];
        let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        if n > 1e-3 {
            return [v[0] / n, v[1] / n];
        }
    }
}

fn random_couplings<R: Rng>(rng: &mut R, n: usize, complex: bool) -> Vec<C64> {
    (0..n)
        .map(|_| {
            let re = rng.random_range(0.2..2.0);
            let im = if complex { rng.random_range(-1.0..1.0) } else { 0.0 };
            C64::new(re, im)
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let mut rng = realization_rng(SEED, 4);
    let mut worst: f64 = 0.0;
    for k in 0..500 {
        let n = 2 * (1 + k % 8);
        let gamma = rng.random_range(0.5..2.0);
        let g = random_couplings(&mut rng, n, k % 2 == 1);
        let c0 = CouplingConfig::new(g, gamma, 0.0).unwrap();
        let (a, b): (Vec<C64>, Vec<C64>) = (0..n / 2).map(|_| random_unit_pair(&mut rng)).map(|[a, b]| (a, b)).unzip();
        let p = PairAmplitudes::from_ab(&a, &b).unwrap();
        let psi = pair_product_state(&p, &c0).unwrap();
        worst = worst.max(alpha_collective(&psi, &c0).unwrap() / gamma);
    }
    Outcome {
        pass: worst < 1e-12,
        detail: format!("500 states, N ≤ 16, max α/γ = {worst:.1e}"),
    }
}

fn criterion_5() -> Outcome {
    let mut rng = realization_rng(SEED, 5);
    let (mut pair_err, mut uniform_err, mut derived_err, mut issue_err): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let mut printed_gap: f64 = 0.0;
    for k in 0..200 {
        let n = 2 * (1 + k % 6);
        let h = n / 2;
        let gamma = rng.random_range(0.5..2.0);
        match k % 3 {
            0 => {
                let (a, b): (Vec<C64>, Vec<C64>) = (0..h).map(|_| random_unit_pair(&mut rng)).map(|[a, b]| (a, b)).unzip();
                let p = PairAmplitudes::from_ab(&a, &b).unwrap();
                let reference = CouplingConfig::uniform(n, 1.0, gamma).unwrap();
                let c = CouplingConfig::new(random_couplings(&mut rng, n, k % 2 == 1), gamma, 0.0).unwrap();
                let brute = alpha_collective(&pair_product_state(&p, &reference).unwrap(), &c).unwrap();
                pair_err = pair_err.max(rel_err(alpha_pair_closed_form(&p, &c).unwrap(), brute));
            }
            1 => {
                let [a, b] = random_unit_pair(&mut rng);
                let p = PairAmplitudes::from_ab(&vec![a; h], &vec![b; h]).unwrap();
                let reference = CouplingConfig::uniform(n, 1.0, gamma).unwrap();
                let (g1, g2) = (rng.random_range(0.2..2.0), rng.random_range(0.2..2.0));
                let c = CouplingConfig::two_set(n, g1, g2, gamma).unwrap();
                let brute = alpha_collective(&pair_product_state(&p, &reference).unwrap(), &c).unwrap();
                let dg = 0.5 * (g1 - g2);
                uniform_err = uniform_err.max(rel_err(gamma * dg * dg * f_factor(n, b.norm()), brute));
            }
            _ => {
                let mut v: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
                let (g1, g2) = (rng.random_range(0.2..2.0), rng.random_range(0.2..2.0));
                let dt = rng.random_range(0.1..2.0);
                let cmp = n_ph_imperfect(v, n, g1, g2, gamma, dt).unwrap();
                derived_err = derived_err.max(rel_err(cmp.derived, cmp.brute_force));
                // known issue: the printed d² term is half the brute-force value
                let missing = gamma * dt * h as f64 * v[3] * v[3] * (g1 * g1 + g2 * g2);
                issue_err = issue_err.max(rel_err(cmp.brute_force - cmp.printed, missing));
                printed_gap = printed_gap.max(rel_err(cmp.printed, cmp.brute_force));
            }
        }
    }
    let pass = pair_err <= 1e-10 && uniform_err <= 1e-10 && derived_err <= 1e-10 && issue_err <= 1e-10;
    Outcome {
        pass,
        detail: format!(
            "pair sum {pair_err:.1e}, uniform f(N,b) {uniform_err:.1e}, imperfect re-derived {derived_err:.1e}; \
             known issue: printed d² term off by factor 2 (max relative gap {printed_gap:.2}, gap matches missing term to {issue_err:.1e})"
        ),
    }
}

fn criterion_6() -> Outcome {
    let mut cat_err: f64 = 0.0;
    for n in [4, 8, 12, 16] {
        for dg in [0.01, 0.1, 0.37] {
            let closed = n_ph_cat(n, dg, 1.3, 0.7).unwrap();
            let brute = n_ph_cat_brute(n, dg, 1.3, 0.7).unwrap();
            cat_err = cat_err.max(rel_err(closed, brute));
        }
    }
    let mut mv_err: f64 = 0.0;
    let mut count = 0;
    for twice_ell in 1..=8 {
        for j in 0..=twice_ell as u32 {
            let spec = CatStateSpec::new(HalfInt::from_twice(twice_ell), j).unwrap();
            for g1 in [r(1.0), C64::new(0.6, -0.8)] {
                let closed = cat_expect_j1pj1m(&spec, g1);
                let brute = cat_expect_j1pj1m_brute(&spec, g1).unwrap();
                mv_err = mv_err.max((closed - brute).abs() / brute.abs().max(1.0));
                count += 1;
            }
        }
    }
    Outcome {
        pass: cat_err <= 1e-10 && mv_err <= 1e-10,
        detail: format!("N(N+4) law max error {cat_err:.1e}; {count} (ℓ, j) cases max error {mv_err:.1e}"),
    }
}

fn criterion_7() -> Outcome {
    let ns = even_range(4, 12);
    let dg = 0.5;
    let mut means = Vec::new();
    for &n in &ns {
        let c0 = CouplingConfig::uniform(n, 1.0, 1.0).unwrap();
        let cp = CouplingConfig::two_set(n, 1.0 + dg, 1.0 - dg, 1.0).unwrap();
        let basis = DfsBasis::compute(&c0).unwrap();
        let alphas: Vec<f64> = (0..200)
            .map(|s| {
                let psi = basis.random_state(SEED ^ ((n as u64) << 32 | s)).unwrap();
                alpha_collective(&psi, &cp).unwrap()
            })
            .collect();
        means.push(alphas.iter().sum::<f64>() / alphas.len() as f64);
    }
    let p = slope(&ns, &means);
    let listing: Vec<String> = ns.iter().zip(&means).map(|(n, m)| format!("{n}:{m:.3}")).collect();
    Outcome {
        pass: (p - 1.0).abs() <= 0.3,
        detail: format!("exponent {p:.3} from 200 states per N (mean α: {})", listing.join(" ")),
    }
}

fn criterion_8() -> Outcome {
    let p = |n: usize| {
        PairAmplitudes::from_ab(&vec![r(FRAC_1_SQRT_2); n / 2], &vec![r(FRAC_1_SQRT_2); n / 2]).unwrap()
    };
    // case 2: pairwise identical fluctuations cancel exactly
    let mut case2_max: f64 = 0.0;
    for n in [4, 8, 16, 64] {
        let block = nalgebra::DMatrix::from_fn(n / 2, n / 2, |i, j| 0.3 + 0.7 * 0.5f64.powi((i as i32 - j as i32).abs()));
        let c = make_correlation(&CorrelationCase::PairwiseIdentical(block), n).unwrap();
        case2_max = case2_max.max(fluctuation_std(&c, 0.2, &p(n), 1.0).unwrap());
    }
    let case2_ok = case2_max == 0.0;

    // case 1: K exponent, formula level
    let ns = even_range(8, 256);
    let ks: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let c = make_correlation(&CorrelationCase::uniform_uncorrelated(n, 1.0), n).unwrap();
            k_factor(&c, &p(n)).unwrap()
        })
        .collect();
    let k_exp = slope(&ns, &ks);
    let k_ok = (k_exp - 1.5).abs() <= 0.03;

    // case 1: Monte Carlo spread against 4γ|δG̃|K, linear regime
    let n = 8;
    let (g1, g2) = (1.05, 0.95);
    let dg = 0.5 * (g1 - g2);
    let c0 = CouplingConfig::two_set(n, g1, g2, 1.0).unwrap();
    let c = make_correlation(&CorrelationCase::uniform_uncorrelated(n, (0.01 * dg).powi(2)), n).unwrap();
    let mc = monte_carlo_alpha(&c, &p(n), &c0, 100_000, SEED).unwrap();
    let analytic = fluctuation_std(&c, dg, &p(n), 1.0).unwrap();
    let mc_dev = rel_err(mc.std, analytic);
    let mc_ok = mc_dev <= 0.05;

    // SNR slopes
    let snr_slope = |case: &dyn Fn(usize) -> CorrelationCase| {
        let snr: Vec<f64> = ns
            .iter()
            .map(|&n| {
                let c = make_correlation(&case(n), n).unwrap();
                let k = k_factor(&c, &p(n)).unwrap();
                match snr_under_noise(0.01, n, FRAC_1_SQRT_2, k).unwrap() {
                    SnrUnderNoise::Finite(v) => v,
                    SnrUnderNoise::NoiseFree => f64::NAN,
                }
            })
            .collect();
        slope(&ns, &snr)
    };
    let s3 = snr_slope(&|n| CorrelationCase::fully_correlated_sets(n, 1.0));
    let s1 = snr_slope(&|n| CorrelationCase::uniform_uncorrelated(n, 1.0));
    let snr_ok = s3.abs() <= 0.05 && (s1 - 0.5).abs() <= 0.05;

    let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
    Outcome {
        pass: case2_ok && k_ok && mc_ok && snr_ok,
        detail: format!(
            "case 2 std = {case2_max:e} [{}]; case 1 K exponent {k_exp:.4} (target 1.5 ± 0.03) [{}]; \
             Monte Carlo std off by {:.2}% [{}]; SNR slopes case 3 {s3:.4}, case 1 {s1:.4} [{}]",
            mark(case2_ok),
            mark(k_ok),
            100.0 * mc_dev,
            mark(mc_ok),
            mark(snr_ok)
        ),
    }
}

fn criterion_9() -> Outcome {
    let ns = even_range(8, 256);
    let d: Vec<f64> = ns
        .iter()
        .map(|&n| min_detectable_delta_g(n, FRAC_1_SQRT_2, 1.0, 1.0, 1.0).unwrap())
        .collect();
    let p = slope(&ns, &d);
    Outcome {
        pass: (p + 1.0).abs() <= 0.02,
        detail: format!("slope {p:.4} over even N = 8..256"),
    }
}

fn criterion_10() -> Outcome {
    let ns: Vec<usize> = (4..=10).map(|k| 1usize << k).collect();
    let x_star = 1.0 / PI;
    let mut probes = Vec::new();
    let mut precise = true;
    for &n in &ns {
        let tol = 1.0 / n as f64;
        let oracle = ProbeOracle::noiseless(x_star, 1.0, 1.0, 16, FRAC_1_SQRT_2);
        let mut budget = CalibrationBudget::for_atoms(n, golden_section_probe_bound(1.0, tol)).unwrap();
        let out = calibrate_golden_section(|x| oracle.mean(x), (0.0, 1.0), tol, &mut budget).unwrap();
        precise &= (out.estimate - x_star).abs() <= tol;
        probes.push(out.probes_used as f64);
    }
    let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let fit = fit_log_linear(&x, &probes).unwrap();

    let n = 64;
    let tol = 1.0 / n as f64;
    let mut rng = realization_rng(SEED, 10);
    let mut success = 0;
    for trial in 0..100u64 {
        let target = rng.random_range(0.2..0.8);
        let mut budget = CalibrationBudget::for_atoms(n, golden_section_probe_bound(1.0, tol)).unwrap();
        let mut oracle = ProbeOracle::poisson(target, 1.0, 100.0, budget.atoms_per_probe(), FRAC_1_SQRT_2, SEED + trial);
        if let Ok(out) = calibrate_golden_section(|x| oracle.measure(x), (0.0, 1.0), tol, &mut budget) {
            if (out.estimate - target).abs() <= 2.0 / n as f64 {
                success += 1;
            }
        }
    }
    let counts: Vec<String> = probes.iter().map(|p| format!("{p}")).collect();
    Outcome {
        pass: fit.r_squared > 0.99 && precise && success >= 90,
        detail: format!(
            "probes [{}] fit {:.2} + {:.2} ln N, R² = {:.4}; noisy success {success}/100 at N = 64",
            counts.join(", "),
            fit.coefficients[0],
            fit.coefficients[1],
            fit.r_squared
        ),
    }
}

type Criterion = (u32, &'static str, f64, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "exact small-N relaxed emission", 60.0, criterion_1),
        (2, "SSE ensembles vs density matrix", 600.0, criterion_2),
        (3, "relaxed-state scaling and Fourier fit", 1800.0, criterion_3),
        (4, "darkness of pair-product states", 60.0, criterion_4),
        (5, "closed forms vs brute force", 120.0, criterion_5),
        (6, "singlet cat-state scaling", 60.0, criterion_6),
        (7, "random dark states scale linearly", 600.0, criterion_7),
        (8, "coupling-noise regimes", 300.0, criterion_8),
        (9, "Heisenberg-limited sensitivity", 10.0, criterion_9),
        (10, "golden-section calibration", 300.0, criterion_10),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, title, limit, f) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!(
                "panicked: {}",
                e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
            ),
        });
        let secs = start.elapsed().as_secs_f64();
        let pass = outcome.pass && secs <= limit;
        println!(
            "criterion {id:>2} {}: {title}: {} ({secs:.1} s, limit {limit:.0} s)",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
        if !pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
