//! Subcommand definitions and their experiment drivers.

use std::f64::consts::FRAC_1_SQRT_2;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use demsim_core::cavity::{
    calibrate_golden_section, check_bracket_avoids_nodes, golden_section_probe_bound, length_sensitivity,
    CalibrationBudget, CavityGeometry, ProbeOracle,
};
use demsim_core::fit::{fit_fourier, fit_log_linear, fit_power_law, mean_and_stderr, FitModel};
use demsim_core::liouville::exact_relaxed_alpha;
use demsim_core::noise::{
    background_alpha_with_coherences, fluctuation_std, k_factor, make_correlation, snr_under_noise,
    CorrelationCase, CorrelationMatrix, SnrUnderNoise,
};
use demsim_core::signal::{
    alpha_collective, alpha_pair_closed_form, n_ph_cat, n_ph_cat_brute, n_ph_imperfect, RegimeCheck,
};
use demsim_core::sse::{ensemble_alpha, reference_realizations, realization_rng, InitialState, RealizationRecord, SseConfig};
use demsim_core::states::{pair_local_amplitudes, pair_product_state, relaxation_amplitudes, DfsBasis, PairAmplitudes};
use demsim_core::{CouplingConfig, Error, C64};
use rand::Rng;
use rayon::prelude::*;

use crate::config::{delta_grid, ConfigFile, NList, RealList, Resolver, DEFAULT_CONFIG_FILE, WORKERS_ENV};
use crate::output::{num, opt, Table};
use crate::CliError;

/// Realizations used past the end of the reference table.
const FALLBACK_REALIZATIONS: usize = 250;

/// Largest `N` for which `scaling --states product` also evaluates the
/// state vector.
const MAX_BRUTE_ATOMS: usize = 20;

#[derive(Debug, Parser)]
#[command(name = "demsim", version, about = "Dark-state emission simulations for cavity-length sensing")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// key = value config file [default: ./demsim.conf when present]
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output CSV [default: stdout]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads [default: $DEMSIM_WORKERS, else all cores]
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Omit the timestamp metadata line
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Report α in units of γ(G̃1 − G̃2)²
    #[arg(long, global = true)]
    pub paper_units: bool,
    /// Collective decay rate γ = g²/κ
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// α and ⟨n_ph⟩ of identical pair states a|t−⟩ + b|s⟩ + c|t0⟩ + d|t+⟩
    Alpha(AlphaArgs),
    /// Ensemble-exact α after relaxation, from the master equation (N ≤ 6)
    SweepDelta(SweepArgs),
    /// Relaxed-state α from stochastic trajectories
    Sse(SseArgs),
    /// α against N
    Scaling(ScalingArgs),
    /// Photon counts of the maximal-ℓ singlet cat state
    Cat(CatArgs),
    /// Mean α over Haar-random dark states
    RandomDfs(RandomDfsArgs),
    /// Background emission and fluctuations under coupling noise
    Noise(NoiseArgs),
    /// Golden-section calibration of the lattice position
    Calibrate(CalibrateArgs),
    /// Fit a column of a CSV file
    Fit(FitArgs),
    /// Check Γ ≪ g√N ≪ κ
    RegimeCheck(RegimeArgs),
}

#[derive(Debug, Args)]
pub struct AlphaArgs {
    /// Atom counts: 6, 4,8,12 or start:stop:step
    #[arg(long)]
    pub n: Option<NList>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long)]
    pub g1: Option<f64>,
    #[arg(long)]
    pub g2: Option<f64>,
    /// Counting window
    #[arg(long)]
    pub delta_t: Option<f64>,
}

/// δ points: an explicit list or an evenly spaced grid on [0, π/2].
#[derive(Debug, Args)]
pub struct DeltaArgs {
    #[arg(long, conflicts_with = "delta_grid")]
    pub delta: Option<RealList>,
    #[arg(long)]
    pub delta_grid: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub n: Option<NList>,
    #[command(flatten)]
    pub deltas: DeltaArgs,
    /// Half-difference δG̃ of the measurement couplings 1 ± δG̃
    #[arg(long)]
    pub delta_g: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    /// Realizations [default: reference table for N ≤ 18]
    #[arg(long)]
    pub nr: Option<usize>,
    /// Euler step in units of 1/γ
    #[arg(long)]
    pub dt: Option<f64>,
    /// Convergence threshold on ‖ψ_{k+1} − ψ_k‖
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Skip renormalization after each step
    #[arg(long)]
    pub no_renormalize: bool,
}

#[derive(Debug, Args)]
pub struct SseArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[command(flatten)]
    pub deltas: DeltaArgs,
    #[arg(long)]
    pub delta_g: Option<f64>,
    #[command(flatten)]
    pub trajectory: TrajectoryArgs,
    /// Also write one row per realization here
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StateFamily {
    /// Imperfect pair states relaxed by trajectories
    Relaxed,
    /// Pair products a|t−⟩ + b|s⟩, closed form and state vector
    Product,
}

#[derive(Debug, Args)]
pub struct ScalingArgs {
    #[arg(long, value_enum)]
    pub states: Option<StateFamily>,
    #[arg(long)]
    pub n: Option<NList>,
    /// Preparation error δ for relaxed states
    #[arg(long)]
    pub delta: Option<f64>,
    /// Singlet amplitude for product states
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub delta_g: Option<f64>,
    #[command(flatten)]
    pub trajectory: TrajectoryArgs,
}

#[derive(Debug, Args)]
pub struct CatArgs {
    /// Atom counts, multiples of 4
    #[arg(long)]
    pub n: Option<NList>,
    #[arg(long)]
    pub delta_g: Option<f64>,
    #[arg(long)]
    pub delta_t: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RandomDfsArgs {
    #[arg(long)]
    pub n: Option<NList>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub delta_g: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseCase {
    /// Independent per-atom fluctuations
    #[value(alias = "1")]
    Uncorrelated,
    /// Both atoms of a pair fluctuate together
    #[value(alias = "2")]
    Pairs,
    /// All atoms of a set fluctuate together
    #[value(alias = "3")]
    Sets,
}

impl std::fmt::Display for NoiseCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseCase::Uncorrelated => "uncorrelated",
            NoiseCase::Pairs => "pairs",
            NoiseCase::Sets => "sets",
        })
    }
}

impl std::str::FromStr for NoiseCase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long)]
    pub case: Option<NoiseCase>,
    #[arg(long)]
    pub n: Option<NList>,
    /// Fluctuation variance (or covariance for the correlated cases)
    #[arg(long)]
    pub variance: Option<f64>,
    /// Correlation matrix CSV; replaces --case and --n
    #[arg(long)]
    pub corr_csv: Option<PathBuf>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub delta_g: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub n: Option<NList>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Poisson photon counts instead of the mean
    #[arg(long)]
    pub noisy: bool,
    /// γΔt times repetitions per probe
    #[arg(long)]
    pub exposure: Option<f64>,
    /// Search interval lo,hi in units of L
    #[arg(long)]
    pub bracket: Option<RealList>,
    /// Target bracket width [default: bracket width / N]
    #[arg(long)]
    pub tol: Option<f64>,
    /// Matched position [default: random per trial]
    #[arg(long)]
    pub x_star: Option<f64>,
    /// |dδG̃/dx| [default: from the geometry keys, else 1]
    #[arg(long)]
    pub sensitivity: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitKind {
    Fourier,
    Powerlaw,
    Loglinear,
}

impl std::fmt::Display for FitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.model().tag())
    }
}

impl FitKind {
    fn model(self) -> FitModel {
        match self {
            FitKind::Fourier => FitModel::Fourier,
            FitKind::Powerlaw => FitModel::PowerLaw,
            FitKind::Loglinear => FitModel::LogLinear,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub model: FitKind,
    /// Abscissa column [default: delta for fourier, n otherwise]
    #[arg(long)]
    pub x: Option<String>,
    #[arg(long, default_value = "alpha_mean")]
    pub y: String,
}

#[derive(Debug, Args)]
pub struct RegimeArgs {
    /// Single-atom spontaneous emission rate Γ
    #[arg(long)]
    pub big_gamma: Option<f64>,
    /// RMS single-atom coupling
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Alpha(_) => "alpha",
            Command::SweepDelta(_) => "sweep-delta",
            Command::Sse(_) => "sse",
            Command::Scaling(_) => "scaling",
            Command::Cat(_) => "cat",
            Command::RandomDfs(_) => "random-dfs",
            Command::Noise(_) => "noise",
            Command::Calibrate(_) => "calibrate",
            Command::Fit(_) => "fit",
            Command::RegimeCheck(_) => "regime-check",
        }
    }
}

/// Settings shared by every subcommand.
struct Ctx {
    gamma: f64,
    seed: u64,
    paper_units: bool,
}

impl Ctx {
    /// `α / γ(G̃1 − G̃2)²` when `--paper-units` is set.
    fn alpha_units(&self, alpha: f64, g1: f64, g2: f64) -> f64 {
        if self.paper_units {
            alpha / (self.gamma * (g1 - g2).powi(2))
        } else {
            alpha
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.global.config {
        Some(path) => ConfigFile::load(path)?,
        None if Path::new(DEFAULT_CONFIG_FILE).is_file() => ConfigFile::load(Path::new(DEFAULT_CONFIG_FILE))?,
        None => ConfigFile::default(),
    };
    let mut r = Resolver::new(&file);
    let workers = match r.unrecorded::<usize>("workers", cli.global.workers)? {
        Some(w) => w,
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{WORKERS_ENV} must be a positive integer, got '{v}'")))?,
            Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        },
    };
    if workers == 0 {
        return Err(CliError::Usage("worker count must be positive".into()));
    }
    let deterministic = cli.global.deterministic || file.get::<bool>("deterministic")?.unwrap_or(false);
    let ctx = Ctx {
        gamma: positive(r.value("gamma", cli.global.gamma, 1.0)?, "gamma")?,
        seed: r.value("seed", cli.global.seed, 0)?,
        paper_units: r.switch("paper_units", cli.global.paper_units)?,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
    let name = cli.command.name();
    let mut table = pool.install(|| match &cli.command {
        Command::Alpha(a) => alpha(a, &ctx, &mut r),
        Command::SweepDelta(a) => sweep_delta(a, &ctx, &mut r),
        Command::Sse(a) => sse(a, &ctx, &mut r, deterministic),
        Command::Scaling(a) => scaling(a, &ctx, &mut r),
        Command::Cat(a) => cat(a, &ctx, &mut r),
        Command::RandomDfs(a) => random_dfs(a, &ctx, &mut r),
        Command::Noise(a) => noise(a, &ctx, &mut r),
        Command::Calibrate(a) => calibrate(a, &ctx, &mut r, &file),
        Command::Fit(a) => fit(a, &mut r),
        Command::RegimeCheck(a) => regime_check(a, &mut r),
    })?;
    let mut metadata = r.into_resolved();
    metadata.append(&mut table.metadata);
    table.metadata = metadata;
    table.write(name, deterministic, cli.global.out.as_deref())
}

fn positive(x: f64, key: &str) -> Result<f64, CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Usage(format!("{key} must be positive, got {x}")))
    }
}

fn even_atoms(ns: &NList) -> Result<&[usize], CliError> {
    for &n in &ns.0 {
        if n < 2 || n % 2 != 0 {
            return Err(CliError::Usage(format!("atom counts must be even and ≥ 2, got {n}")));
        }
    }
    Ok(&ns.0)
}

fn resolve_deltas(d: &DeltaArgs, r: &mut Resolver) -> Result<Vec<f64>, CliError> {
    if let Some(list) = r.optional::<RealList>("delta", d.delta.clone())? {
        return Ok(list.0);
    }
    let k = r.value("delta_grid", d.delta_grid, 9)?;
    if k == 0 {
        return Err(CliError::Usage("delta_grid must be positive".into()));
    }
    Ok(delta_grid(k))
}

/// Relaxation under uniform unit couplings, measurement under `1 ± δG̃`.
fn relaxation_couplings(n: usize, delta_g: f64, gamma: f64) -> Result<(CouplingConfig, CouplingConfig), CliError> {
    Ok((
        CouplingConfig::uniform(n, 1.0, gamma)?,
        CouplingConfig::two_set(n, 1.0 + delta_g, 1.0 - delta_g, gamma)?,
    ))
}

fn relaxation_initial(n: usize, delta: f64) -> Result<InitialState, CliError> {
    let r = |x: f64| C64::new(x, 0.0);
    let local = pair_local_amplitudes(relaxation_amplitudes(delta).map(r), r(1.0), r(1.0))?;
    Ok(InitialState::IdenticalPairs { local, n_pairs: n / 2 })
}

struct Trajectory {
    nr: Option<usize>,
    base: SseConfig,
}

impl Trajectory {
    fn resolve(t: &TrajectoryArgs, ctx: &Ctx, r: &mut Resolver) -> Result<Self, CliError> {
        let defaults = SseConfig::default();
        let base = SseConfig {
            dt: positive(r.value("dt", t.dt, defaults.dt)?, "dt")?,
            convergence_tol: positive(r.value("tol", t.tol, defaults.convergence_tol)?, "tol")?,
            max_steps: r.value("max_steps", t.max_steps, defaults.max_steps)?,
            renormalize: r.value("renormalize", t.no_renormalize.then_some(false), true)?,
            seed: ctx.seed,
            ..defaults
        };
        let nr = r.optional("nr", t.nr)?;
        if nr == Some(0) {
            return Err(CliError::Usage("nr must be positive".into()));
        }
        Ok(Self { nr, base })
    }

    fn config(&self, n: usize, seed: u64) -> SseConfig {
        SseConfig {
            n_realizations: self
                .nr
                .unwrap_or_else(|| reference_realizations(n).unwrap_or(FALLBACK_REALIZATIONS)),
            seed,
            ..self.base.clone()
        }
    }
}

fn alpha(a: &AlphaArgs, ctx: &Ctx, r: &mut Resolver) -> Result<Table, CliError> {
    let ns = r.required::<NList>("n", a.n.clone())?;
    let amps = [
        r.value("a", a.a, FRAC_1_SQRT_2)?,
        r.value("b", a.b, FRAC_1_SQRT_2)?,
        r.value("c", a.c, 0.0)?,
        r.value("d", a.d, 0.0)?,
    ];
    if amps.iter().any(|x| !x.is_finite()) {
        return Err(CliError::Usage("pair amplitudes must be finite".into()));
    }
    let g1 = r.value("g1", a.g1, 1.5)?;
    let g2 = r.value("g2", a.g2, 0.5)?;
    let delta_t = positive(r.value("delta_t", a.delta_t, 1.0)?, "delta_t")?;
    let mut t = Table::new(&["n", "alpha", "n_ph", "alpha_closed", "n_ph_printed", "n_ph_derived"]);
    for &n in even_atoms(&ns)? {
        let cmp = n_ph_imperfect(amps, n, g1, g2, ctx.gamma, delta_t)?;
        let closed = if amps[2] == 0.0 && amps[3] == 0.0 {
            let p = PairAmplitudes::uniform_real(n / 2, amps)?;
            let c = CouplingConfig::two_set(n, g1, g2, ctx.gamma)?;
            Some(ctx.alpha_units(alpha_pair_closed_form(&p, &c)?, g1, g2))
        } else {
            None
        };
        t.push(vec![
            n.to_string(),
            num(ctx.alpha_units(cmp.brute_force / delta_t, g1, g2)),
            num(cmp.brute_force),
            opt(closed),
            num(cmp.printed),
            num(cmp.derived),
        ]);
    }
    Ok(t)
}

fn sweep_delta(a: &SweepArgs, ctx: &Ctx, r: &mut Resolver) -> Result<Table, CliError> {
    let ns = r.required::<NList>("n", a.n.clone())?;
    let deltas = resolve_deltas(&a.deltas, r)?;
    let delta_g = positive(r.value("delta_g", a.delta_g, 0.5)?, "delta_g")?;
    let points: Vec<(usize, f64)> = even_atoms(&ns)?
        .iter()
        .flat_map(|&n| deltas.iter().map(move |&d| (n, d)))
        .collect();
    let values = points
        .par_iter()
        .map(|&(n, d)| {
            let (c0, cp) = relaxation_couplings(n, delta_g, ctx.gamma)?;
            Ok(exact_relaxed_alpha(n, d, &c0, &cp)?)
        })
        .collect::<Result<Vec<f64>, CliError>>()?;
    let mut t = Table::new(&["n", "delta", "alpha_exact"]);
    for ((n, d), v) in points.into_iter().zip(values) {
        t.push(vec![
            n.to_string(),
            num(d),
            num(ctx.alpha_units(v, 1.0 + delta_g, 1.0 - delta_g)),
        ]);
    }
    Ok(t)
}

fn sse(a: &SseArgs, ctx: &Ctx, r: &mut Resolver, deterministic: bool) -> Result<Table, CliError> {
    let n = r.required::<usize>("n", a.n)?;
    even_atoms(&NList(vec![n]))?;
    let deltas = resolve_deltas(&a.deltas, r)?;
    let delta_g = positive(r.value("delta_g", a.delta_g, 0.5)?, "delta_g")?;
    let traj = Trajectory::resolve(&a.trajectory, ctx, r)?;
    let (c0, cp) = relaxation_couplings(n, delta_g, ctx.gamma)?;
    let (g1, g2) = (1.0 + delta_g, 1.0 - delta_g);

    let mut t = Table::new(&["delta", "alpha_mean", "alpha_stderr", "n_realizations"]);
    t.note("seed_per_delta", "seed + index of delta");
    let mut records = Table::new(&["delta", "realization", "steps", "alpha", "dark_residual"]);
    let mut warnings = Vec::new();
    for (k, &d) in deltas.iter().enumerate() {
        let cfg = SseConfig {
            keep_records: a.records.is_some(),
            ..traj.config(n, ctx.seed.wrapping_add(k as u64))
        };
        let res = ensemble_alpha(&relaxation_initial(n, d)?, &c0, &cp, &cfg)?;
        t.push(vec![
            num(d),
            num(ctx.alpha_units(res.mean_alpha, g1, g2)),
            num(ctx.alpha_units(res.std_error, g1, g2)),
            res.n_realizations.to_string(),
        ]);
        warnings.push(res.dark_warnings);
        for rec in res.records.iter().flatten() {
            let mut row = vec![num(d)];
            row.extend(rec.csv_row().split(',').map(str::to_string));
            records.push(row);
        }
    }
    t.note("dark_warnings", NList(warnings));
    if let Some(path) = &a.records {
        debug_assert_eq!(RealizationRecord::CSV_HEADER, records.columns[1..].join(","));
        records.metadata = t.metadata.clone();
        records.write("sse records", deterministic, Some(path))?;
    }
    Ok(t)
}

fn scaling(a: &ScalingArgs, ctx: &Ctx, r: &mut Resolver) -> Result<Table, CliError> {
    let states = r.value("states", a.states.map(StateName), StateName(StateFamily::Relaxed))?.0;
    let ns = r.required::<NList>("n", a.n.clone())?;
    let ns = even_atoms(&ns)?;
    let delta_g = positive(r.value("delta_g", a.delta_g, 0.5)?, "delta_g")?;
    let (g1, g2) = (1.0 + delta_g, 1.0 - delta_g);
    match states {
        StateFamily::Relaxed => {
            let delta = r.value("delta", a.delta, 0.0)?;
            let traj = Trajectory::resolve(&a.trajectory, ctx, r)?;
            let mut t = Table::new(&["n", "alpha_mean", "alpha_stderr", "n_realizations"]);
            for &n in ns {
                let (c0, cp) = relaxation_couplings(n, delta_g, ctx.gamma)?;
                let res = ensemble_alpha(&relaxation_initial(n, delta)?, &c0, &cp, &traj.config(n, ctx.seed))?;
                t.push(vec![
                    n.to_string(),
                    num(ctx.alpha_units(res.mean_alpha, g1, g2)),
                    num(ctx.alpha_units(res.std_error, g1, g2)),
                    res.n_realizations.to_string(),
                ]);
            }
            Ok(t)
        }
        StateFamily::Product => {
            let b = r.value("b", a.b, FRAC_1_SQRT_2)?;
            if !(0.0..=1.0).contains(&b) {
                return Err(CliError::Usage(format!("b must lie in [0, 1], got {b}")));
            }
            let a_amp = (1.0 - b * b).sqrt();
            let mut t = Table::new(&["n", "alpha_closed", "alpha_brute"]);
            for &n in ns {
                let (c0, cp) = relaxation_couplings(n, delta_g, ctx.gamma)?;
                let p = PairAmplitudes::uniform_real(n / 2, [a_amp, b, 0.0, 0.0])?;
                let closed = alpha_pair_closed_form(&p, &cp)?;
                let brute = if n <= MAX_BRUTE_ATOMS {
                    Some(alpha_collective(&pair_product_state(&p, &c0)?, &cp)?)
                } else {
                    None
                };
                t.push(vec![
                    n.to_string(),
                    num(ctx.alpha_units(closed, g1, g2)),
                    opt(brute.map(|v| ctx.alpha_units(v, g1, g2))),
                ]);
            }
            Ok(t)
        }
    }
}

/// `StateFamily` with text round-tripping for the resolver.
struct StateName(StateFamily);

impl std::fmt::Display for StateName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self.0 {
            StateFamily::Relaxed => "relaxed",
            StateFamily::Product => "product",
        })
    }
}

impl std::str::FromStr for StateName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <StateFamily as ValueEnum>::from_str(s, true).map(StateName)
    }
}

fn cat(a: &CatArgs, ctx: &Ctx, r: &mut Resolver) -> Result<Table, CliError> {
    let ns = r.required::<NList>("n", a.n.clone())?;
    let delta_g = positive(r.value("delta_g", a.delta_g, 0.5)?, "delta_g")?;
    let delta_t = positive(r.value("delta_t", a.delta_t, 1.0)?, "delta_t")?;
    let mut t = Table::new(&["n", "n_ph_closed", "n_ph_brute"]);
    for &n in &ns.0 {
        if n == 0 || n % 4 != 0 {
            return Err(CliError::Usage(format!("cat states need N divisible by 4, got {n}")));
        }
        t.push(vec![
            n.to_string(),
            num(n_ph_cat(n, delta_g, ctx.gamma, delta_t)?),
            num(n_ph_cat_brute(n, delta_g, ctx.gamma, delta_t)?),
        ]);
    }
    Ok(t)
}

fn random_dfs(a: &RandomDfsArgs, ctx: &Ctx, r: &mut Resolver) -> Result<Table, CliError> {
    let ns = r.required::<NList>("n", a.n.clone())?;
    let samples = r.value("samples", a.samples, 200)?;
    if samples < 2 {
        return Err(CliError::Usage("need at least two samples".into()));
    }
    let delta_g = positive(r.value("delta_g", a.delta_g, 0.5)?, "delta_g")?;
    let mut t = Table::new(&["n", "alpha_mean", "alpha_stderr", "samples"]);
    for &n in even_atoms(&ns)? {
        let (c0, cp) = relaxation_couplings(n, delta_g, ctx.gamma)?;
        let basis = DfsBasis::compute(&c0)?;
        let alphas = (0..samples as u64)
            .into_par_iter()
            .map(|s| {
                let psi = basis.random_state(ctx.seed ^ ((n as u64) << 32 | s))?;
                alpha_collective(&psi, &cp)
            })
            .collect::<Result<Vec<f64>, Error>>()?;
        let (mean, se) = mean_and_stderr(&alphas);
        t.push(vec![
            n.to_string(),
            num(ctx.alpha_units(mean, 1.0 + delta_g, 1.0 - delta_g)),
            num(ctx.alpha_units(se, 1.0 + delta_g, 1.0 - delta_g)),
            samples.to_string(),
        ]);
    }
    Ok(t)
}

fn noise(a: &NoiseArgs, ctx: &Ctx, r: &mut Resolver) -> Result<Table, CliError> {
    let b = r.value("b", a.b, FRAC_1_SQRT_2)?;
    if !(0.0..=1.0).contains(&b) {
        return Err(CliError::Usage(format!("b must lie in [0, 1], got {b}")));
    }
    let delta_g = positive(r.value("delta_g", a.delta_g, 0.01)?, "delta_g")?;
    let matrices: Vec<CorrelationMatrix> = match &a.corr_csv {
        Some(path) => {
            r.record("corr_csv", &path.display());
            vec![CorrelationMatrix::from_csv_path(path)?]
        }
        None => {
            let case = r.value("case", a.case, NoiseCase::Uncorrelated)?;
            let variance = positive(r.value("variance", a.variance, 1e-4)?, "variance")?;
            let ns = r.required::<NList>("n", a.n.clone())?;
            even_atoms(&ns)?
                .iter()
                .map(|&n| {
                    let spec = match case {
                        NoiseCase::Uncorrelated => CorrelationCase::uniform_uncorrelated(n, variance),
                        NoiseCase::Pairs => CorrelationCase::fully_correlated_pairs(n, variance),
                        NoiseCase::Sets => CorrelationCase::fully_correlated_sets(n, variance),
                    };
                    make_correlation(&spec, n)
                })
                .collect::<Result<_, Error>>()?
        }
    };
    let a_amp = (1.0 - b * b).sqrt();
    let mut t = Table::new(&["n", "background_alpha", "k", "fluctuation_std", "snr"]);
    for c in &matrices {
        let n = c.n_atoms();
        if n % 2 != 0 {
            return Err(CliError::Usage(format!("correlation matrix must have even size, got {n}")));
        }
        let p = PairAmplitudes::uniform_real(n / 2, [a_amp, b, 0.0, 0.0])?;
        let k = k_factor(c, &p)?;
        let snr = match snr_under_noise(delta_g, n, b, k)? {
            SnrUnderNoise::Finite(v) => v,
            SnrUnderNoise::NoiseFree => f64::INFINITY,
        };
        t.push(vec![
            n.to_string(),
            num(background_alpha_with_coherences(c, &p, ctx.gamma)?),
            num(k),
            num(fluctuation_std(c, delta_g, &p, ctx.gamma)?),
            num(snr),
        ]);
    }
    Ok(t)
}

/// Geometry from the `L, n_x, x1_over_L, m, g0` config keys, if any are set.
fn geometry(file: &ConfigFile, r: &mut Resolver) -> Result<Option<CavityGeometry>, CliError> {
    let keys = ["L", "n_x", "x1_over_L", "m", "g0"];
    if keys.iter().all(|k| file.raw(k).is_none()) {
        return Ok(None);
    }
    let length = r.required::<f64>("L", None)?;
    let n_x = r.required::<u32>("n_x", None)?;
    let x1_over_l = r.required::<f64>("x1_over_L", None)?;
    let m = r.required::<u32>("m", None)?;
    let g0 = r.value::<f64>("g0", None, 1.0)?;
    let geom = CavityGeometry::new(length, n_x, x1_over_l, m, g0)?;
    r.record("coupling_normalization", &format!("rms = {}", num(geom.normalization())));
    Ok(Some(geom))
}

fn calibrate(a: &CalibrateArgs, ctx: &Ctx, r: &mut Resolver, file: &ConfigFile) -> Result<Table, CliError> {
    let ns = r.required::<NList>("n", a.n.clone())?;
    let ns = even_atoms(&ns)?;
    let trials = r.value("trials", a.trials, 1)?;
    let noisy = r.switch("noisy", a.noisy)?;
    let exposure = positive(r.value("exposure", a.exposure, 100.0)?, "exposure")?;
    let bracket = r.value("bracket", a.bracket.clone(), RealList(vec![0.0, 1.0]))?;
    let (lo, hi) = match bracket.0[..] {
        [lo, hi] if lo < hi => (lo, hi),
        _ => return Err(CliError::Usage("bracket must be lo,hi with lo < hi".into())),
    };
    let width = hi - lo;
    let tol = r.optional::<f64>("tol", a.tol)?;
    let x_star = r.optional::<f64>("x_star", a.x_star)?;
    if let Some(x) = x_star {
        if !(lo < x && x < hi) {
            return Err(CliError::Usage(format!("x_star {x} outside the bracket")));
        }
    }
    let b = r.value("b", a.b, FRAC_1_SQRT_2)?;
    let geom = geometry(file, r)?;
    let sensitivity = match (a.sensitivity.or(file.get("sensitivity")?), &geom) {
        (Some(s), _) => s,
        // δG̃ = (G̃1 − G̃2(x))/2, with x the lattice-2 offset in units of L
        (None, Some(g)) => 0.5 * f64::from(g.n_x()) * length_sensitivity(1, g.n_x(), g.x1_over_l())?.abs(),
        (None, None) => 1.0,
    };
    r.record("sensitivity", &sensitivity);
    positive(sensitivity, "sensitivity")?;

    let jobs: Vec<(usize, usize)> = ns
        .iter()
        .flat_map(|&n| (0..trials).map(move |k| (n, k)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(n, k)| {
            let tol = tol.unwrap_or(width / n as f64);
            let target = x_star.unwrap_or_else(|| {
                realization_rng(ctx.seed, k as u64).random_range(lo + 0.1 * width..hi - 0.1 * width)
            });
            if let Some(g) = &geom {
                let x2 = g.x2();
                check_bracket_avoids_nodes(g, x2 + (lo - target) * g.length(), x2 + (hi - target) * g.length())?;
            }
            let mut budget = CalibrationBudget::for_atoms(n, golden_section_probe_bound(width, tol))?;
            let atoms = budget.atoms_per_probe();
            let mut oracle = if noisy {
                ProbeOracle::poisson(target, sensitivity, exposure, atoms, b, ctx.seed.wrapping_add(k as u64))
            } else {
                ProbeOracle::noiseless(target, sensitivity, exposure, atoms, b)
            };
            let (estimate, probes) = match calibrate_golden_section(|x| oracle.measure(x), (lo, hi), tol, &mut budget) {
                Ok(out) => (Some(out.estimate), out.probes_used),
                Err(Error::CalibrationFailed { probes_used, .. }) => (None, probes_used),
                Err(e) => return Err(e),
            };
            let error = estimate.map(|e| (e - target).abs());
            Ok(vec![
                n.to_string(),
                k.to_string(),
                num(target),
                opt(estimate),
                opt(error),
                probes.to_string(),
                error.is_some_and(|e| e <= 2.0 * tol).to_string(),
            ])
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let mut t = Table::new(&["n", "trial", "x_star", "estimate", "abs_error", "probes_used", "success"]);
    for row in rows {
        t.push(row);
    }
    Ok(t)
}

fn read_columns(path: &Path, x: &str, y: &str) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Usage(format!("column '{name}' not found in {}", path.display())))
    };
    let (ix, iy) = (col(x)?, col(y)?);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let get = |i: usize| {
            rec.get(i).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| {
                CliError::Runtime(format!("{}: non-numeric value in data row {}", path.display(), line + 1))
            })
        };
        xs.push(get(ix)?);
        ys.push(get(iy)?);
    }
    Ok((xs, ys))
}

fn fit(a: &FitArgs, r: &mut Resolver) -> Result<Table, CliError> {
    let x = a.x.clone().unwrap_or_else(|| match a.model {
        FitKind::Fourier => "delta".into(),
        _ => "n".into(),
    });
    r.record("input", &a.input.display());
    r.record("model", &a.model);
    r.record("x", &x);
    r.record("y", &a.y);
    let (xs, ys) = read_columns(&a.input, &x, &a.y)?;
    let res = match a.model {
        FitKind::Fourier => fit_fourier(&xs, &ys)?,
        FitKind::Powerlaw => fit_power_law(&xs, &ys)?,
        FitKind::Loglinear => fit_log_linear(&xs, &ys)?,
    };
    let names: &[&str] = match a.model {
        FitKind::Fourier => &["A", "B", "C"],
        FitKind::Powerlaw => &["amplitude", "exponent"],
        FitKind::Loglinear => &["intercept", "slope"],
    };
    let mut t = Table::new(&["model", "parameter", "value", "std_error"]);
    t.note("points", xs.len());
    t.note("residual_norm", num(res.residual_norm));
    t.note("r_squared", num(res.r_squared));
    for ((name, v), se) in names.iter().zip(&res.coefficients).zip(&res.std_errors) {
        t.push(vec![res.model.tag().into(), name.to_string(), num(*v), num(*se)]);
    }
    Ok(t)
}

fn regime_check(a: &RegimeArgs, r: &mut Resolver) -> Result<Table, CliError> {
    let check = RegimeCheck {
        big_gamma: r.required("big_gamma", a.big_gamma)?,
        g_rms: r.required("g", a.g)?,
        kappa: r.required("kappa", a.kappa)?,
        n_atoms: r.required("n", a.n)?,
    };
    let rep = check.evaluate()?;
    let mut t = Table::new(&[
        "n",
        "big_gamma",
        "g",
        "kappa",
        "collective_coupling",
        "emission_ratio",
        "cavity_ratio",
        "verdict",
    ]);
    t.push(vec![
        check.n_atoms.to_string(),
        num(check.big_gamma),
        num(check.g_rms),
        num(check.kappa),
        num(rep.collective_coupling),
        num(rep.emission_ratio),
        num(rep.cavity_ratio),
        if rep.pass { "PASS" } else { "FAIL" }.into(),
    ]);
    Ok(t)
}
