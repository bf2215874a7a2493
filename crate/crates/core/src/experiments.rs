//! Noise simulation, the noise-level rate study, Hölder-exponent
//! regression, and executable checks of the uniqueness and ill-posedness
//! results.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autoconv::{Autoconvolution, DataCase};
use crate::error::{Error, Result};
use crate::grid::{self, l2_norm, GridFn, GridSpec};
use crate::par::Exec;
use crate::phantoms::{self, PhantomId};
use crate::regularize::{self, AlphaSearch, TikhonovConfig};

/// The ten relative noise levels of the reference study, largest first.
pub const TABLE1_LEVELS: [f64; 10] = [0.10, 0.08, 0.05, 0.02, 0.01, 0.008, 0.005, 0.002, 0.001, 0.0005];

/// Reference mean relative errors for `n = 2`, full data, at [`TABLE1_LEVELS`].
pub const TABLE1_FULL_N2: [f64; 10] = [0.0985, 0.0870, 0.0638, 0.0361, 0.0231, 0.0198, 0.0144, 0.0078, 0.0048, 0.0030];
/// Reference mean relative errors for `n = 3`, full data.
pub const TABLE1_FULL_N3: [f64; 10] = [0.1348, 0.1212, 0.0982, 0.0626, 0.0412, 0.0357, 0.0261, 0.0142, 0.0087, 0.0053];
/// Reference mean relative errors for `n = 2`, limited data.
pub const TABLE1_LIMITED_N2: [f64; 10] = [0.1754, 0.1721, 0.1517, 0.0974, 0.0795, 0.0739, 0.0594, 0.0410, 0.0270, 0.0176];
/// Reference mean relative errors for `n = 3`, limited data.
pub const TABLE1_LIMITED_N3: [f64; 10] = [0.2359, 0.2259, 0.1999, 0.1454, 0.1158, 0.1050, 0.0924, 0.0685, 0.0547, 0.0431];

/// Relative noise level and generator seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub delta_rel: f64,
    pub seed: u64,
}

/// `y + δ_rel·‖y‖·g/‖g‖` with `g` i.i.d. standard normal from a ChaCha
/// stream seeded by `spec.seed`.
pub fn add_noise(y: &GridFn, spec: &NoiseSpec) -> Result<GridFn> {
    if !(spec.delta_rel >= 0.0 && spec.delta_rel.is_finite()) {
        return Err(Error::Parameter(format!("noise level must be ≥ 0, got {}", spec.delta_rel)));
    }
    if spec.delta_rel == 0.0 {
        return Ok(y.clone());
    }
    let ny = l2_norm(y);
    if ny == 0.0 {
        return Err(Error::Parameter("cannot scale relative noise on zero data".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let g: Vec<f64> = (0..y.spec().len()).map(|_| rng.sample(StandardNormal)).collect();
    let g = GridFn::from_raw(y.spec().clone(), g);
    let scale = spec.delta_rel * ny / l2_norm(&g);
    grid::combine(1.0, y, scale, &g)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of cell `(level, run)`; any subset of cells reproduces identically.
pub fn run_seed(seed0: u64, level: usize, run: usize) -> u64 {
    seed0.wrapping_add(splitmix64(((level as u64) << 32) | run as u64))
}

/// Solver controls shared by every cell of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub xbar: f64,
    /// `None` uses the case default (constrained for limited data).
    pub nonneg: Option<bool>,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// α grid bounds as multiples of `‖y^δ‖²`, and point count.
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub alpha_points: usize,
    pub search: AlphaSearch,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            xbar: TikhonovConfig::DEFAULT_XBAR,
            nonneg: None,
            max_iters: 5000,
            grad_tol: 1e-8,
            alpha_lo: 1e-10,
            alpha_hi: 1e-1,
            alpha_points: 24,
            search: AlphaSearch { refine_solves: 10, patience: Some(3) },
        }
    }
}

impl SolverSettings {
    fn config(&self, spec: &GridSpec, case: DataCase) -> TikhonovConfig {
        let mut cfg = TikhonovConfig::new(GridFn::constant(spec.clone(), self.xbar), case);
        if let Some(nn) = self.nonneg {
            cfg.nonneg = nn;
        }
        cfg.max_iters = self.max_iters;
        cfg.grad_tol = self.grad_tol;
        cfg
    }

    fn alpha_grid(&self, ydelta: &GridFn) -> Vec<f64> {
        let s = l2_norm(ydelta).powi(2);
        regularize::log_grid(self.alpha_lo * s, self.alpha_hi * s, self.alpha_points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n: usize,
    pub case: DataCase,
    pub m: usize,
    /// Relative noise levels (fractions, not percent).
    pub levels: Vec<f64>,
    pub runs: usize,
    pub seed0: u64,
    pub solver: SolverSettings,
}

impl StudyConfig {
    pub fn new(n: usize, case: DataCase, m: usize) -> Self {
        Self { n, case, m, levels: TABLE1_LEVELS.to_vec(), runs: 10, seed0: 0, solver: SolverSettings::default() }
    }
}

/// Outcome of one `(level, run)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub level: f64,
    pub run: usize,
    pub seed: u64,
    /// `‖x_α − x†‖ / ‖x†‖` at the selected α.
    pub rel_error: Option<f64>,
    pub alpha: Option<f64>,
    pub iterations: usize,
    pub solves: usize,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: f64,
    pub mean_rel_error: Option<f64>,
    pub std_rel_error: Option<f64>,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub n: usize,
    pub m: usize,
    pub case: DataCase,
    pub runs_per_level: usize,
    pub seed0: u64,
    pub levels: Vec<LevelSummary>,
    pub runs: Vec<RunRecord>,
    /// Hölder exponent fitted to the mean errors; `None` with fewer than
    /// three usable levels.
    pub kappa: Option<f64>,
    pub failed_cells: usize,
    pub solver: SolverSettings,
    pub wall_time_s: Option<f64>,
}

impl ExperimentReport {
    pub fn mean_errors(&self) -> Vec<Option<f64>> {
        self.levels.iter().map(|l| l.mean_rel_error).collect()
    }
}

/// Simulates the noise-level study: for each level and run, noisy data of
/// `F(x†)`, oracle α selection and the resulting relative error.
pub fn run_rate_study(cfg: &StudyConfig, exec: Exec) -> Result<ExperimentReport> {
    if cfg.levels.is_empty() {
        return Err(Error::Parameter("at least one noise level is required".into()));
    }
    if cfg.runs == 0 {
        return Err(Error::Parameter("runs must be positive".into()));
    }
    if cfg.levels.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::Parameter("noise levels must be positive".into()));
    }
    let start = Instant::now();
    let id = PhantomId::product_for_dim(cfg.n)?;
    let xdagger = phantoms::sample_phantom(id, cfg.m)?;
    let xnorm = l2_norm(&xdagger);
    let op = Autoconvolution::new(xdagger.spec(), cfg.case)?;
    let y = op.apply(&xdagger)?;
    let base = cfg.solver.config(xdagger.spec(), cfg.case);

    let jobs = cfg.levels.len() * cfg.runs;
    let runs = exec.map(jobs, |job| {
        let (li, run) = (job / cfg.runs, job % cfg.runs);
        let level = cfg.levels[li];
        let seed = run_seed(cfg.seed0, li, run);
        let outcome = add_noise(&y, &NoiseSpec { delta_rel: level, seed }).and_then(|yd| {
            let alphas = cfg.solver.alpha_grid(&yd);
            regularize::select_alpha_opt(&yd, &xdagger, &base, &alphas, &cfg.solver.search)
        });
        match outcome {
            Ok(sel) => RunRecord {
                level,
                run,
                seed,
                rel_error: Some(sel.error / xnorm),
                alpha: Some(sel.alpha),
                iterations: sel.trials.iter().map(|t| t.iterations).sum(),
                solves: sel.trials.len(),
                failure: None,
            },
            Err(e) => RunRecord {
                level,
                run,
                seed,
                rel_error: None,
                alpha: None,
                iterations: 0,
                solves: 0,
                failure: Some(e.to_string()),
            },
        }
    });

    let levels: Vec<LevelSummary> = cfg
        .levels
        .iter()
        .enumerate()
        .map(|(li, &level)| {
            let cell = &runs[li * cfg.runs..(li + 1) * cfg.runs];
            let errs: Vec<f64> = cell.iter().filter_map(|r| r.rel_error).collect();
            let (mean, std) = mean_std(&errs);
            LevelSummary {
                level,
                mean_rel_error: mean,
                std_rel_error: std,
                successes: errs.len(),
                failures: cell.len() - errs.len(),
            }
        })
        .collect();
    let pairs: Vec<(f64, f64)> = levels.iter().filter_map(|l| l.mean_rel_error.map(|e| (l.level, e))).collect();
    let kappa = if pairs.len() >= 3 { estimate_holder(&pairs).ok() } else { None };
    let failed_cells = runs.iter().filter(|r| r.failure.is_some()).count();
    Ok(ExperimentReport {
        n: cfg.n,
        m: cfg.m,
        case: cfg.case,
        runs_per_level: cfg.runs,
        seed0: cfg.seed0,
        levels,
        runs,
        kappa,
        failed_cells,
        solver: cfg.solver.clone(),
        wall_time_s: Some(start.elapsed().as_secs_f64()),
    })
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (Some(mean), Some(var.sqrt()))
}

/// Least-squares slope of `log(error)` against `log(δ)`.
pub fn estimate_holder(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 3 {
        return Err(Error::Parameter(format!("Hölder regression needs ≥ 3 points, got {}", pairs.len())));
    }
    if pairs.iter().any(|&(d, e)| !(d > 0.0 && e > 0.0 && d.is_finite() && e.is_finite())) {
        return Err(Error::Domain("Hölder regression needs positive finite (δ, error) pairs".into()));
    }
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(a, b), &(d, e)| (a + d.ln(), b + e.ln()));
    let (mx, my) = (mx / n, my / n);
    let (sxy, sxx) = pairs.iter().fold((0.0, 0.0), |(sxy, sxx), &(d, e)| {
        let dx = d.ln() - mx;
        (sxy + dx * (e.ln() - my), sxx + dx * dx)
    });
    if sxx == 0.0 {
        return Err(Error::Domain("Hölder regression needs at least two distinct noise levels".into()));
    }
    Ok(sxy / sxx)
}

/// `‖F(x) − F(−x)‖_Y`.
pub fn check_twofoldness(x: &GridFn, case: DataCase) -> Result<f64> {
    let op = Autoconvolution::new(x.spec(), case)?;
    let a = op.apply(x)?;
    let b = op.apply(&x.scale(-1.0))?;
    Ok(l2_norm(&grid::combine(1.0, &a, -1.0, &b)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonUniqueness {
    /// `‖F(x† + h) − F(x†)‖` on the limited-data grid.
    pub residual: f64,
    /// `‖h‖`.
    pub distance: f64,
}

/// Nonnegative solution vanishing on the first `q` cells of every axis:
/// the product phantom compressed onto `[q/m, 1]ⁿ`.
pub fn shifted_product(n: usize, m: usize, q: usize) -> Result<GridFn> {
    let id = PhantomId::product_for_dim(n)?;
    let spec = GridSpec::unit_cube(n, m)?;
    let eps = q as f64 / m as f64;
    Ok(grid::sample(
        |t| {
            if t.iter().any(|&s| s < eps) {
                0.0
            } else {
                let u: Vec<f64> = t.iter().map(|&s| (s - eps) / (1.0 - eps)).collect();
                phantoms::density_unchecked(id, &u)
            }
        },
        &spec,
    ))
}

/// Positive random perturbation on the last `q` cells of every axis,
/// scaled to `‖h‖ = ‖x‖`.
fn corner_noise(x: &GridFn, q: usize, seed: u64) -> GridFn {
    let spec = x.spec().clone();
    let m = spec.cells();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..spec.len())
        .map(|flat| if spec.unravel(flat).iter().all(|&i| i >= m - q) { rng.random_range(0.5..1.5) } else { 0.0 })
        .collect();
    let h = GridFn::from_raw(spec, values);
    let scale = l2_norm(x) / l2_norm(&h);
    h.scale(scale)
}

fn nonunique_params(n: usize, m: usize, q: usize) -> Result<()> {
    if q == 0 || 2 * q >= m {
        return Err(Error::Parameter(format!("need 1 ≤ q < m/2, got q = {q}, m = {m}")));
    }
    PhantomId::product_for_dim(n).map(|_| ())
}

fn limited_residual(x: &GridFn, h: &GridFn) -> Result<NonUniqueness> {
    let op = Autoconvolution::new(x.spec(), DataCase::Limited)?;
    let y = op.apply(x)?;
    let yh = op.apply(&grid::combine(1.0, x, 1.0, h)?)?;
    Ok(NonUniqueness { residual: l2_norm(&grid::combine(1.0, &yh, -1.0, &y)?), distance: l2_norm(h) })
}

/// Builds a second nonnegative limited-data solution `x† + h ≠ x†` when
/// `x†` vanishes near the origin.
pub fn check_nonuniqueness(n: usize, m: usize, q: usize, seed: u64) -> Result<NonUniqueness> {
    nonunique_params(n, m, q)?;
    let x = shifted_product(n, m, q)?;
    let h = corner_noise(&x, q, seed);
    limited_residual(&x, &h)
}

/// The same perturbation added to the unshifted product phantom, whose
/// support contains the origin; the residual must be positive.
pub fn nonuniqueness_control(n: usize, m: usize, q: usize, seed: u64) -> Result<NonUniqueness> {
    nonunique_params(n, m, q)?;
    let x = phantoms::sample_phantom(PhantomId::product_for_dim(n)?, m)?;
    let h = corner_noise(&x, q, seed);
    limited_residual(&x, &h)
}

/// One term of a perturbation sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IllposedRow {
    pub k: usize,
    /// `‖x_k − x†‖`
    pub distance: f64,
    /// `‖F(x_k) − F(x†)‖`
    pub residual: f64,
    /// `r·‖x†‖/k^{n/2}` for the corner sequence.
    pub bound: Option<f64>,
}

/// Corner-bump sequence around the product phantom in the limited-data case.
pub fn demo_illposed_limited(n: usize, m: usize, r: f64, ks: &[usize]) -> Result<Vec<IllposedRow>> {
    if !(r >= 0.0) {
        return Err(Error::Parameter("r must be nonnegative".into()));
    }
    let x = phantoms::sample_phantom(PhantomId::product_for_dim(n)?, m)?;
    let op = Autoconvolution::new(x.spec(), DataCase::Limited)?;
    let y = op.apply(&x)?;
    let xn = l2_norm(&x);
    ks.iter()
        .map(|&k| {
            let h = phantoms::corner_perturbation(k, r, x.spec())?;
            let yk = op.apply(&grid::combine(1.0, &x, 1.0, &h)?)?;
            Ok(IllposedRow {
                k,
                distance: l2_norm(&h),
                residual: l2_norm(&grid::combine(1.0, &yk, -1.0, &y)?),
                bound: Some(r * xn / (k as f64).powf(n as f64 / 2.0)),
            })
        })
        .collect()
}

/// Difference grids `x_k − x†` and `y_k − y` of one sequence term.
#[derive(Debug, Clone)]
pub struct IllposedDump {
    pub k: usize,
    pub dx: GridFn,
    pub dy: GridFn,
}

#[derive(Debug, Clone)]
pub struct FullDemo {
    pub rows: Vec<IllposedRow>,
    pub warnings: Vec<String>,
    pub dumps: Vec<IllposedDump>,
}

/// Cells per axis needed to resolve `sin(k²t²)` for the largest `k`.
pub fn resolving_cells(k_max: usize) -> usize {
    (10.0 * (k_max as f64).powi(2) / std::f64::consts::PI).ceil() as usize
}

/// Oscillating rank-one sequence `x† + √2·r·sin(k²t₁²)` in the full-data case.
pub fn demo_illposed_full(r: f64, ks: &[usize], xdagger: &GridFn, dump: bool) -> Result<FullDemo> {
    if !(r >= 0.0) {
        return Err(Error::Parameter("r must be nonnegative".into()));
    }
    let op = Autoconvolution::new(xdagger.spec(), DataCase::Full)?;
    let y = op.apply(xdagger)?;
    let m = xdagger.spec().cells();
    let mut warnings = Vec::new();
    if let Some(&kmax) = ks.iter().max() {
        let need = resolving_cells(kmax);
        if m < need {
            warnings.push(format!(
                "mesh of {m} cells per axis under-resolves sin(k²t²) for k = {kmax} (≥ {need} suggested); aliasing may distort the sequence"
            ));
        }
    }
    let mut rows = Vec::new();
    let mut dumps = Vec::new();
    for &k in ks {
        let kk = u32::try_from(k).map_err(|_| Error::Parameter(format!("k = {k} too large")))?;
        let h = phantoms::fresnel_perturbation(kk, r, xdagger.spec())?;
        let yk = op.apply(&grid::combine(1.0, xdagger, 1.0, &h)?)?;
        let dy = grid::combine(1.0, &yk, -1.0, &y)?;
        rows.push(IllposedRow { k, distance: l2_norm(&h), residual: l2_norm(&dy), bound: None });
        if dump {
            dumps.push(IllposedDump { k, dx: h, dy });
        }
    }
    Ok(FullDemo { rows, warnings, dumps })
}
