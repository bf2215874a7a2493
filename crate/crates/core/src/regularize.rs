//! Tikhonov regularization `min ‖F(x) − y^δ‖²_Y + α‖x − x̄‖²_X`.
//!
//! The minimizer is a projected gradient method with Barzilai–Borwein step
//! seeding and monotone Armijo backtracking. Gradients go through the exact
//! discrete adjoint of `F′(x)`, so they are consistent with the objective to
//! rounding.

use serde::{Deserialize, Serialize};

use crate::autoconv::{Autoconvolution, DataCase};
use crate::error::{Error, Result};
use crate::fft::Spectrum;
use crate::grid::{self, ensure_same_spec, GridFn};

/// Barzilai–Borwein step length from `s = x⁺ − x`, `y = ∇f⁺ − ∇f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BbStep {
    /// `⟨s,s⟩/⟨s,y⟩`
    Long,
    /// `⟨s,y⟩/⟨y,y⟩`
    Short,
}

/// Step-size policy for [`minimize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepRule {
    /// BB step as the first trial, then halving until
    /// `f(x⁺) ≤ f(x) + armijo·⟨∇f, x⁺ − x⟩`.
    BarzilaiBorwein { armijo: f64, max_backtracks: usize, variant: BbStep },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::BarzilaiBorwein { armijo: 1e-4, max_backtracks: 60, variant: BbStep::Short }
    }
}

/// Parameters of one Tikhonov solve.
#[derive(Debug, Clone)]
pub struct TikhonovConfig {
    pub alpha: f64,
    /// Penalty center x̄.
    pub xbar: GridFn,
    pub case: DataCase,
    /// Restrict the iterates to the nonnegative cone.
    pub nonneg: bool,
    pub max_iters: usize,
    /// Relative stationarity tolerance.
    pub grad_tol: f64,
    pub step_rule: StepRule,
    /// Stop when the objective fell by less than `stagnation_tol` (relative)
    /// over the last `stagnation_window` iterations.
    pub stagnation_tol: f64,
    pub stagnation_window: usize,
    /// Keep the objective value of every accepted iterate.
    pub record_trace: bool,
}

impl TikhonovConfig {
    pub const DEFAULT_XBAR: f64 = 0.5;

    /// Defaults: α = 1e−4, constraint on for limited data only,
    /// 5000 iterations, relative gradient tolerance 1e−8.
    pub fn new(xbar: GridFn, case: DataCase) -> Self {
        Self {
            alpha: 1e-4,
            xbar,
            nonneg: case == DataCase::Limited,
            case,
            max_iters: 5000,
            grad_tol: 1e-8,
            step_rule: StepRule::default(),
            stagnation_tol: 1e-12,
            stagnation_window: 10,
            record_trace: false,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Parameter(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Parameter("grad_tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Parameter("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Why [`minimize`] stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Gradient,
    Stagnation,
    MaxIters,
    /// No step along the projected gradient decreased the objective.
    LineSearch,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x: GridFn,
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Norm of the projected gradient at `x`.
    pub grad_norm: f64,
    pub stop: StopReason,
    /// Objective per accepted iterate, starting with `x0`, if requested.
    pub trace: Vec<f64>,
}

/// The Tikhonov functional for fixed data, sharing FFT plans across calls.
struct Functional<'a> {
    op: Autoconvolution,
    ydelta: &'a GridFn,
    cfg: &'a TikhonovConfig,
}

/// Objective value with what the gradient needs.
struct Eval {
    value: f64,
    spectrum: Spectrum,
    residual: GridFn,
}

impl<'a> Functional<'a> {
    fn new(ydelta: &'a GridFn, cfg: &'a TikhonovConfig) -> Result<Self> {
        let op = Autoconvolution::new(cfg.xbar.spec(), cfg.case)?;
        ensure_same_spec(op.output_spec(), ydelta.spec())?;
        Ok(Self { op, ydelta, cfg })
    }

    fn eval(&self, x: &GridFn) -> Result<Eval> {
        let spectrum = self.op.spectrum(x)?;
        let fx = self.op.apply_spectrum(&spectrum);
        let residual = grid::combine(1.0, &fx, -1.0, self.ydelta)?;
        let misfit = grid::l2_norm(&residual);
        let pen = grid::l2_norm(&grid::combine(1.0, x, -1.0, &self.cfg.xbar)?);
        Ok(Eval { value: misfit * misfit + self.cfg.alpha * pen * pen, spectrum, residual })
    }

    fn gradient(&self, x: &GridFn, ev: &Eval) -> Result<GridFn> {
        let adj = self.op.adjoint_spectrum(&ev.spectrum, &ev.residual)?;
        let a = self.cfg.alpha;
        let vals = adj
            .values()
            .iter()
            .zip(x.values())
            .zip(self.cfg.xbar.values())
            .map(|((g, xi), bi)| 2.0 * g + 2.0 * a * (xi - bi))
            .collect();
        Ok(GridFn::from_raw(x.spec().clone(), vals))
    }

    /// Projected-gradient stationarity measure `‖x − P(x − ∇f)‖`.
    fn stationarity(&self, x: &GridFn, g: &GridFn) -> f64 {
        if !self.cfg.nonneg {
            return grid::l2_norm(g);
        }
        let vol = x.spec().cell_volume();
        let s: f64 = x
            .values()
            .iter()
            .zip(g.values())
            .map(|(xi, gi)| {
                let d = xi - (xi - gi).max(0.0);
                d * d
            })
            .sum();
        (vol * s).sqrt()
    }

    fn project(&self, x: GridFn) -> GridFn {
        if self.cfg.nonneg {
            grid::project_nonneg(&x)
        } else {
            x
        }
    }
}

/// `‖F(x) − y^δ‖²_Y + α‖x − x̄‖²_X`.
pub fn objective(x: &GridFn, ydelta: &GridFn, cfg: &TikhonovConfig) -> Result<f64> {
    ensure_same_spec(x.spec(), cfg.xbar.spec())?;
    Ok(Functional::new(ydelta, cfg)?.eval(x)?.value)
}

/// `2·F′(x)*(F(x) − y^δ) + 2α(x − x̄)`.
pub fn gradient(x: &GridFn, ydelta: &GridFn, cfg: &TikhonovConfig) -> Result<GridFn> {
    ensure_same_spec(x.spec(), cfg.xbar.spec())?;
    let f = Functional::new(ydelta, cfg)?;
    let ev = f.eval(x)?;
    f.gradient(x, &ev)
}

fn ensure_finite(value: f64, what: &str, iteration: usize) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::Numerical(format!("non-finite {what} ({value}) at iteration {iteration}")));
    }
    Ok(())
}

/// Minimizes the Tikhonov functional starting from `x0`.
pub fn minimize(ydelta: &GridFn, x0: &GridFn, cfg: &TikhonovConfig) -> Result<SolveResult> {
    cfg.validate()?;
    ensure_same_spec(x0.spec(), cfg.xbar.spec())?;
    let StepRule::BarzilaiBorwein { armijo, max_backtracks, variant } = cfg.step_rule;
    let f = Functional::new(ydelta, cfg)?;

    let mut x = f.project(x0.clone());
    let mut ev = f.eval(&x)?;
    ensure_finite(ev.value, "objective", 0)?;
    let mut g = f.gradient(&x, &ev)?;
    let mut pg = f.stationarity(&x, &g);
    ensure_finite(pg, "gradient norm", 0)?;
    let threshold = cfg.grad_tol * (1.0 + pg);
    let mut trace = Vec::new();
    let mut history = vec![ev.value];
    if cfg.record_trace {
        trace.push(ev.value);
    }

    let finish = |x: GridFn, value: f64, iterations: usize, grad_norm: f64, stop: StopReason, trace: Vec<f64>| SolveResult {
        x,
        objective_value: value,
        iterations,
        converged: stop == StopReason::Gradient,
        grad_norm,
        stop,
        trace,
    };

    if pg <= threshold {
        return Ok(finish(x, ev.value, 0, pg, StopReason::Gradient, trace));
    }

    let gnorm = grid::l2_norm(&g);
    let mut step = if gnorm > 0.0 { 1.0 / gnorm } else { 1.0 };
    let vol = x.spec().cell_volume();

    for it in 1..=cfg.max_iters {
        let mut t = step;
        let mut accepted = None;
        for _ in 0..=max_backtracks {
            let trial = f.project(grid::combine(1.0, &x, -t, &g)?);
            let gd = vol * grid::dot(g.values(), &diff(&trial, &x));
            let tev = f.eval(&trial)?;
            if tev.value.is_finite() && tev.value <= ev.value + armijo * gd {
                accepted = Some((trial, tev));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, evn)) = accepted else {
            return Ok(finish(x, ev.value, it - 1, pg, StopReason::LineSearch, trace));
        };
        let gn = f.gradient(&xn, &evn)?;
        let s = diff(&xn, &x);
        let yv = diff(&gn, &g);
        let sy = grid::dot(&s, &yv);
        let ss = grid::dot(&s, &s);
        let bb = match variant {
            BbStep::Long => ss / sy,
            BbStep::Short => sy / grid::dot(&yv, &yv),
        };
        step = if sy > 0.0 { bb.clamp(1e-12, 1e12) } else { (2.0 * t).min(1e12) };

        x = xn;
        ev = evn;
        g = gn;
        pg = f.stationarity(&x, &g);
        ensure_finite(pg, "gradient norm", it)?;
        history.push(ev.value);
        if cfg.record_trace {
            trace.push(ev.value);
        }
        if pg <= threshold {
            return Ok(finish(x, ev.value, it, pg, StopReason::Gradient, trace));
        }
        let w = cfg.stagnation_window;
        if history.len() > w {
            let old = history[history.len() - 1 - w];
            if old - ev.value <= cfg.stagnation_tol * old.abs() {
                return Ok(finish(x, ev.value, it, pg, StopReason::Stagnation, trace));
            }
        }
    }
    Ok(finish(x, ev.value, cfg.max_iters, pg, StopReason::MaxIters, trace))
}

fn diff(a: &GridFn, b: &GridFn) -> Vec<f64> {
    a.values().iter().zip(b.values()).map(|(p, q)| p - q).collect()
}

/// Controls for [`select_alpha_opt`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSearch {
    /// Extra golden-section solves in log α around the best grid point.
    pub refine_solves: usize,
    /// Stop descending the grid once the error has risen this many
    /// consecutive times past the running best. `None` sweeps the grid.
    pub patience: Option<usize>,
}

impl Default for AlphaSearch {
    fn default() -> Self {
        Self { refine_solves: 10, patience: None }
    }
}

/// One solve of an α sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaTrial {
    pub alpha: f64,
    /// `‖x_α − x†‖_X`, or `None` when the solve failed.
    pub error: Option<f64>,
    pub iterations: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AlphaSelection {
    pub alpha: f64,
    pub error: f64,
    pub x: GridFn,
    pub iterations: usize,
    pub trials: Vec<AlphaTrial>,
}

/// `n` log-spaced values in `[lo, hi]`, ascending.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Default α grid: 24 points log-spaced in `[1e−10, 1e−1]·‖y^δ‖²_Y`.
pub fn default_alpha_grid(ydelta: &GridFn) -> Vec<f64> {
    let s = grid::l2_norm(ydelta).powi(2).max(f64::MIN_POSITIVE);
    log_grid(1e-10 * s, 1e-1 * s, 24)
}

/// Oracle parameter choice: the α on the grid (refined by golden section
/// in log α) whose regularized solution is closest to `xdagger`.
///
/// Solves run from the largest α down, each warm-started from the previous
/// solution.
pub fn select_alpha_opt(
    ydelta: &GridFn,
    xdagger: &GridFn,
    cfg_base: &TikhonovConfig,
    alpha_grid: &[f64],
    search: &AlphaSearch,
) -> Result<AlphaSelection> {
    if alpha_grid.is_empty() {
        return Err(Error::Parameter("alpha grid is empty".into()));
    }
    if alpha_grid.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(Error::Parameter("alpha grid entries must be positive".into()));
    }
    ensure_same_spec(xdagger.spec(), cfg_base.xbar.spec())?;
    let mut grid_vals: Vec<f64> = alpha_grid.to_vec();
    grid_vals.sort_by(f64::total_cmp);
    grid_vals.dedup();

    let mut trials = Vec::new();
    let mut best: Option<(f64, f64, GridFn, usize)> = None;
    let mut best_pos = 0usize;
    let mut rises = 0usize;
    let mut x0 = cfg_base.xbar.clone();

    let solve = |alpha: f64, start: &GridFn| -> Result<(SolveResult, f64)> {
        let cfg = cfg_base.clone().with_alpha(alpha);
        let res = minimize(ydelta, start, &cfg)?;
        let err = grid::l2_norm(&grid::combine(1.0, &res.x, -1.0, xdagger)?);
        Ok((res, err))
    };

    for pos in (0..grid_vals.len()).rev() {
        let alpha = grid_vals[pos];
        match solve(alpha, &x0) {
            Ok((res, err)) => {
                trials.push(AlphaTrial { alpha, error: Some(err), iterations: res.iterations, note: None });
                x0 = res.x.clone();
                if best.as_ref().is_none_or(|b| err < b.1) {
                    best = Some((alpha, err, res.x, res.iterations));
                    best_pos = pos;
                    rises = 0;
                } else {
                    rises += 1;
                }
            }
            Err(e) => {
                trials.push(AlphaTrial { alpha, error: None, iterations: 0, note: Some(e.to_string()) });
            }
        }
        if search.patience.is_some_and(|p| rises >= p) {
            break;
        }
    }

    let Some(mut best) = best else {
        return Err(Error::AllSolvesFailed(
            trials.iter().map(|t| format!("alpha={:e}: {}", t.alpha, t.note.as_deref().unwrap_or("?"))).collect(),
        ));
    };

    if search.refine_solves > 0 && grid_vals.len() > 1 {
        let lo = grid_vals[best_pos.saturating_sub(1)].ln();
        let hi = grid_vals[(best_pos + 1).min(grid_vals.len() - 1)].ln();
        let mut budget = search.refine_solves;
        let eval = |la: f64, best: &mut (f64, f64, GridFn, usize), trials: &mut Vec<AlphaTrial>| -> f64 {
            let alpha = la.exp();
            match solve(alpha, &best.2.clone()) {
                Ok((res, err)) => {
                    trials.push(AlphaTrial { alpha, error: Some(err), iterations: res.iterations, note: None });
                    if err < best.1 {
                        *best = (alpha, err, res.x, res.iterations);
                    }
                    err
                }
                Err(e) => {
                    trials.push(AlphaTrial { alpha, error: None, iterations: 0, note: Some(e.to_string()) });
                    f64::INFINITY
                }
            }
        };
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (lo, hi);
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        if budget >= 2 {
            let mut fc = eval(c, &mut best, &mut trials);
            let mut fd = eval(d, &mut best, &mut trials);
            budget -= 2;
            while budget > 0 {
                if fc < fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - ratio * (b - a);
                    fc = eval(c, &mut best, &mut trials);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + ratio * (b - a);
                    fd = eval(d, &mut best, &mut trials);
                }
                budget -= 1;
            }
        } else {
            eval(0.5 * (a + b), &mut best, &mut trials);
        }
    }

    Ok(AlphaSelection { alpha: best.0, error: best.1, x: best.2, iterations: best.3, trials })
}
