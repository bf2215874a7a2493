//! Command-line front end of the `deautoconv` binary.
//!
//! Exit codes: 0 success, 1 failed check, 2 usage or I/O error, 3 solver
//! failure. A `--config FILE` of `key = value` lines supplies subcommand
//! flags; flags given on the command line override it.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autoconv::{self, Autoconvolution, DataCase};
use crate::error::Error;
use crate::experiments::{self, NoiseSpec, SolverSettings, StudyConfig, TABLE1_LEVELS};
use crate::grid::{self, l2_norm, GridFn, GridSpec};
use crate::io;
use crate::par::Exec;
use crate::phantoms::{self, PhantomId};
use crate::regularize::{self, AlphaSearch, StopReason, TikhonovConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "deautoconv", version, about = "n-dimensional deautoconvolution toolkit", args_override_self = true)]
pub struct Cli {
    /// Worker threads for the study harness (1 = sequential, 0 = all cores).
    #[arg(long, global = true, env = "DEAUTOCONV_THREADS")]
    pub threads: Option<usize>,
    /// File of `key = value` lines supplying flags of the subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Leave the generation time out of JSON reports.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evaluate the autoconvolution of a grid function.
    Forward(ForwardArgs),
    /// Tikhonov-regularized reconstruction.
    Solve(SolveArgs),
    /// Noise-level study of relative errors and Hölder exponents.
    Table1(Table1Args),
    /// Perturbation sequences with vanishing image differences.
    Illposed(IllposedArgs),
    /// Randomized property checks.
    Check(CheckArgs),
    /// Fresnel integrals on a uniform grid of arguments.
    FresnelTable(FresnelArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CaseArg {
    Full,
    Limited,
}

impl From<CaseArg> for DataCase {
    fn from(c: CaseArg) -> Self {
        match c {
            CaseArg::Full => DataCase::Full,
            CaseArg::Limited => DataCase::Limited,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CasesArg {
    Full,
    Limited,
    Both,
}

impl CasesArg {
    fn cases(self) -> Vec<DataCase> {
        match self {
            CasesArg::Full => vec![DataCase::Full],
            CasesArg::Limited => vec![DataCase::Limited],
            CasesArg::Both => vec![DataCase::Full, DataCase::Limited],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Gfn,
    Csv,
}

#[derive(Args, Debug, Clone)]
pub struct SourceArgs {
    /// Phantom: x1, x2, x3, product2d, product3d, or `one` (constant 1).
    #[arg(long, conflicts_with = "input")]
    pub phantom: Option<String>,
    /// Input grid file (GFN1).
    #[arg(long = "in", value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Dimension of the `one` phantom.
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    /// Cells per axis of a phantom.
    #[arg(long, default_value_t = 50)]
    pub m: usize,
}

#[derive(Args, Debug)]
pub struct ForwardArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, value_enum, default_value_t = CaseArg::Full)]
    pub case: CaseArg,
    /// Output file for F(x).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Gfn)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Observed data file (GFN1); otherwise data are simulated from the phantom.
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Exact solution file, for error reporting and `--alpha-opt`.
    #[arg(long, value_name = "FILE")]
    pub truth: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = CaseArg::Full)]
    pub case: CaseArg,
    /// Relative noise level in percent for simulated data.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fixed regularization parameter.
    #[arg(long, conflicts_with = "alpha_opt", default_value_t = 1e-4)]
    pub alpha: f64,
    /// Choose α minimizing the error to the known solution.
    #[arg(long)]
    pub alpha_opt: bool,
    /// Constant reference element and initial guess.
    #[arg(long, default_value_t = TikhonovConfig::DEFAULT_XBAR)]
    pub xbar: f64,
    /// Start from the known solution instead of x̄.
    #[arg(long)]
    pub x0_truth: bool,
    /// Nonnegativity constraint (default: on for limited data).
    #[arg(long)]
    pub nonneg: Option<bool>,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub grad_tol: f64,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Gfn)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct Table1Args {
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = CasesArg::Both)]
    pub case: CasesArg,
    #[arg(long, default_value_t = 50)]
    pub m: usize,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative noise levels in percent.
    #[arg(long, value_delimiter = ',', default_values_t = TABLE1_LEVELS.map(|l| 100.0 * l))]
    pub levels: Vec<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Table CSV path.
    #[arg(long, default_value = "table1.csv")]
    pub out: PathBuf,
    /// JSON report path.
    #[arg(long, default_value = "table1.json")]
    pub json: PathBuf,
    /// Optional CSV with one row per (level, run).
    #[arg(long, value_name = "FILE")]
    pub runs_csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = TikhonovConfig::DEFAULT_XBAR)]
    pub xbar: f64,
    /// α grid points, log-spaced in [1e-10, 1e-1]·‖y^δ‖².
    #[arg(long, default_value_t = 24)]
    pub alpha_points: usize,
    /// Golden-section solves refining the best grid α.
    #[arg(long, default_value_t = 10)]
    pub refine: usize,
    /// Consecutive error increases ending the α sweep (0 sweeps the grid).
    #[arg(long, default_value_t = 3)]
    pub patience: usize,
}

impl SolverArgs {
    fn settings(&self) -> SolverSettings {
        SolverSettings {
            xbar: self.xbar,
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            alpha_points: self.alpha_points,
            search: AlphaSearch { refine_solves: self.refine, patience: (self.patience > 0).then_some(self.patience) },
            ..SolverSettings::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Limited,
    Full,
}

#[derive(Args, Debug)]
pub struct IllposedArgs {
    #[arg(long, value_enum)]
    pub variant: Variant,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub m: usize,
    #[arg(long, default_value_t = 0.25)]
    pub r: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [5usize, 10, 25])]
    pub k: Vec<usize>,
    /// Write the difference grids into this directory.
    #[arg(long, value_name = "DIR", num_args = 0..=1, default_missing_value = ".")]
    pub dump: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Gfn)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CheckName {
    Twofold,
    Nonunique,
    Nonlinearity,
    Support,
    Adjoint,
    Gradient,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(value_enum)]
    pub name: CheckName,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 16)]
    pub m: usize,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Zeroed cells per axis for `nonunique` (default m/5).
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long, value_enum, default_value_t = CasesArg::Both)]
    pub case: CasesArg,
}

#[derive(Args, Debug)]
pub struct FresnelArgs {
    #[arg(long, default_value_t = 0.0)]
    pub from: f64,
    #[arg(long, default_value_t = 10.0)]
    pub to: f64,
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Check(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(_) | Error::AllSolvesFailed(_) => Failure::Solver(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> std::result::Result<Vec<(String, String)>, String> {
    let mut pairs = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!("config line {}: expected key = value", no + 1));
        };
        let k = k.trim().replace('_', "-");
        if k.is_empty() {
            return Err(format!("config line {}: empty key", no + 1));
        }
        pairs.push((k, v.trim().trim_matches('"').to_string()));
    }
    Ok(pairs)
}

const SUBCOMMANDS: [&str; 6] = ["forward", "solve", "table1", "illposed", "check", "fresnel-table"];

/// Inserts config-file flags right after the subcommand name so that
/// later command-line flags take precedence.
fn expand_config(args: Vec<OsString>) -> std::result::Result<Vec<OsString>, String> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut extra = Vec::new();
    for (k, v) in parse_config(&text)? {
        match v.as_str() {
            "true" => extra.push(OsString::from(format!("--{k}"))),
            "false" => {}
            _ => {
                extra.push(OsString::from(format!("--{k}")));
                extra.push(OsString::from(v));
            }
        }
    }
    let Some(pos) = args.iter().position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref())) else {
        return Ok(args);
    };
    let mut out = args[..=pos].to_vec();
    // a positional check name must stay first
    let mut rest = args[pos + 1..].iter().cloned().peekable();
    if args[pos] == "check" {
        if let Some(first) = rest.next_if(|a| !a.to_string_lossy().starts_with('-')) {
            out.push(first);
        }
    }
    out.extend(extra);
    out.extend(rest);
    Ok(out)
}

/// Runs the CLI on `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(stderr, "{text}") } else { write!(stdout, "{text}") };
            return code;
        }
    };
    let exec = Exec::from_threads(cli.threads);
    let result = match &cli.command {
        Command::Forward(a) => cmd_forward(a, stdout),
        Command::Solve(a) => cmd_solve(a, stdout),
        Command::Table1(a) => cmd_table1(a, exec, !cli.no_timestamp, stdout, stderr),
        Command::Illposed(a) => cmd_illposed(a, stdout, stderr),
        Command::Check(a) => cmd_check(a, stdout),
        Command::FresnelTable(a) => cmd_fresnel(a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Check(m)) => {
            let _ = writeln!(stderr, "check failed: {m}");
            EXIT_CHECK
        }
        Err(Failure::Solver(m)) => {
            let _ = writeln!(stderr, "solver failure: {m}");
            EXIT_SOLVER
        }
    }
}

fn load_source(src: &SourceArgs) -> std::result::Result<GridFn, Failure> {
    match (&src.phantom, &src.input) {
        (_, Some(path)) => Ok(io::load_gridfn(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?),
        (Some(name), None) if name.eq_ignore_ascii_case("one") => {
            Ok(GridFn::constant(GridSpec::unit_cube(src.n, src.m)?, 1.0))
        }
        (Some(name), None) => Ok(phantoms::sample_phantom(name.parse()?, src.m)?),
        (None, None) => Err(Failure::Usage("either --phantom or --in is required".into())),
    }
}

fn save(path: &Path, x: &GridFn, format: Format) -> CmdResult {
    let res = match format {
        Format::Gfn => io::save_gridfn(path, x),
        Format::Csv => std::fs::File::create(path)
            .map_err(Error::from)
            .and_then(|f| io::write_gridfn_csv(std::io::BufWriter::new(f), x)),
    };
    res.map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn cmd_forward(a: &ForwardArgs, out: &mut dyn Write) -> CmdResult {
    let x = load_source(&a.source)?;
    let y = autoconv::autoconvolve(&x, a.case.into())?;
    writeln!(out, "norm_x = {:e}", l2_norm(&x))?;
    writeln!(out, "norm_y = {:e}", l2_norm(&y))?;
    if let Some(path) = &a.out {
        save(path, &y, a.format)?;
    }
    Ok(())
}

fn cmd_solve(a: &SolveArgs, out: &mut dyn Write) -> CmdResult {
    let case: DataCase = a.case.into();
    if !(a.noise >= 0.0) {
        return Err(Failure::Usage("--noise must be nonnegative".into()));
    }
    let synthetic = a.data.is_none();
    let truth = match (&a.truth, synthetic) {
        (Some(path), _) => Some(io::load_gridfn(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?),
        (None, true) => Some(load_source(&a.source)?),
        (None, false) => None,
    };
    let ydelta = match &a.data {
        Some(path) => io::load_gridfn(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
        None => {
            let x = truth.as_ref().expect("synthetic data have a known solution");
            let y = autoconv::autoconvolve(x, case)?;
            experiments::add_noise(&y, &NoiseSpec { delta_rel: a.noise / 100.0, seed: a.seed })?
        }
    };
    let input_spec = match &truth {
        Some(x) => x.spec().clone(),
        None => {
            let spec = ydelta.spec();
            let m = match case {
                DataCase::Full => spec.cells().div_ceil(2),
                DataCase::Limited => spec.cells(),
            };
            GridSpec::unit_cube(spec.dim(), m)?
        }
    };
    if (a.alpha_opt || a.x0_truth) && truth.is_none() {
        return Err(Failure::Usage("--alpha-opt and --x0-truth need a known solution (--truth or a phantom)".into()));
    }
    let mut cfg = TikhonovConfig::new(GridFn::constant(input_spec, a.xbar), case);
    if let Some(nn) = a.nonneg {
        cfg.nonneg = nn;
    }
    cfg.max_iters = a.max_iters;
    cfg.grad_tol = a.grad_tol;

    let (x, alpha, iterations, stop) = if a.alpha_opt {
        let xd = truth.as_ref().unwrap();
        let search = AlphaSearch { refine_solves: 10, patience: Some(3) };
        let sel = regularize::select_alpha_opt(&ydelta, xd, &cfg, &regularize::default_alpha_grid(&ydelta), &search)?;
        let iters = sel.trials.iter().map(|t| t.iterations).sum();
        (sel.x, sel.alpha, iters, None)
    } else {
        let cfg = cfg.with_alpha(a.alpha);
        let x0 = if a.x0_truth { truth.clone().unwrap() } else { cfg.xbar.clone() };
        let res = regularize::minimize(&ydelta, &x0, &cfg)?;
        (res.x, a.alpha, res.iterations, Some((res.stop, res.grad_norm)))
    };
    writeln!(out, "alpha = {alpha:e}")?;
    writeln!(out, "iterations = {iterations}")?;
    if let Some((stop, g)) = stop {
        writeln!(out, "stop = {stop:?}")?;
        writeln!(out, "projected_gradient = {g:e}")?;
    }
    if let Some(xd) = &truth {
        let rel = l2_norm(&grid::combine(1.0, &x, -1.0, xd)?) / l2_norm(xd);
        writeln!(out, "rel_error = {rel:e}")?;
    }
    if let Some(path) = &a.out {
        save(path, &x, a.format)?;
    }
    if let Some((StopReason::MaxIters, g)) = stop {
        return Err(Failure::Solver(format!("no convergence in {} iterations (projected gradient {g:e})", a.max_iters)));
    }
    Ok(())
}

#[derive(Serialize)]
struct Table1Json<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_unix_s: Option<u64>,
    reports: Vec<&'a experiments::ExperimentReport>,
}

fn cmd_table1(a: &Table1Args, exec: Exec, stamp: bool, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    if a.levels.is_empty() || a.levels.iter().any(|l| !(*l > 0.0 && *l < 100.0)) {
        return Err(Failure::Usage("--levels must be percentages in (0, 100)".into()));
    }
    let mut reports = Vec::new();
    for case in a.case.cases() {
        let cfg = StudyConfig {
            n: a.n,
            case,
            m: a.m,
            levels: a.levels.iter().map(|l| l / 100.0).collect(),
            runs: a.runs,
            seed0: a.seed,
            solver: a.solver.settings(),
        };
        let mut rep = experiments::run_rate_study(&cfg, exec)?;
        if !stamp {
            rep.wall_time_s = None;
        }
        if rep.failed_cells > 0 {
            writeln!(err, "warning: {} of {} {case} cells failed", rep.failed_cells, rep.runs.len())?;
        }
        reports.push(rep);
    }
    let refs: Vec<&experiments::ExperimentReport> = reports.iter().collect();
    let mut table = io::table_csv(&refs)?;
    let failed: usize = reports.iter().map(|r| r.failed_cells).sum();
    if failed > 0 {
        table = format!("warning,{failed} cells failed and are excluded from the means\n{table}");
    }
    std::fs::write(&a.out, &table).map_err(|e| Failure::Usage(format!("{}: {e}", a.out.display())))?;
    let generated_unix_s = stamp
        .then(|| std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
    let json = serde_json::to_string_pretty(&Table1Json { generated_unix_s, reports: refs.clone() })
        .map_err(|e| Failure::Usage(e.to_string()))?;
    std::fs::write(&a.json, json + "\n").map_err(|e| Failure::Usage(format!("{}: {e}", a.json.display())))?;
    if let Some(path) = &a.runs_csv {
        let mut text = String::new();
        for r in &reports {
            let body = io::runs_csv(r)?;
            if text.is_empty() {
                text.push_str("case,");
                text.push_str(body.lines().next().unwrap_or(""));
                text.push('\n');
            }
            for line in body.lines().skip(1) {
                text.push_str(&format!("{},{line}\n", r.case));
            }
        }
        std::fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    }
    write!(out, "{table}")?;
    Ok(())
}

fn cmd_illposed(a: &IllposedArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    if a.k.is_empty() {
        return Err(Failure::Usage("--k needs at least one value".into()));
    }
    let rows = match a.variant {
        Variant::Limited => {
            if a.dump.is_some() {
                writeln!(err, "warning: --dump applies to the full variant only")?;
            }
            experiments::demo_illposed_limited(a.n, a.m, a.r, &a.k)?
        }
        Variant::Full => {
            let x = phantoms::sample_phantom(PhantomId::product_for_dim(a.n)?, a.m)?;
            let demo = experiments::demo_illposed_full(a.r, &a.k, &x, a.dump.is_some())?;
            for w in &demo.warnings {
                writeln!(err, "warning: {w}")?;
            }
            if let Some(dir) = &a.dump {
                std::fs::create_dir_all(dir)?;
                let ext = match a.format {
                    Format::Gfn => "gfn",
                    Format::Csv => "csv",
                };
                for d in &demo.dumps {
                    save(&dir.join(format!("dx_k{}.{ext}", d.k)), &d.dx, a.format)?;
                    save(&dir.join(format!("dy_k{}.{ext}", d.k)), &d.dy, a.format)?;
                }
            }
            demo.rows
        }
    };
    writeln!(out, "k,distance,residual,bound")?;
    for r in rows {
        let bound = r.bound.map_or_else(String::new, |b| format!("{b:e}"));
        writeln!(out, "{},{:e},{:e},{bound}", r.k, r.distance, r.residual)?;
    }
    Ok(())
}

fn random_fn(spec: &GridSpec, rng: &mut ChaCha8Rng, lo: f64) -> GridFn {
    let v = (0..spec.len()).map(|_| rng.random_range(lo..1.0)).collect();
    GridFn::from_values(spec.clone(), v).expect("finite samples")
}

struct Property {
    name: String,
    worst: f64,
    limit: f64,
    failing: Option<String>,
}

impl Property {
    fn new(name: impl Into<String>, limit: f64) -> Self {
        Self { name: name.into(), worst: 0.0, limit, failing: None }
    }

    fn record(&mut self, value: f64, context: impl FnOnce() -> String) {
        let bad = !(value <= self.limit);
        if value > self.worst || value.is_nan() {
            self.worst = value;
        }
        if bad && self.failing.is_none() {
            self.failing = Some(context());
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn cmd_check(a: &CheckArgs, out: &mut dyn Write) -> CmdResult {
    let spec = GridSpec::unit_cube(a.n, a.m)?;
    let mut props = Vec::new();
    let ctx = |case: DataCase, trial: usize, seed: u64| move || format!("case={case} n={} m={} trial={trial} seed={seed}", a.n, a.m);
    match a.name {
        CheckName::Twofold => {
            for case in a.case.cases() {
                let mut p = Property::new(format!("twofold[{case}] ‖F(x)−F(−x)‖/‖F(x)‖"), 1e-15);
                for t in 0..a.trials {
                    let seed = a.seed.wrapping_add(t as u64);
                    let x = random_fn(&spec, &mut ChaCha8Rng::seed_from_u64(seed), -1.0);
                    let y = l2_norm(&autoconv::autoconvolve(&x, case)?);
                    p.record(experiments::check_twofoldness(&x, case)? / y.max(f64::MIN_POSITIVE), ctx(case, t, seed));
                }
                props.push(p);
            }
        }
        CheckName::Nonunique => {
            let q = a.q.unwrap_or(a.m / 5);
            let mut p = Property::new("nonunique residual", 1e-14);
            let mut d = Property::new("nonunique distance ≤ 0", 0.0);
            let mut c = Property::new("control residual ≤ 1e-3", 0.0);
            for t in 0..a.trials.max(1) {
                let seed = a.seed.wrapping_add(t as u64);
                let res = experiments::check_nonuniqueness(a.n, a.m, q, seed)?;
                let here = || format!("n={} m={} q={q} seed={seed}", a.n, a.m);
                p.record(res.residual, here);
                d.record(if res.distance > 0.0 { 0.0 } else { 1.0 }, here);
                let ctl = experiments::nonuniqueness_control(a.n, a.m, q, seed)?;
                c.record(if ctl.residual > 1e-3 { 0.0 } else { 1.0 }, here);
            }
            props.extend([p, d, c]);
        }
        CheckName::Nonlinearity => {
            for case in a.case.cases() {
                let mut eq = Property::new(format!("nonlinearity[{case}] remainder = ‖F(x̃−x)‖"), 1e-12);
                let mut le = Property::new(format!("nonlinearity[{case}] remainder ≤ ‖x̃−x‖²"), 0.0);
                for t in 0..a.trials {
                    let seed = a.seed.wrapping_add(t as u64);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let x = random_fn(&spec, &mut rng, -1.0);
                    let xt = random_fn(&spec, &mut rng, -1.0);
                    let (lhs, bound) = autoconv::nonlinearity_residual(&x, &xt, case)?;
                    let exact = l2_norm(&autoconv::autoconvolve(&grid::combine(1.0, &xt, -1.0, &x)?, case)?);
                    eq.record(rel(lhs, exact), ctx(case, t, seed));
                    le.record((lhs - bound * (1.0 + 1e-12)).max(0.0), ctx(case, t, seed));
                }
                props.extend([eq, le]);
            }
        }
        CheckName::Support => {
            let mut p = Property::new("support ⊆ sum of supports (violations)", 0.0);
            for t in 0..a.trials {
                let seed = a.seed.wrapping_add(t as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut boxed = || {
                    let bounds: Vec<(usize, usize)> = (0..a.n)
                        .map(|_| {
                            let lo = rng.random_range(0..a.m);
                            (lo, rng.random_range(lo..a.m))
                        })
                        .collect();
                    let vals = (0..spec.len())
                        .map(|flat| {
                            let idx = spec.unravel(flat);
                            let inside = idx.iter().zip(&bounds).all(|(i, (lo, hi))| lo <= i && i <= hi);
                            if inside { rng.random_range(0.1..1.0) } else { 0.0 }
                        })
                        .collect();
                    GridFn::from_values(spec.clone(), vals).expect("finite samples")
                };
                let (f, g) = (boxed(), boxed());
                let ok = autoconv::support_inclusion_check(&f, &g, 0.0)?;
                p.record(if ok { 0.0 } else { 1.0 }, || format!("n={} m={} trial={t} seed={seed}", a.n, a.m));
            }
            props.push(p);
        }
        CheckName::Adjoint => {
            for case in a.case.cases() {
                let op = Autoconvolution::new(&spec, case)?;
                let mut p = Property::new(format!("adjoint[{case}] dot test"), 1e-10);
                for t in 0..a.trials {
                    let seed = a.seed.wrapping_add(t as u64);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let x = random_fn(&spec, &mut rng, -1.0);
                    let d = random_fn(&spec, &mut rng, -1.0);
                    let w = random_fn(op.output_spec(), &mut rng, -1.0);
                    let lhs = op.derivative(&x, &d)?.inner(&w)?;
                    let rhs = d.inner(&op.adjoint(&x, &w)?)?;
                    p.record(rel(lhs, rhs), ctx(case, t, seed));
                }
                props.push(p);
            }
        }
        CheckName::Gradient => {
            for case in a.case.cases() {
                let mut p = Property::new(format!("gradient[{case}] vs central differences"), 1e-5);
                let out_spec = autoconv::output_spec(&spec, case)?;
                for t in 0..a.trials {
                    let seed = a.seed.wrapping_add(t as u64);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let x = random_fn(&spec, &mut rng, 0.0);
                    let d = random_fn(&spec, &mut rng, -1.0);
                    let yd = random_fn(&out_spec, &mut rng, 0.0);
                    let mut cfg = TikhonovConfig::new(random_fn(&spec, &mut rng, 0.0), case).with_alpha(0.1);
                    cfg.nonneg = false;
                    let g = regularize::gradient(&x, &yd, &cfg)?;
                    let dir = g.inner(&d)?;
                    let eps = 1e-6;
                    let fp = regularize::objective(&grid::combine(1.0, &x, eps, &d)?, &yd, &cfg)?;
                    let fm = regularize::objective(&grid::combine(1.0, &x, -eps, &d)?, &yd, &cfg)?;
                    p.record(rel((fp - fm) / (2.0 * eps), dir), ctx(case, t, seed));
                }
                props.push(p);
            }
        }
    }
    let mut failures = Vec::new();
    for p in &props {
        let status = if p.failing.is_none() { "PASS" } else { "FAIL" };
        writeln!(out, "{status} {} (worst {:e}, limit {:e})", p.name, p.worst, p.limit)?;
        if let Some(c) = &p.failing {
            failures.push(format!("{}: {c}", p.name));
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(failures.join("; ")))
    }
}

fn cmd_fresnel(a: &FresnelArgs, out: &mut dyn Write) -> CmdResult {
    if !(a.step > 0.0) || !(a.to >= a.from) || !(a.from >= 0.0) || !a.to.is_finite() {
        return Err(Failure::Usage("need 0 ≤ from ≤ to and step > 0".into()));
    }
    writeln!(out, "s,S,C")?;
    let count = ((a.to - a.from) / a.step + 1e-9).floor() as usize;
    for i in 0..=count {
        let s = a.from + i as f64 * a.step;
        writeln!(out, "{s},{:.15e},{:.15e}", phantoms::fresnel_s(s)?, phantoms::fresnel_c(s)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let pairs = parse_config("# c\nm = 20\nruns=1 # inline\nno_timestamp = true\n").unwrap();
        assert_eq!(pairs, vec![("m".into(), "20".into()), ("runs".into(), "1".into()), ("no-timestamp".into(), "true".into())]);
        assert!(parse_config("oops").is_err());
    }

    #[test]
    fn config_goes_after_subcommand_and_check_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "m = 12\ntrials = 3\n").unwrap();
        let args: Vec<OsString> =
            ["deautoconv", "--config", path.to_str().unwrap(), "check", "adjoint", "--m", "8"].iter().map(OsString::from).collect();
        let out = expand_config(args).unwrap();
        let s: Vec<String> = out.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(&s[3..], ["check", "adjoint", "--m", "12", "--trials", "3", "--m", "8"]);
        let cli = Cli::try_parse_from(out).unwrap();
        let Command::Check(c) = cli.command else { panic!() };
        assert_eq!((c.m, c.trials), (8, 3));
    }

    #[test]
    fn usage_errors_exit_two() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run(["deautoconv", "forward"], &mut o, &mut e), EXIT_USAGE);
        assert_eq!(run(["deautoconv", "bogus"], &mut o, &mut e), EXIT_USAGE);
        assert_eq!(run(["deautoconv", "forward", "--in", "/nonexistent.gfn"], &mut o, &mut e), EXIT_USAGE);
        assert_eq!(run(["deautoconv", "--help"], &mut o, &mut e), EXIT_OK);
    }
}
