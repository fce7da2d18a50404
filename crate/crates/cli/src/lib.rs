//! The `qpi` command line: tables, curves, figures, constants and
//! comparisons built on `qpainleve`.
//!
//! Every subcommand writes one primary document (CSV, or JSON for
//! `shoot`) to `--out`, or to stdout when `--out` is absent. Relative output
//! paths resolve against `$QPI_OUT_DIR`, else `--out-dir`, else the working
//! directory. Each file written gets a sibling `<stem>.config.json` holding
//! the run configuration, which also appears as the CSV comment line.

pub mod figure;
pub mod format;

use std::f64::consts::PI;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::{Complex, Complex64};
use qpainleve::coefficients::{compute_coefficients, fit_late_order, CoefficientTable, MIN_RETAINED};
use qpainleve::leading::{
    anchor_of, branch_value, labeled_roots, quartic_residual, singular_points, BranchId, SingularLabel, SingularPoint,
};
use qpainleve::precision::{lift, CReal, Ext, Real};
use qpainleve::singulant::{lambda_constant, singulant, Sign};
use qpainleve::solver::{
    compare_trajectory, iterate, rescaled_residual_in, shoot_initial_conditions, IterationConfig, Target, Trajectory,
};
use qpainleve::stokes::{
    classify_point, evaluate_solution, evaluate_solution_in, optimal_truncation, stokes_structure, AsymptoticApproximation, Family, MapMode,
    TracedCurve, TypeBRegion,
};
use serde::Serialize;

use crate::figure::{emit_figure, Plane, Style};
use crate::format::{format_complex, Cell, Csv, Cx, Span};

/// Overrides `--out-dir` when set.
pub const OUT_DIR_ENV: &str = "QPI_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Published initial data of the `q = 1 + 0.2i` experiment.
pub const PUBLISHED_W0: Complex64 = Complex64::new(0.846885522, 0.798385416);
pub const PUBLISHED_W1: Complex64 = Complex64::new(-0.502881648, -0.650433326);

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<qpainleve::Error> for CliError {
    fn from(e: qpainleve::Error) -> Self {
        use qpainleve::Error as E;
        match e {
            E::Invalid(_)
            | E::TooCloseToSingularity { .. }
            | E::PathCollision { .. }
            | E::CrossesCut(_)
            | E::OnCurve(_)
            | E::OnCut(_)
            | E::CoalescingBranches(_)
            | E::DegenerateTruncation(_)
            | E::InsufficientTerms(_)
            | E::BaseMismatch(..) => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "qpi", version, about = "Exponential asymptotics of the q-difference first Painleve equation")]
pub struct Cli {
    /// Directory for relative output paths; the QPI_OUT_DIR variable takes precedence.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(untagged)]
pub enum Command {
    /// Leading-order branches W_0,j at points or on a grid.
    Branches(BranchesArgs),
    /// Singular points s_0 = (log(256/27) + 2 i k pi)/3.
    Singularities(SingularitiesArgs),
    /// Coefficients W_r about a base point, with an optional late-order fit.
    Coeffs(CoeffsArgs),
    /// Singulant values and derivatives at points or on a grid.
    Singulant(SingulantArgs),
    /// Partial estimates and the extrapolated matching constant Lambda.
    Lambda(LambdaArgs),
    /// Stokes and anti-Stokes curves with cuts, as CSV and SVG.
    StokesMap(StokesMapArgs),
    /// Direct iteration of the discrete equation.
    Iterate(IterateArgs),
    /// Initial data converging to a chosen far-field behaviour.
    Shoot(ShootArgs),
    /// Trajectory against the optimally truncated approximation (real q).
    Compare(CompareArgs),
    /// Optimal truncation and the rescaled residual across epsilon.
    TruncateDemo(TruncateArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Branches(_) => "branches",
            Command::Singularities(_) => "singularities",
            Command::Coeffs(_) => "coeffs",
            Command::Singulant(_) => "singulant",
            Command::Lambda(_) => "lambda",
            Command::StokesMap(_) => "stokes-map",
            Command::Iterate(_) => "iterate",
            Command::Shoot(_) => "shoot",
            Command::Compare(_) => "compare",
            Command::TruncateDemo(_) => "truncate-demo",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    /// Points, comma separated (`a+bi`).
    #[arg(long = "s", value_delimiter = ',', allow_hyphen_values = true, default_value = "2")]
    pub s: Vec<Cx>,
    /// Real range of a grid; replaces `--s`.
    #[arg(long, allow_hyphen_values = true, requires = "im")]
    pub re: Option<Span<f64>>,
    /// Imaginary range of a grid.
    #[arg(long, allow_hyphen_values = true, requires = "re")]
    pub im: Option<Span<f64>>,
    /// Grid points per axis.
    #[arg(long, default_value_t = 11)]
    pub n: usize,
}

impl GridArgs {
    /// The points, and whether they form a grid (where failures become NaN rows).
    fn points(&self) -> CliResult<(Vec<Complex64>, bool)> {
        match (self.re, self.im) {
            (Some(re), Some(im)) => {
                if self.n < 1 {
                    return Err(invalid("grid needs at least one point per axis"));
                }
                let at = |span: Span<f64>, i: usize| {
                    if self.n == 1 { span.0 } else { span.0 + (span.1 - span.0) * i as f64 / (self.n - 1) as f64 }
                };
                let mut out = Vec::with_capacity(self.n * self.n);
                for a in 0..self.n {
                    for b in 0..self.n {
                        out.push(Complex64::new(at(re, b), at(im, a)));
                    }
                }
                Ok((out, true))
            }
            _ => Ok((self.s.iter().map(|c| c.0).collect(), false)),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BranchesArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Only this branch (1..=4).
    #[arg(long)]
    pub branch: Option<u8>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SingularitiesArgs {
    /// Range of the translate index k.
    #[arg(long, allow_hyphen_values = true, default_value = "-1..1")]
    pub k: Span<i64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F64,
    F256,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CoeffsArgs {
    /// Base point of the Taylor tables.
    #[arg(long, allow_hyphen_values = true, default_value = "2")]
    pub base: Cx,
    #[arg(long, default_value_t = 3)]
    pub branch: u8,
    /// Highest index R.
    #[arg(long, default_value_t = 40)]
    pub terms: usize,
    /// Taylor order of W_0; defaults to R + 30.
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
    /// Point at which the W_r are evaluated; defaults to the base.
    #[arg(long, allow_hyphen_values = true)]
    pub at: Option<Cx>,
    /// Also write the full Taylor table as JSON.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Report the late-order fit of the even coefficients on stderr.
    #[arg(long)]
    pub fit: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SignArg {
    Plus,
    Minus,
}

impl From<SignArg> for Sign {
    fn from(s: SignArg) -> Sign {
        match s {
            SignArg::Plus => Sign::Plus,
            SignArg::Minus => Sign::Minus,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SingulantArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 3)]
    pub branch: u8,
    /// Translate index k of the anchor; defaults to the branch's own point (k = 0 for branch 4).
    #[arg(long, allow_hyphen_values = true)]
    pub anchor: Option<i64>,
    #[arg(long, value_enum, default_value_t = SignArg::Plus)]
    pub sign: SignArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LambdaArgs {
    /// Inner coefficients used (at least 200).
    #[arg(long, default_value_t = 1000)]
    pub terms: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MapArg {
    Leading,
    Exact,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StokesMapArgs {
    #[arg(long, value_enum, default_value_t = FamilyArg::A)]
    pub family: FamilyArg,
    /// Type A branch (1..=3).
    #[arg(long, default_value_t = 3)]
    pub branch: u8,
    /// Arclength budget per curve; also the cut length.
    #[arg(long, default_value_t = 6.0)]
    pub max_arc: f64,
    /// Plane drawn in the figure.
    #[arg(long, value_enum, default_value_t = Plane::S)]
    pub plane: Plane,
    /// Map to x = e^s (leading) or x = (1+eps)^(s/eps), eps = q - 1 (exact).
    #[arg(long, value_enum, default_value_t = MapArg::Leading)]
    pub map: MapArg,
    #[arg(long, allow_hyphen_values = true, default_value = "1+0.2i")]
    pub q: Cx,
    /// SVG figure path.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// JSON style for the figure; missing fields take defaults.
    #[arg(long)]
    pub style: Option<PathBuf>,
    /// Region classification grid (points per axis) written to `--regions-out`.
    #[arg(long, requires = "regions_out")]
    pub regions: Option<usize>,
    #[arg(long)]
    pub regions_out: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true, default_value = "0.5..6")]
    pub regions_re: Span<f64>,
    #[arg(long, allow_hyphen_values = true, default_value = "-3..3")]
    pub regions_im: Span<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IterateArgs {
    #[arg(long, allow_hyphen_values = true, default_value = "1+0.2i")]
    pub q: Cx,
    #[arg(long, allow_hyphen_values = true, default_value = "1")]
    pub x0: Cx,
    #[arg(long, allow_hyphen_values = true, default_value = "0.846885522+0.798385416i")]
    pub w0: Cx,
    #[arg(long, allow_hyphen_values = true, default_value = "-0.502881648-0.650433326i")]
    pub w1: Cx,
    /// Last index n_max.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetArg(pub Target);

impl std::str::FromStr for TargetArg {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, String> {
        let omega = Complex64::new(-0.5, 0.75f64.sqrt());
        Ok(TargetArg(match text {
            "vanishing" => Target::Vanishing,
            "omega" => Target::Nonzero(omega),
            "omega-bar" => Target::Nonzero(omega.conj()),
            other => {
                let z = format::parse_complex(other)
                    .map_err(|_| format!("target must be omega, omega-bar, vanishing or a+bi, got {other:?}"))?;
                if z == Complex64::new(0.0, 0.0) {
                    return Err("a nonzero target cannot be 0; use vanishing".into());
                }
                Target::Nonzero(z)
            }
        }))
    }
}

impl Serialize for TargetArg {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Target::Vanishing => s.serialize_str("vanishing"),
            Target::Nonzero(z) => s.serialize_str(&format_complex(z)),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ShootArgs {
    /// omega, omega-bar, vanishing, or a nonzero a+bi.
    #[arg(long, allow_hyphen_values = true, default_value = "omega")]
    pub target: TargetArg,
    #[arg(long, allow_hyphen_values = true, default_value = "1+0.2i")]
    pub q: Cx,
    #[arg(long, allow_hyphen_values = true, default_value = "1")]
    pub x0: Cx,
    /// Check index; large enough by default that the published pair already meets omega.
    #[arg(long, default_value_t = 600)]
    pub n_check: usize,
    #[arg(long, allow_hyphen_values = true, default_value = "0.846885522+0.798385416i")]
    pub seed_w0: Cx,
    #[arg(long, allow_hyphen_values = true, default_value = "-0.502881648-0.650433326i")]
    pub seed_w1: Cx,
    /// Also write the shot trajectory, up to `--n`, as CSV.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Trajectory length; defaults to n_check + 40.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CompareMode {
    /// Seed from the approximation, then shoot for the branch limit.
    Shoot,
    /// Iterate directly from the approximation's values.
    Seed,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareArgs {
    /// Real q = 1 + eps with eps in (0, 0.2].
    #[arg(long, allow_hyphen_values = true, default_value = "1.05")]
    pub q: Cx,
    /// Type A branch (1..=3).
    #[arg(long, default_value_t = 3)]
    pub branch: u8,
    /// s-window of the comparison.
    #[arg(long, allow_hyphen_values = true, default_value = "1.5..3")]
    pub window: Span<f64>,
    /// Base of the coefficient table; defaults to the window midpoint.
    #[arg(long, allow_hyphen_values = true)]
    pub base: Option<Cx>,
    #[arg(long, value_enum, default_value_t = CompareMode::Shoot)]
    pub mode: CompareMode,
    /// Explicit initial data at the window start (both required); overrides `--mode`.
    #[arg(long, allow_hyphen_values = true, requires = "w1")]
    pub w0: Option<Cx>,
    #[arg(long, allow_hyphen_values = true, requires = "w0")]
    pub w1: Option<Cx>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TruncateArgs {
    #[arg(long, allow_hyphen_values = true, default_value = "2")]
    pub s: Cx,
    /// Type A branch (1..=3).
    #[arg(long, default_value_t = 3)]
    pub branch: u8,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025")]
    pub eps: Vec<f64>,
    /// Highest coefficient index; defaults to what the smallest eps needs.
    #[arg(long)]
    pub terms: Option<usize>,
    /// Taylor order; defaults to R + 30.
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long, value_enum, default_value_t = Precision::F256)]
    pub precision: Precision,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Where documents go.
struct Sink {
    dir: Option<PathBuf>,
    config: serde_json::Value,
}

impl Sink {
    fn config_line(&self) -> String {
        format!("config {}", serde_json::to_string(&self.config).expect("config serializes"))
    }

    fn resolve(&self, path: &Path) -> CliResult<PathBuf> {
        let full = match &self.dir {
            Some(d) => d.join(path),
            None => path.to_path_buf(),
        };
        let parent = full.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        if !parent.is_dir() {
            return Err(invalid(format!("output directory {} does not exist", parent.display())));
        }
        Ok(full)
    }

    /// Write `text` to `path`, or to stdout when `path` is `None`.
    fn emit(&self, path: Option<&PathBuf>, text: &str) -> CliResult<()> {
        let Some(path) = path else {
            print!("{text}");
            return Ok(());
        };
        let full = self.resolve(path)?;
        std::fs::write(&full, text).map_err(|e| invalid(format!("cannot write {}: {e}", full.display())))?;
        let stem = full.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let cfg = full.with_file_name(format!("{stem}.config.json"));
        let pretty = serde_json::to_string_pretty(&self.config).expect("config serializes") + "\n";
        std::fs::write(&cfg, pretty).map_err(|e| invalid(format!("cannot write {}: {e}", cfg.display())))?;
        Ok(())
    }
}

fn branch(j: u8) -> CliResult<BranchId> {
    Ok(BranchId::new(j)?)
}

fn type_a_branch(j: u8) -> CliResult<BranchId> {
    let b = branch(j)?;
    if b.j() == 4 {
        return Err(invalid("this command needs a Type A branch (1..=3)"));
    }
    Ok(b)
}

fn c(z: Complex64) -> [Cell; 2] {
    [Cell::F(z.re), Cell::F(z.im)]
}

fn nan_c() -> [Cell; 2] {
    [Cell::F(f64::NAN), Cell::F(f64::NAN)]
}

fn row<const N: usize>(parts: impl IntoIterator<Item = [Cell; N]>) -> Vec<Cell> {
    parts.into_iter().flatten().collect()
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("qpi {}: {e}", cli.command.name());
            e.code()
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let dir = match std::env::var_os(OUT_DIR_ENV) {
        Some(d) if !d.is_empty() => Some(PathBuf::from(d)),
        _ => cli.out_dir.clone(),
    };
    if let Some(d) = &dir {
        if !d.is_dir() {
            return Err(invalid(format!("output directory {} does not exist", d.display())));
        }
    }
    let config = serde_json::json!({ "command": cli.command.name(), "params": &cli.command });
    let sink = Sink { dir, config };
    match &cli.command {
        Command::Branches(a) => cmd_branches(a, &sink),
        Command::Singularities(a) => cmd_singularities(a, &sink),
        Command::Coeffs(a) => cmd_coeffs(a, &sink),
        Command::Singulant(a) => cmd_singulant(a, &sink),
        Command::Lambda(a) => cmd_lambda(a, &sink),
        Command::StokesMap(a) => cmd_stokes_map(a, &sink),
        Command::Iterate(a) => cmd_iterate(a, &sink),
        Command::Shoot(a) => cmd_shoot(a, &sink),
        Command::Compare(a) => cmd_compare(a, &sink),
        Command::TruncateDemo(a) => cmd_truncate(a, &sink),
    }
}

fn cmd_branches(a: &BranchesArgs, sink: &Sink) -> CliResult<()> {
    let only = a.branch.map(branch).transpose()?;
    let (points, grid) = a.grid.points()?;
    let mut csv = Csv::new(&sink.config_line(), &["s_re", "s_im", "branch", "w_re", "w_im", "residual"]);
    for s in points {
        let roots = match labeled_roots(s) {
            Ok(r) => Some(r),
            Err(_) if grid => None,
            Err(e) => return Err(e.into()),
        };
        for j in BranchId::all() {
            if only.is_some_and(|o| o != j) {
                continue;
            }
            let (w, res) = match roots {
                Some(r) => (c(r[j.index()]), Cell::F(quartic_residual(r[j.index()], s).norm())),
                None => (nan_c(), Cell::F(f64::NAN)),
            };
            csv.row(row([c(s)]).into_iter().chain([Cell::from(j.j() as i64)]).chain(w).chain([res]).collect());
        }
    }
    sink.emit(a.out.as_ref(), &csv.finish())
}

fn label_name(l: SingularLabel) -> &'static str {
    match l {
        SingularLabel::S01 => "s01",
        SingularLabel::S02 => "s02",
        SingularLabel::S03 => "s03",
    }
}

fn cmd_singularities(a: &SingularitiesArgs, sink: &Sink) -> CliResult<()> {
    let mut csv = Csv::new(&sink.config_line(), &["k", "label", "s_re", "s_im", "type_a_branch"]);
    for p in singular_points(a.k.0, a.k.1)? {
        let mut cells = vec![Cell::from(p.k), Cell::from(label_name(p.label()))];
        cells.extend(c(p.location));
        cells.push(Cell::from(p.type_a_branch().j() as i64));
        csv.row(cells);
    }
    sink.emit(a.out.as_ref(), &csv.finish())
}

fn coeff_rows<T: Real>(table: &CoefficientTable<T>, at: Complex64, csv: &mut Csv) {
    for (r, w) in table.values_c64(at).into_iter().enumerate() {
        csv.row(row([[Cell::from(r), Cell::Empty]]).into_iter().take(1).chain(c(w)).collect());
    }
}

fn report_fit<T: Real>(table: &CoefficientTable<T>, at: Complex64) -> CliResult<()> {
    let fit = fit_late_order(table, at)?;
    eprintln!(
        "late-order fit at {}: chi = {}, gamma = {:.6}, prefactor = {}",
        format_complex(at),
        format_complex(fit.chi_estimate),
        fit.gamma_estimate,
        format_complex(fit.prefactor_estimate)
    );
    Ok(())
}

fn cmd_coeffs(a: &CoeffsArgs, sink: &Sink) -> CliResult<()> {
    let j = branch(a.branch)?;
    let order = a.order.unwrap_or(a.terms + 30);
    if order < a.terms + MIN_RETAINED {
        return Err(invalid(format!("order must be at least terms + {MIN_RETAINED}")));
    }
    let at = a.at.map_or(a.base.0, |z| z.0);
    let mut csv = Csv::new(&sink.config_line(), &["r", "w_re", "w_im"]);
    match a.precision {
        Precision::F64 => {
            let table = compute_coefficients::<f64>(a.base.0, j, a.terms, order)?;
            coeff_rows(&table, at, &mut csv);
            if a.fit {
                report_fit(&table, at)?;
            }
            if let Some(p) = &a.table {
                sink.emit(Some(p), &(table.to_json() + "\n"))?;
            }
        }
        Precision::F256 => {
            let table = compute_coefficients::<Ext>(a.base.0, j, a.terms, order)?;
            coeff_rows(&table, at, &mut csv);
            if a.fit {
                report_fit(&table, at)?;
            }
            if let Some(p) = &a.table {
                sink.emit(Some(p), &(table.to_json() + "\n"))?;
            }
        }
    }
    sink.emit(a.out.as_ref(), &csv.finish())
}

fn default_anchor(j: BranchId, k: Option<i64>) -> CliResult<SingularPoint> {
    let p = match k {
        Some(k) => SingularPoint::new(k),
        None if j.j() == 4 => SingularPoint::new(0),
        None => anchor_of(j)?,
    };
    if !p.is_singular_for(j) {
        return Err(invalid(format!("branch {} is regular at k = {}", j.j(), p.k)));
    }
    Ok(p)
}

fn cmd_singulant(a: &SingulantArgs, sink: &Sink) -> CliResult<()> {
    let j = branch(a.branch)?;
    let anchor = default_anchor(j, a.anchor)?;
    let (points, grid) = a.grid.points()?;
    let mut csv = Csv::new(&sink.config_line(), &["s_re", "s_im", "chi_re", "chi_im", "dchi_re", "dchi_im"]);
    let mut failures = 0;
    for s in points {
        match singulant(s, anchor, j, a.sign.into()) {
            Ok(v) => csv.row(row([c(s), c(v.value), c(v.derivative)])),
            Err(_) if grid => {
                failures += 1;
                csv.row(row([c(s), nan_c(), nan_c()]));
            }
            Err(e) => return Err(e.into()),
        }
    }
    if failures > 0 {
        eprintln!("{failures} grid points lie on cuts or at singular points; written as nan");
    }
    sink.emit(a.out.as_ref(), &csv.finish())
}

fn cmd_lambda(a: &LambdaArgs, sink: &Sink) -> CliResult<()> {
    let est = lambda_constant(a.terms)?;
    let mut csv = Csv::new(&sink.config_line(), &["r", "kind", "lambda_re", "lambda_im"]);
    for (i, p) in est.partials.iter().enumerate() {
        csv.row(row([[Cell::from(i + 1), Cell::from("partial")]]).into_iter().chain(c(*p)).collect());
    }
    csv.row(row([[Cell::from(a.terms), Cell::from("extrapolated")]]).into_iter().chain(c(est.limit)).collect());
    eprintln!("Lambda = {} (extrapolation change {:.3e})", format_complex(est.limit), est.spread);
    sink.emit(a.out.as_ref(), &csv.finish())
}

fn family_of(f: FamilyArg, j: u8) -> CliResult<Family> {
    Ok(match f {
        FamilyArg::A => Family::TypeA(type_a_branch(j)?),
        FamilyArg::B => Family::TypeB,
    })
}

fn region_name(r: Option<TypeBRegion>) -> &'static str {
    match r {
        None => "",
        Some(TypeBRegion::I) => "I",
        Some(TypeBRegion::II) => "II",
        Some(TypeBRegion::III) => "III",
        Some(TypeBRegion::IV) => "IV",
        Some(TypeBRegion::Other) => "other",
    }
}

/// Traced curves of every anchor of `family`, mapped with `mode`.
pub fn family_curves(family: Family, max_arc: f64, mode: MapMode) -> CliResult<Vec<TracedCurve>> {
    let j = family.branch();
    let mut curves = Vec::new();
    for anchor in family.anchors()? {
        for mut curve in stokes_structure(anchor, j, max_arc)? {
            curve.remap(mode);
            curves.push(curve);
        }
    }
    Ok(curves)
}

fn cmd_stokes_map(a: &StokesMapArgs, sink: &Sink) -> CliResult<()> {
    if !(a.max_arc > 0.0 && a.max_arc.is_finite()) {
        return Err(invalid("max-arc must be positive"));
    }
    let family = family_of(a.family, a.branch)?;
    let mode = match a.map {
        MapArg::Leading => MapMode::Leading,
        MapArg::Exact => {
            let eps = a.q.0 - 1.0;
            if eps.norm() == 0.0 {
                return Err(invalid("exact map needs q != 1"));
            }
            MapMode::Exact(eps)
        }
    };
    let style: Style = match &a.style {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| invalid(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| invalid(format!("bad style {}: {e}", p.display())))?
        }
        None => Style::default(),
    };
    let curves = family_curves(family, a.max_arc, mode)?;
    let mut csv = Csv::new(&sink.config_line(), &["kind", "anchor", "s_re", "s_im", "x_re", "x_im", "curve"]);
    for (i, curve) in curves.iter().enumerate() {
        for (s, x) in curve.s_points.iter().zip(&curve.x_points) {
            let mut cells = vec![Cell::from(curve.kind.name()), Cell::from(curve.anchor_k)];
            cells.extend(c(*s));
            cells.extend(c(*x));
            cells.push(Cell::from(i));
            csv.row(cells);
        }
    }
    if let Some(svg_path) = &a.svg {
        let markers: Vec<Complex64> = family
            .anchors()?
            .iter()
            .map(|p| match a.plane {
                Plane::S => p.location,
                Plane::X => qpainleve::stokes::map_to_x(p.location, mode),
            })
            .collect();
        let svg = emit_figure(&curves, &markers, a.plane, &style).map_err(invalid)?;
        sink.emit(Some(svg_path), &svg)?;
    }
    if let Some(n) = a.regions {
        let grid = GridArgs { s: Vec::new(), re: Some(a.regions_re), im: Some(a.regions_im), n };
        let (points, _) = grid.points()?;
        let anchors = family.anchors()?.len();
        let mut cols = vec!["s_re".to_string(), "s_im".into(), "region".into()];
        for i in 1..=anchors {
            cols.push(format!("re_sign_{i}"));
            cols.push(format!("im_sign_{i}"));
        }
        let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
        let mut rcsv = Csv::new(&sink.config_line(), &col_refs);
        for s in points {
            let mut cells: Vec<Cell> = c(s).into();
            match classify_point(s, family) {
                Ok(d) => {
                    cells.push(Cell::from(region_name(d.type_b_region)));
                    for p in d.signs {
                        cells.push(Cell::from(if p.re_positive { 1i64 } else { -1 }));
                        cells.push(Cell::from(if p.im_positive { 1i64 } else { -1 }));
                    }
                }
                Err(_) => {
                    cells.push(Cell::from("ambiguous"));
                    cells.extend((0..2 * anchors).map(|_| Cell::from(0i64)));
                }
            }
            rcsv.row(cells);
        }
        sink.emit(a.regions_out.as_ref(), &rcsv.finish())?;
    }
    sink.emit(a.out.as_ref(), &csv.finish())
}

fn trajectory_csv(t: &Trajectory, config_line: &str) -> String {
    let res = t.residuals();
    let mut csv = Csv::new(config_line, &["n", "x_re", "x_im", "w_re", "w_im", "residual"]);
    for (n, w) in t.values.iter().enumerate() {
        let r = if n >= 1 && n <= res.len() { Cell::F(res[n - 1]) } else { Cell::Empty };
        let mut cells = vec![Cell::from(n)];
        cells.extend(c(t.config.x(n)));
        cells.extend(c(*w));
        cells.push(r);
        csv.row(cells);
    }
    csv.finish()
}

fn cmd_iterate(a: &IterateArgs, sink: &Sink) -> CliResult<()> {
    let cfg = IterationConfig { q: a.q.0, x0: a.x0.0, w0: a.w0.0, w1: a.w1.0, n_max: a.n };
    let t = iterate(&cfg)?;
    if let Some(b) = t.blowup_index {
        eprintln!("iteration left [1e-12, 1e12] at n = {b}");
    }
    eprintln!("w_{} = {}", t.values.len() - 1, format_complex(*t.values.last().expect("two values")));
    sink.emit(a.out.as_ref(), &trajectory_csv(&t, &sink.config_line()))
}

#[derive(Serialize)]
struct ShootReport {
    config: serde_json::Value,
    w0: String,
    w1: String,
    objective: f64,
    newton_steps: usize,
    used_simplex: bool,
}

fn cmd_shoot(a: &ShootArgs, sink: &Sink) -> CliResult<()> {
    let r = shoot_initial_conditions(a.target.0, a.q.0, a.x0.0, a.n_check, (a.seed_w0.0, a.seed_w1.0))?;
    let report = ShootReport {
        config: sink.config.clone(),
        w0: format_complex(r.w0),
        w1: format_complex(r.w1),
        objective: r.objective,
        newton_steps: r.newton_steps,
        used_simplex: r.used_simplex,
    };
    if let Some(p) = &a.trajectory {
        let n = a.n.unwrap_or(a.n_check + 40);
        let t = iterate(&IterationConfig { q: a.q.0, x0: a.x0.0, w0: r.w0, w1: r.w1, n_max: n })?;
        sink.emit(Some(p), &trajectory_csv(&t, &sink.config_line()))?;
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    sink.emit(a.out.as_ref(), &text)
}

/// Smallest table that optimally truncates at every point of `points`.
fn terms_needed(points: &[Complex64], family: Family, eps: f64) -> CliResult<usize> {
    let j = family.branch();
    let mut need = 0;
    for s in points {
        let mut closest = f64::INFINITY;
        for anchor in family.anchors()? {
            closest = closest.min(singulant(*s, anchor, j, Sign::Plus)?.value.norm());
        }
        need = need.max(optimal_truncation(Complex64::new(closest, 0.0), eps)?.terms());
    }
    Ok(need)
}

/// Everything a comparison run produces.
#[derive(Debug, Clone)]
pub struct CompareRun {
    pub table: qpainleve::solver::ErrorTable,
    pub trajectory: Trajectory,
}

/// Iterate from the window start and compare with the branch `j` approximation.
pub fn compare_run(a: &CompareArgs) -> CliResult<CompareRun> {
    let j = type_a_branch(a.branch)?;
    let eps_c = a.q.0 - 1.0;
    if eps_c.im != 0.0 || !(eps_c.re > 0.0 && eps_c.re <= 0.2) {
        return Err(invalid("compare needs real q = 1 + eps with eps in (0, 0.2]"));
    }
    let eps = eps_c.re;
    let (lo, hi) = (a.window.0, a.window.1);
    let n_start = (lo / eps).floor() as usize;
    let s_start = eps * n_start as f64;
    let n_end = (hi / eps).ceil() as usize;
    let base = a.base.map_or(Complex64::new(0.5 * (lo + hi), 0.0), |b| b.0);
    let approx = AsymptoticApproximation::new(Family::TypeA(j), eps)?;
    let edge: Vec<Complex64> = [s_start, eps * n_end as f64].iter().map(|s| Complex64::new(*s, 0.0)).collect();
    let r_max = terms_needed(&edge, approx.family, eps)?.max(2 * MIN_RETAINED);
    let table = compute_coefficients::<f64>(base, j, r_max, r_max + 30)?;
    let at = |s: f64| -> CliResult<Complex64> {
        Ok(evaluate_solution(Complex64::new(s, 0.0), &approx, &table)?.value)
    };
    let x0 = Complex64::new((s_start / eps * eps.ln_1p()).exp(), 0.0);
    let (w0, w1) = match (a.w0, a.w1) {
        (Some(w0), Some(w1)) => (w0.0, w1.0),
        _ => {
            let seed = (at(s_start)?, at(s_start + eps)?);
            match a.mode {
                CompareMode::Seed => seed,
                CompareMode::Shoot => {
                    // Far enough out that the branch has settled to its limit.
                    let s_check = (hi + 3.0).max(10.0);
                    let n_check = ((s_check - s_start) / eps).round() as usize;
                    let target = branch_value(Complex64::new(s_start + eps * n_check as f64, 0.0), j)?;
                    let r = shoot_initial_conditions(Target::Nonzero(target), a.q.0, x0, n_check, seed)?;
                    (r.w0, r.w1)
                }
            }
        }
    };
    let trajectory = iterate(&IterationConfig { q: a.q.0, x0, w0, w1, n_max: n_end - n_start + 1 })?;
    let table = compare_trajectory(&trajectory, &approx, &table, (lo, hi))?;
    Ok(CompareRun { table, trajectory })
}

fn cmd_compare(a: &CompareArgs, sink: &Sink) -> CliResult<()> {
    let run = compare_run(a)?;
    let mut csv = Csv::new(&sink.config_line(), &["n", "s", "w_re", "w_im", "approx_re", "approx_im", "error"]);
    for r in &run.table.rows {
        let mut cells = vec![Cell::from(r.n), Cell::F(r.s)];
        cells.extend(c(r.w));
        cells.extend(c(r.approx));
        cells.push(Cell::F(r.error));
        csv.row(cells);
    }
    eprintln!("max |w_n - W(s_n)| over the window: {:.6e}", run.table.max_error);
    sink.emit(a.out.as_ref(), &csv.finish())
}

/// One line of the truncation demo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationRow {
    pub eps: f64,
    pub n_opt: usize,
    pub kappa: f64,
    pub terms: usize,
    pub residual: f64,
    pub exponential: Complex64,
}

fn truncation_rows<T: Real>(s: Complex64, j: BranchId, eps: &[f64], r_max: usize, order: usize) -> CliResult<Vec<TruncationRow>> {
    let table = compute_coefficients::<T>(s, j, r_max, order)?;
    let mut out = Vec::new();
    for &e in eps {
        let approx = AsymptoticApproximation::new(Family::TypeA(j), e)?;
        let at = |z: Complex<T>| evaluate_solution_in(z, &approx, &table);
        let (s_t, e_t) = (lift::<T>(s), Complex::new(T::from_f64(e), T::zero()));
        let (lo, mid, hi) = (at(s_t - e_t)?, at(s_t)?, at(s_t + e_t)?);
        let w: [Complex<T>; 3] = [lo.value, mid.value, hi.value];
        let res = rescaled_residual_in::<T>(w, s, e, Complex64::new(1.0, 0.0))?.to_c64().norm();
        let trunc = optimal_truncation(singulant(s, anchor_of(j)?, j, Sign::Plus)?.value, e)?;
        out.push(TruncationRow { eps: e, n_opt: trunc.n_opt, kappa: trunc.kappa, terms: mid.terms, residual: res, exponential: mid.exponential });
    }
    Ok(out)
}

/// Residuals of the optimally truncated approximation at `s` for each `eps`.
pub fn truncation_demo(a: &TruncateArgs) -> CliResult<Vec<TruncationRow>> {
    let j = type_a_branch(a.branch)?;
    if a.eps.is_empty() {
        return Err(invalid("need at least one eps"));
    }
    for &e in &a.eps {
        if !(e > 0.0 && e < 0.5) {
            return Err(invalid(format!("eps {e} outside (0, 0.5)")));
        }
    }
    let s = a.s.0;
    let family = Family::TypeA(j);
    let r_max = match a.terms {
        Some(r) => r,
        None => {
            let mut need = 0;
            for &e in &a.eps {
                need = need.max(terms_needed(&[s - e, s, s + e], family, e)?);
            }
            need.max(2 * MIN_RETAINED)
        }
    };
    let order = a.order.unwrap_or(r_max + 30);
    match a.precision {
        Precision::F64 => truncation_rows::<f64>(s, j, &a.eps, r_max, order),
        Precision::F256 => truncation_rows::<Ext>(s, j, &a.eps, r_max, order),
    }
}

/// Least-squares slope of `ln|residual|` against `-1/eps`.
pub fn residual_slope(rows: &[TruncationRow]) -> Option<f64> {
    if rows.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (-1.0 / r.eps, r.residual.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn cmd_truncate(a: &TruncateArgs, sink: &Sink) -> CliResult<()> {
    let rows = truncation_demo(a)?;
    let mut csv = Csv::new(
        &sink.config_line(),
        &["eps", "n_opt", "kappa", "terms", "residual", "ln_residual", "exp_re", "exp_im"],
    );
    for r in &rows {
        let mut cells = vec![Cell::F(r.eps), Cell::from(r.n_opt), Cell::F(r.kappa), Cell::from(r.terms), Cell::F(r.residual), Cell::F(r.residual.ln())];
        cells.extend(c(r.exponential));
        csv.row(cells);
    }
    if let Some(slope) = residual_slope(&rows) {
        let j = type_a_branch(a.branch)?;
        let chi = singulant(a.s.0, anchor_of(j)?, j, Sign::Plus)?.value;
        eprintln!(
            "slope of ln|residual| against -1/eps: {slope:.6} (Re chi = {:.6}, |chi| = {:.6}, arg chi = {:.6} pi)",
            chi.re,
            chi.norm(),
            chi.arg() / PI
        );
    }
    sink.emit(a.out.as_ref(), &csv.finish())
}
