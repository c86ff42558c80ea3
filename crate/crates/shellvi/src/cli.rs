//! Command-line interface: config-driven experiment subcommands with CSV
//! reports, plus standalone VI solves over a plain-text system format with
//! JSON certificates.
//!
//! Exit codes: 0 on success, 2 when a geometric hypothesis fails, 1 on any
//! other error. Reports are written atomically (temp file + rename) and
//! identical configs produce byte-identical CSV output.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::experiments::{self, ExperimentError};
use crate::fem::{
    assemble_3d_system, assemble_limit_system, AssembledSystem, Mesh2D, Mesh3D,
};
use crate::geometry::HalfSpace;
use crate::solver::{solve_vi_detailed, ConstraintRow, ConstraintSet, QuadraticProgram};
use crate::sparse::{SparseSym, TripletSym};

#[derive(Parser)]
#[command(
    name = "shellvi",
    about = "Obstacle problems for linearly elastic shells confined to a half-space",
    long_about = "Assembles and solves the scaled 3D variational inequality, the 2D \
membrane limit, and Koiter's constrained model over built-in midsurface charts \
(plate, sphere_cap: (cos y1 sin y2, sin y1 sin y2, cos y2) with y2 in (0, π); \
cylinder: (cos y1, y2, sin y1) with the y1 span below 2π; hyperboloid: \
(sqrt(1+y2²) cos y1, sqrt(1+y2²) sin y1, y2) with the y1 span below 2π), and runs \
the thickness-sweep, Korn, face-equivalence, and density experiments."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump midsurface frame data on a grid as CSV.
    Geometry(CommonArgs),
    /// Residuals and slopes of the thin-shell expansions around ε = 0.
    ExpansionCheck(CommonArgs),
    /// Solve the 2D membrane limit VI; emits a JSON certificate.
    Solve2d(SolveArgs),
    /// Solve the scaled 3D VI at the first configured ε; emits JSON.
    Solve3d(SolveArgs),
    /// Thickness sweep: 3D solves, transverse averages, limit gaps.
    Sweep(CommonArgs),
    /// Sweep with the Koiter comparison columns.
    Koiter(CommonArgs),
    /// Korn-constant scaling probe (smallest generalized eigenvalue per ε).
    Korn(CommonArgs),
    /// Kirchhoff-Love face-equivalence and transverse-average checks.
    Signorini(CommonArgs),
    /// Density-operator pipeline (truncate, cutoff, mollify) per k.
    Density(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Flat key-value config file.
    #[arg(long)]
    config: PathBuf,
    /// Output path (CSV); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SolveArgs {
    /// Flat key-value config file (used to assemble unless --system given).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Read the quadratic program from a sparse-triplet system file
    /// instead of assembling from the config.
    #[arg(long)]
    system: Option<PathBuf>,
    /// Write the assembled system in the sparse-triplet format.
    #[arg(long)]
    dump_system: Option<PathBuf>,
    /// Output path for the JSON certificate; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Deterministic float formatting used in all reports.
fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

fn emit(out: &Option<PathBuf>, contents: &str) -> std::io::Result<()> {
    match out {
        Some(path) => write_atomic(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

#[derive(Debug)]
enum CliError {
    Experiment(ExperimentError),
    Io(std::io::Error),
    Format(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Experiment(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
            CliError::Format(e) => write!(f, "{e}"),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        CliError::Experiment(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<crate::config::ConfigError> for CliError {
    fn from(e: crate::config::ConfigError) -> Self {
        CliError::Experiment(ExperimentError::Config(e))
    }
}

impl From<crate::fem::FemError> for CliError {
    fn from(e: crate::fem::FemError) -> Self {
        CliError::Experiment(ExperimentError::Fem(e))
    }
}

impl From<crate::solver::SolveError> for CliError {
    fn from(e: crate::solver::SolveError) -> Self {
        CliError::Experiment(ExperimentError::Solve(e))
    }
}

impl From<crate::shell::ShellError> for CliError {
    fn from(e: crate::shell::ShellError) -> Self {
        CliError::Experiment(ExperimentError::Shell(e))
    }
}

impl From<crate::geometry::GeometryError> for CliError {
    fn from(e: crate::geometry::GeometryError) -> Self {
        CliError::Experiment(ExperimentError::Geometry(e))
    }
}

fn exit_code(err: &CliError) -> i32 {
    match err {
        CliError::Experiment(ExperimentError::HypothesisFailed { .. }) => 2,
        _ => 1,
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through this path with status 0
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Geometry(args) => geometry_csv(&args),
        Command::ExpansionCheck(args) => expansion_csv(&args),
        Command::Solve2d(args) => solve_cmd(&args, false),
        Command::Solve3d(args) => solve_cmd(&args, true),
        Command::Sweep(args) => sweep_csv(&args, false),
        Command::Koiter(args) => sweep_csv(&args, true),
        Command::Korn(args) => korn_csv(&args),
        Command::Signorini(args) => signorini_csv(&args),
        Command::Density(args) => density_csv(&args),
    }
}

fn geometry_csv(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = ExperimentConfig::from_file(&args.config)?;
    let chart = cfg.build_chart()?;
    let hs = cfg.half_space()?;
    let q = hs.direction();
    let dom = chart.domain();
    let mut out = String::from("y1,y2,a11,a12,a22,b11,b12,b22,sqrt_a,a3_dot_q\n");
    for j in 0..=cfg.ny {
        for i in 0..=cfg.nx {
            let y = dom.grid_point(cfg.nx, cfg.ny, i, j);
            let f = chart.eval_frame(y)?;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                fmt(y[0]),
                fmt(y[1]),
                fmt(f.metric_cov[(0, 0)]),
                fmt(f.metric_cov[(0, 1)]),
                fmt(f.metric_cov[(1, 1)]),
                fmt(f.curv_cov[(0, 0)]),
                fmt(f.curv_cov[(0, 1)]),
                fmt(f.curv_cov[(1, 1)]),
                fmt(f.area.sqrt()),
                fmt(f.normal().dot(&q)),
            ));
        }
    }
    emit(&args.out, &out)?;
    Ok(())
}

fn expansion_csv(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = ExperimentConfig::from_file(&args.config)?;
    let chart = cfg.build_chart()?;
    let lame = cfg.lame()?;
    let grid = (cfg.nx.min(16), cfg.ny.min(16), cfg.nz.min(4));
    let rows = crate::shell::expansion_residuals(&chart, lame, &cfg.eps, grid)
        .map_err(ExperimentError::Shell)?;
    let mut out = String::from("quantity,eps,residual,fitted_slope\n");
    for row in rows {
        let slope = row
            .fitted_slope
            .map(fmt)
            .unwrap_or_else(|| "exact".to_string());
        for (eps, res) in row.residuals {
            out.push_str(&format!("{},{},{},{slope}\n", row.quantity, fmt(eps), fmt(res)));
        }
    }
    emit(&args.out, &out)?;
    Ok(())
}

#[derive(Serialize)]
struct Certificate {
    certified: bool,
    kkt_residual: f64,
    active: usize,
    iterations: usize,
    energy: f64,
    solution: Vec<f64>,
}

fn solve_cmd(args: &SolveArgs, three_d: bool) -> Result<(), CliError> {
    let (qp, solver_cfg) = if let Some(system_path) = &args.system {
        let text = std::fs::read_to_string(system_path)?;
        (parse_system(&text).map_err(CliError::Format)?, Default::default())
    } else {
        let config_path = args.config.as_ref().ok_or_else(|| {
            CliError::Format("either --system or --config is required".to_string())
        })?;
        let cfg = ExperimentConfig::from_file(config_path)?;
        let chart = cfg.build_chart()?;
        let hs = cfg.half_space()?;
        let lame = cfg.lame()?;
        let mesh2 = Mesh2D::build(chart.domain(), cfg.nx, cfg.ny, chart.clamped_edges())?;
        let sys: AssembledSystem = if three_d {
            let mesh3 = Mesh3D::build(mesh2, cfg.nz)?;
            assemble_3d_system(&mesh3, &chart, lame, cfg.eps[0], &cfg.force_field(), &hs)?
        } else {
            assemble_limit_system(&mesh2, &chart, lame, &cfg.force_field(), &hs)?
        };
        (sys.qp(), cfg.solver_config())
    };
    if let Some(dump) = &args.dump_system {
        write_atomic(dump, &format_system(&qp))?;
    }
    let sol = solve_vi_detailed(&qp, &solver_cfg)?;
    let cert = Certificate {
        certified: sol.certified,
        kkt_residual: sol.kkt_residual,
        active: sol.active.len(),
        iterations: sol.iterations,
        energy: sol.energy,
        solution: sol.x,
    };
    let json = serde_json::to_string_pretty(&cert).expect("certificate serialization");
    emit(&args.out, &format!("{json}\n"))?;
    if !cert.certified {
        return Err(CliError::Experiment(ExperimentError::Solve(
            crate::solver::SolveError::MaxIterations(cert.kkt_residual),
        )));
    }
    Ok(())
}

fn sweep_csv(args: &CommonArgs, with_koiter: bool) -> Result<(), CliError> {
    let cfg = ExperimentConfig::from_file(&args.config)?;
    let report = if with_koiter {
        experiments::run_koiter_compare(&cfg)?
    } else {
        experiments::run_sweep(&cfg)?
    };
    let mut out = String::from(
        "eps,gap_m,energy_3d,koiter_gap_limit,koiter_gap_avg,active_3d,active_koiter,iterations_3d,iterations_koiter,certified\n",
    );
    let mut all_certified = true;
    for r in &report.rows {
        all_certified &= r.certified;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            fmt(r.eps),
            fmt(r.gap_m),
            fmt(r.energy_3d),
            r.koiter_gap_limit.map(fmt).unwrap_or_default(),
            r.koiter_gap_avg.map(fmt).unwrap_or_default(),
            r.active_3d,
            r.active_koiter.map(|v| v.to_string()).unwrap_or_default(),
            r.iterations_3d,
            r.iterations_koiter.map(|v| v.to_string()).unwrap_or_default(),
            r.certified,
        ));
    }
    emit(&args.out, &out)?;
    eprintln!(
        "margin d = {:.6e}, alignment = {:.6e}, first-kind eig = {:.6e}, limit active = {}, wall = {:.2}s",
        report.margin,
        report.alignment,
        report.first_kind_eig,
        report.limit_active,
        report.rows.iter().map(|r| r.wall_seconds).sum::<f64>()
    );
    if !all_certified {
        return Err(CliError::Experiment(ExperimentError::Solve(
            crate::solver::SolveError::MaxIterations(f64::NAN),
        )));
    }
    Ok(())
}

fn korn_csv(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = ExperimentConfig::from_file(&args.config)?;
    let report = experiments::run_korn_probe(&cfg)?;
    let slope = report
        .slope
        .map(fmt)
        .unwrap_or_else(|| "exact".to_string());
    let mut out = String::from("eps,lambda_min,fitted_slope\n");
    for (eps, lam) in &report.rows {
        out.push_str(&format!("{},{},{slope}\n", fmt(*eps), fmt(*lam)));
    }
    emit(&args.out, &out)?;
    Ok(())
}

fn signorini_csv(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = ExperimentConfig::from_file(&args.config)?;
    let report = experiments::run_signorini_check(&cfg)?;
    let mut out = String::from(
        "field,equivalence_ok,feasible,avg_err_tangential,avg_err_normal,deformed_alignment,avg_margin\n",
    );
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.field,
            r.equivalence_ok,
            r.feasible,
            fmt(r.avg_err_tangential),
            fmt(r.avg_err_normal),
            fmt(r.deformed_alignment),
            fmt(r.avg_margin),
        ));
    }
    emit(&args.out, &out)?;
    if report.counterexamples > 0 {
        return Err(CliError::Format(format!(
            "{} equivalence counterexamples found",
            report.counterexamples
        )));
    }
    Ok(())
}

fn density_csv(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = ExperimentConfig::from_file(&args.config)?;
    let report = experiments::run_density(&cfg)?;
    let mut out = String::from("k,h1_distance,min_margin,sup_bound_check\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.k,
            fmt(r.h1_distance),
            fmt(r.min_margin),
            fmt(r.sup_bound),
        ));
    }
    emit(&args.out, &out)?;
    Ok(())
}

/// Serializes a quadratic program in the documented plain-text format:
/// sorted upper-triangle triplets, the load vector, and constraint rows.
pub fn format_system(qp: &QuadraticProgram) -> String {
    let mut out = String::new();
    out.push_str("# shellvi system v1\n");
    out.push_str(&format!("dofs {}\n", qp.h.dim()));
    let trip = qp.h.upper_triplets();
    out.push_str(&format!("triplets {}\n", trip.len()));
    for (i, j, v) in trip {
        out.push_str(&format!("{i} {j} {}\n", fmt(v)));
    }
    out.push_str(&format!("load {}\n", qp.f.len()));
    for v in &qp.f {
        out.push_str(&format!("{}\n", fmt(*v)));
    }
    out.push_str(&format!("constraints {}\n", qp.constraints.len()));
    for r in qp.constraints.rows() {
        out.push_str(&format!(
            "{} {} {} {} {} {} {} {}\n",
            r.node,
            r.dofs[0],
            r.dofs[1],
            r.dofs[2],
            fmt(r.coeffs[0]),
            fmt(r.coeffs[1]),
            fmt(r.coeffs[2]),
            fmt(r.bound),
        ));
    }
    out
}

fn expect_count<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    tag: &str,
) -> Result<usize, String> {
    let line = lines
        .next()
        .ok_or_else(|| format!("unexpected end of file, expected `{tag}`"))?;
    let (head, count) = line
        .split_once(' ')
        .ok_or_else(|| format!("malformed `{tag}` line"))?;
    if head != tag {
        return Err(format!("expected `{tag}`, found `{head}`"));
    }
    count
        .trim()
        .parse()
        .map_err(|_| format!("bad count on `{tag}` line"))
}

/// Parses the plain-text system format produced by [`format_system`].
pub fn parse_system(text: &str) -> Result<QuadraticProgram, String> {
    let mut lines = text
        .lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let n = expect_count(&mut lines, "dofs")?;
    let m = expect_count(&mut lines, "triplets")?;
    let mut trip = TripletSym::new(n);
    for _ in 0..m {
        let line = lines.next().ok_or("missing triplet line")?;
        let mut tok = line.split_whitespace();
        let i: usize = tok
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or("bad triplet row")?;
        let j: usize = tok
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or("bad triplet col")?;
        let v: f64 = tok
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or("bad triplet value")?;
        if i >= n || j >= n {
            return Err(format!("triplet index ({i}, {j}) out of range"));
        }
        trip.push(i, j, v);
    }
    let h: SparseSym = trip.into_csr();
    let nf = expect_count(&mut lines, "load")?;
    if nf != n {
        return Err(format!("load length {nf} does not match dofs {n}"));
    }
    let mut f = Vec::with_capacity(n);
    for _ in 0..n {
        let line = lines.next().ok_or("missing load line")?;
        f.push(line.parse::<f64>().map_err(|_| "bad load value")?);
    }
    let k = expect_count(&mut lines, "constraints")?;
    let mut rows = Vec::with_capacity(k);
    for _ in 0..k {
        let line = lines.next().ok_or("missing constraint line")?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 8 {
            return Err("constraint line needs 8 fields".to_string());
        }
        let node: usize = tok[0].parse().map_err(|_| "bad node id")?;
        let d: Vec<usize> = tok[1..4]
            .iter()
            .map(|t| t.parse().map_err(|_| "bad dof index".to_string()))
            .collect::<Result<_, _>>()?;
        let c: Vec<f64> = tok[4..7]
            .iter()
            .map(|t| t.parse().map_err(|_| "bad coefficient".to_string()))
            .collect::<Result<_, _>>()?;
        let bound: f64 = tok[7].parse().map_err(|_| "bad bound")?;
        rows.push(ConstraintRow {
            node,
            dofs: [d[0], d[1], d[2]],
            coeffs: [c[0], c[1], c[2]],
            bound,
        });
    }
    let constraints = ConstraintSet::new(rows).map_err(|e| e.to_string())?;
    Ok(QuadraticProgram { h, f, constraints })
}

/// Re-export used by the binary for hypothesis checks in scripts.
pub fn check_hypotheses_only(cfg: &ExperimentConfig) -> Result<(f64, f64), ExperimentError> {
    let chart = cfg.build_chart()?;
    let hs: HalfSpace = cfg.half_space()?;
    let margin = chart.confinement_margin(&hs, cfg.grid);
    let alignment = chart.normal_alignment(&hs, cfg.grid);
    if margin <= 0.0 || alignment <= 0.0 {
        return Err(ExperimentError::HypothesisFailed { margin, alignment });
    }
    Ok((margin, alignment))
}
