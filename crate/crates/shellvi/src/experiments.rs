//! Experiment drivers: thickness sweeps for the 3D→2D membrane limit, the
//! Koiter comparison, the Korn-constant scaling probe, the Kirchhoff-Love
//! face-equivalence and transverse-average checks, and the density-operator
//! pipeline.
//!
//! Every driver validates the geometric hypotheses first (positive
//! confinement margin, positive normal alignment) and fails with
//! [`ExperimentError::HypothesisFailed`] otherwise; the CLI maps that to
//! exit code 2.

use std::time::Instant;


use rand::{Rng as _, SeedableRng as _};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::density::{
    cutoff, mollify, strip_poincare_check, truncate, BicubicScalar, DensityError,
    DiscreteSurfaceField, ReflectionExtension,
};
use crate::fem::{
    assemble_3d_system, assemble_h1_gram_3d, assemble_koiter_system, assemble_limit_system,
    assemble_strain_form_3d, interpolate_membrane, membrane_seminorm_gap, phi_from_force,
    reduce_matrix, smallest_gram_eigenvalue, AveragingMap, DiscreteField2D,
    FemError, Mesh2D, Mesh3D, SpaceKind,
};
use crate::geometry::{Chart, GeometryError, HalfSpace, SurfaceDisplacementSample};
use crate::shell::{fit_loglog_slope, KlLift, ShellError};
use crate::solver::{solve_vi_detailed, SolveError, ViSolution};
use crate::sparse::{smallest_generalized_eig, LinAlgError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("hypothesis failed: confinement margin d = {margin:e}, normal alignment min(a3·q) = {alignment:e} (both must be positive)")]
    HypothesisFailed { margin: f64, alignment: f64 },
    #[error("first-kind check failed: the membrane seminorm is not a norm on the clamped space ({0})")]
    NotFirstKind(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    LinAlg(#[from] LinAlgError),
    #[error(transparent)]
    Shell(#[from] ShellError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Density(#[from] DensityError),
}

/// One thickness row of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub eps: f64,
    /// `|ū_h(ε) − ζ_h|_M`.
    pub gap_m: f64,
    pub energy_3d: f64,
    /// `|ζ_{K,h}(ε) − ζ_h|_M` when the Koiter leg runs.
    pub koiter_gap_limit: Option<f64>,
    /// `|ζ_{K,h}(ε) − ū_h(ε)|_M` when the Koiter leg runs.
    pub koiter_gap_avg: Option<f64>,
    pub active_3d: usize,
    pub active_koiter: Option<usize>,
    pub iterations_3d: usize,
    pub iterations_koiter: Option<usize>,
    pub certified: bool,
    pub wall_seconds: f64,
}

/// Sweep output: hypothesis diagnostics, the limit solve, and per-ε rows
/// ordered by decreasing ε.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub margin: f64,
    pub alignment: f64,
    pub first_kind_eig: f64,
    pub limit_active: usize,
    pub rows: Vec<SweepRow>,
}

fn check_hypotheses(
    chart: &Chart,
    hs: &HalfSpace,
    grid: (usize, usize),
) -> Result<(f64, f64), ExperimentError> {
    let margin = chart.confinement_margin(hs, grid);
    let alignment = chart.normal_alignment(hs, grid);
    if margin <= 0.0 || alignment <= 0.0 {
        return Err(ExperimentError::HypothesisFailed { margin, alignment });
    }
    Ok((margin, alignment))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    /// Solve the Koiter model per ε and fill the comparison columns.
    pub with_koiter: bool,
    /// Drop the obstacle (plain linear solves); used by the consistency
    /// test against the unconstrained sweep.
    pub unconstrained: bool,
}

fn solve_system(
    sys: &crate::fem::AssembledSystem,
    cfg: &ExperimentConfig,
    unconstrained: bool,
) -> Result<ViSolution, ExperimentError> {
    if unconstrained {
        let x = crate::solver::solve_linear(&sys.stiffness, &sys.load)?;
        let qp = sys.qp();
        let energy = qp.energy(&x);
        Ok(ViSolution {
            x,
            active: Vec::new(),
            multipliers: Vec::new(),
            kkt_residual: 0.0,
            iterations: 1,
            energy,
            certified: true,
        })
    } else {
        Ok(solve_vi_detailed(&sys.qp(), &cfg.solver_config())?)
    }
}

/// Thickness sweep of the scaled 3D obstacle problem against the discrete
/// membrane limit.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepReport, ExperimentError> {
    run_sweep_opts(cfg, SweepOptions::default())
}

/// Sweep with the Koiter comparison columns filled.
pub fn run_koiter_compare(cfg: &ExperimentConfig) -> Result<SweepReport, ExperimentError> {
    run_sweep_opts(
        cfg,
        SweepOptions {
            with_koiter: true,
            ..Default::default()
        },
    )
}

pub fn run_sweep_opts(
    cfg: &ExperimentConfig,
    opts: SweepOptions,
) -> Result<SweepReport, ExperimentError> {
    let chart = cfg.build_chart()?;
    let hs = cfg.half_space()?;
    let lame = cfg.lame()?;
    let (margin, alignment) = check_hypotheses(&chart, &hs, cfg.grid)?;

    let mesh2 = Mesh2D::build(chart.domain(), cfg.nx, cfg.ny, chart.clamped_edges())?;
    let force = cfg.force_field();

    // first-kind check gates the limit solve
    let limit = assemble_limit_system(&mesh2, &chart, lame, &force, &hs)?;
    let first_kind_eig = smallest_gram_eigenvalue(&limit.gram_m)
        .map_err(|e| ExperimentError::NotFirstKind(e.to_string()))?;
    if first_kind_eig <= 0.0 {
        return Err(ExperimentError::NotFirstKind(format!(
            "smallest Gram eigenvalue {first_kind_eig:e}"
        )));
    }

    let limit_sol = solve_system(&limit, cfg, opts.unconstrained)?;
    let zeta_full = limit.space.full_vector(&limit_sol.x);
    let zeta_field = DiscreteField2D {
        kind: SpaceKind::Membrane2D,
        values: zeta_full.clone(),
    };

    let phi = phi_from_force(&force, lame);
    let mut rows = Vec::with_capacity(cfg.eps.len());
    for &eps in &cfg.eps {
        let started = Instant::now();
        let mesh3 = Mesh3D::build(mesh2.clone(), cfg.nz)?;
        let sys3 = assemble_3d_system(&mesh3, &chart, lame, eps, &force, &hs)?;
        let sol3 = solve_system(&sys3, cfg, opts.unconstrained)?;
        let full3 = sys3.space.full_vector(&sol3.x);
        let avg = AveragingMap::new(&mesh3);
        let avg_field = DiscreteField2D {
            kind: SpaceKind::Membrane2D,
            values: avg.apply(&full3),
        };
        let gap_m = membrane_seminorm_gap(&mesh2, &chart, &avg_field, &zeta_field, 4)?;

        let (koiter_gap_limit, koiter_gap_avg, active_koiter, iterations_koiter, koiter_cert) =
            if opts.with_koiter {
                let sysk = assemble_koiter_system(&mesh2, &chart, lame, eps, &phi, &hs)?;
                let solk = solve_system(&sysk, cfg, opts.unconstrained)?;
                let kfield = DiscreteField2D {
                    kind: SpaceKind::Koiter2D,
                    values: sysk.space.full_vector(&solk.x),
                };
                let gl = membrane_seminorm_gap(&mesh2, &chart, &kfield, &zeta_field, 4)?;
                let ga = membrane_seminorm_gap(&mesh2, &chart, &kfield, &avg_field, 4)?;
                (
                    Some(gl),
                    Some(ga),
                    Some(solk.active.len()),
                    Some(solk.iterations),
                    solk.certified,
                )
            } else {
                (None, None, None, None, true)
            };

        rows.push(SweepRow {
            eps,
            gap_m,
            energy_3d: sol3.energy,
            koiter_gap_limit,
            koiter_gap_avg,
            active_3d: sol3.active.len(),
            active_koiter,
            iterations_3d: sol3.iterations,
            iterations_koiter,
            certified: sol3.certified && limit_sol.certified && koiter_cert,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }

    Ok(SweepReport {
        margin,
        alignment,
        first_kind_eig,
        limit_active: limit_sol.active.len(),
        rows,
    })
}

/// Korn-probe output: per-ε smallest generalized eigenvalue of the strain
/// form against the H¹ Gram, with the fitted log-log slope.
#[derive(Debug, Clone)]
pub struct KornReport {
    pub rows: Vec<(f64, f64)>,
    pub slope: Option<f64>,
}

/// Smallest generalized eigenvalue sweep of
/// `Σ ‖e_{i‖j}(ε; ·)‖²` against the component H¹ Gram on the clamped
/// subspace; the eigenvalue scales like ε² on bending-dominated families.
pub fn run_korn_probe(cfg: &ExperimentConfig) -> Result<KornReport, ExperimentError> {
    let chart = cfg.build_chart()?;
    let mesh2 = Mesh2D::build(chart.domain(), cfg.nx, cfg.ny, chart.clamped_edges())?;
    let mesh3 = Mesh3D::build(mesh2, cfg.nz)?;
    let space = crate::fem::DiscreteSpace::volume3d(&mesh3);
    let b_full = assemble_h1_gram_3d(&mesh3)?;
    let b = reduce_matrix(&b_full, &space);
    let mut rows = Vec::with_capacity(cfg.eps.len());
    for &eps in &cfg.eps {
        let k_full = assemble_strain_form_3d(&mesh3, &chart, eps)?;
        let k = reduce_matrix(&k_full, &space);
        let lam = smallest_generalized_eig(&k, &b, cfg.seed, 1e-9, 4000)?;
        rows.push((eps, lam));
    }
    let slope = fit_loglog_slope(&rows);
    Ok(KornReport { rows, slope })
}

/// Per-field outcome of the Kirchhoff-Love equivalence and average checks.
#[derive(Debug, Clone)]
pub struct SignoriniRow {
    pub field: usize,
    /// Whole-grid feasibility coincides with face-only feasibility.
    pub equivalence_ok: bool,
    /// Whether this lifted sample was feasible at all grid points.
    pub feasible: bool,
    /// Max nodal deviation of the tangential closed-form average.
    pub avg_err_tangential: f64,
    /// Max nodal deviation of the normal closed-form average.
    pub avg_err_normal: f64,
    /// Empirical `min a_3(ζ)·q` over nodes (the alignment margin of the
    /// deformed normal; reported, never assumed).
    pub deformed_alignment: f64,
    /// Min nodal value of `(θ + ū_i a^i)·q` (midsurface feasibility of the
    /// averaged field).
    pub avg_margin: f64,
}

#[derive(Debug, Clone)]
pub struct SignoriniReport {
    pub rows: Vec<SignoriniRow>,
    pub counterexamples: usize,
}

/// Random small-amplitude trigonometric midsurface fields with analytic
/// gradients.
struct TrigField {
    amp: [f64; 3],
    freq: [[f64; 2]; 3],
    phase: [[f64; 2]; 3],
}

impl TrigField {
    fn random(rng: &mut impl rand::Rng, amplitude: f64) -> Self {
        let mut amp = [0.0; 3];
        let mut freq = [[0.0; 2]; 3];
        let mut phase = [[0.0; 2]; 3];
        for i in 0..3 {
            amp[i] = amplitude * rng.gen_range(0.3..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            for d in 0..2 {
                freq[i][d] = rng.gen_range(0.5..2.0);
                phase[i][d] = rng.gen_range(0.0..std::f64::consts::TAU);
            }
        }
        TrigField { amp, freq, phase }
    }

    fn sample(&self, y: [f64; 2]) -> SurfaceDisplacementSample {
        let mut s = SurfaceDisplacementSample::zero();
        for i in 0..3 {
            let u = self.freq[i][0] * y[0] + self.phase[i][0];
            let v = self.freq[i][1] * y[1] + self.phase[i][1];
            s.eta[i] = self.amp[i] * u.sin() * v.sin();
            s.grad[i][0] = self.amp[i] * self.freq[i][0] * u.cos() * v.sin();
            s.grad[i][1] = self.amp[i] * self.freq[i][1] * u.sin() * v.cos();
        }
        s
    }
}

/// Checks, for random Kirchhoff-Love lifted fields, that confinement on the
/// whole grid is equivalent to confinement on the two faces, and that the
/// transverse averages match their closed forms.
pub fn run_signorini_check(cfg: &ExperimentConfig) -> Result<SignoriniReport, ExperimentError> {
    let chart = cfg.build_chart()?;
    let hs = cfg.half_space()?;
    let (margin, alignment) = check_hypotheses(&chart, &hs, cfg.grid)?;
    let _ = alignment;
    let eps = *cfg.eps.first().unwrap();
    let mesh = Mesh2D::build(chart.domain(), cfg.nx, cfg.ny, chart.clamped_edges())?;
    let q = hs.direction();

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    let mut counterexamples = 0usize;
    for field_id in 0..20 {
        // alternate small and large amplitudes around the margin so the
        // sample set contains both feasible and infeasible lifts
        let amplitude = if field_id % 2 == 0 {
            0.15 * margin
        } else {
            1.5 * margin
        };
        let trig = TrigField::random(&mut rng, amplitude);
        let lift = KlLift::new(&chart, eps, |y| trig.sample(y));

        let mut min_faces = f64::INFINITY;
        let mut min_full = f64::INFINITY;
        let mut err_t: f64 = 0.0;
        let mut err_n: f64 = 0.0;
        let mut deformed_alignment = f64::INFINITY;
        let mut avg_margin = f64::INFINITY;
        for n in 0..mesh.n_nodes() {
            let y = mesh.node_coord(n);
            for k in 0..=cfg.nz {
                let x3 = -1.0 + 2.0 * k as f64 / cfg.nz as f64;
                let val = lift.deformed_position(y, x3)?.dot(&q);
                min_full = min_full.min(val);
                if k == 0 || k == cfg.nz {
                    min_faces = min_faces.min(val);
                }
            }
            let quad = lift.average(y)?;
            let closed = lift.average_closed_form(y)?;
            err_t = err_t.max((quad[0] - closed[0]).abs().max((quad[1] - closed[1]).abs()));
            err_n = err_n.max((quad[2] - closed[2]).abs());
            deformed_alignment = deformed_alignment.min(lift.deformed_normal(y)?.dot(&q));
            let frame = chart.eval_frame(y)?;
            let mut pos = chart.position(y);
            for i in 0..3 {
                pos += quad[i] * frame.a_con[i];
            }
            avg_margin = avg_margin.min(pos.dot(&q));
        }
        let feasible_full = min_full >= 0.0;
        let feasible_faces = min_faces >= 0.0;
        let equivalence_ok = feasible_full == feasible_faces;
        if !equivalence_ok {
            counterexamples += 1;
        }
        rows.push(SignoriniRow {
            field: field_id,
            equivalence_ok,
            feasible: feasible_full,
            avg_err_tangential: err_t,
            avg_err_normal: err_n,
            deformed_alignment,
            avg_margin,
        });
    }
    Ok(SignoriniReport {
        rows,
        counterexamples,
    })
}

/// One row per k of the density pipeline run.
#[derive(Debug, Clone)]
pub struct DensityRow {
    pub k: u32,
    /// Discrete H¹ distance between the pipeline output and the input.
    pub h1_distance: f64,
    /// Nodal confinement margin of the cutoff stage (bounded below by
    /// `d/k` for feasible inputs).
    pub min_margin: f64,
    /// Max nodal `|η_j a^j|` after truncation (bounded by k).
    pub sup_bound: f64,
    /// Nodal confinement margin of the mollified output (reported, the
    /// modulus-of-continuity term may push it below d/k).
    pub mollify_margin: f64,
}

#[derive(Debug, Clone)]
pub struct DensityReport {
    pub margin: f64,
    pub rows: Vec<DensityRow>,
}

/// Runs truncate → cutoff → mollify for each configured k on a smooth
/// feasible clamped field scaled to a fraction of the confinement margin.
pub fn run_density(cfg: &ExperimentConfig) -> Result<DensityReport, ExperimentError> {
    let chart = cfg.build_chart()?;
    let hs = cfg.half_space()?;
    let margin = chart.confinement_margin(&hs, cfg.grid);
    if margin <= 0.0 {
        return Err(ExperimentError::HypothesisFailed {
            margin,
            alignment: chart.normal_alignment(&hs, cfg.grid),
        });
    }
    let mesh = Mesh2D::build(chart.domain(), cfg.nx, cfg.ny, chart.clamped_edges())?;

    // smooth profile vanishing on the clamped part
    let bounds = mesh.bounds;
    let profile = |y: [f64; 2]| -> [f64; 3] {
        let mut s = 1.0;
        for e in &mesh.clamped_edges {
            let t = match e {
                crate::geometry::Edge::Bottom => (y[1] - bounds.y2.0) / (bounds.y2.1 - bounds.y2.0),
                crate::geometry::Edge::Top => (bounds.y2.1 - y[1]) / (bounds.y2.1 - bounds.y2.0),
                crate::geometry::Edge::Left => (y[0] - bounds.y1.0) / (bounds.y1.1 - bounds.y1.0),
                crate::geometry::Edge::Right => (bounds.y1.1 - y[0]) / (bounds.y1.1 - bounds.y1.0),
            };
            s *= (std::f64::consts::FRAC_PI_2 * t.clamp(0.0, 1.0)).sin();
        }
        [
            s * (1.3 * y[0]).cos(),
            s * (0.7 * (y[0] + y[1])).sin(),
            -s * (1.1 * y[1]).cos(),
        ]
    };
    let raw = interpolate_membrane(&mesh, profile);
    let raw_field = DiscreteSurfaceField::new(&mesh, &chart, raw)?;
    // scale so the field stays feasible with margin ~ margin/5
    let q = hs.direction();
    let mut worst_drop = 0.0f64;
    for n in 0..mesh.n_nodes() {
        worst_drop = worst_drop.max(-raw_field.displacement(n).dot(&q));
    }
    let scale = if worst_drop > 0.0 {
        0.8 * margin / worst_drop
    } else {
        1.0
    };
    let field = DiscreteSurfaceField::new(
        &mesh,
        &chart,
        raw_field.values.iter().map(|v| v * scale).collect(),
    )?;

    let h = mesh.cell_size();
    let mut rows = Vec::new();
    for &k in &cfg.density_k {
        let r = 1.0 / k as f64;
        let pad = (((r / h[0]).round() as usize).max(1))
            .max(((r / h[1]).round() as usize).max(1));
        let t = truncate(&field, k);
        let c = cutoff(&t, k);
        let ext = ReflectionExtension::build(&c, &hs, pad);
        let m = mollify(&c, &ext, k)?;
        rows.push(DensityRow {
            k,
            h1_distance: m.h1_distance(&field),
            min_margin: c.confinement_min(&hs),
            sup_bound: t.sup_displacement(),
            mollify_margin: m.confinement_min(&hs),
        });
    }
    Ok(DensityReport { margin, rows })
}

/// 100 random clamped bicubic scalar trials for the strip Poincaré check.
pub fn random_poincare_trials(mesh: &Mesh2D, seed: u64, count: usize) -> Vec<BicubicScalar> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut dofs: Vec<f64> = (0..mesh.n_nodes() * 4)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            for n in 0..mesh.n_nodes() {
                if mesh.is_clamped_node(n) {
                    for d in 0..4 {
                        dofs[4 * n + d] = 0.0;
                    }
                }
            }
            BicubicScalar { dofs }
        })
        .collect()
}

/// Worst strip Poincaré ratio over random clamped bicubic fields.
pub fn run_poincare_probe(
    cfg: &ExperimentConfig,
    k: u32,
    trials: usize,
) -> Result<f64, ExperimentError> {
    let chart = cfg.build_chart()?;
    let mesh = Mesh2D::build(chart.domain(), cfg.nx, cfg.ny, chart.clamped_edges())?;
    let fields = random_poincare_trials(&mesh, cfg.seed, trials);
    Ok(strip_poincare_check(&mesh, k, &fields))
}

/// Default configuration text for the convergence experiments: the
/// parameter-swapped cylinder, so the stored normal points into the
/// half-space, with a constant transverse force that activates the
/// obstacle.
pub fn cylinder_sweep_config() -> &'static str {
    // `clamped_edges` names the edge in the unswapped parametrization;
    // the arc edge (bottom) becomes the left edge after the swap
    "chart = cylinder
bounds = 0.1 3.041592653589793 0.0 2.0
swap = true
clamped_edges = bottom
lambda = 1.0
mu = 1.0
eps = 0.2 0.1 0.05 0.025
nx = 16
ny = 16
nz = 4
q = 0 0 1
f33 = -0.22
grid = 200 200
seed = 42
"
}

/// Plate and cylinder Korn-probe configurations (6×6×4 mesh).
pub fn korn_plate_config() -> &'static str {
    "chart = plate
bounds = 0 1 0 1
clamped_edges = left
lambda = 1.0
mu = 1.0
eps = 0.2 0.1 0.05 0.025
nx = 6
ny = 6
nz = 4
"
}

pub fn korn_cylinder_config() -> &'static str {
    // a generator edge is clamped, so inextensional bendings exist and the
    // ε² Korn scaling is attained
    "chart = cylinder
bounds = 1.0 1.6 0.0 0.6
clamped_edges = left
lambda = 1.0
mu = 1.0
eps = 0.2 0.1 0.05 0.025
nx = 6
ny = 6
nz = 4
"
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn cylinder_cfg() -> ExperimentConfig {
        // appended assignments override the base config
        let mut text = cylinder_sweep_config().to_string();
        text.push_str("nx = 8\nny = 8\nnz = 2\neps = 0.2 0.1\n");
        ExperimentConfig::parse(&text).unwrap()
    }

    #[test]
    fn hypothesis_failure_reported() {
        let text = "chart = plate\nbounds = 0 1 0 1\nlambda = 1\nmu = 1\nq = 0 0 -1\noffset = 0 0 1\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        match run_sweep(&cfg) {
            Err(ExperimentError::HypothesisFailed { alignment, .. }) => {
                assert!(alignment < 0.0);
            }
            other => panic!("expected hypothesis failure, got {other:?}"),
        }
    }

    #[test]
    fn zero_force_gives_zero_solutions_and_gaps() {
        let mut cfg = cylinder_cfg();
        cfg.force = [0.0; 6];
        let report = run_koiter_compare(&cfg).unwrap();
        for row in &report.rows {
            assert!(row.gap_m.abs() < 1e-10);
            assert!(row.koiter_gap_limit.unwrap().abs() < 1e-10);
            assert!(row.energy_3d.abs() < 1e-20);
            assert_eq!(row.active_3d, 0);
        }
    }

    #[test]
    fn obstacle_far_matches_unconstrained_sweep() {
        let mut cfg = cylinder_cfg();
        // push the surface far into the half-space: obstacle never active
        cfg.offset = Vector3::new(0.0, 0.0, 50.0);
        let constrained = run_sweep(&cfg).unwrap();
        let unconstrained = run_sweep_opts(
            &cfg,
            SweepOptions {
                unconstrained: true,
                ..Default::default()
            },
        )
        .unwrap();
        for (a, b) in constrained.rows.iter().zip(&unconstrained.rows) {
            assert_eq!(a.active_3d, 0);
            assert!(
                (a.gap_m - b.gap_m).abs() <= 1e-9 * b.gap_m.abs().max(1.0),
                "gap {} vs unconstrained {}",
                a.gap_m,
                b.gap_m
            );
        }
    }

    #[test]
    fn signorini_equivalence_and_averages() {
        let mut cfg = cylinder_cfg();
        cfg.nx = 6;
        cfg.ny = 6;
        let report = run_signorini_check(&cfg).unwrap();
        assert_eq!(report.counterexamples, 0);
        let mut saw_feasible = false;
        let mut saw_infeasible = false;
        for row in &report.rows {
            assert!(row.equivalence_ok);
            assert!(row.avg_err_tangential <= 1e-8);
            assert!(row.avg_err_normal <= 1e-8);
            saw_feasible |= row.feasible;
            saw_infeasible |= !row.feasible;
        }
        // the amplitude straddles the margin, so both cases appear
        assert!(saw_feasible && saw_infeasible);
    }

    #[test]
    fn density_pipeline_report() {
        let mut cfg = cylinder_cfg();
        cfg.nx = 24;
        cfg.ny = 24;
        cfg.density_k = vec![4, 8];
        let report = run_density(&cfg).unwrap();
        assert_eq!(report.rows.len(), 2);
        for row in &report.rows {
            assert!(row.min_margin >= report.margin / row.k as f64 - 1e-10);
            assert!(row.sup_bound <= row.k as f64 + 1e-12);
            assert!(row.h1_distance.is_finite());
        }
        assert!(report.rows[1].h1_distance <= report.rows[0].h1_distance * 1.05);
    }
}
