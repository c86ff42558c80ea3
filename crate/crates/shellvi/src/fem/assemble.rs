//! Element assembly of every bilinear form, load functional, constraint
//! set, and seminorm Gram matrix used by the models.
//!
//! Assembly is element-parallel: local matrices are computed independently
//! per cell (rayon when enabled) and folded into the global triplet list in
//! a fixed cell order, so the assembled matrices are bit-identical across
//! thread counts.

use std::sync::Arc;

use nalgebra::{DMatrix, Matrix2, Vector6};

use crate::geometry::{gamma, rho, Chart, HalfSpace, SurfaceDisplacementSample, SurfaceFrame};
use crate::par;
use crate::shell::{
    elasticity_tensor, eval_shell_frame, reduced_membrane_tensor, scaled_strains, Lame,
    PAIR_WEIGHTS, PAIR_WEIGHTS2,
};
use crate::solver::{ConstraintRow, ConstraintSet};
use crate::sparse::{SparseSym, TripletSym};

use super::mesh::{Mesh2D, Mesh3D};
use super::quadrature::gauss_unit;
use super::space::{bfs_2d, q1_2d, q1_3d, DiscreteSpace, SpaceKind};
use super::FemError;

/// Default quadrature: 2×2 per quad for membrane-type integrands.
pub const NQUAD_MEMBRANE: usize = 2;
/// 4×4 per quad for the bicubic flexural integrands.
pub const NQUAD_FLEXURAL: usize = 4;
/// 2×2 in-plane × 3 transverse per hex.
pub const NQUAD_3D: (usize, usize) = (2, 3);

/// Symmetric force components `F^{ij} = F^{ji}` as fields on `ω × (-1,1)`,
/// in the pair order `(11, 22, 33, 23, 13, 12)`.
#[derive(Clone)]
pub struct ForceField {
    comp: [Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>; 6],
}

impl ForceField {
    pub fn new(comp: [Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>; 6]) -> Self {
        ForceField { comp }
    }

    /// Constant components in pair order.
    pub fn constants(c: [f64; 6]) -> Self {
        ForceField {
            comp: c.map(|v| {
                let f: Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync> =
                    Arc::new(move |_, _| v);
                f
            }),
        }
    }

    pub fn zero() -> Self {
        Self::constants([0.0; 6])
    }

    pub fn eval_pairs(&self, y: [f64; 2], x3: f64) -> Vector6<f64> {
        Vector6::from_fn(|p, _| (self.comp[p])(y, x3))
    }
}

/// Which 2D form to assemble; all share the same element loop.
enum Form2D {
    /// `∫ a^{αβστ} γ_{στ}(η) γ_{αβ}(ξ) √a dy`
    Membrane(Lame),
    /// `∫ a^{αβστ} ρ_{στ}(η) ρ_{αβ}(ξ) √a dy`
    Flexural(Lame),
    /// `∫ Σ γ_{αβ}(η) γ_{αβ}(ξ) dy` — the membrane seminorm pairing
    SeminormGamma,
}

/// Local basis of a 2D element: displacement sample of each local dof at a
/// quadrature point, plus the local-to-full dof map.
fn local_samples_2d(
    kind: SpaceKind,
    s: f64,
    t: f64,
    hx: f64,
    hy: f64,
) -> Vec<SurfaceDisplacementSample> {
    let (q1v, q1g) = q1_2d(s, t, hx, hy);
    match kind {
        SpaceKind::Membrane2D => {
            let mut out = Vec::with_capacity(12);
            for k in 0..4 {
                for comp in 0..3 {
                    let mut sample = SurfaceDisplacementSample::zero();
                    sample.eta[comp] = q1v[k];
                    sample.grad[comp] = q1g[k];
                    out.push(sample);
                }
            }
            out
        }
        SpaceKind::Koiter2D => {
            let bfs = bfs_2d(s, t, hx, hy);
            let mut out = Vec::with_capacity(24);
            for k in 0..4 {
                for comp in 0..2 {
                    let mut sample = SurfaceDisplacementSample::zero();
                    sample.eta[comp] = q1v[k];
                    sample.grad[comp] = q1g[k];
                    out.push(sample);
                }
                for d in 0..4 {
                    let b = &bfs[4 * k + d];
                    let mut sample = SurfaceDisplacementSample::zero();
                    sample.eta[2] = b.value;
                    sample.grad[2] = b.grad;
                    sample.hess3 = Matrix2::new(b.hess[0], b.hess[1], b.hess[1], b.hess[2]);
                    out.push(sample);
                }
            }
            out
        }
        SpaceKind::Volume3D => unreachable!(),
    }
}

/// Full dof indices of a 2D element's local dofs, in the same order as
/// [`local_samples_2d`].
fn local_dofs_2d(mesh: &Mesh2D, kind: SpaceKind, cell: usize) -> Vec<usize> {
    let nodes = mesh.cell_nodes(cell);
    match kind {
        SpaceKind::Membrane2D => nodes
            .iter()
            .flat_map(|&n| (0..3).map(move |c| 3 * n + c))
            .collect(),
        SpaceKind::Koiter2D => nodes
            .iter()
            .flat_map(|&n| (0..6).map(move |c| 6 * n + c))
            .collect(),
        SpaceKind::Volume3D => unreachable!(),
    }
}

fn assemble_form_2d(
    mesh: &Mesh2D,
    chart: &Chart,
    kind: SpaceKind,
    form: &Form2D,
    nquad: usize,
) -> Result<SparseSym, FemError> {
    let h = mesh.cell_size();
    let rule = gauss_unit(nquad);
    let n_full = mesh.n_nodes() * kind.dofs_per_node();

    let locals: Vec<Result<(Vec<usize>, DMatrix<f64>), FemError>> =
        par::map_indexed(mesh.n_cells(), |cell| {
            let dofs = local_dofs_2d(mesh, kind, cell);
            let nd = dofs.len();
            let mut local = DMatrix::<f64>::zeros(nd, nd);
            let origin = mesh.cell_origin(cell);
            for (s, ws) in &rule {
                for (t, wt) in &rule {
                    let y = [origin[0] + s * h[0], origin[1] + t * h[1]];
                    let frame = chart.eval_frame(y)?;
                    let samples = local_samples_2d(kind, *s, *t, h[0], h[1]);
                    let w = ws * wt * h[0] * h[1];
                    match form {
                        Form2D::Membrane(lame) | Form2D::Flexural(lame) => {
                            let tensor = reduced_membrane_tensor(&frame, *lame);
                            let weight = w * frame.area.sqrt();
                            let strains: Vec<[f64; 3]> = samples
                                .iter()
                                .map(|sm| {
                                    let g = match form {
                                        Form2D::Membrane(_) => gamma(&frame, sm),
                                        _ => rho(&frame, sm),
                                    };
                                    [g[(0, 0)], g[(1, 1)], g[(0, 1)]]
                                })
                                .collect();
                            for a in 0..nd {
                                for b in a..nd {
                                    let v =
                                        weight * tensor.contract(&strains[b], &strains[a]);
                                    local[(a, b)] += v;
                                    if a != b {
                                        local[(b, a)] += v;
                                    }
                                }
                            }
                        }
                        Form2D::SeminormGamma => {
                            let strains: Vec<[f64; 3]> = samples
                                .iter()
                                .map(|sm| {
                                    let g = gamma(&frame, sm);
                                    [g[(0, 0)], g[(1, 1)], g[(0, 1)]]
                                })
                                .collect();
                            for a in 0..nd {
                                for b in a..nd {
                                    let mut v = 0.0;
                                    for p in 0..3 {
                                        v += PAIR_WEIGHTS2[p] * strains[a][p] * strains[b][p];
                                    }
                                    v *= w;
                                    local[(a, b)] += v;
                                    if a != b {
                                        local[(b, a)] += v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Ok((dofs, local))
        });

    let mut trip = TripletSym::new(n_full);
    for res in locals {
        let (dofs, local) = res?;
        for a in 0..dofs.len() {
            for b in a..dofs.len() {
                trip.push(dofs[a], dofs[b], local[(a, b)]);
            }
        }
    }
    Ok(trip.into_csr())
}

/// Membrane bilinear form on the given 2D space (full dof numbering).
pub fn assemble_membrane_form(
    mesh: &Mesh2D,
    chart: &Chart,
    lame: Lame,
    kind: SpaceKind,
) -> Result<SparseSym, FemError> {
    assemble_form_2d(mesh, chart, kind, &Form2D::Membrane(lame), NQUAD_MEMBRANE)
}

/// Flexural bilinear form on the Koiter space (full dof numbering).
pub fn assemble_flexural_form(
    mesh: &Mesh2D,
    chart: &Chart,
    lame: Lame,
) -> Result<SparseSym, FemError> {
    assemble_form_2d(
        mesh,
        chart,
        SpaceKind::Koiter2D,
        &Form2D::Flexural(lame),
        NQUAD_FLEXURAL,
    )
}

/// Gram matrix of the membrane seminorm `Σ_{αβ} ‖γ_{αβ}(·)‖²_{L²(ω)}` on
/// the given space (full dof numbering).
pub fn seminorm_gram(
    mesh: &Mesh2D,
    chart: &Chart,
    kind: SpaceKind,
) -> Result<SparseSym, FemError> {
    let nq = match kind {
        SpaceKind::Koiter2D => NQUAD_FLEXURAL,
        _ => NQUAD_MEMBRANE,
    };
    assemble_form_2d(mesh, chart, kind, &Form2D::SeminormGamma, nq)
}

/// Transverse-integrated load fields
/// `φ^{αβ}(y) = ∫_{-1}^{1} (F^{αβ} − (λ/(λ+2μ)) a^{αβ} F^{33}) dx3`
/// as a pair-ordered sampler `(φ^{11}, φ^{22}, φ^{12})`.
pub struct PhiField {
    force: ForceField,
    lame: Lame,
}

impl PhiField {
    pub fn eval(&self, y: [f64; 2], frame: &SurfaceFrame) -> [f64; 3] {
        let rule = crate::fem::quadrature::gauss(5);
        let c = self.lame.lambda / (self.lame.lambda + 2.0 * self.lame.mu);
        let mut out = [0.0; 3];
        for &(x3, w) in rule {
            let f = self.force.eval_pairs(y, x3);
            out[0] += w * (f[0] - c * frame.metric_con[(0, 0)] * f[2]);
            out[1] += w * (f[1] - c * frame.metric_con[(1, 1)] * f[2]);
            out[2] += w * (f[5] - c * frame.metric_con[(0, 1)] * f[2]);
        }
        out
    }
}

/// Builds the 2D load fields from the admissible force components.
pub fn phi_from_force(force: &ForceField, lame: Lame) -> PhiField {
    PhiField {
        force: force.clone(),
        lame,
    }
}

/// Load vector `η ↦ ∫ φ^{αβ} γ_{αβ}(η) √a dy` on the given space (full
/// dof numbering).
pub fn assemble_membrane_load(
    mesh: &Mesh2D,
    chart: &Chart,
    kind: SpaceKind,
    phi: &PhiField,
) -> Result<Vec<f64>, FemError> {
    let h = mesh.cell_size();
    let rule = gauss_unit(NQUAD_MEMBRANE);
    let n_full = mesh.n_nodes() * kind.dofs_per_node();
    let locals: Vec<Result<(Vec<usize>, Vec<f64>), FemError>> =
        par::map_indexed(mesh.n_cells(), |cell| {
            let dofs = local_dofs_2d(mesh, kind, cell);
            let mut local = vec![0.0; dofs.len()];
            let origin = mesh.cell_origin(cell);
            for (s, ws) in &rule {
                for (t, wt) in &rule {
                    let y = [origin[0] + s * h[0], origin[1] + t * h[1]];
                    let frame = chart.eval_frame(y)?;
                    let weight = ws * wt * h[0] * h[1] * frame.area.sqrt();
                    let p = phi.eval(y, &frame);
                    let samples = local_samples_2d(kind, *s, *t, h[0], h[1]);
                    for (a, sm) in samples.iter().enumerate() {
                        let g = gamma(&frame, sm);
                        let gp = [g[(0, 0)], g[(1, 1)], g[(0, 1)]];
                        let mut v = 0.0;
                        for q in 0..3 {
                            v += PAIR_WEIGHTS2[q] * p[q] * gp[q];
                        }
                        local[a] += weight * v;
                    }
                }
            }
            Ok((dofs, local))
        });
    let mut load = vec![0.0; n_full];
    for res in locals {
        let (dofs, local) = res?;
        for (a, d) in dofs.iter().enumerate() {
            load[*d] += local[a];
        }
    }
    Ok(load)
}

/// Which 3D form to assemble.
enum Form3D {
    /// `∫ A^{ijkl}(ε) e_{k‖l}(ε; v) e_{i‖j}(ε; w) √g(ε) dx`
    Elasticity(Lame, f64),
    /// `∫ Σ_{ij} e_{i‖j}(ε; v) e_{i‖j}(ε; w) dx` — the Korn strain pairing
    PlainStrain(f64),
    /// `∫ (v·w + Σ_i ∇v_i · ∇w_i) dx`
    H1Gram,
    /// `∫ Σ_i ∂_3 v_i ∂_3 w_i dx`
    TransverseGrad,
}

fn assemble_form_3d(
    mesh: &Mesh3D,
    chart: &Chart,
    form: &Form3D,
    nquad: (usize, usize),
) -> Result<SparseSym, FemError> {
    let h = mesh.cell_size();
    let rule_p = gauss_unit(nquad.0);
    let rule_z = gauss_unit(nquad.1);
    let n_full = mesh.n_nodes() * 3;

    let locals: Vec<Result<(Vec<usize>, DMatrix<f64>), FemError>> =
        par::map_indexed(mesh.n_cells(), |cell| {
            let nodes = mesh.cell_nodes(cell);
            let dofs: Vec<usize> = nodes.iter().flat_map(|&n| (0..3).map(move |c| 3 * n + c)).collect();
            let mut local = DMatrix::<f64>::zeros(24, 24);
            let origin = mesh.cell_origin(cell);
            for (s, ws) in &rule_p {
                for (t, wt) in &rule_p {
                    let y = [origin[0] + s * h[0], origin[1] + t * h[1]];
                    let frame = match form {
                        Form3D::H1Gram | Form3D::TransverseGrad => None,
                        _ => Some(chart.eval_frame(y)?),
                    };
                    for (u, wu) in &rule_z {
                        let x3 = origin[2] + u * h[2];
                        let w = ws * wt * wu * h[0] * h[1] * h[2];
                        let (vals, grads) = q1_3d(*s, *t, *u, h[0], h[1], h[2]);
                        let dof_strains = |sf: &crate::shell::ShellFrame3D,
                                           eps: f64|
                         -> Vec<Vector6<f64>> {
                            (0..24)
                                .map(|dof| {
                                    let (k, comp) = (dof / 3, dof % 3);
                                    let mut val = [0.0; 3];
                                    val[comp] = vals[k];
                                    let mut grad = [[0.0; 3]; 3];
                                    grad[comp] = grads[k];
                                    scaled_strains(sf, eps, &val, &grad).pairs()
                                })
                                .collect()
                        };
                        match form {
                            Form3D::Elasticity(lame, eps) => {
                                let sf =
                                    eval_shell_frame(frame.as_ref().unwrap(), *eps, x3)?;
                                let a = elasticity_tensor(&sf, *lame);
                                let weight = w * sf.vol.sqrt();
                                let strains = dof_strains(&sf, *eps);
                                for a_loc in 0..24 {
                                    for b_loc in a_loc..24 {
                                        let v = weight
                                            * a.contract(&strains[b_loc], &strains[a_loc]);
                                        local[(a_loc, b_loc)] += v;
                                        if a_loc != b_loc {
                                            local[(b_loc, a_loc)] += v;
                                        }
                                    }
                                }
                            }
                            Form3D::PlainStrain(eps) => {
                                let sf =
                                    eval_shell_frame(frame.as_ref().unwrap(), *eps, x3)?;
                                let strains = dof_strains(&sf, *eps);
                                for a_loc in 0..24 {
                                    for b_loc in a_loc..24 {
                                        let mut v = 0.0;
                                        for p in 0..6 {
                                            v += PAIR_WEIGHTS[p]
                                                * strains[a_loc][p]
                                                * strains[b_loc][p];
                                        }
                                        v *= w;
                                        local[(a_loc, b_loc)] += v;
                                        if a_loc != b_loc {
                                            local[(b_loc, a_loc)] += v;
                                        }
                                    }
                                }
                            }
                            Form3D::H1Gram => {
                                for k in 0..8 {
                                    for l in k..8 {
                                        let mut v = vals[k] * vals[l];
                                        for d in 0..3 {
                                            v += grads[k][d] * grads[l][d];
                                        }
                                        v *= w;
                                        for comp in 0..3 {
                                            let (a_loc, b_loc) = (3 * k + comp, 3 * l + comp);
                                            local[(a_loc, b_loc)] += v;
                                            if a_loc != b_loc {
                                                local[(b_loc, a_loc)] += v;
                                            }
                                        }
                                    }
                                }
                            }
                            Form3D::TransverseGrad => {
                                for k in 0..8 {
                                    for l in k..8 {
                                        let v = w * grads[k][2] * grads[l][2];
                                        for comp in 0..3 {
                                            let (a_loc, b_loc) = (3 * k + comp, 3 * l + comp);
                                            local[(a_loc, b_loc)] += v;
                                            if a_loc != b_loc {
                                                local[(b_loc, a_loc)] += v;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Ok((dofs, local))
        });

    let mut trip = TripletSym::new(n_full);
    for res in locals {
        let (dofs, local) = res?;
        for a in 0..24 {
            for b in a..24 {
                trip.push(dofs[a], dofs[b], local[(a, b)]);
            }
        }
    }
    Ok(trip.into_csr())
}

/// 3D shell stiffness (full dof numbering).
pub fn assemble_3d_stiffness(
    mesh: &Mesh3D,
    chart: &Chart,
    lame: Lame,
    eps: f64,
) -> Result<SparseSym, FemError> {
    assemble_form_3d(mesh, chart, &Form3D::Elasticity(lame, eps), NQUAD_3D)
}

/// Bare strain pairing `Σ ‖e_{i‖j}(ε; ·)‖²` for the Korn probe.
pub fn assemble_strain_form_3d(
    mesh: &Mesh3D,
    chart: &Chart,
    eps: f64,
) -> Result<SparseSym, FemError> {
    assemble_form_3d(mesh, chart, &Form3D::PlainStrain(eps), NQUAD_3D)
}

/// Component H¹ Gram on the slab.
pub fn assemble_h1_gram_3d(mesh: &Mesh3D) -> Result<SparseSym, FemError> {
    // chart-independent; a plate chart satisfies the evaluation interface
    assemble_form_3d(
        mesh,
        &plate_helper(),
        &Form3D::H1Gram,
        (NQUAD_MEMBRANE, 2),
    )
}

fn transverse_grad_gram(mesh: &Mesh3D) -> Result<SparseSym, FemError> {
    assemble_form_3d(
        mesh,
        &plate_helper(),
        &Form3D::TransverseGrad,
        (NQUAD_MEMBRANE, 2),
    )
}

fn plate_helper() -> Chart {
    use crate::geometry::{BuiltinChart, Edge, Rect};
    Chart::builtin(
        BuiltinChart::Plate,
        Rect::new(0.0, 1.0, 0.0, 1.0),
        &[Edge::Bottom],
    )
    .expect("plate helper chart")
}

/// 3D load vector `v ↦ ∫ F^{ij} e_{i‖j}(ε; v) √g(ε) dx` (full numbering).
pub fn assemble_3d_load(
    mesh: &Mesh3D,
    chart: &Chart,
    lame: Lame,
    eps: f64,
    force: &ForceField,
) -> Result<Vec<f64>, FemError> {
    let _ = lame;
    let h = mesh.cell_size();
    let rule_p = gauss_unit(NQUAD_3D.0);
    let rule_z = gauss_unit(NQUAD_3D.1);
    let locals: Vec<Result<(Vec<usize>, Vec<f64>), FemError>> =
        par::map_indexed(mesh.n_cells(), |cell| {
            let nodes = mesh.cell_nodes(cell);
            let dofs: Vec<usize> =
                nodes.iter().flat_map(|&n| (0..3).map(move |c| 3 * n + c)).collect();
            let mut local = vec![0.0; 24];
            let origin = mesh.cell_origin(cell);
            for (s, ws) in &rule_p {
                for (t, wt) in &rule_p {
                    let y = [origin[0] + s * h[0], origin[1] + t * h[1]];
                    let frame = chart.eval_frame(y)?;
                    for (u, wu) in &rule_z {
                        let x3 = origin[2] + u * h[2];
                        let sf = eval_shell_frame(&frame, eps, x3)?;
                        let w = ws * wt * wu * h[0] * h[1] * h[2] * sf.vol.sqrt();
                        let fp = force.eval_pairs(y, x3);
                        let (vals, grads) = q1_3d(*s, *t, *u, h[0], h[1], h[2]);
                        for dof in 0..24 {
                            let (k, comp) = (dof / 3, dof % 3);
                            let mut val = [0.0; 3];
                            val[comp] = vals[k];
                            let mut grad = [[0.0; 3]; 3];
                            grad[comp] = grads[k];
                            let e = scaled_strains(&sf, eps, &val, &grad).pairs();
                            let mut v = 0.0;
                            for p in 0..6 {
                                v += PAIR_WEIGHTS[p] * fp[p] * e[p];
                            }
                            local[dof] += w * v;
                        }
                    }
                }
            }
            Ok((dofs, local))
        });
    let mut load = vec![0.0; mesh.n_nodes() * 3];
    for res in locals {
        let (dofs, local) = res?;
        for (a, d) in dofs.iter().enumerate() {
            load[*d] += local[a];
        }
    }
    Ok(load)
}

/// Nodal half-space constraints on the midsurface: one row per non-clamped
/// node, `(a^i(y_n)·q) η_{i,n} ≥ −θ(y_n)·q`, over full dof indices of the
/// given space.
pub fn assemble_constraints_2d(
    mesh: &Mesh2D,
    chart: &Chart,
    hs: &HalfSpace,
    space: &DiscreteSpace,
) -> Result<Vec<ConstraintRow>, FemError> {
    let q = hs.direction();
    let mut rows = Vec::new();
    for n in 0..mesh.n_nodes() {
        let y = mesh.node_coord(n);
        let td = chart.position(y).dot(&q);
        if td < 0.0 {
            return Err(FemError::InfeasibleReference {
                node: n,
                value: td,
            });
        }
        if mesh.is_clamped_node(n) {
            continue;
        }
        let frame = chart.eval_frame(y)?;
        rows.push(ConstraintRow {
            node: n,
            dofs: space.node_value_dofs(n),
            coeffs: [
                frame.a_con[0].dot(&q),
                frame.a_con[1].dot(&q),
                frame.a_con[2].dot(&q),
            ],
            bound: -td,
        });
    }
    Ok(rows)
}

/// Nodal half-space constraints over the slab: one row per non-clamped 3D
/// node, `(g^i(ε)(x_n)·q) v_{i,n} ≥ −(θ + ε x3 a_3)(x_n)·q`. At the
/// midplane layer the coefficients coincide bit-for-bit with the 2D rows.
pub fn assemble_constraints_3d(
    mesh: &Mesh3D,
    chart: &Chart,
    hs: &HalfSpace,
    eps: f64,
    space: &DiscreteSpace,
) -> Result<Vec<ConstraintRow>, FemError> {
    let q = hs.direction();
    let mut rows = Vec::new();
    for n in 0..mesh.n_nodes() {
        let (n2, k) = mesh.node_split(n);
        let y = mesh.base.node_coord(n2);
        let x3 = mesh.layer_x3(k);
        let td = chart.position(y).dot(&q);
        let frame = chart.eval_frame(y)?;
        let offset = td + (eps * x3) * frame.normal().dot(&q);
        if offset < 0.0 {
            return Err(FemError::InfeasibleReference {
                node: n,
                value: offset,
            });
        }
        if mesh.is_clamped_node(n) {
            continue;
        }
        let sf = eval_shell_frame(&frame, eps, x3)?;
        rows.push(ConstraintRow {
            node: n,
            dofs: space.node_value_dofs(n),
            coeffs: [
                sf.g_con[0].dot(&q),
                sf.g_con[1].dot(&q),
                sf.g_con[2].dot(&q),
            ],
            bound: -offset,
        });
    }
    Ok(rows)
}

/// Discrete transverse averaging: maps 3D nodal vectors to 2D nodal
/// vectors columnwise with Simpson weights (exact through cubics in x3).
pub struct AveragingMap {
    nz: usize,
    n2_nodes: usize,
    /// Per-layer weights including the ½ average factor; they sum to 1.
    weights: Vec<f64>,
}

impl AveragingMap {
    pub fn new(mesh: &Mesh3D) -> Self {
        let nz = mesh.nz;
        let h = 2.0 / nz as f64;
        let mut weights = vec![0.0; nz + 1];
        for (k, w) in weights.iter_mut().enumerate() {
            let simpson = if k == 0 || k == nz {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            *w = 0.5 * simpson * h / 3.0;
        }
        AveragingMap {
            nz,
            n2_nodes: mesh.base.n_nodes(),
            weights,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Applies the map to a full 3D dof vector, producing a full 2D
    /// (membrane-space) dof vector.
    pub fn apply(&self, full3: &[f64]) -> Vec<f64> {
        assert_eq!(full3.len(), self.n2_nodes * (self.nz + 1) * 3);
        let mut out = vec![0.0; self.n2_nodes * 3];
        for n2 in 0..self.n2_nodes {
            for comp in 0..3 {
                let mut acc = 0.0;
                for (k, w) in self.weights.iter().enumerate() {
                    let node3 = n2 * (self.nz + 1) + k;
                    acc += w * full3[node3 * 3 + comp];
                }
                out[n2 * 3 + comp] = acc;
            }
        }
        out
    }
}

/// Gram matrix of the slab seminorm
/// `‖∂_3 v‖²_{L²(Ω)} + |v̄|²_M` on full 3D dofs: the transverse-gradient
/// form plus the averaged membrane-seminorm pairing.
pub fn seminorm_gram_3d(mesh: &Mesh3D, chart: &Chart) -> Result<SparseSym, FemError> {
    let d = transverse_grad_gram(mesh)?;
    let g2 = seminorm_gram(&mesh.base, chart, SpaceKind::Membrane2D)?;
    let avg = AveragingMap::new(mesh);
    let nz = mesh.nz;
    let n_full = mesh.n_nodes() * 3;
    let mut trip = TripletSym::new(n_full);
    for (i, j, v) in d.upper_triplets() {
        trip.push(i, j, v);
    }
    // PᵀG₂P: iterate the full 2D pattern, push each unordered 3D pair once
    for a2 in 0..g2.dim() {
        let (cols, vals) = g2.row(a2);
        let (na, ca) = (a2 / 3, a2 % 3);
        for (c, g) in cols.iter().zip(vals) {
            let b2 = *c as usize;
            let (nb, cb) = (b2 / 3, b2 % 3);
            for k in 0..=nz {
                let ia = (na * (nz + 1) + k) * 3 + ca;
                for l in 0..=nz {
                    let ib = (nb * (nz + 1) + l) * 3 + cb;
                    if ia <= ib {
                        trip.push(ia, ib, g * avg.weights[k] * avg.weights[l]);
                    }
                }
            }
        }
    }
    Ok(trip.into_csr())
}

/// A sparse matrix reduced to the free dofs of a space.
pub fn reduce_matrix(full: &SparseSym, space: &DiscreteSpace) -> SparseSym {
    let mut trip = TripletSym::new(space.n_free());
    for (i, j, v) in full.upper_triplets() {
        if let (Some(fi), Some(fj)) = (space.free_of_full[i], space.free_of_full[j]) {
            trip.push(fi, fj, v);
        }
    }
    trip.into_csr()
}

fn reduce_rows(
    rows: Vec<ConstraintRow>,
    space: &DiscreteSpace,
) -> Result<ConstraintSet, FemError> {
    let mapped: Vec<ConstraintRow> = rows
        .into_iter()
        .map(|r| ConstraintRow {
            node: r.node,
            dofs: r.dofs.map(|d| {
                space.free_of_full[d].expect("constraint on a clamped dof")
            }),
            coeffs: r.coeffs,
            bound: r.bound,
        })
        .collect();
    Ok(ConstraintSet::new(mapped)?)
}

/// A fully assembled constrained quadratic model over the free dofs.
pub struct AssembledSystem {
    pub space: DiscreteSpace,
    pub stiffness: SparseSym,
    pub load: Vec<f64>,
    pub constraints: ConstraintSet,
    pub gram_m: SparseSym,
}

impl AssembledSystem {
    pub fn qp(&self) -> crate::solver::QuadraticProgram {
        crate::solver::QuadraticProgram {
            h: self.stiffness.clone(),
            f: self.load.clone(),
            constraints: self.constraints.clone(),
        }
    }
}

/// Discrete membrane limit model: membrane stiffness, `φ^{αβ}` load, and
/// midsurface confinement constraints on the membrane space.
pub fn assemble_limit_system(
    mesh: &Mesh2D,
    chart: &Chart,
    lame: Lame,
    force: &ForceField,
    hs: &HalfSpace,
) -> Result<AssembledSystem, FemError> {
    let space = DiscreteSpace::membrane2d(mesh);
    let stiffness_full = assemble_membrane_form(mesh, chart, lame, SpaceKind::Membrane2D)?;
    let phi = phi_from_force(force, lame);
    let load_full = assemble_membrane_load(mesh, chart, SpaceKind::Membrane2D, &phi)?;
    let rows = assemble_constraints_2d(mesh, chart, hs, &space)?;
    let gram_full = seminorm_gram(mesh, chart, SpaceKind::Membrane2D)?;
    Ok(AssembledSystem {
        stiffness: reduce_matrix(&stiffness_full, &space),
        load: space.free_vector(&load_full),
        constraints: reduce_rows(rows, &space)?,
        gram_m: reduce_matrix(&gram_full, &space),
        space,
    })
}

/// Koiter model at thickness ε: stiffness `ε M + (ε³/3) F`, load `ε L_M`,
/// midsurface constraints on the Koiter space.
pub fn assemble_koiter_system(
    mesh: &Mesh2D,
    chart: &Chart,
    lame: Lame,
    eps: f64,
    phi: &PhiField,
    hs: &HalfSpace,
) -> Result<AssembledSystem, FemError> {
    let space = DiscreteSpace::koiter2d(mesh);
    let membrane = assemble_membrane_form(mesh, chart, lame, SpaceKind::Koiter2D)?;
    let flexural = assemble_flexural_form(mesh, chart, lame)?;
    let mut trip = TripletSym::new(space.n_full());
    for (i, j, v) in membrane.upper_triplets() {
        trip.push(i, j, eps * v);
    }
    let bend = eps * eps * eps / 3.0;
    for (i, j, v) in flexural.upper_triplets() {
        trip.push(i, j, bend * v);
    }
    let stiffness_full = trip.into_csr();
    let mut load_full = assemble_membrane_load(mesh, chart, SpaceKind::Koiter2D, phi)?;
    for v in load_full.iter_mut() {
        *v *= eps;
    }
    let rows = assemble_constraints_2d(mesh, chart, hs, &space)?;
    let gram_full = seminorm_gram(mesh, chart, SpaceKind::Koiter2D)?;
    Ok(AssembledSystem {
        stiffness: reduce_matrix(&stiffness_full, &space),
        load: space.free_vector(&load_full),
        constraints: reduce_rows(rows, &space)?,
        gram_m: reduce_matrix(&gram_full, &space),
        space,
    })
}

/// Scaled 3D shell model at thickness ε with admissible forces `F^{ij}`.
pub fn assemble_3d_system(
    mesh: &Mesh3D,
    chart: &Chart,
    lame: Lame,
    eps: f64,
    force: &ForceField,
    hs: &HalfSpace,
) -> Result<AssembledSystem, FemError> {
    let space = DiscreteSpace::volume3d(mesh);
    let stiffness_full = assemble_3d_stiffness(mesh, chart, lame, eps)?;
    let load_full = assemble_3d_load(mesh, chart, lame, eps, force)?;
    let rows = assemble_constraints_3d(mesh, chart, hs, eps, &space)?;
    let gram_full = seminorm_gram_3d(mesh, chart)?;
    Ok(AssembledSystem {
        stiffness: reduce_matrix(&stiffness_full, &space),
        load: space.free_vector(&load_full),
        constraints: reduce_rows(rows, &space)?,
        gram_m: reduce_matrix(&gram_full, &space),
        space,
    })
}

/// Nodal interpolation of an analytic midsurface field onto the membrane
/// space (full dof vector).
pub fn interpolate_membrane(mesh: &Mesh2D, f: impl Fn([f64; 2]) -> [f64; 3]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_nodes() * 3];
    for n in 0..mesh.n_nodes() {
        let v = f(mesh.node_coord(n));
        out[3 * n..3 * n + 3].copy_from_slice(&v);
    }
    out
}

/// Nodal interpolation onto the Koiter space: per node
/// `(η_1, η_2, w, ∂_1 w, ∂_2 w, ∂_12 w)`.
pub fn interpolate_koiter(mesh: &Mesh2D, f: impl Fn([f64; 2]) -> [f64; 6]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_nodes() * 6];
    for n in 0..mesh.n_nodes() {
        let v = f(mesh.node_coord(n));
        out[6 * n..6 * n + 6].copy_from_slice(&v);
    }
    out
}

/// Nodal interpolation of an analytic slab field onto the 3D space.
pub fn interpolate_volume(mesh: &Mesh3D, f: impl Fn([f64; 3]) -> [f64; 3]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_nodes() * 3];
    for n in 0..mesh.n_nodes() {
        let v = f(mesh.node_coord(n));
        out[3 * n..3 * n + 3].copy_from_slice(&v);
    }
    out
}

/// A discrete midsurface displacement field (full dof vector on one of the
/// 2D spaces), sampled for strain evaluation at quadrature points.
#[derive(Debug, Clone)]
pub struct DiscreteField2D {
    pub kind: SpaceKind,
    pub values: Vec<f64>,
}

impl DiscreteField2D {
    pub fn sample(&self, mesh: &Mesh2D, cell: usize, s: f64, t: f64) -> SurfaceDisplacementSample {
        let h = mesh.cell_size();
        let samples = local_samples_2d(self.kind, s, t, h[0], h[1]);
        let dofs = local_dofs_2d(mesh, self.kind, cell);
        let mut acc = SurfaceDisplacementSample::zero();
        for (sm, d) in samples.iter().zip(dofs) {
            let c = self.values[d];
            for i in 0..3 {
                acc.eta[i] += c * sm.eta[i];
                acc.grad[i][0] += c * sm.grad[i][0];
                acc.grad[i][1] += c * sm.grad[i][1];
            }
            acc.hess3 += c * sm.hess3;
        }
        acc
    }
}

/// Membrane-seminorm distance
/// `{Σ_{αβ} ‖γ_{αβ}(a) − γ_{αβ}(b)‖²_{L²(ω)}}^{1/2}` between two discrete
/// fields (possibly on different 2D spaces over the same mesh).
pub fn membrane_seminorm_gap(
    mesh: &Mesh2D,
    chart: &Chart,
    a: &DiscreteField2D,
    b: &DiscreteField2D,
    nquad: usize,
) -> Result<f64, FemError> {
    let h = mesh.cell_size();
    let rule = gauss_unit(nquad);
    let cells: Vec<Result<f64, FemError>> = par::map_indexed(mesh.n_cells(), |cell| {
        let origin = mesh.cell_origin(cell);
        let mut acc = 0.0;
        for (s, ws) in &rule {
            for (t, wt) in &rule {
                let y = [origin[0] + s * h[0], origin[1] + t * h[1]];
                let frame = chart.eval_frame(y)?;
                let ga = gamma(&frame, &a.sample(mesh, cell, *s, *t));
                let gb = gamma(&frame, &b.sample(mesh, cell, *s, *t));
                let d = ga - gb;
                let v = d[(0, 0)].powi(2) + d[(1, 1)].powi(2) + 2.0 * d[(0, 1)].powi(2);
                acc += ws * wt * h[0] * h[1] * v;
            }
        }
        Ok(acc)
    });
    let mut total = 0.0;
    for c in cells {
        total += c?;
    }
    Ok(total.sqrt())
}

/// Smallest eigenvalue of a reduced SPD Gram matrix (identity pencil);
/// the first-kind test requires it strictly positive.
pub fn smallest_gram_eigenvalue(gram: &SparseSym) -> Result<f64, crate::sparse::LinAlgError> {
    let n = gram.dim();
    let mut trip = TripletSym::new(n);
    for i in 0..n {
        trip.push(i, i, 1.0);
    }
    crate::sparse::smallest_generalized_eig(gram, &trip.into_csr(), 42, 1e-10, 5000)
}
