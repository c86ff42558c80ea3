//! Constructive density operators on discrete midsurface fields:
//! amplitude truncation, boundary cutoff, and mollification over a
//! reflection extension, plus the strip Poincaré ratio check.
//!
//! The three operators compose into the pipeline that approximates a
//! feasible finite-energy field by smooth fields that are feasible, vanish
//! near the clamped boundary part, and stay uniformly bounded — each step
//! preserves the nodal confinement inequality (the cutoff with an explicit
//! `d/k` margin, the mollification up to a modulus-of-continuity term that
//! is reported, not forced).

use nalgebra::Vector3;
use thiserror::Error;

use crate::fem::mesh::Mesh2D;
use crate::fem::quadrature::gauss_unit;
use crate::fem::space::bfs_2d;
use crate::geometry::{Chart, GeometryError, HalfSpace, SurfaceFrame};

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("mollifier radius exceeds the reflected strip width: need {need} pad cells, have {have}")]
    ExtensionTooSmall { need: usize, have: usize },
    #[error("field carries a non-finite value at node {0}")]
    NonFiniteValue(usize),
    #[error("clamped node {0} carries a nonzero value")]
    ClampedNotZero(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Nodal midsurface field with a per-node frame cache.
#[derive(Clone)]
pub struct DiscreteSurfaceField {
    pub mesh: Mesh2D,
    /// Covariant components, 3 per node.
    pub values: Vec<f64>,
    frames: std::sync::Arc<Vec<SurfaceFrame>>,
    positions: std::sync::Arc<Vec<Vector3<f64>>>,
}

impl DiscreteSurfaceField {
    pub fn new(mesh: &Mesh2D, chart: &Chart, values: Vec<f64>) -> Result<Self, DensityError> {
        assert_eq!(values.len(), mesh.n_nodes() * 3);
        for n in 0..mesh.n_nodes() {
            for c in 0..3 {
                let v = values[3 * n + c];
                if !v.is_finite() {
                    return Err(DensityError::NonFiniteValue(n));
                }
                if mesh.is_clamped_node(n) && v != 0.0 {
                    return Err(DensityError::ClampedNotZero(n));
                }
            }
        }
        let mut frames = Vec::with_capacity(mesh.n_nodes());
        let mut positions = Vec::with_capacity(mesh.n_nodes());
        for n in 0..mesh.n_nodes() {
            let y = mesh.node_coord(n);
            frames.push(chart.eval_frame(y)?);
            positions.push(chart.position(y));
        }
        Ok(DiscreteSurfaceField {
            mesh: mesh.clone(),
            values,
            frames: std::sync::Arc::new(frames),
            positions: std::sync::Arc::new(positions),
        })
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        DiscreteSurfaceField {
            mesh: self.mesh.clone(),
            values,
            frames: std::sync::Arc::clone(&self.frames),
            positions: std::sync::Arc::clone(&self.positions),
        }
    }

    pub fn frame(&self, n: usize) -> &SurfaceFrame {
        &self.frames[n]
    }

    pub fn node_value(&self, n: usize) -> [f64; 3] {
        [
            self.values[3 * n],
            self.values[3 * n + 1],
            self.values[3 * n + 2],
        ]
    }

    /// Physical displacement vector `η_i a^i` at a node.
    pub fn displacement(&self, n: usize) -> Vector3<f64> {
        let v = self.node_value(n);
        let f = &self.frames[n];
        v[0] * f.a_con[0] + v[1] * f.a_con[1] + v[2] * f.a_con[2]
    }

    /// Max over nodes of `|η_i a^i|`.
    pub fn sup_displacement(&self) -> f64 {
        (0..self.mesh.n_nodes())
            .map(|n| self.displacement(n).norm())
            .fold(0.0, f64::max)
    }

    /// Min over nodes of the confinement value `(θ + η_i a^i) · q`.
    pub fn confinement_min(&self, hs: &HalfSpace) -> f64 {
        let q = hs.direction();
        (0..self.mesh.n_nodes())
            .map(|n| (self.positions[n] + self.displacement(n)).dot(&q))
            .fold(f64::INFINITY, f64::min)
    }

    /// Discrete H¹ distance to another field on the same mesh (bilinear
    /// interpolation of the nodal components).
    pub fn h1_distance(&self, other: &DiscreteSurfaceField) -> f64 {
        let mesh = &self.mesh;
        let h = mesh.cell_size();
        let rule = gauss_unit(2);
        let mut acc = 0.0;
        for cell in 0..mesh.n_cells() {
            let nodes = mesh.cell_nodes(cell);
            for (s, ws) in &rule {
                for (t, wt) in &rule {
                    let (vals, grads) = crate::fem::space::q1_2d(*s, *t, h[0], h[1]);
                    let w = ws * wt * h[0] * h[1];
                    for comp in 0..3 {
                        let mut d = 0.0;
                        let mut g = [0.0; 2];
                        for (k, &node) in nodes.iter().enumerate() {
                            let diff =
                                self.values[3 * node + comp] - other.values[3 * node + comp];
                            d += vals[k] * diff;
                            g[0] += grads[k][0] * diff;
                            g[1] += grads[k][1] * diff;
                        }
                        acc += w * (d * d + g[0] * g[0] + g[1] * g[1]);
                    }
                }
            }
        }
        acc.sqrt()
    }
}

/// Amplitude truncation: where `|η_j a^j| > k` the node value is rescaled
/// to length exactly `k`; feasible inputs stay feasible.
pub fn truncate(field: &DiscreteSurfaceField, k: u32) -> DiscreteSurfaceField {
    let kf = k as f64;
    let mut out = field.values.clone();
    for n in 0..field.mesh.n_nodes() {
        let m = field.displacement(n).norm();
        if m > kf {
            let scale = kf / m;
            for c in 0..3 {
                out[3 * n + c] *= scale;
            }
        }
    }
    field.with_values(out)
}

/// Piecewise-linear boundary cutoff profile in the distance to the clamped
/// part: 0 within `1/k`, ramps to 1 by `2/k`.
fn cutoff_profile(dist: f64, k: u32) -> f64 {
    let kf = k as f64;
    if dist <= 1.0 / kf {
        0.0
    } else if dist <= 2.0 / kf {
        kf * dist - 1.0
    } else {
        1.0
    }
}

/// Boundary cutoff: multiplies the field by `(1 − 1/k) f^{(k)}(dist)`,
/// forcing it to vanish within `1/k` of the clamped part. Feasible inputs
/// come out with confinement margin at least `d/k`.
pub fn cutoff(field: &DiscreteSurfaceField, k: u32) -> DiscreteSurfaceField {
    let kf = k as f64;
    let mut out = field.values.clone();
    for n in 0..field.mesh.n_nodes() {
        let d = field.mesh.dist_to_clamped(field.mesh.node_coord(n));
        let factor = (1.0 - 1.0 / kf) * cutoff_profile(d, k);
        for c in 0..3 {
            out[3 * n + c] *= factor;
        }
    }
    field.with_values(out)
}

/// Even reflection of the nodal data across the free edges and zero
/// extension across the clamped ones, on a grid padded by `pad` cells per
/// side. Carries the matching contravariant-basis dot products
/// `â^i(ŷ)·q = a^i(y)·q` for antipodal pairs.
pub struct ReflectionExtension {
    pub pad: usize,
    nx: usize,
    /// `(η_1, η_2, η_3)` per extended node, row-major over
    /// `(nx + 2 pad + 1) × (ny + 2 pad + 1)`.
    values: Vec<[f64; 3]>,
    /// `a^i · q` per extended node.
    aiq: Vec<[f64; 3]>,
}

impl ReflectionExtension {
    pub fn build(field: &DiscreteSurfaceField, hs: &HalfSpace, pad: usize) -> Self {
        let mesh = &field.mesh;
        let (nx, ny) = (mesh.nx, mesh.ny);
        let q = hs.direction();
        let width = nx + 2 * pad + 1;
        let height = ny + 2 * pad + 1;
        let mut values = vec![[0.0; 3]; width * height];
        let mut aiq = vec![[0.0; 3]; width * height];
        for jj in 0..height {
            for ii in 0..width {
                let ie = ii as isize - pad as isize;
                let je = jj as isize - pad as isize;
                let (i, crossed_i) = reflect_index(ie, nx);
                let (j, crossed_j) = reflect_index(je, ny);
                // zero across clamped edges, even reflection otherwise
                let mut zero = false;
                if let Some(high) = crossed_i {
                    let e = if high {
                        crate::geometry::Edge::Right
                    } else {
                        crate::geometry::Edge::Left
                    };
                    zero |= mesh.clamped_edges.contains(&e);
                }
                if let Some(high) = crossed_j {
                    let e = if high {
                        crate::geometry::Edge::Top
                    } else {
                        crate::geometry::Edge::Bottom
                    };
                    zero |= mesh.clamped_edges.contains(&e);
                }
                let n = mesh.node_index(i, j);
                let dst = ii + width * jj;
                if !zero {
                    values[dst] = field.node_value(n);
                }
                let f = &field.frames[n];
                aiq[dst] = [
                    f.a_con[0].dot(&q),
                    f.a_con[1].dot(&q),
                    f.a_con[2].dot(&q),
                ];
            }
        }
        let _ = ny;
        ReflectionExtension {
            pad,
            nx,
            values,
            aiq,
        }
    }

    fn index(&self, ie: isize, je: isize) -> usize {
        let ii = (ie + self.pad as isize) as usize;
        let jj = (je + self.pad as isize) as usize;
        ii + (self.nx + 2 * self.pad + 1) * jj
    }

    /// Extended field value at grid index `(ie, je)` (original grid
    /// indices, possibly negative or beyond the mesh).
    pub fn value(&self, ie: isize, je: isize) -> [f64; 3] {
        self.values[self.index(ie, je)]
    }

    /// Extended `a^i·q` products at a grid index.
    pub fn basis_dot_q(&self, ie: isize, je: isize) -> [f64; 3] {
        self.aiq[self.index(ie, je)]
    }

    fn max_pad(&self) -> usize {
        self.pad
    }
}

/// Maps an out-of-range grid index into the mesh by even reflection;
/// returns the mapped index and which side was crossed (`Some(false)` for
/// the low side, `Some(true)` for the high side).
fn reflect_index(i: isize, n: usize) -> (usize, Option<bool>) {
    if i < 0 {
        ((-i) as usize, Some(false))
    } else if i as usize > n {
        (2 * n - i as usize, Some(true))
    } else {
        (i as usize, None)
    }
}

/// Compactly supported smooth bump, normalized over the discrete stencil.
fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// Discrete mollification with a bump of radius `1/k` over the reflection
/// extension. The radius is snapped to whole cells per direction and the
/// discrete weights renormalized to sum to one, so constants pass through
/// unchanged.
pub fn mollify(
    field: &DiscreteSurfaceField,
    ext: &ReflectionExtension,
    k: u32,
) -> Result<DiscreteSurfaceField, DensityError> {
    let mesh = &field.mesh;
    let h = mesh.cell_size();
    let r = 1.0 / k as f64;
    let rx = ((r / h[0]).round() as usize).max(1);
    let ry = ((r / h[1]).round() as usize).max(1);
    let need = rx.max(ry);
    if need > ext.max_pad() {
        return Err(DensityError::ExtensionTooSmall {
            need,
            have: ext.max_pad(),
        });
    }
    // stencil weights on the grid
    let mut weights = Vec::with_capacity((2 * rx + 1) * (2 * ry + 1));
    let mut total = 0.0;
    for b in -(ry as isize)..=(ry as isize) {
        for a in -(rx as isize)..=(rx as isize) {
            let z1 = a as f64 / rx as f64;
            let z2 = b as f64 / ry as f64;
            let w = bump(z1 * z1 + z2 * z2);
            weights.push((a, b, w));
            total += w;
        }
    }
    for (_, _, w) in weights.iter_mut() {
        *w /= total;
    }
    let mut out = vec![0.0; field.values.len()];
    for n in 0..mesh.n_nodes() {
        let (i, j) = mesh.node_ij(n);
        let mut acc = [0.0; 3];
        for (a, b, w) in &weights {
            let v = ext.value(i as isize - a, j as isize - b);
            for c in 0..3 {
                acc[c] += w * v[c];
            }
        }
        // mesh-clamped nodes stay exactly zero
        if mesh.is_clamped_node(n) {
            acc = [0.0; 3];
        }
        out[3 * n..3 * n + 3].copy_from_slice(&acc);
    }
    Ok(field.with_values(out))
}

/// A scalar bicubic (Hermite) trial field on the mesh, 4 dofs per node.
pub struct BicubicScalar {
    pub dofs: Vec<f64>,
}

/// Worst ratio `k ‖ξ‖_{L²(strip)} / ‖ξ‖_{H¹(strip)}` over the trial
/// fields, where the strip is `{dist(y, γ0) < 2/k}`. For fields vanishing
/// on the clamped part the ratio is bounded by √2 up to quadrature error.
pub fn strip_poincare_check(mesh: &Mesh2D, k: u32, trials: &[BicubicScalar]) -> f64 {
    let h = mesh.cell_size();
    let rule = gauss_unit(4);
    let strip = 2.0 / k as f64;
    let mut worst: f64 = 0.0;
    for trial in trials {
        let mut l2 = 0.0;
        let mut h1 = 0.0;
        for cell in 0..mesh.n_cells() {
            let nodes = mesh.cell_nodes(cell);
            let origin = mesh.cell_origin(cell);
            for (s, ws) in &rule {
                for (t, wt) in &rule {
                    let y = [origin[0] + s * h[0], origin[1] + t * h[1]];
                    if mesh.dist_to_clamped(y) >= strip {
                        continue;
                    }
                    let shapes = bfs_2d(*s, *t, h[0], h[1]);
                    let mut val = 0.0;
                    let mut g = [0.0; 2];
                    for (kn, &node) in nodes.iter().enumerate() {
                        for d in 0..4 {
                            let c = trial.dofs[4 * node + d];
                            let sh = &shapes[4 * kn + d];
                            val += c * sh.value;
                            g[0] += c * sh.grad[0];
                            g[1] += c * sh.grad[1];
                        }
                    }
                    let w = ws * wt * h[0] * h[1];
                    l2 += w * val * val;
                    h1 += w * (val * val + g[0] * g[0] + g[1] * g[1]);
                }
            }
        }
        if h1 > 0.0 {
            worst = worst.max(k as f64 * (l2 / h1).sqrt());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BuiltinChart, Edge, Rect};
    use approx::assert_relative_eq;
    use rand::{Rng as _, SeedableRng};

    fn shifted_plate() -> Chart {
        Chart::builtin(
            BuiltinChart::Plate,
            Rect::new(0.0, 1.0, 0.0, 1.0),
            &[Edge::Bottom],
        )
        .unwrap()
        .translated(Vector3::new(0.0, 0.0, 10.0))
    }

    fn plate_mesh(n: usize) -> Mesh2D {
        Mesh2D::build(Rect::new(0.0, 1.0, 0.0, 1.0), n, n, &[Edge::Bottom]).unwrap()
    }

    fn smooth_clamped_field(
        mesh: &Mesh2D,
        chart: &Chart,
        amp: [f64; 3],
    ) -> DiscreteSurfaceField {
        let ly = mesh.bounds.y2.1 - mesh.bounds.y2.0;
        let y20 = mesh.bounds.y2.0;
        let vals = crate::fem::interpolate_membrane(mesh, |y| {
            let s = (std::f64::consts::FRAC_PI_2 * (y[1] - y20) / ly).sin();
            [
                amp[0] * s * (y[0]).cos(),
                amp[1] * s,
                amp[2] * s * (2.0 * y[0]).sin(),
            ]
        });
        DiscreteSurfaceField::new(mesh, chart, vals).unwrap()
    }

    #[test]
    fn truncate_identity_frame_cases() {
        // plate frames are orthonormal, so |η_j a^j| is the Euclidean norm
        let mesh = plate_mesh(4);
        let chart = shifted_plate();
        let mut vals = vec![0.0; mesh.n_nodes() * 3];
        // an interior node with η = (3, 4, 0): |η a| = 5
        let node = mesh.node_index(2, 2);
        vals[3 * node] = 3.0;
        vals[3 * node + 1] = 4.0;
        let field = DiscreteSurfaceField::new(&mesh, &chart, vals).unwrap();
        let same = truncate(&field, 5);
        assert_eq!(same.node_value(node), [3.0, 4.0, 0.0]);
        let cut = truncate(&field, 1);
        let v = cut.node_value(node);
        assert_relative_eq!(v[0], 0.6, epsilon = 1e-15);
        assert_relative_eq!(v[1], 0.8, epsilon = 1e-15);
        // zero stays zero
        let zero =
            DiscreteSurfaceField::new(&mesh, &chart, vec![0.0; mesh.n_nodes() * 3]).unwrap();
        assert!(truncate(&zero, 3).values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn truncate_bounds_and_preserves_feasibility() {
        let mesh = plate_mesh(8);
        let chart = shifted_plate();
        let hs = HalfSpace::new(Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let field = smooth_clamped_field(&mesh, &chart, [6.0, -4.0, -8.0]);
        assert!(field.confinement_min(&hs) >= 0.0, "input must be feasible");
        for k in [1u32, 2, 4] {
            let out = truncate(&field, k);
            assert!(out.sup_displacement() <= k as f64 + 1e-12);
            assert!(out.confinement_min(&hs) >= -1e-12);
        }
    }

    #[test]
    fn cutoff_profile_cases() {
        let mesh = plate_mesh(8);
        let chart = shifted_plate();
        let field = smooth_clamped_field(&mesh, &chart, [1.0, 1.0, 1.0]);
        let k = 4u32;
        let out = cutoff(&field, k);
        for n in 0..mesh.n_nodes() {
            let d = mesh.dist_to_clamped(mesh.node_coord(n));
            let vin = field.node_value(n);
            let vout = out.node_value(n);
            let expect = if d <= 0.25 {
                0.0
            } else if d <= 0.5 {
                (1.0 - 0.25) * (4.0 * d - 1.0)
            } else {
                1.0 - 0.25
            };
            for c in 0..3 {
                assert_relative_eq!(vout[c], expect * vin[c], epsilon = 1e-14);
            }
        }
        // the three branch representatives
        assert_eq!(cutoff_profile(1.0 / (2.0 * k as f64), k), 0.0);
        assert_relative_eq!(
            cutoff_profile(3.0 / (2.0 * k as f64), k),
            0.5,
            epsilon = 1e-15
        );
        assert_eq!(cutoff_profile(0.9, k), 1.0);
    }

    #[test]
    fn cutoff_margin_bound() {
        let mesh = plate_mesh(16);
        let chart = shifted_plate();
        let hs = HalfSpace::new(Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let field = smooth_clamped_field(&mesh, &chart, [5.0, 3.0, -9.5]);
        assert!(field.confinement_min(&hs) >= 0.0);
        let d = chart.confinement_margin(&hs, (mesh.nx, mesh.ny));
        for k in [4u32, 8, 16, 32] {
            let out = cutoff(&field, k);
            assert!(
                out.confinement_min(&hs) >= d / k as f64 - 1e-10,
                "margin at k = {k}: {} < {}",
                out.confinement_min(&hs),
                d / k as f64
            );
        }
    }

    #[test]
    fn reflection_extension_matches_rule() {
        let mesh = plate_mesh(6);
        let chart = shifted_plate();
        let hs = HalfSpace::new(Vector3::new(0.1, -0.2, 0.97)).unwrap();
        let field = smooth_clamped_field(&mesh, &chart, [1.0, -0.5, 0.7]);
        let ext = ReflectionExtension::build(&field, &hs, 3);
        // restriction equals the original
        for n in 0..mesh.n_nodes() {
            let (i, j) = mesh.node_ij(n);
            assert_eq!(ext.value(i as isize, j as isize), field.node_value(n));
        }
        // antipodal matching across the free top edge: ŷ = (i, ny + m) maps
        // to y = (i, ny − m)
        for m in 1..=3isize {
            for i in 0..=6isize {
                let inner = mesh.node_index(i as usize, (6 - m) as usize);
                assert_eq!(ext.value(i, 6 + m), field.node_value(inner));
                let f = field.frame(inner);
                let q = hs.direction();
                let expect = [
                    f.a_con[0].dot(&q),
                    f.a_con[1].dot(&q),
                    f.a_con[2].dot(&q),
                ];
                assert_eq!(ext.basis_dot_q(i, 6 + m), expect);
            }
        }
        // zero extension across the clamped bottom edge
        for m in 1..=3isize {
            for i in 0..=6isize {
                assert_eq!(ext.value(i, -m), [0.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn mollify_preserves_constants_away_from_boundary() {
        let mesh = plate_mesh(12);
        let chart = shifted_plate();
        let hs = HalfSpace::new(Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let vals = crate::fem::interpolate_membrane(&mesh, |y| {
            if y[1] > 1e-12 {
                [2.5, -1.0, 0.5]
            } else {
                [0.0; 3]
            }
        });
        let field = DiscreteSurfaceField::new(&mesh, &chart, vals).unwrap();
        let ext = ReflectionExtension::build(&field, &hs, 4);
        let k = 6u32; // radius 1/6 → 2 cells on this mesh
        let out = mollify(&field, &ext, k).unwrap();
        // far from the bottom edge the constant passes through exactly
        let node = mesh.node_index(6, 9);
        let v = out.node_value(node);
        assert_relative_eq!(v[0], 2.5, epsilon = 1e-12);
        assert_relative_eq!(v[1], -1.0, epsilon = 1e-12);
        assert_relative_eq!(v[2], 0.5, epsilon = 1e-12);
        // zero maps to zero
        let zero =
            DiscreteSurfaceField::new(&mesh, &chart, vec![0.0; mesh.n_nodes() * 3]).unwrap();
        let zext = ReflectionExtension::build(&zero, &hs, 4);
        let zout = mollify(&zero, &zext, k).unwrap();
        assert!(zout.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mollify_rejects_small_extension() {
        let mesh = plate_mesh(12);
        let chart = shifted_plate();
        let hs = HalfSpace::new(Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let field = smooth_clamped_field(&mesh, &chart, [1.0, 0.0, 0.0]);
        let ext = ReflectionExtension::build(&field, &hs, 1);
        assert!(matches!(
            mollify(&field, &ext, 2),
            Err(DensityError::ExtensionTooSmall { .. })
        ));
    }

    #[test]
    fn pipeline_keeps_feasibility_and_zero_trace() {
        let mesh = plate_mesh(16);
        let chart = shifted_plate();
        let hs = HalfSpace::new(Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let k = 8u32;
        let field = smooth_clamped_field(&mesh, &chart, [1.0, 2.0, -1.5]);
        let t = truncate(&field, 4);
        let c = cutoff(&t, k);
        let ext = ReflectionExtension::build(&c, &hs, 4);
        let m = mollify(&c, &ext, k).unwrap();
        for f in [&t, &c, &m] {
            assert!(f.confinement_min(&hs) >= -1e-10);
        }
        for n in 0..mesh.n_nodes() {
            if mesh.dist_to_clamped(mesh.node_coord(n)) < 1e-12 {
                assert_eq!(m.node_value(n), [0.0; 3]);
            }
        }
    }

    #[test]
    fn strip_poincare_linear_profile() {
        // ξ = dist(y, γ0): the 1D integrals over the strip of width 2/k
        // give ratio = (2/√3) (1 + 4/(3k²))^{-1/2}
        let mesh = plate_mesh(32);
        let k = 4u32;
        let mut dofs = vec![0.0; mesh.n_nodes() * 4];
        for n in 0..mesh.n_nodes() {
            let y = mesh.node_coord(n);
            dofs[4 * n] = y[1];
            dofs[4 * n + 2] = 1.0; // ∂2 ξ = 1
        }
        let ratio = strip_poincare_check(&mesh, k, &[BicubicScalar { dofs }]);
        let kf = k as f64;
        let exact = (2.0 / 3.0f64.sqrt()) / (1.0 + 4.0 / (3.0 * kf * kf)).sqrt();
        assert_relative_eq!(ratio, exact, epsilon = 1e-3);
        assert!(ratio <= 2.0f64.sqrt());
    }

    #[test]
    fn strip_poincare_random_fields_below_bound() {
        let mesh = plate_mesh(24);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut trials = Vec::new();
        for _ in 0..30 {
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
            trials.push(BicubicScalar { dofs });
        }
        for k in [4u32, 8, 16] {
            let worst = strip_poincare_check(&mesh, k, &trials);
            assert!(
                worst <= 2.0f64.sqrt() * 1.05,
                "k = {k}: ratio {worst} exceeds √2 + 5%"
            );
        }
        // an empty trial set reports zero by convention
        assert_eq!(strip_poincare_check(&mesh, 4, &[]), 0.0);
    }

    #[test]
    fn pipeline_h1_distance_decreases_in_k() {
        let mesh = plate_mesh(64);
        let chart = shifted_plate();
        let hs = HalfSpace::new(Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let field = smooth_clamped_field(&mesh, &chart, [0.8, -0.5, 1.2]);
        let mut last = f64::INFINITY;
        for k in [4u32, 8, 16, 32] {
            let t = truncate(&field, k);
            let c = cutoff(&t, k);
            let ext = ReflectionExtension::build(&c, &hs, mesh.nx / 2);
            let m = mollify(&c, &ext, k).unwrap();
            let d = m.h1_distance(&field);
            assert!(
                d <= last * 1.05,
                "H¹ distance increased at k = {k}: {d} > {last}"
            );
            last = d;
        }
    }

    #[test]
    fn field_validation() {
        let mesh = plate_mesh(4);
        let chart = shifted_plate();
        let mut vals = vec![0.0; mesh.n_nodes() * 3];
        vals[0] = 1.0; // node 0 is clamped (bottom edge)
        assert!(matches!(
            DiscreteSurfaceField::new(&mesh, &chart, vals),
            Err(DensityError::ClampedNotZero(0))
        ));
        let mut vals = vec![0.0; mesh.n_nodes() * 3];
        vals[3 * mesh.node_index(2, 2)] = f64::NAN;
        assert!(matches!(
            DiscreteSurfaceField::new(&mesh, &chart, vals),
            Err(DensityError::NonFiniteValue(_))
        ));
    }
}
