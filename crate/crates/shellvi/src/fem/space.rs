//! Discrete spaces, dof maps, and shape functions.
//!
//! Three element families cover the models assembled here:
//! * `Membrane2D`: bilinear `(η_1, η_2, η_3)`, 3 dofs per node;
//! * `Koiter2D`: bilinear `(η_1, η_2)` plus a Hermite-bicubic transverse
//!   component with dofs `(w, ∂_1 w, ∂_2 w, ∂_12 w)` per node, 6 in total —
//!   the transverse interpolation is C¹ across cells, as the flexural term
//!   requires;
//! * `Volume3D`: trilinear `(v_1, v_2, v_3)`, 3 dofs per node.
//!
//! Homogeneous essential conditions (`η_i = 0` on the clamped part, plus
//! all transverse derivative dofs for the Koiter space, which enforces
//! `∂_ν η_3 = 0` there) are eliminated symmetrically through the free-dof
//! numbering.

use super::mesh::{Mesh2D, Mesh3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    Membrane2D,
    Koiter2D,
    Volume3D,
}

impl SpaceKind {
    pub fn dofs_per_node(&self) -> usize {
        match self {
            SpaceKind::Membrane2D | SpaceKind::Volume3D => 3,
            SpaceKind::Koiter2D => 6,
        }
    }
}

/// Dof bookkeeping for one space over one mesh.
#[derive(Debug, Clone)]
pub struct DiscreteSpace {
    pub kind: SpaceKind,
    pub n_nodes: usize,
    /// Essential (eliminated) dof flags over the full numbering.
    pub constrained: Vec<bool>,
    /// Full index → free index.
    pub free_of_full: Vec<Option<usize>>,
    /// Free index → full index.
    pub full_of_free: Vec<usize>,
}

impl DiscreteSpace {
    fn build(kind: SpaceKind, n_nodes: usize, clamped: impl Fn(usize) -> bool) -> Self {
        let per = kind.dofs_per_node();
        let n_full = n_nodes * per;
        let mut constrained = vec![false; n_full];
        for n in 0..n_nodes {
            if clamped(n) {
                for d in 0..per {
                    constrained[n * per + d] = true;
                }
            }
        }
        let mut free_of_full = vec![None; n_full];
        let mut full_of_free = Vec::new();
        for (full, c) in constrained.iter().enumerate() {
            if !c {
                free_of_full[full] = Some(full_of_free.len());
                full_of_free.push(full);
            }
        }
        DiscreteSpace {
            kind,
            n_nodes,
            constrained,
            free_of_full,
            full_of_free,
        }
    }

    pub fn membrane2d(mesh: &Mesh2D) -> Self {
        Self::build(SpaceKind::Membrane2D, mesh.n_nodes(), |n| {
            mesh.is_clamped_node(n)
        })
    }

    pub fn koiter2d(mesh: &Mesh2D) -> Self {
        Self::build(SpaceKind::Koiter2D, mesh.n_nodes(), |n| {
            mesh.is_clamped_node(n)
        })
    }

    pub fn volume3d(mesh: &Mesh3D) -> Self {
        Self::build(SpaceKind::Volume3D, mesh.n_nodes(), |n| {
            mesh.is_clamped_node(n)
        })
    }

    pub fn n_full(&self) -> usize {
        self.constrained.len()
    }

    pub fn n_free(&self) -> usize {
        self.full_of_free.len()
    }

    /// Full indices of the three displacement-value dofs at a node.
    pub fn node_value_dofs(&self, node: usize) -> [usize; 3] {
        let per = self.kind.dofs_per_node();
        [node * per, node * per + 1, node * per + 2]
    }

    /// Scatters a free vector into a full vector (zeros on essential dofs).
    pub fn full_vector(&self, free: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_full()];
        for (k, &full) in self.full_of_free.iter().enumerate() {
            out[full] = free[k];
        }
        out
    }

    /// Gathers the free entries of a full vector.
    pub fn free_vector(&self, full: &[f64]) -> Vec<f64> {
        self.full_of_free.iter().map(|&f| full[f]).collect()
    }
}

/// Bilinear shape values and first derivatives on a cell of size
/// `(hx, hy)`, local coordinates `(s, t) ∈ [0,1]²`, corner order
/// `(0,0), (1,0), (1,1), (0,1)`.
pub fn q1_2d(s: f64, t: f64, hx: f64, hy: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    let vals = [
        (1.0 - s) * (1.0 - t),
        s * (1.0 - t),
        s * t,
        (1.0 - s) * t,
    ];
    let ds = [-(1.0 - t), 1.0 - t, t, -t];
    let dt = [-(1.0 - s), -s, s, 1.0 - s];
    let mut grads = [[0.0; 2]; 4];
    for k in 0..4 {
        grads[k] = [ds[k] / hx, dt[k] / hy];
    }
    (vals, grads)
}

/// Trilinear shapes on a hex of size `(hx, hy, hz)`; corner order is the
/// 2D order at the lower layer, then the upper layer.
pub fn q1_3d(
    s: f64,
    t: f64,
    u: f64,
    hx: f64,
    hy: f64,
    hz: f64,
) -> ([f64; 8], [[f64; 3]; 8]) {
    let (v2, g2) = q1_2d(s, t, hx, hy);
    let mut vals = [0.0; 8];
    let mut grads = [[0.0; 3]; 8];
    for k in 0..4 {
        vals[k] = v2[k] * (1.0 - u);
        vals[k + 4] = v2[k] * u;
        grads[k] = [g2[k][0] * (1.0 - u), g2[k][1] * (1.0 - u), -v2[k] / hz];
        grads[k + 4] = [g2[k][0] * u, g2[k][1] * u, v2[k] / hz];
    }
    (vals, grads)
}

/// 1D cubic Hermite basis on `[0,1]`: value/slope at the left node, then at
/// the right node. Returns `(h, h', h'')` for each of the four functions;
/// slope functions are unscaled (the element scales them by `h`).
fn hermite_1d(t: f64) -> [[f64; 3]; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        // value left
        [1.0 - 3.0 * t2 + 2.0 * t3, -6.0 * t + 6.0 * t2, -6.0 + 12.0 * t],
        // slope left
        [t - 2.0 * t2 + t3, 1.0 - 4.0 * t + 3.0 * t2, -4.0 + 6.0 * t],
        // value right
        [3.0 * t2 - 2.0 * t3, 6.0 * t - 6.0 * t2, 6.0 - 12.0 * t],
        // slope right
        [-t2 + t3, -2.0 * t + 3.0 * t2, -2.0 + 6.0 * t],
    ]
}

/// Hermite-bicubic shape functions: 4 corners × 4 dof types
/// `(w, ∂_1 w, ∂_2 w, ∂_12 w)`, with derivative dofs scaled by the cell
/// size so dof values are physical derivatives.
///
/// Returns, for each of the 16 local functions, the value, gradient
/// `(∂_1, ∂_2)`, and Hessian `(∂_11, ∂_12, ∂_22)` in physical coordinates.
pub struct BfsShape {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [f64; 3],
}

/// Local dof order: for corner `c` in the 2D corner order, the four dofs
/// `(w, w_1, w_2, w_12)` at positions `4c .. 4c+4`.
pub fn bfs_2d(s: f64, t: f64, hx: f64, hy: f64) -> [BfsShape; 16] {
    let hs = hermite_1d(s);
    let ht = hermite_1d(t);
    // corner → (left/right in s, left/right in t): (0,0),(1,0),(1,1),(0,1)
    let corner_st = [(0usize, 0usize), (1, 0), (1, 1), (0, 1)];
    let mut out: Vec<BfsShape> = Vec::with_capacity(16);
    for &(cs, ct) in &corner_st {
        for dof in 0..4 {
            // dof 0: value·value, 1: slope_s·value, 2: value·slope_t, 3: slope·slope
            let (fs, scale_s) = match dof {
                1 | 3 => (hs[2 * cs + 1], hx),
                _ => (hs[2 * cs], 1.0),
            };
            let (ft, scale_t) = match dof {
                2 | 3 => (ht[2 * ct + 1], hy),
                _ => (ht[2 * ct], 1.0),
            };
            let scale = scale_s * scale_t;
            out.push(BfsShape {
                value: scale * fs[0] * ft[0],
                grad: [
                    scale * fs[1] * ft[0] / hx,
                    scale * fs[0] * ft[1] / hy,
                ],
                hess: [
                    scale * fs[2] * ft[0] / (hx * hx),
                    scale * fs[1] * ft[1] / (hx * hy),
                    scale * fs[0] * ft[2] / (hy * hy),
                ],
            });
        }
    }
    out.try_into().ok().unwrap()
}
