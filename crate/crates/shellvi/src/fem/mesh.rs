//! Structured tensor meshes of the parameter rectangle and the stretched
//! slab `ω × (-1, 1)`.

use crate::geometry::{Edge, Rect};

use super::FemError;

/// Structured quad mesh of the parameter rectangle. Node `(i, j)` has
/// index `i + (nx+1) j`; cells are indexed row-major the same way.
#[derive(Debug, Clone)]
pub struct Mesh2D {
    pub bounds: Rect,
    pub nx: usize,
    pub ny: usize,
    pub clamped_edges: Vec<Edge>,
}

impl Mesh2D {
    pub fn build(
        bounds: Rect,
        nx: usize,
        ny: usize,
        clamped_edges: &[Edge],
    ) -> Result<Self, FemError> {
        if clamped_edges.is_empty() {
            return Err(FemError::EmptyGamma0);
        }
        if nx < 2 || ny < 2 {
            return Err(FemError::TooCoarse(nx, ny));
        }
        let mut edges = Vec::new();
        for e in clamped_edges {
            if !edges.contains(e) {
                edges.push(*e);
            }
        }
        Ok(Mesh2D {
            bounds,
            nx,
            ny,
            clamped_edges: edges,
        })
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        i + (self.nx + 1) * j
    }

    pub fn node_ij(&self, n: usize) -> (usize, usize) {
        (n % (self.nx + 1), n / (self.nx + 1))
    }

    pub fn node_coord(&self, n: usize) -> [f64; 2] {
        let (i, j) = self.node_ij(n);
        self.bounds.grid_point(self.nx, self.ny, i, j)
    }

    pub fn cell_size(&self) -> [f64; 2] {
        let e = self.bounds.extent();
        [e[0] / self.nx as f64, e[1] / self.ny as f64]
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_ij(&self, c: usize) -> (usize, usize) {
        (c % self.nx, c / self.nx)
    }

    /// Corner nodes in the local order `(0,0), (1,0), (1,1), (0,1)`.
    pub fn cell_nodes(&self, c: usize) -> [usize; 4] {
        let (ci, cj) = self.cell_ij(c);
        [
            self.node_index(ci, cj),
            self.node_index(ci + 1, cj),
            self.node_index(ci + 1, cj + 1),
            self.node_index(ci, cj + 1),
        ]
    }

    pub fn cell_origin(&self, c: usize) -> [f64; 2] {
        let (ci, cj) = self.cell_ij(c);
        let h = self.cell_size();
        [
            self.bounds.y1.0 + ci as f64 * h[0],
            self.bounds.y2.0 + cj as f64 * h[1],
        ]
    }

    pub fn is_clamped_node(&self, n: usize) -> bool {
        let (i, j) = self.node_ij(n);
        self.clamped_edges.iter().any(|e| match e {
            Edge::Bottom => j == 0,
            Edge::Top => j == self.ny,
            Edge::Left => i == 0,
            Edge::Right => i == self.nx,
        })
    }

    pub fn clamped_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&n| self.is_clamped_node(n)).collect()
    }

    /// Exact distance from `y` to the clamped boundary part (full rectangle
    /// edges, so the distance is the smallest axis distance).
    pub fn dist_to_clamped(&self, y: [f64; 2]) -> f64 {
        self.clamped_edges
            .iter()
            .map(|e| match e {
                Edge::Bottom => (y[1] - self.bounds.y2.0).abs(),
                Edge::Top => (self.bounds.y2.1 - y[1]).abs(),
                Edge::Left => (y[0] - self.bounds.y1.0).abs(),
                Edge::Right => (self.bounds.y1.1 - y[0]).abs(),
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Tensor product of a [`Mesh2D`] with `nz` layers over `x3 ∈ [-1, 1]`.
/// `nz` must be even so the midplane layer `x3 = 0` exists. Node
/// `(n2, k)` has index `n2 (nz+1) + k` (layer-fastest keeps the stiffness
/// profile narrow).
#[derive(Debug, Clone)]
pub struct Mesh3D {
    pub base: Mesh2D,
    pub nz: usize,
}

impl Mesh3D {
    pub fn build(base: Mesh2D, nz: usize) -> Result<Self, FemError> {
        if nz < 2 || nz % 2 != 0 {
            return Err(FemError::OddLayers(nz));
        }
        Ok(Mesh3D { base, nz })
    }

    pub fn n_nodes(&self) -> usize {
        self.base.n_nodes() * (self.nz + 1)
    }

    pub fn node_index(&self, n2: usize, k: usize) -> usize {
        n2 * (self.nz + 1) + k
    }

    pub fn node_split(&self, n: usize) -> (usize, usize) {
        (n / (self.nz + 1), n % (self.nz + 1))
    }

    pub fn layer_x3(&self, k: usize) -> f64 {
        -1.0 + 2.0 * k as f64 / self.nz as f64
    }

    pub fn node_coord(&self, n: usize) -> [f64; 3] {
        let (n2, k) = self.node_split(n);
        let y = self.base.node_coord(n2);
        [y[0], y[1], self.layer_x3(k)]
    }

    pub fn n_cells(&self) -> usize {
        self.base.n_cells() * self.nz
    }

    /// Hex corner nodes: the base quad at layer `k`, then at layer `k+1`.
    pub fn cell_nodes(&self, c: usize) -> [usize; 8] {
        let base_cell = c % self.base.n_cells();
        let k = c / self.base.n_cells();
        let q = self.base.cell_nodes(base_cell);
        [
            self.node_index(q[0], k),
            self.node_index(q[1], k),
            self.node_index(q[2], k),
            self.node_index(q[3], k),
            self.node_index(q[0], k + 1),
            self.node_index(q[1], k + 1),
            self.node_index(q[2], k + 1),
            self.node_index(q[3], k + 1),
        ]
    }

    pub fn cell_origin(&self, c: usize) -> [f64; 3] {
        let base_cell = c % self.base.n_cells();
        let k = c / self.base.n_cells();
        let o = self.base.cell_origin(base_cell);
        [o[0], o[1], self.layer_x3(k)]
    }

    pub fn cell_size(&self) -> [f64; 3] {
        let h = self.base.cell_size();
        [h[0], h[1], 2.0 / self.nz as f64]
    }

    pub fn is_clamped_node(&self, n: usize) -> bool {
        self.base.is_clamped_node(self.node_split(n).0)
    }

    pub fn clamped_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&n| self.is_clamped_node(n)).collect()
    }
}
