//! Midsurface differential geometry of an analytic chart.
//!
//! A chart maps a parameter rectangle into Euclidean 3-space. From its
//! first, second, and third partial derivatives this module evaluates the
//! covariant/contravariant bases, both fundamental forms, Christoffel
//! symbols, and the derivative of the mixed curvature tensor, all of which
//! feed the strain measures and the shell assembly downstream.
//!
//! Derivatives are analytic by design: finite differences appear only as a
//! test oracle, never inside assembled matrices.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector3};
use thiserror::Error;

use crate::par;

/// Degeneracy threshold on `|a_1 ∧ a_2|`.
pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("degenerate frame at y = ({0}, {1}): |a_1 ∧ a_2| below {DEGENERACY_TOL:e}")]
    DegenerateFrame(f64, f64),
    #[error("bounds {0} exit the admissible parameter range of chart `{1}`")]
    InvalidBounds(Rect, &'static str),
    #[error("chart is not injective on the validation grid (images collide near y = ({0}, {1}))")]
    NotInjective(f64, f64),
    #[error("point ({0}, {1}) lies outside the chart domain")]
    OutsideDomain(f64, f64),
    #[error("clamped edge set is empty")]
    EmptyClampedSet,
    #[error("half-space direction has zero length")]
    ZeroDirection,
}

/// Axis-aligned parameter rectangle `[y1min, y1max] × [y2min, y2max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub y1: (f64, f64),
    pub y2: (f64, f64),
}

impl Rect {
    pub fn new(y1min: f64, y1max: f64, y2min: f64, y2max: f64) -> Self {
        assert!(y1min < y1max && y2min < y2max, "empty parameter rectangle");
        Rect {
            y1: (y1min, y1max),
            y2: (y2min, y2max),
        }
    }

    pub fn contains(&self, y: [f64; 2], tol: f64) -> bool {
        y[0] >= self.y1.0 - tol
            && y[0] <= self.y1.1 + tol
            && y[1] >= self.y2.0 - tol
            && y[1] <= self.y2.1 + tol
    }

    pub fn extent(&self) -> [f64; 2] {
        [self.y1.1 - self.y1.0, self.y2.1 - self.y2.0]
    }

    /// Point of the `(nx+1) × (ny+1)` tensor grid, boundary included.
    pub fn grid_point(&self, nx: usize, ny: usize, i: usize, j: usize) -> [f64; 2] {
        let t1 = i as f64 / nx as f64;
        let t2 = j as f64 / ny as f64;
        [
            self.y1.0 + t1 * (self.y1.1 - self.y1.0),
            self.y2.0 + t2 * (self.y2.1 - self.y2.0),
        ]
    }

    fn swapped(&self) -> Rect {
        Rect {
            y1: self.y2,
            y2: self.y1,
        }
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {}] x [{}, {}]",
            self.y1.0, self.y1.1, self.y2.0, self.y2.1
        )
    }
}

/// One edge of the parameter rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    /// `y2 = y2min`
    Bottom,
    /// `y2 = y2max`
    Top,
    /// `y1 = y1min`
    Left,
    /// `y1 = y1max`
    Right,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Bottom, Edge::Top, Edge::Left, Edge::Right];

    fn swapped(self) -> Edge {
        match self {
            Edge::Bottom => Edge::Left,
            Edge::Top => Edge::Right,
            Edge::Left => Edge::Bottom,
            Edge::Right => Edge::Top,
        }
    }
}

/// Analytic surface map with partial derivatives up to third order.
///
/// Second derivatives are ordered `[d11, d12, d22]` and third derivatives
/// `[d111, d112, d122, d222]`.
pub trait ChartMap: Send + Sync {
    fn value(&self, y: [f64; 2]) -> Vector3<f64>;
    fn d1(&self, y: [f64; 2]) -> [Vector3<f64>; 2];
    fn d2(&self, y: [f64; 2]) -> [Vector3<f64>; 3];
    fn d3(&self, y: [f64; 2]) -> [Vector3<f64>; 4];
}

/// Index into the `d2` array for the pair `(α, β)`.
#[inline]
pub fn d2_index(a: usize, b: usize) -> usize {
    a + b
}

/// Index into the `d3` array for the triple `(α, β, σ)`: number of 1s.
#[inline]
pub fn d3_index(a: usize, b: usize, c: usize) -> usize {
    a + b + c
}

/// Prescribed half-space `{x : x · q ≥ 0}`.
#[derive(Debug, Clone, Copy)]
pub struct HalfSpace {
    q: Vector3<f64>,
}

impl HalfSpace {
    /// Normalizes `q`; errors on a zero vector.
    pub fn new(q: Vector3<f64>) -> Result<Self, GeometryError> {
        let n = q.norm();
        if n < DEGENERACY_TOL {
            return Err(GeometryError::ZeroDirection);
        }
        Ok(HalfSpace { q: q / n })
    }

    pub fn direction(&self) -> Vector3<f64> {
        self.q
    }
}

/// All pointwise geometric quantities of the chart at one parameter point.
#[derive(Debug, Clone)]
pub struct SurfaceFrame {
    pub y: [f64; 2],
    /// Covariant basis `[a_1, a_2, a_3]`; `a_3` is the unit normal
    /// `(a_1 ∧ a_2)/|a_1 ∧ a_2|`.
    pub a_cov: [Vector3<f64>; 3],
    /// Contravariant basis `[a^1, a^2, a^3]`, `a^3 = a_3`.
    pub a_con: [Vector3<f64>; 3],
    /// First fundamental form `a_{αβ}`.
    pub metric_cov: Matrix2<f64>,
    /// Inverse metric `a^{αβ}`.
    pub metric_con: Matrix2<f64>,
    /// `a = det(a_{αβ}) > 0`.
    pub area: f64,
    /// Second fundamental form `b_{αβ}`.
    pub curv_cov: Matrix2<f64>,
    /// Mixed curvature `b^β_α`, stored as `curv_mixed[(β, α)]`.
    pub curv_mixed: Matrix2<f64>,
    /// Christoffel symbols: `christoffel[σ][(α, β)] = Γ^σ_{αβ}`.
    pub christoffel: [Matrix2<f64>; 2],
    /// `curv_mixed_deriv[α][(τ, β)] = ∂_α b^τ_β`.
    pub curv_mixed_deriv: [Matrix2<f64>; 2],
    /// Second chart derivatives `[θ_{,11}, θ_{,12}, θ_{,22}]`, kept for
    /// downstream analytic use.
    pub d2: [Vector3<f64>; 3],
}

impl SurfaceFrame {
    #[inline]
    pub fn gamma_sym(&self, s: usize, a: usize, b: usize) -> f64 {
        self.christoffel[s][(a, b)]
    }

    /// `b^t_a`.
    #[inline]
    pub fn b_mixed(&self, t: usize, a: usize) -> f64 {
        self.curv_mixed[(t, a)]
    }

    /// `∂_a b^t_b`.
    #[inline]
    pub fn b_mixed_deriv(&self, a: usize, t: usize, b: usize) -> f64 {
        self.curv_mixed_deriv[a][(t, b)]
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.a_cov[2]
    }
}

/// Pointwise sample of a midsurface displacement in covariant components.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceDisplacementSample {
    /// `(η_1, η_2, η_3)`.
    pub eta: [f64; 3],
    /// `grad[i][β] = ∂_β η_i`.
    pub grad: [[f64; 2]; 3],
    /// `hess3[(α, β)] = ∂_{αβ} η_3` (symmetric).
    pub hess3: Matrix2<f64>,
}

impl SurfaceDisplacementSample {
    pub fn zero() -> Self {
        SurfaceDisplacementSample {
            eta: [0.0; 3],
            grad: [[0.0; 2]; 3],
            hess3: Matrix2::zeros(),
        }
    }
}

/// Linearised change of metric `γ_{αβ}(η)` at one point.
pub fn gamma(frame: &SurfaceFrame, s: &SurfaceDisplacementSample) -> Matrix2<f64> {
    let mut g = Matrix2::zeros();
    for a in 0..2 {
        for b in 0..2 {
            let mut v = 0.5 * (s.grad[a][b] + s.grad[b][a]);
            for sig in 0..2 {
                v -= frame.gamma_sym(sig, a, b) * s.eta[sig];
            }
            v -= frame.curv_cov[(a, b)] * s.eta[2];
            g[(a, b)] = v;
        }
    }
    g
}

/// Linearised change of curvature `ρ_{αβ}(η)` at one point.
///
/// Evaluates the full curvilinear expression (including the `∂_α b^τ_β`
/// term) and symmetrizes the roundoff remainder. On a flat chart it reduces
/// to the Hessian of `η_3`.
pub fn rho(frame: &SurfaceFrame, s: &SurfaceDisplacementSample) -> Matrix2<f64> {
    let mut r = Matrix2::zeros();
    for a in 0..2 {
        for b in 0..2 {
            let mut v = s.hess3[(a, b)];
            for sig in 0..2 {
                v -= frame.gamma_sym(sig, a, b) * s.grad[2][sig];
            }
            // -b^σ_α b_{σβ} η_3
            for sig in 0..2 {
                v -= frame.b_mixed(sig, a) * frame.curv_cov[(sig, b)] * s.eta[2];
            }
            // b^σ_α (∂_β η_σ − Γ^τ_{βσ} η_τ)
            for sig in 0..2 {
                let mut cov = s.grad[sig][b];
                for tau in 0..2 {
                    cov -= frame.gamma_sym(tau, b, sig) * s.eta[tau];
                }
                v += frame.b_mixed(sig, a) * cov;
            }
            // b^τ_β (∂_α η_τ − Γ^σ_{ατ} η_σ)
            for tau in 0..2 {
                let mut cov = s.grad[tau][a];
                for sig in 0..2 {
                    cov -= frame.gamma_sym(sig, a, tau) * s.eta[sig];
                }
                v += frame.b_mixed(tau, b) * cov;
            }
            // (∂_α b^τ_β + Γ^τ_{ασ} b^σ_β − Γ^σ_{αβ} b^τ_σ) η_τ
            for tau in 0..2 {
                let mut coef = frame.b_mixed_deriv(a, tau, b);
                for sig in 0..2 {
                    coef += frame.gamma_sym(tau, a, sig) * frame.b_mixed(sig, b);
                    coef -= frame.gamma_sym(sig, a, b) * frame.b_mixed(tau, sig);
                }
                v += coef * s.eta[tau];
            }
            r[(a, b)] = v;
        }
    }
    0.5 * (r + r.transpose())
}

/// Names of the built-in example surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinChart {
    Plate,
    SphereCap,
    Cylinder,
    Hyperboloid,
}

impl BuiltinChart {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "plate" => Some(BuiltinChart::Plate),
            "sphere_cap" => Some(BuiltinChart::SphereCap),
            "cylinder" => Some(BuiltinChart::Cylinder),
            "hyperboloid" => Some(BuiltinChart::Hyperboloid),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BuiltinChart::Plate => "plate",
            BuiltinChart::SphereCap => "sphere_cap",
            BuiltinChart::Cylinder => "cylinder",
            BuiltinChart::Hyperboloid => "hyperboloid",
        }
    }
}

/// `θ(y) = (y1, y2, 0)`.
struct PlateMap;

impl ChartMap for PlateMap {
    fn value(&self, y: [f64; 2]) -> Vector3<f64> {
        Vector3::new(y[0], y[1], 0.0)
    }
    fn d1(&self, _y: [f64; 2]) -> [Vector3<f64>; 2] {
        [Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)]
    }
    fn d2(&self, _y: [f64; 2]) -> [Vector3<f64>; 3] {
        [Vector3::zeros(); 3]
    }
    fn d3(&self, _y: [f64; 2]) -> [Vector3<f64>; 4] {
        [Vector3::zeros(); 4]
    }
}

/// `θ(y) = (cos y1, y2, sin y1)`.
struct CylinderMap;

impl ChartMap for CylinderMap {
    fn value(&self, y: [f64; 2]) -> Vector3<f64> {
        Vector3::new(y[0].cos(), y[1], y[0].sin())
    }
    fn d1(&self, y: [f64; 2]) -> [Vector3<f64>; 2] {
        let (s, c) = y[0].sin_cos();
        [Vector3::new(-s, 0.0, c), Vector3::new(0.0, 1.0, 0.0)]
    }
    fn d2(&self, y: [f64; 2]) -> [Vector3<f64>; 3] {
        let (s, c) = y[0].sin_cos();
        [
            Vector3::new(-c, 0.0, -s),
            Vector3::zeros(),
            Vector3::zeros(),
        ]
    }
    fn d3(&self, y: [f64; 2]) -> [Vector3<f64>; 4] {
        let (s, c) = y[0].sin_cos();
        [
            Vector3::new(s, 0.0, -c),
            Vector3::zeros(),
            Vector3::zeros(),
            Vector3::zeros(),
        ]
    }
}

/// `θ(y) = (cos y1 sin y2, sin y1 sin y2, cos y2)`.
struct SphereCapMap;

impl ChartMap for SphereCapMap {
    fn value(&self, y: [f64; 2]) -> Vector3<f64> {
        let (s1, c1) = y[0].sin_cos();
        let (s2, c2) = y[1].sin_cos();
        Vector3::new(c1 * s2, s1 * s2, c2)
    }
    fn d1(&self, y: [f64; 2]) -> [Vector3<f64>; 2] {
        let (s1, c1) = y[0].sin_cos();
        let (s2, c2) = y[1].sin_cos();
        [
            Vector3::new(-s1 * s2, c1 * s2, 0.0),
            Vector3::new(c1 * c2, s1 * c2, -s2),
        ]
    }
    fn d2(&self, y: [f64; 2]) -> [Vector3<f64>; 3] {
        let (s1, c1) = y[0].sin_cos();
        let (s2, c2) = y[1].sin_cos();
        [
            Vector3::new(-c1 * s2, -s1 * s2, 0.0),
            Vector3::new(-s1 * c2, c1 * c2, 0.0),
            Vector3::new(-c1 * s2, -s1 * s2, -c2),
        ]
    }
    fn d3(&self, y: [f64; 2]) -> [Vector3<f64>; 4] {
        let (s1, c1) = y[0].sin_cos();
        let (s2, c2) = y[1].sin_cos();
        [
            Vector3::new(s1 * s2, -c1 * s2, 0.0),
            Vector3::new(-c1 * c2, -s1 * c2, 0.0),
            Vector3::new(s1 * s2, -c1 * s2, 0.0),
            Vector3::new(-c1 * c2, -s1 * c2, s2),
        ]
    }
}

/// `θ(y) = (√(1+y2²) cos y1, √(1+y2²) sin y1, y2)`.
struct HyperboloidMap;

impl HyperboloidMap {
    fn radii(y2: f64) -> (f64, f64, f64, f64) {
        let r = (1.0 + y2 * y2).sqrt();
        let r1 = y2 / r;
        let r2 = 1.0 / (r * r * r);
        let r3 = -3.0 * y2 / (r * r * r * r * r);
        (r, r1, r2, r3)
    }
}

impl ChartMap for HyperboloidMap {
    fn value(&self, y: [f64; 2]) -> Vector3<f64> {
        let (s1, c1) = y[0].sin_cos();
        let (r, _, _, _) = Self::radii(y[1]);
        Vector3::new(r * c1, r * s1, y[1])
    }
    fn d1(&self, y: [f64; 2]) -> [Vector3<f64>; 2] {
        let (s1, c1) = y[0].sin_cos();
        let (r, r1, _, _) = Self::radii(y[1]);
        [
            Vector3::new(-r * s1, r * c1, 0.0),
            Vector3::new(r1 * c1, r1 * s1, 1.0),
        ]
    }
    fn d2(&self, y: [f64; 2]) -> [Vector3<f64>; 3] {
        let (s1, c1) = y[0].sin_cos();
        let (r, r1, r2, _) = Self::radii(y[1]);
        [
            Vector3::new(-r * c1, -r * s1, 0.0),
            Vector3::new(-r1 * s1, r1 * c1, 0.0),
            Vector3::new(r2 * c1, r2 * s1, 0.0),
        ]
    }
    fn d3(&self, y: [f64; 2]) -> [Vector3<f64>; 4] {
        let (s1, c1) = y[0].sin_cos();
        let (r, r1, r2, r3) = Self::radii(y[1]);
        [
            Vector3::new(r * s1, -r * c1, 0.0),
            Vector3::new(-r1 * c1, -r1 * s1, 0.0),
            Vector3::new(-r2 * s1, r2 * c1, 0.0),
            Vector3::new(r3 * c1, r3 * s1, 0.0),
        ]
    }
}

/// Chart with the roles of `y1` and `y2` exchanged. Flips the stored
/// normal's orientation, which is how a user satisfies the alignment
/// hypothesis when the stock parametrization points the normal the other
/// way.
struct SwappedMap {
    inner: Arc<dyn ChartMap>,
}

impl ChartMap for SwappedMap {
    fn value(&self, y: [f64; 2]) -> Vector3<f64> {
        self.inner.value([y[1], y[0]])
    }
    fn d1(&self, y: [f64; 2]) -> [Vector3<f64>; 2] {
        let d = self.inner.d1([y[1], y[0]]);
        [d[1], d[0]]
    }
    fn d2(&self, y: [f64; 2]) -> [Vector3<f64>; 3] {
        let d = self.inner.d2([y[1], y[0]]);
        [d[2], d[1], d[0]]
    }
    fn d3(&self, y: [f64; 2]) -> [Vector3<f64>; 4] {
        let d = self.inner.d3([y[1], y[0]]);
        [d[3], d[2], d[1], d[0]]
    }
}

/// Chart translated by a constant offset; intrinsic geometry is unchanged,
/// only positions relative to the half-space move.
struct TranslatedMap {
    inner: Arc<dyn ChartMap>,
    offset: Vector3<f64>,
}

impl ChartMap for TranslatedMap {
    fn value(&self, y: [f64; 2]) -> Vector3<f64> {
        self.inner.value(y) + self.offset
    }
    fn d1(&self, y: [f64; 2]) -> [Vector3<f64>; 2] {
        self.inner.d1(y)
    }
    fn d2(&self, y: [f64; 2]) -> [Vector3<f64>; 3] {
        self.inner.d2(y)
    }
    fn d3(&self, y: [f64; 2]) -> [Vector3<f64>; 4] {
        self.inner.d3(y)
    }
}

/// An analytic midsurface chart over a rectangle, with the designated
/// clamped boundary part.
#[derive(Clone)]
pub struct Chart {
    map: Arc<dyn ChartMap>,
    domain: Rect,
    clamped: Vec<Edge>,
}

const VALIDATION_GRID: usize = 50;

impl Chart {
    /// Wraps a user map after checking the immersion and injectivity
    /// hypotheses on a `50 × 50` grid.
    pub fn from_map(
        map: Arc<dyn ChartMap>,
        domain: Rect,
        clamped: &[Edge],
    ) -> Result<Self, GeometryError> {
        if clamped.is_empty() {
            return Err(GeometryError::EmptyClampedSet);
        }
        let mut edges: Vec<Edge> = Vec::new();
        for e in clamped {
            if !edges.contains(e) {
                edges.push(*e);
            }
        }
        let chart = Chart {
            map,
            domain,
            clamped: edges,
        };
        chart.validate_immersion_injectivity(VALIDATION_GRID)?;
        Ok(chart)
    }

    /// Builds one of the stock example surfaces, rejecting bounds outside
    /// the admissible parameter range of the parametrization.
    pub fn builtin(
        which: BuiltinChart,
        bounds: Rect,
        clamped: &[Edge],
    ) -> Result<Self, GeometryError> {
        let two_pi = 2.0 * std::f64::consts::PI;
        let ok = match which {
            BuiltinChart::Plate => true,
            BuiltinChart::Cylinder | BuiltinChart::Hyperboloid => {
                // angular variable is y1; one wrap at most
                bounds.y1.1 - bounds.y1.0 < two_pi
            }
            BuiltinChart::SphereCap => {
                // polar variable y2 must avoid both poles
                bounds.y1.1 - bounds.y1.0 < two_pi
                    && bounds.y2.0 > 0.0
                    && bounds.y2.1 < std::f64::consts::PI
            }
        };
        if !ok {
            return Err(GeometryError::InvalidBounds(bounds, which.name()));
        }
        let map: Arc<dyn ChartMap> = match which {
            BuiltinChart::Plate => Arc::new(PlateMap),
            BuiltinChart::SphereCap => Arc::new(SphereCapMap),
            BuiltinChart::Cylinder => Arc::new(CylinderMap),
            BuiltinChart::Hyperboloid => Arc::new(HyperboloidMap),
        };
        Chart::from_map(map, bounds, clamped)
    }

    /// Chart with parameter order exchanged (normal orientation flips).
    pub fn swap_parameters(&self) -> Chart {
        Chart {
            map: Arc::new(SwappedMap {
                inner: Arc::clone(&self.map),
            }),
            domain: self.domain.swapped(),
            clamped: self.clamped.iter().map(|e| e.swapped()).collect(),
        }
    }

    /// Chart translated by `offset` in 3-space.
    pub fn translated(&self, offset: Vector3<f64>) -> Chart {
        Chart {
            map: Arc::new(TranslatedMap {
                inner: Arc::clone(&self.map),
                offset,
            }),
            domain: self.domain,
            clamped: self.clamped.clone(),
        }
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn clamped_edges(&self) -> &[Edge] {
        &self.clamped
    }

    pub fn position(&self, y: [f64; 2]) -> Vector3<f64> {
        self.map.value(y)
    }

    fn validate_immersion_injectivity(&self, n: usize) -> Result<(), GeometryError> {
        let pts: Vec<([f64; 2], Vector3<f64>)> = (0..=n)
            .flat_map(|i| (0..=n).map(move |j| (i, j)))
            .map(|(i, j)| {
                let y = self.domain.grid_point(n, n, i, j);
                (y, self.map.value(y))
            })
            .collect();
        let mut diameter = 0.0f64;
        for p in &pts {
            for q in &pts[..1] {
                diameter = diameter.max((p.1 - q.1).norm());
            }
        }
        let ext = self.domain.extent();
        let h = (ext[0].max(ext[1])) / n as f64;
        for (y, _) in &pts {
            let d = self.map.d1(*y);
            if d[0].cross(&d[1]).norm() < DEGENERACY_TOL {
                return Err(GeometryError::DegenerateFrame(y[0], y[1]));
            }
        }
        let image_tol = 1e-6 * diameter.max(1e-300);
        for (k, (yk, pk)) in pts.iter().enumerate() {
            for (yl, pl) in pts.iter().skip(k + 1) {
                let param_dist = ((yk[0] - yl[0]).powi(2) + (yk[1] - yl[1]).powi(2)).sqrt();
                if param_dist >= 2.0 * h && (pk - pl).norm() < image_tol {
                    return Err(GeometryError::NotInjective(yk[0], yk[1]));
                }
            }
        }
        Ok(())
    }

    /// Evaluates every frame quantity at `y` from analytic derivatives.
    pub fn eval_frame(&self, y: [f64; 2]) -> Result<SurfaceFrame, GeometryError> {
        if !self.domain.contains(y, 1e-12 * self.domain.extent()[0].max(1.0)) {
            return Err(GeometryError::OutsideDomain(y[0], y[1]));
        }
        let d1 = self.map.d1(y);
        let d2 = self.map.d2(y);
        let d3 = self.map.d3(y);

        let n = d1[0].cross(&d1[1]);
        let nn = n.norm();
        if nn < DEGENERACY_TOL {
            return Err(GeometryError::DegenerateFrame(y[0], y[1]));
        }
        let a3 = n / nn;

        let metric_cov = Matrix2::new(
            d1[0].dot(&d1[0]),
            d1[0].dot(&d1[1]),
            d1[1].dot(&d1[0]),
            d1[1].dot(&d1[1]),
        );
        let area = metric_cov[(0, 0)] * metric_cov[(1, 1)] - metric_cov[(0, 1)] * metric_cov[(1, 0)];
        let inv_det = 1.0 / area;
        let metric_con = Matrix2::new(
            metric_cov[(1, 1)] * inv_det,
            -metric_cov[(0, 1)] * inv_det,
            -metric_cov[(1, 0)] * inv_det,
            metric_cov[(0, 0)] * inv_det,
        );

        let a_cov = [d1[0], d1[1], a3];
        let a_con = [
            metric_con[(0, 0)] * d1[0] + metric_con[(0, 1)] * d1[1],
            metric_con[(1, 0)] * d1[0] + metric_con[(1, 1)] * d1[1],
            a3,
        ];

        let mut curv_cov = Matrix2::zeros();
        for a in 0..2 {
            for b in 0..2 {
                curv_cov[(a, b)] = d2[d2_index(a, b)].dot(&a3);
            }
        }
        // b^β_α = a^{βσ} b_{σα}
        let mut curv_mixed = Matrix2::zeros();
        for t in 0..2 {
            for a in 0..2 {
                let mut v = 0.0;
                for s in 0..2 {
                    v += metric_con[(t, s)] * curv_cov[(s, a)];
                }
                curv_mixed[(t, a)] = v;
            }
        }
        let mut christoffel = [Matrix2::zeros(); 2];
        for s in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    christoffel[s][(a, b)] = d2[d2_index(a, b)].dot(&a_con[s]);
                }
            }
        }

        // ∂_α a_3 = −b^σ_α a_σ (Weingarten), exact given the frame above.
        let da3 = [
            -(curv_mixed[(0, 0)] * d1[0] + curv_mixed[(1, 0)] * d1[1]),
            -(curv_mixed[(0, 1)] * d1[0] + curv_mixed[(1, 1)] * d1[1]),
        ];
        let mut curv_mixed_deriv = [Matrix2::zeros(); 2];
        for al in 0..2 {
            // ∂_α a_{μν} = θ_{,αμ}·θ_{,ν} + θ_{,μ}·θ_{,αν}
            let mut dmetric = Matrix2::zeros();
            for m in 0..2 {
                for v in 0..2 {
                    dmetric[(m, v)] =
                        d2[d2_index(al, m)].dot(&d1[v]) + d1[m].dot(&d2[d2_index(al, v)]);
                }
            }
            let dmetric_con = -metric_con * dmetric * metric_con;
            // ∂_α b_{σβ} = θ_{,ασβ}·a_3 + θ_{,σβ}·∂_α a_3
            let mut db = Matrix2::zeros();
            for s in 0..2 {
                for b in 0..2 {
                    db[(s, b)] =
                        d3[d3_index(al, s, b)].dot(&a3) + d2[d2_index(s, b)].dot(&da3[al]);
                }
            }
            for t in 0..2 {
                for b in 0..2 {
                    let mut v = 0.0;
                    for s in 0..2 {
                        v += dmetric_con[(t, s)] * curv_cov[(s, b)] + metric_con[(t, s)] * db[(s, b)];
                    }
                    curv_mixed_deriv[al][(t, b)] = v;
                }
            }
        }

        Ok(SurfaceFrame {
            y,
            a_cov,
            a_con,
            metric_cov,
            metric_con,
            area,
            curv_cov,
            curv_mixed,
            christoffel,
            curv_mixed_deriv,
            d2,
        })
    }

    /// `min over the (nx+1)×(ny+1) grid of θ(y)·q`. The caller treats a
    /// non-positive value as failure of the confinement hypothesis.
    pub fn confinement_margin(&self, hs: &HalfSpace, grid: (usize, usize)) -> f64 {
        let (nx, ny) = grid;
        let q = hs.direction();
        par::min_indexed((nx + 1) * (ny + 1), |k| {
            let (i, j) = (k % (nx + 1), k / (nx + 1));
            self.map.value(self.domain.grid_point(nx, ny, i, j)).dot(&q)
        })
    }

    /// `min over the grid of a^3(y)·q`, with `a^3` oriented by the stored
    /// `a_1 ∧ a_2` convention. The sign is reported, never re-oriented.
    pub fn normal_alignment(&self, hs: &HalfSpace, grid: (usize, usize)) -> f64 {
        let (nx, ny) = grid;
        let q = hs.direction();
        par::min_indexed((nx + 1) * (ny + 1), |k| {
            let (i, j) = (k % (nx + 1), k / (nx + 1));
            let d = self.map.d1(self.domain.grid_point(nx, ny, i, j));
            let n = d[0].cross(&d[1]);
            (n / n.norm()).dot(&q)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng as _, SeedableRng};

    fn plate(edges: &[Edge]) -> Chart {
        Chart::builtin(BuiltinChart::Plate, Rect::new(0.0, 1.0, 0.0, 1.0), edges).unwrap()
    }

    fn cylinder() -> Chart {
        Chart::builtin(
            BuiltinChart::Cylinder,
            Rect::new(0.1, std::f64::consts::PI - 0.1, 0.0, 2.0),
            &[Edge::Bottom],
        )
        .unwrap()
    }

    #[test]
    fn plate_frame_is_flat() {
        let c = plate(&[Edge::Bottom]);
        let f = c.eval_frame([0.3, 0.7]).unwrap();
        assert_relative_eq!(f.metric_cov, Matrix2::identity(), epsilon = 1e-15);
        assert_relative_eq!(f.area, 1.0, epsilon = 1e-15);
        assert_eq!(f.curv_cov, Matrix2::zeros());
        assert_eq!(f.christoffel[0], Matrix2::zeros());
        assert_eq!(f.christoffel[1], Matrix2::zeros());
    }

    #[test]
    fn cylinder_frame_at_quarter_turn() {
        let c = cylinder();
        let f = c.eval_frame([std::f64::consts::FRAC_PI_2, 0.0]).unwrap();
        assert_relative_eq!(
            c.position([std::f64::consts::FRAC_PI_2, 0.0]),
            Vector3::new(0.0, 0.0, 1.0),
            epsilon = 1e-15
        );
        assert_relative_eq!(f.a_cov[0], Vector3::new(-1.0, 0.0, 0.0), epsilon = 1e-15);
        assert_relative_eq!(f.a_cov[1], Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
        assert_relative_eq!(f.metric_cov, Matrix2::identity(), epsilon = 1e-15);
    }

    #[test]
    fn sphere_cap_area_element() {
        let c = Chart::builtin(
            BuiltinChart::SphereCap,
            Rect::new(-0.5, 1.0, 0.1, std::f64::consts::FRAC_PI_2 * 0.9),
            &[Edge::Bottom],
        )
        .unwrap();
        let f = c.eval_frame([0.0, std::f64::consts::FRAC_PI_4]).unwrap();
        assert_relative_eq!(f.area, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn frame_duality_and_metric_inverse() {
        for chart in [cylinder(), plate(&[Edge::Left])] {
            let f = chart.eval_frame([0.4, 0.9]).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert_relative_eq!(
                        f.a_con[j].dot(&f.a_cov[i]),
                        expect,
                        epsilon = 1e-10
                    );
                }
            }
            let prod = f.metric_con * f.metric_cov;
            assert_relative_eq!(prod, Matrix2::identity(), epsilon = 1e-12);
            assert!(f.area > 0.0);
            assert_relative_eq!(f.normal().norm(), 1.0, epsilon = 1e-13);
            assert_relative_eq!(f.normal().dot(&f.a_cov[0]), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn gamma_plate_is_symmetric_gradient() {
        let c = plate(&[Edge::Bottom]);
        let f = c.eval_frame([0.2, 0.2]).unwrap();
        // η = (y1, 0, 0): ∂_1 η_1 = 1
        let s = SurfaceDisplacementSample {
            eta: [0.2, 0.0, 0.0],
            grad: [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
            hess3: Matrix2::zeros(),
        };
        let g = gamma(&f, &s);
        assert_eq!(g[(0, 0)], 1.0);
        assert_eq!(g[(0, 1)], 0.0);
        assert_eq!(g[(1, 1)], 0.0);
    }

    #[test]
    fn gamma_pure_normal_displacement_is_minus_curvature() {
        let c = cylinder();
        let f = c.eval_frame([std::f64::consts::FRAC_PI_2, 0.0]).unwrap();
        let mut s = SurfaceDisplacementSample::zero();
        s.eta[2] = 1.0;
        let g = gamma(&f, &s);
        assert_relative_eq!(g, -f.curv_cov, epsilon = 1e-14);
    }

    #[test]
    fn rho_plate_is_hessian() {
        let c = plate(&[Edge::Bottom]);
        let f = c.eval_frame([0.5, 0.5]).unwrap();
        // η_3 = y1²: hess = diag(2, 0)
        let s = SurfaceDisplacementSample {
            eta: [0.0, 0.0, 0.25],
            grad: [[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]],
            hess3: Matrix2::new(2.0, 0.0, 0.0, 0.0),
        };
        let r = rho(&f, &s);
        assert_eq!(r[(0, 0)], 2.0);
        assert_eq!(r[(0, 1)], 0.0);
        assert_eq!(r[(1, 1)], 0.0);
    }

    #[test]
    fn rho_pure_normal_unit_displacement() {
        let c = cylinder();
        let f = c.eval_frame([1.0, 0.5]).unwrap();
        let mut s = SurfaceDisplacementSample::zero();
        s.eta[2] = 1.0;
        let r = rho(&f, &s);
        let mut expect = Matrix2::zeros();
        for a in 0..2 {
            for b in 0..2 {
                for sig in 0..2 {
                    expect[(a, b)] -= f.b_mixed(sig, a) * f.curv_cov[(sig, b)];
                }
            }
        }
        assert_relative_eq!(r, 0.5 * (expect + expect.transpose()), epsilon = 1e-13);
    }

    /// ρ(η) against a finite-difference linearisation of the deformed
    /// second fundamental form b_{αβ}(θ + t η_i a^i).
    #[test]
    fn rho_matches_linearised_curvature_change() {
        let c = cylinder();
        let y = [1.1, 0.6];
        let f = c.eval_frame(y).unwrap();
        let mut s = SurfaceDisplacementSample::zero();
        s.eta[2] = 1.0;
        let r = rho(&f, &s);

        // deformed chart value θ_t(y) = θ(y) + t a_3(y); b via value-only FD
        let bt = |t: f64, y: [f64; 2]| -> Matrix2<f64> {
            let pos = |y: [f64; 2]| {
                let d = c.map.d1(y);
                let n = d[0].cross(&d[1]);
                c.map.value(y) + t * (n / n.norm())
            };
            let h = 1e-4;
            let dd = |a: usize, b: usize| {
                if a == b {
                    let mut e = [0.0; 2];
                    e[a] = h;
                    (pos([y[0] + e[0], y[1] + e[1]]) - 2.0 * pos(y)
                        + pos([y[0] - e[0], y[1] - e[1]]))
                        / (h * h)
                } else {
                    (pos([y[0] + h, y[1] + h]) - pos([y[0] + h, y[1] - h])
                        - pos([y[0] - h, y[1] + h])
                        + pos([y[0] - h, y[1] - h]))
                        / (4.0 * h * h)
                }
            };
            let d1a = (pos([y[0] + h, y[1]]) - pos([y[0] - h, y[1]])) / (2.0 * h);
            let d1b = (pos([y[0], y[1] + h]) - pos([y[0], y[1] - h])) / (2.0 * h);
            let n = d1a.cross(&d1b);
            let a3 = n / n.norm();
            let mut b = Matrix2::zeros();
            for a in 0..2 {
                for bb in 0..2 {
                    b[(a, bb)] = dd(a, bb).dot(&a3);
                }
            }
            b
        };
        let t = 1e-2;
        let fd = (bt(t, y) - bt(-t, y)) / (2.0 * t);
        for a in 0..2 {
            for b in 0..2 {
                assert!(
                    (r[(a, b)] - fd[(a, b)]).abs() < 2e-3,
                    "rho[{a}{b}] = {} vs fd {}",
                    r[(a, b)],
                    fd[(a, b)]
                );
            }
        }
    }

    #[test]
    fn gamma_and_rho_are_linear() {
        let c = cylinder();
        let f = c.eval_frame([0.8, 1.2]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut rand_sample = || {
                let mut s = SurfaceDisplacementSample::zero();
                for i in 0..3 {
                    s.eta[i] = rng.gen_range(-1.0..1.0);
                    for b in 0..2 {
                        s.grad[i][b] = rng.gen_range(-1.0..1.0);
                    }
                }
                let h12 = rng.gen_range(-1.0..1.0);
                s.hess3 = Matrix2::new(rng.gen_range(-1.0..1.0), h12, h12, rng.gen_range(-1.0..1.0));
                s
            };
            let s1 = rand_sample();
            let s2 = rand_sample();
            let sum = SurfaceDisplacementSample {
                eta: [
                    s1.eta[0] + s2.eta[0],
                    s1.eta[1] + s2.eta[1],
                    s1.eta[2] + s2.eta[2],
                ],
                grad: {
                    let mut g = [[0.0; 2]; 3];
                    for i in 0..3 {
                        for b in 0..2 {
                            g[i][b] = s1.grad[i][b] + s2.grad[i][b];
                        }
                    }
                    g
                },
                hess3: s1.hess3 + s2.hess3,
            };
            assert_relative_eq!(
                gamma(&f, &sum),
                gamma(&f, &s1) + gamma(&f, &s2),
                epsilon = 1e-12
            );
            assert_relative_eq!(rho(&f, &sum), rho(&f, &s1) + rho(&f, &s2), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_sample_gives_zero_strains() {
        let c = cylinder();
        let f = c.eval_frame([1.0, 1.0]).unwrap();
        let s = SurfaceDisplacementSample::zero();
        assert_eq!(gamma(&f, &s), Matrix2::zeros());
        assert_eq!(rho(&f, &s), Matrix2::zeros());
    }

    #[test]
    fn confinement_margin_values() {
        // plate shifted to z = 1
        let base = plate(&[Edge::Bottom]);
        let lifted = base.translated(Vector3::new(0.0, 0.0, 1.0));
        let q = HalfSpace::new(Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!(lifted.confinement_margin(&q, (20, 20)), 1.0, epsilon = 1e-15);
        // plate at z = 0: hypothesis fails with d = 0
        assert_relative_eq!(base.confinement_margin(&q, (20, 20)), 0.0, epsilon = 1e-15);
        // §5-style cylinder bounds: min θ·q = sin(0.1)
        let cyl = cylinder();
        assert_relative_eq!(
            cyl.confinement_margin(&q, (200, 200)),
            0.1f64.sin(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn normal_alignment_sign_follows_orientation() {
        let base = plate(&[Edge::Bottom]).translated(Vector3::new(0.0, 0.0, 1.0));
        let up = HalfSpace::new(Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let down = HalfSpace::new(Vector3::new(0.0, 0.0, -1.0)).unwrap();
        assert_relative_eq!(base.normal_alignment(&up, (10, 10)), 1.0, epsilon = 1e-15);
        assert_relative_eq!(base.normal_alignment(&down, (10, 10)), -1.0, epsilon = 1e-15);
        // stock cylinder points its normal inward; the swapped chart flips it
        let cyl = cylinder();
        assert!(cyl.normal_alignment(&up, (50, 50)) < 0.0);
        let swapped = cyl.swap_parameters();
        assert!(swapped.normal_alignment(&up, (50, 50)) > 0.0);
        assert_relative_eq!(
            swapped.normal_alignment(&up, (200, 200)),
            0.1f64.sin(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn margins_monotone_under_grid_refinement() {
        let cyl = cylinder();
        let q = HalfSpace::new(Vector3::new(0.2, 0.1, 0.95)).unwrap();
        let mut last_m = f64::INFINITY;
        let mut last_a = f64::INFINITY;
        for n in [25, 50, 100, 200] {
            let m = cyl.confinement_margin(&q, (n, n));
            let a = cyl.normal_alignment(&q, (n, n));
            assert!(m <= last_m + 1e-15);
            assert!(a <= last_a + 1e-15);
            last_m = m;
            last_a = a;
        }
    }

    #[test]
    fn builtin_bounds_validation() {
        assert!(matches!(
            Chart::builtin(
                BuiltinChart::Cylinder,
                Rect::new(0.0, 7.0, 0.0, 1.0),
                &[Edge::Bottom]
            ),
            Err(GeometryError::InvalidBounds(..))
        ));
        assert!(matches!(
            Chart::builtin(
                BuiltinChart::SphereCap,
                Rect::new(0.0, 1.0, -0.1, 1.0),
                &[Edge::Bottom]
            ),
            Err(GeometryError::InvalidBounds(..))
        ));
        // §5 hyperboloid bounds are valid
        Chart::builtin(
            BuiltinChart::Hyperboloid,
            Rect::new(0.1, std::f64::consts::PI - 0.1, -2.0, 2.0),
            &[Edge::Left, Edge::Right],
        )
        .unwrap();
    }

    #[test]
    fn empty_clamped_set_rejected() {
        assert!(matches!(
            Chart::builtin(BuiltinChart::Plate, Rect::new(0.0, 1.0, 0.0, 1.0), &[]),
            Err(GeometryError::EmptyClampedSet)
        ));
    }

    #[test]
    fn swapped_chart_derivatives_are_consistent() {
        let cyl = cylinder().swap_parameters();
        // finite differences of the swapped map vs its analytic d1/d2
        let y = [0.7, 1.3];
        let h = 1e-6;
        let v = |y: [f64; 2]| cyl.position(y);
        let fd1 = (v([y[0] + h, y[1]]) - v([y[0] - h, y[1]])) / (2.0 * h);
        let d1 = cyl.map.d1(y);
        assert_relative_eq!(fd1, d1[0], epsilon = 1e-8);
        let fd12 = (v([y[0] + h, y[1] + h]) - v([y[0] + h, y[1] - h]) - v([y[0] - h, y[1] + h])
            + v([y[0] - h, y[1] - h]))
            / (4.0 * h * h);
        assert_relative_eq!(fd12, cyl.map.d2(y)[1], epsilon = 1e-4);
    }
}
