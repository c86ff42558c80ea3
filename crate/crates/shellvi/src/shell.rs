//! Three-dimensional shell geometry and constitutive tensors.
//!
//! The shell occupies the image of `ω × [-ε, ε]` under
//! `Θ(y, x3ε) = θ(y) + x3ε a_3(y)`; everything here is expressed in the
//! scaled transverse variable `x3 ∈ [-1, 1]`. Frames, metric, Christoffel
//! symbols, and the elasticity tensor are evaluated analytically from the
//! surface frame, and the module also provides the order-in-ε expansion
//! residual report, the Kirchhoff-Love lifting of a midsurface field, and
//! transverse averaging.

use nalgebra::{Matrix2, Matrix3, Matrix6, Vector3, Vector6};
use thiserror::Error;

use crate::geometry::{Chart, GeometryError, SurfaceDisplacementSample, SurfaceFrame};

#[derive(Debug, Error)]
pub enum ShellError {
    #[error("3D frame degenerates at y = ({0}, {1}): det g = {2:e} (thickness too large for the curvature)")]
    DegenerateFrame(f64, f64, f64),
    #[error("invalid Lamé constants: need λ ≥ 0 and μ > 0, got λ = {0}, μ = {1}")]
    InvalidLame(f64, f64),
    #[error("deformed tangents are parallel at y = ({0}, {1})")]
    DegenerateDeformedFrame(f64, f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Lamé constants with `λ ≥ 0`, `μ > 0`.
#[derive(Debug, Clone, Copy)]
pub struct Lame {
    pub lambda: f64,
    pub mu: f64,
}

impl Lame {
    pub fn new(lambda: f64, mu: f64) -> Result<Self, ShellError> {
        if !(mu > 0.0) || !(lambda >= 0.0) {
            return Err(ShellError::InvalidLame(lambda, mu));
        }
        Ok(Lame { lambda, mu })
    }
}

/// Pointwise 3D frame of the thickened shell at `(y, x3)` for thickness
/// parameter `ε`.
#[derive(Debug, Clone)]
pub struct ShellFrame3D {
    pub y: [f64; 2],
    pub x3: f64,
    pub eps: f64,
    /// Covariant basis `[g_1, g_2, g_3]`; `g_3 = a_3` exactly.
    pub g_cov: [Vector3<f64>; 3],
    /// Contravariant basis `[g^1, g^2, g^3]`.
    pub g_con: [Vector3<f64>; 3],
    /// `g_{ij}`; the `(α,3)` entries are exactly zero and `g_{33} = 1`.
    pub metric_cov: Matrix3<f64>,
    /// `g^{ij}`.
    pub metric_con: Matrix3<f64>,
    /// `g = det(g_{ij}) > 0`.
    pub vol: f64,
    /// `Γ^σ_{αβ}(ε)`, stored as `[σ][(α, β)]`.
    gamma_surface: [Matrix2<f64>; 2],
    /// `Γ^3_{αβ}(ε)`.
    gamma_normal: Matrix2<f64>,
    /// `Γ^σ_{α3}(ε)`, stored as `[(σ, α)]`.
    gamma_shear: Matrix2<f64>,
}

impl ShellFrame3D {
    /// Full Christoffel symbol `Γ^p_{ij}(ε)`; the identities
    /// `Γ^3_{α3} = Γ^p_{33} = 0` hold exactly by construction.
    pub fn christoffel(&self, p: usize, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        match (p, i, j) {
            (0..=1, 0..=1, 0..=1) => self.gamma_surface[p][(i, j)],
            (2, 0..=1, 0..=1) => self.gamma_normal[(i, j)],
            (0..=1, 0..=1, 2) => self.gamma_shear[(p, i)],
            _ => 0.0,
        }
    }
}

/// Builds the 3D frame from a surface frame. At `ε·x3 = 0` every quantity
/// reduces bit-for-bit to the surface frame extended by the normal.
pub fn eval_shell_frame(
    frame: &SurfaceFrame,
    eps: f64,
    x3: f64,
) -> Result<ShellFrame3D, ShellError> {
    let t = eps * x3;
    let a3 = frame.a_cov[2];

    let (g1, g2) = if t == 0.0 {
        (frame.a_cov[0], frame.a_cov[1])
    } else {
        // g_α = a_α − ε x3 b^σ_α a_σ (exact)
        (
            frame.a_cov[0]
                - t * (frame.b_mixed(0, 0) * frame.a_cov[0] + frame.b_mixed(1, 0) * frame.a_cov[1]),
            frame.a_cov[1]
                - t * (frame.b_mixed(0, 1) * frame.a_cov[0] + frame.b_mixed(1, 1) * frame.a_cov[1]),
        )
    };
    let g_cov = [g1, g2, a3];

    // metric is block diagonal: g_{α3} = 0, g_{33} = 1 exactly
    let m11 = g1.dot(&g1);
    let m12 = g1.dot(&g2);
    let m22 = g2.dot(&g2);
    let det2 = m11 * m22 - m12 * m12;
    if !(det2 > 0.0) {
        return Err(ShellError::DegenerateFrame(frame.y[0], frame.y[1], det2));
    }
    let mut metric_cov = Matrix3::identity();
    metric_cov[(0, 0)] = m11;
    metric_cov[(0, 1)] = m12;
    metric_cov[(1, 0)] = m12;
    metric_cov[(1, 1)] = m22;

    let inv = 1.0 / det2;
    let c11 = m22 * inv;
    let c12 = -m12 * inv;
    let c22 = m11 * inv;
    let mut metric_con = Matrix3::identity();
    metric_con[(0, 0)] = c11;
    metric_con[(0, 1)] = c12;
    metric_con[(1, 0)] = c12;
    metric_con[(1, 1)] = c22;

    let (gc1, gc2) = if t == 0.0 {
        (frame.a_con[0], frame.a_con[1])
    } else {
        (c11 * g1 + c12 * g2, c12 * g1 + c22 * g2)
    };
    let g_con = [gc1, gc2, a3];

    // ∂_α g_β = Γ^σ_{αβ} a_σ + b_{αβ} a_3
    //           − ε x3 [ (∂_α b^σ_β) a_σ + b^σ_β (Γ^τ_{ασ} a_τ + b_{ασ} a_3) ]
    let mut gamma_surface = [Matrix2::zeros(); 2];
    let mut gamma_normal = Matrix2::zeros();
    for al in 0..2 {
        for be in al..2 {
            let mut d = frame.curv_cov[(al, be)] * a3;
            for s in 0..2 {
                d += frame.gamma_sym(s, al, be) * frame.a_cov[s];
            }
            if t != 0.0 {
                for s in 0..2 {
                    d -= t * frame.b_mixed_deriv(al, s, be) * frame.a_cov[s];
                    let bsb = frame.b_mixed(s, be);
                    d -= t * bsb * frame.curv_cov[(al, s)] * a3;
                    for tau in 0..2 {
                        d -= t * bsb * frame.gamma_sym(tau, al, s) * frame.a_cov[tau];
                    }
                }
            }
            for p in 0..2 {
                let v = d.dot(&g_con[p]);
                gamma_surface[p][(al, be)] = v;
                gamma_surface[p][(be, al)] = v;
            }
            let v = d.dot(&a3);
            gamma_normal[(al, be)] = v;
            gamma_normal[(be, al)] = v;
        }
    }
    // Γ^σ_{α3}(ε) = (∂_α a_3)·g^σ = −b^τ_α a_τ · g^σ
    let mut gamma_shear = Matrix2::zeros();
    for al in 0..2 {
        let da3 = -(frame.b_mixed(0, al) * frame.a_cov[0] + frame.b_mixed(1, al) * frame.a_cov[1]);
        for s in 0..2 {
            gamma_shear[(s, al)] = da3.dot(&g_con[s]);
        }
    }

    Ok(ShellFrame3D {
        y: frame.y,
        x3,
        eps,
        g_cov,
        g_con,
        metric_cov,
        metric_con,
        vol: det2,
        gamma_surface,
        gamma_normal,
        gamma_shear,
    })
}

/// Tensor-component pair order used throughout: `(11, 22, 33, 23, 13, 12)`.
pub const PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

/// Multiplicity weights for contracting symmetric tensors in pair form.
pub const PAIR_WEIGHTS: [f64; 6] = [1.0, 1.0, 1.0, 2.0, 2.0, 2.0];

fn pair_index(i: usize, j: usize) -> usize {
    match if i <= j { (i, j) } else { (j, i) } {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (1, 2) => 3,
        (0, 2) => 4,
        (0, 1) => 5,
        _ => unreachable!(),
    }
}

/// Contravariant elasticity tensor `A^{ijkl}` in factor-free pair storage.
#[derive(Debug, Clone)]
pub struct ElasticityTensor {
    /// `m[(p, q)] = A^{(pair p)(pair q)}`.
    pub m: Matrix6<f64>,
    pub lame: Lame,
}

impl ElasticityTensor {
    fn from_metric_con(gc: &Matrix3<f64>, lame: Lame) -> Self {
        let mut m = Matrix6::zeros();
        for (p, &(i, j)) in PAIRS.iter().enumerate() {
            for (q, &(k, l)) in PAIRS.iter().enumerate() {
                m[(p, q)] = lame.lambda * gc[(i, j)] * gc[(k, l)]
                    + lame.mu * (gc[(i, k)] * gc[(j, l)] + gc[(i, l)] * gc[(j, k)]);
            }
        }
        ElasticityTensor { m, lame }
    }

    /// `A^{ijkl}` for arbitrary index order.
    pub fn comp(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.m[(pair_index(i, j), pair_index(k, l))]
    }

    /// Quadratic/bilinear contraction `A^{ijkl} s_{kl} t_{ij}` of two
    /// symmetric tensors given in pair form.
    pub fn contract(&self, s: &Vector6<f64>, t: &Vector6<f64>) -> f64 {
        let mut acc = 0.0;
        for p in 0..6 {
            for q in 0..6 {
                acc += PAIR_WEIGHTS[p] * PAIR_WEIGHTS[q] * self.m[(p, q)] * t[p] * s[q];
            }
        }
        acc
    }

    /// Smallest eigenvalue of the stored pair matrix; positive iff the
    /// tensor is positive definite on symmetric tensors.
    pub fn min_eigenvalue(&self) -> f64 {
        let sym = nalgebra::SymmetricEigen::new(0.5 * (self.m + self.m.transpose()));
        sym.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Largest magnitude among the structurally-zero blocks
    /// `A^{αβσ3}` and `A^{α333}`; exactly zero for frames of the shell map.
    pub fn zero_block_max(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in 0..2 {
            for b in 0..2 {
                for s in 0..2 {
                    worst = worst.max(self.comp(a, b, s, 2).abs());
                }
            }
            worst = worst.max(self.comp(a, 2, 2, 2).abs());
        }
        worst
    }
}

/// `A^{ijkl}(ε)` at a 3D frame point.
pub fn elasticity_tensor(sf: &ShellFrame3D, lame: Lame) -> ElasticityTensor {
    ElasticityTensor::from_metric_con(&sf.metric_con, lame)
}

/// The ε → 0 limit tensor `A^{ijkl}(0)` built from the surface metric.
pub fn limit_elasticity_tensor(frame: &SurfaceFrame, lame: Lame) -> ElasticityTensor {
    let mut gc = Matrix3::identity();
    gc[(0, 0)] = frame.metric_con[(0, 0)];
    gc[(0, 1)] = frame.metric_con[(0, 1)];
    gc[(1, 0)] = frame.metric_con[(1, 0)];
    gc[(1, 1)] = frame.metric_con[(1, 1)];
    ElasticityTensor::from_metric_con(&gc, lame)
}

/// Pair order for 2×2 symmetric tensors: `(11, 22, 12)`.
pub const PAIRS2: [(usize, usize); 3] = [(0, 0), (1, 1), (0, 1)];
pub const PAIR_WEIGHTS2: [f64; 3] = [1.0, 1.0, 2.0];

fn pair_index2(i: usize, j: usize) -> usize {
    match if i <= j { (i, j) } else { (j, i) } {
        (0, 0) => 0,
        (1, 1) => 1,
        (0, 1) => 2,
        _ => unreachable!(),
    }
}

/// Plane-stress-reduced membrane tensor
/// `a^{αβστ} = (4λμ/(λ+2μ)) a^{αβ} a^{στ} + 2μ (a^{ασ}a^{βτ} + a^{ατ}a^{βσ})`.
#[derive(Debug, Clone)]
pub struct ReducedMembraneTensor {
    pub m: Matrix3<f64>,
}

impl ReducedMembraneTensor {
    pub fn comp(&self, a: usize, b: usize, s: usize, t: usize) -> f64 {
        self.m[(pair_index2(a, b), pair_index2(s, t))]
    }

    /// `a^{αβστ} s_{στ} t_{αβ}` for symmetric 2×2 tensors in pair form.
    pub fn contract(&self, s: &[f64; 3], t: &[f64; 3]) -> f64 {
        let mut acc = 0.0;
        for p in 0..3 {
            for q in 0..3 {
                acc += PAIR_WEIGHTS2[p] * PAIR_WEIGHTS2[q] * self.m[(p, q)] * t[p] * s[q];
            }
        }
        acc
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = nalgebra::SymmetricEigen::new(0.5 * (self.m + self.m.transpose()));
        sym.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

pub fn reduced_membrane_tensor(frame: &SurfaceFrame, lame: Lame) -> ReducedMembraneTensor {
    let ac = &frame.metric_con;
    let c = 4.0 * lame.lambda * lame.mu / (lame.lambda + 2.0 * lame.mu);
    let mut m = Matrix3::zeros();
    for (p, &(a, b)) in PAIRS2.iter().enumerate() {
        for (q, &(s, t)) in PAIRS2.iter().enumerate() {
            m[(p, q)] = c * ac[(a, b)] * ac[(s, t)]
                + 2.0 * lame.mu * (ac[(a, s)] * ac[(b, t)] + ac[(a, t)] * ac[(b, s)]);
        }
    }
    ReducedMembraneTensor { m }
}

/// Symmetric scaled strain tensor `e_{i‖j}(ε; v)` at a point.
#[derive(Debug, Clone, Copy)]
pub struct ScaledStrain {
    pub e: Matrix3<f64>,
}

impl ScaledStrain {
    pub fn pairs(&self) -> Vector6<f64> {
        Vector6::new(
            self.e[(0, 0)],
            self.e[(1, 1)],
            self.e[(2, 2)],
            self.e[(1, 2)],
            self.e[(0, 2)],
            self.e[(0, 1)],
        )
    }
}

/// Scaled linearised strains: transverse derivatives carry `1/ε` factors,
/// `e_{3‖3} = (1/ε) ∂_3 v_3`.
///
/// `v_grad[i][j] = ∂_j v_i` with `j = 2` the scaled transverse derivative.
pub fn scaled_strains(
    sf: &ShellFrame3D,
    eps: f64,
    v_val: &[f64; 3],
    v_grad: &[[f64; 3]; 3],
) -> ScaledStrain {
    let inv_eps = 1.0 / eps;
    let mut e = Matrix3::zeros();
    for a in 0..2 {
        for b in a..2 {
            let mut v = 0.5 * (v_grad[a][b] + v_grad[b][a]);
            for p in 0..3 {
                v -= sf.christoffel(p, a, b) * v_val[p];
            }
            e[(a, b)] = v;
            e[(b, a)] = v;
        }
        let mut v = 0.5 * (inv_eps * v_grad[a][2] + v_grad[2][a]);
        for s in 0..2 {
            v -= sf.christoffel(s, a, 2) * v_val[s];
        }
        e[(a, 2)] = v;
        e[(2, a)] = v;
    }
    e[(2, 2)] = inv_eps * v_grad[2][2];
    ScaledStrain { e }
}

/// One row of the expansion-residual report.
#[derive(Debug, Clone)]
pub struct ExpansionRow {
    pub quantity: &'static str,
    /// `(ε, max-over-grid residual)` pairs, in the caller's ε order.
    pub residuals: Vec<(f64, f64)>,
    /// Log-log slope fitted over residuals above the noise floor;
    /// `None` when the identity is exact (all residuals at roundoff).
    pub fitted_slope: Option<f64>,
}

const EXPANSION_QUANTITIES: [&str; 7] = [
    "elasticity",
    "volume",
    "christoffel_surface",
    "christoffel_normal",
    "christoffel_shear",
    "basis_cov",
    "basis_con",
];

/// Sup-norm residuals of each first/second-order expansion of the 3D
/// quantities around ε = 0, with fitted log-log slopes.
///
/// Exact identities (flat charts, or the structurally exact rows) report
/// residuals at roundoff level and no slope.
pub fn expansion_residuals(
    chart: &Chart,
    lame: Lame,
    eps_list: &[f64],
    grid: (usize, usize, usize),
) -> Result<Vec<ExpansionRow>, ShellError> {
    let (n1, n2, n3) = grid;
    let dom = chart.domain();
    let mut frames = Vec::with_capacity((n1 + 1) * (n2 + 1));
    for j in 0..=n2 {
        for i in 0..=n1 {
            frames.push(chart.eval_frame(dom.grid_point(n1, n2, i, j))?);
        }
    }
    let x3s: Vec<f64> = (0..=n3).map(|k| -1.0 + 2.0 * k as f64 / n3 as f64).collect();

    let mut table = vec![Vec::with_capacity(eps_list.len()); EXPANSION_QUANTITIES.len()];
    for &eps in eps_list {
        let mut worst = [0.0f64; 7];
        for f in &frames {
            let a0 = limit_elasticity_tensor(f, lame);
            for &x3 in &x3s {
                let sf = eval_shell_frame(f, eps, x3)?;
                let t = eps * x3;
                // elasticity: A(ε) − A(0)
                let ae = elasticity_tensor(&sf, lame);
                let mut d = 0.0f64;
                for p in 0..6 {
                    for q in 0..6 {
                        d = d.max((ae.m[(p, q)] - a0.m[(p, q)]).abs());
                    }
                }
                worst[0] = worst[0].max(d);
                // volume: g(ε) − a
                worst[1] = worst[1].max((sf.vol - f.area).abs());
                // Γ^σ_{αβ}(ε) − [Γ^σ_{αβ} − εx3(∂_α b^σ_β + Γ^σ_{ατ} b^τ_β − Γ^τ_{αβ} b^σ_τ)]
                let mut d = 0.0f64;
                for s in 0..2 {
                    for a in 0..2 {
                        for b in 0..2 {
                            let mut base = f.gamma_sym(s, a, b);
                            let mut corr = f.b_mixed_deriv(a, s, b);
                            for tau in 0..2 {
                                corr += f.gamma_sym(s, a, tau) * f.b_mixed(tau, b);
                                corr -= f.gamma_sym(tau, a, b) * f.b_mixed(s, tau);
                            }
                            base -= t * corr;
                            d = d.max((sf.christoffel(s, a, b) - base).abs());
                        }
                    }
                }
                worst[2] = worst[2].max(d);
                // Γ^3_{αβ}(ε) − [b_{αβ} − εx3 b^σ_α b_{σβ}] (exact)
                let mut d = 0.0f64;
                for a in 0..2 {
                    for b in 0..2 {
                        let mut base = f.curv_cov[(a, b)];
                        for s in 0..2 {
                            base -= t * f.b_mixed(s, a) * f.curv_cov[(s, b)];
                        }
                        d = d.max((sf.christoffel(2, a, b) - base).abs());
                    }
                }
                worst[3] = worst[3].max(d);
                // Γ^σ_{α3}(ε) − [−b^σ_α − εx3 b^τ_α b^σ_τ]
                let mut d = 0.0f64;
                for s in 0..2 {
                    for a in 0..2 {
                        let mut base = -f.b_mixed(s, a);
                        for tau in 0..2 {
                            base -= t * f.b_mixed(tau, a) * f.b_mixed(s, tau);
                        }
                        d = d.max((sf.christoffel(s, a, 2) - base).abs());
                    }
                }
                worst[4] = worst[4].max(d);
                // g_α(ε) − [a_α − εx3 b^σ_α a_σ] (exact)
                let mut d = 0.0f64;
                for a in 0..2 {
                    let mut base = f.a_cov[a];
                    for s in 0..2 {
                        base -= t * f.b_mixed(s, a) * f.a_cov[s];
                    }
                    d = d.max((sf.g_cov[a] - base).norm());
                }
                worst[5] = worst[5].max(d);
                // g^α(ε) − [a^α + εx3 b^α_σ a^σ]
                let mut d = 0.0f64;
                for a in 0..2 {
                    let mut base = f.a_con[a];
                    for s in 0..2 {
                        base += t * f.b_mixed(a, s) * f.a_con[s];
                    }
                    d = d.max((sf.g_con[a] - base).norm());
                }
                worst[6] = worst[6].max(d);
            }
        }
        for (q, w) in worst.iter().enumerate() {
            table[q].push((eps, *w));
        }
    }

    Ok(EXPANSION_QUANTITIES
        .iter()
        .zip(table)
        .map(|(name, residuals)| {
            let fitted_slope = fit_loglog_slope(&residuals);
            ExpansionRow {
                quantity: name,
                residuals,
                fitted_slope,
            }
        })
        .collect())
}

/// Least-squares slope of `ln r` against `ln ε`, ignoring residuals at the
/// roundoff floor; `None` if fewer than two usable points remain.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, r)| *r > 1e-14)
        .map(|(e, r)| (e.ln(), r.ln()))
        .collect();
    if usable.len() < 2 {
        return None;
    }
    let n = usable.len() as f64;
    let sx: f64 = usable.iter().map(|p| p.0).sum();
    let sy: f64 = usable.iter().map(|p| p.1).sum();
    let sxx: f64 = usable.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = usable.iter().map(|p| p.0 * p.1).sum();
    Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

/// Transverse average `½ ∫_{-1}^{1} f(x3) dx3` by 3-point Gauss quadrature
/// (exact through degree 5).
pub fn transverse_average(f: impl Fn(f64) -> f64) -> f64 {
    let p = (3.0f64 / 5.0).sqrt();
    0.5 * (5.0 / 9.0 * f(-p) + 8.0 / 9.0 * f(0.0) + 5.0 / 9.0 * f(p))
}

/// Kirchhoff-Love lift of a midsurface displacement field: the 3D field
/// whose points stay on normals to the deformed midsurface at unchanged
/// distance.
pub struct KlLift<'a, F>
where
    F: Fn([f64; 2]) -> SurfaceDisplacementSample,
{
    chart: &'a Chart,
    eps: f64,
    zeta: F,
}

impl<'a, F> KlLift<'a, F>
where
    F: Fn([f64; 2]) -> SurfaceDisplacementSample,
{
    pub fn new(chart: &'a Chart, eps: f64, zeta: F) -> Self {
        KlLift { chart, eps, zeta }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn midplane(&self, y: [f64; 2]) -> SurfaceDisplacementSample {
        (self.zeta)(y)
    }

    /// Unit normal of the deformed midsurface, from the deformed tangents
    /// `a_α + ∂_α(ζ_i a^i)`.
    pub fn deformed_normal(&self, y: [f64; 2]) -> Result<Vector3<f64>, ShellError> {
        let f = self.chart.eval_frame(y)?;
        let s = (self.zeta)(y);
        let mut tangents = [Vector3::zeros(); 2];
        for al in 0..2 {
            // ∂_α(ζ_i a^i) = (ζ_{σ;α}) a^σ + (∂_α ζ_3 + b^σ_α ζ_σ) a_3
            let mut v = f.a_cov[al];
            for sig in 0..2 {
                let mut cov = s.grad[sig][al];
                for tau in 0..2 {
                    cov -= f.gamma_sym(tau, al, sig) * s.eta[tau];
                }
                cov -= f.curv_cov[(al, sig)] * s.eta[2];
                v += cov * f.a_con[sig];
            }
            let mut n3 = s.grad[2][al];
            for sig in 0..2 {
                n3 += f.b_mixed(sig, al) * s.eta[sig];
            }
            v += n3 * f.a_cov[2];
            tangents[al] = v;
        }
        let n = tangents[0].cross(&tangents[1]);
        let nn = n.norm();
        if nn < crate::geometry::DEGENERACY_TOL {
            return Err(ShellError::DegenerateDeformedFrame(y[0], y[1]));
        }
        Ok(n / nn)
    }

    /// Covariant components `u_i(y, x3)` of the lifted field.
    pub fn eval(&self, y: [f64; 2], x3: f64) -> Result<[f64; 3], ShellError> {
        let f = self.chart.eval_frame(y)?;
        let s = (self.zeta)(y);
        let n = self.deformed_normal(y)?;
        let t = self.eps * x3;
        let mut u = [0.0; 3];
        for be in 0..2 {
            let mut v = s.eta[be];
            for sig in 0..2 {
                v -= t * f.b_mixed(sig, be) * s.eta[sig];
            }
            v += t * n.dot(&f.a_cov[be]);
            for sig in 0..2 {
                v -= t * t * f.b_mixed(sig, be) * n.dot(&f.a_cov[sig]);
            }
            u[be] = v;
        }
        u[2] = s.eta[2] + t * (n.dot(&f.a_cov[2]) - 1.0);
        Ok(u)
    }

    /// Deformed position of the lifted material point: the deformed
    /// midsurface point plus `ε x3` along the deformed normal.
    pub fn deformed_position(&self, y: [f64; 2], x3: f64) -> Result<Vector3<f64>, ShellError> {
        let f = self.chart.eval_frame(y)?;
        let s = (self.zeta)(y);
        let n = self.deformed_normal(y)?;
        let mut p = self.chart.position(y) + self.eps * x3 * n;
        for i in 0..3 {
            p += s.eta[i] * f.a_con[i];
        }
        Ok(p)
    }

    /// Transverse average of the covariant components by quadrature.
    pub fn average(&self, y: [f64; 2]) -> Result<[f64; 3], ShellError> {
        let p = (3.0f64 / 5.0).sqrt();
        let w = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let xs = [-p, 0.0, p];
        let mut avg = [0.0; 3];
        for (x3, wt) in xs.iter().zip(w) {
            let u = self.eval(y, *x3)?;
            for i in 0..3 {
                avg[i] += 0.5 * wt * u[i];
            }
        }
        Ok(avg)
    }

    /// Closed form of the transverse average: the tangential components
    /// pick up a curvature correction quadratic in ε, the normal component
    /// is the midplane trace. Obtained by integrating the component
    /// expansion of the lift exactly in x3.
    pub fn average_closed_form(&self, y: [f64; 2]) -> Result<[f64; 3], ShellError> {
        let f = self.chart.eval_frame(y)?;
        let s = (self.zeta)(y);
        let n = self.deformed_normal(y)?;
        let mut avg = [0.0; 3];
        for be in 0..2 {
            let mut v = s.eta[be];
            for sig in 0..2 {
                // ½∫ x3² dx3 = 1/3
                v -= (self.eps * self.eps / 3.0) * f.b_mixed(sig, be) * n.dot(&f.a_cov[sig]);
            }
            avg[be] = v;
        }
        avg[2] = s.eta[2];
        Ok(avg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BuiltinChart, Chart, Edge, Rect};
    use approx::assert_relative_eq;

    fn plate() -> Chart {
        Chart::builtin(
            BuiltinChart::Plate,
            Rect::new(0.0, 1.0, 0.0, 1.0),
            &[Edge::Bottom],
        )
        .unwrap()
    }

    fn cylinder() -> Chart {
        Chart::builtin(
            BuiltinChart::Cylinder,
            Rect::new(0.1, std::f64::consts::PI - 0.1, 0.0, 2.0),
            &[Edge::Bottom],
        )
        .unwrap()
    }

    fn lame(l: f64, m: f64) -> Lame {
        Lame::new(l, m).unwrap()
    }

    #[test]
    fn plate_shell_frame_is_cartesian() {
        let f = plate().eval_frame([0.4, 0.6]).unwrap();
        let sf = eval_shell_frame(&f, 0.3, 0.7).unwrap();
        assert_eq!(sf.vol, 1.0);
        assert_relative_eq!(sf.metric_cov, Matrix3::identity(), epsilon = 1e-15);
        for p in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(sf.christoffel(p, i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn midplane_frame_reduces_to_surface() {
        let f = cylinder().eval_frame([1.0, 0.5]).unwrap();
        let sf = eval_shell_frame(&f, 0.2, 0.0).unwrap();
        assert_eq!(sf.g_cov[0], f.a_cov[0]);
        assert_eq!(sf.g_cov[1], f.a_cov[1]);
        assert_eq!(sf.g_cov[2], f.a_cov[2]);
        assert_eq!(sf.g_con[0], f.a_con[0]);
        assert_eq!(sf.g_con[1], f.a_con[1]);
    }

    #[test]
    fn shell_frame_duality_and_zero_structure() {
        let f = cylinder().eval_frame([0.8, 1.1]).unwrap();
        let sf = eval_shell_frame(&f, 0.15, -0.6).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(sf.g_con[j].dot(&sf.g_cov[i]), expect, epsilon = 1e-10);
            }
        }
        let prod = sf.metric_con * sf.metric_cov;
        assert_relative_eq!(prod, Matrix3::identity(), epsilon = 1e-12);
        // Γ^3_{α3} = Γ^p_{33} = 0 exactly
        for a in 0..2 {
            assert_eq!(sf.christoffel(2, a, 2), 0.0);
        }
        for p in 0..3 {
            assert_eq!(sf.christoffel(p, 2, 2), 0.0);
        }
    }

    #[test]
    fn cylinder_tangent_contraction() {
        // g_1 = a_1 (1 − ε x3 b^1_1) on the cylinder at (π/2, 0)
        let f = cylinder().eval_frame([std::f64::consts::FRAC_PI_2, 0.0]).unwrap();
        let sf = eval_shell_frame(&f, 0.1, 1.0).unwrap();
        let factor = 1.0 - 0.1 * f.b_mixed(0, 0);
        assert_relative_eq!(sf.g_cov[0], factor * f.a_cov[0], epsilon = 1e-14);
    }

    #[test]
    fn too_thick_shell_degenerates() {
        // cylinder has b^1_1 = ±1; ε x3 beyond 1 flips the tangent
        let f = cylinder().eval_frame([1.0, 1.0]).unwrap();
        let bad = f.b_mixed(0, 0).abs().recip() * 1.0;
        assert!(matches!(
            eval_shell_frame(&f, 1.0 * bad, 1.0),
            Err(ShellError::DegenerateFrame(..))
        ));
    }

    #[test]
    fn elasticity_plate_values() {
        let f = plate().eval_frame([0.5, 0.5]).unwrap();
        let sf = eval_shell_frame(&f, 0.2, 0.3).unwrap();
        let a = elasticity_tensor(&sf, lame(2.0, 3.0));
        assert_relative_eq!(a.comp(2, 2, 2, 2), 8.0, epsilon = 1e-14);
        let a01 = elasticity_tensor(&sf, lame(0.0, 1.0));
        assert_eq!(a01.comp(0, 0, 1, 1), 0.0);
        assert_relative_eq!(a01.comp(0, 1, 0, 1), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn elasticity_zero_blocks_are_exact() {
        let f = cylinder().eval_frame([1.3, 0.4]).unwrap();
        let sf = eval_shell_frame(&f, 0.2, 0.9).unwrap();
        let a = elasticity_tensor(&sf, lame(1.7, 0.9));
        assert_eq!(a.zero_block_max(), 0.0);
        assert!(a.min_eigenvalue() > 0.0);
    }

    #[test]
    fn invalid_lame_rejected() {
        assert!(matches!(Lame::new(1.0, 0.0), Err(ShellError::InvalidLame(..))));
        assert!(matches!(Lame::new(-0.1, 1.0), Err(ShellError::InvalidLame(..))));
    }

    #[test]
    fn limit_tensor_identity_metric_blocks() {
        let f = plate().eval_frame([0.2, 0.8]).unwrap();
        let a = limit_elasticity_tensor(&f, lame(2.0, 3.0));
        // A^{α3σ3}(0) = μ a^{ασ}
        for al in 0..2 {
            for s in 0..2 {
                let expect = if al == s { 3.0 } else { 0.0 };
                assert_relative_eq!(a.comp(al, 2, s, 2), expect, epsilon = 1e-15);
            }
        }
        let a11 = limit_elasticity_tensor(&f, lame(1.0, 1.0));
        for al in 0..2 {
            for be in 0..2 {
                let expect = if al == be { 1.0 } else { 0.0 };
                assert_relative_eq!(a11.comp(al, be, 2, 2), expect, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn limit_tensor_equals_shell_tensor_at_midplane() {
        let f = cylinder().eval_frame([0.9, 1.7]).unwrap();
        let l = lame(1.3, 0.8);
        let a0 = limit_elasticity_tensor(&f, l);
        let sf = eval_shell_frame(&f, 0.17, 0.0).unwrap();
        let ae = elasticity_tensor(&sf, l);
        assert_eq!(a0.m, ae.m);
    }

    #[test]
    fn limit_tensor_is_eps_limit() {
        let f = cylinder().eval_frame([1.0, 0.3]).unwrap();
        let l = lame(2.0, 1.0);
        let a0 = limit_elasticity_tensor(&f, l);
        let mut last = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3] {
            let ae = elasticity_tensor(&eval_shell_frame(&f, eps, 1.0).unwrap(), l);
            let mut d = 0.0f64;
            for p in 0..6 {
                for q in 0..6 {
                    d = d.max((ae.m[(p, q)] - a0.m[(p, q)]).abs());
                }
            }
            // O(ε) decay
            assert!(d < last * 0.2, "residual {d} at eps {eps}");
            last = d;
        }
    }

    #[test]
    fn reduced_tensor_values() {
        let f = plate().eval_frame([0.1, 0.1]).unwrap();
        let a = reduced_membrane_tensor(&f, lame(2.0, 3.0));
        assert_relative_eq!(a.comp(0, 0, 0, 0), 15.0, epsilon = 1e-14);
        let a01 = reduced_membrane_tensor(&f, lame(0.0, 1.0));
        assert_eq!(a01.comp(0, 0, 1, 1), 0.0);
        assert_relative_eq!(a01.comp(0, 1, 0, 1), 2.0, epsilon = 1e-15);
        assert!(a.min_eigenvalue() > 0.0);
    }

    /// The reduced tensor equals the transverse-integration factor 2 times
    /// the static condensation of A(0).
    #[test]
    fn reduced_tensor_is_twice_condensed_limit() {
        let charts = [cylinder(), plate()];
        for chart in &charts {
            let f = chart.eval_frame([0.5, 0.5]).unwrap();
            let l = lame(1.9, 0.7);
            let red = reduced_membrane_tensor(&f, l);
            let a0 = limit_elasticity_tensor(&f, l);
            for a in 0..2 {
                for b in 0..2 {
                    for s in 0..2 {
                        for t in 0..2 {
                            let cond = a0.comp(a, b, s, t)
                                - a0.comp(a, b, 2, 2) * a0.comp(2, 2, s, t) / a0.comp(2, 2, 2, 2);
                            assert_relative_eq!(
                                red.comp(a, b, s, t),
                                2.0 * cond,
                                epsilon = 1e-12
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn scaled_strain_transverse_stretch() {
        let f = plate().eval_frame([0.5, 0.5]).unwrap();
        for eps in [0.05, 0.3, 1.0] {
            let sf = eval_shell_frame(&f, eps, 0.2).unwrap();
            // v = (0, 0, x3)
            let grad = [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
            let e = scaled_strains(&sf, eps, &[0.0, 0.0, 0.2], &grad);
            assert_relative_eq!(e.e[(2, 2)], 1.0 / eps, epsilon = 1e-14);
            assert_eq!(e.e[(0, 0)], 0.0);
            assert_eq!(e.e[(0, 2)], 0.0);
        }
    }

    #[test]
    fn scaled_strain_shear_component() {
        let f = plate().eval_frame([0.5, 0.5]).unwrap();
        let eps = 0.5;
        let sf = eval_shell_frame(&f, eps, 0.1).unwrap();
        // v = (x3, 0, 0)
        let grad = [[0.0, 0.0, 1.0], [0.0; 3], [0.0; 3]];
        let e = scaled_strains(&sf, eps, &[0.1, 0.0, 0.0], &grad);
        assert_relative_eq!(e.e[(0, 2)], 1.0, epsilon = 1e-15);
        assert_eq!(e.e[(2, 2)], 0.0);
        assert_eq!(e.e[(1, 2)], 0.0);
    }

    #[test]
    fn scaled_strain_zero_field() {
        let f = cylinder().eval_frame([1.0, 1.0]).unwrap();
        let sf = eval_shell_frame(&f, 0.2, -0.4).unwrap();
        let e = scaled_strains(&sf, 0.2, &[0.0; 3], &[[0.0; 3]; 3]);
        assert_eq!(e.e, Matrix3::zeros());
    }

    /// Composing the coordinate scaling with the unscaled strain formula
    /// reproduces the scaled strains on an analytic field.
    #[test]
    fn scaled_strains_match_unscaled_change_of_variables() {
        let chart = cylinder();
        let eps = 0.3;
        // unscaled field v^ε(y, t) with t = ε x3, polynomial in all vars
        let v_eps = |y: [f64; 2], t: f64| -> [f64; 3] {
            [y[0] * t + y[1], 0.5 * t * t + y[0], y[1] * t]
        };
        let dv_eps = |y: [f64; 2], t: f64| -> [[f64; 3]; 3] {
            // rows: i, cols: (∂_1, ∂_2, ∂_t)
            [[t, 1.0, y[0]], [1.0, 0.0, t], [0.0, t, y[1]]]
        };
        let y = [1.2, 0.7];
        let x3 = 0.4;
        let t = eps * x3;
        let f = chart.eval_frame(y).unwrap();
        let sf = eval_shell_frame(&f, eps, x3).unwrap();

        // scaled field v(y, x3) = v^ε(y, ε x3): ∂_3 v = ε ∂_t v^ε
        let val = v_eps(y, t);
        let de = dv_eps(y, t);
        let mut grad = [[0.0; 3]; 3];
        for i in 0..3 {
            grad[i][0] = de[i][0];
            grad[i][1] = de[i][1];
            grad[i][2] = eps * de[i][2];
        }
        let scaled = scaled_strains(&sf, eps, &val, &grad);

        // unscaled strains at the same physical point:
        // e^ε_{i‖j} = ½(∂^ε_j v_i + ∂^ε_i v_j) − Γ^p_{ij} v_p,
        // with ∂^ε_3 the physical transverse derivative.
        let mut direct = Matrix3::zeros();
        let dphys = de;
        for i in 0..3 {
            for j in 0..3 {
                let mut v = 0.5 * (dphys[i][j] + dphys[j][i]);
                for p in 0..3 {
                    v -= sf.christoffel(p, i, j) * val[p];
                }
                direct[(i, j)] = v;
            }
        }
        assert_relative_eq!(scaled.e, direct, epsilon = 1e-12);
    }

    #[test]
    fn expansion_residuals_vanish_on_plate() {
        let rows = expansion_residuals(&plate(), lame(1.0, 1.0), &[0.1, 0.01], (4, 4, 2)).unwrap();
        for row in rows {
            for (_, r) in row.residuals {
                assert!(r <= 1e-14, "{} residual {r}", row.quantity);
            }
            assert!(row.fitted_slope.is_none());
        }
    }

    #[test]
    fn expansion_slopes_on_cylinder() {
        let rows = expansion_residuals(
            &cylinder(),
            lame(1.0, 1.0),
            &[1e-1, 1e-2, 1e-3],
            (6, 6, 4),
        )
        .unwrap();
        let by_name = |n: &str| rows.iter().find(|r| r.quantity == n).unwrap();
        let s = by_name("elasticity").fitted_slope.unwrap();
        assert!((0.9..=1.1).contains(&s), "elasticity slope {s}");
        let s = by_name("volume").fitted_slope.unwrap();
        assert!((0.9..=1.1).contains(&s), "volume slope {s}");
        let s = by_name("christoffel_shear").fitted_slope.unwrap();
        assert!((1.8..=2.2).contains(&s), "shear slope {s}");
        let s = by_name("basis_con").fitted_slope.unwrap();
        assert!((1.8..=2.2).contains(&s), "basis_con slope {s}");
        // exact identities stay at roundoff
        for n in ["christoffel_normal", "basis_cov"] {
            for (_, r) in &by_name(n).residuals {
                assert!(*r <= 1e-12, "{n} residual {r}");
            }
        }
    }

    #[test]
    fn transverse_average_polynomials() {
        assert_relative_eq!(transverse_average(|x| x), 0.0, epsilon = 1e-16);
        assert_relative_eq!(transverse_average(|x| x * x), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(transverse_average(|_| 2.5), 2.5, epsilon = 1e-15);
    }

    #[test]
    fn kl_lift_of_zero_is_zero() {
        let chart = cylinder();
        let lift = KlLift::new(&chart, 0.2, |_| SurfaceDisplacementSample::zero());
        let y = [1.0, 0.5];
        assert_eq!(lift.eval(y, 0.7).unwrap(), [0.0, 0.0, 0.0]);
        let f = chart.eval_frame(y).unwrap();
        assert_relative_eq!(lift.deformed_normal(y).unwrap(), f.normal(), epsilon = 1e-14);
    }

    #[test]
    fn kl_lift_constant_normal_shift_on_plate() {
        let chart = plate();
        let c = 0.37;
        let lift = KlLift::new(&chart, 0.25, move |_| {
            let mut s = SurfaceDisplacementSample::zero();
            s.eta[2] = c;
            s
        });
        for x3 in [-1.0, 0.0, 0.5] {
            let u = lift.eval([0.3, 0.6], x3).unwrap();
            assert_relative_eq!(u[2], c, epsilon = 1e-14);
            assert_relative_eq!(u[0], 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn kl_lift_average_matches_closed_form() {
        let chart = cylinder();
        let eps = 0.15;
        let zeta = |y: [f64; 2]| {
            let mut s = SurfaceDisplacementSample::zero();
            s.eta = [
                0.05 * (y[0]).sin() * y[1],
                0.04 * y[0] * y[1],
                0.06 * (y[0] + y[1]).cos(),
            ];
            s.grad = [
                [0.05 * y[0].cos() * y[1], 0.05 * y[0].sin()],
                [0.04 * y[1], 0.04 * y[0]],
                [-0.06 * (y[0] + y[1]).sin(), -0.06 * (y[0] + y[1]).sin()],
            ];
            s
        };
        let lift = KlLift::new(&chart, eps, zeta);
        for y in [[0.5, 0.3], [1.4, 1.6], [2.0, 0.9]] {
            let quad = lift.average(y).unwrap();
            let closed = lift.average_closed_form(y).unwrap();
            for i in 0..3 {
                assert_relative_eq!(quad[i], closed[i], epsilon = 1e-12);
            }
            // normal component: average equals the midplane trace
            assert_relative_eq!(quad[2], lift.midplane(y).eta[2], epsilon = 1e-13);
        }
    }

    /// u_i g^i(ε) reconstructed from covariant components equals the
    /// geometric displacement (deformed minus reference position).
    #[test]
    fn kl_lift_components_are_consistent_with_positions() {
        let chart = cylinder();
        let eps = 0.2;
        let zeta = |y: [f64; 2]| {
            let mut s = SurfaceDisplacementSample::zero();
            s.eta = [0.03 * y[1], -0.02 * y[0], 0.05 * y[0] * y[1]];
            s.grad = [[0.0, 0.03], [-0.02, 0.0], [0.05 * y[1], 0.05 * y[0]]];
            s
        };
        let lift = KlLift::new(&chart, eps, zeta);
        let y = [1.1, 0.8];
        let x3 = 0.6;
        let u = lift.eval(y, x3).unwrap();
        let f = chart.eval_frame(y).unwrap();
        let sf = eval_shell_frame(&f, eps, x3).unwrap();
        let mut disp = Vector3::zeros();
        for i in 0..3 {
            disp += u[i] * sf.g_con[i];
        }
        let reference = chart.position(y) + eps * x3 * f.normal();
        let expect = lift.deformed_position(y, x3).unwrap() - reference;
        assert_relative_eq!(disp, expect, epsilon = 1e-10);
    }
}
