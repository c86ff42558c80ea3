//! Finite-dimensional variational inequalities: minimize
//! `½ xᵀ H x − fᵀ x` subject to one linear half-space inequality per
//! constrained node, `c_n · x_n ≥ b_n`.
//!
//! The solver runs nodewise projected Gauss-Seidel sweeps (each constrained
//! node's block is minimized exactly under its single inequality, so the
//! energy is non-increasing), then polishes with a primal active-set method
//! whose equality steps reuse one Cholesky factorization of `H` through a
//! Schur complement on the active multipliers. Results carry a
//! KKT/complementarity certificate and are bit-reproducible: sweeps and
//! tie-breaks follow a fixed deterministic order.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::sparse::{LinAlgError, SparseSym};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("constraint row {0} is invalid: {1}")]
    InvalidRow(usize, &'static str),
    #[error("maximum iterations exceeded (best kkt residual {0:e})")]
    MaxIterations(f64),
    #[error("problem is infeasible")]
    InfeasibleProblem,
    #[error("too many constraint rows for brute force: {0} > {1}")]
    TooManyRows(usize, usize),
    #[error(transparent)]
    LinAlg(#[from] LinAlgError),
}

/// One inequality per node: `Σ_k coeffs[k] · x[dofs[k]] ≥ bound`.
#[derive(Debug, Clone, Serialize)]
pub struct ConstraintRow {
    pub node: usize,
    pub dofs: [usize; 3],
    pub coeffs: [f64; 3],
    pub bound: f64,
}

impl ConstraintRow {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.coeffs[0] * x[self.dofs[0]]
            + self.coeffs[1] * x[self.dofs[1]]
            + self.coeffs[2] * x[self.dofs[2]]
    }

    pub fn norm(&self) -> f64 {
        (self.coeffs[0].powi(2) + self.coeffs[1].powi(2) + self.coeffs[2].powi(2)).sqrt()
    }
}

/// Set of per-node half-space constraints; node ids are unique and every
/// row has a nonzero coefficient vector.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ConstraintSet {
    rows: Vec<ConstraintRow>,
}

impl ConstraintSet {
    pub fn new(rows: Vec<ConstraintRow>) -> Result<Self, SolveError> {
        let mut seen = std::collections::HashSet::new();
        for (k, r) in rows.iter().enumerate() {
            if r.norm() <= 0.0 {
                return Err(SolveError::InvalidRow(k, "zero coefficient vector"));
            }
            if !seen.insert(r.node) {
                return Err(SolveError::InvalidRow(k, "duplicate node id"));
            }
            if r.dofs[0] == r.dofs[1] || r.dofs[1] == r.dofs[2] || r.dofs[0] == r.dofs[2] {
                return Err(SolveError::InvalidRow(k, "repeated dof in row"));
            }
        }
        Ok(ConstraintSet { rows })
    }

    pub fn empty() -> Self {
        ConstraintSet { rows: Vec::new() }
    }

    pub fn rows(&self) -> &[ConstraintRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// `½ xᵀ H x − fᵀ x` over `{x : c_n · x_n ≥ b_n}`.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub h: SparseSym,
    pub f: Vec<f64>,
    pub constraints: ConstraintSet,
}

impl QuadraticProgram {
    pub fn energy(&self, x: &[f64]) -> f64 {
        0.5 * self.h.quad_form(x) - self.f.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Solver tolerances and iteration limits.
#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    /// Certificate tolerance on the KKT residual.
    pub kkt_tol: f64,
    /// Rows within this of their bound count as active.
    pub active_tol: f64,
    /// Projected Gauss-Seidel sweep budget before polishing.
    pub max_sweeps: usize,
    /// Sweep convergence threshold on the nodal update norm.
    pub sweep_tol: f64,
    /// Active-set polish iteration budget.
    pub max_active_set_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            kkt_tol: 1e-8,
            active_tol: 1e-9,
            max_sweeps: 100_000,
            sweep_tol: 1e-10,
            max_active_set_iters: 500,
        }
    }
}

/// Certified solution of a variational inequality.
#[derive(Debug, Clone, Serialize)]
pub struct ViSolution {
    pub x: Vec<f64>,
    /// Indices (into the constraint rows) active at the solution.
    pub active: Vec<usize>,
    /// Multiplier per active row, aligned with `active`.
    pub multipliers: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub energy: f64,
    pub certified: bool,
}

/// Detailed KKT residual decomposition returned by
/// [`complementarity_residual`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KktResidual {
    /// Worst constraint violation `max(0, b − c·x)`.
    pub violation: f64,
    /// Worst negative implied multiplier on an active row.
    pub negative_multiplier: f64,
    /// Worst complementarity product `|λ̂ (c·x − b)|`.
    pub complementarity: f64,
    /// Gradient norm away from the admissible multiplier cone: the
    /// projected gradient on inactive dofs and the tangential gradient on
    /// active nodes.
    pub projected_gradient: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.violation
            .max(self.negative_multiplier)
            .max(self.complementarity)
            .max(self.projected_gradient)
    }
}

/// Measures optimality of `x` without requiring multipliers: they are
/// implied from the gradient on each constrained node.
pub fn complementarity_residual(qp: &QuadraticProgram, x: &[f64]) -> KktResidual {
    let n = qp.h.dim();
    let mut g = vec![0.0; n];
    qp.h.matvec(x, &mut g);
    for i in 0..n {
        g[i] -= qp.f[i];
    }
    let scale = row_scale(qp);
    let active_tol = 1e-7 * scale;

    let mut touched = vec![false; n];
    let mut violation = 0.0f64;
    let mut negative_multiplier = 0.0f64;
    let mut complementarity = 0.0f64;
    let mut projected_gradient = 0.0f64;
    for r in qp.constraints.rows() {
        for d in r.dofs {
            touched[d] = true;
        }
        let cx = r.value(x);
        let gap = cx - r.bound;
        violation = violation.max(-gap);
        let gnode = [g[r.dofs[0]], g[r.dofs[1]], g[r.dofs[2]]];
        let cc = r.norm().powi(2);
        let lambda = (gnode[0] * r.coeffs[0] + gnode[1] * r.coeffs[1] + gnode[2] * r.coeffs[2]) / cc;
        if gap.abs() <= active_tol {
            negative_multiplier = negative_multiplier.max(-lambda);
            // gradient must align with the constraint normal
            for k in 0..3 {
                projected_gradient =
                    projected_gradient.max((gnode[k] - lambda * r.coeffs[k]).abs());
            }
            complementarity = complementarity.max((lambda * gap).abs());
        } else {
            // inactive: plain stationarity on the node
            for k in 0..3 {
                projected_gradient = projected_gradient.max(gnode[k].abs());
            }
        }
    }
    for i in 0..n {
        if !touched[i] {
            projected_gradient = projected_gradient.max(g[i].abs());
        }
    }
    KktResidual {
        violation,
        negative_multiplier,
        complementarity,
        projected_gradient,
    }
}

fn row_scale(qp: &QuadraticProgram) -> f64 {
    let mut s = 0.0f64;
    for r in qp.constraints.rows() {
        s = s.max(r.bound.abs());
    }
    for i in 0..qp.h.dim() {
        s = s.max(qp.f[i].abs());
    }
    s.max(1.0)
}

/// Direct positive-definite solve `H x = f` with residual contract `1e-10`
/// relative.
pub fn solve_linear(h: &SparseSym, f: &[f64]) -> Result<Vec<f64>, SolveError> {
    Ok(crate::sparse::solve_spd(h, f)?)
}

/// Projects `x` onto the feasible set nodewise (rows touch disjoint dofs,
/// so the product projection is exact).
fn project_feasible(rows: &[ConstraintRow], x: &mut [f64]) {
    for r in rows {
        let cx = r.value(x);
        if cx < r.bound {
            let cc = r.norm().powi(2);
            let shift = (r.bound - cx) / cc;
            for k in 0..3 {
                x[r.dofs[k]] += shift * r.coeffs[k];
            }
        }
    }
}

/// Groups dofs into Gauss-Seidel blocks: one block per constrained node
/// (its three dofs) plus singleton blocks for the rest.
struct Blocks {
    blocks: Vec<(Vec<usize>, Option<usize>)>, // (dofs, row index)
}

fn build_blocks(n: usize, rows: &[ConstraintRow]) -> Blocks {
    let mut in_block = vec![false; n];
    let mut blocks = Vec::new();
    for (k, r) in rows.iter().enumerate() {
        blocks.push((r.dofs.to_vec(), Some(k)));
        for d in r.dofs {
            in_block[d] = true;
        }
    }
    for d in 0..n {
        if !in_block[d] {
            blocks.push((vec![d], None));
        }
    }
    // deterministic sweep order by leading dof
    blocks.sort_by_key(|(dofs, _)| dofs[0]);
    Blocks { blocks }
}

/// One projected Gauss-Seidel pass; returns the max nodal update.
fn pgs_sweep(qp: &QuadraticProgram, blocks: &Blocks, x: &mut [f64]) -> f64 {
    let mut worst = 0.0f64;
    for (dofs, row) in &blocks.blocks {
        // residual r = f − H x + H_bb x_b restricted to the block
        let m = dofs.len();
        let mut hbb = [[0.0f64; 3]; 3];
        let mut rhs = [0.0f64; 3];
        for (a, &da) in dofs.iter().enumerate() {
            let (cols, vals) = qp.h.row(da);
            let mut acc = qp.f[da];
            for (c, v) in cols.iter().zip(vals) {
                let c = *c as usize;
                if let Some(b) = dofs.iter().position(|&db| db == c) {
                    hbb[a][b] = *v;
                } else {
                    acc -= v * x[c];
                }
            }
            rhs[a] = acc;
        }
        // unconstrained block minimizer
        let sol = solve_small(&hbb, &rhs, m);
        let mut xb = sol;
        if let Some(k) = row {
            let r = &qp.constraints.rows()[*k];
            let cx: f64 = (0..m).map(|a| r.coeffs[a] * xb[a]).sum();
            if cx < r.bound {
                // equality-constrained block KKT: [H c; cᵀ 0]
                xb = solve_small_eq(&hbb, &rhs, &r.coeffs, r.bound, m);
            }
        }
        for (a, &da) in dofs.iter().enumerate() {
            worst = worst.max((x[da] - xb[a]).abs());
            x[da] = xb[a];
        }
    }
    worst
}

/// Unconstrained block minimizer: solves `H x = rhs` on `m ≤ 3` dofs.
fn solve_small(h: &[[f64; 3]; 3], rhs: &[f64; 3], m: usize) -> [f64; 3] {
    let mut a = [[0.0f64; 5]; 4];
    for i in 0..m {
        a[i][..m].copy_from_slice(&h[i][..m]);
        a[i][m] = rhs[i];
    }
    let x = gauss_jordan(&mut a, m);
    [x[0], x[1], x[2]]
}

/// Equality-constrained block KKT: minimize `½xᵀHx − rᵀx` with `cᵀx = b`;
/// system size is `m + 1 ≤ 4`.
fn solve_small_eq(h: &[[f64; 3]; 3], rhs: &[f64; 3], c: &[f64; 3], b: f64, m: usize) -> [f64; 3] {
    let mut a = [[0.0f64; 5]; 4];
    for i in 0..m {
        a[i][..m].copy_from_slice(&h[i][..m]);
        a[i][m] = -c[i];
        a[i][m + 1] = rhs[i];
        a[m][i] = c[i];
    }
    a[m][m + 1] = b;
    let x = gauss_jordan(&mut a, m + 1);
    [x[0], x[1], x[2]]
}

/// Gauss-Jordan with partial pivoting on the leading `m × m` block of an
/// augmented system; the rhs sits in column `m`.
fn gauss_jordan(a: &mut [[f64; 5]; 4], m: usize) -> [f64; 4] {
    for col in 0..m {
        let mut piv = col;
        for r in col + 1..m {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        a.swap(col, piv);
        let d = a[col][col];
        for r in 0..m {
            if r != col && a[r][col] != 0.0 {
                let fac = a[r][col] / d;
                for cc in col..=m {
                    a[r][cc] -= fac * a[col][cc];
                }
            }
        }
    }
    let mut x = [0.0f64; 4];
    for i in 0..m {
        x[i] = a[i][m] / a[i][i];
    }
    x
}

/// Solves the variational inequality with a certified KKT point.
///
/// Errors with [`SolveError::MaxIterations`] when the certificate tolerance
/// is not reached within the iteration budgets; the caller may still read
/// the best iterate from the error path via [`solve_vi_detailed`].
pub fn solve_vi(qp: &QuadraticProgram, cfg: &SolverConfig) -> Result<ViSolution, SolveError> {
    let sol = solve_vi_detailed(qp, cfg)?;
    if sol.certified {
        Ok(sol)
    } else {
        Err(SolveError::MaxIterations(sol.kkt_residual))
    }
}

/// Like [`solve_vi`] but always returns the final iterate, flagged
/// `certified = false` when the tolerance was not met.
pub fn solve_vi_detailed(
    qp: &QuadraticProgram,
    cfg: &SolverConfig,
) -> Result<ViSolution, SolveError> {
    let n = qp.h.dim();
    let rows = qp.constraints.rows();
    let mut x = vec![0.0; n];
    project_feasible(rows, &mut x);

    let blocks = build_blocks(n, rows);
    let mut iterations = 0usize;
    // a modest sweep budget suffices: the polish does the certified work
    let warm_sweeps = cfg.max_sweeps.min(60);
    for _ in 0..warm_sweeps {
        iterations += 1;
        let delta = pgs_sweep(qp, &blocks, &mut x);
        if delta <= cfg.sweep_tol {
            break;
        }
    }
    project_feasible(rows, &mut x);

    // Active-set polish with a Schur complement on the multipliers.
    let fac = qp.h.factor()?;
    let hinv_f = fac.solve(&qp.f);
    let mut hinv_rows: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut hinv_of = |k: usize| -> Vec<f64> {
        if let Some(v) = hinv_rows.get(&k) {
            return v.clone();
        }
        let r = &rows[k];
        let mut e = vec![0.0; n];
        for j in 0..3 {
            e[r.dofs[j]] = r.coeffs[j];
        }
        let v = fac.solve(&e);
        hinv_rows.insert(k, v.clone());
        v
    };

    let scale = row_scale(qp);
    let act_tol = cfg.active_tol * scale.max(1.0);
    let mut active: Vec<usize> = (0..rows.len())
        .filter(|&k| rows[k].value(&x) - rows[k].bound <= act_tol)
        .collect();
    let mut multipliers: Vec<f64> = vec![0.0; active.len()];

    for _ in 0..cfg.max_active_set_iters {
        iterations += 1;
        // equality step: (A H⁻¹ Aᵀ) λ = b_A − A H⁻¹ f, x* = H⁻¹(f + Aᵀλ)
        let m = active.len();
        let (xstar, lambda) = if m == 0 {
            (hinv_f.clone(), Vec::new())
        } else {
            let cached: Vec<Vec<f64>> = active.iter().map(|&k| hinv_of(k)).collect();
            let mut s = nalgebra::DMatrix::<f64>::zeros(m, m);
            for (a, &ka) in active.iter().enumerate() {
                let ra = &rows[ka];
                for (b, cb) in cached.iter().enumerate() {
                    // sparse dot: row a has 3 nonzeros
                    let mut v = 0.0;
                    for j in 0..3 {
                        v += ra.coeffs[j] * cb[ra.dofs[j]];
                    }
                    s[(a, b)] = v;
                }
            }
            let mut rhs = nalgebra::DVector::<f64>::zeros(m);
            for (a, &ka) in active.iter().enumerate() {
                let ra = &rows[ka];
                let mut v = ra.bound;
                for j in 0..3 {
                    v -= ra.coeffs[j] * hinv_f[ra.dofs[j]];
                }
                rhs[a] = v;
            }
            let s = 0.5 * (&s + s.transpose());
            let chol = nalgebra::Cholesky::new(s).ok_or(SolveError::LinAlg(
                LinAlgError::SingularMatrix { row: 0, pivot: 0.0 },
            ))?;
            let lam = chol.solve(&rhs);
            let mut xs = hinv_f.clone();
            for (a, cb) in cached.iter().enumerate() {
                let la = lam[a];
                for i in 0..n {
                    xs[i] += la * cb[i];
                }
            }
            (xs, lam.iter().cloned().collect::<Vec<f64>>())
        };

        // most violated inactive row at x*
        let mut worst_violation = act_tol;
        let mut blocking: Option<usize> = None;
        for (k, r) in rows.iter().enumerate() {
            if active.contains(&k) {
                continue;
            }
            let gap = r.bound - r.value(&xstar);
            if gap > worst_violation {
                worst_violation = gap;
                blocking = Some(k);
            }
        }
        if let Some(k) = blocking {
            // step from x toward x* until row k becomes tight, then add it
            let r = &rows[k];
            let cx = r.value(&x);
            let cxs = r.value(&xstar);
            let t = if (cx - cxs).abs() > 0.0 {
                ((cx - r.bound) / (cx - cxs)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            for i in 0..n {
                x[i] += t * (xstar[i] - x[i]);
            }
            project_feasible(rows, &mut x);
            active.push(k);
            active.sort_unstable();
            multipliers = vec![0.0; active.len()];
            continue;
        }

        // feasible equality point: drop the most negative multiplier if any
        let mut drop_idx: Option<usize> = None;
        let mut most_negative = -act_tol;
        for (a, &la) in lambda.iter().enumerate() {
            if la < most_negative {
                most_negative = la;
                drop_idx = Some(a);
            }
        }
        if let Some(a) = drop_idx {
            x = xstar;
            active.remove(a);
            multipliers = vec![0.0; active.len()];
            continue;
        }

        // converged: feasible, nonnegative multipliers
        x = xstar;
        multipliers = lambda;
        break;
    }

    // clamp roundoff-level infeasibility before certifying
    project_feasible(rows, &mut x);
    let kkt = complementarity_residual(qp, &x);
    let kkt_residual = kkt.max();
    let certified = kkt_residual <= cfg.kkt_tol * scale;
    Ok(ViSolution {
        energy: qp.energy(&x),
        active,
        multipliers,
        kkt_residual,
        iterations,
        certified,
        x,
    })
}

/// Exhaustive active-set enumeration oracle for small instances: solves
/// each of the `2^m` equality-constrained systems and returns the feasible
/// KKT point of least energy (unique by strict convexity).
pub fn brute_force_vi(qp: &QuadraticProgram) -> Result<Vec<f64>, SolveError> {
    const MAX_ROWS: usize = 20;
    let rows = qp.constraints.rows();
    let m = rows.len();
    if m > MAX_ROWS {
        return Err(SolveError::TooManyRows(m, MAX_ROWS));
    }
    let n = qp.h.dim();
    let fac = qp.h.factor()?;
    let hinv_f = fac.solve(&qp.f);
    let hinv_rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut e = vec![0.0; n];
            for j in 0..3 {
                e[r.dofs[j]] = r.coeffs[j];
            }
            fac.solve(&e)
        })
        .collect();

    let tol = 1e-9 * row_scale(qp);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1u32 << m) {
        let active: Vec<usize> = (0..m).filter(|k| mask & (1 << k) != 0).collect();
        let ma = active.len();
        let mut x = hinv_f.clone();
        let mut lambda_ok = true;
        if ma > 0 {
            let mut s = nalgebra::DMatrix::<f64>::zeros(ma, ma);
            let mut rhs = nalgebra::DVector::<f64>::zeros(ma);
            for (a, &ka) in active.iter().enumerate() {
                let ra = &rows[ka];
                for (b, &kb) in active.iter().enumerate() {
                    let mut v = 0.0;
                    for j in 0..3 {
                        v += ra.coeffs[j] * hinv_rows[kb][ra.dofs[j]];
                    }
                    s[(a, b)] = v;
                }
                let mut v = ra.bound;
                for j in 0..3 {
                    v -= ra.coeffs[j] * hinv_f[ra.dofs[j]];
                }
                rhs[a] = v;
            }
            let s = 0.5 * (&s + s.transpose());
            let Some(chol) = nalgebra::Cholesky::new(s) else {
                continue;
            };
            let lam = chol.solve(&rhs);
            if lam.iter().any(|&la| la < -tol) {
                lambda_ok = false;
            }
            if !lambda_ok {
                continue;
            }
            for (a, &ka) in active.iter().enumerate() {
                let la = lam[a];
                for i in 0..n {
                    x[i] += la * hinv_rows[ka][i];
                }
            }
        }
        // feasibility of all rows
        if rows.iter().any(|r| r.value(&x) < r.bound - tol) {
            continue;
        }
        let e = qp.energy(&x);
        match &best {
            Some((be, _)) if *be <= e => {}
            _ => best = Some((e, x)),
        }
    }
    best.map(|(_, x)| x).ok_or(SolveError::InfeasibleProblem)
}
