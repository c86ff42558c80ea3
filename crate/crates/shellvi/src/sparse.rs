//! Sparse symmetric matrices: triplet assembly, CSR storage, profile
//! (skyline) Cholesky factorization, and a smallest-generalized-eigenvalue
//! probe by inverse iteration.
//!
//! The profile factorization is exact and deterministic, which keeps solver
//! certificates and CSV reports bit-reproducible across runs and thread
//! counts.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinAlgError {
    #[error("matrix is singular or not positive definite (pivot {pivot:e} at row {row})")]
    SingularMatrix { row: usize, pivot: f64 },
    #[error("eigen solver stalled after {0} iterations")]
    EigenSolverStall(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Accumulates `(row, col, value)` contributions for a symmetric matrix.
/// Only one triangle needs to be pushed; duplicates are summed.
#[derive(Debug, Clone)]
pub struct TripletSym {
    n: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl TripletSym {
    pub fn new(n: usize) -> Self {
        TripletSym {
            n,
            entries: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        if v != 0.0 {
            // store upper triangle
            let (i, j) = if i <= j { (i, j) } else { (j, i) };
            self.entries.push((i as u32, j as u32, v));
        }
    }

    pub fn extend(&mut self, other: impl IntoIterator<Item = (usize, usize, f64)>) {
        for (i, j, v) in other {
            self.push(i, j, v);
        }
    }

    /// Sorted, deduplicated upper-triangle triplets.
    pub fn compress(mut self) -> Vec<(u32, u32, f64)> {
        self.entries
            .sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut out: Vec<(u32, u32, f64)> = Vec::with_capacity(self.entries.len());
        for (i, j, v) in self.entries {
            match out.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => out.push((i, j, v)),
            }
        }
        out
    }

    pub fn into_csr(self) -> SparseSym {
        let n = self.n;
        SparseSym::from_upper_triplets(n, self.compress())
    }
}

/// Symmetric sparse matrix with the full pattern stored in CSR form, so
/// row sweeps (Gauss-Seidel) and matvecs are direct.
#[derive(Debug, Clone)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<u32>,
    val: Vec<f64>,
}

impl SparseSym {
    /// Builds from sorted, deduplicated upper-triangle triplets.
    pub fn from_upper_triplets(n: usize, upper: Vec<(u32, u32, f64)>) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(i, j, _) in &upper {
            counts[i as usize + 1] += 1;
            if i != j {
                counts[j as usize + 1] += 1;
            }
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let nnz = counts[n];
        let mut col = vec![0u32; nnz];
        let mut val = vec![0f64; nnz];
        let mut cursor = counts.clone();
        // upper triplets are sorted by (row, col); mirrored entries for row j
        // arrive in increasing i as well, so each CSR row ends up sorted.
        for &(i, j, v) in &upper {
            let (iu, ju) = (i as usize, j as usize);
            col[cursor[iu]] = j;
            val[cursor[iu]] = v;
            cursor[iu] += 1;
            if iu != ju {
                col[cursor[ju]] = i;
                val[cursor[ju]] = v;
                cursor[ju] += 1;
            }
        }
        // mirrored columns interleave with upper ones out of order; sort rows
        let mut mat = SparseSym {
            n,
            row_ptr: counts,
            col,
            val,
        };
        mat.sort_rows();
        mat
    }

    fn sort_rows(&mut self) {
        for r in 0..self.n {
            let lo = self.row_ptr[r];
            let hi = self.row_ptr[r + 1];
            let mut idx: Vec<usize> = (lo..hi).collect();
            idx.sort_by_key(|&k| self.col[k]);
            let cols: Vec<u32> = idx.iter().map(|&k| self.col[k]).collect();
            let vals: Vec<f64> = idx.iter().map(|&k| self.val[k]).collect();
            self.col[lo..hi].copy_from_slice(&cols);
            self.val[lo..hi].copy_from_slice(&vals);
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col[lo..hi], &self.val[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(out.len(), self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c as usize];
            }
            out[i] = acc;
        }
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut row = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                row += v * x[*c as usize];
            }
            acc += x[i] * row;
        }
        acc
    }

    /// Maximum relative asymmetry `|A_ij - A_ji| / scale`; zero for matrices
    /// assembled through `TripletSym`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self
            .val
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-300);
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(*c as usize, i)).abs());
            }
        }
        worst / scale
    }

    /// Sorted upper-triangle triplets `(row, col, value)`.
    pub fn upper_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                if *c as usize >= i {
                    out.push((i, *c as usize, *v));
                }
            }
        }
        out
    }

    /// Profile Cholesky factorization `A = L Lᵀ`.
    pub fn factor(&self) -> Result<ProfileCholesky, LinAlgError> {
        ProfileCholesky::new(self)
    }
}

/// Profile (envelope) Cholesky: per row, entries from the first structural
/// nonzero to the diagonal are stored densely. The envelope is closed under
/// factorization fill, so the factor lives in place.
pub struct ProfileCholesky {
    n: usize,
    first: Vec<usize>,
    // row i occupies data[start[i] .. start[i] + (i - first[i] + 1)]
    start: Vec<usize>,
    data: Vec<f64>,
}

impl ProfileCholesky {
    pub fn new(a: &SparseSym) -> Result<Self, LinAlgError> {
        let n = a.dim();
        let mut first = vec![0usize; n];
        for i in 0..n {
            let (cols, _) = a.row(i);
            first[i] = cols.first().map(|c| *c as usize).unwrap_or(i).min(i);
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0f64; start[n]];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (c, v) in cols.iter().zip(vals) {
                let j = *c as usize;
                if j <= i {
                    data[start[i] + (j - first[i])] = *v;
                }
            }
        }
        let mut fac = ProfileCholesky {
            n,
            first,
            start,
            data,
        };
        fac.factorize()?;
        Ok(fac)
    }

    #[inline]
    fn entry(&self, i: usize, j: usize) -> f64 {
        if j < self.first[i] {
            0.0
        } else {
            self.data[self.start[i] + (j - self.first[i])]
        }
    }

    fn factorize(&mut self) -> Result<(), LinAlgError> {
        let mut scale = 0.0f64;
        for i in 0..self.n {
            scale = scale.max(self.entry(i, i).abs());
        }
        let tiny = 1e-14 * scale.max(1e-300);
        for i in 0..self.n {
            let fi = self.first[i];
            for j in fi..=i {
                let fj = self.first[j];
                let lo = fi.max(fj);
                let mut sum = self.data[self.start[i] + (j - fi)];
                // dot of rows i and j over columns [lo, j)
                let (ri, rj) = (self.start[i] + (lo - fi), self.start[j] + (lo - fj));
                for k in 0..j - lo {
                    sum -= self.data[ri + k] * self.data[rj + k];
                }
                if j < i {
                    let d = self.data[self.start[j] + (j - fj)];
                    self.data[self.start[i] + (j - fi)] = sum / d;
                } else {
                    if sum <= tiny {
                        return Err(LinAlgError::SingularMatrix { row: i, pivot: sum });
                    }
                    self.data[self.start[i] + (j - fi)] = sum.sqrt();
                }
            }
        }
        Ok(())
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        // forward: L y = b
        for i in 0..self.n {
            let fi = self.first[i];
            let mut sum = b[i];
            let ri = self.start[i];
            for (k, j) in (fi..i).enumerate() {
                sum -= self.data[ri + k] * b[j];
            }
            b[i] = sum / self.data[self.start[i] + (i - fi)];
        }
        // backward: Lᵀ x = y
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            b[i] /= self.data[self.start[i] + (i - fi)];
            let xi = b[i];
            let ri = self.start[i];
            for (k, j) in (fi..i).enumerate() {
                b[j] -= self.data[ri + k] * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Solves `A x = f` for positive definite `A`, with one step of iterative
/// refinement; the relative residual contract is `1e-10`.
pub fn solve_spd(a: &SparseSym, f: &[f64]) -> Result<Vec<f64>, LinAlgError> {
    if f.len() != a.dim() {
        return Err(LinAlgError::DimensionMismatch(format!(
            "rhs has length {} for a {}x{} matrix",
            f.len(),
            a.dim(),
            a.dim()
        )));
    }
    let fac = a.factor()?;
    let mut x = fac.solve(f);
    // one refinement pass tightens the residual toward machine precision
    let mut r = vec![0.0; a.dim()];
    a.matvec(&x, &mut r);
    for i in 0..r.len() {
        r[i] = f[i] - r[i];
    }
    fac.solve_in_place(&mut r);
    for i in 0..x.len() {
        x[i] += r[i];
    }
    Ok(x)
}

/// Relative residual `‖Ax − f‖₂ / max(‖f‖₂, tiny)`.
pub fn relative_residual(a: &SparseSym, x: &[f64], f: &[f64]) -> f64 {
    let mut ax = vec![0.0; a.dim()];
    a.matvec(x, &mut ax);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..f.len() {
        num += (ax[i] - f[i]).powi(2);
        den += f[i].powi(2);
    }
    (num / den.max(1e-300)).sqrt()
}

/// Smallest generalized eigenvalue of the pencil `(K, B)` with both SPD,
/// by inverse (power) iteration on `K⁻¹ B`.
///
/// Deterministic: the start vector is derived from `seed` through a fixed
/// linear congruential recurrence.
pub fn smallest_generalized_eig(
    k: &SparseSym,
    b: &SparseSym,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<f64, LinAlgError> {
    let n = k.dim();
    if b.dim() != n {
        return Err(LinAlgError::DimensionMismatch(
            "pencil matrices differ in size".into(),
        ));
    }
    let fac = k.factor()?;
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut x: Vec<f64> = (0..n)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
        .collect();
    let mut bx = vec![0.0; n];
    let mut lambda_prev = f64::INFINITY;
    for it in 0..max_iter {
        b.matvec(&x, &mut bx);
        let mut y = bx.clone();
        fac.solve_in_place(&mut y);
        // normalize in the B-inner product
        b.matvec(&y, &mut bx);
        let ynorm = y
            .iter()
            .zip(&bx)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .sqrt();
        if !(ynorm > 0.0) {
            return Err(LinAlgError::EigenSolverStall(it));
        }
        for v in y.iter_mut() {
            *v /= ynorm;
        }
        x = y;
        let kx = k.quad_form(&x);
        let bxx = b.quad_form(&x);
        let lambda = kx / bxx;
        if (lambda - lambda_prev).abs() <= tol * lambda.abs() {
            return Ok(lambda);
        }
        lambda_prev = lambda;
    }
    Err(LinAlgError::EigenSolverStall(max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng as _, SeedableRng};

    fn random_spd(n: usize, seed: u64) -> SparseSym {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = TripletSym::new(n);
        let a: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        for i in 0..n {
            for j in i..n {
                let mut v = 0.0;
                for k in 0..n {
                    v += a[k][i] * a[k][j];
                }
                if i == j {
                    v += n as f64 * 0.1;
                }
                t.push(i, j, v);
            }
        }
        t.into_csr()
    }

    #[test]
    fn identity_solve() {
        let mut t = TripletSym::new(3);
        for i in 0..3 {
            t.push(i, i, 1.0);
        }
        let a = t.into_csr();
        let f = vec![3.0, -1.0, 0.5];
        assert_eq!(solve_spd(&a, &f).unwrap(), f);
    }

    #[test]
    fn diagonal_solve() {
        let mut t = TripletSym::new(2);
        t.push(0, 0, 2.0);
        t.push(1, 1, 4.0);
        let a = t.into_csr();
        let x = solve_spd(&a, &[2.0, 4.0]).unwrap();
        assert_eq!(x, vec![1.0, 1.0]);
    }

    #[test]
    fn random_spd_matches_dense_cholesky() {
        let a = random_spd(50, 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let f: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = solve_spd(&a, &f).unwrap();
        assert!(relative_residual(&a, &x, &f) <= 1e-10);

        // dense oracle
        let mut dense = nalgebra::DMatrix::<f64>::zeros(50, 50);
        for i in 0..50 {
            for j in 0..50 {
                dense[(i, j)] = a.get(i, j);
            }
        }
        let chol = nalgebra::Cholesky::new(dense).unwrap();
        let xd = chol.solve(&nalgebra::DVector::from_column_slice(&f));
        for i in 0..50 {
            assert!((x[i] - xd[i]).abs() <= 1e-10 * xd[i].abs().max(1.0));
        }
    }

    #[test]
    fn singular_matrix_detected() {
        let mut t = TripletSym::new(2);
        t.push(0, 0, 1.0);
        t.push(0, 1, 1.0);
        t.push(1, 1, 1.0); // [[1,1],[1,1]] singular
        let a = t.into_csr();
        assert!(matches!(
            a.factor(),
            Err(LinAlgError::SingularMatrix { .. })
        ));
    }

    #[test]
    fn duplicate_triplets_accumulate() {
        let mut t = TripletSym::new(2);
        t.push(0, 1, 1.0);
        t.push(1, 0, 2.0);
        t.push(0, 0, 1.0);
        t.push(1, 1, 1.0);
        let a = t.into_csr();
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(1, 0), 3.0);
        assert_eq!(a.asymmetry(), 0.0);
    }

    #[test]
    fn smallest_eig_of_diagonal_pencil() {
        let mut tk = TripletSym::new(4);
        let mut tb = TripletSym::new(4);
        for (i, d) in [4.0, 9.0, 25.0, 36.0].iter().enumerate() {
            tk.push(i, i, *d);
            tb.push(i, i, 1.0);
        }
        let lam = smallest_generalized_eig(&tk.into_csr(), &tb.into_csr(), 1, 1e-12, 500).unwrap();
        assert!((lam - 4.0).abs() < 1e-8, "lambda = {lam}");
    }

    #[test]
    fn generalized_eig_matches_dense() {
        let k = random_spd(20, 11);
        let b = random_spd(20, 12);
        let lam = smallest_generalized_eig(&k, &b, 5, 1e-12, 2000).unwrap();
        // dense oracle: eig of B^{-1/2} K B^{-1/2}
        let mut kd = nalgebra::DMatrix::<f64>::zeros(20, 20);
        let mut bd = nalgebra::DMatrix::<f64>::zeros(20, 20);
        for i in 0..20 {
            for j in 0..20 {
                kd[(i, j)] = k.get(i, j);
                bd[(i, j)] = b.get(i, j);
            }
        }
        let bchol = nalgebra::Cholesky::new(bd).unwrap();
        let l = bchol.l();
        let linv = l.clone().try_inverse().unwrap();
        let m = &linv * kd * linv.transpose();
        let sym = nalgebra::SymmetricEigen::new(0.5 * (&m + m.transpose()));
        let dense_min = sym.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(
            (lam - dense_min).abs() <= 1e-7 * dense_min.abs().max(1.0),
            "{lam} vs {dense_min}"
        );
    }
}
