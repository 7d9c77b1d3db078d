//! Dense symmetric-matrix kernel.
//!
//! Everything downstream (solver, rank reduction, synthesis) runs on the
//! operations here: trace inner products, cyclic-Jacobi spectral
//! decomposition, spectral definiteness tests, and Cholesky solves. Matrices
//! are tiny (n ≲ 10 in practice, n ≲ 100 by contract), so the kernel favors
//! robustness and simplicity over asymptotics.

use crate::{Error, Result};

/// Default relative tolerance for definiteness and rank decisions,
/// scaled by matrix magnitude at the call sites that use it.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Hard cap on Jacobi sweeps before reporting non-convergence.
pub const JACOBI_SWEEP_LIMIT: usize = 64;

/// General dense row-major matrix. Used for the (generally non-symmetric)
/// coupling matrix and for eigenvector/factor storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nr = rows.len();
        if nr == 0 {
            return Err(Error::InvalidInput("empty matrix".into()));
        }
        let nc = rows[0].len();
        let mut data = Vec::with_capacity(nr * nc);
        for row in rows {
            if row.len() != nc {
                return Err(Error::DimensionMismatch {
                    expected: nc,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        Ok(Mat {
            rows: nr,
            cols: nc,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn mat_mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * out.cols + j] += aik * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matrix-vector dimensions must agree");
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// Row-major permutation of both rows and columns (square matrices):
    /// `out[i][j] = self[perm[i]][perm[j]]`.
    pub fn permute_square(&self, perm: &[usize]) -> Mat {
        assert_eq!(self.rows, self.cols);
        assert_eq!(perm.len(), self.rows);
        let mut out = Mat::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(i, j, self.get(perm[i], perm[j]));
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Dense symmetric n×n matrix. Symmetry is enforced on every ingest path,
/// so a value of this type is symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>, // full row-major storage
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = d[i];
        }
        m
    }

    /// Builds from explicit rows, rejecting asymmetric or non-finite input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = Mat::from_rows(rows)?;
        if m.rows() != m.cols() {
            return Err(Error::DimensionMismatch {
                expected: m.rows(),
                found: m.cols(),
            });
        }
        let scale = m.max_abs().max(1.0);
        for i in 0..m.rows() {
            for j in (i + 1)..m.cols() {
                if (m.get(i, j) - m.get(j, i)).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!(
                        "asymmetric entry at ({i},{j})"
                    )));
                }
            }
        }
        Ok(SymMatrix::symmetrize(&m))
    }

    /// Symmetric part (A + Aᵀ)/2 of a square matrix.
    pub fn symmetrize(m: &Mat) -> Self {
        assert_eq!(m.rows(), m.cols());
        let n = m.rows();
        let mut s = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                s.data[i * n + j] = 0.5 * (m.get(i, j) + m.get(j, i));
            }
        }
        s
    }

    /// Builds from a function evaluated on the upper triangle (i ≤ j).
    pub fn from_fn<F: FnMut(usize, usize) -> f64>(n: usize, mut f: F) -> Self {
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                m.data[i * n + j] = v;
                m.data[j * n + i] = v;
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets entry (i, j) and its mirror.
    #[inline]
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    pub fn scaled(&self, c: f64) -> SymMatrix {
        let mut m = self.clone();
        m.scale(c);
        m
    }

    /// self += c · other
    pub fn add_scaled(&mut self, other: &SymMatrix, c: f64) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.n, v.len());
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn as_mat(&self) -> Mat {
        Mat {
            rows: self.n,
            cols: self.n,
            data: self.data.clone(),
        }
    }

    /// xᵀ S x.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let sx = self.mul_vec(x);
        dot(x, &sx)
    }

    /// G S Gᵀ for general G (result symmetric for symmetric S).
    pub fn sandwich(&self, g: &Mat) -> SymMatrix {
        assert_eq!(g.cols(), self.n);
        let gs = g.mat_mul(&self.as_mat());
        let gsgt = gs.mat_mul(&g.transpose());
        SymMatrix::symmetrize(&gsgt)
    }

    /// Rank-one update: self += c · v vᵀ.
    pub fn add_outer(&mut self, v: &[f64], c: f64) {
        assert_eq!(self.n, v.len());
        for i in 0..self.n {
            for j in 0..self.n {
                self.data[i * self.n + j] += c * v[i] * v[j];
            }
        }
    }
}

/// Eigenvalues sorted descending with column-paired orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[k]` is the unit eigenvector paired with `eigenvalues[k]`.
    pub eigenvectors: Vec<Vec<f64>>,
}

impl SpectralDecomposition {
    /// Σ λ_k v_k v_kᵀ.
    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.eigenvectors.first().map_or(0, |v| v.len());
        let mut m = SymMatrix::zeros(n);
        for (lam, v) in self.eigenvalues.iter().zip(self.eigenvectors.iter()) {
            m.add_outer(v, *lam);
        }
        m
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// Applies f to each eigenvalue and re-synthesizes the matrix.
    pub fn map_eigenvalues<F: Fn(f64) -> f64>(&self, f: F) -> SymMatrix {
        let mapped = SpectralDecomposition {
            eigenvalues: self.eigenvalues.iter().map(|&l| f(l)).collect(),
            eigenvectors: self.eigenvectors.clone(),
        };
        mapped.reconstruct()
    }

    /// Eigenvector matrix with eigenvectors as columns.
    pub fn basis(&self) -> Mat {
        let n = self.eigenvectors.first().map_or(0, |v| v.len());
        let k = self.eigenvectors.len();
        let mut q = Mat::zeros(n, k);
        for (col, v) in self.eigenvectors.iter().enumerate() {
            for i in 0..n {
                q.set(i, col, v[i]);
            }
        }
        q
    }
}

/// Synthesizes Σ λ_k v_k v_kᵀ from an eigenvalue list and orthonormal basis
/// columns. Used by tests and by spectral construction of random instances.
pub fn spectral_synthesis(eigenvalues: &[f64], basis: &[Vec<f64>]) -> SymMatrix {
    assert_eq!(eigenvalues.len(), basis.len());
    let n = basis.first().map_or(0, |v| v.len());
    let mut m = SymMatrix::zeros(n);
    for (lam, v) in eigenvalues.iter().zip(basis.iter()) {
        m.add_outer(v, *lam);
    }
    m
}

/// tr(a·b) for symmetric matrices of matching dimension.
///
/// Evaluated as the elementwise double sum in a fixed order, so the value is
/// exactly symmetric in its arguments.
pub fn trace_inner(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    if a.n != b.n {
        return Err(Error::DimensionMismatch {
            expected: a.n,
            found: b.n,
        });
    }
    let mut acc = 0.0;
    for i in 0..a.n {
        for j in 0..a.n {
            acc += a.get(i, j) * b.get(i, j);
        }
    }
    Ok(acc)
}

/// Full spectral decomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues sorted descending with paired orthonormal
/// eigenvectors. Fails with a numeric error if the off-diagonal mass does
/// not vanish within the sweep cap (does not happen for finite symmetric
/// input at these sizes).
pub fn spectral_decompose(s: &SymMatrix) -> Result<SpectralDecomposition> {
    let n = s.n;
    if !s.data.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite matrix entry".into()));
    }
    if n == 0 {
        return Ok(SpectralDecomposition {
            eigenvalues: vec![],
            eigenvectors: vec![],
        });
    }

    let mut a = s.data.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let scale = s.max_abs().max(f64::MIN_POSITIVE);
    let stop = 1e-15 * scale * (n as f64);

    let mut converged = false;
    for _sweep in 0..JACOBI_SWEEP_LIMIT {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q].abs();
            }
        }
        if off <= stop {
            converged = true;
            break;
        }

        for p in 0..(n - 1) {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                // Rotation that zeroes a_pq, in the numerically stable form.
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                let tau = sn / (1.0 + c);

                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;

                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    let new_rp = arp - sn * (arq + tau * arp);
                    let new_rq = arq + sn * (arp - tau * arq);
                    a[r * n + p] = new_rp;
                    a[p * n + r] = new_rp;
                    a[r * n + q] = new_rq;
                    a[q * n + r] = new_rq;
                }
                for r in 0..n {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = vrp - sn * (vrq + tau * vrp);
                    v[r * n + q] = vrq + sn * (vrp - tau * vrq);
                }
            }
        }
    }
    if !converged {
        // One last check; the cyclic sweeps converge quadratically so this
        // only triggers on pathological input.
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q].abs();
            }
        }
        if off > stop {
            return Err(Error::NumericFailure(format!(
                "Jacobi sweep cap reached (off-diagonal {off:.3e})"
            )));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].partial_cmp(&a[i * n + i]).unwrap());

    let eigenvalues: Vec<f64> = order.iter().map(|&k| a[k * n + k]).collect();
    let eigenvectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| (0..n).map(|r| v[r * n + k]).collect())
        .collect();

    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// True iff the largest eigenvalue is below −tol.
pub fn is_negative_definite(s: &SymMatrix, tol: f64) -> Result<bool> {
    debug_assert!(tol >= 0.0);
    let dec = spectral_decompose(s)?;
    Ok(dec.max_eigenvalue() < -tol)
}

/// Cholesky factorization S = L Lᵀ of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>, // lower triangle, row-major full storage
}

impl Cholesky {
    pub fn new(s: &SymMatrix) -> Result<Self> {
        let n = s.n;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = s.get(i, j);
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(Error::NotPositiveDefinite);
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(Cholesky { n, l })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let n = self.n;
        let mut y = rhs.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= self.l[k * n + i] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }

    /// Solves L X Lᵀ = B for symmetric B, i.e. X = L⁻¹ B L⁻ᵀ.
    pub fn whiten(&self, b: &SymMatrix) -> SymMatrix {
        assert_eq!(b.n, self.n);
        let n = self.n;
        // Forward-substitute on columns, then on rows.
        let mut w = b.data.clone();
        // L⁻¹ B: column-wise forward substitution
        for j in 0..n {
            for i in 0..n {
                for k in 0..i {
                    let t = self.l[i * n + k] * w[k * n + j];
                    w[i * n + j] -= t;
                }
                w[i * n + j] /= self.l[i * n + i];
            }
        }
        // (L⁻¹ B) L⁻ᵀ: row-wise forward substitution
        for i in 0..n {
            for j in 0..n {
                for k in 0..j {
                    let t = self.l[j * n + k] * w[i * n + k];
                    w[i * n + j] -= t;
                }
                w[i * n + j] /= self.l[j * n + j];
            }
        }
        SymMatrix::symmetrize(&Mat {
            rows: n,
            cols: n,
            data: w,
        })
    }
}

/// Solves S x = rhs for symmetric positive definite S via Cholesky.
pub fn solve_spd(s: &SymMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if s.n != rhs.len() {
        return Err(Error::DimensionMismatch {
            expected: s.n,
            found: rhs.len(),
        });
    }
    Ok(Cholesky::new(s)?.solve(rhs))
}

/// Largest α ≥ 0 such that X + α·D stays positive semidefinite, given
/// positive definite X. Returns None when every α works.
pub fn max_step_to_boundary(x: &SymMatrix, d: &SymMatrix) -> Result<Option<f64>> {
    let chol = Cholesky::new(x)?;
    let k = chol.whiten(d);
    let dec = spectral_decompose(&k)?;
    let lam_min = dec.min_eigenvalue();
    if lam_min >= 0.0 {
        Ok(None)
    } else {
        Ok(Some(-1.0 / lam_min))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
