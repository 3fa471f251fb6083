//! Small dense linear algebra: symmetric matrices, jittered Cholesky and a
//! cyclic Jacobi eigensolver.
//!
//! Everything here works on plain row-major `Vec<f64>` storage. The matrices
//! involved (GP kernel matrices with a few hundred rows, Laplacians of at most
//! a few dozen robots) are small enough that cache-friendly dense loops beat
//! anything cleverer.

use thiserror::Error;

/// Diagonal jitter levels tried in order when a factorization fails.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Jacobi sweeps stop once the off-diagonal norm drops below this fraction of
/// the matrix norm.
pub const JACOBI_REL_TOL: f64 = 1e-12;

pub const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix is not positive definite even with jitter {max_jitter:e}")]
    NotPositiveDefinite { max_jitter: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("matrix must have dimension at least {min}, got {got}")]
    TooSmall { min: usize, got: usize },
    #[error("Jacobi eigensolver did not converge in {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
}

/// Dense symmetric matrix stored row-major in full.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from its lower triangle: `f(i, j)` is called for
    /// `j <= i` and mirrored.
    pub fn from_lower_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                m.data[i * n + j] = v;
                m.data[j * n + i] = v;
            }
        }
        m
    }

    /// Wraps row-major data, checking exact symmetry.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != n * n {
            return Err(NumericsError::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        for i in 0..n {
            for j in 0..i {
                if data[i * n + j] != data[j * n + i] {
                    return Err(NumericsError::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(NumericsError::DimensionMismatch {
                    expected: n,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(n, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets entry `(i, j)` and its mirror.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            self.data[i * self.n + i] += v;
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| dot(&self.data[i * self.n..(i + 1) * self.n], v))
            .collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor of `m + jitter_used * I`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor {
    n: usize,
    lower: Vec<f64>,
    jitter_used: f64,
}

impl CholFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    #[inline]
    pub fn lower(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.n + j]
    }

    /// `L · Lᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.n;
        SymMatrix::from_lower_fn(n, |i, j| {
            let (ri, rj) = (&self.lower[i * n..i * n + j + 1], &self.lower[j * n..j * n + j + 1]);
            dot(ri, rj)
        })
    }

    /// Solves `L z = b` in place.
    pub fn forward_substitute(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i];
            let s = dot(row, &b[..i]);
            b[i] = (b[i] - s) / self.lower[i * n + i];
        }
    }

    /// Solves `Lᵀ x = z` in place.
    pub fn backward_substitute(&self, z: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.lower[k * n + i] * z[k];
            }
            z[i] = s / self.lower[i * n + i];
        }
    }

    /// Refactors `m` after entries at index `first_changed` and beyond were
    /// modified (or appended). Rows before `first_changed` are reused, which
    /// yields exactly the factor a from-scratch [`cholesky`] would produce.
    pub fn refactor_tail(&self, m: &SymMatrix, first_changed: usize) -> Result<CholFactor, NumericsError> {
        let keep = first_changed.min(self.n).min(m.n());
        if self.jitter_used != 0.0 || keep == 0 {
            return cholesky(m);
        }
        let n = m.n();
        let mut lower = vec![0.0; n * n];
        for i in 0..keep {
            lower[i * n..i * n + i + 1].copy_from_slice(&self.lower[i * self.n..i * self.n + i + 1]);
        }
        if factor_rows(m, 0.0, &mut lower, keep) {
            Ok(CholFactor {
                n,
                lower,
                jitter_used: 0.0,
            })
        } else {
            cholesky(m)
        }
    }
}

/// Row-by-row (Cholesky–Banachiewicz) factorization of rows `start..n`,
/// assuming rows `0..start` of `lower` already hold the factor. Returns false
/// on a non-positive pivot.
fn factor_rows(m: &SymMatrix, jitter: f64, lower: &mut [f64], start: usize) -> bool {
    let n = m.n();
    for i in start..n {
        for j in 0..=i {
            let s = {
                let (ri, rj) = (&lower[i * n..i * n + j], &lower[j * n..j * n + j]);
                dot(ri, rj)
            };
            if i == j {
                let d = m.get(i, i) + jitter - s;
                if !(d > 0.0) || !d.is_finite() {
                    return false;
                }
                lower[i * n + i] = d.sqrt();
            } else {
                lower[i * n + j] = (m.get(i, j) - s) / lower[j * n + j];
            }
        }
    }
    true
}

/// Factors `m + jitter·I`, escalating the jitter through [`JITTER_LADDER`]
/// until the factorization succeeds.
pub fn cholesky(m: &SymMatrix) -> Result<CholFactor, NumericsError> {
    let n = m.n();
    if n == 0 {
        return Err(NumericsError::TooSmall { min: 1, got: 0 });
    }
    let mut lower = vec![0.0; n * n];
    for &jitter in &JITTER_LADDER {
        if factor_rows(m, jitter, &mut lower, 0) {
            return Ok(CholFactor {
                n,
                lower,
                jitter_used: jitter,
            });
        }
    }
    Err(NumericsError::NotPositiveDefinite {
        max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
    })
}

/// Solves `(m + jitter·I) v = b` from the factor.
pub fn chol_solve(f: &CholFactor, b: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if b.len() != f.n {
        return Err(NumericsError::DimensionMismatch {
            expected: f.n,
            got: b.len(),
        });
    }
    let mut v = b.to_vec();
    f.forward_substitute(&mut v);
    f.backward_substitute(&mut v);
    Ok(v)
}

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi sweeps.
pub fn symmetric_eigenvalues(m: &SymMatrix) -> Result<Vec<f64>, NumericsError> {
    let n = m.n();
    let mut a = m.as_slice().to_vec();
    let tol = JACOBI_REL_TOL * m.frobenius_norm();
    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = off_norm(&a) <= tol;
    let mut sweeps = 0;
    while !converged {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(NumericsError::NoConvergence { sweeps });
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    let new_rp = c * arp - s * arq;
                    let new_rq = c * arq + s * arp;
                    a[r * n + p] = new_rp;
                    a[p * n + r] = new_rp;
                    a[r * n + q] = new_rq;
                    a[q * n + r] = new_rq;
                }
                a[p * n + p] -= t * apq;
                a[q * n + q] += t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
            }
        }
        sweeps += 1;
        converged = off_norm(&a) <= tol;
    }

    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    Ok(eig)
}

/// Second-smallest eigenvalue, e.g. the algebraic connectivity of a Laplacian.
pub fn second_smallest_eigenvalue(m: &SymMatrix) -> Result<f64, NumericsError> {
    if m.n() < 2 {
        return Err(NumericsError::TooSmall { min: 2, got: m.n() });
    }
    Ok(symmetric_eigenvalues(m)?[1])
}
