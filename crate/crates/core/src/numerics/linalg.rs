//! Dense symmetric linear algebra: covariance, Cholesky-based regularized
//! inversion, and a cyclic Jacobi eigensolver.

use super::Tensor2;
use crate::error::{Error, Result};

/// Unbiased (N−1) covariance of the rows of `x`. The result is exactly
/// symmetric: each off-diagonal pair is computed once and mirrored.
pub fn covariance(x: &Tensor2) -> Result<Tensor2> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::InsufficientData {
            module: "numerics",
            reason: format!("covariance needs at least 2 rows, got {n}"),
        });
    }
    let mean = x.mean_rows();
    let d = x.cols();
    let mut cov = Tensor2::zeros(d, d);
    for r in x.iter_rows() {
        for i in 0..d {
            let di = r[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += di * (r[j] - mean[j]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

/// Scale-aware ridge: `relative · trace(m) / dim`, never below `floor`.
pub fn default_ridge(m: &Tensor2, relative: f64, floor: f64) -> f64 {
    let d = m.rows().max(1) as f64;
    (relative * m.trace() / d).max(floor)
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(m: &Tensor2) -> Result<Tensor2> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::param("numerics", "m", "cholesky needs a square matrix"));
    }
    let mut l = Tensor2::zeros(n, n);
    for j in 0..n {
        let mut s = m[(j, j)];
        for k in 0..j {
            s -= l[(j, k)] * l[(j, k)];
        }
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Numerical(format!(
                "matrix is not positive definite (pivot {j} = {s:e})"
            )));
        }
        let d = s.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// `(m + eps·I)⁻¹` through a Cholesky factorization.
pub fn regularized_inverse(m: &Tensor2, eps: f64) -> Result<Tensor2> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::param("numerics", "eps", format!("must be finite and non-negative, got {eps}")));
    }
    let n = m.rows();
    let mut a = m.clone();
    for i in 0..n {
        a[(i, i)] += eps;
    }
    let l = cholesky(&a)?;
    // Invert L by forward substitution, then A⁻¹ = L⁻ᵀ L⁻¹.
    let mut linv = Tensor2::zeros(n, n);
    for c in 0..n {
        for i in c..n {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in c..i {
                s -= l[(i, k)] * linv[(k, c)];
            }
            linv[(i, c)] = s / l[(i, i)];
        }
    }
    let mut inv = linv.t_matmul(&linv);
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = v;
            inv[(j, i)] = v;
        }
    }
    Ok(inv)
}

/// Eigenvalues (descending) and matching eigenvectors (as columns) of a
/// symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Tensor2,
}

const JACOBI_MAX_SWEEPS: usize = 100;

pub fn symmetric_eigen(m: &Tensor2) -> Result<SymmetricEigen> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::param("numerics", "m", "eigendecomposition needs a square matrix"));
    }
    let mut a = m.clone();
    let mut v = Tensor2::identity(n);
    let scale = a.data().iter().map(|x| x * x).sum::<f64>().sqrt();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Tensor2::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Orthonormal basis (cols × d) of the top-`d` eigenvector subspace.
pub fn principal_subspace(cov: &Tensor2, d: usize) -> Result<Tensor2> {
    let n = cov.cols();
    if d == 0 || d > n {
        return Err(Error::param("numerics", "d", format!("must be in 1..={n}, got {d}")));
    }
    let eig = symmetric_eigen(cov)?;
    let mut basis = Tensor2::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            basis[(i, j)] = eig.vectors[(i, j)];
        }
    }
    Ok(basis)
}
