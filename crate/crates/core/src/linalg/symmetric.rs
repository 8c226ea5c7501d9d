//! Cyclic Jacobi eigensolver for real symmetric matrices.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// Eigendecomposition of a real symmetric matrix, used for graph Laplacians.
///
/// `eigenvalues` are ascending; column `i` of `eigenvectors` is the unit
/// eigenvector for `eigenvalues[i]`, with its first nonzero component positive.
/// Within a degenerate cluster the basis is arbitrary (but orthonormal).
#[derive(Debug, Clone)]
pub struct LaplacianSpectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Array2<f64>,
}

impl LaplacianSpectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, i: usize) -> ArrayView1<'_, f64> {
        self.eigenvectors.column(i)
    }

    /// Number of eigenvalues with magnitude below `tol`.
    pub fn zero_count(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|v| v.abs() < tol).count()
    }

    /// Groups of consecutive indices whose eigenvalues differ by less than `gap`.
    pub fn clusters(&self, gap: f64) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = Vec::new();
        for (i, &v) in self.eigenvalues.iter().enumerate() {
            match out.last_mut() {
                Some(last) if (v - self.eigenvalues[*last.last().unwrap()]).abs() < gap => last.push(i),
                _ => out.push(vec![i]),
            }
        }
        out
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Input must be square and symmetric within `1e-12` (relative to its largest
/// entry). Fails with [`Error::NoConverge`] after `100 * n` sweeps.
pub fn eig_symmetric(matrix: &Array2<f64>) -> Result<LaplacianSpectrum> {
    let (n, m) = matrix.dim();
    if n != m {
        return Err(Error::Dim(format!("expected square matrix, got {n}x{m}")));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix has non-finite entries".into()));
    }
    let scale = matrix.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            if (matrix[[i, j]] - matrix[[j, i]]).abs() > 1e-12 * scale {
                return Err(Error::InvalidArgument(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }

    let mut a = matrix.clone();
    // Symmetrize exactly so rotations act on a truly symmetric matrix.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    let mut v = Array2::<f64>::eye(n);
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let max_sweeps = 100 * n.max(1);

    let mut converged = false;
    for _ in 0..max_sweeps {
        let off: f64 = off_diagonal_norm(&a);
        if off <= f64::EPSILON * total || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > f64::EPSILON * total {
        return Err(Error::NoConverge(format!("Jacobi did not converge in {max_sweeps} sweeps")));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[i, i]].total_cmp(&a[[j, j]]));
    let eigenvalues = order.iter().map(|&i| a[[i, i]]).collect();
    let mut eigenvectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        let mut col: Array1<f64> = v.column(src).to_owned();
        let norm = col.dot(&col).sqrt();
        col /= norm;
        if let Some(first) = col.iter().copied().find(|x| x.abs() > 1e-10) {
            if first < 0.0 {
                col.mapv_inplace(|x| -x);
            }
        }
        eigenvectors.column_mut(dst).assign(&col);
    }
    Ok(LaplacianSpectrum {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[[i, j]] * a[[i, j]];
            }
        }
    }
    s.sqrt()
}

/// Apply `A <- J^T A J`, `V <- V J` for the rotation in the (p, q) plane.
fn rotate(a: &mut Array2<f64>, v: &mut Array2<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = a.nrows();
    for k in 0..n {
        let akp = a[[k, p]];
        let akq = a[[k, q]];
        a[[k, p]] = c * akp - s * akq;
        a[[k, q]] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[[p, k]];
        let aqk = a[[q, k]];
        a[[p, k]] = c * apk - s * aqk;
        a[[q, k]] = s * apk + c * aqk;
    }
    a[[p, q]] = 0.0;
    a[[q, p]] = 0.0;
    for k in 0..n {
        let vkp = v[[k, p]];
        let vkq = v[[k, q]];
        v[[k, p]] = c * vkp - s * vkq;
        v[[k, q]] = s * vkp + c * vkq;
    }
}
