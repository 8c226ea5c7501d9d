//! Eigenvalues and eigenvectors of a general real square matrix.
//!
//! Eigenvalues come from Householder reduction to upper Hessenberg form
//! followed by Francis double-shift QR iteration. Eigenvectors are then
//! obtained one at a time by inverse iteration on the shifted original matrix
//! in complex arithmetic.

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex eigenpairs of a real matrix.
///
/// Eigenvalues are sorted by descending magnitude, complex-conjugate pairs are
/// adjacent (positive imaginary part first). Column `j` of `eigenvectors` has
/// unit ℓ2 norm and its largest-magnitude component is real and positive.
#[derive(Debug, Clone)]
pub struct GeneralEigen {
    pub eigenvalues: Vec<Complex64>,
    pub eigenvectors: Array2<Complex64>,
}

impl GeneralEigen {
    pub fn eigenvector(&self, j: usize) -> ArrayView1<'_, Complex64> {
        self.eigenvectors.column(j)
    }
}

const INVERSE_ITERATIONS: usize = 4;

pub fn eig_general(matrix: &Array2<f64>) -> Result<GeneralEigen> {
    let (n, m) = matrix.dim();
    if n != m {
        return Err(Error::Dim(format!("expected square matrix, got {n}x{m}")));
    }
    if n == 0 {
        return Err(Error::Dim("empty matrix".into()));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix has non-finite entries".into()));
    }

    let mut h = matrix.clone();
    hessenberg(&mut h);
    let mut eigenvalues = hessenberg_qr(&mut h)?;
    sort_by_magnitude(&mut eigenvalues);

    let eigenvectors = eigenvectors_by_inverse_iteration(matrix, &eigenvalues);
    Ok(GeneralEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// Descending magnitude; magnitudes equal to within rounding are ordered by
/// descending real part, then descending imaginary part, so conjugate pairs
/// sit next to each other with the positive imaginary part first.
fn sort_by_magnitude(values: &mut [Complex64]) {
    values.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let mut start = 0;
    while start < values.len() {
        let top = values[start].norm();
        let mut end = start + 1;
        while end < values.len() && top - values[end].norm() <= 1e-12 * top.max(1.0) {
            end += 1;
        }
        values[start..end].sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
        start = end;
    }
}

/// In-place Householder reduction to upper Hessenberg form (similarity transform).
fn hessenberg(a: &mut Array2<f64>) {
    let n = a.nrows();
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        let norm: f64 = (k + 1..n).map(|i| a[[i, k]] * a[[i, k]]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[[k + 1, k]] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k + 1..n).map(|i| a[[i, k]]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // A <- P A with P = I - 2 v v^T / (v^T v), acting on rows k+1..n
        for j in 0..n {
            let dot: f64 = v.iter().enumerate().map(|(r, vr)| vr * a[[k + 1 + r, j]]).sum();
            let f = 2.0 * dot / vnorm2;
            for (r, vr) in v.iter().enumerate() {
                a[[k + 1 + r, j]] -= f * vr;
            }
        }
        // A <- A P, acting on columns k+1..n
        for i in 0..n {
            let dot: f64 = v.iter().enumerate().map(|(c, vc)| vc * a[[i, k + 1 + c]]).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vc) in v.iter().enumerate() {
                a[[i, k + 1 + c]] -= f * vc;
            }
        }
        a[[k + 1, k]] = alpha;
        for i in k + 2..n {
            a[[i, k]] = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (destroyed).
/// Each eigenvalue gets at most `50 * n` iterations.
fn hessenberg_qr(a: &mut Array2<f64>) -> Result<Vec<Complex64>> {
    let n = a.nrows() as isize;
    let cap = 50 * n as usize;
    let eps = f64::EPSILON;
    let mut out = vec![Complex64::new(0.0, 0.0); n as usize];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in (i - 1).max(0)..n {
            anorm += a[[i as usize, j as usize]].abs();
        }
    }
    let at = |a: &Array2<f64>, i: isize, j: isize| a[[i as usize, j as usize]];

    let mut nn = n - 1;
    let mut t = 0.0;
    while nn >= 0 {
        let mut its = 0usize;
        let mut l;
        loop {
            l = nn;
            while l > 0 {
                let mut s = at(a, l - 1, l - 1).abs() + at(a, l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if at(a, l, l - 1).abs() <= eps * s {
                    a[[l as usize, (l - 1) as usize]] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = at(a, nn, nn);
            if l == nn {
                out[nn as usize] = Complex64::new(x + t, 0.0);
                nn -= 1;
            } else {
                let mut y = at(a, nn - 1, nn - 1);
                let mut w = at(a, nn, nn - 1) * at(a, nn - 1, nn);
                if l == nn - 1 {
                    let p = 0.5 * (y - x);
                    let q = p * p + w;
                    let mut z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        out[(nn - 1) as usize] = Complex64::new(x + z, 0.0);
                        out[nn as usize] = Complex64::new(if z != 0.0 { x - w / z } else { x + z }, 0.0);
                    } else {
                        out[(nn - 1) as usize] = Complex64::new(x + p, z);
                        out[nn as usize] = Complex64::new(x + p, -z);
                    }
                    nn -= 2;
                } else {
                    if its >= cap {
                        return Err(Error::NoConverge(format!(
                            "QR iteration exceeded {cap} steps for one eigenvalue"
                        )));
                    }
                    if its > 0 && its.is_multiple_of(10) {
                        // exceptional shift
                        t += x;
                        for i in 0..=nn {
                            a[[i as usize, i as usize]] -= x;
                        }
                        let s = at(a, nn, nn - 1).abs() + at(a, nn - 1, nn - 2).abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let (mut p, mut q, mut r);
                    let mut z;
                    let mut m = nn - 2;
                    loop {
                        z = at(a, m, m);
                        r = x - z;
                        let s0 = y - z;
                        p = (r * s0 - w) / at(a, m + 1, m) + at(a, m, m + 1);
                        q = at(a, m + 1, m + 1) - z - r - s0;
                        r = at(a, m + 2, m + 1);
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = at(a, m, m - 1).abs() * (q.abs() + r.abs());
                        let v = p.abs() * (at(a, m - 1, m - 1).abs() + z.abs() + at(a, m + 1, m + 1).abs());
                        if u <= eps * v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in (m + 2)..=nn {
                        a[[i as usize, (i - 2) as usize]] = 0.0;
                        if i != m + 2 {
                            a[[i as usize, (i - 3) as usize]] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nn {
                        if k != m {
                            p = at(a, k, k - 1);
                            q = at(a, k + 1, k - 1);
                            r = if k != nn - 1 { at(a, k + 2, k - 1) } else { 0.0 };
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[[k as usize, (k - 1) as usize]] = -at(a, k, k - 1);
                                }
                            } else {
                                a[[k as usize, (k - 1) as usize]] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                let mut pp = at(a, k, j) + q * at(a, k + 1, j);
                                if k != nn - 1 {
                                    pp += r * at(a, k + 2, j);
                                    a[[(k + 2) as usize, j as usize]] -= pp * z;
                                }
                                a[[(k + 1) as usize, j as usize]] -= pp * y;
                                a[[k as usize, j as usize]] -= pp * x;
                            }
                            let mmin = if nn < k + 3 { nn } else { k + 3 };
                            for i in l..=mmin {
                                let mut pp = x * at(a, i, k) + y * at(a, i, k + 1);
                                if k != nn - 1 {
                                    pp += z * at(a, i, k + 2);
                                    a[[i as usize, (k + 2) as usize]] -= pp * r;
                                }
                                a[[i as usize, (k + 1) as usize]] -= pp * q;
                                a[[i as usize, k as usize]] -= pp;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if l >= nn - 1 {
                break;
            }
        }
    }
    Ok(out)
}

/// Deterministic, non-degenerate starting vector for inverse iteration.
fn start_vector(n: usize, salt: usize) -> Array1<Complex64> {
    let mut state = 0x9E37_79B9_7F4A_7C15u64 ^ (salt as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    Array1::from_iter((0..n).map(|_| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let u = (state >> 11) as f64 / (1u64 << 53) as f64;
        Complex64::new(0.5 + u, 0.0)
    }))
}

fn norm(v: &Array1<Complex64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Project out the components along (orthonormal) `basis`.
fn orthogonalize(v: &mut Array1<Complex64>, basis: &[Array1<Complex64>]) {
    for b in basis {
        let coef: Complex64 = b.iter().zip(v.iter()).map(|(bi, vi)| bi.conj() * vi).sum();
        v.zip_mut_with(b, |vi, bi| *vi -= coef * bi);
    }
}

/// LU factorization with partial pivoting; zero pivots are replaced by a
/// tiny multiple of the matrix scale so nearly singular shifted systems
/// still solve (the huge solution is exactly what inverse iteration wants).
struct ComplexLu {
    lu: Array2<Complex64>,
    perm: Vec<usize>,
}

impl ComplexLu {
    fn factor(mut a: Array2<Complex64>, tiny: f64) -> Self {
        let n = a.nrows();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (piv, _) = (k..n)
                .map(|i| (i, a[[i, k]].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if piv != k {
                for j in 0..n {
                    a.swap([k, j], [piv, j]);
                }
                perm.swap(k, piv);
            }
            if a[[k, k]].norm() < tiny {
                a[[k, k]] = Complex64::new(tiny, 0.0);
            }
            let pivot = a[[k, k]];
            for i in k + 1..n {
                let f = a[[i, k]] / pivot;
                a[[i, k]] = f;
                for j in k + 1..n {
                    let akj = a[[k, j]];
                    a[[i, j]] -= f * akj;
                }
            }
        }
        ComplexLu { lu: a, perm }
    }

    fn solve(&self, b: &Array1<Complex64>) -> Array1<Complex64> {
        let n = self.lu.nrows();
        let mut x: Array1<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let xj = x[j];
                x[i] -= self.lu[[i, j]] * xj;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let xj = x[j];
                x[i] -= self.lu[[i, j]] * xj;
            }
            x[i] /= self.lu[[i, i]];
        }
        x
    }
}

fn fix_phase(v: &mut Array1<Complex64>) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let k = v.iter().position(|z| z.norm() >= max * (1.0 - 1e-9)).unwrap();
    let phase = v[k].conj() / v[k].norm();
    v.mapv_inplace(|z| z * phase);
    v[k] = Complex64::new(v[k].norm(), 0.0);
}

fn eigenvectors_by_inverse_iteration(matrix: &Array2<f64>, eigenvalues: &[Complex64]) -> Array2<Complex64> {
    let n = matrix.nrows();
    let scale = matrix.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * scale;
    let cluster_tol = 1e-8 * scale.max(1.0);
    let complex_matrix = matrix.mapv(|v| Complex64::new(v, 0.0));

    let mut vectors: Vec<Array1<Complex64>> = Vec::with_capacity(n);
    for (j, &lambda) in eigenvalues.iter().enumerate() {
        if j > 0 && lambda.im < 0.0 && eigenvalues[j - 1] == lambda.conj() {
            vectors.push(vectors[j - 1].mapv(|z| z.conj()));
            continue;
        }
        let mut shifted = complex_matrix.clone();
        for i in 0..n {
            shifted[[i, i]] -= lambda;
        }
        let lu = ComplexLu::factor(shifted, tiny);
        let cluster: Vec<Array1<Complex64>> = (0..j)
            .filter(|&k| (eigenvalues[k] - lambda).norm() <= cluster_tol)
            .map(|k| vectors[k].clone())
            .collect();

        let mut x = start_vector(n, j);
        orthogonalize(&mut x, &cluster);
        let nx = norm(&x);
        x.mapv_inplace(|z| z / nx);
        for _ in 0..INVERSE_ITERATIONS {
            let mut y = lu.solve(&x);
            let raw_norm = norm(&y);
            y.mapv_inplace(|z| z / raw_norm);
            let mut projected = y.clone();
            orthogonalize(&mut projected, &cluster);
            let pn = norm(&projected);
            // A defective cluster has no further independent eigenvector;
            // keep the unprojected direction in that case.
            x = if pn > 1e-3 { projected.mapv(|z| z / pn) } else { y };
        }
        fix_phase(&mut x);
        vectors.push(x);
    }

    let mut out = Array2::<Complex64>::zeros((n, n));
    for (j, v) in vectors.iter().enumerate() {
        out.column_mut(j).assign(v);
    }
    out
}
