//! Principal-component projection by power iteration with deflation.
//!
//! Used to flatten high-dimensional steering directions to 2-D for cluster
//! plots. No external eigensolver: the covariance is small at desk scale.

use super::linalg::{dot, l2_norm, Matrix};
use super::rng::DetRng;
use crate::error::{Error, Result};

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 1000;

/// Center the columns of `rows` and project every row onto the top-`k`
/// principal directions. Output is `rows.rows() x k`; its columns are
/// orthogonal within 1e-6.
///
/// Errors on `k > cols`, fewer than two rows, or all-identical rows
/// (zero total variance).
pub fn pca_project(rows: &Matrix, k: usize) -> Result<Matrix> {
    let (n, d) = (rows.rows(), rows.cols());
    if k == 0 || k > d {
        return Err(Error::InvalidArg(format!(
            "pca: k = {k} out of range for {d} columns"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArg(format!("pca: needs >= 2 rows, got {n}")));
    }

    // Column means, then centered copy.
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(rows.row(r)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut centered = Matrix::zeros(n, d);
    for r in 0..n {
        let src = rows.row(r);
        let dst = centered.row_mut(r);
        for c in 0..d {
            dst[c] = src[c] - mean[c];
        }
    }

    // Covariance (biased normalization cancels in eigenvectors).
    let mut cov = Matrix::zeros(d, d);
    for r in 0..n {
        let x = centered.row(r);
        for i in 0..d {
            for j in 0..d {
                let v = cov.get(i, j) + x[i] * x[j];
                cov.set(i, j, v);
            }
        }
    }
    let total_var: f64 = (0..d).map(|i| cov.get(i, i)).sum();
    if total_var <= 1e-24 {
        return Err(Error::Degenerate(
            "pca: all rows identical (zero variance)".into(),
        ));
    }

    let cov_orig = cov.clone();
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut rng = DetRng::new(0x70ca_5eed);
    for _ in 0..k {
        let comp = dominant_eigenvector(&cov, &components, &mut rng);
        // Deflate: cov -= lambda v v^T.
        let lambda = rayleigh(&cov, &comp);
        for i in 0..d {
            for j in 0..d {
                let v = cov.get(i, j) - lambda * comp[i] * comp[j];
                cov.set(i, j, v);
            }
        }
        components.push(comp);
    }
    // Power iteration stalls when eigenvalues nearly tie; a Rayleigh-Ritz
    // rotation inside the found subspace pins the output columns to exact
    // mutual orthogonality without a full eigensolver.
    let components = rayleigh_ritz(&cov_orig, components);

    let mut out = Matrix::zeros(n, k);
    for r in 0..n {
        let x = centered.row(r);
        for (c, comp) in components.iter().enumerate() {
            out.set(r, c, dot(x, comp));
        }
    }
    Ok(out)
}

/// Rotate approximate eigenvectors to the eigenbasis of the covariance
/// restricted to their span: diagonalize the small `k x k` Gram matrix
/// `B[a][b] = v_a^T C v_b` by cyclic Jacobi and apply the rotation.
fn rayleigh_ritz(cov: &Matrix, components: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let k = components.len();
    if k < 2 {
        return components;
    }
    let d = cov.cols();
    let mut b = vec![0.0; k * k];
    for a in 0..k {
        let ca = mat_vec(cov, &components[a]);
        for j in 0..k {
            b[a * k + j] = dot(&ca, &components[j]);
        }
    }
    let (order, q) = jacobi_small(&mut b, k);

    let mut rotated = vec![vec![0.0; d]; k];
    for (slot, &col) in order.iter().enumerate() {
        for (a, comp) in components.iter().enumerate() {
            let w = q[a * k + col];
            for i in 0..d {
                rotated[slot][i] += w * comp[i];
            }
        }
        let norm = l2_norm(&rotated[slot]);
        if norm > 1e-12 {
            for v in &mut rotated[slot] {
                *v /= norm;
            }
        }
    }
    rotated
}

/// Cyclic Jacobi on a symmetric `k x k` matrix held in `b` (row-major).
/// Returns column indices sorted by descending eigenvalue and the
/// accumulated rotation `q` (columns are eigenvectors).
fn jacobi_small(b: &mut [f64], k: usize) -> (Vec<usize>, Vec<f64>) {
    let mut q = vec![0.0; k * k];
    for i in 0..k {
        q[i * k + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..k {
            for r in (p + 1)..k {
                off += b[p * k + r] * b[p * k + r];
            }
        }
        if off < 1e-28 {
            break;
        }
        for p in 0..k {
            for r in (p + 1)..k {
                let apq = b[p * k + r];
                if apq.abs() < 1e-30 {
                    continue;
                }
                let app = b[p * k + p];
                let aqq = b[r * k + r];
                let phi = 0.5 * (2.0 * apq).atan2(app - aqq);
                let (s, c) = phi.sin_cos();
                for i in 0..k {
                    let bip = b[i * k + p];
                    let bir = b[i * k + r];
                    b[i * k + p] = c * bip + s * bir;
                    b[i * k + r] = -s * bip + c * bir;
                }
                for j in 0..k {
                    let bpj = b[p * k + j];
                    let brj = b[r * k + j];
                    b[p * k + j] = c * bpj + s * brj;
                    b[r * k + j] = -s * bpj + c * brj;
                }
                for i in 0..k {
                    let qip = q[i * k + p];
                    let qir = q[i * k + r];
                    q[i * k + p] = c * qip + s * qir;
                    q[i * k + r] = -s * qip + c * qir;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &c| {
        b[c * k + c]
            .partial_cmp(&b[a * k + a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    (order, q)
}

fn rayleigh(m: &Matrix, v: &[f64]) -> f64 {
    let mv = mat_vec(m, v);
    dot(v, &mv)
}

fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows()).map(|r| dot(m.row(r), v)).collect()
}

/// Power iteration for the dominant eigenvector of a symmetric PSD matrix,
/// re-orthogonalized against already-found components each step.
fn dominant_eigenvector(m: &Matrix, prior: &[Vec<f64>], rng: &mut DetRng) -> Vec<f64> {
    let d = m.cols();
    let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    orthogonalize(&mut v, prior);
    normalize_or_fallback(&mut v, prior, d);

    let mut lambda_prev = f64::INFINITY;
    for _ in 0..POWER_MAX_ITERS {
        let mut next = mat_vec(m, &v);
        orthogonalize(&mut next, prior);
        let norm = l2_norm(&next);
        if norm <= 1e-18 {
            // Deflated matrix is numerically zero along every remaining
            // direction: any orthonormal completion carries zero variance.
            return v;
        }
        for x in &mut next {
            *x /= norm;
        }
        let lambda = rayleigh(m, &next);
        v = next;
        if (lambda - lambda_prev).abs() < POWER_TOL * lambda.abs().max(1.0) {
            break;
        }
        lambda_prev = lambda;
    }
    v
}

fn orthogonalize(v: &mut [f64], prior: &[Vec<f64>]) {
    for p in prior {
        let proj = dot(v, p);
        for (x, pv) in v.iter_mut().zip(p.iter()) {
            *x -= proj * pv;
        }
    }
}

fn normalize_or_fallback(v: &mut Vec<f64>, prior: &[Vec<f64>], d: usize) {
    let norm = l2_norm(v);
    if norm > 1e-12 {
        for x in v.iter_mut() {
            *x /= norm;
        }
        return;
    }
    // Start vector collapsed under orthogonalization: walk the basis.
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        orthogonalize(&mut e, prior);
        let n = l2_norm(&e);
        if n > 1e-12 {
            for x in &mut e {
                *x /= n;
            }
            *v = e;
            return;
        }
    }
}
