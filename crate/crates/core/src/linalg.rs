//! Dense symmetric eigensolver (cyclic Jacobi) and small matrix helpers.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: DMatrix<f64>,
}

impl SymmetricEigen {
    /// `max_j |A q_j - λ_j q_j|` against the matrix the decomposition came from.
    pub fn max_residual(&self, a: &DMatrix<f64>) -> f64 {
        (0..self.values.len())
            .map(|j| {
                let q = self.vectors.column(j);
                (a * q - q * self.values[j]).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Only the upper triangle's symmetry is assumed, not checked beyond a
/// debug assertion.
pub fn jacobi_eigen(matrix: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: matrix.ncols(),
        });
    }
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    debug_assert!((matrix - matrix.transpose()).amax() <= 1e-9 * matrix.amax().max(1.0));

    let mut a = matrix.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm();
    if scale == 0.0 {
        return Ok(SymmetricEigen {
            values: vec![0.0; n],
            vectors: v,
        });
    }

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)] * a[(p, q)])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
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
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate_columns(&mut a, p, q, c, s);
                rotate_rows(&mut a, p, q, c, s);
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                rotate_columns(&mut v, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymmetricEigen { values, vectors })
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..m.nrows() {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
}

fn rotate_rows(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..m.ncols() {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
}

/// Eigen-decomposition of `[[p, q], [q, r]]`: `(λ_hi, λ_lo, v_hi, v_lo)`.
pub fn sym2_eigen(p: f64, q: f64, r: f64) -> (f64, f64, [f64; 2], [f64; 2]) {
    let mean = 0.5 * (p + r);
    let rad = (0.5 * (p - r)).hypot(q);
    let phi = 0.5 * (2.0 * q).atan2(p - r);
    let (s, c) = phi.sin_cos();
    (mean + rad, mean - rad, [c, s], [-s, c])
}

/// The momentum drift matrix `[[0, -I], [G, γ I]]` of size `2d × 2d`.
pub fn momentum_drift_matrix(gram: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let d = gram.nrows();
    let mut a = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        a[(i, d + i)] = -1.0;
        a[(d + i, d + i)] = gamma;
        for j in 0..d {
            a[(d + i, j)] = gram[(i, j)];
        }
    }
    a
}

/// Smallest singular value via the Jacobi solver on `A Aᵀ`.
pub fn min_singular_value(a: &DMatrix<f64>) -> Result<f64> {
    let aat = a * a.transpose();
    let eig = jacobi_eigen(&aat)?;
    Ok(eig.values[0].max(0.0).sqrt())
}
