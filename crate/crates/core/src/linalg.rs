//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter levels tried after a plain Cholesky fails.
const JITTER_LEVELS: [f64; 3] = [1e-10, 1e-8, 1e-6];

/// Cholesky factorisation with up to three diagonal jitter retries.
///
/// Jitter is scaled by the mean diagonal entry so it is meaningful whatever
/// the magnitude of the matrix.
pub fn cholesky_jittered(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows().max(1) as f64;
    let scale = (m.trace().abs() / n).max(f64::MIN_POSITIVE);
    for level in JITTER_LEVELS {
        let mut jittered = m.clone();
        for i in 0..m.nrows() {
            jittered[(i, i)] += level * scale;
        }
        if let Some(c) = Cholesky::new(jittered) {
            return Ok(c);
        }
    }
    Err(Error::Decomposition(format!(
        "{}x{} matrix is not positive definite after jitter",
        m.nrows(),
        m.ncols()
    )))
}

/// Draw `mean + L^{-T} z` where `L L^T` is the given precision factor and
/// `z` a standard normal vector: a sample from N(mean, precision^{-1}).
pub fn sample_with_precision_factor(
    chol: &Cholesky<f64, Dyn>,
    mean: &DVector<f64>,
    z: DVector<f64>,
) -> DVector<f64> {
    let lt = chol.l().transpose();
    let offset = lt
        .solve_upper_triangular(&z)
        .expect("Cholesky factor has a positive diagonal");
    mean + offset
}

/// Inverse of a symmetric positive-definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut inv = cholesky_jittered(m)?.inverse();
    symmetrise(&mut inv);
    Ok(inv)
}

pub fn symmetrise(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Determinant and adjugate of a symmetric positive semi-definite matrix.
///
/// The empty (0x0) matrix has determinant 1 and an empty adjugate. A
/// positive-definite input goes through Cholesky (`adj = det * M^{-1}`);
/// a singular one falls back to the eigendecomposition, where the adjugate
/// is `Q diag(prod_{l != j} lambda_l) Q^T`.
pub fn det_adjugate_psd(m: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (1.0, DMatrix::zeros(0, 0));
    }
    if n == 1 {
        return (m[(0, 0)], DMatrix::from_element(1, 1, 1.0));
    }
    if let Some(chol) = Cholesky::new(m.clone()) {
        let l = chol.l_dirty();
        let det: f64 = (0..n).map(|i| l[(i, i)] * l[(i, i)]).product();
        if det.is_finite() && det > 0.0 {
            let mut adj = chol.inverse() * det;
            symmetrise(&mut adj);
            return (det, adj);
        }
    }
    let eig = m.clone().symmetric_eigen();
    let values = &eig.eigenvalues;
    let det: f64 = values.iter().product();
    let cof = DVector::from_iterator(
        n,
        (0..n).map(|j| {
            (0..n)
                .filter(|&l| l != j)
                .map(|l| values[l])
                .product::<f64>()
        }),
    );
    let q = &eig.eigenvectors;
    let adj = q * DMatrix::from_diagonal(&cof) * q.transpose();
    (det, adj)
}
