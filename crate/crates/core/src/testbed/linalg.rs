use nalgebra::{Cholesky, DMatrix, Dyn};

use super::TestbedError;

const JITTERS: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Cholesky factorization of a symmetrized copy of `m`, retrying with a
/// growing diagonal jitter when round-off leaves it slightly indefinite.
pub(crate) fn cholesky_retry(
    m: &DMatrix<f64>,
    what: &'static str,
) -> Result<Cholesky<f64, Dyn>, TestbedError> {
    let sym = symmetrize(m);
    let n = sym.nrows();
    for jitter in JITTERS {
        let mut candidate = sym.clone();
        for i in 0..n {
            candidate[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(candidate) {
            return Ok(chol);
        }
    }
    let diag = sym.diagonal();
    Err(TestbedError::Factorization {
        what,
        dim: n,
        min_diagonal: diag.min(),
        max_diagonal: diag.max(),
        max_jitter: JITTERS[JITTERS.len() - 1],
    })
}

/// Lower-triangular `L` with `L L^T = m`.
pub(crate) fn factor_spd(
    m: &DMatrix<f64>,
    what: &'static str,
) -> Result<DMatrix<f64>, TestbedError> {
    Ok(cholesky_retry(m, what)?.l())
}

pub(crate) fn spd_inverse(
    m: &DMatrix<f64>,
    what: &'static str,
) -> Result<DMatrix<f64>, TestbedError> {
    Ok(symmetrize(&cholesky_retry(m, what)?.inverse()))
}
