use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const SVD_TOLERANCE: f64 = 1e-6;
pub const SVD_MAX_ITERATIONS: usize = 200;
const OVERSAMPLING: usize = 8;

/// Leading singular values and right singular vectors of a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    /// Descending.
    pub singular_values: DVector<f64>,
    /// `cols x m`, one right singular vector per column.
    pub right_vectors: DMatrix<f64>,
    pub iterations: usize,
}

/// Top-`m` right singular pairs of `f` by seeded randomized subspace
/// iteration on `f^T f` with Rayleigh-Ritz extraction.
///
/// Stops once no singular value moves by more than `SVD_TOLERANCE`
/// relative to the largest. Each singular vector is signed so that its
/// largest-magnitude entry is positive.
pub fn truncated_svd(f: &DMatrix<f64>, m: usize, seed: u64) -> Result<TruncatedSvd> {
    let (rows, cols) = f.shape();
    if m == 0 || m > rows.min(cols) {
        return Err(Error::invalid(format!(
            "rank {m} must be in [1, {}] for a {rows} x {cols} matrix",
            rows.min(cols)
        )));
    }
    if f.iter().all(|&v| v == 0.0) {
        return Err(Error::Numerical("cannot factor an all-zero matrix".into()));
    }
    let k = (m + OVERSAMPLING).min(cols);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = DMatrix::from_fn(cols, k, |_, _| rng.random_range(-1.0..1.0));
    let mut basis = start.qr().q();

    let mut previous: Option<DVector<f64>> = None;
    for iteration in 1..=SVD_MAX_ITERATIONS {
        let projected = f * &basis;
        let (values, vectors) = ritz_pairs(&projected);
        let sigma = values.map(|v| v.max(0.0).sqrt());
        let scale = sigma[0].max(f64::MIN_POSITIVE);
        let converged = previous
            .as_ref()
            .is_some_and(|prev| (0..m).all(|i| (sigma[i] - prev[i]).abs() <= SVD_TOLERANCE * scale));
        if converged {
            let mut right = (&basis * vectors).columns(0, m).into_owned();
            for mut col in right.column_iter_mut() {
                let lead = col.iamax();
                if col[lead] < 0.0 {
                    col.neg_mut();
                }
            }
            return Ok(TruncatedSvd {
                singular_values: sigma.rows(0, m).into_owned(),
                right_vectors: right,
                iterations: iteration,
            });
        }
        previous = Some(sigma);
        basis = (f.tr_mul(&projected)).qr().q();
    }
    Err(Error::Numerical(format!(
        "singular values did not settle within {SVD_MAX_ITERATIONS} iterations"
    )))
}

/// Eigenpairs of `(f q)^T (f q)`, sorted by decreasing eigenvalue.
fn ritz_pairs(projected: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let small = projected.tr_mul(projected);
    let eig = SymmetricEigen::new(small);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = eig.eigenvectors.select_columns(&order);
    (values, vectors)
}

/// Frobenius norm of `f - f V V^T` with `V` the first `m` right vectors.
pub fn reconstruction_error(f: &DMatrix<f64>, svd: &TruncatedSvd, m: usize) -> f64 {
    let v = svd.right_vectors.columns(0, m);
    (f - f * v * v.transpose()).norm()
}
