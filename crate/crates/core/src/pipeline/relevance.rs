use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::ratings::RatingsMatrix;
use super::svd::truncated_svd;

/// Ridge added to the normal equations of the per-user least squares.
pub const LEAST_SQUARES_RIDGE: f64 = 1e-9;
const NORM_FLOOR: f64 = 1e-12;
/// Scores above `-NEGATIVE_SLACK` count as nonnegative; fitted zeros carry
/// rounding noise of this order.
pub const NEGATIVE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceFeatures {
    /// Unit-norm feature per item; `None` where the item has no mass in the
    /// leading singular subspace.
    pub items: Vec<Option<Vec<f64>>>,
    /// Unit-norm preference per test user; `None` for users whose least
    /// squares solution vanishes.
    pub users: Vec<Option<Vec<f64>>>,
    pub singular_values: Vec<f64>,
    /// Number of (item, user) pairs with a negative `z^T beta`.
    pub negative_pairs: usize,
}

fn normalized(v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > NORM_FLOOR).then(|| v.into_iter().map(|x| x / norm).collect())
}

/// Item features from the top-`m` singular subspace of `f_train` (right
/// singular vectors scaled by their singular values, then normalized) and
/// per-user preferences fitted to the rows of `f_test` by least squares,
/// normalized the same way.
pub fn relevance_features(
    f_train: &RatingsMatrix,
    f_test: &RatingsMatrix,
    m: usize,
    seed: u64,
) -> Result<RelevanceFeatures> {
    if f_train.n_items() != f_test.n_items() {
        return Err(Error::DimensionMismatch {
            context: "train/test item count",
            expected: f_train.n_items(),
            actual: f_test.n_items(),
        });
    }
    let svd = truncated_svd(&f_train.to_dense(), m, seed)?;
    let n_items = f_train.n_items();
    let items: Vec<Option<Vec<f64>>> = (0..n_items)
        .map(|a| {
            normalized(
                (0..m)
                    .map(|k| svd.right_vectors[(a, k)] * svd.singular_values[k])
                    .collect(),
            )
        })
        .collect();

    let z = DMatrix::from_fn(n_items, m, |a, k| items[a].as_ref().map_or(0.0, |v| v[k]));
    let gram = z.tr_mul(&z) + DMatrix::identity(m, m) * LEAST_SQUARES_RIDGE;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("relevance normal equations are not positive definite".into()))?;

    let mut negative_pairs = 0;
    let users: Vec<Option<Vec<f64>>> = (0..f_test.n_users())
        .map(|u| {
            let mut rhs = DVector::zeros(m);
            for a in f_test.positives(u) {
                rhs += z.row(a).transpose();
            }
            let beta = normalized(chol.solve(&rhs).iter().copied().collect())?;
            negative_pairs += items
                .iter()
                .flatten()
                .filter(|za| crate::model::dot(za, &beta) < -NEGATIVE_SLACK)
                .count();
            Some(beta)
        })
        .collect();
    Ok(RelevanceFeatures {
        items,
        users,
        singular_values: svd.singular_values.iter().copied().collect(),
        negative_pairs,
    })
}
