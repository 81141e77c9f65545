use crate::error::{check_dim, Error, Result};
use crate::model::{CoverageTracker, RankedList};

use super::{FeatureMap, PolicyState};

/// Per-step quantities that do not depend on the list prefix.
///
/// With `P = B M^-1`, `C = H^-1 P` and `D = M^-1 + P^T C`, the squared width
/// of an item is `omega^T H^-1 omega - 2 omega^T (C z) + z^T D z`. Only the
/// first two terms change as the prefix grows.
struct StepScorer {
    d: usize,
    gamma: f64,
    theta_hat: Vec<f64>,
    /// `H^-1`, row-major.
    schur_inv: Vec<f64>,
    /// `z^T beta_hat` per item.
    rel_mean: Vec<f64>,
    /// `z^T D z` per item.
    rel_width: Vec<f64>,
    /// `C z` per item, `L x d` row-major.
    coupling: Vec<f64>,
}

impl StepScorer {
    fn new(state: &PolicyState, features: &FeatureMap) -> Self {
        let (d, m, n) = (state.d(), state.m(), features.len());
        let est = state.estimate();
        let p = state.cross() * state.rel_gram_inv();
        let c = state.schur_inv() * &p;
        let dmat = state.rel_gram_inv() + p.tr_mul(&c);

        let mut rel_mean = Vec::with_capacity(n);
        let mut rel_width = Vec::with_capacity(n);
        let mut coupling = Vec::with_capacity(n * d);
        let mut dz = vec![0.0; m];
        for id in 0..n {
            let z = features.rel(id);
            rel_mean.push(crate::model::dot(z, &est.beta_hat));
            for (i, out) in dz.iter_mut().enumerate() {
                *out = (0..m).map(|j| dmat[(i, j)] * z[j]).sum();
            }
            rel_width.push(crate::model::dot(z, &dz));
            coupling.extend((0..d).map(|i| (0..m).map(|j| c[(i, j)] * z[j]).sum::<f64>()));
        }

        let h = state.schur_inv();
        let schur_inv = (0..d * d).map(|idx| h[(idx / d, idx % d)]).collect();
        Self {
            d,
            gamma: state.gamma(),
            theta_hat: est.theta_hat,
            schur_inv,
            rel_mean,
            rel_width,
            coupling,
        }
    }

    /// UCB of item `id` for a coverage gain that is zero outside `support`;
    /// `gain[i]` is the gain on topic `support[i]`.
    fn score(&self, id: usize, support: &[usize], gain: &[f64]) -> f64 {
        let d = self.d;
        let h = &self.schur_inv;
        let coupling = &self.coupling[id * d..(id + 1) * d];
        let mut mean = self.rel_mean[id];
        let mut quad = 0.0;
        let mut cross = 0.0;
        for (a, (&i, &wi)) in support.iter().zip(gain).enumerate() {
            mean += wi * self.theta_hat[i];
            cross += wi * coupling[i];
            let row = &h[i * d..(i + 1) * d];
            let mut acc = 0.5 * row[i] * wi;
            for (&j, &wj) in support[a + 1..].iter().zip(&gain[a + 1..]) {
                acc += row[j] * wj;
            }
            quad += wi * acc;
        }
        let width = (2.0 * quad - 2.0 * cross + self.rel_width[id]).max(0.0);
        mean + self.gamma * width.sqrt()
    }
}

/// Builds a list of `k` items greedily: at each position, the item with the
/// highest UCB given the coverage of the items already placed. Ties go to
/// the lowest item id.
pub fn select_list(state: &PolicyState, features: &FeatureMap, k: usize) -> Result<RankedList> {
    check_dim("select_list topic", state.d(), features.d())?;
    check_dim("select_list relevance", state.m(), features.m())?;
    let n = features.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("list length {k} must be in [1, {n}]")));
    }
    let scorer = StepScorer::new(state, features);
    if features.d() == 0 {
        // scores do not depend on the prefix, so greedy is a plain top-k
        let scores: Vec<f64> = (0..n).map(|id| scorer.score(id, &[], &[])).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        order.truncate(k);
        return RankedList::new(order, n);
    }

    let supports: Vec<Vec<usize>> = (0..n)
        .map(|id| {
            let x = features.topic(id);
            (0..x.len()).filter(|&j| x[j] > 0.0).collect()
        })
        .collect();
    let mut coverage = CoverageTracker::new(features.d());
    let mut taken = vec![false; n];
    let mut gain = Vec::with_capacity(features.d());
    let mut ids = Vec::with_capacity(k);
    for _ in 0..k {
        let uncovered = coverage.uncovered();
        let mut best: Option<(usize, f64)> = None;
        for id in (0..n).filter(|&id| !taken[id]) {
            let x = features.topic(id);
            gain.clear();
            gain.extend(supports[id].iter().map(|&j| x[j] * uncovered[j]));
            let mu = scorer.score(id, &supports[id], &gain);
            if best.is_none_or(|(_, b)| mu > b) {
                best = Some((id, mu));
            }
        }
        let (id, _) = best.expect("k <= number of items");
        taken[id] = true;
        coverage.push(features.topic(id));
        ids.push(id);
    }
    RankedList::new(ids, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Catalog, ClickFeedback};
    use crate::policy::{update, FeatureKind};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_catalog(rng: &mut impl Rng, n: usize, d: usize, m: usize) -> Catalog {
        Catalog::from_features(
            (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect(),
            (0..n)
                .map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
        )
        .unwrap()
    }

    /// Greedy loop written against the public scoring functions only.
    fn brute_force_greedy(state: &PolicyState, features: &FeatureMap, k: usize, shift: f64) -> Vec<usize> {
        let mut chosen: Vec<usize> = Vec::new();
        for _ in 0..k {
            let prefix: Vec<&[f64]> = chosen.iter().map(|&c| features.topic(c)).collect();
            let mut best = None;
            for id in 0..features.len() {
                if chosen.contains(&id) {
                    continue;
                }
                let omega = crate::model::coverage_gain(features.topic(id), &prefix).unwrap();
                let mu = state.ucb(&omega, features.rel(id)).unwrap() + shift;
                match best {
                    Some((_, b)) if mu <= b => {}
                    _ => best = Some((id, mu)),
                }
            }
            chosen.push(best.unwrap().0);
        }
        chosen
    }

    fn trained_state(seed: u64, kind: FeatureKind) -> (PolicyState, FeatureMap) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let catalog = random_catalog(&mut rng, 6, 3, 2);
        let features = FeatureMap::new(kind, &catalog);
        let mut state = PolicyState::new(features.d(), features.m(), 1.0).unwrap();
        for _ in 0..rng.random_range(0..20) {
            let list = select_list(&state, &features, 3).unwrap();
            let c = rng.random_range(1..=4);
            update(&mut state, &features, &list, ClickFeedback::new(c, 3).unwrap()).unwrap();
        }
        (state, features)
    }

    #[test]
    fn identical_items_tie_break_to_lowest_ids() {
        let catalog = Catalog::from_features(vec![vec![0.3, 0.3]; 5], vec![vec![0.5]; 5]).unwrap();
        let features = FeatureMap::new(FeatureKind::LinearZ, &catalog);
        let state = PolicyState::new(0, 1, 1.0).unwrap();
        assert_eq!(select_list(&state, &features, 3).unwrap().ids(), &[0, 1, 2]);
    }

    #[test]
    fn initial_state_picks_widest_item_first() {
        let catalog = Catalog::from_features(
            vec![vec![0.0]; 4],
            vec![vec![0.1, 0.1], vec![0.5, 0.2], vec![0.9, 0.1], vec![0.3, 0.3]],
        )
        .unwrap();
        let features = FeatureMap::new(FeatureKind::Hybrid, &catalog);
        let state = PolicyState::new(1, 2, 1.0).unwrap();
        assert_eq!(select_list(&state, &features, 4).unwrap().ids(), &[2, 1, 3, 0]);
    }

    #[test]
    fn rejects_oversized_lists() {
        let catalog = Catalog::from_features(vec![vec![0.1]; 2], vec![vec![0.1]; 2]).unwrap();
        let features = FeatureMap::new(FeatureKind::Hybrid, &catalog);
        let state = PolicyState::new(1, 1, 1.0).unwrap();
        assert!(select_list(&state, &features, 3).is_err());
        assert!(select_list(&state, &features, 0).is_err());
        let wrong = PolicyState::new(2, 1, 1.0).unwrap();
        assert!(select_list(&wrong, &features, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_brute_force_greedy(seed in any::<u64>(), kind_idx in 0usize..5, shift in -3.0f64..3.0) {
            let (state, features) = trained_state(seed, FeatureKind::ALL[kind_idx]);
            let fast = select_list(&state, &features, 3).unwrap();
            let plain = brute_force_greedy(&state, &features, 3, 0.0);
            prop_assert_eq!(fast.ids(), plain.as_slice());
            // a constant offset on every score leaves the argmax alone
            let shifted = brute_force_greedy(&state, &features, 3, shift);
            prop_assert_eq!(fast.ids(), shifted.as_slice());
        }
    }
}
