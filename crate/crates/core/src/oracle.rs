//! Benchmarks that know the user's true preferences.
//!
//! Regret is measured against the greedy list, which picks the most
//! attractive remaining item position by position. Exhaustive search over
//! all `K`-permutations is available for tiny catalogs to check the greedy
//! list's approximation factor.

use crate::environment::{attraction_vector, UserModel};
use crate::error::{Error, Result};
use crate::model::{Catalog, CoverageTracker, RankedList};

/// Default cap on the number of permutations brute force may enumerate.
pub const DEFAULT_PERMUTATION_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub greedy_list: RankedList,
    pub greedy_reward: f64,
    pub eta: f64,
    pub optimal_list: Option<RankedList>,
    pub optimal_reward: Option<f64>,
}

fn check_k(k: usize, catalog: &Catalog) -> Result<()> {
    if k == 0 || k > catalog.len() {
        return Err(Error::invalid(format!(
            "list length {k} must be in [1, {}]",
            catalog.len()
        )));
    }
    Ok(())
}

/// Greedy list under the true attraction. Ties go to the lowest item id.
pub fn greedy_benchmark(user: &UserModel, catalog: &Catalog, k: usize) -> Result<RankedList> {
    user.check_catalog(catalog)?;
    check_k(k, catalog)?;
    let mut coverage = CoverageTracker::new(catalog.d());
    let mut omega = vec![0.0; catalog.d()];
    let mut taken = vec![false; catalog.len()];
    let mut ids = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for item in catalog.items().iter().filter(|i| !taken[i.id]) {
            coverage.gain_into(&item.topic_vec, &mut omega);
            let score = user.score(&omega, &item.rel_vec);
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((item.id, score));
            }
        }
        let (id, _) = best.expect("k <= catalog size");
        taken[id] = true;
        coverage.push(&catalog.item(id).topic_vec);
        ids.push(id);
    }
    RankedList::new(ids, catalog.len())
}

/// Approximation factor of the greedy list:
/// `(1 - 1/e) max(1/K, 1 - (K - 1) alpha_max / 2)`.
pub fn eta(k: usize, alpha_max: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("eta needs K >= 1"));
    }
    if !(0.0..=1.0).contains(&alpha_max) {
        return Err(Error::invalid(format!("alpha_max {alpha_max} outside [0, 1]")));
    }
    let k = k as f64;
    let factor = (1.0 / k).max(1.0 - (k - 1.0) / 2.0 * alpha_max);
    Ok((1.0 - (-1.0f64).exp()) * factor)
}

/// Largest attraction any single item can have, i.e. at the top of a list.
pub fn alpha_max(user: &UserModel, catalog: &Catalog) -> f64 {
    catalog
        .items()
        .iter()
        .map(|item| user.score(&item.topic_vec, &item.rel_vec).clamp(0.0, 1.0))
        .fold(0.0, f64::max)
}

/// Expected number of clicks on `list` under the (clamped) true attraction.
pub fn list_reward(user: &UserModel, list: &RankedList, catalog: &Catalog) -> Result<f64> {
    Ok(attraction_vector(user, list, catalog)?.0.expected_reward())
}

fn permutation_count(n: usize, k: usize) -> u128 {
    ((n - k + 1)..=n).fold(1u128, |acc, v| acc.saturating_mul(v as u128))
}

/// Exhaustive search over all `K`-permutations for the best expected reward.
/// The first maximizer in lexicographic id order is returned.
pub fn brute_force_optimal(user: &UserModel, catalog: &Catalog, k: usize, cap: u128) -> Result<(RankedList, f64)> {
    user.check_catalog(catalog)?;
    check_k(k, catalog)?;
    let count = permutation_count(catalog.len(), k);
    if count > cap {
        return Err(Error::TooLarge { count, cap });
    }

    struct Search<'a> {
        user: &'a UserModel,
        catalog: &'a Catalog,
        k: usize,
        prefix: Vec<usize>,
        taken: Vec<bool>,
        best: Option<(Vec<usize>, f64)>,
    }

    impl Search<'_> {
        // `miss` is the probability that nothing in the prefix was clicked.
        fn visit(&mut self, coverage: &CoverageTracker, miss: f64) {
            if self.prefix.len() == self.k {
                let reward = 1.0 - miss;
                if self.best.as_ref().is_none_or(|(_, b)| reward > *b) {
                    self.best = Some((self.prefix.clone(), reward));
                }
                return;
            }
            for id in 0..self.catalog.len() {
                if self.taken[id] {
                    continue;
                }
                let item = self.catalog.item(id);
                let omega = coverage.gain(&item.topic_vec);
                let alpha = self.user.score(&omega, &item.rel_vec).clamp(0.0, 1.0);
                let mut next = coverage.clone();
                next.push(&item.topic_vec);
                self.taken[id] = true;
                self.prefix.push(id);
                self.visit(&next, miss * (1.0 - alpha));
                self.prefix.pop();
                self.taken[id] = false;
            }
        }
    }

    let mut search = Search {
        user,
        catalog,
        k,
        prefix: Vec::with_capacity(k),
        taken: vec![false; catalog.len()],
        best: None,
    };
    search.visit(&CoverageTracker::new(catalog.d()), 1.0);
    let (ids, reward) = search.best.expect("at least one permutation");
    Ok((RankedList::new(ids, catalog.len())?, reward))
}

/// Expected reward gap between the greedy benchmark and `displayed`.
/// Negative when the displayed list beats the benchmark.
pub fn per_step_regret(user: &UserModel, catalog: &Catalog, k: usize, displayed: &RankedList) -> Result<f64> {
    if displayed.len() != k {
        return Err(Error::invalid(format!(
            "displayed list has {} items, expected {k}",
            displayed.len()
        )));
    }
    let greedy = greedy_benchmark(user, catalog, k)?;
    Ok(list_reward(user, &greedy, catalog)? - list_reward(user, displayed, catalog)?)
}

/// Greedy benchmark with its approximation factor and, when `optimal_cap`
/// is given, the exhaustive optimum.
pub fn benchmark(user: &UserModel, catalog: &Catalog, k: usize, optimal_cap: Option<u128>) -> Result<BenchmarkResult> {
    let greedy_list = greedy_benchmark(user, catalog, k)?;
    let greedy_reward = list_reward(user, &greedy_list, catalog)?;
    let eta = eta(k, alpha_max(user, catalog))?;
    let (optimal_list, optimal_reward) = match optimal_cap {
        Some(cap) => {
            let (list, reward) = brute_force_optimal(user, catalog, k, cap)?;
            (Some(list), Some(reward))
        }
        None => (None, None),
    };
    Ok(BenchmarkResult {
        greedy_list,
        greedy_reward,
        eta,
        optimal_list,
        optimal_reward,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const ONE_MINUS_INV_E: f64 = 0.632_120_558_828_557_7;

    #[test]
    fn eta_examples() {
        assert_abs_diff_eq!(eta(1, 0.9).unwrap(), ONE_MINUS_INV_E, epsilon = 1e-12);
        assert_abs_diff_eq!(eta(1, 0.0).unwrap(), 0.6321, epsilon = 1e-4);
        assert_abs_diff_eq!(eta(3, 0.5).unwrap(), ONE_MINUS_INV_E * 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(eta(3, 0.5).unwrap(), 0.3161, epsilon = 1e-4);
        assert_abs_diff_eq!(eta(11, 1.0).unwrap(), ONE_MINUS_INV_E / 11.0, epsilon = 1e-12);
        assert!(eta(0, 0.5).is_err());
        assert!(eta(2, 1.5).is_err());
    }

    fn relevance_only() -> (UserModel, Catalog) {
        let catalog = Catalog::from_features(
            vec![vec![0.5]; 5],
            vec![vec![0.1], vec![0.7], vec![0.3], vec![0.9], vec![0.2]],
        )
        .unwrap();
        (UserModel::new(vec![1.0], vec![1.0], 1.0).unwrap(), catalog)
    }

    #[test]
    fn modular_case_is_top_k_and_optimal() {
        let (user, catalog) = relevance_only();
        let greedy = greedy_benchmark(&user, &catalog, 3).unwrap();
        assert_eq!(greedy.ids(), &[3, 1, 2]);
        let greedy_reward = list_reward(&user, &greedy, &catalog).unwrap();
        let (_, opt) = brute_force_optimal(&user, &catalog, 3, DEFAULT_PERMUTATION_CAP).unwrap();
        assert_abs_diff_eq!(greedy_reward, opt, epsilon = 1e-12);
        assert_eq!(per_step_regret(&user, &catalog, 3, &greedy).unwrap(), 0.0);

        // worst three items: 1 - 0.9 * 0.8 * 0.7 against 1 - 0.1 * 0.3 * 0.7
        let worst = RankedList::new(vec![0, 4, 2], 5).unwrap();
        let gap = per_step_regret(&user, &catalog, 3, &worst).unwrap();
        assert_abs_diff_eq!(gap, (1.0 - 0.021) - (1.0 - 0.504), epsilon = 1e-12);
    }

    #[test]
    fn order_does_not_matter_for_pure_relevance() {
        let (user, catalog) = relevance_only();
        let a = list_reward(&user, &RankedList::new(vec![0, 1], 5).unwrap(), &catalog).unwrap();
        let b = list_reward(&user, &RankedList::new(vec![1, 0], 5).unwrap(), &catalog).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        let two = Catalog::from_features(vec![vec![0.5]; 2], vec![vec![0.4], vec![0.6]]).unwrap();
        let (list, reward) = brute_force_optimal(&user, &two, 2, 10).unwrap();
        assert_eq!(list.ids(), &[0, 1]);
        assert_abs_diff_eq!(reward, 1.0 - 0.6 * 0.4, epsilon = 1e-15);
    }

    #[test]
    fn diminishing_gain_promotes_diversity() {
        let catalog =
            Catalog::from_features(vec![vec![0.8, 0.0], vec![0.8, 0.0], vec![0.0, 0.6]], vec![vec![0.0]; 3]).unwrap();
        let user = UserModel::new(vec![0.5, 0.5], vec![0.0], 0.0).unwrap();
        assert_eq!(greedy_benchmark(&user, &catalog, 3).unwrap().ids(), &[0, 2, 1]);
    }

    #[test]
    fn brute_force_refuses_large_spaces() {
        let (user, catalog) = relevance_only();
        assert!(matches!(
            brute_force_optimal(&user, &catalog, 3, 59),
            Err(Error::TooLarge { count: 60, cap: 59 })
        ));
        assert!(greedy_benchmark(&user, &catalog, 6).is_err());
    }

    fn random_instance(rng: &mut impl Rng) -> (UserModel, Catalog, usize) {
        let n = rng.random_range(2..=8);
        let k = rng.random_range(1..=3.min(n));
        let d = rng.random_range(1..=4);
        let m = rng.random_range(1..=3);
        let catalog = Catalog::from_features(
            (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect(),
            (0..n)
                .map(|_| (0..m).map(|_| rng.random_range(0.0..1.0 / m as f64)).collect())
                .collect(),
        )
        .unwrap();
        let raw: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let theta = raw.iter().map(|v| v / total).collect();
        let beta = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        let user = UserModel::new(theta, beta, rng.random_range(0.0..=1.0)).unwrap();
        (user, catalog, k)
    }

    #[test]
    fn greedy_is_eta_approximate_and_permutation_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (user, catalog, k) = random_instance(&mut rng);
            let res = benchmark(&user, &catalog, k, Some(DEFAULT_PERMUTATION_CAP)).unwrap();
            let opt = res.optimal_reward.unwrap();
            assert!(res.greedy_reward <= opt + 1e-12);
            assert!(res.greedy_reward >= res.eta * opt);

            // reversing the catalog keeps the greedy reward
            let n = catalog.len();
            let rev = Catalog::from_features(
                (0..n).rev().map(|i| catalog.item(i).topic_vec.clone()).collect(),
                (0..n).rev().map(|i| catalog.item(i).rel_vec.clone()).collect(),
            )
            .unwrap();
            let rev_reward = benchmark(&user, &rev, k, None).unwrap().greedy_reward;
            assert_abs_diff_eq!(rev_reward, res.greedy_reward, epsilon = 1e-12);
        }
    }

    #[test]
    fn greedy_matches_independent_replay() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (user, catalog, k) = random_instance(&mut rng);
            let fast = greedy_benchmark(&user, &catalog, k).unwrap();
            let mut chosen: Vec<usize> = Vec::new();
            for _ in 0..k {
                let prefix: Vec<&[f64]> = chosen.iter().map(|&c| catalog.item(c).topic_vec.as_slice()).collect();
                let best = (0..catalog.len())
                    .filter(|i| !chosen.contains(i))
                    .map(|i| {
                        let item = catalog.item(i);
                        let omega = crate::model::coverage_gain(&item.topic_vec, &prefix).unwrap();
                        let a = user.lambda
                            * crate::model::hybrid_attraction(&[], &item.rel_vec, &[], &user.beta_star).unwrap()
                            + (1.0 - user.lambda)
                                * crate::model::hybrid_attraction(&omega, &[], &user.theta_star, &[]).unwrap();
                        (i, a)
                    })
                    .fold(None, |acc: Option<(usize, f64)>, (i, a)| match acc {
                        Some((_, b)) if a <= b => acc,
                        _ => Some((i, a)),
                    })
                    .unwrap();
                chosen.push(best.0);
            }
            assert_eq!(fast.ids(), chosen.as_slice());
        }
    }
}
