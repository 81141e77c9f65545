//! Property checks on an instance bundle.

use std::fmt;

use rand::seq::index::sample;
use rand::Rng;

use crate::environment::{run_rng, run_step};
use crate::error::Result;
use crate::model::{dot, Catalog, CoverageTracker};
use crate::oracle::{alpha_max, brute_force_optimal, eta, greedy_benchmark, list_reward};
use crate::pipeline::InstanceBundle;
use crate::policy::{inverse_residual, CascadeLearner, FeatureKind, PolicyState};

const TOL: f64 = 1e-9;
const INVERSE_TOL: f64 = 1e-6;
const SUBMODULAR_TRIALS: usize = 200;
const ORACLE_USERS: usize = 5;
const ORACLE_ITEMS: usize = 8;
const ORACLE_K: usize = 3;
const LEARNER_STEPS: u64 = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, failures: usize, total: usize, what: &str) -> Check {
    Check {
        name,
        passed: failures == 0,
        detail: format!("{failures} of {total} {what} violate"),
    }
}

fn item_features(catalog: &Catalog) -> Check {
    let bad = catalog
        .items()
        .iter()
        .filter(|it| {
            let x_ok = it.topic_vec.iter().all(|x| (0.0..=1.0).contains(x)) && it.topic_vec.iter().any(|&x| x > 0.0);
            let z_ok = (dot(&it.rel_vec, &it.rel_vec).sqrt() - 1.0).abs() < TOL;
            !(x_ok && z_ok)
        })
        .count();
    check("item features", bad, catalog.len(), "items")
}

fn user_preferences(bundle: &InstanceBundle) -> Check {
    let bad = bundle
        .users()
        .iter()
        .filter(|u| {
            let theta = u.theta();
            let theta_ok = theta.iter().all(|&t| t >= 0.0) && (theta.iter().sum::<f64>() - 1.0).abs() < TOL;
            let beta_ok = (dot(&u.beta, &u.beta).sqrt() - 1.0).abs() < TOL;
            !(theta_ok && beta_ok)
        })
        .count();
    check("user preferences", bad, bundle.users().len(), "users")
}

/// Scores can only leave `[0, 1]` from below; those pairs are counted.
fn attraction_range(bundle: &InstanceBundle) -> Result<Check> {
    let catalog = bundle.catalog();
    let (mut above, mut below, mut total) = (0usize, 0usize, 0usize);
    for i in 0..bundle.users().len() {
        for lambda in [0.0, 0.5, 1.0] {
            let user = bundle.user_model(i, lambda)?;
            for it in catalog.items() {
                let s = user.score(&it.topic_vec, &it.rel_vec);
                above += (s > 1.0 + TOL) as usize;
                below += (s < -TOL) as usize;
                total += 1;
            }
        }
    }
    Ok(Check {
        name: "attraction range",
        passed: above == 0,
        detail: format!("{above} of {total} scores above 1, {below} below 0 (clamped)"),
    })
}

fn coverage_submodular<R: Rng>(catalog: &Catalog, rng: &mut R) -> Check {
    let n = catalog.len();
    let mut bad = 0;
    for _ in 0..SUBMODULAR_TRIALS {
        let len = rng.random_range(1..=n.min(6));
        let ids = sample(rng, n, len).into_vec();
        let (last, rest) = ids.split_last().unwrap();
        let cut = rng.random_range(0..=rest.len());
        let mut small = CoverageTracker::new(catalog.d());
        for &id in &rest[..cut] {
            small.push(&catalog.item(id).topic_vec);
        }
        let mut large = small.clone();
        for &id in &rest[cut..] {
            large.push(&catalog.item(id).topic_vec);
        }
        let x = &catalog.item(*last).topic_vec;
        let (g_small, g_large) = (small.gain(x), large.gain(x));
        let diminishing = g_small.iter().zip(&g_large).all(|(s, l)| *s + TOL >= *l && *l >= -TOL);
        let monotone = small
            .coverage()
            .iter()
            .zip(large.coverage())
            .all(|(s, l)| l + TOL >= *s);
        bad += !(diminishing && monotone) as usize;
    }
    check("coverage submodularity", bad, SUBMODULAR_TRIALS, "sampled prefix pairs")
}

fn greedy_ratio<R: Rng>(bundle: &InstanceBundle, rng: &mut R) -> Result<Check> {
    let catalog = bundle.catalog();
    let size = catalog.len().min(ORACLE_ITEMS);
    let k = ORACLE_K.min(size);
    let mut ids = sample(rng, catalog.len(), size).into_vec();
    ids.sort_unstable();
    let sub = Catalog::from_features(
        ids.iter().map(|&i| catalog.item(i).topic_vec.clone()).collect(),
        ids.iter().map(|&i| catalog.item(i).rel_vec.clone()).collect(),
    )?;
    let users = bundle.users().len().min(ORACLE_USERS);
    let (mut bad, mut worst) = (0, f64::INFINITY);
    for i in 0..users {
        let user = bundle.user_model(i, 0.5)?;
        let greedy = list_reward(&user, &greedy_benchmark(&user, &sub, k)?, &sub)?;
        let (_, best) = brute_force_optimal(&user, &sub, k, u128::MAX)?;
        let factor = eta(k, alpha_max(&user, &sub))?;
        if best > 0.0 {
            worst = worst.min(greedy / best);
        }
        bad += (greedy + TOL < factor * best) as usize;
    }
    let mut c = check("greedy approximation", bad, users, "users");
    c.detail
        .push_str(&format!(", worst greedy/optimal {worst:.4} on {size} items, K={k}"));
    Ok(c)
}

fn learner_state(bundle: &InstanceBundle, seed: u64) -> Result<Check> {
    let catalog = bundle.catalog();
    let user = bundle.user_model(0, 0.5)?;
    let k = catalog.len().min(10);
    let mut learner = CascadeLearner::new(FeatureKind::Hybrid, catalog, 1.0)?;
    let mut rng = run_rng(seed, 0, 0);
    for _ in 0..LEARNER_STEPS {
        run_step(&mut learner, &user, catalog, k, &mut rng)?;
    }
    let state = learner.state();
    let rel = inverse_residual(state.rel_gram(), state.rel_gram_inv());
    let schur = inverse_residual(state.schur(), state.schur_inv());
    let text = state.to_snapshot_string();
    let restored = PolicyState::read_snapshot(text.as_bytes())?;
    let round_trip = restored.to_snapshot_string() == text;
    Ok(Check {
        name: "learner state",
        passed: rel < INVERSE_TOL && schur < INVERSE_TOL && round_trip,
        detail: format!(
            "after {LEARNER_STEPS} steps inverse residuals {rel:.2e} and {schur:.2e}, snapshot round trip {}",
            if round_trip { "exact" } else { "differs" }
        ),
    })
}

fn replay(bundle: &InstanceBundle, seed: u64) -> Result<Check> {
    let catalog = bundle.catalog();
    let user = bundle.user_model(0, 0.5)?;
    let k = catalog.len().min(10);
    let trajectory = || -> Result<Vec<Vec<usize>>> {
        let mut learner = CascadeLearner::new(FeatureKind::Hybrid, catalog, 1.0)?;
        let mut rng = run_rng(seed, 0, 0);
        (0..50)
            .map(|_| run_step(&mut learner, &user, catalog, k, &mut rng).map(|o| o.list.into_ids()))
            .collect()
    };
    let same = trajectory()? == trajectory()?;
    Ok(Check {
        name: "deterministic replay",
        passed: same,
        detail: format!(
            "two 50-step runs from one seed {}",
            if same { "match" } else { "differ" }
        ),
    })
}

/// Runs every check; randomized checks draw from `seed`.
pub fn validate_bundle(bundle: &InstanceBundle, seed: u64) -> Result<Vec<Check>> {
    let mut rng = run_rng(seed, u64::MAX, 0);
    Ok(vec![
        item_features(bundle.catalog()),
        user_preferences(bundle),
        attraction_range(bundle)?,
        coverage_submodular(bundle.catalog(), &mut rng),
        greedy_ratio(bundle, &mut rng)?,
        learner_state(bundle, seed)?,
        replay(bundle, seed)?,
    ])
}
