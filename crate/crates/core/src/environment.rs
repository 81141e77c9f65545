//! Simulated cascade user.
//!
//! The user scans the list top-down and clicks the first item that attracts
//! them. Attraction mixes relevance and topical novelty with a weight
//! `lambda` that learners never see:
//! `alpha_i = lambda z_i^T beta* + (1 - lambda) omega_i^T theta*`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{check_dim, Error, Result};
use crate::model::{dot, AttractionVector, Catalog, ClickFeedback, CoverageTracker, RankedList};
use crate::policy::CascadeLearner;

/// Hidden preferences of one simulated user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserModel {
    pub theta_star: Vec<f64>,
    pub beta_star: Vec<f64>,
    pub lambda: f64,
}

impl UserModel {
    pub fn new(theta_star: Vec<f64>, beta_star: Vec<f64>, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid(format!("lambda {lambda} outside [0, 1]")));
        }
        Ok(Self {
            theta_star,
            beta_star,
            lambda,
        })
    }

    /// Unclamped attraction of an item with coverage gain `omega` and relevance `z`.
    pub fn score(&self, omega: &[f64], z: &[f64]) -> f64 {
        self.lambda * dot(z, &self.beta_star) + (1.0 - self.lambda) * dot(omega, &self.theta_star)
    }

    /// Norm of the effective weight vector `[(1 - lambda) theta*; lambda beta*]`.
    pub fn weight_norm(&self) -> f64 {
        let t = (1.0 - self.lambda).powi(2) * dot(&self.theta_star, &self.theta_star);
        let b = self.lambda.powi(2) * dot(&self.beta_star, &self.beta_star);
        (t + b).sqrt()
    }

    pub(crate) fn check_catalog(&self, catalog: &Catalog) -> Result<()> {
        check_dim("user topic preference", catalog.d(), self.theta_star.len())?;
        check_dim("user relevance preference", catalog.m(), self.beta_star.len())
    }
}

/// Everything observable about one simulated interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub list: RankedList,
    pub alpha: AttractionVector,
    pub feedback: ClickFeedback,
    pub expected_reward: f64,
    pub clamp_count: usize,
}

/// Unclamped per-position attraction of `list`.
pub fn raw_attraction(user: &UserModel, list: &RankedList, catalog: &Catalog) -> Result<Vec<f64>> {
    user.check_catalog(catalog)?;
    if let Some(&bad) = list.ids().iter().find(|&&id| id >= catalog.len()) {
        return Err(Error::invalid(format!("item id {bad} not in catalog")));
    }
    let mut coverage = CoverageTracker::new(catalog.d());
    let mut omega = vec![0.0; catalog.d()];
    Ok(list
        .ids()
        .iter()
        .map(|&id| {
            let item = catalog.item(id);
            coverage.gain_into(&item.topic_vec, &mut omega);
            coverage.push(&item.topic_vec);
            user.score(&omega, &item.rel_vec)
        })
        .collect())
}

/// Attraction probabilities of a displayed list, clamped into `[0, 1]`,
/// together with the number of entries that needed clamping.
pub fn attraction_vector(user: &UserModel, list: &RankedList, catalog: &Catalog) -> Result<(AttractionVector, usize)> {
    let mut raw = raw_attraction(user, list, catalog)?;
    let mut clamped = 0;
    for a in &mut raw {
        if !(0.0..=1.0).contains(a) {
            *a = a.clamp(0.0, 1.0);
            clamped += 1;
        }
    }
    Ok((AttractionVector::new(raw)?, clamped))
}

/// Draws the first click of a cascade user: positions are examined in order
/// and each attracts with its own Bernoulli probability.
pub fn sample_click<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<ClickFeedback> {
    if let Some(a) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::invalid(format!("attraction {a} outside [0, 1]")));
    }
    let k = alpha.len();
    let pos = alpha
        .iter()
        .position(|&a| rng.random::<f64>() < a)
        .map_or(k + 1, |i| i + 1);
    ClickFeedback::new(pos, k)
}

/// One full interaction: select, display, sample feedback, learn.
pub fn run_step<R: Rng + ?Sized>(
    learner: &mut CascadeLearner,
    user: &UserModel,
    catalog: &Catalog,
    k: usize,
    rng: &mut R,
) -> Result<StepOutcome> {
    let list = learner.select(k)?;
    let (alpha, clamp_count) = attraction_vector(user, &list, catalog)?;
    let feedback = sample_click(alpha.probs(), rng)?;
    learner.update(&list, feedback)?;
    Ok(StepOutcome {
        expected_reward: alpha.expected_reward(),
        list,
        alpha,
        feedback,
        clamp_count,
    })
}

/// Seed of the random stream for one `(user, repeat)` run.
pub fn run_seed(master_seed: u64, user: u64, repeat: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(user.to_le_bytes());
    hasher.update(repeat.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// The generator used for every simulated run.
pub fn run_rng(master_seed: u64, user: u64, repeat: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(run_seed(master_seed, user, repeat))
}
