use rand::seq::index::sample_weighted;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::dot;

use super::{
    build_bundle, config_hash, BuildParams, BuildReport, BundleUser, InstanceBundle, RatingsMatrix, TopicAssignment,
    NEGATIVE_SLACK,
};

/// Parameters of the planted rating model behind synthetic instances.
///
/// Each item belongs to one to three topics and carries a latent relevance
/// direction. Each user is a fan of one or two topics and has a latent
/// taste. The chance that a user likes an item mixes topic fandom (weight
/// `topic_share`) with squared latent agreement, scaled so the overall
/// positive rate equals `sparsity`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Users generated before the train/test split.
    pub users: usize,
    pub items: usize,
    pub topics: usize,
    /// Relevance feature dimension; also the planted latent dimension.
    pub m: usize,
    /// Target fraction of positive user-item pairs.
    pub sparsity: f64,
    pub topic_share: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users: 400,
            items: 200,
            topics: 10,
            m: 10,
            sparsity: 0.2,
            topic_share: 0.8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn canonical(&self) -> String {
        format!(
            "synth users={} items={} topics={} m={} sparsity={} topic_share={} seed={}",
            self.users, self.items, self.topics, self.m, self.sparsity, self.topic_share, self.seed
        )
    }

    fn validate(&self) -> Result<()> {
        if self.topics == 0 || self.m == 0 {
            return Err(Error::invalid(
                "synthetic instances need at least one topic and one relevance dimension",
            ));
        }
        if self.items < self.m || self.users < 2 * self.m {
            return Err(Error::invalid(format!(
                "{} users x {} items is too small for {} relevance dimensions",
                self.users, self.items, self.m
            )));
        }
        if !(self.sparsity > 0.0 && self.sparsity < 1.0) {
            return Err(Error::invalid(format!("sparsity {} must be in (0, 1)", self.sparsity)));
        }
        if !(0.0..=1.0).contains(&self.topic_share) {
            return Err(Error::invalid(format!(
                "topic share {} must be in [0, 1]",
                self.topic_share
            )));
        }
        Ok(())
    }
}

fn unit_gaussian(rng: &mut impl Rng, dim: usize, bias: f64) -> Vec<f64> {
    loop {
        // the first coordinate carries a shared positive offset
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        v[0] += bias;
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn pick_topics(rng: &mut impl Rng, weights: &[f64], count: usize) -> Vec<usize> {
    let mut picked = sample_weighted(rng, weights.len(), |j| weights[j], count)
        .expect("positive weights")
        .into_vec();
    picked.sort_unstable();
    picked
}

/// Smallest scale `c` with `mean(min(1, c * s)) = target`, by bisection.
fn calibrate(propensity: &[f64], target: f64) -> Result<f64> {
    let mean = |c: f64| propensity.iter().map(|&s| (c * s).min(1.0)).sum::<f64>() / propensity.len() as f64;
    let reachable = propensity.iter().filter(|&&s| s > 0.0).count() as f64 / propensity.len() as f64;
    if target >= reachable {
        return Err(Error::invalid(format!(
            "sparsity {target} is infeasible: at most {reachable:.4} of pairs can be positive"
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while mean(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Planted ratings and topics for a synthetic instance.
pub fn planted_ratings(config: &SynthConfig) -> Result<(RatingsMatrix, TopicAssignment)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.topics;
    let topic_weights: Vec<f64> = (0..d).map(|j| 1.0 / (j as f64 + 1.0).powf(0.7)).collect();

    let mut item_topics = Vec::with_capacity(config.items);
    let mut item_taste = Vec::with_capacity(config.items);
    let mut quality = Vec::with_capacity(config.items);
    for _ in 0..config.items {
        let count = match rng.random::<f64>() {
            p if p < 0.6 => 1,
            p if p < 0.9 => 2,
            _ => 3,
        };
        item_topics.push(pick_topics(&mut rng, &topic_weights, count.min(d)));
        item_taste.push(unit_gaussian(&mut rng, config.m, 1.0));
        quality.push(rng.random_range(0.5..1.5));
    }

    let mut propensity = Vec::with_capacity(config.users * config.items);
    for _ in 0..config.users {
        let fans = (1 + rng.random_range(0..2)).min(d);
        let fan_of = pick_topics(&mut rng, &topic_weights, fans);
        let taste = unit_gaussian(&mut rng, config.m, 1.0);
        for a in 0..config.items {
            let fandom = item_topics[a].iter().any(|j| fan_of.contains(j)) as u8 as f64;
            let agreement = dot(&taste, &item_taste[a]).max(0.0).powi(2);
            propensity.push(quality[a] * (config.topic_share * fandom + (1.0 - config.topic_share) * agreement));
        }
    }
    let scale = calibrate(&propensity, config.sparsity)?;
    let entries: Vec<(usize, usize, bool)> = propensity
        .iter()
        .enumerate()
        .map(|(idx, &s)| {
            (
                idx / config.items,
                idx % config.items,
                rng.random_bool((scale * s).min(1.0)),
            )
        })
        .collect();
    let f = RatingsMatrix::from_entries(
        (0..config.users as u64).collect(),
        (0..config.items as u64).collect(),
        entries,
    )?;
    let topics = TopicAssignment::from_pairs(
        item_topics
            .iter()
            .enumerate()
            .flat_map(|(a, ts)| ts.iter().map(move |j| (a as u64, j.to_string()))),
    );
    Ok((f, topics))
}

/// Moves `beta` along the first relevance coordinate, just far enough that
/// every item scores nonnegative, and renormalizes. `None` if some item with
/// a negative score has no weight on that coordinate.
fn shift_nonnegative(beta: &[f64], features: &[&[f64]]) -> Option<Vec<f64>> {
    let mut shift = 0.0f64;
    for z in features {
        let score = dot(z, beta);
        if score < 0.0 {
            if z[0] <= 0.0 {
                return None;
            }
            shift = shift.max(-score / z[0]);
        }
    }
    if shift == 0.0 {
        return Some(beta.to_vec());
    }
    // a relative margin keeps the tightest item clear of rounding below zero
    let mut shifted = beta.to_vec();
    shifted[0] += shift * (1.0 + 1e-9);
    let norm = dot(&shifted, &shifted).sqrt();
    let shifted: Vec<f64> = shifted.into_iter().map(|b| b / norm).collect();
    features.iter().all(|z| dot(z, &shifted) >= 0.0).then_some(shifted)
}

/// Builds a synthetic instance through the same pipeline as real data.
///
/// Least-squares preferences typically score some items below zero. Each
/// user's preference is therefore moved along the leading singular
/// direction, which has nonnegative weight on every item, until no score is
/// negative, so every attraction lies in `[0, 1]` for any mixing weight.
/// Returns the bundle, the build report and the number of users moved.
pub fn synthesize_instance(config: &SynthConfig) -> Result<(InstanceBundle, BuildReport, usize)> {
    let (f, topics) = planted_ratings(config)?;
    let params = BuildParams {
        train_fraction: 0.5,
        m: config.m,
        max_topics: config.topics,
        drop_topics: Vec::new(),
        seed: config.seed,
    };
    let (bundle, mut report) = build_bundle(&f, &topics, &params, config_hash(&[config.canonical()]))?;
    let catalog = bundle.catalog();
    let features: Vec<&[f64]> = catalog.items().iter().map(|it| it.rel_vec.as_slice()).collect();
    let mut moved = 0;
    let mut users = Vec::with_capacity(bundle.users().len());
    for user in bundle.users() {
        match shift_nonnegative(&user.beta, &features) {
            Some(beta) => {
                moved += (beta != user.beta) as usize;
                users.push(BundleUser { beta, ..user.clone() });
            }
            None => {
                log::warn!("synthetic user {} cannot be made clamp-free and is dropped", user.id);
                report.dropped_users += 1;
            }
        }
    }
    report.test_users = users.len();
    report.negative_pairs = users
        .iter()
        .map(|u| features.iter().filter(|z| dot(z, &u.beta) < -NEGATIVE_SLACK).count())
        .sum();
    log::info!(
        "{moved} of {} synthetic users had their relevance preference shifted",
        users.len()
    );
    let bundle = InstanceBundle::new(
        catalog.clone(),
        bundle.item_ids().to_vec(),
        bundle.topic_labels().to_vec(),
        users,
        bundle.provenance().clone(),
    )?;
    Ok((bundle, report, moved))
}
