//! Turns ratings and topic assignments into experiment instances.

mod bundle;
mod ratings;
mod relevance;
mod svd;
mod synth;
mod topics;

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

pub use bundle::{config_hash, BundleUser, InstanceBundle, Provenance};
pub use ratings::{load_and_binarize, select_active, split_users, RatingsMatrix};
pub use relevance::{relevance_features, RelevanceFeatures, LEAST_SQUARES_RIDGE, NEGATIVE_SLACK};
pub use svd::{reconstruction_error, truncated_svd, TruncatedSvd, SVD_MAX_ITERATIONS, SVD_TOLERANCE};
pub use synth::{planted_ratings, synthesize_instance, SynthConfig};
pub use topics::{topic_counts, topic_features, topic_preferences, TopicAssignment};

use crate::error::{Error, Result};
use crate::model::{dot, Catalog};

/// Parameters shared by real and synthetic instance construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildParams {
    /// Share of users used to estimate item features.
    pub train_fraction: f64,
    /// Relevance feature dimension.
    pub m: usize,
    /// Maximum number of topics kept, most populous first.
    pub max_topics: usize,
    /// Topic labels removed before anything else.
    pub drop_topics: Vec<String>,
    pub seed: u64,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            m: 10,
            max_topics: 20,
            drop_topics: Vec::new(),
            seed: 0,
        }
    }
}

/// Settings of the `prepare` stage on rating and topic files.
#[derive(Debug, Clone, PartialEq)]
pub struct PrepareConfig {
    pub ratings: PathBuf,
    pub topics: PathBuf,
    pub threshold: f64,
    pub n_users: usize,
    pub n_items: usize,
    pub build: BuildParams,
}

impl PrepareConfig {
    pub fn new(ratings: impl Into<PathBuf>, topics: impl Into<PathBuf>) -> Self {
        Self {
            ratings: ratings.into(),
            topics: topics.into(),
            threshold: 5.0,
            n_users: 1000,
            n_items: 1000,
            build: BuildParams::default(),
        }
    }

    /// Every setting except the input paths, in a fixed textual form.
    fn canonical(&self) -> String {
        let b = &self.build;
        format!(
            "prepare threshold={} users={} items={} train_fraction={} m={} max_topics={} drop={:?} seed={}",
            self.threshold, self.n_users, self.n_items, b.train_fraction, b.m, b.max_topics, b.drop_topics, b.seed
        )
    }

    /// Applies one `key = value` setting. Keys: `ratings`, `topics`,
    /// `threshold`, `users`, `items`, `train_fraction`, `m`, `max_topics`,
    /// `drop_topics` (comma separated) and `seed`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
        }
        match key {
            "ratings" => self.ratings = value.into(),
            "topics" => self.topics = value.into(),
            "threshold" => self.threshold = num(key, value)?,
            "users" => self.n_users = num(key, value)?,
            "items" => self.n_items = num(key, value)?,
            "train_fraction" => self.build.train_fraction = num(key, value)?,
            "m" => self.build.m = num(key, value)?,
            "max_topics" => self.build.max_topics = num(key, value)?,
            "drop_topics" => {
                self.build.drop_topics = value
                    .split(',')
                    .map(str::trim)
                    .filter(|v| !v.is_empty())
                    .map(str::to_owned)
                    .collect()
            }
            "seed" => self.build.seed = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`; `#`
    /// starts a comment.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", idx + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", idx + 1)))?;
        }
        Ok(())
    }
}

/// The resolved settings in the grammar read by [`PrepareConfig::apply`].
impl fmt::Display for PrepareConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = &self.build;
        writeln!(f, "ratings = {}", self.ratings.display())?;
        writeln!(f, "topics = {}", self.topics.display())?;
        writeln!(f, "threshold = {}", self.threshold)?;
        writeln!(f, "users = {}", self.n_users)?;
        writeln!(f, "items = {}", self.n_items)?;
        writeln!(f, "train_fraction = {}", b.train_fraction)?;
        writeln!(f, "m = {}", b.m)?;
        writeln!(f, "max_topics = {}", b.max_topics)?;
        writeln!(f, "drop_topics = {}", b.drop_topics.join(", "))?;
        writeln!(f, "seed = {}", b.seed)
    }
}

/// What the pipeline kept and dropped on the way to a bundle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildReport {
    pub positive_rate: f64,
    pub items_without_topic: usize,
    pub items_without_signal: usize,
    pub dropped_topics: Vec<String>,
    pub test_users: usize,
    pub dropped_users: usize,
    pub singular_values: Vec<f64>,
    /// (item, user) pairs in the bundle with a negative relevance score.
    pub negative_pairs: usize,
}

/// Runs the pipeline on rating and topic files.
pub fn prepare(config: &PrepareConfig) -> Result<(InstanceBundle, BuildReport)> {
    let ratings_bytes = fs::read(&config.ratings).map_err(|e| Error::io(&config.ratings, e))?;
    let topic_bytes = fs::read(&config.topics).map_err(|e| Error::io(&config.topics, e))?;
    let hash = config_hash(&[config.canonical().as_bytes(), &ratings_bytes, &topic_bytes]);

    let f = load_and_binarize(&config.ratings, config.threshold)?;
    let topics = TopicAssignment::load(&config.topics)?;
    let active = select_active(&f, config.n_users, config.n_items)?;
    build_bundle(&active, &topics, &config.build, hash)
}

/// Pipeline stages after ingestion: topic filtering, user split, relevance
/// features, topic coverage and per-user preferences.
pub fn build_bundle(
    f: &RatingsMatrix,
    topics: &TopicAssignment,
    params: &BuildParams,
    config_hash: String,
) -> Result<(InstanceBundle, BuildReport)> {
    let mut report = BuildReport {
        positive_rate: f.positive_rate(),
        ..Default::default()
    };
    let topics = topics.drop_labels(&params.drop_topics);
    let with_topic: Vec<usize> = (0..f.n_items())
        .filter(|&a| !topics.topics_of(f.item_ids()[a]).is_empty())
        .collect();
    report.items_without_topic = f.n_items() - with_topic.len();
    if report.items_without_topic > 0 {
        log::warn!("{} items have no topic and are dropped", report.items_without_topic);
    }
    let all_users: Vec<usize> = (0..f.n_users()).collect();
    let f = f.submatrix(&all_users, &with_topic);
    let (train, test) = split_users(&f, params.train_fraction, params.seed)?;

    // topic selection and zero-denominator filtering on the training users
    let n_labels = topics.labels().len();
    let mut topics = topics.select_top(f.item_ids(), params.max_topics.min(n_labels))?;
    let (_, has_fans) = topic_features(&train, &topics.membership(train.item_ids()), topics.labels().len())?;
    report.dropped_topics = topics
        .labels()
        .iter()
        .zip(&has_fans)
        .filter(|(_, &kept)| !kept)
        .map(|(l, _)| l.clone())
        .collect();
    if !report.dropped_topics.is_empty() {
        log::warn!(
            "topics without any training fan are dropped: {:?}",
            report.dropped_topics
        );
        topics = topics.drop_labels(&report.dropped_topics);
    }
    let covered: Vec<usize> = (0..f.n_items())
        .filter(|&a| !topics.topics_of(f.item_ids()[a]).is_empty())
        .collect();
    report.items_without_topic += f.n_items() - covered.len();
    let train = train.submatrix(&(0..train.n_users()).collect::<Vec<_>>(), &covered);
    let test = test.submatrix(&(0..test.n_users()).collect::<Vec<_>>(), &covered);

    let rel = relevance_features(&train, &test, params.m, params.seed)?;
    report.singular_values = rel.singular_values.clone();
    let kept: Vec<usize> = (0..train.n_items()).filter(|&a| rel.items[a].is_some()).collect();
    report.items_without_signal = train.n_items() - kept.len();
    if report.items_without_signal > 0 {
        log::warn!(
            "{} items have no weight in the relevance subspace and are dropped",
            report.items_without_signal
        );
    }
    let train = train.submatrix(&(0..train.n_users()).collect::<Vec<_>>(), &kept);
    let test_items = test.submatrix(&(0..test.n_users()).collect::<Vec<_>>(), &kept);

    let d = topics.labels().len();
    let membership = topics.membership(train.item_ids());
    let (x, _) = topic_features(&train, &membership, d)?;
    let z: Vec<Vec<f64>> = kept.iter().map(|&a| rel.items[a].clone().expect("filtered")).collect();

    let mut users = Vec::new();
    for u in 0..test.n_users() {
        let counts = topic_counts(&test_items, u, &membership, d);
        match (&rel.users[u], counts.iter().any(|&c| c > 0)) {
            (Some(beta), true) => users.push(BundleUser {
                id: test.user_ids()[u],
                topic_counts: counts,
                beta: beta.clone(),
            }),
            _ => report.dropped_users += 1,
        }
    }
    report.test_users = test.n_users();
    if report.dropped_users > 0 {
        log::warn!(
            "{} of {} test users like no item and are dropped",
            report.dropped_users,
            test.n_users()
        );
    }
    report.negative_pairs = users
        .iter()
        .map(|u| z.iter().filter(|za| dot(za, &u.beta) < -NEGATIVE_SLACK).count())
        .sum();
    if report.negative_pairs > 0 {
        log::debug!("{} (item, user) pairs have negative relevance", report.negative_pairs);
    }

    let bundle = InstanceBundle::new(
        Catalog::from_features(x, z)?,
        train.item_ids().to_vec(),
        topics.labels().to_vec(),
        users,
        Provenance {
            config_hash,
            seed: params.seed,
        },
    )?;
    Ok((bundle, report))
}
