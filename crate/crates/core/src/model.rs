//! Items, ranked lists and the attraction-probability math shared by the
//! learners, the simulator and the benchmark oracle.
//!
//! Topic coverage follows the probabilistic coverage model: a list covers
//! topic `j` with probability `1 - prod(1 - x_a[j])`, and the gain of
//! appending an item is the increase of that quantity. Attraction is the
//! hybrid form `z^T beta + omega^T theta` with `omega` the coverage gain.

use crate::error::{check_dim, Error, Result};

/// A rankable item: topic coverage probabilities `x` and relevance features `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: usize,
    pub topic_vec: Vec<f64>,
    pub rel_vec: Vec<f64>,
}

/// The candidate set. Item ids are their positions in the catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    items: Vec<Item>,
    d: usize,
    m: usize,
}

impl Catalog {
    /// Builds a catalog from per-item topic and relevance vectors. Item `i`
    /// receives id `i`.
    pub fn from_features(topic: Vec<Vec<f64>>, rel: Vec<Vec<f64>>) -> Result<Self> {
        if topic.len() != rel.len() {
            return Err(Error::invalid(format!(
                "{} topic vectors but {} relevance vectors",
                topic.len(),
                rel.len()
            )));
        }
        let items = topic
            .into_iter()
            .zip(rel)
            .enumerate()
            .map(|(id, (topic_vec, rel_vec))| Item { id, topic_vec, rel_vec })
            .collect();
        Self::new(items)
    }

    pub fn new(items: Vec<Item>) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("catalog needs at least one item"))?;
        let (d, m) = (first.topic_vec.len(), first.rel_vec.len());
        for (pos, item) in items.iter().enumerate() {
            if item.id != pos {
                return Err(Error::invalid(format!(
                    "item at position {pos} has id {}; ids must equal positions",
                    item.id
                )));
            }
            check_dim("catalog topic vector", d, item.topic_vec.len())?;
            check_dim("catalog relevance vector", m, item.rel_vec.len())?;
            if let Some(v) = item.topic_vec.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::invalid(format!(
                    "item {pos} has topic coverage {v} outside [0, 1]"
                )));
            }
            if item.rel_vec.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("item {pos} has non-finite relevance")));
            }
        }
        Ok(Self { items, d, m })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Topic dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Relevance dimension.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn item(&self, id: usize) -> &Item {
        &self.items[id]
    }
}

/// An ordered selection of `K` distinct item ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RankedList(Vec<usize>);

impl RankedList {
    /// Validates that ids are distinct and in range for a catalog of `catalog_len` items.
    pub fn new(ids: Vec<usize>, catalog_len: usize) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::invalid("ranked list must contain at least one item"));
        }
        if ids.len() > catalog_len {
            return Err(Error::invalid(format!(
                "list of length {} exceeds catalog size {catalog_len}",
                ids.len()
            )));
        }
        let mut seen = vec![false; catalog_len];
        for &id in &ids {
            if id >= catalog_len {
                return Err(Error::invalid(format!("item id {id} out of range")));
            }
            if std::mem::replace(&mut seen[id], true) {
                return Err(Error::invalid(format!("item id {id} appears twice")));
            }
        }
        Ok(Self(ids))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn into_ids(self) -> Vec<usize> {
        self.0
    }
}

/// Cascade feedback: the 1-based position of the first click, `K + 1` for none.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClickFeedback {
    click_pos: usize,
}

impl ClickFeedback {
    pub fn new(click_pos: usize, k: usize) -> Result<Self> {
        if click_pos == 0 || click_pos > k + 1 {
            return Err(Error::invalid(format!(
                "click position {click_pos} outside [1, {}]",
                k + 1
            )));
        }
        Ok(Self { click_pos })
    }

    pub fn no_click(k: usize) -> Self {
        Self { click_pos: k + 1 }
    }

    pub fn click_pos(self) -> usize {
        self.click_pos
    }

    /// Zero-based index of the clicked position, if any.
    pub fn clicked_index(self, k: usize) -> Option<usize> {
        (self.click_pos <= k).then(|| self.click_pos - 1)
    }

    /// Number of items the user examined: `min(K, c)`.
    pub fn observed(self, k: usize) -> usize {
        self.click_pos.min(k)
    }
}

/// Per-position attraction probabilities of a displayed list.
#[derive(Debug, Clone, PartialEq)]
pub struct AttractionVector(Vec<f64>);

impl AttractionVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_unit_interval(&probs)?;
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Probability of at least one click, `1 - prod(1 - alpha_i)`.
    pub fn expected_reward(&self) -> f64 {
        1.0 - self.0.iter().map(|a| 1.0 - a).product::<f64>()
    }
}

fn check_unit_interval(probs: &[f64]) -> Result<()> {
    match probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(p) => Err(Error::invalid(format!("attraction probability {p} outside [0, 1]"))),
        None => Ok(()),
    }
}

/// Running coverage of a list prefix. Stores `1 - g_j` per topic so that the
/// gain of a candidate is `x_j * (1 - g_j)` in `O(d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageTracker {
    uncovered: Vec<f64>,
}

impl CoverageTracker {
    pub fn new(d: usize) -> Self {
        Self {
            uncovered: vec![1.0; d],
        }
    }

    pub fn d(&self) -> usize {
        self.uncovered.len()
    }

    /// Probability that each topic is still uncovered by the prefix.
    pub fn uncovered(&self) -> &[f64] {
        &self.uncovered
    }

    pub fn coverage(&self) -> Vec<f64> {
        self.uncovered.iter().map(|u| 1.0 - u).collect()
    }

    /// Writes the coverage gain of `x` over the current prefix into `out`.
    pub fn gain_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, xi), u) in out.iter_mut().zip(x).zip(&self.uncovered) {
            *o = xi * u;
        }
    }

    pub fn gain(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d()];
        self.gain_into(x, &mut out);
        out
    }

    pub fn push(&mut self, x: &[f64]) {
        for (u, xi) in self.uncovered.iter_mut().zip(x) {
            *u *= 1.0 - xi;
        }
    }
}

/// Topic coverage `g(A)` of a prefix given its items' topic vectors.
pub fn topic_coverage(d: usize, prefix: &[&[f64]]) -> Result<Vec<f64>> {
    let mut tracker = CoverageTracker::new(d);
    for x in prefix {
        check_dim("topic_coverage", d, x.len())?;
        tracker.push(x);
    }
    Ok(tracker.coverage())
}

/// Coverage gain `Delta(a | A)` of appending topic vector `x` to `prefix`.
pub fn coverage_gain(x: &[f64], prefix: &[&[f64]]) -> Result<Vec<f64>> {
    let mut tracker = CoverageTracker::new(x.len());
    for p in prefix {
        check_dim("coverage_gain", x.len(), p.len())?;
        tracker.push(p);
    }
    Ok(tracker.gain(x))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hybrid attraction `z^T beta + omega^T theta`. Not clamped.
pub fn hybrid_attraction(omega: &[f64], z: &[f64], theta: &[f64], beta: &[f64]) -> Result<f64> {
    check_dim("hybrid_attraction topic", theta.len(), omega.len())?;
    check_dim("hybrid_attraction relevance", beta.len(), z.len())?;
    Ok(dot(z, beta) + dot(omega, theta))
}

/// Expected cascade reward `1 - prod(1 - alpha_i)`.
pub fn expected_list_reward(alpha: &[f64]) -> Result<f64> {
    check_unit_interval(alpha)?;
    Ok(1.0 - alpha.iter().map(|a| 1.0 - a).product::<f64>())
}

/// Realized reward of one interaction: 1 if anything was clicked.
pub fn realized_reward(feedback: ClickFeedback, k: usize) -> Result<u32> {
    if feedback.click_pos() > k + 1 {
        return Err(Error::invalid(format!(
            "click position {} outside [1, {}]",
            feedback.click_pos(),
            k + 1
        )));
    }
    Ok(u32::from(feedback.click_pos() <= k))
}
