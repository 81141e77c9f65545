use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::ratings::RatingsMatrix;

/// Item-to-topic membership keyed by original item id.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicAssignment {
    labels: Vec<String>,
    /// Topic indices per item, ascending.
    items: BTreeMap<u64, Vec<usize>>,
}

/// Orders numeric labels numerically and everything else after them, lexically.
fn label_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

impl TopicAssignment {
    pub fn from_pairs<S: AsRef<str>>(pairs: impl IntoIterator<Item = (u64, S)>) -> Self {
        let pairs: Vec<(u64, String)> = pairs.into_iter().map(|(i, s)| (i, s.as_ref().to_owned())).collect();
        let mut labels: Vec<String> = pairs
            .iter()
            .map(|p| p.1.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        labels.sort_by(|a, b| label_order(a, b));
        let mut items: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (item, label) in &pairs {
            let idx = labels.iter().position(|l| l == label).expect("collected above");
            items.entry(*item).or_default().push(idx);
        }
        for topics in items.values_mut() {
            topics.sort_unstable();
            topics.dedup();
        }
        Self { labels, items }
    }

    /// Reads `item_id, topic` lines (tab or comma separated). A non-numeric
    /// first line is taken as a header; `#` starts a comment line.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let delim = if line.contains('\t') { '\t' } else { ',' };
            let fields: Vec<&str> = line.split(delim).map(str::trim).collect();
            let item = fields[0].parse::<u64>();
            match (item, fields.get(1)) {
                (Ok(item), Some(topic)) if !topic.is_empty() => pairs.push((item, topic.to_string())),
                (Err(_), _) if pairs.is_empty() && fields.len() >= 2 => {}
                _ => {
                    return Err(Error::Parse {
                        path: path.to_owned(),
                        line: idx + 1,
                        message: format!("expected item_id, topic; got '{line}'"),
                    })
                }
            }
        }
        if pairs.is_empty() {
            return Err(Error::invalid(format!("{}: no topic assignments", path.display())));
        }
        Ok(Self::from_pairs(pairs))
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Topic indices of an item; empty for unknown items.
    pub fn topics_of(&self, item_id: u64) -> &[usize] {
        self.items.get(&item_id).map_or(&[], Vec::as_slice)
    }

    /// Keeps only the given topics, in the given order.
    fn retain_topics(&self, keep: &[usize]) -> Self {
        let mut remap = vec![usize::MAX; self.labels.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let items = self
            .items
            .iter()
            .map(|(&id, topics)| {
                let mut t: Vec<usize> = topics.iter().map(|&j| remap[j]).filter(|&j| j != usize::MAX).collect();
                t.sort_unstable();
                (id, t)
            })
            .filter(|(_, t)| !t.is_empty())
            .collect();
        Self {
            labels: keep.iter().map(|&j| self.labels[j].clone()).collect(),
            items,
        }
    }

    /// Removes topics by label. Unknown labels are ignored.
    pub fn drop_labels<S: AsRef<str>>(&self, drop: &[S]) -> Self {
        let keep: Vec<usize> = (0..self.labels.len())
            .filter(|&j| !drop.iter().any(|d| d.as_ref() == self.labels[j]))
            .collect();
        self.retain_topics(&keep)
    }

    /// Number of the given items in each topic.
    pub fn item_counts(&self, item_ids: &[u64]) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for &id in item_ids {
            for &j in self.topics_of(id) {
                counts[j] += 1;
            }
        }
        counts
    }

    /// Reorders topics by how many of the given items they contain
    /// (descending, ties by current index) and keeps the first `d`.
    pub fn select_top(&self, item_ids: &[u64], d: usize) -> Result<Self> {
        if d == 0 || d > self.labels.len() {
            return Err(Error::invalid(format!(
                "cannot keep {d} of {} topics",
                self.labels.len()
            )));
        }
        let counts = self.item_counts(item_ids);
        let mut order: Vec<usize> = (0..self.labels.len()).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        order.truncate(d);
        Ok(self.retain_topics(&order))
    }

    /// Per-column topic lists for the columns of a ratings matrix.
    pub fn membership(&self, item_ids: &[u64]) -> Vec<Vec<usize>> {
        item_ids.iter().map(|&id| self.topics_of(id).to_vec()).collect()
    }
}

/// Per-item topic coverage: for item `a` in topic `j`, the number of users
/// who like `a` over the number of users who like at least one item of `j`.
///
/// `membership[a]` lists the topics of column `a`; there are `d` topics.
/// Returns the `L x d` features and, per topic, whether its denominator was
/// nonzero. Topics with a zero denominator get zero columns.
pub fn topic_features(f: &RatingsMatrix, membership: &[Vec<usize>], d: usize) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
    let n_items = f.n_items();
    if membership.len() != n_items {
        return Err(Error::DimensionMismatch {
            context: "topic membership",
            expected: n_items,
            actual: membership.len(),
        });
    }
    if f.positive_count() == 0 {
        return Err(Error::invalid("topic features need at least one positive rating"));
    }
    let mut likes = vec![0usize; n_items];
    let mut fans = vec![0usize; d];
    let mut seen = vec![false; d];
    for u in 0..f.n_users() {
        seen.iter_mut().for_each(|s| *s = false);
        for a in f.positives(u) {
            likes[a] += 1;
            for &j in &membership[a] {
                seen[j] = true;
            }
        }
        for (fan, &s) in fans.iter_mut().zip(&seen) {
            *fan += s as usize;
        }
    }
    let x = (0..n_items)
        .map(|a| {
            let mut row = vec![0.0; d];
            for &j in &membership[a] {
                if fans[j] > 0 {
                    row[j] = likes[a] as f64 / fans[j] as f64;
                }
            }
            row
        })
        .collect();
    Ok((x, fans.iter().map(|&c| c > 0).collect()))
}

/// Per-topic counts of the items a user likes; a multi-topic item counts
/// once in each of its topics.
pub fn topic_counts(f: &RatingsMatrix, user: usize, membership: &[Vec<usize>], d: usize) -> Vec<u32> {
    let mut counts = vec![0u32; d];
    for a in f.positives(user) {
        for &j in &membership[a] {
            counts[j] += 1;
        }
    }
    counts
}

/// Topic preferences from per-topic like counts, normalized to sum to one.
/// `None` when the user likes nothing in any topic.
pub fn topic_preferences(counts: &[u32]) -> Option<Vec<f64>> {
    let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
    (total > 0).then(|| counts.iter().map(|&c| f64::from(c) / total as f64).collect())
}
