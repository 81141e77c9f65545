use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Sparse user x item ratings, binarized. Unrated pairs count as 0.
///
/// Rated-but-negative entries are kept so that activity (number of ratings)
/// can be measured after binarization.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsMatrix {
    user_ids: Vec<u64>,
    item_ids: Vec<u64>,
    /// Per user: `(item column, positive)` sorted by column.
    rows: Vec<Vec<(u32, bool)>>,
}

impl RatingsMatrix {
    /// Builds a matrix from `(row, col, positive)` triples over the given id maps.
    pub fn from_entries(
        user_ids: Vec<u64>,
        item_ids: Vec<u64>,
        entries: impl IntoIterator<Item = (usize, usize, bool)>,
    ) -> Result<Self> {
        let mut rows = vec![BTreeMap::new(); user_ids.len()];
        for (u, a, pos) in entries {
            if u >= user_ids.len() || a >= item_ids.len() {
                return Err(Error::invalid(format!("entry ({u}, {a}) outside matrix")));
            }
            rows[u].insert(a as u32, pos);
        }
        Ok(Self {
            user_ids,
            item_ids,
            rows: rows.into_iter().map(|r| r.into_iter().collect()).collect(),
        })
    }

    /// A fully rated matrix from dense 0/1 rows, ids `0..n`.
    pub fn from_dense(rows: &[Vec<u8>]) -> Result<Self> {
        let n_items = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_items) {
            return Err(Error::invalid("ragged dense ratings"));
        }
        let entries = rows
            .iter()
            .enumerate()
            .flat_map(|(u, r)| r.iter().enumerate().map(move |(a, &v)| (u, a, v != 0)));
        Self::from_entries((0..rows.len() as u64).collect(), (0..n_items as u64).collect(), entries)
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    /// Original user id of each row.
    pub fn user_ids(&self) -> &[u64] {
        &self.user_ids
    }

    /// Original item id of each column.
    pub fn item_ids(&self) -> &[u64] {
        &self.item_ids
    }

    pub fn is_positive(&self, user: usize, item: usize) -> bool {
        self.rows[user]
            .binary_search_by_key(&(item as u32), |&(c, _)| c)
            .is_ok_and(|i| self.rows[user][i].1)
    }

    /// Columns the user rated positively, ascending.
    pub fn positives(&self, user: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows[user].iter().filter(|e| e.1).map(|e| e.0 as usize)
    }

    pub fn user_rating_counts(&self) -> Vec<usize> {
        self.rows.iter().map(Vec::len).collect()
    }

    pub fn item_rating_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_items()];
        for row in &self.rows {
            for &(c, _) in row {
                counts[c as usize] += 1;
            }
        }
        counts
    }

    pub fn positive_count(&self) -> usize {
        self.rows.iter().map(|r| r.iter().filter(|e| e.1).count()).sum()
    }

    /// Fraction of all user-item pairs that are positive.
    pub fn positive_rate(&self) -> f64 {
        let pairs = self.n_users() * self.n_items();
        if pairs == 0 {
            0.0
        } else {
            self.positive_count() as f64 / pairs as f64
        }
    }

    /// Dense 0/1 matrix, users as rows.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(self.n_users(), self.n_items());
        for (u, row) in self.rows.iter().enumerate() {
            for &(c, pos) in row {
                if pos {
                    f[(u, c as usize)] = 1.0;
                }
            }
        }
        f
    }

    /// Submatrix with the given rows and columns, in the given order.
    pub fn submatrix(&self, users: &[usize], items: &[usize]) -> Self {
        let mut col_map = vec![u32::MAX; self.n_items()];
        for (new, &old) in items.iter().enumerate() {
            col_map[old] = new as u32;
        }
        let rows = users
            .iter()
            .map(|&u| {
                let mut r: Vec<(u32, bool)> = self.rows[u]
                    .iter()
                    .filter(|(c, _)| col_map[*c as usize] != u32::MAX)
                    .map(|&(c, p)| (col_map[c as usize], p))
                    .collect();
                r.sort_unstable();
                r
            })
            .collect();
        Self {
            user_ids: users.iter().map(|&u| self.user_ids[u]).collect(),
            item_ids: items.iter().map(|&a| self.item_ids[a]).collect(),
            rows,
        }
    }
}

fn split_fields(line: &str) -> Vec<&str> {
    let delim = if line.contains('\t') { '\t' } else { ',' };
    line.split(delim).map(str::trim).collect()
}

/// Reads `user, item, rating` records (tab or comma separated; extra columns
/// ignored) and marks ratings `>= threshold` as positive. A non-numeric first
/// line is treated as a header; `#` starts a comment line.
pub fn load_and_binarize(path: &Path, threshold: f64) -> Result<RatingsMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };

    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields = split_fields(line);
        if fields.len() < 3 {
            return Err(parse_err(line_no, format!("expected user, item, rating; got '{line}'")));
        }
        let parsed = (
            fields[0].parse::<u64>(),
            fields[1].parse::<u64>(),
            fields[2].parse::<f64>(),
        );
        match parsed {
            (Ok(u), Ok(i), Ok(r)) if r.is_finite() => records.push((u, i, r >= threshold)),
            _ if records.is_empty() && fields[0].parse::<f64>().is_err() => {
                log::debug!("{}: skipping header line", path.display());
            }
            _ => return Err(parse_err(line_no, format!("malformed record '{line}'"))),
        }
    }
    if records.is_empty() {
        return Err(Error::invalid(format!("{}: no rating records", path.display())));
    }

    let mut user_ids: Vec<u64> = records.iter().map(|r| r.0).collect();
    let mut item_ids: Vec<u64> = records.iter().map(|r| r.1).collect();
    user_ids.sort_unstable();
    user_ids.dedup();
    item_ids.sort_unstable();
    item_ids.dedup();
    let entries = records.into_iter().map(|(u, i, p)| {
        (
            user_ids.binary_search(&u).expect("collected above"),
            item_ids.binary_search(&i).expect("collected above"),
            p,
        )
    });
    let f = RatingsMatrix::from_entries(user_ids.clone(), item_ids.clone(), entries.collect::<Vec<_>>())?;
    let rate = f.positive_rate();
    if f.positive_count() == 0 {
        log::warn!(
            "{}: no rating reaches {threshold}; the binary matrix is all zero",
            path.display()
        );
    } else {
        log::info!(
            "{}: {} users, {} items, positive rate {:.4}",
            path.display(),
            f.n_users(),
            f.n_items(),
            rate
        );
    }
    Ok(f)
}

fn top_by_count(counts: &[usize], ids: &[u64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(ids[a].cmp(&ids[b])));
    order.truncate(n);
    order
}

/// Keeps the `n_users` users with the most ratings and the `n_items` items
/// rated most often, both in decreasing activity (ties by original id).
pub fn select_active(f: &RatingsMatrix, n_users: usize, n_items: usize) -> Result<RatingsMatrix> {
    if n_users == 0 || n_users > f.n_users() || n_items == 0 || n_items > f.n_items() {
        return Err(Error::invalid(format!(
            "cannot select {n_users} x {n_items} from a {} x {} matrix",
            f.n_users(),
            f.n_items()
        )));
    }
    let users = top_by_count(&f.user_rating_counts(), f.user_ids(), n_users);
    let items = top_by_count(&f.item_rating_counts(), f.item_ids(), n_items);
    Ok(f.submatrix(&users, &items))
}

/// Seeded random split of users into a training part holding `fraction` of
/// the rows and a test part with the rest. Row order is preserved within
/// each part.
pub fn split_users(f: &RatingsMatrix, fraction: f64, seed: u64) -> Result<(RatingsMatrix, RatingsMatrix)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("split fraction {fraction} must be in (0, 1)")));
    }
    let n = f.n_users();
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::invalid(format!(
            "splitting {n} users at {fraction} leaves one side empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, test) = order.split_at_mut(n_train);
    train.sort_unstable();
    test.sort_unstable();
    let items: Vec<usize> = (0..f.n_items()).collect();
    Ok((f.submatrix(train, &items), f.submatrix(test, &items)))
}
