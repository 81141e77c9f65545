//! On-disk experiment instances.
//!
//! A bundle is a directory holding `manifest.txt` and one text table per
//! matrix. Every table starts with `# rows R cols C hash H`, where `H` is the
//! configuration hash of the bundle, followed by one whitespace-separated row
//! per line.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::environment::UserModel;
use crate::error::{Error, Result};
use crate::model::Catalog;

use super::topics::topic_preferences;

const MAGIC: &str = "cascade-hybrid instance v1";
const TOPIC_FILE: &str = "topic_features.mat";
const RELEVANCE_FILE: &str = "relevance_features.mat";
const ITEM_ID_FILE: &str = "item_ids.mat";
const USER_ID_FILE: &str = "user_ids.mat";
const COUNT_FILE: &str = "topic_counts.mat";
const BETA_FILE: &str = "relevance_preferences.mat";

/// Hex sha256 over the given parts, each prefixed with its length.
pub fn config_hash<T: AsRef<[u8]>>(parts: &[T]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        let bytes = part.as_ref();
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

/// A test user: liked-item counts per topic and the relevance preference.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleUser {
    pub id: u64,
    pub topic_counts: Vec<u32>,
    pub beta: Vec<f64>,
}

impl BundleUser {
    /// Topic preference, the normalized topic counts.
    pub fn theta(&self) -> Vec<f64> {
        topic_preferences(&self.topic_counts).expect("bundle users like at least one topic")
    }
}

/// A catalog together with the simulated users that rank over it.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceBundle {
    catalog: Catalog,
    item_ids: Vec<u64>,
    topic_labels: Vec<String>,
    users: Vec<BundleUser>,
    provenance: Provenance,
}

impl InstanceBundle {
    pub fn new(
        catalog: Catalog,
        item_ids: Vec<u64>,
        topic_labels: Vec<String>,
        users: Vec<BundleUser>,
        provenance: Provenance,
    ) -> Result<Self> {
        let (d, m) = (catalog.d(), catalog.m());
        if item_ids.len() != catalog.len() {
            return Err(Error::invalid(format!(
                "{} item ids for {} items",
                item_ids.len(),
                catalog.len()
            )));
        }
        if topic_labels.len() != d {
            return Err(Error::invalid(format!(
                "{} topic labels for {d} topics",
                topic_labels.len()
            )));
        }
        if topic_labels.iter().any(|l| l.contains(['\t', '\n'])) {
            return Err(Error::invalid("topic labels may not contain tabs or newlines"));
        }
        if users.is_empty() {
            return Err(Error::invalid("bundle has no users"));
        }
        for user in &users {
            if user.topic_counts.len() != d || user.beta.len() != m {
                return Err(Error::invalid(format!(
                    "user {} does not match catalog dimensions",
                    user.id
                )));
            }
            if user.topic_counts.iter().all(|&c| c == 0) {
                return Err(Error::invalid(format!("user {} likes no topic", user.id)));
            }
        }
        Ok(Self {
            catalog,
            item_ids,
            topic_labels,
            users,
            provenance,
        })
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn item_ids(&self) -> &[u64] {
        &self.item_ids
    }

    pub fn topic_labels(&self) -> &[String] {
        &self.topic_labels
    }

    pub fn users(&self) -> &[BundleUser] {
        &self.users
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn user_model(&self, user: usize, lambda: f64) -> Result<UserModel> {
        let u = self
            .users
            .get(user)
            .ok_or_else(|| Error::invalid(format!("user index {user} out of range")))?;
        UserModel::new(u.theta(), u.beta.clone(), lambda)
    }

    /// Keeps the first `d` topics. Topics are stored most populous first, so
    /// this keeps the `d` topics with the most items. Users who like nothing
    /// in the kept topics are dropped.
    pub fn restrict_topics(&self, d: usize) -> Result<Self> {
        if d == 0 || d > self.catalog.d() {
            return Err(Error::invalid(format!(
                "cannot keep {d} of {} topics",
                self.catalog.d()
            )));
        }
        if d == self.catalog.d() {
            return Ok(self.clone());
        }
        let topic = self
            .catalog
            .items()
            .iter()
            .map(|it| it.topic_vec[..d].to_vec())
            .collect();
        let rel = self.catalog.items().iter().map(|it| it.rel_vec.clone()).collect();
        let users: Vec<BundleUser> = self
            .users
            .iter()
            .map(|u| BundleUser {
                id: u.id,
                topic_counts: u.topic_counts[..d].to_vec(),
                beta: u.beta.clone(),
            })
            .filter(|u| u.topic_counts.iter().any(|&c| c > 0))
            .collect();
        if users.len() < self.users.len() {
            log::warn!(
                "{} of {} users like nothing in the top {d} topics and are dropped",
                self.users.len() - users.len(),
                self.users.len()
            );
        }
        Self::new(
            Catalog::from_features(topic, rel)?,
            self.item_ids.clone(),
            self.topic_labels[..d].to_vec(),
            users,
            self.provenance.clone(),
        )
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (n, d, m) = (self.catalog.len(), self.catalog.d(), self.catalog.m());
        let hash = &self.provenance.config_hash;
        let manifest = format!(
            "{MAGIC}\nconfig_hash {hash}\nseed {}\nitems {n}\ntopics {d}\nrelevance {m}\nusers {}\ntopic_labels\t{}\n",
            self.provenance.seed,
            self.users.len(),
            self.topic_labels.join("\t"),
        );
        write_file(&dir.join("manifest.txt"), &manifest)?;

        let items = self.catalog.items();
        write_table(
            &dir.join(TOPIC_FILE),
            hash,
            d,
            items.iter().map(|it| it.topic_vec.as_slice()),
        )?;
        write_table(
            &dir.join(RELEVANCE_FILE),
            hash,
            m,
            items.iter().map(|it| it.rel_vec.as_slice()),
        )?;
        write_table(
            &dir.join(ITEM_ID_FILE),
            hash,
            1,
            self.item_ids.iter().map(std::slice::from_ref),
        )?;
        write_table(
            &dir.join(USER_ID_FILE),
            hash,
            1,
            self.users.iter().map(|u| std::slice::from_ref(&u.id)),
        )?;
        write_table(
            &dir.join(COUNT_FILE),
            hash,
            d,
            self.users.iter().map(|u| u.topic_counts.as_slice()),
        )?;
        write_table(
            &dir.join(BETA_FILE),
            hash,
            m,
            self.users.iter().map(|u| u.beta.as_slice()),
        )?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.txt");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(parse_error(&path, 1, "not an instance bundle"));
        }
        let mut field = |line: usize, key: &str| -> Result<String> {
            let l = lines.next().unwrap_or_default();
            let (k, v) = l.split_once([' ', '\t']).unwrap_or((l, ""));
            if k != key {
                return Err(parse_error(&path, line, &format!("expected '{key}'")));
            }
            Ok(v.to_owned())
        };
        let hash = field(2, "config_hash")?;
        let number = |line: usize, v: String| -> Result<u64> {
            v.parse()
                .map_err(|_| parse_error(&path, line, &format!("bad number '{v}'")))
        };
        let seed = number(3, field(3, "seed")?)?;
        let n = number(4, field(4, "items")?)? as usize;
        let d = number(5, field(5, "topics")?)? as usize;
        let m = number(6, field(6, "relevance")?)? as usize;
        let n_users = number(7, field(7, "users")?)? as usize;
        let labels_line = field(8, "topic_labels")?;
        let topic_labels: Vec<String> = if d == 0 {
            Vec::new()
        } else {
            labels_line.split('\t').map(str::to_owned).collect()
        };

        let topic: Vec<Vec<f64>> = read_table(&dir.join(TOPIC_FILE), &hash, n, d)?;
        let rel: Vec<Vec<f64>> = read_table(&dir.join(RELEVANCE_FILE), &hash, n, m)?;
        let item_ids: Vec<Vec<u64>> = read_table(&dir.join(ITEM_ID_FILE), &hash, n, 1)?;
        let user_ids: Vec<Vec<u64>> = read_table(&dir.join(USER_ID_FILE), &hash, n_users, 1)?;
        let counts: Vec<Vec<u32>> = read_table(&dir.join(COUNT_FILE), &hash, n_users, d)?;
        let betas: Vec<Vec<f64>> = read_table(&dir.join(BETA_FILE), &hash, n_users, m)?;
        let users = user_ids
            .into_iter()
            .zip(counts)
            .zip(betas)
            .map(|((id, topic_counts), beta)| BundleUser {
                id: id[0],
                topic_counts,
                beta,
            })
            .collect();
        Self::new(
            Catalog::from_features(topic, rel)?,
            item_ids.into_iter().map(|r| r[0]).collect(),
            topic_labels,
            users,
            Provenance {
                config_hash: hash,
                seed,
            },
        )
    }
}

fn parse_error(path: &Path, line: usize, message: &str) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        message: message.to_owned(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_table<'a, T: Display + 'a>(
    path: &Path,
    hash: &str,
    cols: usize,
    rows: impl ExactSizeIterator<Item = &'a [T]>,
) -> Result<()> {
    let mut out = format!("# rows {} cols {cols} hash {hash}\n", rows.len());
    for row in rows {
        let cells: Vec<String> = row.iter().map(ToString::to_string).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    write_file(path, &out)
}

fn read_table<T: FromStr>(path: &Path, hash: &str, rows: usize, cols: usize) -> Result<Vec<Vec<T>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let expected = format!("# rows {rows} cols {cols} hash {hash}");
    let header = lines.next().unwrap_or_default();
    if header != expected {
        return Err(parse_error(
            path,
            1,
            &format!("header '{header}' does not match '{expected}'"),
        ));
    }
    let mut table = Vec::with_capacity(rows);
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<T>()
                    .map_err(|_| parse_error(path, line_no, &format!("bad value '{t}'")))
            })
            .collect::<Result<Vec<T>>>()?;
        if row.len() != cols {
            return Err(parse_error(
                path,
                line_no,
                &format!("expected {cols} values, found {}", row.len()),
            ));
        }
        table.push(row);
    }
    if table.len() != rows {
        return Err(parse_error(
            path,
            table.len() + 1,
            &format!("expected {rows} rows, found {}", table.len()),
        ));
    }
    Ok(table)
}
