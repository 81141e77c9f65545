use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::Catalog;

/// How a learner turns catalog items into its (topic, relevance) features.
///
/// Topic features enter through their coverage gain over the displayed
/// prefix; relevance features enter linearly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    /// Coverage gain on `x` plus linear `z` (CascadeHybrid).
    Hybrid,
    /// Linear on `z` only (CascadeLinUCB).
    LinearZ,
    /// Linear on `[x; z]` (CascadeLinUCBFull).
    LinearXz,
    /// Coverage gain on `x` only (CascadeLSB).
    CoverageX,
    /// Coverage gain on `[x; z]` mapped into `[0, 1]` (CascadeLSBFull).
    CoverageXz,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 5] = [
        FeatureKind::Hybrid,
        FeatureKind::LinearZ,
        FeatureKind::LinearXz,
        FeatureKind::CoverageX,
        FeatureKind::CoverageXz,
    ];

    /// Short policy name used in configs and CSV output.
    pub fn policy_name(self) -> &'static str {
        match self {
            FeatureKind::Hybrid => "hybrid",
            FeatureKind::LinearZ => "linucb",
            FeatureKind::LinearXz => "linucb-full",
            FeatureKind::CoverageX => "lsb",
            FeatureKind::CoverageXz => "lsb-full",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            FeatureKind::Hybrid => "CascadeHybrid",
            FeatureKind::LinearZ => "CascadeLinUCB",
            FeatureKind::LinearXz => "CascadeLinUCBFull",
            FeatureKind::CoverageX => "CascadeLSB",
            FeatureKind::CoverageXz => "CascadeLSBFull",
        }
    }

    fn map_name(self) -> &'static str {
        match self {
            FeatureKind::Hybrid => "hybrid",
            FeatureKind::LinearZ => "linear-z",
            FeatureKind::LinearXz => "linear-xz",
            FeatureKind::CoverageX => "coverage-x",
            FeatureKind::CoverageXz => "coverage-xz",
        }
    }

    /// Effective `(d, m)` of the learner for a catalog with topic dim `d`
    /// and relevance dim `m`.
    pub fn dims(self, d: usize, m: usize) -> (usize, usize) {
        match self {
            FeatureKind::Hybrid => (d, m),
            FeatureKind::LinearZ => (0, m),
            FeatureKind::LinearXz => (0, d + m),
            FeatureKind::CoverageX => (d, 0),
            FeatureKind::CoverageXz => (d + m, 0),
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.policy_name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| {
                s.eq_ignore_ascii_case(k.policy_name())
                    || s.eq_ignore_ascii_case(k.map_name())
                    || s.eq_ignore_ascii_case(k.display_name())
            })
            .ok_or_else(|| Error::invalid(format!("unknown policy '{s}'")))
    }
}

/// How relevance features are forced into `[0, 1]` when they feed a coverage model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum XzTransform {
    /// Clamp every entry into `[0, 1]`.
    #[default]
    Clamp,
    /// Rescale each relevance column to `[0, 1]` by its catalog min and max.
    MinMax,
}

impl fmt::Display for XzTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            XzTransform::Clamp => "clamp",
            XzTransform::MinMax => "minmax",
        })
    }
}

impl FromStr for XzTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clamp" => Ok(XzTransform::Clamp),
            "minmax" | "min-max" => Ok(XzTransform::MinMax),
            _ => Err(Error::invalid(format!("unknown xz transform '{s}'"))),
        }
    }
}

/// Per-item features as seen by one learner, precomputed for a catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    kind: FeatureKind,
    transform: XzTransform,
    len: usize,
    d: usize,
    m: usize,
    topic: Vec<f64>,
    rel: Vec<f64>,
}

impl FeatureMap {
    pub fn new(kind: FeatureKind, catalog: &Catalog) -> Self {
        Self::with_transform(kind, catalog, XzTransform::default())
    }

    pub fn with_transform(kind: FeatureKind, catalog: &Catalog, transform: XzTransform) -> Self {
        let (d, m) = kind.dims(catalog.d(), catalog.m());
        let mut topic = Vec::with_capacity(catalog.len() * d);
        let mut rel = Vec::with_capacity(catalog.len() * m);
        let rescale = column_ranges(catalog);
        for item in catalog.items() {
            let (x, z) = (&item.topic_vec, &item.rel_vec);
            match kind {
                FeatureKind::Hybrid => {
                    topic.extend_from_slice(x);
                    rel.extend_from_slice(z);
                }
                FeatureKind::LinearZ => rel.extend_from_slice(z),
                FeatureKind::LinearXz => {
                    rel.extend_from_slice(x);
                    rel.extend_from_slice(z);
                }
                FeatureKind::CoverageX => topic.extend_from_slice(x),
                FeatureKind::CoverageXz => {
                    topic.extend(x.iter().map(|v| v.clamp(0.0, 1.0)));
                    match transform {
                        XzTransform::Clamp => topic.extend(z.iter().map(|v| v.clamp(0.0, 1.0))),
                        XzTransform::MinMax => topic.extend(z.iter().zip(&rescale).map(|(v, &(lo, hi))| {
                            if hi > lo {
                                (v - lo) / (hi - lo)
                            } else {
                                v.clamp(0.0, 1.0)
                            }
                        })),
                    }
                }
            }
        }
        Self {
            kind,
            transform,
            len: catalog.len(),
            d,
            m,
            topic,
            rel,
        }
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn transform(&self) -> XzTransform {
        self.transform
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Effective topic dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Effective relevance dimension.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Topic vector of item `id` whose coverage gain forms `omega`.
    pub fn topic(&self, id: usize) -> &[f64] {
        &self.topic[id * self.d..(id + 1) * self.d]
    }

    /// Linear feature vector `z` of item `id`.
    pub fn rel(&self, id: usize) -> &[f64] {
        &self.rel[id * self.m..(id + 1) * self.m]
    }
}

fn column_ranges(catalog: &Catalog) -> Vec<(f64, f64)> {
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); catalog.m()];
    for item in catalog.items() {
        for (r, &v) in ranges.iter_mut().zip(&item.rel_vec) {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
    }
    ranges
}
