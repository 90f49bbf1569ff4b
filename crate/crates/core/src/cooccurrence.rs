//! Object co-occurrence counts and the statistics built on them.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Dataset, ImageRecord, Split};
use crate::lexicon::{Lexicon, ObjectId};

#[derive(Debug, Error)]
pub enum CoocError {
    #[error("no images in split {0}")]
    EmptySelection(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("matrix file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("image {image_id} has object id {id} outside a lexicon of {n} classes")]
    OutOfRange { image_id: u64, id: usize, n: usize },
}

/// Where per-image object sets come from when counting pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CoocSource {
    /// Instance annotations (`gt_objects`).
    #[default]
    Annotations,
    /// Union of lexicon mentions over the reference captions.
    Captions,
}

impl FromStr for CoocSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "annotations" => Ok(Self::Annotations),
            "captions" => Ok(Self::Captions),
            other => Err(format!("unknown co-occurrence source `{other}`")),
        }
    }
}

impl CoocSource {
    pub fn objects(self, image: &ImageRecord, lex: &Lexicon) -> BTreeSet<ObjectId> {
        match self {
            CoocSource::Annotations => image.gt_objects.clone(),
            CoocSource::Captions => image
                .captions
                .iter()
                .flat_map(|c| lex.match_mentions(c.tokens()))
                .map(|m| m.object)
                .collect(),
        }
    }
}

/// Symmetric N×N pair counts with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl CooccurrenceMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            counts: vec![0; n * n],
        }
    }

    /// Builds a matrix from a full row-major table. Fails unless the table
    /// is square, symmetric and zero on the diagonal.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self, CoocError> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(CoocError::Format {
                    line: i + 1,
                    message: format!("expected {n} columns, found {}", row.len()),
                });
            }
            m.counts[i * n..(i + 1) * n].copy_from_slice(row);
        }
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), CoocError> {
        for i in 0..self.n {
            if self.get(i, i) != 0 {
                return Err(CoocError::Format {
                    line: i + 1,
                    message: "non-zero diagonal".into(),
                });
            }
            for j in 0..i {
                if self.get(i, j) != self.get(j, i) {
                    return Err(CoocError::Format {
                        line: i + 1,
                        message: format!("asymmetric entry ({i}, {j})"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.counts[i * self.n..(i + 1) * self.n]
    }

    pub fn is_symmetric(&self) -> bool {
        self.validate().is_ok()
    }

    /// Adds `by` to the unordered pair (i, j). No-op on the diagonal.
    pub fn add_pair(&mut self, i: usize, j: usize, by: u64) {
        if i == j {
            return;
        }
        self.counts[i * self.n + j] += by;
        self.counts[j * self.n + i] += by;
    }

    /// Decrements the unordered pair (i, j), saturating at zero.
    pub fn sub_pair_saturating(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        let v = self.get(i, j).saturating_sub(1);
        self.counts[i * self.n + j] = v;
        self.counts[j * self.n + i] = v;
    }

    /// Sum over unordered pairs i < j.
    pub fn pair_total(&self) -> u64 {
        (0..self.n)
            .flat_map(|i| (i + 1..self.n).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .sum()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// Adds one to every unordered pair of distinct objects in `objects`.
    pub fn add_object_set(&mut self, objects: &BTreeSet<ObjectId>) {
        let objs: Vec<usize> = objects.iter().map(|o| o.index()).collect();
        for (a, &i) in objs.iter().enumerate() {
            for &j in &objs[a + 1..] {
                self.add_pair(i, j, 1);
            }
        }
    }

    pub fn merge(&mut self, other: &CooccurrenceMatrix) {
        assert_eq!(self.n, other.n, "merging matrices of different size");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// `N=<n> lexicon=<hash>` followed by N rows of space-separated counts.
    pub fn to_file_string(&self, lexicon_fingerprint: &str) -> String {
        let mut s = String::with_capacity(self.n * self.n * 3 + 64);
        writeln!(s, "N={} lexicon={}", self.n, lexicon_fingerprint).unwrap();
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(u64::to_string).collect();
            writeln!(s, "{}", row.join(" ")).unwrap();
        }
        s
    }

    /// Parses the matrix file format; returns the matrix and its lexicon hash.
    pub fn parse_file_string(text: &str) -> Result<(Self, String), CoocError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(CoocError::Format {
            line: 1,
            message: "missing header".into(),
        })?;
        let bad_header = || CoocError::Format {
            line: 1,
            message: format!("expected `N=<int> lexicon=<hash>`, found `{header}`"),
        };
        let mut parts = header.split_whitespace();
        let n: usize = parts
            .next()
            .and_then(|p| p.strip_prefix("N="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(bad_header)?;
        let fingerprint = parts
            .next()
            .and_then(|p| p.strip_prefix("lexicon="))
            .ok_or_else(bad_header)?
            .to_string();
        if parts.next().is_some() {
            return Err(bad_header());
        }
        let mut rows = Vec::with_capacity(n);
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|v| v.parse::<u64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CoocError::Format {
                    line: i + 2,
                    message: e.to_string(),
                })?;
            rows.push(row);
        }
        if rows.len() != n {
            return Err(CoocError::Format {
                line: rows.len() + 2,
                message: format!("expected {n} rows, found {}", rows.len()),
            });
        }
        Ok((Self::from_rows(&rows)?, fingerprint))
    }

    pub fn save(&self, path: impl AsRef<Path>, lexicon_fingerprint: &str) -> Result<(), CoocError> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string(lexicon_fingerprint)).map_err(|source| CoocError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, String), CoocError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| CoocError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_file_string(&text)
    }
}

/// Counts per-image presence of every unordered object pair.
pub fn build(
    dataset: &Dataset,
    source: CoocSource,
    split: Option<Split>,
    lex: &Lexicon,
) -> Result<CooccurrenceMatrix, CoocError> {
    let mut m = CooccurrenceMatrix::zeros(lex.len());
    let mut seen = 0usize;
    for im in dataset.images.iter().filter(|im| split.is_none_or(|s| im.split == s)) {
        seen += 1;
        let objects = source.objects(im, lex);
        if let Some(bad) = objects.iter().find(|o| o.index() >= lex.len()) {
            return Err(CoocError::OutOfRange {
                image_id: im.image_id,
                id: bad.index(),
                n: lex.len(),
            });
        }
        m.add_object_set(&objects);
    }
    if seen == 0 {
        return Err(CoocError::EmptySelection(
            split.map_or_else(|| "<all>".to_string(), |s| s.to_string()),
        ));
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRow {
    pub row_index: ObjectId,
    pub probs: Vec<f64>,
}

/// Row `i` divided by its sum. An all-zero row becomes uniform over k ≠ i.
pub fn normalize_row(m: &CooccurrenceMatrix, i: ObjectId) -> NormalizedRow {
    let row = m.row(i.index());
    let total: u64 = row.iter().sum();
    let probs = if total == 0 {
        let n = m.n();
        let p = if n > 1 { 1.0 / (n - 1) as f64 } else { 0.0 };
        (0..n).map(|k| if k == i.index() { 0.0 } else { p }).collect()
    } else {
        row.iter().map(|&c| c as f64 / total as f64).collect()
    };
    NormalizedRow { row_index: i, probs }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniformityStats {
    /// Coefficient of variation of the off-diagonal counts (i < j).
    pub cv: f64,
    /// Mean Shannon entropy of the normalized rows, in nats.
    pub row_entropy_mean: f64,
}

pub fn uniformity(m: &CooccurrenceMatrix) -> UniformityStats {
    let n = m.n();
    if n < 2 {
        return UniformityStats {
            cv: 0.0,
            row_entropy_mean: 0.0,
        };
    }
    let values: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| m.get(i, j) as f64)
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let cv = if mean == 0.0 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
        var.sqrt() / mean
    };
    let entropy_sum: f64 = (0..n)
        .map(|i| {
            normalize_row(m, ObjectId(i))
                .probs
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| -p * p.ln())
                .sum::<f64>()
        })
        .sum();
    UniformityStats {
        cv,
        row_entropy_mean: entropy_sum / n as f64,
    }
}

/// Unordered object pairs, stored with the smaller id first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairSet {
    pairs: BTreeSet<(ObjectId, ObjectId)>,
}

impl PairSet {
    pub fn insert(&mut self, a: ObjectId, b: ObjectId) -> bool {
        if a == b {
            return false;
        }
        self.pairs.insert((a.min(b), a.max(b)))
    }

    pub fn contains(&self, a: ObjectId, b: ObjectId) -> bool {
        self.pairs.contains(&(a.min(b), a.max(b)))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(ObjectId, ObjectId)> {
        self.pairs.iter()
    }

    /// True if some pair in the set is contained in `objects`.
    pub fn hits(&self, objects: &BTreeSet<ObjectId>) -> bool {
        let objs: Vec<ObjectId> = objects.iter().copied().collect();
        objs.iter()
            .enumerate()
            .any(|(a, &i)| objs[a + 1..].iter().any(|&j| self.contains(i, j)))
    }
}

impl FromIterator<(ObjectId, ObjectId)> for PairSet {
    fn from_iter<T: IntoIterator<Item = (ObjectId, ObjectId)>>(iter: T) -> Self {
        let mut set = PairSet::default();
        for (a, b) in iter {
            set.insert(a, b);
        }
        set
    }
}

/// All pairs i < j whose count is strictly below `threshold`.
pub fn low_freq_pairs(m: &CooccurrenceMatrix, threshold: u64) -> PairSet {
    let n = m.n();
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| m.get(i, j) < threshold)
        .map(|(i, j)| (ObjectId(i), ObjectId(j)))
        .collect()
}

/// Ids of images (in dataset order) whose ground truth contains a pair from `pairs`.
pub fn filter_images(dataset: &Dataset, pairs: &PairSet, split: Option<Split>) -> Vec<u64> {
    filter_images_with(dataset, pairs, split, |im| im.gt_objects.clone())
}

pub fn filter_images_with(
    dataset: &Dataset,
    pairs: &PairSet,
    split: Option<Split>,
    objects: impl Fn(&ImageRecord) -> BTreeSet<ObjectId>,
) -> Vec<u64> {
    dataset
        .images
        .iter()
        .filter(|im| split.is_none_or(|s| im.split == s))
        .filter(|im| pairs.hits(&objects(im)))
        .map(|im| im.image_id)
        .collect()
}

/// Fraction of `split` images selected by `pairs`.
pub fn selected_fraction(dataset: &Dataset, pairs: &PairSet, split: Split, source: CoocSource, lex: &Lexicon) -> f64 {
    let total = dataset.count(split);
    if total == 0 {
        return 0.0;
    }
    let hit = filter_images_with(dataset, pairs, Some(split), |im| source.objects(im, lex)).len();
    hit as f64 / total as f64
}
