//! MSCOCO caption/instance ingestion and the augmented-record file format.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::lexicon::{Lexicon, ObjectId};
use crate::sampler::SamplerKind;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: parse error at byte {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        message: String,
    },
    #[error("{path}: unknown split `{split}` for image {image_id}")]
    UnknownSplit {
        path: PathBuf,
        image_id: u64,
        split: String,
    },
    #[error("{path}: duplicate image id {image_id}")]
    DuplicateImage { path: PathBuf, image_id: u64 },
    #[error("{path}: train image {image_id} has no captions")]
    NoCaptions { path: PathBuf, image_id: u64 },
    #[error("{path}: category `{name}` (id {id}) is not in the lexicon")]
    UnknownCategory { path: PathBuf, id: u64, name: String },
    #[error("{path}: annotation references undefined category id {id}")]
    UndefinedCategory { path: PathBuf, id: u64 },
    #[error("{path}:{line}: malformed record: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

const STRIP: &[char] = &['.', ',', ';', ':', '!', '?', '"', '(', ')'];

/// Lowercases, drops `. , ; : ! ? " ( )` and splits on whitespace.
pub fn tokenize(raw: &str) -> Vec<String> {
    raw.to_lowercase()
        .replace(STRIP, " ")
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = String;

    /// `restval` is the Karpathy tag for the val2014 images moved into training.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" | "restval" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// A tokenized caption. Serialized as its tokens joined by single spaces.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Caption(pub Vec<String>);

impl Caption {
    pub fn from_raw(raw: &str) -> Self {
        Caption(tokenize(raw))
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Caption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

impl From<&str> for Caption {
    fn from(s: &str) -> Self {
        Caption::from_raw(s)
    }
}

impl Serialize for Caption {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.join(" "))
    }
}

impl<'de> Deserialize<'de> for Caption {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Caption(s.split_whitespace().map(str::to_string).collect()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub image_id: u64,
    pub split: Split,
    pub gt_objects: BTreeSet<ObjectId>,
    pub captions: Vec<Caption>,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub images: Vec<ImageRecord>,
    /// Set once ground truth resolved against a lexicon has been merged in.
    pub lexicon_fingerprint: Option<String>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ImageRecord> {
        self.images.iter().filter(move |im| im.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn get(&self, image_id: u64) -> Option<&ImageRecord> {
        self.images.iter().find(|im| im.image_id == image_id)
    }

    /// Map from image id to position in `images`.
    pub fn id_index(&self) -> BTreeMap<u64, usize> {
        self.images
            .iter()
            .enumerate()
            .map(|(i, im)| (im.image_id, i))
            .collect()
    }
}

fn parse_error(path: &Path, text: &str, err: &serde_json::Error) -> CorpusError {
    CorpusError::Parse {
        path: path.to_path_buf(),
        offset: byte_offset(text, err.line(), err.column()),
        message: err.to_string(),
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

#[derive(Deserialize)]
struct KarpathyFile {
    images: Vec<KarpathyImage>,
}

#[derive(Deserialize)]
struct KarpathyImage {
    cocoid: u64,
    split: String,
    #[serde(default)]
    sentences: Vec<KarpathySentence>,
}

#[derive(Deserialize)]
struct KarpathySentence {
    tokens: Option<Vec<String>>,
    raw: Option<String>,
}

/// Reads a Karpathy caption-split document (`dataset_coco.json` layout).
pub fn load_karpathy(path: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_karpathy(path, &text)
}

fn parse_karpathy(path: &Path, text: &str) -> Result<Dataset, CorpusError> {
    let file: KarpathyFile =
        serde_json::from_str(text).map_err(|e| parse_error(path, text, &e))?;
    let mut seen = HashSet::new();
    let mut images = Vec::with_capacity(file.images.len());
    for im in file.images {
        let split = im.split.parse().map_err(|_| CorpusError::UnknownSplit {
            path: path.to_path_buf(),
            image_id: im.cocoid,
            split: im.split.clone(),
        })?;
        if !seen.insert(im.cocoid) {
            return Err(CorpusError::DuplicateImage {
                path: path.to_path_buf(),
                image_id: im.cocoid,
            });
        }
        let captions: Vec<Caption> = im
            .sentences
            .iter()
            .map(|s| match (&s.tokens, &s.raw) {
                (Some(tokens), _) => Caption(tokenize(&tokens.join(" "))),
                (None, Some(raw)) => Caption::from_raw(raw),
                (None, None) => Caption::default(),
            })
            .filter(|c| !c.is_empty())
            .collect();
        if split == Split::Train && captions.is_empty() {
            return Err(CorpusError::NoCaptions {
                path: path.to_path_buf(),
                image_id: im.cocoid,
            });
        }
        images.push(ImageRecord {
            image_id: im.cocoid,
            split,
            gt_objects: BTreeSet::new(),
            captions,
        });
    }
    Ok(Dataset {
        images,
        lexicon_fingerprint: None,
    })
}

/// Per-image ground-truth object sets resolved against one lexicon.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub lexicon_fingerprint: String,
    pub objects: BTreeMap<u64, BTreeSet<ObjectId>>,
}

impl GroundTruth {
    pub fn extend(&mut self, other: GroundTruth) {
        for (id, objs) in other.objects {
            self.objects.entry(id).or_default().extend(objs);
        }
    }
}

#[derive(Deserialize)]
struct InstancesFile {
    #[serde(default)]
    images: Vec<InstanceImage>,
    annotations: Vec<InstanceAnnotation>,
    categories: Vec<InstanceCategory>,
}

#[derive(Deserialize)]
struct InstanceImage {
    id: u64,
}

#[derive(Deserialize)]
struct InstanceAnnotation {
    image_id: u64,
    category_id: u64,
}

#[derive(Deserialize)]
struct InstanceCategory {
    id: u64,
    name: String,
}

/// Reads an MSCOCO instances file into per-image object sets.
///
/// Images listed under `images` with no annotations get an empty set.
pub fn load_instances(path: impl AsRef<Path>, lex: &Lexicon) -> Result<GroundTruth, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file: InstancesFile =
        serde_json::from_str(&text).map_err(|e| parse_error(path, &text, &e))?;
    drop(text);

    let mut categories = BTreeMap::new();
    for cat in &file.categories {
        let id = lex.lookup(&cat.name).ok_or_else(|| CorpusError::UnknownCategory {
            path: path.to_path_buf(),
            id: cat.id,
            name: cat.name.clone(),
        })?;
        categories.insert(cat.id, id);
    }

    let mut objects: BTreeMap<u64, BTreeSet<ObjectId>> =
        file.images.iter().map(|im| (im.id, BTreeSet::new())).collect();
    for ann in &file.annotations {
        let obj = categories
            .get(&ann.category_id)
            .ok_or(CorpusError::UndefinedCategory {
                path: path.to_path_buf(),
                id: ann.category_id,
            })?;
        objects.entry(ann.image_id).or_default().insert(*obj);
    }
    Ok(GroundTruth {
        lexicon_fingerprint: lex.fingerprint().to_string(),
        objects,
    })
}

/// Attaches ground truth to a dataset; images absent from `gt` get empty sets.
pub fn merge(mut dataset: Dataset, gt: &GroundTruth) -> Dataset {
    for im in &mut dataset.images {
        im.gt_objects = gt.objects.get(&im.image_id).cloned().unwrap_or_default();
    }
    dataset.lexicon_fingerprint = Some(gt.lexicon_fingerprint.clone());
    dataset
}

/// One caption after simplification and object replacement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentedRecord {
    pub image_id: u64,
    pub caption_index: usize,
    pub original: Caption,
    pub simplified: Caption,
    pub augmented: Caption,
    pub anchor: Option<ObjectId>,
    pub replaced: Option<ObjectId>,
    pub sampled: Option<ObjectId>,
    pub labels_original: BTreeSet<ObjectId>,
    pub labels_augmented: BTreeSet<ObjectId>,
    pub used_augmented: bool,
    pub sampler: SamplerKind,
    pub seed: u64,
}

impl AugmentedRecord {
    /// Caption a training loop should consume for this record.
    pub fn effective_caption(&self) -> &Caption {
        if self.used_augmented {
            &self.augmented
        } else {
            &self.original
        }
    }

    pub fn effective_labels(&self) -> &BTreeSet<ObjectId> {
        if self.used_augmented {
            &self.labels_augmented
        } else {
            &self.labels_original
        }
    }
}

/// Line-delimited JSON writer for [`AugmentedRecord`]s.
///
/// Optional `#` comment lines may precede the records; readers skip them.
pub struct AugmentedWriter {
    path: PathBuf,
    out: BufWriter<File>,
    count: usize,
}

impl AugmentedWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(io_err(&path))?;
        Ok(Self {
            out: BufWriter::new(file),
            path,
            count: 0,
        })
    }

    pub fn comment(&mut self, text: &str) -> Result<(), CorpusError> {
        for line in text.lines() {
            writeln!(self.out, "# {line}").map_err(io_err(&self.path))?;
        }
        Ok(())
    }

    pub fn write(&mut self, rec: &AugmentedRecord) -> Result<(), CorpusError> {
        let line = serde_json::to_string(rec).expect("record serializes");
        writeln!(self.out, "{line}").map_err(|source| CorpusError::Io {
            path: self.path.clone(),
            source: std::io::Error::new(
                source.kind(),
                format!("writing record {}: {source}", self.count + 1),
            ),
        })?;
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<usize, CorpusError> {
        self.out.flush().map_err(io_err(&self.path))?;
        Ok(self.count)
    }
}

pub fn write_augmented<'a>(
    records: impl IntoIterator<Item = &'a AugmentedRecord>,
    path: impl AsRef<Path>,
) -> Result<usize, CorpusError> {
    let mut w = AugmentedWriter::create(path)?;
    for rec in records {
        w.write(rec)?;
    }
    w.finish()
}

/// Streams records back from a file written by [`AugmentedWriter`].
pub fn read_augmented(
    path: impl AsRef<Path>,
) -> Result<impl Iterator<Item = Result<AugmentedRecord, CorpusError>>, CorpusError> {
    let path = path.as_ref().to_path_buf();
    let file = File::open(&path).map_err(io_err(&path))?;
    let lines = BufReader::new(file).lines().enumerate();
    Ok(lines.filter_map(move |(i, line)| {
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                return Some(Err(CorpusError::Record {
                    path: path.clone(),
                    line: i + 1,
                    message: e.to_string(),
                }))
            }
        };
        if line.trim().is_empty() || line.starts_with('#') {
            return None;
        }
        Some(
            serde_json::from_str(&line).map_err(|e| CorpusError::Record {
                path: path.clone(),
                line: i + 1,
                message: e.to_string(),
            }),
        )
    }))
}

pub fn read_augmented_all(path: impl AsRef<Path>) -> Result<Vec<AugmentedRecord>, CorpusError> {
    read_augmented(path)?.collect()
}
