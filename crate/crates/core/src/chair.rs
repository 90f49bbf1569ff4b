//! CHAIR object-hallucination metrics.
//!
//! CHAIRs is the fraction of generated sentences with at least one
//! hallucinated object; CHAIRi is the fraction of (per-sentence,
//! deduplicated) object mentions that are hallucinated. An object is
//! hallucinated when it is not in the image's ground-truth set.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cooccurrence::{filter_images, PairSet};
use crate::corpus::{Caption, Dataset, ImageRecord};
use crate::lexicon::{Lexicon, ObjectId};

#[derive(Debug, Error)]
pub enum ChairError {
    #[error("generated caption refers to unknown image id {0}")]
    UnknownImage(u64),
    #[error("no generated caption falls on an image selected by the pair set")]
    EmptySelection,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record {
        path: String,
        line: usize,
        message: String,
    },
    #[error("unknown ground-truth mode `{0}` (expected annotations or annotations+captions)")]
    UnknownMode(String),
}

/// How the per-image ground-truth object set is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GtMode {
    #[serde(rename = "annotations")]
    Annotations,
    /// Annotations plus every object mentioned in a reference caption.
    #[default]
    #[serde(rename = "annotations+captions")]
    AnnotationsAndCaptions,
}

impl fmt::Display for GtMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GtMode::Annotations => "annotations",
            GtMode::AnnotationsAndCaptions => "annotations+captions",
        })
    }
}

impl FromStr for GtMode {
    type Err = ChairError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "annotations" => Ok(GtMode::Annotations),
            "annotations+captions" | "captions" => Ok(GtMode::AnnotationsAndCaptions),
            other => Err(ChairError::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedCaption {
    pub image_id: u64,
    pub tokens: Caption,
}

impl GeneratedCaption {
    pub fn new(image_id: u64, raw: &str) -> Self {
        Self {
            image_id,
            tokens: Caption::from_raw(raw),
        }
    }
}

#[derive(Deserialize)]
struct GeneratedLine {
    image_id: u64,
    caption: String,
}

/// Reads `{"image_id": .., "caption": ".."}` lines.
pub fn load_generated(path: impl AsRef<Path>) -> Result<Vec<GeneratedCaption>, ChairError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = File::open(path).map_err(|source| ChairError::Io {
        path: name.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| ChairError::Io {
            path: name.clone(),
            source,
        })?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let rec: GeneratedLine = serde_json::from_str(&line).map_err(|e| ChairError::Record {
            path: name.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(GeneratedCaption::new(rec.image_id, &rec.caption));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ImageCounts {
    pub mentions: u64,
    pub hallucinated: u64,
}

/// Scalar totals of one evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ChairScores {
    pub chairs: f64,
    pub chairi: f64,
    pub n_sentences: u64,
    pub n_hallucinated_sentences: u64,
    pub n_mentions: u64,
    pub n_hallucinated: u64,
}

impl ChairScores {
    fn from_counts(n_sentences: u64, n_hall_sent: u64, n_mentions: u64, n_hall: u64) -> Self {
        Self {
            chairs: if n_sentences == 0 {
                0.0
            } else {
                n_hall_sent as f64 / n_sentences as f64
            },
            chairi: n_hall as f64 / n_mentions.max(1) as f64,
            n_sentences,
            n_hallucinated_sentences: n_hall_sent,
            n_mentions,
            n_hallucinated: n_hall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowFreqBreakdown {
    pub n_pairs: usize,
    pub n_images: usize,
    #[serde(flatten)]
    pub scores: ChairScores,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChairReport {
    pub gt_mode: GtMode,
    #[serde(flatten)]
    pub scores: ChairScores,
    #[serde(skip)]
    pub per_image: BTreeMap<u64, ImageCounts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_pair_breakdown: Option<LowFreqBreakdown>,
}

impl ChairReport {
    pub fn chairs(&self) -> f64 {
        self.scores.chairs
    }

    pub fn chairi(&self) -> f64 {
        self.scores.chairi
    }

    /// Per-image table as `image_id\tmentions\thallucinated` lines.
    pub fn write_per_image(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "image_id\tmentions\thallucinated")?;
        for (id, c) in &self.per_image {
            writeln!(out, "{id}\t{}\t{}", c.mentions, c.hallucinated)?;
        }
        Ok(())
    }
}

pub fn gt_set(image: &ImageRecord, mode: GtMode, lex: &Lexicon) -> BTreeSet<ObjectId> {
    let mut gt = image.gt_objects.clone();
    if mode == GtMode::AnnotationsAndCaptions {
        for c in &image.captions {
            gt.extend(lex.match_mentions(c.tokens()).iter().map(|m| m.object));
        }
    }
    gt
}

/// Mentioned and hallucinated class counts for one sentence.
pub fn score_caption(tokens: &[String], gt: &BTreeSet<ObjectId>, lex: &Lexicon) -> ImageCounts {
    let mentioned: BTreeSet<ObjectId> = lex.match_mentions(tokens).iter().map(|m| m.object).collect();
    ImageCounts {
        mentions: mentioned.len() as u64,
        hallucinated: mentioned.difference(gt).count() as u64,
    }
}

pub fn evaluate(
    generated: &[GeneratedCaption],
    dataset: &Dataset,
    lex: &Lexicon,
    mode: GtMode,
) -> Result<ChairReport, ChairError> {
    let index = dataset.id_index();
    let mut gt_cache: HashMap<u64, BTreeSet<ObjectId>> = HashMap::new();
    let mut per_image: BTreeMap<u64, ImageCounts> = BTreeMap::new();
    let (mut n_sent, mut n_hall_sent, mut n_mentions, mut n_hall) = (0u64, 0u64, 0u64, 0u64);
    for g in generated {
        let &pos = index.get(&g.image_id).ok_or(ChairError::UnknownImage(g.image_id))?;
        let gt = gt_cache
            .entry(g.image_id)
            .or_insert_with(|| gt_set(&dataset.images[pos], mode, lex));
        let c = score_caption(g.tokens.tokens(), gt, lex);
        n_sent += 1;
        n_mentions += c.mentions;
        n_hall += c.hallucinated;
        if c.hallucinated > 0 {
            n_hall_sent += 1;
        }
        let e = per_image.entry(g.image_id).or_default();
        e.mentions += c.mentions;
        e.hallucinated += c.hallucinated;
    }
    Ok(ChairReport {
        gt_mode: mode,
        scores: ChairScores::from_counts(n_sent, n_hall_sent, n_mentions, n_hall),
        per_image,
        per_pair_breakdown: None,
    })
}

/// [`evaluate`] restricted to images whose ground truth holds a pair from `pairs`.
pub fn evaluate_low_freq(
    generated: &[GeneratedCaption],
    dataset: &Dataset,
    lex: &Lexicon,
    pairs: &PairSet,
    mode: GtMode,
) -> Result<ChairReport, ChairError> {
    let selected: HashSet<u64> = filter_images(dataset, pairs, None).into_iter().collect();
    let subset: Vec<GeneratedCaption> = generated
        .iter()
        .filter(|g| selected.contains(&g.image_id))
        .cloned()
        .collect();
    if subset.is_empty() {
        // still surface unknown ids before the selection error
        evaluate(generated, dataset, lex, mode)?;
        return Err(ChairError::EmptySelection);
    }
    evaluate(&subset, dataset, lex, mode)
}

/// Full evaluation plus the low-frequency section.
pub fn evaluate_with_breakdown(
    generated: &[GeneratedCaption],
    dataset: &Dataset,
    lex: &Lexicon,
    pairs: &PairSet,
    mode: GtMode,
) -> Result<ChairReport, ChairError> {
    let mut report = evaluate(generated, dataset, lex, mode)?;
    let low = evaluate_low_freq(generated, dataset, lex, pairs, mode)?;
    report.per_pair_breakdown = Some(LowFreqBreakdown {
        n_pairs: pairs.len(),
        n_images: low.per_image.len(),
        scores: low.scores,
    });
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;

    fn dataset(lex: &Lexicon) -> Dataset {
        let im = |id: u64, gt: &[&str], refs: &[&str]| ImageRecord {
            image_id: id,
            split: Split::Test,
            gt_objects: gt.iter().map(|g| lex.lookup(g).unwrap()).collect(),
            captions: refs.iter().map(|r| Caption::from_raw(r)).collect(),
        };
        Dataset {
            images: vec![
                im(1, &["cat", "dining table"], &["a cat on a table"]),
                im(2, &["person"], &["a man in a park"]),
                im(3, &["cat"], &["a cat next to a table"]),
                im(4, &[], &[]),
            ],
            lexicon_fingerprint: None,
        }
    }

    #[test]
    fn gt_modes() {
        let lex = Lexicon::coco();
        let ds = dataset(&lex);
        let cat = lex.lookup("cat").unwrap();
        let table = lex.lookup("table").unwrap();
        assert_eq!(gt_set(&ds.images[2], GtMode::AnnotationsAndCaptions, &lex), BTreeSet::from([cat, table]));
        assert_eq!(gt_set(&ds.images[2], GtMode::Annotations, &lex), BTreeSet::from([cat]));
        assert!(gt_set(&ds.images[3], GtMode::AnnotationsAndCaptions, &lex).is_empty());
    }

    #[test]
    fn correct_caption_scores_zero() {
        let lex = Lexicon::coco();
        let r = evaluate(&[GeneratedCaption::new(1, "a cat on a table")], &dataset(&lex), &lex, GtMode::Annotations).unwrap();
        assert_eq!((r.scores.n_mentions, r.scores.n_hallucinated), (2, 0));
        assert_eq!((r.chairs(), r.chairi()), (0.0, 0.0));
    }

    #[test]
    fn frisbee_hallucination() {
        let lex = Lexicon::coco();
        let r = evaluate(&[GeneratedCaption::new(2, "a man holding a frisbee")], &dataset(&lex), &lex, GtMode::Annotations).unwrap();
        assert_eq!(r.chairs(), 1.0);
        assert_eq!(r.chairi(), 0.5);
        assert_eq!(r.per_image[&2], ImageCounts { mentions: 2, hallucinated: 1 });
    }

    #[test]
    fn zero_mention_caption_counts_as_sentence() {
        let lex = Lexicon::coco();
        let gen = [
            GeneratedCaption::new(2, "a man holding a frisbee"),
            GeneratedCaption::new(4, "a sunny day"),
        ];
        let r = evaluate(&gen, &dataset(&lex), &lex, GtMode::Annotations).unwrap();
        assert_eq!(r.scores.n_sentences, 2);
        assert_eq!(r.chairs(), 0.5);
        assert_eq!(r.chairi(), 0.5);
    }

    #[test]
    fn unknown_image_is_an_error() {
        let lex = Lexicon::coco();
        let err = evaluate(&[GeneratedCaption::new(99, "a cat")], &dataset(&lex), &lex, GtMode::Annotations).unwrap_err();
        assert!(err.to_string().contains("99"));
    }

    #[test]
    fn low_freq_restriction() {
        let lex = Lexicon::coco();
        let ds = dataset(&lex);
        let gen = [
            GeneratedCaption::new(1, "a dog on a table"),
            GeneratedCaption::new(2, "a man holding a frisbee"),
            GeneratedCaption::new(3, "a cat"),
        ];
        let cat = lex.lookup("cat").unwrap();
        let table = lex.lookup("table").unwrap();
        let person = lex.lookup("person").unwrap();
        let none: PairSet = [(person, cat)].into_iter().collect();
        assert!(matches!(
            evaluate_low_freq(&gen, &ds, &lex, &none, GtMode::Annotations),
            Err(ChairError::EmptySelection)
        ));
        // only image 1 has both cat and table annotated
        let pairs: PairSet = [(cat, table)].into_iter().collect();
        let r = evaluate_low_freq(&gen, &ds, &lex, &pairs, GtMode::Annotations).unwrap();
        assert_eq!(r.scores.n_sentences, 1);
        assert_eq!((r.scores.n_mentions, r.scores.n_hallucinated), (2, 1));
        assert_eq!((r.chairs(), r.chairi()), (1.0, 0.5));
    }

    #[test]
    fn per_image_tsv() {
        let lex = Lexicon::coco();
        let r = evaluate(&[GeneratedCaption::new(2, "a man holding a frisbee")], &dataset(&lex), &lex, GtMode::Annotations).unwrap();
        let mut buf = Vec::new();
        r.write_per_image(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "image_id\tmentions\thallucinated\n2\t2\t1\n");
    }
}
