//! Caption augmentation: simplify, pick an anchor/target pair among the
//! mentioned objects, draw a replacement, rewrite caption and labels, and
//! flip a coin between the original and the augmented caption.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cooccurrence::{uniformity, UniformityStats};
use crate::corpus::{AugmentedRecord, Caption, CorpusError, Dataset, ImageRecord, Split};
use crate::lexicon::{Lexicon, Mention, ObjectId};
use crate::sampler::{
    candidate_set, candidate_set_unrestricted, CandidateSet, SamplerError, SamplerKind,
    SamplerState,
};
use crate::simplifier::{article_agree, simplify, ChunkerConfig};

/// Records between two uniformity trace points.
pub const TRACE_EVERY: usize = 1000;

const COIN_STREAM: u64 = 1;
const CHOICE_STREAM: u64 = 2;
const SAMPLE_STREAM: u64 = 3;
/// Words of keystream reserved per record in each stream.
const RECORD_WINDOW_BITS: u32 = 16;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("coin probability {0} is outside [0, 1]")]
    CoinProbability(f64),
    #[error("dataset has no training images")]
    EmptyTrain,
    #[error("caption does not mention object {0}")]
    TargetMissing(ObjectId),
    #[error("image {image_id} has no caption {index}")]
    CaptionIndex { image_id: u64, index: usize },
    #[error("thread pool: {0}")]
    Threads(String),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPolicy {
    pub sampler: SamplerKind,
    pub coin_p: f64,
    pub simplify_enabled: bool,
    /// Exclude every object already in the sentence from the candidates,
    /// not just the target.
    pub exclude_sentence_objects: bool,
    pub seed: u64,
}

impl AugmentPolicy {
    pub fn new(sampler: SamplerKind, seed: u64) -> Self {
        Self {
            sampler,
            coin_p: 0.5,
            simplify_enabled: true,
            exclude_sentence_objects: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(0.0..=1.0).contains(&self.coin_p) {
            return Err(AugmentError::CoinProbability(self.coin_p));
        }
        Ok(())
    }
}

/// Independent random streams for one record. Each consumer has its own
/// ChaCha stream and every record owns a fixed window of it, so a record's
/// draws do not depend on how many draws other records made.
pub struct RecordRngs {
    pub coin: ChaCha20Rng,
    pub choice: ChaCha20Rng,
    pub sample: ChaCha20Rng,
}

impl RecordRngs {
    pub fn new(seed: u64, ordinal: u64) -> Self {
        let stream = |id| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng.set_word_pos((ordinal as u128) << RECORD_WINDOW_BITS);
            rng
        };
        Self {
            coin: stream(COIN_STREAM),
            choice: stream(CHOICE_STREAM),
            sample: stream(SAMPLE_STREAM),
        }
    }
}

/// Picks two distinct mentioned classes uniformly at random as
/// (anchor, target). One class gives (c, c); none gives `None`.
pub fn select_anchor_target<R: Rng + ?Sized>(
    mentions: &[Mention],
    rng: &mut R,
) -> Option<(ObjectId, ObjectId)> {
    let classes: Vec<ObjectId> = mentions
        .iter()
        .map(|m| m.object)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    match classes.len() {
        0 => None,
        1 => Some((classes[0], classes[0])),
        n => {
            let a = rng.gen_range(0..n);
            let mut t = rng.gen_range(0..n - 1);
            if t >= a {
                t += 1;
            }
            Some((classes[a], classes[t]))
        }
    }
}

/// Rewrites every mention of `target` as the canonical form of
/// `replacement`, fixing a preceding `a`/`an`.
pub fn replace_object(
    caption: &Caption,
    target: ObjectId,
    replacement: ObjectId,
    lex: &Lexicon,
) -> Result<Caption, AugmentError> {
    let tokens = caption.tokens();
    let spans: Vec<Mention> = lex
        .match_mentions(tokens)
        .into_iter()
        .filter(|m| m.object == target)
        .collect();
    if spans.is_empty() {
        return Err(AugmentError::TargetMissing(target));
    }
    let canonical = lex
        .canonical_name(replacement)
        .expect("replacement drawn from the lexicon");
    let mut out: Vec<String> = Vec::with_capacity(tokens.len() + 2);
    let mut pos = 0;
    for m in spans {
        out.extend_from_slice(&tokens[pos..m.start]);
        if let Some(prev) = out.last_mut() {
            let agreed = article_agree(prev, &canonical[0]);
            if agreed != prev.as_str() {
                *prev = agreed.to_string();
            }
        }
        out.extend_from_slice(canonical);
        pos = m.end;
    }
    out.extend_from_slice(&tokens[pos..]);
    Ok(Caption(out))
}

/// Why a record came out with or without a replacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Replaced,
    CoinKept,
    NoMentions,
    NoCandidates,
}

/// Shared read-only context for augmenting captions.
pub struct Augmenter<'a> {
    pub lex: &'a Lexicon,
    pub chunker: &'a ChunkerConfig,
    pub policy: &'a AugmentPolicy,
    glue_tokens: HashSet<&'a str>,
}

impl<'a> Augmenter<'a> {
    pub fn new(lex: &'a Lexicon, chunker: &'a ChunkerConfig, policy: &'a AugmentPolicy) -> Self {
        let glue_tokens = lex
            .classes()
            .iter()
            .flat_map(|c| c.synonyms.iter())
            .filter(|s| s.len() > 1)
            .flat_map(|s| s.iter().map(String::as_str))
            .collect();
        Self {
            lex,
            chunker,
            policy,
            glue_tokens,
        }
    }

    /// Drops candidates whose canonical form would fuse with a neighbouring
    /// token into a different mention ("hot" + "dog").
    fn clean_candidates(&self, caption: &Caption, cs: &mut CandidateSet) {
        let tokens = caption.tokens();
        let risky = self
            .lex
            .match_mentions(tokens)
            .iter()
            .filter(|m| m.object == cs.target)
            .any(|m| {
                let left = m.start.checked_sub(1).map(|i| tokens[i].as_str());
                let right = tokens.get(m.end).map(String::as_str);
                left.into_iter()
                    .chain(right)
                    .any(|t| self.glue_tokens.contains(t))
            });
        if !risky {
            return;
        }
        let target = cs.target;
        cs.candidates.retain(|&k| {
            replace_object(caption, target, k, self.lex).is_ok_and(|aug| {
                let found: Vec<ObjectId> =
                    self.lex.match_mentions(aug.tokens()).iter().map(|m| m.object).collect();
                found.contains(&k) && !found.contains(&target)
            })
        });
    }

    /// Builds one record. `sample` decides how the replacement is drawn so
    /// the caller controls whether the sampler state is mutated.
    pub fn record_with(
        &self,
        image: &ImageRecord,
        caption_index: usize,
        rngs: &mut RecordRngs,
        mut sample: impl FnMut(SamplerKind, &CandidateSet, &mut ChaCha20Rng) -> Result<ObjectId, SamplerError>,
    ) -> Result<(AugmentedRecord, Outcome), AugmentError> {
        let original = image
            .captions
            .get(caption_index)
            .ok_or(AugmentError::CaptionIndex {
                image_id: image.image_id,
                index: caption_index,
            })?
            .clone();
        let simplified = if self.policy.simplify_enabled {
            simplify(&original, self.lex, self.chunker)
        } else {
            original.clone()
        };
        let used_augmented = rngs.coin.gen_bool(self.policy.coin_p);
        let mut rec = AugmentedRecord {
            image_id: image.image_id,
            caption_index,
            original,
            augmented: simplified.clone(),
            simplified,
            anchor: None,
            replaced: None,
            sampled: None,
            labels_original: image.gt_objects.clone(),
            labels_augmented: image.gt_objects.clone(),
            used_augmented,
            sampler: self.policy.sampler,
            seed: self.policy.seed,
        };
        if !used_augmented {
            return Ok((rec, Outcome::CoinKept));
        }

        let mentions = self.lex.match_mentions(rec.simplified.tokens());
        let Some((anchor, target)) = select_anchor_target(&mentions, &mut rngs.choice) else {
            return Ok((rec, Outcome::NoMentions));
        };
        let n = self.lex.len();
        let sentence: BTreeSet<ObjectId> = mentions.iter().map(|m| m.object).collect();
        let cs = if self.policy.exclude_sentence_objects {
            candidate_set(&sentence, anchor, target, n)
        } else {
            candidate_set_unrestricted(anchor, target, n)
        };
        let mut cs = match cs {
            Ok(cs) => cs,
            Err(SamplerError::EmptyCandidates { .. }) => return Ok((rec, Outcome::NoCandidates)),
            Err(e) => return Err(e.into()),
        };
        self.clean_candidates(&rec.simplified, &mut cs);
        if cs.candidates.is_empty() {
            return Ok((rec, Outcome::NoCandidates));
        }
        // single-object sentences have no anchor context: uniform weights
        let kind = if anchor == target {
            SamplerKind::Uniform
        } else {
            self.policy.sampler
        };
        let sampled = sample(kind, &cs, &mut rngs.sample)?;
        rec.augmented = replace_object(&rec.simplified, target, sampled, self.lex)?;
        rec.anchor = Some(anchor);
        rec.replaced = Some(target);
        rec.sampled = Some(sampled);
        rec.labels_augmented.remove(&target);
        rec.labels_augmented.insert(sampled);
        Ok((rec, Outcome::Replaced))
    }

    /// Augments one caption, updating `state` for the stateful sampler.
    pub fn augment_record(
        &self,
        image: &ImageRecord,
        caption_index: usize,
        state: &mut SamplerState,
        rngs: &mut RecordRngs,
    ) -> Result<(AugmentedRecord, Outcome), AugmentError> {
        self.record_with(image, caption_index, rngs, |kind, cs, rng| {
            state.sample_as(kind, cs, rng)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub step: usize,
    pub stats: UniformityStats,
}

impl TracePoint {
    /// `step cv row_entropy_mean`
    pub fn to_line(&self) -> String {
        format!(
            "{} {:.12} {:.12}",
            self.step, self.stats.cv, self.stats.row_entropy_mean
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugmentSummary {
    pub records: usize,
    pub replaced: usize,
    pub coin_kept: usize,
    pub no_mentions: usize,
    pub no_candidates: usize,
    /// Uniformity of the working matrix; only filled for the updating sampler.
    pub trace: Vec<TracePoint>,
}

impl AugmentSummary {
    fn count(&mut self, outcome: Outcome) {
        self.records += 1;
        match outcome {
            Outcome::Replaced => self.replaced += 1,
            Outcome::CoinKept => self.coin_kept += 1,
            Outcome::NoMentions => self.no_mentions += 1,
            Outcome::NoCandidates => self.no_candidates += 1,
        }
    }
}

const PARALLEL_CHUNK: usize = 4096;

/// Augments every caption of every training image, in ascending image-id
/// order, handing each record to `emit`.
///
/// The updating sampler runs sequentially on `state`; the other kinds use
/// up to `threads` workers and produce the same records as a single thread.
pub fn augment_dataset<E>(
    dataset: &Dataset,
    policy: &AugmentPolicy,
    state: &mut SamplerState,
    lex: &Lexicon,
    chunker: &ChunkerConfig,
    threads: usize,
    mut emit: E,
) -> Result<AugmentSummary, AugmentError>
where
    E: FnMut(&AugmentedRecord) -> Result<(), AugmentError>,
{
    policy.validate()?;
    let mut images: Vec<&ImageRecord> = dataset.split(Split::Train).collect();
    if images.is_empty() {
        return Err(AugmentError::EmptyTrain);
    }
    images.sort_by_key(|im| im.image_id);
    let work: Vec<(&ImageRecord, usize)> = images
        .iter()
        .flat_map(|im| (0..im.captions.len()).map(move |c| (*im, c)))
        .collect();

    let aug = Augmenter::new(lex, chunker, policy);
    let mut summary = AugmentSummary::default();
    let stateful = state.kind().is_stateful();
    if stateful {
        summary.trace.push(TracePoint {
            step: 0,
            stats: uniformity(state.matrix()),
        });
    }

    if stateful || threads <= 1 {
        for (ordinal, (im, c)) in work.iter().enumerate() {
            let mut rngs = RecordRngs::new(policy.seed, ordinal as u64);
            let (rec, outcome) = aug.augment_record(im, *c, state, &mut rngs)?;
            emit(&rec)?;
            summary.count(outcome);
            if stateful && summary.records % TRACE_EVERY == 0 {
                summary.trace.push(TracePoint {
                    step: summary.records,
                    stats: uniformity(state.matrix()),
                });
            }
        }
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| AugmentError::Threads(e.to_string()))?;
        let shared: &SamplerState = state;
        for (chunk_no, chunk) in work.chunks(PARALLEL_CHUNK).enumerate() {
            let base = chunk_no * PARALLEL_CHUNK;
            let results: Vec<Result<(AugmentedRecord, Outcome), AugmentError>> = pool.install(|| {
                chunk
                    .par_iter()
                    .enumerate()
                    .map(|(i, (im, c))| {
                        let mut rngs = RecordRngs::new(policy.seed, (base + i) as u64);
                        aug.record_with(im, *c, &mut rngs, |kind, cs, rng| shared.draw(kind, cs, rng))
                    })
                    .collect()
            });
            for r in results {
                let (rec, outcome) = r?;
                emit(&rec)?;
                summary.count(outcome);
            }
        }
    }

    if stateful && summary.records % TRACE_EVERY != 0 {
        summary.trace.push(TracePoint {
            step: summary.records,
            stats: uniformity(state.matrix()),
        });
    }
    Ok(summary)
}
