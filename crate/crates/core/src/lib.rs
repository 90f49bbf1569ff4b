//! Object-bias reduction for image-captioning datasets.
//!
//! The pipeline simplifies captions, swaps one mentioned object for another
//! drawn from a co-occurrence-aware distribution (rewriting the object labels
//! to match), and scores generated captions with the CHAIR hallucination
//! metrics, including a breakdown over rarely co-occurring object pairs.
//!
//! ```
//! use caption_debias::{simplify, Caption, ChunkerConfig, Lexicon};
//!
//! let lex = Lexicon::coco();
//! let cfg = ChunkerConfig::default();
//! let raw = Caption::from_raw("A small black cat is sitting on top of an old table.");
//! assert_eq!(simplify(&raw, &lex, &cfg).to_string(), "a cat is sitting on top of a table");
//! ```

pub mod augmenter;
pub mod chair;
pub mod cli;
pub mod config;
pub mod cooccurrence;
pub mod corpus;
pub mod lexicon;
pub mod sampler;
pub mod simplifier;

pub use augmenter::{augment_dataset, replace_object, select_anchor_target, AugmentPolicy, Augmenter, RecordRngs};
pub use chair::{evaluate, evaluate_low_freq, gt_set, ChairReport, GeneratedCaption, GtMode};
pub use cooccurrence::{build, filter_images, low_freq_pairs, normalize_row, uniformity, CoocSource, CooccurrenceMatrix, PairSet};
pub use corpus::{AugmentedRecord, Caption, Dataset, ImageRecord, Split};
pub use lexicon::{Lexicon, Mention, ObjectId};
pub use sampler::{candidate_set, CandidateSet, SamplerKind, SamplerState};
pub use simplifier::{article_agree, chunk_noun_phrases, simplify, ChunkerConfig};
