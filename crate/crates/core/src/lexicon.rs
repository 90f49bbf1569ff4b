//! Closed object vocabulary and longest-match mention lookup.
//!
//! A lexicon is a list of object classes, each with a canonical surface form
//! and a set of synonyms (single or multi-word). Caption tokens are resolved
//! to classes by a token-level trie, taking the leftmost-longest match at each
//! position.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Lexicon shipped with the crate: the 80 MSCOCO classes.
pub const DEFAULT_LEXICON: &str = include_str!("../data/coco_lexicon.txt");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("failed to read lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: empty class")]
    EmptyClass { line: usize },
    #[error("line {line}: empty synonym in class `{class}`")]
    EmptySynonym { line: usize, class: String },
    #[error("synonym `{synonym}` appears in both `{first}` and `{second}`")]
    DuplicateSynonym {
        synonym: String,
        first: String,
        second: String,
    },
    #[error("lexicon has no classes")]
    Empty,
    #[error("object id {id} out of range for lexicon of {n} classes")]
    OutOfRange { id: usize, n: usize },
}

/// Dense index of an object class, in `[0, N)`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ObjectId(pub usize);

impl ObjectId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectClass {
    pub id: ObjectId,
    pub canonical: Vec<String>,
    /// Every surface form of the class, canonical included, in file order.
    pub synonyms: Vec<Vec<String>>,
}

impl ObjectClass {
    pub fn name(&self) -> String {
        self.canonical.join(" ")
    }
}

/// A resolved object mention: tokens `[start, end)` of a caption.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mention {
    pub object: ObjectId,
    pub start: usize,
    pub end: usize,
}

impl Mention {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Default, Clone)]
struct TrieNode {
    children: HashMap<String, TrieNode>,
    terminal: Option<ObjectId>,
}

impl TrieNode {
    fn insert(&mut self, seq: &[String], id: ObjectId) -> Option<ObjectId> {
        let mut node = self;
        for tok in seq {
            node = node.children.entry(tok.clone()).or_default();
        }
        node.terminal.replace(id)
    }

    /// Longest synonym starting at `tokens[0]`, as (length, class).
    fn longest_prefix<S: AsRef<str>>(&self, tokens: &[S]) -> Option<(usize, ObjectId)> {
        let mut node = self;
        let mut best = None;
        for (i, tok) in tokens.iter().enumerate() {
            match node.children.get(tok.as_ref()) {
                Some(next) => {
                    node = next;
                    if let Some(id) = node.terminal {
                        best = Some((i + 1, id));
                    }
                }
                None => break,
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    classes: Vec<ObjectClass>,
    index: TrieNode,
    fingerprint: String,
}

impl Lexicon {
    /// Parses the `canonical: syn1, syn2, ...` text format.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut classes = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = lineno + 1;
            let (head, rest) = match line.split_once(':') {
                Some((h, r)) => (h, r),
                None => (line, ""),
            };
            let canonical = split_tokens(head);
            if canonical.is_empty() {
                return Err(LexiconError::EmptyClass { line: lineno });
            }
            let mut synonyms = vec![canonical.clone()];
            if !rest.trim().is_empty() {
                for field in rest.split(',') {
                    let seq = split_tokens(field);
                    if seq.is_empty() {
                        return Err(LexiconError::EmptySynonym {
                            line: lineno,
                            class: canonical.join(" "),
                        });
                    }
                    if !synonyms.contains(&seq) {
                        synonyms.push(seq);
                    }
                }
            }
            classes.push(ObjectClass {
                id: ObjectId(classes.len()),
                canonical,
                synonyms,
            });
        }
        Self::from_classes(classes)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// The bundled MSCOCO lexicon.
    pub fn coco() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }

    fn from_classes(classes: Vec<ObjectClass>) -> Result<Self, LexiconError> {
        if classes.is_empty() {
            return Err(LexiconError::Empty);
        }
        let mut index = TrieNode::default();
        let mut hasher = Sha256::new();
        for class in &classes {
            for syn in &class.synonyms {
                if let Some(prev) = index.insert(syn, class.id) {
                    if prev != class.id {
                        return Err(LexiconError::DuplicateSynonym {
                            synonym: syn.join(" "),
                            first: classes[prev.0].name(),
                            second: class.name(),
                        });
                    }
                }
            }
            hasher.update(class.name().as_bytes());
            hasher.update(b":");
            for syn in &class.synonyms {
                hasher.update(syn.join(" ").as_bytes());
                hasher.update(b",");
            }
            hasher.update(b"\n");
        }
        let fingerprint = hex::encode(hasher.finalize())[..16].to_string();
        Ok(Self {
            classes,
            index,
            fingerprint,
        })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ObjectClass] {
        &self.classes
    }

    /// Short content hash identifying this exact class/synonym table.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn class(&self, id: ObjectId) -> Result<&ObjectClass, LexiconError> {
        self.classes.get(id.0).ok_or(LexiconError::OutOfRange {
            id: id.0,
            n: self.classes.len(),
        })
    }

    pub fn canonical_name(&self, id: ObjectId) -> Result<&[String], LexiconError> {
        self.class(id).map(|c| c.canonical.as_slice())
    }

    /// Class whose synonym set contains exactly this phrase.
    pub fn lookup(&self, phrase: &str) -> Option<ObjectId> {
        let toks = split_tokens(phrase);
        match self.index.longest_prefix(&toks) {
            Some((len, id)) if len == toks.len() => Some(id),
            _ => None,
        }
    }

    /// Non-overlapping mentions, scanning left to right and taking the
    /// longest synonym that starts at each position.
    pub fn match_mentions<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<Mention> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            match self.index.longest_prefix(&tokens[i..]) {
                Some((len, object)) => {
                    out.push(Mention {
                        object,
                        start: i,
                        end: i + len,
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }

    /// Adjacent token pairs occurring inside some multi-word synonym.
    pub fn inner_bigrams(&self) -> impl Iterator<Item = (&str, &str)> {
        self.classes
            .iter()
            .flat_map(|c| c.synonyms.iter())
            .flat_map(|s| s.windows(2).map(|w| (w[0].as_str(), w[1].as_str())))
    }
}

fn split_tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(|t| t.to_lowercase()).collect()
}
