//! Sentence simplification: collapse every object-headed noun phrase to its
//! determiner plus head noun ("a small black cat" becomes "a cat").
//!
//! There is no POS tagger. Noun phrases are anchored on lexicon mentions and
//! grown leftwards over modifier-looking tokens, stopping at a determiner,
//! a closed-class function word, another mention, or the sentence start.

use std::collections::HashSet;
use std::fs;
use std::ops::Range;
use std::path::Path;

use thiserror::Error;

use crate::corpus::Caption;
use crate::lexicon::{Lexicon, Mention};

pub const DEFAULT_ADJECTIVES: &str = include_str!("../data/adjectives.txt");
pub const DEFAULT_DETERMINERS: &str = include_str!("../data/determiners.txt");
pub const DEFAULT_ADJECTIVE_SUFFIXES: &[&str] = &["y", "ful", "ous", "ish", "ive", "al"];

/// Prepositions, conjunctions, auxiliaries, pronouns and the like. A noun
/// phrase never extends over one of these.
const FUNCTION_WORDS: &[&str] = &[
    "about", "above", "across", "after", "against", "along", "alongside", "amid", "among",
    "and", "are", "around", "as", "at", "atop", "be", "been", "before", "behind", "being",
    "below", "beneath", "beside", "besides", "between", "beyond", "but", "by", "can", "could",
    "does", "do", "down", "during", "for", "from", "has", "have", "he", "here", "him",
    "in", "inside", "into", "is", "it", "like", "near", "next", "nor", "of", "off", "on",
    "onto", "or", "out", "outside", "over", "past", "she", "so", "than", "then", "there",
    "they", "through", "to", "toward", "towards", "under", "underneath", "until", "up",
    "upon", "was", "we", "were", "what", "where", "which", "while", "who", "whom", "whose",
    "will", "with", "within", "without", "would", "you", "i", "me", "us", "them",
    "also", "just", "not", "whilst", "if", "because", "though", "although", "had",
    "having", "appears", "seems", "look", "looks",
];

#[derive(Debug, Error)]
pub enum ChunkerError {
    #[error("failed to read word list {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("`{0}` is listed both as a determiner and as an adjective")]
    Overlap(String),
}

#[derive(Debug, Clone)]
pub struct ChunkerConfig {
    determiners: HashSet<String>,
    adjectives: HashSet<String>,
    adjective_suffixes: Vec<String>,
}

impl Default for ChunkerConfig {
    fn default() -> Self {
        Self::new(
            word_list(DEFAULT_DETERMINERS),
            word_list(DEFAULT_ADJECTIVES),
            DEFAULT_ADJECTIVE_SUFFIXES.iter().map(|s| s.to_string()),
        )
        .expect("bundled word lists are disjoint")
    }
}

impl ChunkerConfig {
    pub fn new(
        determiners: impl IntoIterator<Item = String>,
        adjectives: impl IntoIterator<Item = String>,
        suffixes: impl IntoIterator<Item = String>,
    ) -> Result<Self, ChunkerError> {
        let determiners: HashSet<String> = determiners.into_iter().collect();
        let adjectives: HashSet<String> = adjectives.into_iter().collect();
        if let Some(w) = determiners.intersection(&adjectives).min() {
            return Err(ChunkerError::Overlap(w.clone()));
        }
        Ok(Self {
            determiners,
            adjectives,
            adjective_suffixes: suffixes.into_iter().collect(),
        })
    }

    /// Loads word lists from files, falling back to the bundled list for any
    /// path not given.
    pub fn load(
        adjectives: Option<&Path>,
        determiners: Option<&Path>,
    ) -> Result<Self, ChunkerError> {
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|source| ChunkerError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        let adj = match adjectives {
            Some(p) => word_list(&read(p)?),
            None => word_list(DEFAULT_ADJECTIVES),
        };
        let det = match determiners {
            Some(p) => word_list(&read(p)?),
            None => word_list(DEFAULT_DETERMINERS),
        };
        Self::new(
            det,
            adj,
            DEFAULT_ADJECTIVE_SUFFIXES.iter().map(|s| s.to_string()),
        )
    }

    /// Determiners, possessives and numerals, including digit strings.
    pub fn is_determiner(&self, tok: &str) -> bool {
        self.determiners.contains(tok) || (!tok.is_empty() && tok.bytes().all(|b| b.is_ascii_digit()))
    }

    pub fn is_adjective(&self, tok: &str) -> bool {
        if self.adjectives.contains(tok) {
            return true;
        }
        if FUNCTION_WORDS.contains(&tok) || self.is_determiner(tok) {
            return false;
        }
        self.adjective_suffixes
            .iter()
            .any(|s| tok.len() >= s.len() + 3 && tok.ends_with(s.as_str()))
    }
}

fn word_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// Function words after which a bare noun phrase can start ("of pepperoni pizza").
const PREPOSITIONS: &[&str] = &[
    "about", "above", "across", "against", "along", "alongside", "amid", "among", "around",
    "at", "atop", "behind", "below", "beneath", "beside", "between", "beyond", "by", "for",
    "from", "in", "inside", "into", "near", "of", "off", "on", "onto", "outside", "over",
    "through", "to", "toward", "towards", "under", "underneath", "upon", "with", "within",
    "without",
];

fn is_function_word(tok: &str) -> bool {
    FUNCTION_WORDS.contains(&tok)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NounPhrase {
    pub determiner: Option<usize>,
    /// Possibly empty; always ends at `head.start`.
    pub modifiers: Range<usize>,
    pub head: Mention,
}

impl NounPhrase {
    pub fn start(&self) -> usize {
        self.determiner.unwrap_or(self.modifiers.start)
    }
}

/// One noun phrase per lexicon mention, in mention order.
pub fn chunk_noun_phrases<S: AsRef<str>>(
    tokens: &[S],
    lex: &Lexicon,
    cfg: &ChunkerConfig,
) -> Vec<NounPhrase> {
    let mentions = lex.match_mentions(tokens);
    let mut out = Vec::with_capacity(mentions.len());
    let mut limit = 0;
    for m in mentions {
        out.push(chunk_one(tokens, m, limit, cfg));
        limit = m.end;
    }
    out
}

fn chunk_one<S: AsRef<str>>(
    tokens: &[S],
    head: Mention,
    limit: usize,
    cfg: &ChunkerConfig,
) -> NounPhrase {
    let tok = |i: usize| tokens[i].as_ref();
    // Leftmost index of the contiguous adjective run next to the head.
    let mut confirmed = head.start;
    let mut unknown_seen = false;
    let mut j = head.start;
    while j > limit {
        let t = tok(j - 1);
        if cfg.is_determiner(t) {
            return NounPhrase {
                determiner: Some(j - 1),
                modifiers: j..head.start,
                head,
            };
        }
        // "black and white": a coordinated adjective pair
        let coordinated = (t == "and" || t == "or")
            && j < head.start
            && j - 1 > limit
            && cfg.is_adjective(tok(j))
            && cfg.is_adjective(tok(j - 2));
        if coordinated || cfg.is_adjective(t) {
            j -= 1;
            if !unknown_seen {
                confirmed = j;
            }
            continue;
        }
        if is_function_word(t) {
            // a preposition opens a bare phrase; participles after it are verbs
            if PREPOSITIONS.contains(&t)
                && (j..head.start).all(|i| cfg.is_adjective(tok(i)) || !tok(i).ends_with("ing"))
            {
                confirmed = j;
            }
            break;
        }
        // Unknown word: only part of the phrase if a determiner or a
        // preposition turns up.
        unknown_seen = true;
        j -= 1;
    }
    NounPhrase {
        determiner: None,
        modifiers: confirmed..head.start,
        head,
    }
}

/// Picks `a` or `an` for the following word; other determiners pass through.
pub fn article_agree<'a>(determiner: &'a str, head_first: &str) -> &'a str {
    match determiner {
        "a" | "an" => {
            if head_first.starts_with(['a', 'e', 'i', 'o', 'u']) {
                "an"
            } else {
                "a"
            }
        }
        other => other,
    }
}

/// Drops the modifiers of every object-headed noun phrase and re-agrees
/// the article. Head tokens are kept as written.
pub fn simplify(caption: &Caption, lex: &Lexicon, cfg: &ChunkerConfig) -> Caption {
    let tokens = caption.tokens();
    let phrases = chunk_noun_phrases(tokens, lex, cfg);
    if phrases.is_empty() {
        return caption.clone();
    }
    let bigrams: HashSet<(&str, &str)> = lex.inner_bigrams().collect();
    let mut out = Vec::with_capacity(tokens.len());
    let mut pos = 0;
    for np in &phrases {
        let head_first = tokens[np.head.start].as_str();
        // Dropping modifiers must not glue the left neighbour onto the head
        // as a longer synonym ("hot" + "dog").
        let left = match np.determiner {
            Some(d) => Some(tokens[d].as_str()),
            None => np.modifiers.start.checked_sub(1).map(|i| tokens[i].as_str()),
        };
        let glues = !np.modifiers.is_empty()
            && left.is_some_and(|l| bigrams.contains(&(l, head_first)));
        out.extend_from_slice(&tokens[pos..np.start()]);
        if glues {
            out.extend_from_slice(&tokens[np.start()..np.head.end]);
        } else {
            if let Some(d) = np.determiner {
                out.push(article_agree(&tokens[d], head_first).to_string());
            }
            out.extend_from_slice(&tokens[np.head.start..np.head.end]);
        }
        pos = np.head.end;
    }
    out.extend_from_slice(&tokens[pos..]);
    Caption(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cap(s: &str) -> Caption {
        Caption::from_raw(s)
    }

    fn setup() -> (Lexicon, ChunkerConfig) {
        (Lexicon::coco(), ChunkerConfig::default())
    }

    #[test]
    fn bundled_lists_are_disjoint() {
        let cfg = ChunkerConfig::default();
        assert!(cfg.adjectives.len() > 1000);
        assert!(cfg.is_determiner("the") && cfg.is_determiner("12"));
        assert!(!cfg.is_adjective("the"));
    }

    #[test]
    fn overlap_rejected() {
        let err = ChunkerConfig::new(
            vec!["a".to_string(), "big".to_string()],
            vec!["big".to_string()],
            Vec::new(),
        )
        .unwrap_err();
        assert!(matches!(err, ChunkerError::Overlap(w) if w == "big"));
    }

    #[test]
    fn chunk_small_black_cat() {
        let (lex, cfg) = setup();
        let c = cap("a small black cat");
        let nps = chunk_noun_phrases(c.tokens(), &lex, &cfg);
        assert_eq!(nps.len(), 1);
        assert_eq!(nps[0].determiner, Some(0));
        assert_eq!(nps[0].modifiers, 1..3);
        assert_eq!(lex.class(nps[0].head.object).unwrap().name(), "cat");
    }

    #[test]
    fn chunk_bare_head() {
        let (lex, cfg) = setup();
        let nps = chunk_noun_phrases(&["cat"], &lex, &cfg);
        assert_eq!(nps[0].determiner, None);
        assert!(nps[0].modifiers.is_empty());
    }

    #[test]
    fn chunk_multiword_head() {
        let (lex, cfg) = setup();
        let c = cap("the shiny cell phone");
        let nps = chunk_noun_phrases(c.tokens(), &lex, &cfg);
        assert_eq!(nps[0].determiner, Some(0));
        assert_eq!(nps[0].modifiers, 1..2);
        assert_eq!((nps[0].head.start, nps[0].head.end), (2, 4));
        assert_eq!(lex.class(nps[0].head.object).unwrap().name(), "cell phone");
    }

    #[test]
    fn simplify_examples() {
        let (lex, cfg) = setup();
        let s = |x: &str| simplify(&cap(x), &lex, &cfg).to_string();
        assert_eq!(
            s("A small black cat is sitting on top of an old table."),
            "a cat is sitting on top of a table"
        );
        assert_eq!(s("hello world"), "hello world");
        assert_eq!(
            s("a cute little boy holding a shiny cell phone"),
            "a boy holding a cell phone"
        );
    }

    #[test]
    fn unknown_words_need_a_determiner() {
        let (lex, cfg) = setup();
        let s = |x: &str| simplify(&cap(x), &lex, &cfg).to_string();
        assert_eq!(s("people riding horses"), "people riding horses");
        assert_eq!(s("a sleeping dog"), "a dog");
        assert_eq!(s("a picture of a cat"), "a picture of a cat");
        assert_eq!(s("a brown and white dog"), "a dog");
    }

    #[test]
    fn no_glued_synonym() {
        let (lex, cfg) = setup();
        let c = cap("hot cute dog");
        // "hot" is unknown without a determiner, so only "cute" is a modifier;
        // removing it would turn the dog into a hot dog.
        assert_eq!(simplify(&c, &lex, &cfg), c);
    }

    #[test]
    fn article_agreement() {
        assert_eq!(article_agree("an", "table"), "a");
        assert_eq!(article_agree("an", "elephant"), "an");
        assert_eq!(article_agree("a", "elephant"), "an");
        assert_eq!(article_agree("the", "cat"), "the");
    }
}
