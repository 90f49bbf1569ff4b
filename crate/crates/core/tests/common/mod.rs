//! Test-only oracles and generators, written independently of the library
//! code paths they check.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};

use caption_debias::corpus::{Caption, Dataset, ImageRecord, Split};
use caption_debias::lexicon::{Lexicon, ObjectId};
use proptest::prelude::*;

pub const FIXTURE: &str = include_str!("../fixtures/simplify_hand_chunked.tsv");

/// (input, expected) pairs of the hand-chunked simplification fixture.
pub fn simplify_fixture() -> Vec<(String, String)> {
    FIXTURE
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let (a, b) = l.split_once('\t').expect("tab separated");
            (a.to_string(), b.to_string())
        })
        .collect()
}

/// Leftmost-longest mentions by enumerating every span against every synonym.
pub fn brute_force_mentions(tokens: &[String], lex: &Lexicon) -> Vec<(usize, usize, ObjectId)> {
    let mut spans = Vec::new();
    for s in 0..tokens.len() {
        for e in s + 1..=tokens.len() {
            for class in lex.classes() {
                if class.synonyms.iter().any(|syn| syn.as_slice() == &tokens[s..e]) {
                    spans.push((s, e, class.id));
                }
            }
        }
    }
    spans.sort_by(|a, b| a.0.cmp(&b.0).then((b.1 - b.0).cmp(&(a.1 - a.0))));
    let mut out = Vec::new();
    let mut cursor = 0;
    for (s, e, id) in spans {
        if s >= cursor {
            out.push((s, e, id));
            cursor = e;
        }
    }
    out
}

/// Nested-loop pair counting over images: result[i][j] for i != j.
pub fn brute_force_matrix(sets: &[BTreeSet<ObjectId>], n: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; n]; n];
    for set in sets {
        for i in 0..n {
            for j in 0..n {
                if i != j && set.contains(&ObjectId(i)) && set.contains(&ObjectId(j)) {
                    m[i][j] += 1;
                }
            }
        }
    }
    m
}

/// Lexicon with single-letter classes `c0 .. c{n-1}`.
pub fn letter_lexicon(n: usize) -> Lexicon {
    let text: String = (0..n).map(|i| format!("c{i}\n")).collect();
    Lexicon::parse(&text).unwrap()
}

pub fn dataset_from_sets(sets: &[BTreeSet<ObjectId>], split: Split) -> Dataset {
    Dataset {
        images: sets
            .iter()
            .enumerate()
            .map(|(i, s)| ImageRecord {
                image_id: i as u64 + 1,
                split,
                gt_objects: s.clone(),
                captions: vec![Caption::from_raw("x")],
            })
            .collect(),
        lexicon_fingerprint: None,
    }
}

pub fn object_sets(n: usize, max_images: usize) -> impl Strategy<Value = Vec<BTreeSet<ObjectId>>> {
    prop::collection::vec(
        prop::collection::btree_set((0..n).prop_map(ObjectId), 0..=n.min(6)),
        0..=max_images,
    )
}

/// Tokens that exercise the lexicon: synonym pieces plus noise.
pub fn vocabulary(lex: &Lexicon) -> Vec<String> {
    let mut v: BTreeSet<String> = lex
        .classes()
        .iter()
        .take(30)
        .flat_map(|c| c.synonyms.iter().take(3).flatten().cloned())
        .collect();
    for extra in [
        "hot", "dog", "traffic", "light", "teddy", "bear", "cell", "phone", "laptop", "computer",
        "stop", "sign", "a", "an", "the", "two", "small", "black", "old", "big", "and", "on",
        "of", "with", "is", "sitting", "riding", "pepperoni", "very", "shiny", "wooden", "park",
        "next", "to", "his", "white", "bus", "zebra", "hair", "drier", "fire", "hydrant",
    ] {
        v.insert(extra.to_string());
    }
    v.into_iter().collect()
}

pub fn token_seq(vocab: Vec<String>, max_len: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vocab), 0..=max_len)
}

pub fn class_sequence(tokens: &[String], lex: &Lexicon) -> Vec<ObjectId> {
    lex.match_mentions(tokens).iter().map(|m| m.object).collect()
}

pub fn count_by<T: Ord + Copy>(xs: impl IntoIterator<Item = T>) -> BTreeMap<T, usize> {
    let mut m = BTreeMap::new();
    for x in xs {
        *m.entry(x).or_insert(0) += 1;
    }
    m
}

/// Inverse-count weights by cross-multiplication: weight_k is the product of
/// every other candidate's smoothed count, so nothing is divided until the
/// final normalisation.
pub fn inverse_oracle(row: &[u64], candidates: &[usize], smoothing: u64) -> Vec<f64> {
    let unit = row.iter().copied().filter(|&c| c > 0).min().unwrap_or(1);
    let smoothed: Vec<u128> = candidates
        .iter()
        .map(|&k| (row[k] + smoothing * unit) as u128)
        .collect();
    let numer: Vec<u128> = (0..smoothed.len())
        .map(|k| {
            smoothed
                .iter()
                .enumerate()
                .filter(|&(l, _)| l != k)
                .map(|(_, &v)| v)
                .product()
        })
        .collect();
    let denom: u128 = numer.iter().sum();
    numer.iter().map(|&x| x as f64 / denom as f64).collect()
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Unordered pairs (i < j) with count below `threshold`, from the raw rows.
pub fn low_freq_oracle(rows: &[Vec<u64>], threshold: u64) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for i in 0..rows.len() {
        for j in 0..rows.len() {
            if i < j && rows[i][j] < threshold {
                out.insert((i, j));
            }
        }
    }
    out
}

/// Image ids holding both objects of at least one pair.
pub fn filter_oracle(sets: &[BTreeSet<ObjectId>], pairs: &BTreeSet<(usize, usize)>) -> Vec<u64> {
    let mut out = Vec::new();
    for (idx, set) in sets.iter().enumerate() {
        let ids: Vec<usize> = set.iter().map(|o| o.0).collect();
        let mut hit = false;
        for a in &ids {
            for b in &ids {
                if pairs.contains(&(*a, *b)) {
                    hit = true;
                }
            }
        }
        if hit {
            out.push(idx as u64 + 1);
        }
    }
    out
}

/// Writes a small Karpathy split and instances file; returns their paths.
pub fn write_mini_coco(dir: &std::path::Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let karpathy = serde_json::json!({
        "images": [
            {"cocoid": 1, "split": "train", "sentences": [
                {"raw": "A small black cat is sitting on top of an old table.", "tokens": ["a", "small", "black", "cat", "is", "sitting", "on", "top", "of", "an", "old", "table"]},
                {"raw": "A cat sitting on a wooden table next to a laptop."}
            ]},
            {"cocoid": 2, "split": "train", "sentences": [
                {"raw": "A man riding a horse next to a dog."},
                {"raw": "A young boy riding a brown horse."}
            ]},
            {"cocoid": 3, "split": "restval", "sentences": [
                {"raw": "A plate of pizza and a cup of coffee on a table."}
            ]},
            {"cocoid": 4, "split": "train", "sentences": [
                {"raw": "A red bus parked next to a car on a street."},
                {"raw": "There is nothing here."}
            ]},
            {"cocoid": 5, "split": "val", "sentences": [
                {"raw": "A dog catching a frisbee in a park."}
            ]},
            {"cocoid": 6, "split": "test", "sentences": [
                {"raw": "A man throwing a frisbee to a dog."}
            ]},
            {"cocoid": 7, "split": "test", "sentences": [
                {"raw": "A cat on a couch."}
            ]}
        ]
    });
    let instances = serde_json::json!({
        "images": [{"id": 1}, {"id": 2}, {"id": 3}, {"id": 4}, {"id": 5}, {"id": 6}, {"id": 7}],
        "categories": [
            {"id": 1, "name": "person"}, {"id": 3, "name": "car"}, {"id": 6, "name": "bus"},
            {"id": 17, "name": "cat"}, {"id": 18, "name": "dog"}, {"id": 19, "name": "horse"},
            {"id": 34, "name": "frisbee"}, {"id": 47, "name": "cup"}, {"id": 59, "name": "pizza"},
            {"id": 63, "name": "couch"}, {"id": 67, "name": "dining table"}, {"id": 73, "name": "laptop"}
        ],
        "annotations": [
            {"image_id": 1, "category_id": 17}, {"image_id": 1, "category_id": 67},
            {"image_id": 1, "category_id": 73},
            {"image_id": 2, "category_id": 1}, {"image_id": 2, "category_id": 19},
            {"image_id": 2, "category_id": 18}, {"image_id": 2, "category_id": 1},
            {"image_id": 3, "category_id": 59}, {"image_id": 3, "category_id": 47},
            {"image_id": 3, "category_id": 67},
            {"image_id": 4, "category_id": 6}, {"image_id": 4, "category_id": 3},
            {"image_id": 5, "category_id": 18}, {"image_id": 5, "category_id": 34},
            {"image_id": 6, "category_id": 1}, {"image_id": 6, "category_id": 34},
            {"image_id": 7, "category_id": 17}
        ]
    });
    let kp = dir.join("dataset_coco.json");
    let ip = dir.join("instances.json");
    std::fs::write(&kp, karpathy.to_string()).unwrap();
    std::fs::write(&ip, instances.to_string()).unwrap();
    (kp, ip)
}

/// Five images with four generated captions each. Hand counts, annotations
/// only: 41 mentions, 15 hallucinated, 10 of 20 sentences hallucinate.
/// Adding the reference captions to the ground truth clears "frisbee" on
/// image 1: 13 hallucinated, 9 sentences.
pub fn chair_mini_corpus(
    lex: &Lexicon,
) -> (Dataset, Vec<caption_debias::chair::GeneratedCaption>) {
    use caption_debias::chair::GeneratedCaption;
    let images: [(u64, &[&str], &str, [&str; 4]); 5] = [
        (1, &["person", "dog"], "a man with a dog and a frisbee", [
            "a man playing with a dog",
            "a dog catching a frisbee",
            "a dog and a dog on the grass",
            "a woman holding a cat and a frisbee",
        ]),
        (2, &["cat", "couch"], "a cat on a couch", [
            "a cat sleeping on a couch",
            "a cat on a bed next to a remote",
            "a kitten laying on the sofa",
            "a room with nothing in it",
        ]),
        (3, &["pizza", "dining table"], "a pizza on a table", [
            "a pizza on a table",
            "a slice of pizza next to a fork and a knife",
            "a hot dog on a plate",
            "two pizzas on a dining table",
        ]),
        (4, &["car", "bus", "traffic light"], "a bus and a car at a traffic light", [
            "a bus driving past a traffic light",
            "a car parked next to a fire hydrant",
            "a truck and a bus on the street",
            "cars and buses waiting at a stop sign",
        ]),
        (5, &["horse", "person"], "a man riding a horse", [
            "a man riding a horse",
            "a person riding a horse next to a dog and a cow",
            "a horse standing in a field",
            "a zebra and a giraffe",
        ]),
    ];
    let mut ds = Dataset::default();
    let mut generated = Vec::new();
    for (id, gt, reference, captions) in images {
        ds.images.push(ImageRecord {
            image_id: id,
            split: Split::Test,
            gt_objects: gt.iter().map(|g| lex.lookup(g).unwrap()).collect(),
            captions: vec![Caption::from_raw(reference)],
        });
        generated.extend(captions.iter().map(|c| GeneratedCaption::new(id, c)));
    }
    (ds, generated)
}

pub fn arb_caption() -> impl Strategy<Value = Caption> {
    prop::collection::vec("[a-z]{1,8}", 0..10).prop_map(Caption)
}

pub fn arb_ids() -> impl Strategy<Value = BTreeSet<ObjectId>> {
    prop::collection::btree_set((0usize..80).prop_map(ObjectId), 0..5)
}

pub fn arb_record() -> impl Strategy<Value = caption_debias::corpus::AugmentedRecord> {
    use caption_debias::sampler::SamplerKind;
    let opt_id = || prop::option::of((0usize..80).prop_map(ObjectId));
    (
        (any::<u64>(), 0usize..10, arb_caption(), arb_caption(), arb_caption()),
        (opt_id(), opt_id(), opt_id()),
        (arb_ids(), arb_ids(), any::<bool>(), prop::sample::select(SamplerKind::ALL.to_vec()), any::<u64>()),
    )
        .prop_map(
            |((image_id, caption_index, original, simplified, augmented),
              (anchor, replaced, sampled),
              (labels_original, labels_augmented, used_augmented, sampler, seed))| {
                caption_debias::corpus::AugmentedRecord {
                    image_id,
                    caption_index,
                    original,
                    simplified,
                    augmented,
                    anchor,
                    replaced,
                    sampled,
                    labels_original,
                    labels_augmented,
                    used_augmented,
                    sampler,
                    seed,
                }
            },
        )
}
