mod common;

use std::collections::BTreeSet;

use caption_debias::cooccurrence::{
    build, filter_images, low_freq_pairs, normalize_row, uniformity, CoocSource,
    CooccurrenceMatrix,
};
use caption_debias::corpus::Split;
use caption_debias::lexicon::ObjectId;
use proptest::prelude::*;

use common::{
    brute_force_matrix, dataset_from_sets, filter_oracle, letter_lexicon, low_freq_oracle,
    object_sets,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn build_matches_nested_loops(sets in object_sets(8, 30)) {
        prop_assume!(!sets.is_empty());
        let lex = letter_lexicon(8);
        let ds = dataset_from_sets(&sets, Split::Train);
        let m = build(&ds, CoocSource::Annotations, Some(Split::Train), &lex).unwrap();
        let oracle = brute_force_matrix(&sets, 8);
        for (i, row) in oracle.iter().enumerate() {
            prop_assert_eq!(m.row(i), row.as_slice());
        }
        prop_assert!(m.is_symmetric());
        // every image with k objects contributes k choose 2 pairs
        let mass: u64 = sets.iter().map(|s| (s.len() * s.len().saturating_sub(1) / 2) as u64).sum();
        prop_assert_eq!(m.pair_total(), mass);
    }

    #[test]
    fn normalized_rows_are_distributions(sets in object_sets(6, 12), i in 0usize..6) {
        let mut m = CooccurrenceMatrix::zeros(6);
        for s in &sets {
            m.add_object_set(s);
        }
        let row = normalize_row(&m, ObjectId(i));
        let total: f64 = row.probs.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert_eq!(row.probs[i], 0.0);
        prop_assert!(row.probs.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn low_freq_machinery_matches_oracle(
        n in 2usize..=10,
        sets in object_sets(10, 20),
        threshold in 0u64..6,
    ) {
        let sets: Vec<BTreeSet<ObjectId>> = sets
            .into_iter()
            .map(|s| s.into_iter().filter(|o| o.0 < n).collect())
            .collect();
        let rows = brute_force_matrix(&sets, n);
        let m = CooccurrenceMatrix::from_rows(&rows).unwrap();
        let pairs = low_freq_pairs(&m, threshold);
        let want = low_freq_oracle(&rows, threshold);
        let got: BTreeSet<(usize, usize)> = pairs.iter().map(|(a, b)| (a.0, b.0)).collect();
        prop_assert_eq!(&got, &want);
        let ds = dataset_from_sets(&sets, Split::Test);
        prop_assert_eq!(filter_images(&ds, &pairs, None), filter_oracle(&sets, &want));
    }

    #[test]
    fn file_format_round_trips(sets in object_sets(7, 15)) {
        let mut m = CooccurrenceMatrix::zeros(7);
        for s in &sets {
            m.add_object_set(s);
        }
        let text = m.to_file_string("abc123");
        let (back, fp) = CooccurrenceMatrix::parse_file_string(&text).unwrap();
        prop_assert_eq!(back, m);
        prop_assert_eq!(fp, "abc123");
    }
}

#[test]
fn uniform_matrix_has_zero_cv_and_max_entropy() {
    let n = 5;
    let rows: Vec<Vec<u64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0 } else { 4 }).collect())
        .collect();
    let stats = uniformity(&CooccurrenceMatrix::from_rows(&rows).unwrap());
    assert_eq!(stats.cv, 0.0);
    assert!((stats.row_entropy_mean - (4.0f64).ln()).abs() < 1e-12);
}

#[test]
fn captions_source_counts_mentions() {
    let lex = caption_debias::lexicon::Lexicon::coco();
    let dir = tempfile::tempdir().unwrap();
    let (kp, ip) = common::write_mini_coco(dir.path());
    let ds = caption_debias::corpus::load_karpathy(kp).unwrap();
    let gt = caption_debias::corpus::load_instances(ip, &lex).unwrap();
    let ds = caption_debias::corpus::merge(ds, &gt);
    let from_caps = build(&ds, CoocSource::Captions, Some(Split::Train), &lex).unwrap();
    let (cat, table, laptop) = (
        lex.lookup("cat").unwrap().0,
        lex.lookup("dining table").unwrap().0,
        lex.lookup("laptop").unwrap().0,
    );
    assert_eq!(from_caps.get(cat, table), 1);
    assert_eq!(from_caps.get(cat, laptop), 1);
    // image 3 is restval, folded into train; "plate" is not a class
    let (pizza, cup) = (lex.lookup("pizza").unwrap().0, lex.lookup("cup").unwrap().0);
    assert_eq!(from_caps.get(pizza, cup), 1);
    let from_ann = build(&ds, CoocSource::Annotations, Some(Split::Train), &lex).unwrap();
    assert_eq!(from_ann.get(pizza, table), 1);
    assert_eq!(from_ann.pair_total(), 3 + 3 + 3 + 1);
}
