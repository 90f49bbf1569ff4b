//! Subcommand implementations behind the `capdebias` binary.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::augmenter::{augment_dataset, AugmentPolicy, AugmentSummary};
use crate::chair::{evaluate, evaluate_with_breakdown, load_generated, ChairReport};
use crate::config::RunConfig;
use crate::cooccurrence::{
    build, low_freq_pairs, selected_fraction, uniformity, CoocSource, CooccurrenceMatrix,
    UniformityStats,
};
use crate::corpus::{load_instances, load_karpathy, merge, AugmentedWriter, Caption, Dataset, GroundTruth, Split};
use crate::lexicon::Lexicon;
use crate::sampler::SamplerState;
use crate::simplifier::{simplify, ChunkerConfig};

pub fn load_lexicon(cfg: &RunConfig) -> Result<Lexicon> {
    match &cfg.lexicon {
        Some(p) => Ok(Lexicon::load(p)?),
        None => Ok(Lexicon::coco()),
    }
}

fn load_chunker(cfg: &RunConfig) -> Result<ChunkerConfig> {
    Ok(ChunkerConfig::load(cfg.adjectives.as_deref(), cfg.determiners.as_deref())?)
}

/// Karpathy split merged with every configured instances file.
pub fn load_dataset(cfg: &RunConfig, lex: &Lexicon) -> Result<Dataset> {
    let path = cfg.require("dataset", &cfg.dataset)?;
    let dataset = load_karpathy(path)?;
    let mut gt = GroundTruth {
        lexicon_fingerprint: lex.fingerprint().to_string(),
        ..Default::default()
    };
    for p in &cfg.instances {
        gt.extend(load_instances(p, lex)?);
    }
    Ok(merge(dataset, &gt))
}

/// Loads a matrix file and checks it was built with `lex`.
pub fn load_matrix(path: &Path, lex: &Lexicon) -> Result<CooccurrenceMatrix> {
    let (m, fp) = CooccurrenceMatrix::load(path)?;
    if fp != lex.fingerprint() {
        bail!(
            "{}: matrix was built with lexicon {fp}, current lexicon is {}",
            path.display(),
            lex.fingerprint()
        );
    }
    if m.n() != lex.len() {
        bail!("{}: matrix has N={}, lexicon has {} classes", path.display(), m.n(), lex.len());
    }
    Ok(m)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn cmd_cooc(cfg: &RunConfig) -> Result<CooccurrenceMatrix> {
    cfg.check_inputs()?;
    let out = cfg.require("out", &cfg.out)?;
    let lex = load_lexicon(cfg)?;
    let dataset = load_dataset(cfg, &lex)?;
    let m = build(&dataset, cfg.source, Some(cfg.split.unwrap_or(Split::Train)), &lex)?;
    m.save(out, lex.fingerprint())?;
    Ok(m)
}

/// One raw caption per input line, one simplified caption per output line.
pub fn cmd_simplify(cfg: &RunConfig) -> Result<usize> {
    cfg.check_inputs()?;
    let input = cfg.require("input", &cfg.input)?;
    let out = cfg.require("out", &cfg.out)?;
    let lex = load_lexicon(cfg)?;
    let chunker = load_chunker(cfg)?;
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let mut w = create(out)?;
    let mut n = 0;
    for line in text.lines() {
        let s = simplify(&Caption::from_raw(line), &lex, &chunker);
        writeln!(w, "{s}")?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

pub fn cmd_augment(cfg: &RunConfig) -> Result<AugmentSummary> {
    cfg.check_inputs()?;
    let seed = cfg.require_seed()?;
    let out = cfg.require("out", &cfg.out)?;
    let cooc = cfg.require("cooc", &cfg.cooc)?;
    let lex = load_lexicon(cfg)?;
    let chunker = load_chunker(cfg)?;
    let dataset = load_dataset(cfg, &lex)?;
    let matrix = load_matrix(cooc, &lex)?;

    let policy = AugmentPolicy {
        sampler: cfg.sampler,
        coin_p: cfg.coin_p,
        simplify_enabled: cfg.simplify,
        exclude_sentence_objects: cfg.exclusion,
        seed,
    };
    let mut state = SamplerState::new(cfg.sampler, matrix, cfg.smoothing, seed)?;
    let threads = if cfg.sampler.is_stateful() { 1 } else { cfg.threads };

    let header = format!("lexicon = {}\n{}", lex.fingerprint(), cfg.echo());
    let mut writer = AugmentedWriter::create(out)?;
    writer.comment(&header)?;
    let summary = augment_dataset(&dataset, &policy, &mut state, &lex, &chunker, threads, |r| {
        writer.write(r).map_err(Into::into)
    })?;
    writer.finish()?;

    if let Some(trace) = &cfg.trace {
        let mut w = create(trace)?;
        for line in header.lines() {
            writeln!(w, "# {line}")?;
        }
        for p in &summary.trace {
            writeln!(w, "{}", p.to_line())?;
        }
        w.flush()?;
    }
    Ok(summary)
}

#[derive(Serialize)]
struct ChairDocument<'a> {
    config: BTreeMap<String, String>,
    lexicon: &'a str,
    #[serde(flatten)]
    report: &'a ChairReport,
}

pub fn cmd_chair(cfg: &RunConfig) -> Result<ChairReport> {
    cfg.check_inputs()?;
    let generated_path = cfg.require("generated", &cfg.generated)?;
    let lex = load_lexicon(cfg)?;
    let dataset = load_dataset(cfg, &lex)?;
    let generated = load_generated(generated_path)?;
    let report = match cfg.pairs_threshold {
        Some(threshold) => {
            let cooc = cfg.require("cooc", &cfg.cooc)?;
            let m = load_matrix(cooc, &lex)?;
            let pairs = low_freq_pairs(&m, threshold);
            evaluate_with_breakdown(&generated, &dataset, &lex, &pairs, cfg.gt_mode)?
        }
        None => evaluate(&generated, &dataset, &lex, cfg.gt_mode)?,
    };
    let doc = ChairDocument {
        config: cfg.echo_map(),
        lexicon: lex.fingerprint(),
        report: &report,
    };
    write_json(cfg.out.as_deref(), &doc)?;
    if let Some(p) = &cfg.per_image {
        let mut w = create(p)?;
        report.write_per_image(&mut w)?;
        w.flush()?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SplitSelection {
    pub split: Split,
    pub images: usize,
    /// Fraction of `split` images holding a low-frequency pair, per object source.
    pub by_source: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MatrixReport {
    pub n: usize,
    pub pair_total: u64,
    pub max_count: u64,
    pub uniformity: UniformityStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs_threshold: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub low_freq_pairs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<SplitSelection>,
}

/// Matrix statistics and, with a dataset, the share of a split's images
/// that contain a low-frequency pair.
pub fn cmd_report(cfg: &RunConfig) -> Result<MatrixReport> {
    cfg.check_inputs()?;
    let cooc = cfg.require("cooc", &cfg.cooc)?;
    let lex = load_lexicon(cfg)?;
    let m = load_matrix(cooc, &lex)?;
    let pairs = cfg.pairs_threshold.map(|t| low_freq_pairs(&m, t));
    let selection = match (&pairs, &cfg.dataset) {
        (Some(pairs), Some(_)) => {
            let dataset = load_dataset(cfg, &lex)?;
            let split = cfg.split.unwrap_or(Split::Test);
            let by_source = [("annotations", CoocSource::Annotations), ("captions", CoocSource::Captions)]
                .into_iter()
                .map(|(name, src)| (name.to_string(), selected_fraction(&dataset, pairs, split, src, &lex)))
                .collect();
            Some(SplitSelection {
                split,
                images: dataset.count(split),
                by_source,
            })
        }
        _ => None,
    };
    let report = MatrixReport {
        n: m.n(),
        pair_total: m.pair_total(),
        max_count: m.max_count(),
        uniformity: uniformity(&m),
        pairs_threshold: cfg.pairs_threshold,
        low_freq_pairs: pairs.as_ref().map(|p| p.len()),
        selection,
    };
    #[derive(Serialize)]
    struct Doc<'a> {
        config: BTreeMap<String, String>,
        #[serde(flatten)]
        report: &'a MatrixReport,
    }
    write_json(
        cfg.out.as_deref(),
        &Doc {
            config: cfg.echo_map(),
            report: &report,
        },
    )?;
    Ok(report)
}

fn write_json<T: Serialize>(out: Option<&Path>, doc: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(doc)?;
    match out {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}
