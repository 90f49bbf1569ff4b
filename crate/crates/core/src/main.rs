use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use caption_debias::chair::GtMode;
use caption_debias::cli;
use caption_debias::config::{ConfigFile, Overrides, RunConfig};
use caption_debias::cooccurrence::CoocSource;
use caption_debias::corpus::Split;
use caption_debias::sampler::SamplerKind;

#[derive(Parser)]
#[command(name = "capdebias", version, about = "Caption simplification, object-replacement augmentation and CHAIR evaluation")]
struct Cli {
    /// `key = value` config file; flags take precedence over it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Lexicon file (defaults to the bundled MSCOCO lexicon)
    #[arg(long, global = true)]
    lexicon: Option<PathBuf>,
    /// Worker threads (the occ sampler always runs on one)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct DataArgs {
    /// Karpathy caption-split JSON
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// MSCOCO instances JSON (repeatable)
    #[arg(long)]
    instances: Vec<PathBuf>,
}

#[derive(Args, Default)]
struct ChunkArgs {
    /// Adjective list, one word per line
    #[arg(long)]
    adjectives: Option<PathBuf>,
    /// Determiner list, one word per line
    #[arg(long)]
    determiners: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the object co-occurrence matrix
    Cooc {
        #[command(flatten)]
        data: DataArgs,
        /// annotations | captions
        #[arg(long)]
        source: Option<CoocSource>,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simplify captions, one per line
    Simplify {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        chunk: ChunkArgs,
    },
    /// Produce the augmented training set
    Augment {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        chunk: ChunkArgs,
        #[arg(long)]
        cooc: Option<PathBuf>,
        /// uniform | inverse | occ
        #[arg(long)]
        sampler: Option<SamplerKind>,
        #[arg(long)]
        coin_p: Option<f64>,
        #[arg(long)]
        no_simplify: bool,
        /// Only exclude the replaced object from the candidates
        #[arg(long)]
        no_exclusion: bool,
        #[arg(long)]
        smoothing: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Uniformity trace of the working matrix (occ sampler)
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Score generated captions with CHAIRs / CHAIRi
    Chair {
        #[command(flatten)]
        data: DataArgs,
        /// Line-delimited `{image_id, caption}` records
        #[arg(long)]
        generated: Option<PathBuf>,
        /// annotations | annotations+captions
        #[arg(long)]
        gt_mode: Option<GtMode>,
        /// Add a section restricted to images with a pair below this count
        #[arg(long)]
        pairs_threshold: Option<u64>,
        #[arg(long)]
        cooc: Option<PathBuf>,
        #[arg(long)]
        per_image: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Matrix uniformity and low-frequency pair statistics
    Report {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        cooc: Option<PathBuf>,
        #[arg(long)]
        pairs_threshold: Option<u64>,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn flag(set: bool) -> Option<bool> {
    set.then_some(false)
}

fn run(args: Cli) -> Result<()> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let mut o = Overrides {
        lexicon: args.lexicon,
        threads: args.threads,
        ..Default::default()
    };
    let data = |o: &mut Overrides, d: DataArgs| {
        o.dataset = d.dataset;
        o.instances = d.instances;
    };
    let chunk = |o: &mut Overrides, c: ChunkArgs| {
        o.adjectives = c.adjectives;
        o.determiners = c.determiners;
    };
    match args.command {
        Command::Cooc { data: d, source, split, out } => {
            data(&mut o, d);
            o.source = source;
            o.split = split;
            o.out = out;
            let cfg = RunConfig::resolve(&file, o)?;
            let m = cli::cmd_cooc(&cfg)?;
            eprintln!("wrote {}x{} matrix, {} pair counts", m.n(), m.n(), m.pair_total());
        }
        Command::Simplify { input, out, chunk: c } => {
            chunk(&mut o, c);
            o.input = input;
            o.out = out;
            let cfg = RunConfig::resolve(&file, o)?;
            let n = cli::cmd_simplify(&cfg)?;
            eprintln!("simplified {n} captions");
        }
        Command::Augment {
            data: d,
            chunk: c,
            cooc,
            sampler,
            coin_p,
            no_simplify,
            no_exclusion,
            smoothing,
            seed,
            out,
            trace,
        } => {
            data(&mut o, d);
            chunk(&mut o, c);
            o.cooc = cooc;
            o.sampler = sampler;
            o.coin_p = coin_p;
            o.simplify = flag(no_simplify);
            o.exclusion = flag(no_exclusion);
            o.smoothing = smoothing;
            o.seed = seed;
            o.out = out;
            o.trace = trace;
            let cfg = RunConfig::resolve(&file, o)?;
            let s = cli::cmd_augment(&cfg)?;
            eprintln!(
                "{} records: {} replaced, {} kept by coin, {} without mentions, {} without candidates",
                s.records, s.replaced, s.coin_kept, s.no_mentions, s.no_candidates
            );
        }
        Command::Chair {
            data: d,
            generated,
            gt_mode,
            pairs_threshold,
            cooc,
            per_image,
            out,
        } => {
            data(&mut o, d);
            o.generated = generated;
            o.gt_mode = gt_mode;
            o.pairs_threshold = pairs_threshold;
            o.cooc = cooc;
            o.per_image = per_image;
            o.out = out;
            let cfg = RunConfig::resolve(&file, o)?;
            let r = cli::cmd_chair(&cfg)?;
            eprintln!("CHAIRs {:.4} CHAIRi {:.4} ({} sentences)", r.chairs(), r.chairi(), r.scores.n_sentences);
        }
        Command::Report {
            data: d,
            cooc,
            pairs_threshold,
            split,
            out,
        } => {
            data(&mut o, d);
            o.cooc = cooc;
            o.pairs_threshold = pairs_threshold;
            o.split = split;
            o.out = out;
            let cfg = RunConfig::resolve(&file, o)?;
            cli::cmd_report(&cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
