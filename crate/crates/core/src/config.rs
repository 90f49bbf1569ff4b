//! Run configuration: built-in defaults, overridden by a `key = value`
//! config file, overridden by command-line flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::chair::GtMode;
use crate::cooccurrence::CoocSource;
use crate::corpus::Split;
use crate::sampler::SamplerKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("config {path}:{line}: unknown key `{key}`")]
    UnknownKey { path: String, line: usize, key: String },
    #[error("invalid value `{value}` for `{key}`: {message}")]
    Value {
        key: String,
        value: String,
        message: String,
    },
    #[error("missing required setting `{0}`")]
    Missing(&'static str),
    #[error("{key}: path {path} does not exist")]
    NoSuchPath { key: &'static str, path: PathBuf },
}

pub const KEYS: &[&str] = &[
    "adjectives", "coin_p", "cooc", "dataset", "determiners", "exclusion", "generated",
    "gt_mode", "input", "instances", "lexicon", "out", "pairs_threshold", "per_image",
    "sampler", "seed", "simplify", "smoothing", "source", "split", "threads", "trace",
];

/// Parsed `key = value` file. `#` starts a comment line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    pub values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax {
                path: origin.to_string(),
                line: i + 1,
            })?;
            let key = k.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey {
                    path: origin.to_string(),
                    line: i + 1,
                    key,
                });
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse().map_err(|e: T::Err| ConfigError::Value {
                    key: key.to_string(),
                    value: v.clone(),
                    message: e.to_string(),
                })
            })
            .transpose()
    }
}

/// Settings given on the command line; `None` means "not given".
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dataset: Option<PathBuf>,
    pub instances: Vec<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub adjectives: Option<PathBuf>,
    pub determiners: Option<PathBuf>,
    pub cooc: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub generated: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub per_image: Option<PathBuf>,
    pub sampler: Option<SamplerKind>,
    pub coin_p: Option<f64>,
    pub simplify: Option<bool>,
    pub exclusion: Option<bool>,
    pub smoothing: Option<u64>,
    pub seed: Option<u64>,
    pub gt_mode: Option<GtMode>,
    pub pairs_threshold: Option<u64>,
    pub source: Option<CoocSource>,
    pub split: Option<Split>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub instances: Vec<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub adjectives: Option<PathBuf>,
    pub determiners: Option<PathBuf>,
    pub cooc: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub generated: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub per_image: Option<PathBuf>,
    pub sampler: SamplerKind,
    pub coin_p: f64,
    pub simplify: bool,
    pub exclusion: bool,
    pub smoothing: u64,
    pub seed: Option<u64>,
    pub gt_mode: GtMode,
    pub pairs_threshold: Option<u64>,
    pub source: CoocSource,
    pub split: Option<Split>,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            instances: Vec::new(),
            lexicon: None,
            adjectives: None,
            determiners: None,
            cooc: None,
            input: None,
            generated: None,
            out: None,
            trace: None,
            per_image: None,
            sampler: SamplerKind::CooccurrenceUpdating,
            coin_p: 0.5,
            simplify: true,
            exclusion: true,
            smoothing: 1,
            seed: None,
            gt_mode: GtMode::default(),
            pairs_threshold: None,
            source: CoocSource::default(),
            split: None,
            threads: 1,
        }
    }
}

fn parse_list(v: &str) -> Vec<PathBuf> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(PathBuf::from)
        .collect()
}

impl RunConfig {
    pub fn resolve(file: &ConfigFile, flags: Overrides) -> Result<Self, ConfigError> {
        let d = RunConfig::default();
        Ok(Self {
            dataset: flags.dataset.or(file.get("dataset")?),
            instances: if flags.instances.is_empty() {
                file.values.get("instances").map(|v| parse_list(v)).unwrap_or_default()
            } else {
                flags.instances
            },
            lexicon: flags.lexicon.or(file.get("lexicon")?),
            adjectives: flags.adjectives.or(file.get("adjectives")?),
            determiners: flags.determiners.or(file.get("determiners")?),
            cooc: flags.cooc.or(file.get("cooc")?),
            input: flags.input.or(file.get("input")?),
            generated: flags.generated.or(file.get("generated")?),
            out: flags.out.or(file.get("out")?),
            trace: flags.trace.or(file.get("trace")?),
            per_image: flags.per_image.or(file.get("per_image")?),
            sampler: flags.sampler.or(file.get("sampler")?).unwrap_or(d.sampler),
            coin_p: flags.coin_p.or(file.get("coin_p")?).unwrap_or(d.coin_p),
            simplify: flags.simplify.or(file.get("simplify")?).unwrap_or(d.simplify),
            exclusion: flags.exclusion.or(file.get("exclusion")?).unwrap_or(d.exclusion),
            smoothing: flags.smoothing.or(file.get("smoothing")?).unwrap_or(d.smoothing),
            seed: flags.seed.or(file.get("seed")?),
            gt_mode: flags.gt_mode.or(file.get("gt_mode")?).unwrap_or(d.gt_mode),
            pairs_threshold: flags.pairs_threshold.or(file.get("pairs_threshold")?),
            source: flags.source.or(file.get("source")?).unwrap_or(d.source),
            split: flags.split.or(file.get("split")?),
            threads: flags.threads.or(file.get("threads")?).unwrap_or(d.threads).max(1),
        })
    }

    pub fn require<'a>(&'a self, key: &'static str, v: &'a Option<PathBuf>) -> Result<&'a Path, ConfigError> {
        v.as_deref().ok_or(ConfigError::Missing(key))
    }

    pub fn require_seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or(ConfigError::Missing("seed"))
    }

    /// Checks that every input path that is set exists.
    pub fn check_inputs(&self) -> Result<(), ConfigError> {
        let singles: [(&'static str, &Option<PathBuf>); 7] = [
            ("dataset", &self.dataset),
            ("lexicon", &self.lexicon),
            ("adjectives", &self.adjectives),
            ("determiners", &self.determiners),
            ("cooc", &self.cooc),
            ("input", &self.input),
            ("generated", &self.generated),
        ];
        for (key, p) in singles {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(ConfigError::NoSuchPath { key, path: p.clone() });
                }
            }
        }
        for p in &self.instances {
            if !p.exists() {
                return Err(ConfigError::NoSuchPath {
                    key: "instances",
                    path: p.clone(),
                });
            }
        }
        Ok(())
    }

    /// Resolved settings as sorted `key = value` lines.
    pub fn echo(&self) -> String {
        let mut m: BTreeMap<&str, String> = BTreeMap::new();
        let p = |v: &Option<PathBuf>| v.as_ref().map(|p| p.display().to_string());
        for (k, v) in [
            ("dataset", p(&self.dataset)),
            ("lexicon", p(&self.lexicon)),
            ("adjectives", p(&self.adjectives)),
            ("determiners", p(&self.determiners)),
            ("cooc", p(&self.cooc)),
            ("input", p(&self.input)),
            ("generated", p(&self.generated)),
            ("out", p(&self.out)),
            ("trace", p(&self.trace)),
            ("per_image", p(&self.per_image)),
            ("seed", self.seed.map(|s| s.to_string())),
            ("pairs_threshold", self.pairs_threshold.map(|s| s.to_string())),
            ("split", self.split.map(|s| s.to_string())),
        ] {
            if let Some(v) = v {
                m.insert(k, v);
            }
        }
        if !self.instances.is_empty() {
            let list: Vec<String> = self.instances.iter().map(|p| p.display().to_string()).collect();
            m.insert("instances", list.join(","));
        }
        m.insert("sampler", self.sampler.to_string());
        m.insert("coin_p", self.coin_p.to_string());
        m.insert("simplify", self.simplify.to_string());
        m.insert("exclusion", self.exclusion.to_string());
        m.insert("smoothing", self.smoothing.to_string());
        m.insert("gt_mode", self.gt_mode.to_string());
        m.insert(
            "source",
            match self.source {
                CoocSource::Annotations => "annotations".into(),
                CoocSource::Captions => "captions".into(),
            },
        );
        m.insert("threads", self.threads.to_string());
        let mut s = String::new();
        for (k, v) in m {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }

    pub fn echo_map(&self) -> BTreeMap<String, String> {
        self.echo()
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }
}
