//! Replacement-object distributions.
//!
//! Given a sentence with an anchor object (kept) and a target object (to be
//! replaced), a sampler draws the replacement from the objects not already
//! in the sentence:
//!
//! * `Uniform`: every candidate equally likely.
//! * `InverseMultinomial`: candidate `k` weighted by the inverse of its
//!   co-occurrence with the anchor, so rarely co-occurring objects are
//!   preferred.
//! * `CooccurrenceUpdating`: inverse weights over a working copy of the
//!   matrix that is updated after each draw. The drawn pair (anchor, k) gains
//!   one count and the replaced pair (anchor, target) loses one, pushing the
//!   matrix towards uniform.
//!
//! Inverse weights are `1 / (M[anchor][k] + smoothing * u)`, renormalized
//! over the candidates, where `u` is the smallest positive count in the
//! anchor row (1 for an empty row). Dividing the row by its sum first, as the
//! normalized-row formulation does, would only rescale every weight by the
//! same factor, and measuring the pseudo-count in units of `u` keeps the
//! distribution unchanged when the whole row is scaled.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cooccurrence::CooccurrenceMatrix;
use crate::lexicon::ObjectId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SamplerError {
    #[error("no admissible replacement for target {target} (all {n} objects excluded)")]
    EmptyCandidates { target: ObjectId, n: usize },
    #[error("smoothing must be at least 1 for inverse samplers, got {0}")]
    Smoothing(u64),
    #[error("unknown sampler `{0}` (expected uniform, inverse or occ)")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SamplerKind {
    #[serde(rename = "uniform")]
    Uniform,
    #[serde(rename = "inverse")]
    InverseMultinomial,
    #[serde(rename = "occ")]
    CooccurrenceUpdating,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 3] = [
        SamplerKind::Uniform,
        SamplerKind::InverseMultinomial,
        SamplerKind::CooccurrenceUpdating,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Uniform => "uniform",
            SamplerKind::InverseMultinomial => "inverse",
            SamplerKind::CooccurrenceUpdating => "occ",
        }
    }

    pub fn is_stateful(self) -> bool {
        self == SamplerKind::CooccurrenceUpdating
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = SamplerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(SamplerKind::Uniform),
            "inverse" => Ok(SamplerKind::InverseMultinomial),
            "occ" => Ok(SamplerKind::CooccurrenceUpdating),
            other => Err(SamplerError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub anchor: ObjectId,
    pub target: ObjectId,
    /// Admissible replacements, ascending.
    pub candidates: Vec<ObjectId>,
}

/// Every object in `[0, n)` that does not already appear in the sentence.
pub fn candidate_set(
    sentence_objects: &BTreeSet<ObjectId>,
    anchor: ObjectId,
    target: ObjectId,
    n: usize,
) -> Result<CandidateSet, SamplerError> {
    let candidates: Vec<ObjectId> = (0..n)
        .map(ObjectId)
        .filter(|o| !sentence_objects.contains(o) && *o != anchor && *o != target)
        .collect();
    if candidates.is_empty() {
        return Err(SamplerError::EmptyCandidates { target, n });
    }
    Ok(CandidateSet {
        anchor,
        target,
        candidates,
    })
}

/// Ablation variant: only the target itself is excluded.
pub fn candidate_set_unrestricted(
    anchor: ObjectId,
    target: ObjectId,
    n: usize,
) -> Result<CandidateSet, SamplerError> {
    candidate_set(&BTreeSet::new(), target, target, n).map(|cs| CandidateSet { anchor, ..cs })
}

#[derive(Debug, Clone)]
pub struct SamplerState {
    kind: SamplerKind,
    matrix: CooccurrenceMatrix,
    smoothing: u64,
    rng_seed: u64,
}

impl SamplerState {
    pub fn new(
        kind: SamplerKind,
        matrix: CooccurrenceMatrix,
        smoothing: u64,
        rng_seed: u64,
    ) -> Result<Self, SamplerError> {
        if kind != SamplerKind::Uniform && smoothing == 0 {
            return Err(SamplerError::Smoothing(smoothing));
        }
        Ok(Self {
            kind,
            matrix,
            smoothing,
            rng_seed,
        })
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn smoothing(&self) -> u64 {
        self.smoothing
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Working matrix; differs from the initial one only for the updating kind.
    pub fn matrix(&self) -> &CooccurrenceMatrix {
        &self.matrix
    }

    pub fn weights(&self, cs: &CandidateSet) -> Vec<f64> {
        self.weights_as(self.kind, cs)
    }

    /// Probability of each entry of `cs.candidates` under `kind`.
    pub fn weights_as(&self, kind: SamplerKind, cs: &CandidateSet) -> Vec<f64> {
        let len = cs.candidates.len();
        match kind {
            SamplerKind::Uniform => vec![1.0 / len as f64; len],
            SamplerKind::InverseMultinomial | SamplerKind::CooccurrenceUpdating => {
                let row = self.matrix.row(cs.anchor.index());
                let unit = row.iter().copied().filter(|&c| c > 0).min().unwrap_or(1);
                let pseudo = (self.smoothing * unit) as f64;
                let raw: Vec<f64> = cs
                    .candidates
                    .iter()
                    .map(|k| 1.0 / (row[k.index()] as f64 + pseudo))
                    .collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|w| w / total).collect()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        &mut self,
        cs: &CandidateSet,
        rng: &mut R,
    ) -> Result<ObjectId, SamplerError> {
        self.sample_as(self.kind, cs, rng)
    }

    /// Draws with `kind`'s weights. The matrix update happens only when the
    /// state is the updating kind, `kind` is too, and anchor ≠ target.
    pub fn sample_as<R: Rng + ?Sized>(
        &mut self,
        kind: SamplerKind,
        cs: &CandidateSet,
        rng: &mut R,
    ) -> Result<ObjectId, SamplerError> {
        let picked = self.draw(kind, cs, rng)?;
        if self.kind.is_stateful() && kind.is_stateful() && cs.anchor != cs.target {
            let (i, j, k) = (cs.anchor.index(), cs.target.index(), picked.index());
            self.matrix.add_pair(i, k, 1);
            self.matrix.sub_pair_saturating(i, j);
        }
        Ok(picked)
    }

    /// Draws without touching the matrix, whatever the state's kind.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        kind: SamplerKind,
        cs: &CandidateSet,
        rng: &mut R,
    ) -> Result<ObjectId, SamplerError> {
        if cs.candidates.is_empty() {
            return Err(SamplerError::EmptyCandidates {
                target: cs.target,
                n: self.matrix.n(),
            });
        }
        Ok(match kind {
            SamplerKind::Uniform => cs.candidates[rng.gen_range(0..cs.candidates.len())],
            _ => {
                let w = self.weights_as(kind, cs);
                let dist = WeightedIndex::new(&w).expect("weights are finite and positive");
                cs.candidates[dist.sample(rng)]
            }
        })
    }
}
