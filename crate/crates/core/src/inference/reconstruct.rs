//! Random-search reconstruction of the defect configuration.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::configurations::{sample_configuration, CandidateConfiguration, SearchPrior};
use super::fit::FitResult;
use super::score::{score_configuration, score_configuration_detailed, DeerDataset, ScoreOptions, ScoringData};
use crate::error::{Error, Result};
use crate::par::Parallelism;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructOptions {
    pub budget: u64,
    pub top_k: usize,
    pub chunk_size: u64,
    pub prior: SearchPrior,
    pub score: ScoreOptions,
    /// Checkpoint written after every chunk when set.
    pub checkpoint: Option<PathBuf>,
    pub resume: bool,
    /// Stop (leaving the checkpoint) once this many candidates are evaluated.
    pub stop_after: Option<u64>,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            budget: 1_000_000,
            top_k: 100,
            chunk_size: 4096,
            prior: SearchPrior::default(),
            score: ScoreOptions::default(),
            checkpoint: None,
            resume: false,
            stop_after: None,
        }
    }
}

/// Ranking key: lower score, then fewer defects, then lower index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankKey {
    pub score: f64,
    pub n_defects: usize,
    pub index: u64,
}

impl Eq for RankKey {}

impl Ord for RankKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then(self.n_defects.cmp(&other.n_defects))
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for RankKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config_hash: String,
    next_index: u64,
    top: Vec<RankKey>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub rank: usize,
    pub config: CandidateConfiguration,
    pub score: f64,
    pub n_resolved: usize,
    pub fit: FitResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub ranked: Vec<RankedCandidate>,
    pub evaluated: u64,
    pub complete: bool,
    pub config_hash: String,
}

/// Hash of everything that determines the ranking (not the budget).
pub fn search_hash(datasets: &[DeerDataset], options: &ReconstructOptions, seed: u64) -> Result<String> {
    let doc = serde_json::json!({
        "datasets": datasets,
        "prior": options.prior,
        "score": options.score,
        "top_k": options.top_k,
        "seed": seed,
    });
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&doc)?)))
}

fn write_checkpoint(path: &Path, cp: &Checkpoint) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(cp)?).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let cp: Checkpoint =
        serde_json::from_slice(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if cp.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint version {} (expected {CHECKPOINT_VERSION})",
            cp.version
        )));
    }
    Ok(cp)
}

fn push_bounded(heap: &mut BinaryHeap<RankKey>, key: RankKey, k: usize) {
    if heap.len() < k {
        heap.push(key);
    } else if let Some(worst) = heap.peek() {
        if key < *worst {
            heap.pop();
            heap.push(key);
        }
    }
}

/// Scores `budget` random candidates and returns the best `top_k`.
///
/// Candidate `i` is a pure function of `(seed, i)`, and the ranking key is a
/// total order, so the output does not depend on the worker count.
pub fn reconstruct(
    datasets: &[DeerDataset],
    options: &ReconstructOptions,
    parallelism: Parallelism,
    seed: u64,
) -> Result<Reconstruction> {
    if options.budget == 0 {
        return Err(Error::domain("budget must be >= 1"));
    }
    if options.top_k == 0 || options.chunk_size == 0 {
        return Err(Error::domain("top_k and chunk_size must be >= 1"));
    }
    options.prior.validate()?;
    let data = ScoringData::new(datasets, options.score)?;
    let hash = search_hash(datasets, options, seed)?;

    let mut heap = BinaryHeap::with_capacity(options.top_k + 1);
    let mut next = 0u64;
    if options.resume {
        let path = options
            .checkpoint
            .as_deref()
            .ok_or_else(|| Error::Checkpoint("resume requested without a checkpoint path".into()))?;
        if path.exists() {
            let cp = read_checkpoint(path)?;
            if cp.config_hash != hash {
                return Err(Error::Checkpoint(format!(
                    "checkpoint {} was written for a different search (hash {} vs {hash})",
                    path.display(),
                    cp.config_hash
                )));
            }
            next = cp.next_index.min(options.budget);
            for key in cp.top {
                push_bounded(&mut heap, key, options.top_k);
            }
        }
    }

    let stop = options.stop_after.unwrap_or(u64::MAX).min(options.budget);
    while next < stop {
        let end = (next + options.chunk_size).min(stop);
        let keys = parallelism.map_range(next..end, |i| {
            let config = sample_configuration(&options.prior, seed, i).expect("prior validated");
            let out = score_configuration(&config, &data);
            RankKey {
                score: out.score,
                n_defects: config.len(),
                index: i,
            }
        });
        for key in keys {
            push_bounded(&mut heap, key, options.top_k);
        }
        next = end;
        if let Some(path) = &options.checkpoint {
            let mut top: Vec<RankKey> = heap.iter().copied().collect();
            top.sort();
            write_checkpoint(
                path,
                &Checkpoint {
                    version: CHECKPOINT_VERSION,
                    config_hash: hash.clone(),
                    next_index: next,
                    top,
                },
            )?;
        }
    }

    let keys = heap.into_sorted_vec();
    let ranked = parallelism
        .map(&keys, |key| -> Result<RankedCandidate> {
            let mut config = sample_configuration(&options.prior, seed, key.index)?;
            let out = score_configuration_detailed(&config, &data);
            config.rho = out.rho.clone();
            Ok(RankedCandidate {
                rank: 0,
                config,
                score: out.score,
                n_resolved: out.n_resolved,
                fit: out.fit_result(),
            })
        })
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map(|c| RankedCandidate { rank: i + 1, ..c }))
        .collect::<Result<Vec<_>>>()?;
    Ok(Reconstruction {
        ranked,
        evaluated: next,
        complete: next >= options.budget,
        config_hash: hash,
    })
}

/// The two strongest defects of a candidate with fitted ρ at least `rho_min`,
/// as (coupling, ρ) sorted by descending |coupling|.
pub fn dominant_defects(config: &CandidateConfiguration, rho_min: f64, count: usize) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = config
        .couplings
        .iter()
        .zip(&config.rho)
        .filter(|(_, &r)| r >= rho_min)
        .map(|(&a, &r)| (a, r))
        .collect();
    v.sort_by(|x, y| y.0.abs().total_cmp(&x.0.abs()));
    v.truncate(count);
    v
}
