//! Gap-based pruning within each identity.
//!
//! Samples of one identity are sorted by ascending `p`. The highest-`p`
//! sample is always kept; scanning downward, a sample is kept only when its
//! `p` lies strictly more than the current threshold below the last kept
//! sample. If fewer than `n_min` survive, the threshold is lowered to
//! `(1 + t_dec) * t` with `t_dec` stepping by `-t_step` and the identity is
//! rescanned from scratch. Identities with `n_id <= n_min` pass through.
//!
//! At `t = 0` a tie-heavy identity can never reach the floor by decay, so the
//! retry budget is capped at `ceil(1 / t_step) + 1`; an identity still short of
//! the floor after the last allowed pass is kept whole. For `t > 0` the last
//! pass always has a negative threshold, which keeps everything anyway.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::manifest::{IdentityStats, Manifest, Method, PruneResult, SampleRecord};

pub const DEFAULT_N_MIN: usize = 5;
pub const DEFAULT_T_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffProbParams {
    /// Gap threshold.
    pub t: f64,
    /// Minimum samples kept per identity.
    pub n_min: usize,
    /// Fraction of the original `t` removed per retry.
    pub t_step: f64,
}

impl DiffProbParams {
    pub fn new(t: f64, n_min: usize, t_step: f64) -> Result<Self> {
        let params = DiffProbParams { t, n_min, t_step };
        params.validate()?;
        Ok(params)
    }

    /// `t` with the default floor (5) and decay step (0.01).
    pub fn with_threshold(t: f64) -> Result<Self> {
        Self::new(t, DEFAULT_N_MIN, DEFAULT_T_STEP)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(Error::InvalidParam(format!("t = {} must be >= 0", self.t)));
        }
        if self.n_min < 1 {
            return Err(Error::InvalidParam("n_min must be >= 1".into()));
        }
        if !(self.t_step > 0.0 && self.t_step <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "t_step = {} must be in (0, 1]",
                self.t_step
            )));
        }
        Ok(())
    }

    /// Upper bound on rescans for one identity.
    pub fn max_retries(&self) -> u32 {
        (1.0 / self.t_step).ceil() as u32 + 1
    }
}

/// Ascending `p`, ties by ascending `sample_id`.
pub fn sort_identity<'a>(samples: &[&'a SampleRecord]) -> Vec<&'a SampleRecord> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| compare_records(a, b));
    sorted
}

fn compare_records(a: &SampleRecord, b: &SampleRecord) -> Ordering {
    a.p.partial_cmp(&b.p)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.sample_id.cmp(&b.sample_id))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityOutcome<'a> {
    /// Kept samples in ascending `p` order.
    pub kept: Vec<&'a SampleRecord>,
    /// Threshold of the final scan; `t` for pass-through identities.
    pub effective_threshold: f64,
    pub retries: u32,
}

/// Prunes the samples of a single identity.
pub fn prune_identity<'a>(samples: &[&'a SampleRecord], params: &DiffProbParams) -> IdentityOutcome<'a> {
    debug_assert!(samples.windows(2).all(|w| w[0].identity == w[1].identity));
    let sorted = sort_identity(samples);
    let ps: Vec<f64> = sorted.iter().map(|r| r.p).collect();
    let scan = scan_with_decay(&ps, params);
    IdentityOutcome {
        kept: scan.positions.iter().map(|&i| sorted[i]).collect(),
        effective_threshold: scan.threshold,
        retries: scan.retries,
    }
}

struct Scan {
    positions: Vec<usize>,
    threshold: f64,
    retries: u32,
}

fn scan_with_decay(sorted_p: &[f64], params: &DiffProbParams) -> Scan {
    let n = sorted_p.len();
    let t = params.t;
    if n <= params.n_min {
        return Scan {
            positions: (0..n).collect(),
            threshold: t,
            retries: 0,
        };
    }
    let cap = params.max_retries();
    let mut t_dec = 0.0;
    let mut retries = 0;
    loop {
        let threshold = (1.0 + t_dec) * t;
        let positions = gap_scan(sorted_p, threshold);
        if positions.len() >= params.n_min {
            return Scan {
                positions,
                threshold,
                retries,
            };
        }
        // At t = 0 every rescan repeats this one, so jump to the end of the budget.
        if retries == cap || t == 0.0 {
            return Scan {
                positions: (0..n).collect(),
                threshold,
                retries: cap,
            };
        }
        t_dec -= params.t_step;
        retries += 1;
    }
}

/// One greedy pass over ascending `sorted_p`; returns kept positions ascending.
fn gap_scan(sorted_p: &[f64], threshold: f64) -> Vec<usize> {
    let n = sorted_p.len();
    let mut kept = vec![n - 1];
    let mut last = sorted_p[n - 1];
    for k in (0..n - 1).rev() {
        if last - sorted_p[k] > threshold {
            kept.push(k);
            last = sorted_p[k];
        }
    }
    kept.reverse();
    kept
}

/// Union of independent per-identity prunes.
pub fn prune_dataset(manifest: &Manifest, params: &DiffProbParams) -> Result<PruneResult> {
    params.validate()?;
    let records = manifest.records();
    let groups: Vec<(u32, Vec<usize>)> = manifest.by_identity().into_iter().collect();
    let outcomes: Vec<(u32, IdentityStats, Vec<&str>)> = groups
        .par_iter()
        .map(|(identity, members)| {
            let samples: Vec<&SampleRecord> = members.iter().map(|&i| &records[i]).collect();
            let outcome = prune_identity(&samples, params);
            let stats = IdentityStats {
                n_id: samples.len(),
                kept: outcome.kept.len(),
                effective_threshold: Some(outcome.effective_threshold),
                retries: outcome.retries,
            };
            let ids = outcome.kept.iter().map(|r| r.sample_id.as_str()).collect();
            (*identity, stats, ids)
        })
        .collect();

    let mut kept_ids = BTreeSet::new();
    let mut per_identity = std::collections::BTreeMap::new();
    for (identity, stats, ids) in outcomes {
        kept_ids.extend(ids.into_iter().map(str::to_string));
        per_identity.insert(identity, stats);
    }
    Ok(PruneResult {
        method: Method::DiffProb,
        requested_param: params.t,
        kept_ids,
        per_identity,
    })
}

/// Per-identity probabilities sorted once, for repeated kept-count queries
/// at different thresholds.
#[derive(Debug, Clone)]
pub struct SortedIdentities {
    groups: Vec<Vec<f64>>,
    total: usize,
}

impl SortedIdentities {
    pub fn new(manifest: &Manifest) -> Self {
        let records = manifest.records();
        let groups = manifest
            .by_identity()
            .into_values()
            .map(|members| {
                let samples: Vec<&SampleRecord> = members.iter().map(|&i| &records[i]).collect();
                sort_identity(&samples).iter().map(|r| r.p).collect()
            })
            .collect();
        SortedIdentities {
            groups,
            total: manifest.len(),
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn kept_count(&self, params: &DiffProbParams) -> usize {
        self.groups
            .par_iter()
            .map(|ps| scan_with_decay(ps, params).positions.len())
            .sum()
    }
}
