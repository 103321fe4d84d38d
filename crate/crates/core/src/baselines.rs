//! Comparison methods: uniform random pruning and dynamic-uncertainty pruning.
//!
//! Both keep `max(floor(keep_fraction * N), sum_id min(n_id, n_min))` samples.
//! Each identity first reserves `min(n_id, n_min)` samples; the rest of the
//! budget is filled from the unreserved pool across the whole dataset.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::manifest::{IdentityStats, Manifest, Method, PruneResult};
use crate::rng::DetRng;

pub const DEFAULT_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynUncParams {
    /// Sliding-window length in epochs.
    pub window: usize,
    pub keep_fraction: f64,
    pub n_min: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandParams {
    pub keep_fraction: f64,
    pub n_min: usize,
    pub seed: u64,
}

fn check_fraction(keep_fraction: f64, n_min: usize) -> Result<()> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "keep_fraction = {keep_fraction} must be in (0, 1]"
        )));
    }
    if n_min < 1 {
        return Err(Error::InvalidParam("n_min must be >= 1".into()));
    }
    Ok(())
}

/// Total kept count for a fraction-based method. The product is nudged by
/// 1e-9 before flooring so that e.g. `0.29 * 100` counts as 29.
fn budget(manifest: &Manifest, keep_fraction: f64, n_min: usize) -> Result<usize> {
    let floor = manifest.floor_count(n_min);
    let n = manifest.len();
    if n > 0 && keep_fraction + 1e-12 < floor as f64 / n as f64 {
        return Err(Error::Infeasible(format!(
            "keep_fraction {keep_fraction} is below the achievable floor {}/{} with n_min = {n_min}",
            floor, n
        )));
    }
    let requested = ((keep_fraction * n as f64) + 1e-9).floor() as usize;
    Ok(requested.min(n).max(floor))
}

/// Mean over all length-`window` windows of the population standard
/// deviation inside the window.
pub fn dynunc_score(history: &[f64], window: usize) -> Result<f64> {
    if window == 0 {
        return Err(Error::InvalidParam("window must be >= 1".into()));
    }
    if history.len() < window {
        return Err(Error::InvalidParam(format!(
            "history of {} epochs is shorter than window {window}",
            history.len()
        )));
    }
    let stds: Vec<f64> = history.windows(window).map(population_std).collect();
    Ok(stds.iter().sum::<f64>() / stds.len() as f64)
}

fn population_std(values: &[f64]) -> f64 {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if lo == hi {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Keeps the samples with the highest uncertainty scores.
pub fn dynunc_prune(manifest: &Manifest, params: &DynUncParams) -> Result<PruneResult> {
    check_fraction(params.keep_fraction, params.n_min)?;
    if params.window < 2 {
        return Err(Error::InvalidParam("window must be >= 2".into()));
    }
    if !manifest.is_empty() && !manifest.has_histories() {
        return Err(Error::InvalidManifest("dynunc needs epoch_probs histories".into()));
    }
    if !manifest.is_empty() && manifest.epoch_count() < params.window {
        return Err(Error::InvalidParam(format!(
            "window {} exceeds epoch count {}",
            params.window,
            manifest.epoch_count()
        )));
    }
    let target = budget(manifest, params.keep_fraction, params.n_min)?;
    let records = manifest.records();
    let scores: Vec<f64> = records
        .par_iter()
        .map(|r| dynunc_score(r.epoch_probs.as_deref().unwrap_or(&[]), params.window))
        .collect::<Result<_>>()?;

    // descending score, ties by ascending sample_id
    let rank = |a: &usize, b: &usize| {
        scores[*b]
            .partial_cmp(&scores[*a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| records[*a].sample_id.cmp(&records[*b].sample_id))
    };
    select_with_reservation(
        manifest,
        params.n_min,
        target,
        |members| {
            members.sort_by(rank);
        },
        |pool| {
            pool.sort_by(rank);
        },
    )
    .map(|(kept_ids, per_identity)| PruneResult {
        method: Method::DynUnc,
        requested_param: params.keep_fraction,
        kept_ids,
        per_identity,
    })
}

/// Uniform random pruning driven by [`DetRng`]. Identities are visited in
/// ascending order, each shuffled from manifest order to pick its reserved
/// samples; the unreserved pool (manifest order) is then shuffled once and
/// its prefix fills the remaining budget.
pub fn random_prune(manifest: &Manifest, params: &RandParams) -> Result<PruneResult> {
    check_fraction(params.keep_fraction, params.n_min)?;
    let target = budget(manifest, params.keep_fraction, params.n_min)?;
    let rng = std::cell::RefCell::new(DetRng::new(params.seed));
    select_with_reservation(
        manifest,
        params.n_min,
        target,
        |members| rng.borrow_mut().shuffle(members),
        |pool| rng.borrow_mut().shuffle(pool),
    )
    .map(|(kept_ids, per_identity)| PruneResult {
        method: Method::Random,
        requested_param: params.keep_fraction,
        kept_ids,
        per_identity,
    })
}

/// Reserves the first `min(n_id, n_min)` members of each identity after
/// `order_identity`, then the first `target - reserved` of the remaining
/// pool after `order_pool`.
fn select_with_reservation(
    manifest: &Manifest,
    n_min: usize,
    target: usize,
    mut order_identity: impl FnMut(&mut [usize]),
    mut order_pool: impl FnMut(&mut [usize]),
) -> Result<(BTreeSet<String>, BTreeMap<u32, IdentityStats>)> {
    let records = manifest.records();
    let mut kept = vec![false; records.len()];
    let mut reserved = 0;
    let groups = manifest.by_identity();
    for members in groups.values() {
        let mut members = members.clone();
        order_identity(&mut members);
        for &i in members.iter().take(n_min) {
            kept[i] = true;
            reserved += 1;
        }
    }
    let mut pool: Vec<usize> = (0..records.len()).filter(|&i| !kept[i]).collect();
    order_pool(&mut pool);
    for &i in pool.iter().take(target.saturating_sub(reserved)) {
        kept[i] = true;
    }

    let kept_ids = records
        .iter()
        .zip(&kept)
        .filter(|(_, k)| **k)
        .map(|(r, _)| r.sample_id.clone())
        .collect();
    let per_identity = groups
        .iter()
        .map(|(identity, members)| {
            let stats = IdentityStats {
                n_id: members.len(),
                kept: members.iter().filter(|&&i| kept[i]).count(),
                effective_threshold: None,
                retries: 0,
            };
            (*identity, stats)
        })
        .collect();
    Ok((kept_ids, per_identity))
}
