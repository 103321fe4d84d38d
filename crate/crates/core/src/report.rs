//! Numeric summary of a pruning run: counts, probability quantiles of the
//! kept and pruned populations, and the retry/threshold diagnostics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::manifest::{IdentityStats, Manifest, Method, PruneResult};
use crate::stats::{quantile, sorted};

/// Reported quantile levels.
pub const LEVELS: [f64; 7] = [0.01, 0.05, 0.25, 0.50, 0.75, 0.95, 0.99];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p01: f64,
    pub p05: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
    pub p99: f64,
}

impl Quantiles {
    /// `None` for an empty population.
    pub fn of(values: Vec<f64>) -> Option<Quantiles> {
        let v = sorted(values);
        let q = |level: f64| quantile(&v, level);
        Some(Quantiles {
            p01: q(LEVELS[0])?,
            p05: q(LEVELS[1])?,
            p25: q(LEVELS[2])?,
            p50: q(LEVELS[3])?,
            p75: q(LEVELS[4])?,
            p95: q(LEVELS[5])?,
            p99: q(LEVELS[6])?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub identities: usize,
    pub min: f64,
    pub max: f64,
    pub quantiles: Quantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub method: Method,
    pub requested_param: f64,
    pub total: usize,
    pub kept: usize,
    pub pruned: usize,
    pub kept_fraction: f64,
    pub identities: usize,
    pub kept_p: Option<Quantiles>,
    pub pruned_p: Option<Quantiles>,
    /// retries -> number of identities
    pub retry_histogram: BTreeMap<u32, usize>,
    /// Over identities that went through a DiffProb scan.
    pub effective_threshold: Option<ThresholdSummary>,
    pub per_identity: BTreeMap<u32, IdentityStats>,
}

pub fn report(manifest: &Manifest, result: &PruneResult) -> Result<Report> {
    result.check_against(manifest)?;
    let (kept_p, pruned_p): (Vec<_>, Vec<_>) = manifest
        .records()
        .iter()
        .map(|r| (result.kept_ids.contains(&r.sample_id), r.p))
        .partition(|(kept, _)| *kept);
    let kept_p: Vec<f64> = kept_p.into_iter().map(|(_, p)| p).collect();
    let pruned_p: Vec<f64> = pruned_p.into_iter().map(|(_, p)| p).collect();

    let mut retry_histogram = BTreeMap::new();
    for stats in result.per_identity.values() {
        *retry_histogram.entry(stats.retries).or_insert(0) += 1;
    }
    let thresholds: Vec<f64> = result
        .per_identity
        .values()
        .filter_map(|s| s.effective_threshold)
        .collect();
    let effective_threshold = Quantiles::of(thresholds.clone()).map(|quantiles| ThresholdSummary {
        identities: thresholds.len(),
        min: thresholds.iter().copied().fold(f64::INFINITY, f64::min),
        max: thresholds.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        quantiles,
    });

    let total = manifest.len();
    let kept = kept_p.len();
    Ok(Report {
        method: result.method,
        requested_param: result.requested_param,
        total,
        kept,
        pruned: total - kept,
        kept_fraction: if total == 0 { 0.0 } else { kept as f64 / total as f64 },
        identities: result.per_identity.len(),
        kept_p: Quantiles::of(kept_p),
        pruned_p: Quantiles::of(pruned_p),
        retry_histogram,
        effective_threshold,
        per_identity: result.per_identity.clone(),
    })
}
