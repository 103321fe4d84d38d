//! Removal of samples the pretrained model misclassifies.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::Manifest;

/// Splits `manifest` into records with `predicted_class == identity` and the
/// ids of the rest. Order is preserved and the class count is unchanged.
pub fn clean(manifest: &Manifest) -> (Manifest, Vec<String>) {
    let (kept, removed): (Vec<_>, Vec<_>) = manifest.records().iter().partition(|r| r.predicted_class == r.identity);
    let removed_ids = removed.into_iter().map(|r| r.sample_id.clone()).collect();
    let kept: Vec<_> = kept.into_iter().cloned().collect();
    let epoch_count = if kept.is_empty() { 0 } else { manifest.epoch_count() };
    (
        Manifest::from_parts_unchecked(kept, manifest.class_count(), epoch_count),
        removed_ids,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCleanStats {
    pub n_id: usize,
    pub removed: usize,
    pub removed_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanStats {
    pub total: usize,
    pub removed: usize,
    pub removed_fraction: f64,
    pub n_min: usize,
    pub per_identity: BTreeMap<u32, IdentityCleanStats>,
    /// Identities left with no samples.
    pub emptied: Vec<u32>,
    /// Identities that had at least `n_min` samples before cleaning and fewer after.
    pub below_n_min: Vec<u32>,
}

/// Summary of a cleaning pass. `removed_ids` must come from [`clean`] on the
/// same manifest.
pub fn clean_stats(manifest: &Manifest, removed_ids: &[String], n_min: usize) -> Result<CleanStats> {
    let by_id: HashMap<&str, (u32, bool)> = manifest
        .records()
        .iter()
        .map(|r| (r.sample_id.as_str(), (r.identity, r.predicted_class == r.identity)))
        .collect();
    let mut seen = HashSet::new();
    let mut removed_per: BTreeMap<u32, usize> = BTreeMap::new();
    for id in removed_ids {
        let (identity, correct) = by_id
            .get(id.as_str())
            .copied()
            .ok_or_else(|| Error::Mismatch(format!("removed id `{id}` not in manifest")))?;
        if correct {
            return Err(Error::Mismatch(format!("removed id `{id}` is correctly classified")));
        }
        if !seen.insert(id.as_str()) {
            return Err(Error::Mismatch(format!("removed id `{id}` listed twice")));
        }
        *removed_per.entry(identity).or_default() += 1;
    }

    let mut per_identity = BTreeMap::new();
    let mut emptied = Vec::new();
    let mut below_n_min = Vec::new();
    for (identity, members) in manifest.by_identity() {
        let n_id = members.len();
        let removed = removed_per.get(&identity).copied().unwrap_or(0);
        let left = n_id - removed;
        if left == 0 {
            emptied.push(identity);
        }
        if n_id >= n_min && left < n_min {
            below_n_min.push(identity);
        }
        per_identity.insert(
            identity,
            IdentityCleanStats {
                n_id,
                removed,
                removed_fraction: removed as f64 / n_id as f64,
            },
        );
    }
    let total = manifest.len();
    Ok(CleanStats {
        total,
        removed: removed_ids.len(),
        removed_fraction: if total == 0 {
            0.0
        } else {
            removed_ids.len() as f64 / total as f64
        },
        n_min,
        per_identity,
        emptied,
        below_n_min,
    })
}
