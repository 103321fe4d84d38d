//! Threshold search: find the gap threshold `t` that keeps a target fraction.
//!
//! The kept fraction is expected to be a non-increasing step function of
//! `t`. [`calibrate`] bisects `[0, t_max]` and stops at the first probe whose
//! fraction lands within `tol` of the target. When a step jumps over the
//! whole tolerance band the closer side of the final bracket is returned and
//! flagged. Every probe is cross-checked against earlier ones, and the search
//! aborts if the fraction is ever seen to increase with `t`.
//!
//! The expectation fails once `t` is large enough that most identities only
//! reach `n_min` through threshold decay: decay steps are proportional to `t`,
//! so a larger `t` can land further below an identity's critical gap and keep
//! more. Lowering `t_max` keeps the search out of that region.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffprob::{prune_dataset, DiffProbParams, SortedIdentities, DEFAULT_N_MIN, DEFAULT_T_STEP};
use crate::error::{Error, Result};
use crate::manifest::Manifest;

/// Largest possible gap between two probabilities.
pub const T_MAX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrateParams {
    pub target: f64,
    pub n_min: usize,
    pub t_step: f64,
    pub tol: f64,
    /// Maximum number of prune evaluations.
    pub max_iter: usize,
    /// Upper end of the search interval.
    pub t_max: f64,
}

impl CalibrateParams {
    pub fn new(target: f64) -> Self {
        CalibrateParams {
            target,
            n_min: DEFAULT_N_MIN,
            t_step: DEFAULT_T_STEP,
            tol: 0.005,
            max_iter: 60,
            t_max: T_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    WithinTol,
    /// No probed `t` hit the band; the fraction jumps from `fraction_lo` at
    /// `t_lo` to `fraction_hi` at `t_hi`.
    StepGap {
        t_lo: f64,
        fraction_lo: f64,
        t_hi: f64,
        fraction_hi: f64,
    },
    /// Even `t = t_max` keeps more than `target + tol`.
    AboveRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub t: f64,
    pub achieved_fraction: f64,
    pub kept: usize,
    pub probes: usize,
    pub outcome: Outcome,
}

impl Calibration {
    pub fn within_tol(&self) -> bool {
        self.outcome == Outcome::WithinTol
    }
}

struct Prober<'a> {
    sorted: SortedIdentities,
    params: &'a CalibrateParams,
    seen: Vec<(f64, f64)>,
}

impl Prober<'_> {
    fn probe(&mut self, t: f64) -> Result<f64> {
        let dp = DiffProbParams::new(t, self.params.n_min, self.params.t_step)?;
        let f = self.sorted.kept_count(&dp) as f64 / self.sorted.total() as f64;
        for &(t_old, f_old) in &self.seen {
            if (t_old < t && f_old < f) || (t_old > t && f_old > f) {
                let ((t_lo, f_lo), (t_hi, f_hi)) = if t_old < t {
                    ((t_old, f_old), (t, f))
                } else {
                    ((t, f), (t_old, f_old))
                };
                return Err(Error::NonMonotone { t_lo, f_lo, t_hi, f_hi });
            }
        }
        self.seen.push((t, f));
        Ok(f)
    }
}

pub fn calibrate(manifest: &Manifest, params: &CalibrateParams) -> Result<Calibration> {
    if manifest.is_empty() {
        return Err(Error::InvalidManifest("cannot calibrate an empty manifest".into()));
    }
    if !(params.target > 0.0 && params.target <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "target {} must be in (0, 1]",
            params.target
        )));
    }
    if params.tol.is_nan() || params.tol <= 0.0 {
        return Err(Error::InvalidParam("tol must be > 0".into()));
    }
    if !(params.t_max > 0.0 && params.t_max.is_finite()) {
        return Err(Error::InvalidParam(format!("t_max {} must be > 0", params.t_max)));
    }
    if params.max_iter < 2 {
        return Err(Error::InvalidParam("max_iter must be >= 2".into()));
    }
    DiffProbParams::new(0.0, params.n_min, params.t_step)?;
    let floor = manifest.floor_fraction(params.n_min);
    if params.target < floor {
        return Err(Error::Infeasible(format!(
            "target {} is below the achievable floor {floor:.6} with n_min = {}",
            params.target, params.n_min
        )));
    }

    let target = params.target;
    let tol = params.tol;
    let within = |f: f64| (f - target).abs() <= tol;
    let mut prober = Prober {
        sorted: SortedIdentities::new(manifest),
        params,
        seen: Vec::new(),
    };

    let f0 = prober.probe(0.0)?;
    if f0 < target - tol {
        return Err(Error::Infeasible(format!(
            "target {target} is above the fraction {f0:.6} kept at t = 0"
        )));
    }
    if within(f0) {
        return finish(manifest, params, 0.0, prober.seen.len(), Outcome::WithinTol);
    }
    let f1 = prober.probe(params.t_max)?;
    if f1 > target + tol {
        return finish(manifest, params, params.t_max, prober.seen.len(), Outcome::AboveRange);
    }

    let (mut lo, mut f_lo) = (0.0, f0);
    let (mut hi, mut f_hi) = (params.t_max, f1);
    while prober.seen.len() < params.max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = prober.probe(mid)?;
        if within(f) {
            return finish(manifest, params, mid, prober.seen.len(), Outcome::WithinTol);
        }
        if f > target + tol {
            lo = mid;
            f_lo = f;
        } else {
            hi = mid;
            f_hi = f;
        }
    }
    let probes = prober.seen.len();
    if within(f_hi) {
        return finish(manifest, params, hi, probes, Outcome::WithinTol);
    }
    let t = if (f_lo - target).abs() <= (f_hi - target).abs() {
        lo
    } else {
        hi
    };
    finish(
        manifest,
        params,
        t,
        probes,
        Outcome::StepGap {
            t_lo: lo,
            fraction_lo: f_lo,
            t_hi: hi,
            fraction_hi: f_hi,
        },
    )
}

/// Recounts with a full prune at the chosen `t`.
fn finish(
    manifest: &Manifest,
    params: &CalibrateParams,
    t: f64,
    probes: usize,
    outcome: Outcome,
) -> Result<Calibration> {
    let result = prune_dataset(manifest, &DiffProbParams::new(t, params.n_min, params.t_step)?)?;
    Ok(Calibration {
        t,
        achieved_fraction: result.kept_count() as f64 / manifest.len() as f64,
        kept: result.kept_count(),
        probes,
        outcome,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub t: f64,
    pub kept: usize,
    pub kept_fraction: f64,
}

/// Kept fraction at each `t`; `t_values` must be ascending and non-negative.
/// Fails with [`Error::NonMonotone`] if the fraction ever increases.
pub fn sweep(manifest: &Manifest, t_values: &[f64], n_min: usize, t_step: f64) -> Result<Vec<SweepRow>> {
    if t_values.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidParam("t values must be finite and >= 0".into()));
    }
    if t_values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParam("t values must be ascending".into()));
    }
    let sorted = SortedIdentities::new(manifest);
    let n = manifest.len().max(1) as f64;
    let rows = t_values
        .iter()
        .map(|&t| {
            let kept = sorted.kept_count(&DiffProbParams::new(t, n_min, t_step)?);
            Ok(SweepRow {
                t,
                kept,
                kept_fraction: kept as f64 / n,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    check_monotone(&rows)?;
    Ok(rows)
}

pub fn check_monotone(rows: &[SweepRow]) -> Result<()> {
    match rows.windows(2).find(|w| w[1].kept > w[0].kept) {
        Some(w) => Err(Error::NonMonotone {
            t_lo: w[0].t,
            f_lo: w[0].kept_fraction,
            t_hi: w[1].t,
            f_hi: w[1].kept_fraction,
        }),
        None => Ok(()),
    }
}

/// `points` values from `lo` to `hi` (inclusive) with a constant ratio.
pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && points >= 1) {
        return Err(Error::InvalidParam(format!(
            "geometric grid needs 0 < lo <= hi and points >= 1 (got {lo}, {hi}, {points})"
        )));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let ratio = (hi / lo).ln() / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|i| lo * (ratio * i as f64).exp()).collect();
    grid[points - 1] = hi;
    Ok(grid)
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "t,kept,kept_fraction").map_err(io)?;
    for row in rows {
        writeln!(out, "{:?},{},{:?}", row.t, row.kept, row.kept_fraction).map_err(io)?;
    }
    out.flush().map_err(io)
}
