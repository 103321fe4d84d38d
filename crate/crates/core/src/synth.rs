//! Synthetic manifests with known ground truth.
//!
//! Identities are unit-norm Gaussian directions; samples are noisy copies of
//! their center projected back onto the sphere. A fraction of samples get a
//! wrong label (embedding unchanged), so their probability is computed
//! against the wrong center. Probabilities and predictions use
//! [`crate::margin_softmax`] against every center.
//!
//! Streams (see [`crate::rng`]): centers come from `derive(seed, 0)`,
//! identity `c` draws its sample count, training embeddings and holdout
//! embeddings from `derive(seed, c)`, label flips from `derive(seed, FLIP_KEY)`
//! and the history of sample `i` (global index) from
//! `derive(seed ^ HISTORY_KEY, i)`.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{Manifest, SampleRecord};
use crate::margin_softmax::{argmax, ground_truth_prob, predict_class, CosineLogits, MarginSoftmaxConfig};
use crate::rng::DetRng;

type Points = Vec<Vec<f64>>;

const FLIP_KEY: u64 = u64::MAX;
const HISTORY_KEY: u64 = 0x6869_7374_6f72_7921;

fn default_jitter() -> f64 {
    0.01
}

fn default_holdout() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub class_count: u32,
    pub embedding_dim: usize,
    /// Inclusive `[lo, hi]` range of training samples per identity.
    pub samples_per_identity: [usize; 2],
    pub noise_sigma: f64,
    pub flip_rate: f64,
    pub epoch_count: usize,
    /// Time constant of the simulated learning curve, in epochs.
    pub learning_tau: f64,
    #[serde(default = "default_jitter")]
    pub history_jitter: f64,
    #[serde(default)]
    pub margin: MarginSoftmaxConfig,
    #[serde(default = "default_holdout")]
    pub holdout_per_identity: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(class_count: u32, embedding_dim: usize, seed: u64) -> Self {
        SynthConfig {
            class_count,
            embedding_dim,
            samples_per_identity: [20, 40],
            noise_sigma: 0.1,
            flip_rate: 0.0,
            epoch_count: 12,
            learning_tau: 3.0,
            history_jitter: default_jitter(),
            margin: MarginSoftmaxConfig::default(),
            holdout_per_identity: default_holdout(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if self.class_count < 2 {
            return bad(format!("class_count {} must be >= 2", self.class_count));
        }
        if self.embedding_dim < 2 {
            return bad(format!("embedding_dim {} must be >= 2", self.embedding_dim));
        }
        let [lo, hi] = self.samples_per_identity;
        if lo < 1 || hi < lo {
            return bad(format!("samples_per_identity [{lo}, {hi}] must satisfy 1 <= lo <= hi"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be >= 0", self.noise_sigma));
        }
        if !(0.0..1.0).contains(&self.flip_rate) {
            return bad(format!("flip_rate {} must be in [0, 1)", self.flip_rate));
        }
        if !(self.learning_tau > 0.0 && self.learning_tau.is_finite()) {
            return bad(format!("learning_tau {} must be > 0", self.learning_tau));
        }
        if !(self.history_jitter >= 0.0 && self.history_jitter.is_finite()) {
            return bad(format!("history_jitter {} must be >= 0", self.history_jitter));
        }
        self.margin.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub sample_id: String,
    /// Label written to the manifest.
    pub label: u32,
    pub true_identity: u32,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutSample {
    pub identity: u32,
    pub embedding: Vec<f64>,
}

/// Hidden state behind a generated manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub config: SynthConfig,
    pub class_centers: Vec<Vec<f64>>,
    pub samples: Vec<TruthSample>,
    pub flipped: BTreeSet<String>,
    pub holdout: Vec<HoldoutSample>,
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit_gaussian(rng: &mut DetRng, dim: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        if v.iter().any(|x| *x != 0.0) {
            normalize(&mut v);
            return v;
        }
    }
}

fn noisy_copy(rng: &mut DetRng, center: &[f64], sigma: f64) -> Vec<f64> {
    let mut v: Vec<f64> = center.iter().map(|c| c + sigma * rng.normal()).collect();
    normalize(&mut v);
    v
}

fn cosines(centers: &[Vec<f64>], embedding: &[f64]) -> Vec<f64> {
    centers.iter().map(|c| dot(c, embedding).clamp(-1.0, 1.0)).collect()
}

pub fn generate(config: &SynthConfig) -> Result<(Manifest, SynthTruth)> {
    config.validate()?;
    let dim = config.embedding_dim;
    let classes = config.class_count as usize;
    let mut center_rng = DetRng::derive(config.seed, 0);
    let centers: Vec<Vec<f64>> = (0..classes).map(|_| unit_gaussian(&mut center_rng, dim)).collect();

    let [lo, hi] = config.samples_per_identity;
    let per_identity: Vec<(Points, Points)> = (0..classes)
        .into_par_iter()
        .map(|c| {
            let mut rng = DetRng::derive(config.seed, c as u64 + 1);
            let n = lo + rng.below((hi - lo + 1) as u64) as usize;
            let train = (0..n)
                .map(|_| noisy_copy(&mut rng, &centers[c], config.noise_sigma))
                .collect();
            let holdout = (0..config.holdout_per_identity)
                .map(|_| noisy_copy(&mut rng, &centers[c], config.noise_sigma))
                .collect();
            (train, holdout)
        })
        .collect();

    let mut samples = Vec::new();
    let mut holdout = Vec::new();
    for (c, (train, held)) in per_identity.into_iter().enumerate() {
        let identity = c as u32 + 1;
        for (k, embedding) in train.into_iter().enumerate() {
            samples.push(TruthSample {
                sample_id: format!("id{identity:05}_{k:04}"),
                label: identity,
                true_identity: identity,
                embedding,
            });
        }
        holdout.extend(held.into_iter().map(|embedding| HoldoutSample { identity, embedding }));
    }

    let n = samples.len();
    let flips = (config.flip_rate * n as f64).round() as usize;
    let mut flip_rng = DetRng::derive(config.seed, FLIP_KEY);
    let mut order: Vec<usize> = (0..n).collect();
    flip_rng.shuffle(&mut order);
    let mut flipped = BTreeSet::new();
    for &i in order.iter().take(flips) {
        let truth = samples[i].true_identity;
        let mut label = 1 + flip_rng.below(config.class_count as u64 - 1) as u32;
        if label >= truth {
            label += 1;
        }
        samples[i].label = label;
        flipped.insert(samples[i].sample_id.clone());
    }

    let records: Vec<SampleRecord> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let logits = CosineLogits::new(cosines(&centers, &s.embedding), s.label)?;
            let p = ground_truth_prob(&logits, &config.margin);
            let predicted = predict_class(&logits);
            let mut record = SampleRecord::new(s.sample_id.clone(), s.label, p, predicted);
            if config.epoch_count > 0 {
                let mut rng = DetRng::derive(config.seed ^ HISTORY_KEY, i as u64);
                let is_flipped = s.label != s.true_identity;
                let history = (1..=config.epoch_count)
                    .map(|e| {
                        let base = if is_flipped {
                            p
                        } else {
                            p * (1.0 - (-(e as f64) / config.learning_tau).exp())
                        };
                        (base + config.history_jitter * rng.normal()).clamp(0.0, 1.0)
                    })
                    .collect();
                record = record.with_history(history);
            }
            Ok(record)
        })
        .collect::<Result<_>>()?;

    let manifest = Manifest::new(records, Some(config.class_count))?;
    let truth = SynthTruth {
        config: config.clone(),
        class_centers: centers,
        samples,
        flipped,
        holdout,
    };
    Ok((manifest, truth))
}

/// Holdout accuracy of a nearest-class-mean classifier built from the kept
/// training embeddings under their manifest labels. Classes with no kept
/// sample are never predicted.
pub fn toy_eval<S: AsRef<str>>(truth: &SynthTruth, kept_ids: &[S]) -> Result<f64> {
    if kept_ids.is_empty() {
        return Err(Error::InvalidParam("kept set is empty".into()));
    }
    if truth.holdout.is_empty() {
        return Err(Error::InvalidParam("truth has no holdout samples".into()));
    }
    let index: HashMap<&str, &TruthSample> = truth.samples.iter().map(|s| (s.sample_id.as_str(), s)).collect();
    let classes = truth.class_centers.len();
    let dim = truth.class_centers.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; classes];
    let mut counts = vec![0usize; classes];
    let mut seen = BTreeSet::new();
    for id in kept_ids {
        let id = id.as_ref();
        let sample = index.get(id).ok_or_else(|| Error::UnknownId(id.to_string()))?;
        if !seen.insert(id) {
            continue;
        }
        let c = sample.label as usize - 1;
        counts[c] += 1;
        for (acc, x) in sums[c].iter_mut().zip(&sample.embedding) {
            *acc += x;
        }
    }
    let means: Vec<Option<Vec<f64>>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(mut sum, &count)| {
            (count > 0).then(|| {
                normalize(&mut sum);
                sum
            })
        })
        .collect();
    let available: Vec<usize> = (0..classes).filter(|&c| means[c].is_some()).collect();

    let correct = truth
        .holdout
        .par_iter()
        .filter(|h| {
            let scores: Vec<f64> = available
                .iter()
                .map(|&c| dot(means[c].as_deref().unwrap_or(&[]), &h.embedding))
                .collect();
            let best = available[argmax(&scores)];
            best as u32 + 1 == h.identity
        })
        .count();
    Ok(correct as f64 / truth.holdout.len() as f64)
}

/// Precision and recall of `removed_ids` against the injected flips; a zero
/// denominator gives 1.0.
pub fn flip_detection_metrics<S: AsRef<str>>(removed_ids: &[S], truth: &SynthTruth) -> (f64, f64) {
    let removed: BTreeSet<&str> = removed_ids.iter().map(AsRef::as_ref).collect();
    let hits = removed.iter().filter(|id| truth.flipped.contains(**id)).count();
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    (ratio(hits, removed.len()), ratio(hits, truth.flipped.len()))
}

pub fn write_truth(truth: &SynthTruth, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer(&mut out, truth).map_err(|e| Error::io(path, e.into()))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_truth(path: &Path) -> Result<SynthTruth> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| {
        if e.is_io() {
            Error::io(path, e.into())
        } else {
            Error::Parse {
                line: e.line(),
                message: e.to_string(),
            }
        }
    })
}

/// Parameters for a manifest whose probabilities are drawn directly from a
/// Beta distribution, without any embedding geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaManifestConfig {
    pub class_count: u32,
    pub samples_per_identity: [usize; 2],
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

impl BetaManifestConfig {
    /// 1,000 identities averaging 47 samples.
    pub fn benchmark(seed: u64) -> Self {
        BetaManifestConfig {
            class_count: 1000,
            samples_per_identity: [15, 79],
            alpha: 4.0,
            beta: 1.0,
            seed,
        }
    }
}

/// Identity `c` draws its size and probabilities from `derive(seed, c)`;
/// every prediction is correct.
pub fn beta_manifest(config: &BetaManifestConfig) -> Result<Manifest> {
    let [lo, hi] = config.samples_per_identity;
    if config.class_count < 1 || lo < 1 || hi < lo {
        return Err(Error::InvalidParam("need class_count >= 1 and 1 <= lo <= hi".into()));
    }
    if !(config.alpha > 0.0 && config.beta > 0.0) {
        return Err(Error::InvalidParam("Beta parameters must be > 0".into()));
    }
    let records: Vec<SampleRecord> = (1..=config.class_count)
        .into_par_iter()
        .flat_map_iter(|identity| {
            let mut rng = DetRng::derive(config.seed, identity as u64);
            let n = lo + rng.below((hi - lo + 1) as u64) as usize;
            (0..n)
                .map(|k| {
                    let p = rng.beta(config.alpha, config.beta);
                    SampleRecord::new(format!("id{identity:05}_{k:04}"), identity, p, identity)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Manifest::new(records, Some(config.class_count))
}
