//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use diffprob_core::baselines::{dynunc_prune, dynunc_score, random_prune, DynUncParams, RandParams};
use diffprob_core::calibrator::{calibrate, geometric_grid, CalibrateParams, Outcome};
use diffprob_core::cleaner::{clean, clean_stats};
use diffprob_core::diffprob::{prune_dataset, DiffProbParams};
use diffprob_core::margin_softmax::{ground_truth_prob, softmax, CosineLogits, MarginSoftmaxConfig};
use diffprob_core::rng::DetRng;
use diffprob_core::synth::{
    beta_manifest, flip_detection_metrics, generate, toy_eval, BetaManifestConfig, SynthConfig,
};
use diffprob_core::{Manifest, PruneResult, SampleRecord};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

const ORACLE_THRESHOLDS: [f64; 4] = [0.0, 3e-5, 8e-4, 1e-2];
const N_MIN: usize = 5;
const T_STEP: f64 = 0.01;
const BENCH_SEED: u64 = 2024;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, started: Instant) -> Result<(), String> {
    let took = started.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))
}

/// 1,000 identities of 1..=60 samples. A quarter of the values repeat an
/// earlier value of the same identity, a quarter sit on a 0.01 grid and a
/// quarter cluster just below 1.
fn oracle_corpus(seed: u64) -> Manifest {
    let mut rng = DetRng::new(seed);
    let mut records = Vec::new();
    for identity in 1..=1000u32 {
        let n = 1 + rng.below(60) as usize;
        let mut seen: Vec<f64> = Vec::new();
        for k in 0..n {
            let p = match rng.below(4) {
                0 if !seen.is_empty() => seen[rng.below(seen.len() as u64) as usize],
                1 => (rng.uniform() * 100.0).round() / 100.0,
                2 => 1.0 - rng.uniform() * 1e-3,
                _ => rng.uniform(),
            };
            seen.push(p);
            records.push(SampleRecord::new(
                format!("s{identity:04}_{k:02}"),
                identity,
                p,
                identity,
            ));
        }
    }
    Manifest::new(records, None).expect("oracle corpus is valid")
}

struct OracleIdentity {
    kept: BTreeSet<String>,
    threshold: f64,
    retries: u32,
}

/// Line-by-line transcription of the reference pseudocode. The only
/// addition is the retry guard, without which t = 0 never terminates.
fn oracle_identity(samples: &[&SampleRecord], t: f64, n_min: usize, t_step: f64) -> OracleIdentity {
    let mut x: Vec<&SampleRecord> = samples.to_vec();
    x.sort_by(|a, b| a.p.partial_cmp(&b.p).unwrap().then(a.sample_id.cmp(&b.sample_id)));
    let n_id = x.len();
    if n_id <= n_min {
        return OracleIdentity {
            kept: x.iter().map(|r| r.sample_id.clone()).collect(),
            threshold: t,
            retries: 0,
        };
    }
    let guard = (1.0 / t_step).ceil() as u32 + 1;
    let mut t_dec = 0.0;
    let mut retries = 0;
    loop {
        let mut d_id = vec![x[n_id - 1]];
        let mut l = n_id - 1;
        let mut k = n_id - 1;
        while k >= 1 {
            k -= 1;
            if x[l].p - x[k].p > (1.0 + t_dec) * t {
                d_id.push(x[k]);
                l = k;
            }
        }
        if d_id.len() >= n_min {
            return OracleIdentity {
                kept: d_id.iter().map(|r| r.sample_id.clone()).collect(),
                threshold: (1.0 + t_dec) * t,
                retries,
            };
        }
        if retries == guard {
            return OracleIdentity {
                kept: x.iter().map(|r| r.sample_id.clone()).collect(),
                threshold: (1.0 + t_dec) * t,
                retries,
            };
        }
        t_dec -= t_step;
        retries += 1;
    }
}

fn groups(m: &Manifest) -> BTreeMap<u32, Vec<&SampleRecord>> {
    m.by_identity()
        .into_iter()
        .map(|(id, idx)| (id, idx.into_iter().map(|i| &m.records()[i]).collect()))
        .collect()
}

fn oracle_equivalence() -> Check {
    let started = Instant::now();
    let corpus = oracle_corpus(7);
    let grouped = groups(&corpus);
    let mut mismatches = 0;
    let mut retried = 0;
    for &t in &ORACLE_THRESHOLDS {
        let result = prune_dataset(&corpus, &DiffProbParams::new(t, N_MIN, T_STEP).unwrap()).unwrap();
        for (identity, samples) in &grouped {
            let expect = oracle_identity(samples, t, N_MIN, T_STEP);
            let stats = &result.per_identity[identity];
            let got: BTreeSet<String> = samples
                .iter()
                .filter(|r| result.kept_ids.contains(&r.sample_id))
                .map(|r| r.sample_id.clone())
                .collect();
            let same_threshold = stats.effective_threshold == Some(expect.threshold);
            if got != expect.kept || stats.retries != expect.retries || !same_threshold {
                mismatches += 1;
            }
            if expect.retries > 0 {
                retried += 1;
            }
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} identity mismatches"))?;
    within(Duration::from_secs(10), started)?;
    Ok(format!(
        "0 mismatches over 1000 identities x {} thresholds ({retried} identity runs used decay)",
        ORACLE_THRESHOLDS.len()
    ))
}

fn floor_violations(m: &Manifest, result: &PruneResult, n_min: usize) -> usize {
    groups(m)
        .values()
        .filter(|samples| {
            let kept = samples
                .iter()
                .filter(|r| result.kept_ids.contains(&r.sample_id))
                .count();
            kept < samples.len().min(n_min)
        })
        .count()
}

fn floor_invariant() -> Check {
    let mut violations = 0;
    let mut runs = 0;
    for seed in 0..20u64 {
        let mut cfg = SynthConfig::new(40, 16, seed);
        cfg.samples_per_identity = [1, 60];
        cfg.noise_sigma = 0.3;
        cfg.flip_rate = 0.05;
        cfg.margin = MarginSoftmaxConfig::new(0.0, 16.0).unwrap();
        let (m, _) = generate(&cfg).unwrap();
        let floor = m.floor_fraction(N_MIN);
        let mut results = Vec::new();
        for &t in &ORACLE_THRESHOLDS {
            results.push(prune_dataset(&m, &DiffProbParams::new(t, N_MIN, T_STEP).unwrap()).unwrap());
        }
        for kf in [0.25, 0.5, 0.75] {
            let keep_fraction = f64::max(kf, floor);
            results.push(
                dynunc_prune(
                    &m,
                    &DynUncParams {
                        window: 10,
                        keep_fraction,
                        n_min: N_MIN,
                    },
                )
                .unwrap(),
            );
            results.push(
                random_prune(
                    &m,
                    &RandParams {
                        keep_fraction,
                        n_min: N_MIN,
                        seed,
                    },
                )
                .unwrap(),
            );
        }
        for r in &results {
            violations += floor_violations(&m, r, N_MIN);
            runs += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} identities below floor"))?;
    Ok(format!("0 violations over {runs} pruning runs on 20 manifests"))
}

fn first_pass_gap() -> Check {
    let corpus = oracle_corpus(7);
    let grouped = groups(&corpus);
    let mut checked = 0;
    let mut violations = 0;
    for &t in &ORACLE_THRESHOLDS {
        let result = prune_dataset(&corpus, &DiffProbParams::new(t, N_MIN, T_STEP).unwrap()).unwrap();
        for (identity, samples) in &grouped {
            if result.per_identity[identity].retries != 0 {
                continue;
            }
            let mut kept: Vec<f64> = samples
                .iter()
                .filter(|r| result.kept_ids.contains(&r.sample_id))
                .map(|r| r.p)
                .collect();
            kept.sort_by(f64::total_cmp);
            let pass_through = samples.len() <= N_MIN;
            if !pass_through && kept.windows(2).any(|w| w[1] - w[0] <= t) {
                violations += 1;
            }
            checked += usize::from(!pass_through);
        }
    }
    ensure(violations == 0, || format!("{violations} identities with a gap <= t"))?;
    Ok(format!("0 violations over {checked} first-pass identity runs"))
}

fn bench_manifest() -> Manifest {
    beta_manifest(&BetaManifestConfig::benchmark(BENCH_SEED)).unwrap()
}

fn monotonicity() -> Check {
    let m = bench_manifest();
    let started = Instant::now();
    let grid = geometric_grid(1e-6, 1.0, 50).unwrap();
    let kept: Vec<usize> = grid
        .iter()
        .map(|&t| {
            prune_dataset(&m, &DiffProbParams::new(t, N_MIN, T_STEP).unwrap())
                .unwrap()
                .kept_count()
        })
        .collect();
    within(Duration::from_secs(30), started)?;
    let inversions: Vec<usize> = (1..grid.len()).filter(|&i| kept[i] > kept[i - 1]).collect();
    let n = m.len() as f64;
    ensure(inversions.is_empty(), || {
        let first = inversions[0];
        format!(
            "{} inversions on [1e-6, 1], first at t={:.4} ({} -> {} kept, floor {}); monotone up to t={:.4}",
            inversions.len(),
            grid[first],
            kept[first - 1],
            kept[first],
            m.floor_count(N_MIN),
            grid[first - 1]
        )
    })?;
    Ok(format!(
        "{} samples, kept fraction {:.4} at t=1e-6 down to {:.4} at t=1, 0 inversions",
        m.len(),
        kept[0] as f64 / n,
        kept[49] as f64 / n
    ))
}

/// Search limit that stays below the decay regime of the benchmark manifests.
const SAFE_T_MAX: f64 = 0.1;

fn calibrate_bench(m: &Manifest, target: f64, t_max: f64) -> Result<String, String> {
    let started = Instant::now();
    let mut params = CalibrateParams::new(target);
    params.t_max = t_max;
    let cal = calibrate(m, &params).map_err(|e| format!("target {target}: {e}"))?;
    within(Duration::from_secs(60), started)?;
    ensure(cal.probes <= 60, || format!("target {target}: {} probes", cal.probes))?;
    let recount = prune_dataset(m, &DiffProbParams::new(cal.t, N_MIN, T_STEP).unwrap())
        .unwrap()
        .kept_count();
    ensure(recount == cal.kept, || {
        format!("target {target}: recount {recount} != {}", cal.kept)
    })?;
    match cal.outcome {
        Outcome::WithinTol => ensure((cal.achieved_fraction - target).abs() <= 0.005, || {
            format!("target {target}: achieved {}", cal.achieved_fraction)
        })?,
        Outcome::StepGap { .. } => {}
        Outcome::AboveRange => return Err(format!("target {target}: above range")),
    }
    Ok(format!(
        "{target} -> t={:.3e} f={:.4} ({} probes{})",
        cal.t,
        cal.achieved_fraction,
        cal.probes,
        if cal.within_tol() { "" } else { ", step gap" }
    ))
}

fn calibration() -> Check {
    let m = bench_manifest();
    let run = |t_max| -> Result<Vec<String>, String> {
        [0.75, 0.50, 0.25]
            .iter()
            .map(|&target| calibrate_bench(&m, target, t_max))
            .collect()
    };
    match run(1.0) {
        Ok(parts) => Ok(parts.join("; ")),
        Err(e) => {
            let bounded = run(SAFE_T_MAX).map_or_else(|e| e, |p| p.join("; "));
            Err(format!("{e} [for reference, t_max={SAFE_T_MAX}: {bounded}]"))
        }
    }
}

fn margin_softmax() -> Check {
    let mut rng = DetRng::new(11);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let n = 2 + rng.below(20) as usize;
        let z: Vec<f64> = (0..n).map(|_| (rng.uniform() * 2.0 - 1.0) * 64.0).collect();
        let sum: f64 = softmax(&z).iter().sum();
        worst = worst.max((sum - 1.0).abs());
        let c = (rng.uniform() - 0.5) * 1e3;
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let drift = softmax(&z)
            .iter()
            .zip(softmax(&shifted))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure(drift < 1e-12, || format!("shift by {c} moved probabilities by {drift}"))?;
    }
    ensure(worst <= 1e-12, || format!("normalization error {worst}"))?;

    let cos = CosineLogits::new(vec![0.7, 0.2, -0.1, 0.4], 1).unwrap();
    let grid = [0.0, 0.1, 0.35, 0.5];
    let ps: Vec<f64> = grid
        .iter()
        .map(|&m| ground_truth_prob(&cos, &MarginSoftmaxConfig::new(m, 64.0).unwrap()))
        .collect();
    ensure(ps.windows(2).all(|w| w[1] < w[0]), || {
        format!("not decreasing in m: {ps:?}")
    })?;

    let logits = CosineLogits::new(vec![0.45, 0.30], 1).unwrap();
    let p = ground_truth_prob(&logits, &MarginSoftmaxConfig::default());
    let expect = 1.0 / (1.0 + (-9.6f64).exp());
    ensure((p - expect).abs() < 1e-6 && (p - 0.9999322).abs() < 1e-6, || {
        format!("p = {p}")
    })?;
    Ok(format!("max |sum-1| = {worst:.1e}; p[28.8, 19.2] = {p:.7}"))
}

fn dynunc() -> Check {
    ensure(dynunc_score(&[0.3; 12], 10).unwrap() == 0.0, || {
        "constant history scored non-zero".into()
    })?;
    let s = dynunc_score(&[0.0, 1.0, 1.0], 2).unwrap();
    ensure((s - 0.25).abs() <= 1e-12, || format!("[0,1,1] scored {s}"))?;

    // Constant histories go first.
    let mut rng = DetRng::new(3);
    let mut records = Vec::new();
    for identity in 1..=3u32 {
        for k in 0..10 {
            let history: Vec<f64> = if k < 4 {
                vec![0.8; 10]
            } else {
                (0..10).map(|_| rng.uniform()).collect()
            };
            records.push(SampleRecord::new(format!("i{identity}k{k}"), identity, 0.5, identity).with_history(history));
        }
    }
    let m = Manifest::new(records, None).unwrap();
    let r = dynunc_prune(
        &m,
        &DynUncParams {
            window: 5,
            keep_fraction: 0.6,
            n_min: 2,
        },
    )
    .unwrap();
    let pruned: Vec<&str> = m
        .records()
        .iter()
        .map(|r| r.sample_id.as_str())
        .filter(|id| !r.kept_ids.contains(*id))
        .collect();
    ensure(
        pruned.len() == 12 && pruned.iter().all(|id| id.ends_with(&['0', '1', '2', '3'][..])),
        || format!("pruned {pruned:?}"),
    )?;

    // Brute-force sort-and-cut on 3 x 10 random histories.
    let mut cases = 0;
    for seed in 0..20u64 {
        let mut rng = DetRng::new(100 + seed);
        let mut records = Vec::new();
        for identity in 1..=3u32 {
            for k in 0..10 {
                let history: Vec<f64> = (0..8).map(|_| (rng.uniform() * 4.0).round() / 4.0).collect();
                records
                    .push(SampleRecord::new(format!("r{identity}_{k}"), identity, 0.5, identity).with_history(history));
            }
        }
        let m = Manifest::new(records, None).unwrap();
        for (n_min, kf) in [(2, 0.2), (2, 0.5), (3, 0.7), (5, 0.9)] {
            let got = dynunc_prune(
                &m,
                &DynUncParams {
                    window: 3,
                    keep_fraction: kf,
                    n_min,
                },
            )
            .unwrap();
            let expect = sort_and_cut(&m, 3, kf, n_min);
            ensure(got.kept_ids == expect, || {
                format!("seed {seed}, n_min {n_min}, kf {kf}: selection differs")
            })?;
            cases += 1;
        }
    }
    Ok(format!("[0,1,1] scores {s}; {cases} brute-force selections match"))
}

/// Rank everything by score (descending, ties by id), reserve each identity's
/// leading `n_min`, then fill the budget from the top of the ranking.
fn sort_and_cut(m: &Manifest, window: usize, kf: f64, n_min: usize) -> BTreeSet<String> {
    let mut ranked: Vec<(f64, &SampleRecord)> = m
        .records()
        .iter()
        .map(|r| {
            let h = r.epoch_probs.as_ref().unwrap();
            let mut total = 0.0;
            for w in h.windows(window) {
                let mean = w.iter().sum::<f64>() / window as f64;
                total += (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / window as f64).sqrt();
            }
            (total / (h.len() - window + 1) as f64, r)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.sample_id.cmp(&b.1.sample_id)));
    let mut per: BTreeMap<u32, usize> = BTreeMap::new();
    let mut kept = BTreeSet::new();
    for (_, r) in &ranked {
        let c = per.entry(r.identity).or_default();
        if *c < n_min {
            *c += 1;
            kept.insert(r.sample_id.clone());
        }
    }
    let budget = ((kf * m.len() as f64 + 1e-9).floor() as usize).max(kept.len());
    for (_, r) in &ranked {
        if kept.len() >= budget {
            break;
        }
        kept.insert(r.sample_id.clone());
    }
    kept
}

const CLEAN_SEED: u64 = 1;
// Pinned from the first run of this suite.
const CLEAN_PRECISION: f64 = 1.0;
const CLEAN_RECALL: f64 = 1.0;

fn cleaning() -> Check {
    let mut cfg = SynthConfig::new(100, 64, CLEAN_SEED);
    cfg.noise_sigma = 0.1;
    cfg.flip_rate = 0.05;
    let (m, truth) = generate(&cfg).unwrap();
    let (_, removed) = clean(&m);
    let stats = clean_stats(&m, &removed, N_MIN).unwrap();
    let rho = cfg.flip_rate;
    let f = stats.removed_fraction;
    ensure((0.8 * rho..=1.5 * rho).contains(&f), || format!("removed fraction {f}"))?;
    let (precision, recall) = flip_detection_metrics(&removed, &truth);
    ensure(precision == CLEAN_PRECISION && recall == CLEAN_RECALL, || {
        format!("precision {precision}, recall {recall} differ from pinned values")
    })?;
    Ok(format!(
        "removed {f:.4} (rho {rho}); precision {precision}, recall {recall}"
    ))
}

fn toy_config(seed: u64) -> SynthConfig {
    let mut cfg = SynthConfig::new(100, 32, seed);
    cfg.samples_per_identity = [10, 60];
    cfg.noise_sigma = 0.35;
    cfg.flip_rate = 0.05;
    cfg.holdout_per_identity = 10;
    cfg.margin = MarginSoftmaxConfig::new(0.0, 16.0).unwrap();
    cfg
}

// Mean holdout accuracy of full, diffprob, random and clean+diffprob,
// pinned from the first run of this suite.
const TOY_PINNED: [f64; 4] = [0.4988, 0.47, 0.441, 0.4876];

fn bounded(target: f64) -> CalibrateParams {
    let mut params = CalibrateParams::new(target);
    params.t_max = SAFE_T_MAX;
    params
}

fn toy_downstream() -> Check {
    let mut acc = [0.0f64; 4];
    let seeds = 0..5u64;
    let runs = seeds.clone().count() as f64;
    for seed in seeds {
        let started = Instant::now();
        let (m, truth) = generate(&toy_config(seed)).unwrap();
        let n = m.len() as f64;
        let all: Vec<&str> = m.records().iter().map(|r| r.sample_id.as_str()).collect();

        let dp = calibrate(&m, &bounded(0.5)).map_err(|e| format!("seed {seed}: {e}"))?;
        let dp_kept = prune_dataset(&m, &DiffProbParams::new(dp.t, N_MIN, T_STEP).unwrap()).unwrap();
        let rand_kept = random_prune(
            &m,
            &RandParams {
                keep_fraction: 0.5,
                n_min: N_MIN,
                seed,
            },
        )
        .unwrap();

        let (cleaned, _) = clean(&m);
        let target = 0.5 * n / cleaned.len() as f64;
        let cdp = calibrate(&cleaned, &bounded(target)).map_err(|e| format!("seed {seed}: {e}"))?;
        let cdp_kept = prune_dataset(&cleaned, &DiffProbParams::new(cdp.t, N_MIN, T_STEP).unwrap()).unwrap();
        within(Duration::from_secs(60), started)?;

        for (slot, ids) in [
            all,
            dp_kept.kept_in_order(&m),
            rand_kept.kept_in_order(&m),
            cdp_kept.kept_in_order(&cleaned),
        ]
        .iter()
        .enumerate()
        {
            acc[slot] += toy_eval(&truth, ids).unwrap() / runs;
        }
    }
    let [full, dp, rand, cdp] = acc;
    let detail = format!("full {full:.4}, diffprob {dp:.4}, random {rand:.4}, clean+diffprob {cdp:.4}");
    let drift = acc
        .iter()
        .zip(TOY_PINNED)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(drift <= 1e-9, || {
        format!("accuracies moved from pinned values: {detail}")
    })?;
    ensure(dp >= rand - 0.005, || format!("diffprob below random: {detail}"))?;
    ensure(cdp >= dp - 0.005, || format!("clean+diffprob below diffprob: {detail}"))?;
    Ok(detail)
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_diffprob"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_default()
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let cfg = serde_json::to_string(&toy_config(0)).unwrap();
    std::fs::write(d("cfg.json"), cfg).map_err(|e| e.to_string())?;

    let mut outputs: Vec<Vec<Vec<u8>>> = Vec::new();
    for threads in ["1", "2", "8"] {
        let tag = |name: &str| d(&format!("{threads}_{name}"));
        let (m, truth, cleaned) = (tag("m.jsonl"), tag("truth.json"), tag("clean.jsonl"));
        run_cli(&[
            "--threads",
            threads,
            "synth",
            "--config",
            &d("cfg.json"),
            "--seed",
            "5",
            "--out",
            &m,
            "--truth",
            &truth,
        ])?;
        run_cli(&["--threads", threads, "clean", "--input", &m, "--out", &cleaned])?;
        run_cli(&[
            "--threads",
            threads,
            "prune",
            "--method",
            "diffprob",
            "--t",
            "0.0008",
            "--input",
            &m,
            "--out",
            &tag("dp.txt"),
        ])?;
        run_cli(&[
            "--threads",
            threads,
            "prune",
            "--method",
            "diffprob",
            "--t",
            "0.0008",
            "--input",
            &cleaned,
            "--out",
            &tag("cdp.txt"),
        ])?;
        run_cli(&[
            "--threads",
            threads,
            "prune",
            "--method",
            "dynunc",
            "--keep-fraction",
            "0.5",
            "--input",
            &m,
            "--out",
            &tag("du.txt"),
        ])?;
        run_cli(&[
            "--threads",
            threads,
            "prune",
            "--method",
            "random",
            "--keep-fraction",
            "0.5",
            "--seed",
            "9",
            "--input",
            &m,
            "--out",
            &tag("rd.txt"),
        ])?;
        run_cli(&[
            "--threads",
            threads,
            "subset",
            "--input",
            &m,
            "--ids",
            &tag("dp.txt"),
            "--out",
            &tag("sub.jsonl"),
        ])?;
        run_cli(&["--threads", threads, "sweep", "--input", &m, "--out", &tag("sweep.csv")])?;
        let files = [
            "m.jsonl",
            "truth.json",
            "clean.jsonl",
            "clean.jsonl.removed.txt",
            "dp.txt",
            "cdp.txt",
            "du.txt",
            "rd.txt",
            "sub.jsonl",
            "sweep.csv",
        ];
        outputs.push(files.iter().map(|f| read(Path::new(&tag(f)))).collect());
    }
    ensure(outputs[0].iter().all(|f| !f.is_empty()), || {
        "an output file is empty".into()
    })?;
    ensure(outputs.windows(2).all(|w| w[0] == w[1]), || {
        "outputs differ across thread counts".into()
    })?;
    Ok(format!(
        "{} output files identical at 1, 2 and 8 threads",
        outputs[0].len()
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("floor invariant", floor_invariant),
        ("first-pass gap", first_pass_gap),
        ("monotonicity", monotonicity),
        ("calibration", calibration),
        ("margin softmax", margin_softmax),
        ("dynunc", dynunc),
        ("cleaning", cleaning),
        ("toy downstream", toy_downstream),
        ("cli determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.2}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.2}s): {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
