//! Probability manifests: the per-sample records every stage reads and writes.
//!
//! JSONL is the canonical on-disk form, one record per line:
//!
//! ```text
//! {"sample_id":"s0001","identity":3,"p":0.91,"predicted_class":3,"epoch_probs":[0.2,0.6,0.9]}
//! ```
//!
//! CSV is the flat alternative with header
//! `sample_id,identity,p,predicted_class,epoch_probs`, where `epoch_probs` is a
//! `|`-delimited list and every probability is written at 9 significant digits.
//! Identity and class indices are 1-based.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CSV_HEADER: [&str; 5] = ["sample_id", "identity", "p", "predicted_class", "epoch_probs"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// `.csv` maps to CSV, anything else to JSONL.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(Error::InvalidParam(format!("unknown manifest format `{other}`"))),
        }
    }
}

/// One training sample as seen by the pruning engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub identity: u32,
    /// Probability the pretrained model assigns to `identity`.
    pub p: f64,
    pub predicted_class: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch_probs: Option<Vec<f64>>,
}

impl SampleRecord {
    pub fn new(sample_id: impl Into<String>, identity: u32, p: f64, predicted_class: u32) -> Self {
        SampleRecord {
            sample_id: sample_id.into(),
            identity,
            p,
            predicted_class,
            epoch_probs: None,
        }
    }

    pub fn with_history(mut self, epoch_probs: Vec<f64>) -> Self {
        self.epoch_probs = Some(epoch_probs);
        self
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.sample_id.is_empty() {
            return Err("empty sample_id".into());
        }
        if !is_probability(self.p) {
            return Err(format!("p = {} outside [0, 1] for `{}`", self.p, self.sample_id));
        }
        if self.identity == 0 {
            return Err(format!("identity must be >= 1 for `{}`", self.sample_id));
        }
        if self.predicted_class == 0 {
            return Err(format!("predicted_class must be >= 1 for `{}`", self.sample_id));
        }
        if let Some(h) = &self.epoch_probs {
            if let Some((e, v)) = h.iter().enumerate().find(|(_, v)| !is_probability(**v)) {
                return Err(format!(
                    "epoch_probs[{e}] = {v} outside [0, 1] for `{}`",
                    self.sample_id
                ));
            }
        }
        Ok(())
    }
}

fn is_probability(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Immutable view of a whole dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    records: Vec<SampleRecord>,
    class_count: u32,
    epoch_count: usize,
}

impl Manifest {
    /// Validates `records` and builds a manifest. With `class_count = None`
    /// the class count is the largest identity or predicted class referenced.
    pub fn new(records: Vec<SampleRecord>, class_count: Option<u32>) -> Result<Self> {
        let mut builder = Builder::new(class_count);
        for r in records {
            builder.push(r).map_err(Error::InvalidManifest)?;
        }
        builder.finish().map_err(Error::InvalidManifest)
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    pub fn epoch_count(&self) -> usize {
        self.epoch_count
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_histories(&self) -> bool {
        self.records.first().is_some_and(|r| r.epoch_probs.is_some())
    }

    /// Record indices grouped by identity, each group in manifest order.
    pub fn by_identity(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            groups.entry(r.identity).or_default().push(i);
        }
        groups
    }

    /// Smallest kept count any floor-respecting method can produce:
    /// the sum over identities of `min(n_id, n_min)`.
    pub fn floor_count(&self, n_min: usize) -> usize {
        self.by_identity()
            .values()
            .map(|members| members.len().min(n_min))
            .sum()
    }

    pub fn floor_fraction(&self, n_min: usize) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.floor_count(n_min) as f64 / self.len() as f64
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.records.iter().any(|r| r.sample_id == id)
    }

    /// Records whose id is in `ids`, in original order; the class count is unchanged.
    pub fn subset<I, S>(&self, ids: I) -> Result<Manifest>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let known: HashSet<&str> = self.records.iter().map(|r| r.sample_id.as_str()).collect();
        let mut wanted = HashSet::new();
        for id in ids {
            let id = id.as_ref();
            match known.get(id) {
                Some(k) => {
                    wanted.insert(*k);
                }
                None => return Err(Error::UnknownId(id.to_string())),
            }
        }
        let records: Vec<SampleRecord> = self
            .records
            .iter()
            .filter(|r| wanted.contains(r.sample_id.as_str()))
            .cloned()
            .collect();
        let epoch_count = if records.is_empty() { 0 } else { self.epoch_count };
        Ok(Manifest {
            records,
            class_count: self.class_count,
            epoch_count,
        })
    }

    pub(crate) fn from_parts_unchecked(records: Vec<SampleRecord>, class_count: u32, epoch_count: usize) -> Manifest {
        Manifest {
            records,
            class_count,
            epoch_count,
        }
    }
}

/// Incremental validator shared by the constructors and the file readers.
struct Builder {
    declared_classes: Option<u32>,
    max_class: u32,
    epochs: Option<Option<usize>>,
    seen: HashSet<String>,
    records: Vec<SampleRecord>,
}

impl Builder {
    fn new(declared_classes: Option<u32>) -> Self {
        Builder {
            declared_classes,
            max_class: 0,
            epochs: None,
            seen: HashSet::new(),
            records: Vec::new(),
        }
    }

    fn push(&mut self, r: SampleRecord) -> std::result::Result<(), String> {
        r.check()?;
        if let Some(c) = self.declared_classes {
            let hi = r.identity.max(r.predicted_class);
            if hi > c {
                return Err(format!(
                    "class index {hi} exceeds class count {c} for `{}`",
                    r.sample_id
                ));
            }
        }
        let len = r.epoch_probs.as_ref().map(Vec::len);
        match self.epochs {
            None => self.epochs = Some(len),
            Some(expected) if expected != len => {
                return Err(format!(
                    "ragged epoch_probs for `{}`: expected {}, found {}",
                    r.sample_id,
                    describe_len(expected),
                    describe_len(len)
                ));
            }
            Some(_) => {}
        }
        if !self.seen.insert(r.sample_id.clone()) {
            return Err(format!("duplicate sample_id `{}`", r.sample_id));
        }
        self.max_class = self.max_class.max(r.identity).max(r.predicted_class);
        self.records.push(r);
        Ok(())
    }

    fn finish(self) -> std::result::Result<Manifest, String> {
        let epoch_count = self.epochs.flatten().unwrap_or(0);
        Ok(Manifest {
            records: self.records,
            class_count: self.declared_classes.unwrap_or(self.max_class),
            epoch_count,
        })
    }
}

fn describe_len(len: Option<usize>) -> String {
    match len {
        Some(n) => format!("{n} entries"),
        None => "no history".to_string(),
    }
}

pub fn read_manifest(path: &Path, format: Format) -> Result<Manifest> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_manifest_from(BufReader::new(file), format, None).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Reads a manifest from any reader. Errors carry the 1-based line number
/// of the offending record (the CSV header is line 1).
pub fn read_manifest_from<R: Read>(reader: R, format: Format, class_count: Option<u32>) -> Result<Manifest> {
    let mut builder = Builder::new(class_count);
    match format {
        Format::Jsonl => {
            for (i, line) in BufReader::new(reader).lines().enumerate() {
                let lineno = i + 1;
                let line = line.map_err(|e| Error::io("<input>", e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: SampleRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    line: lineno,
                    message: e.to_string(),
                })?;
                builder
                    .push(record)
                    .map_err(|message| Error::Parse { line: lineno, message })?;
            }
        }
        Format::Csv => {
            let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
            let headers = rdr.headers().map_err(|e| csv_error(1, e))?.clone();
            if headers.iter().ne(CSV_HEADER.iter().copied()) {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header `{}`", CSV_HEADER.join(",")),
                });
            }
            for row in rdr.records() {
                let row = row.map_err(|e| csv_error(0, e))?;
                let lineno = row.position().map_or(0, |p| p.line() as usize);
                let record = parse_csv_row(&row).map_err(|message| Error::Parse { line: lineno, message })?;
                builder
                    .push(record)
                    .map_err(|message| Error::Parse { line: lineno, message })?;
            }
        }
    }
    builder.finish().map_err(Error::InvalidManifest)
}

fn csv_error(fallback_line: usize, e: csv::Error) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    let message = e.to_string();
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<input>", io),
        _ => Error::Parse { line, message },
    }
}

fn parse_csv_row(row: &csv::StringRecord) -> std::result::Result<SampleRecord, String> {
    let field = |i: usize| row.get(i).ok_or_else(|| format!("missing column `{}`", CSV_HEADER[i]));
    let parse_num = |i: usize| -> std::result::Result<f64, String> {
        let raw = field(i)?;
        raw.trim()
            .parse::<f64>()
            .map_err(|_| format!("bad number `{raw}` in `{}`", CSV_HEADER[i]))
    };
    let parse_index = |i: usize| -> std::result::Result<u32, String> {
        let raw = field(i)?;
        raw.trim()
            .parse::<u32>()
            .map_err(|_| format!("bad index `{raw}` in `{}`", CSV_HEADER[i]))
    };
    let history = field(4)?.trim();
    let epoch_probs = if history.is_empty() {
        None
    } else {
        Some(
            history
                .split('|')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| format!("bad number `{v}` in `epoch_probs`"))
                })
                .collect::<std::result::Result<Vec<_>, _>>()?,
        )
    };
    Ok(SampleRecord {
        sample_id: field(0)?.to_string(),
        identity: parse_index(1)?,
        p: parse_num(2)?,
        predicted_class: parse_index(3)?,
        epoch_probs,
    })
}

pub fn write_manifest(manifest: &Manifest, path: &Path, format: Format) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_manifest_to(manifest, &mut out, format)
        .and_then(|_| out.flush().map_err(|e| Error::io(path, e)))
        .map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
}

pub fn write_manifest_to<W: Write>(manifest: &Manifest, out: W, format: Format) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<output>", e);
    match format {
        Format::Jsonl => {
            let mut out = out;
            for r in manifest.records() {
                serde_json::to_writer(&mut out, r).map_err(|e| io(e.into()))?;
                out.write_all(b"\n").map_err(io)?;
            }
            out.flush().map_err(io)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let csv_io = |e: csv::Error| match e.into_kind() {
                csv::ErrorKind::Io(e) => io(e),
                other => io(std::io::Error::other(format!("{other:?}"))),
            };
            w.write_record(CSV_HEADER).map_err(csv_io)?;
            for r in manifest.records() {
                let history = r
                    .epoch_probs
                    .as_ref()
                    .map(|h| h.iter().map(|v| format_sig9(*v)).collect::<Vec<_>>().join("|"))
                    .unwrap_or_default();
                w.write_record([
                    r.sample_id.clone(),
                    r.identity.to_string(),
                    format_sig9(r.p),
                    r.predicted_class.to_string(),
                    history,
                ])
                .map_err(csv_io)?;
            }
            w.flush().map_err(io)?;
        }
    }
    Ok(())
}

/// Rounds to 9 significant digits and prints the shortest form that parses
/// back to the rounded value.
pub fn format_sig9(x: f64) -> String {
    let rounded: f64 = format!("{x:.8e}").parse().unwrap_or(x);
    format!("{rounded:?}")
}

/// Per-identity outcome of a pruning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityStats {
    pub n_id: usize,
    pub kept: usize,
    /// Gap threshold used on the final scan; `None` for methods without one.
    pub effective_threshold: Option<f64>,
    pub retries: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    DiffProb,
    DynUnc,
    Random,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::DiffProb => "diffprob",
            Method::DynUnc => "dynunc",
            Method::Random => "random",
        })
    }
}

/// Kept set plus per-identity diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneResult {
    pub method: Method,
    /// Gap threshold for DiffProb, keep fraction for the baselines.
    pub requested_param: f64,
    pub kept_ids: BTreeSet<String>,
    pub per_identity: BTreeMap<u32, IdentityStats>,
}

impl PruneResult {
    pub fn kept_count(&self) -> usize {
        self.kept_ids.len()
    }

    /// Kept ids listed in manifest order.
    pub fn kept_in_order<'a>(&self, manifest: &'a Manifest) -> Vec<&'a str> {
        manifest
            .records()
            .iter()
            .filter(|r| self.kept_ids.contains(&r.sample_id))
            .map(|r| r.sample_id.as_str())
            .collect()
    }

    /// Checks that the result belongs to `manifest`: kept ids exist and the
    /// per-identity counts agree with the kept set.
    pub fn check_against(&self, manifest: &Manifest) -> Result<()> {
        let identity_of: HashMap<&str, u32> = manifest
            .records()
            .iter()
            .map(|r| (r.sample_id.as_str(), r.identity))
            .collect();
        let mut kept_per: BTreeMap<u32, usize> = BTreeMap::new();
        for id in &self.kept_ids {
            let identity = identity_of
                .get(id.as_str())
                .ok_or_else(|| Error::Mismatch(format!("kept id `{id}` not in manifest")))?;
            *kept_per.entry(*identity).or_default() += 1;
        }
        let groups = manifest.by_identity();
        if groups.len() != self.per_identity.len() {
            return Err(Error::Mismatch(format!(
                "manifest has {} identities, result has {}",
                groups.len(),
                self.per_identity.len()
            )));
        }
        for (identity, members) in &groups {
            let stats = self
                .per_identity
                .get(identity)
                .ok_or_else(|| Error::Mismatch(format!("identity {identity} missing from result")))?;
            let kept = kept_per.get(identity).copied().unwrap_or(0);
            if stats.n_id != members.len() || stats.kept != kept {
                return Err(Error::Mismatch(format!(
                    "identity {identity}: result says {}/{} kept, manifest gives {}/{}",
                    stats.kept,
                    stats.n_id,
                    kept,
                    members.len()
                )));
            }
        }
        Ok(())
    }
}

/// Reads a newline-delimited id list, skipping blank lines.
pub fn read_id_list(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            ids.push(trimmed.to_string());
        }
    }
    Ok(ids)
}

pub fn write_id_list<S: AsRef<str>>(path: &Path, ids: &[S]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for id in ids {
        writeln!(out, "{}", id.as_ref()).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
