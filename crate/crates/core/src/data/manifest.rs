//! Comma-separated clip manifests and truth sidecars.
//!
//! Manifest columns: `clip_id,source_id,start_s,end_s,source_duration_s,labels,audio_path`,
//! with `labels` a `;`-separated list of event names. The truth sidecar has
//! one `clip_id,event,start_s,end_s` row per planted occurrence, times
//! relative to the clip start.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use super::{AudioRef, Corpus, EventVocabulary, SourceSpan, Split, WeakClip};
use crate::error::{Error, IoContext, Result};

pub const MANIFEST_HEADER: [&str; 7] = [
    "clip_id",
    "source_id",
    "start_s",
    "end_s",
    "source_duration_s",
    "labels",
    "audio_path",
];

const TRUTH_HEADER: [&str; 4] = ["clip_id", "event", "start_s", "end_s"];

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        msg: msg.into(),
    }
}

fn reader(path: &Path, header: &[&str]) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).ctx(|| format!("opening {}", path.display()))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let found = rdr.headers()?.clone();
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(parse_err(
            path,
            1,
            format!(
                "expected header {:?}, found {:?}",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(rdr)
}

fn number(path: &Path, line: usize, column: &str, field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_err(path, line, format!("{column}: not a finite number: {field:?}")))
}

/// Parse a manifest, resolving label names against `vocabulary`.
pub fn load_manifest(path: &Path, vocabulary: &EventVocabulary, split: Split) -> Result<Corpus> {
    let mut rdr = reader(path, &MANIFEST_HEADER)?;
    let mut clips = Vec::new();
    let mut seen = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != MANIFEST_HEADER.len() {
            return Err(parse_err(path, line, format!("expected 7 fields, found {}", rec.len())));
        }
        let clip_id = rec[0].trim().to_owned();
        if clip_id.is_empty() {
            return Err(parse_err(path, line, "empty clip_id"));
        }
        if !seen.insert(clip_id.clone()) {
            return Err(Error::DuplicateClip(clip_id));
        }
        let start = number(path, line, "start_s", &rec[2])?;
        let end = number(path, line, "end_s", &rec[3])?;
        let dur = number(path, line, "source_duration_s", &rec[4])?;
        let span = SourceSpan::new(rec[1].trim(), start, end, dur).map_err(|e| parse_err(path, line, e.to_string()))?;
        let mut labels = BTreeSet::new();
        for name in rec[5].split(';').map(str::trim).filter(|n| !n.is_empty()) {
            let idx = vocabulary.index_of(name).ok_or_else(|| Error::UnknownEvent {
                name: name.to_owned(),
                path: path.to_owned(),
                line,
            })?;
            labels.insert(idx);
        }
        clips.push(WeakClip {
            clip_id,
            span,
            labels,
            audio: AudioRef::parse(rec[6].trim()),
            truth: None,
        });
    }
    Corpus::new(vocabulary.clone(), clips, split)
}

pub fn write_manifest(path: &Path, corpus: &Corpus) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(MANIFEST_HEADER)?;
    for c in &corpus.clips {
        let labels: Vec<&str> = c.labels.iter().map(|&l| corpus.vocabulary.name(l)).collect();
        w.write_record([
            c.clip_id.clone(),
            c.span.source_id.clone(),
            c.span.start_s.to_string(),
            c.span.end_s.to_string(),
            c.span.source_duration.to_string(),
            labels.join(";"),
            c.audio.to_field(),
        ])?;
    }
    w.flush().ctx(|| format!("writing {}", path.display()))
}

/// Attach truth intervals from a sidecar. Every clip in the corpus receives
/// a (possibly empty) truth map; rows for unknown clips are rejected.
pub fn load_truth(path: &Path, corpus: &mut Corpus) -> Result<()> {
    let mut rdr = reader(path, &TRUTH_HEADER)?;
    let index: HashMap<String, usize> = corpus
        .clips
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clip_id.clone(), i))
        .collect();
    let mut truth: Vec<BTreeMap<usize, Vec<(f64, f64)>>> = vec![BTreeMap::new(); corpus.clips.len()];
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != TRUTH_HEADER.len() {
            return Err(parse_err(path, line, format!("expected 4 fields, found {}", rec.len())));
        }
        let &ci = index
            .get(rec[0].trim())
            .ok_or_else(|| parse_err(path, line, format!("unknown clip id {:?}", &rec[0])))?;
        let name = rec[1].trim();
        let e = corpus.vocabulary.index_of(name).ok_or_else(|| Error::UnknownEvent {
            name: name.to_owned(),
            path: path.to_owned(),
            line,
        })?;
        let s = number(path, line, "start_s", &rec[2])?;
        let t = number(path, line, "end_s", &rec[3])?;
        truth[ci].entry(e).or_default().push((s, t));
    }
    for (clip, t) in corpus.clips.iter_mut().zip(truth) {
        clip.truth = Some(t);
    }
    corpus.validate()
}

pub fn write_truth(path: &Path, corpus: &Corpus) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(TRUTH_HEADER)?;
    for c in &corpus.clips {
        let Some(truth) = &c.truth else { continue };
        for (&e, ivs) in truth {
            for &(s, t) in ivs {
                w.write_record([
                    c.clip_id.as_str(),
                    corpus.vocabulary.name(e),
                    &s.to_string(),
                    &t.to_string(),
                ])?;
            }
        }
    }
    w.flush().ctx(|| format!("writing {}", path.display()))
}
