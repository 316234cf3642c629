//! Retrieval-style labeling: each event labels only the clips "retrieved"
//! for it, a fixed share of which genuinely contain the event.

use std::collections::BTreeSet;

use rand::seq::index::sample;

use super::Corpus;
use crate::error::{Error, Result};
use crate::seed;

/// Label each event on `top_k` clips, `round(precision * top_k)` of them true
/// positives. Only retrieved clips are kept, in their original order, each
/// labeled with exactly the events it was retrieved for. Truth intervals
/// are kept for evaluation.
pub fn simulate_wild(truth: &Corpus, precision: f64, top_k: usize, seed: u64) -> Result<Corpus> {
    if !(0.0..=1.0).contains(&precision) {
        return Err(Error::InvalidArgument(format!(
            "retrieval precision {precision} outside [0, 1]"
        )));
    }
    if top_k == 0 {
        return Err(Error::InvalidArgument("top_k must be positive".into()));
    }
    let tp = (precision * top_k as f64).round() as usize;
    let fp = top_k - tp;
    let mut retrieved: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); truth.len()];
    for e in 0..truth.class_count() {
        let mut has = Vec::new();
        let mut lacks = Vec::new();
        for (i, clip) in truth.clips.iter().enumerate() {
            let t = clip
                .truth
                .as_ref()
                .ok_or_else(|| Error::NoGroundTruth(clip.clip_id.clone()))?;
            if t.get(&e).is_some_and(|ivs| !ivs.is_empty()) {
                has.push(i);
            } else {
                lacks.push(i);
            }
        }
        if tp > has.len() || fp > lacks.len() {
            return Err(Error::InvalidArgument(format!(
                "top_k {top_k} exceeds available clips for event {:?}: need {tp} containing it (have {}) and {fp} without (have {})",
                truth.vocabulary.name(e),
                has.len(),
                lacks.len()
            )));
        }
        let mut rng = seed::rng(seed, e as u64);
        for i in sample(&mut rng, has.len(), tp) {
            retrieved[has[i]].insert(e);
        }
        for i in sample(&mut rng, lacks.len(), fp) {
            retrieved[lacks[i]].insert(e);
        }
    }
    let clips = truth
        .clips
        .iter()
        .zip(retrieved)
        .filter(|(_, r)| !r.is_empty())
        .map(|(c, r)| {
            let mut c = c.clone();
            c.labels = r;
            c
        })
        .collect();
    Corpus::new(truth.vocabulary.clone(), clips, truth.split)
}
