//! Stratified label corruption: per event, an equal number of positives
//! are demoted and negatives promoted, so positive counts are unchanged.

use std::collections::HashMap;

use rand::seq::index::sample;

use super::Corpus;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EventFlips {
    pub event: String,
    /// Clips whose label was removed.
    pub demoted: Vec<String>,
    /// Clips that gained the label.
    pub promoted: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CorruptionPlan {
    pub rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub events: Vec<EventFlips>,
}

impl CorruptionPlan {
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn flip_count(&self) -> usize {
        self.events.iter().map(|e| e.demoted.len() + e.promoted.len()).sum()
    }
}

/// Corrupt `rate` percent of each event's labels.
pub fn corrupt_labels(corpus: &Corpus, rate: f64, seed: u64) -> Result<(Corpus, CorruptionPlan)> {
    if !(0.0..=100.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "corruption rate {rate} outside [0, 100]"
        )));
    }
    let mut plan = CorruptionPlan {
        rate,
        seed,
        events: Vec::new(),
    };
    for e in 0..corpus.class_count() {
        let (pos, neg): (Vec<usize>, Vec<usize>) =
            (0..corpus.len()).partition(|&i| corpus.clips[i].labels.contains(&e));
        let k = (rate / 100.0 * pos.len() as f64 / 2.0).round() as usize;
        if k == 0 {
            continue;
        }
        if k > neg.len() {
            return Err(Error::NotEnoughNegatives {
                event: corpus.vocabulary.name(e).to_owned(),
                needed: k,
                available: neg.len(),
            });
        }
        let mut rng = seed::rng(seed, e as u64);
        let pick = |from: &[usize], rng: &mut _| {
            let mut idx = sample(rng, from.len(), k).into_vec();
            idx.sort_unstable();
            idx.into_iter()
                .map(|i| corpus.clips[from[i]].clip_id.clone())
                .collect::<Vec<_>>()
        };
        let demoted = pick(&pos, &mut rng);
        let promoted = pick(&neg, &mut rng);
        plan.events.push(EventFlips {
            event: corpus.vocabulary.name(e).to_owned(),
            demoted,
            promoted,
        });
    }
    let out = apply_plan(corpus, &plan)?;
    Ok((out, plan))
}

/// Replay a recorded plan against the original corpus.
pub fn apply_plan(corpus: &Corpus, plan: &CorruptionPlan) -> Result<Corpus> {
    let index: HashMap<&str, usize> = corpus
        .clips
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clip_id.as_str(), i))
        .collect();
    let mut out = corpus.clone();
    for flips in &plan.events {
        let e = corpus
            .vocabulary
            .index_of(&flips.event)
            .ok_or_else(|| Error::InvalidArgument(format!("plan names unknown event {:?}", flips.event)))?;
        if flips.demoted.len() != flips.promoted.len() {
            return Err(Error::InvalidArgument(format!(
                "plan for {:?} demotes {} but promotes {}",
                flips.event,
                flips.demoted.len(),
                flips.promoted.len()
            )));
        }
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("plan names unknown clip {id:?}")))
        };
        for id in &flips.demoted {
            let i = lookup(id)?;
            if !corpus.clips[i].labels.contains(&e) || !out.clips[i].labels.remove(&e) {
                return Err(Error::InvalidArgument(format!(
                    "plan demotes {:?} on {id:?}, which is not an original positive",
                    flips.event
                )));
            }
        }
        for id in &flips.promoted {
            let i = lookup(id)?;
            if corpus.clips[i].labels.contains(&e) || !out.clips[i].labels.insert(e) {
                return Err(Error::InvalidArgument(format!(
                    "plan promotes {:?} on {id:?}, which is not an original negative",
                    flips.event
                )));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::data::{AudioRef, EventVocabulary, SourceSpan, Split, WeakClip};
    use proptest::prelude::*;

    fn corpus(labels: Vec<BTreeSet<usize>>, classes: usize) -> Corpus {
        let v = EventVocabulary::new((0..classes).map(|i| format!("e{i}")).collect()).unwrap();
        let clips = labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| WeakClip {
                clip_id: format!("c{i:03}"),
                span: SourceSpan::new("s", 0.0, 10.0, 10.0).unwrap(),
                labels: l,
                audio: AudioRef::None,
                truth: None,
            })
            .collect();
        Corpus::new(v, clips, Split::Train).unwrap()
    }

    #[test]
    fn zero_rate_is_identity() {
        let c = corpus((0..20).map(|i| BTreeSet::from([i % 3])).collect(), 3);
        let (out, plan) = corrupt_labels(&c, 0.0, 1).unwrap();
        assert_eq!(out, c);
        assert!(plan.events.is_empty());
    }

    #[test]
    fn forty_positives_at_ten_percent() {
        let c = corpus(
            (0..100)
                .map(|i| if i < 40 { BTreeSet::from([0]) } else { BTreeSet::new() })
                .collect(),
            1,
        );
        let (out, plan) = corrupt_labels(&c, 10.0, 5).unwrap();
        assert_eq!(plan.events[0].demoted.len(), 2);
        assert_eq!(plan.events[0].promoted.len(), 2);
        assert_eq!(out.positive_counts(), vec![40]);
    }

    #[test]
    fn too_few_negatives() {
        let c = corpus(
            (0..10)
                .map(|i| if i < 9 { BTreeSet::from([0]) } else { BTreeSet::new() })
                .collect(),
            1,
        );
        match corrupt_labels(&c, 100.0, 0).unwrap_err() {
            Error::NotEnoughNegatives {
                event,
                needed,
                available,
            } => {
                assert_eq!((event.as_str(), needed, available), ("e0", 5, 1));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn plan_toml_round_trip() {
        let c = corpus((0..30).map(|i| BTreeSet::from([i % 2])).collect(), 2);
        let (_, plan) = corrupt_labels(&c, 30.0, 9).unwrap();
        assert_eq!(CorruptionPlan::from_toml(&plan.to_toml().unwrap()).unwrap(), plan);
    }

    #[test]
    fn forged_plan_rejected() {
        let c = corpus(vec![BTreeSet::from([0]), BTreeSet::new()], 1);
        let plan = CorruptionPlan {
            rate: 50.0,
            seed: 0,
            events: vec![EventFlips {
                event: "e0".into(),
                demoted: vec!["c001".into()],
                promoted: vec!["c000".into()],
            }],
        };
        assert!(apply_plan(&c, &plan).is_err());
    }

    fn labels_strategy() -> impl Strategy<Value = (Vec<BTreeSet<usize>>, usize)> {
        (1usize..5).prop_flat_map(|classes| {
            let clip = prop::collection::btree_set(0..classes, 0..=classes.min(2));
            (prop::collection::vec(clip, 10..60), Just(classes))
        })
    }

    proptest! {
        #[test]
        fn counts_preserved_and_plan_replays((labels, classes) in labels_strategy(), r in 0.0f64..=100.0, seed: u64) {
            let c = corpus(labels, classes);
            let Ok((out, plan)) = corrupt_labels(&c, r, seed) else { return Ok(()) };
            prop_assert_eq!(out.positive_counts(), c.positive_counts());
            let ids = |c: &Corpus| c.clips.iter().map(|x| x.clip_id.clone()).collect::<Vec<_>>();
            prop_assert_eq!(ids(&out), ids(&c));
            prop_assert_eq!(&apply_plan(&c, &plan).unwrap(), &out);
            for (e, &p) in c.positive_counts().iter().enumerate() {
                let flips = plan.events.iter().find(|f| f.event == c.vocabulary.name(e))
                    .map_or(0, |f| f.demoted.len() + f.promoted.len());
                prop_assert!((flips as f64 - r / 100.0 * p as f64).abs() <= 1.0);
            }
            prop_assert_eq!(corrupt_labels(&c, r, seed).unwrap().1, plan);
        }
    }
}
