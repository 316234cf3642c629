//! Synthetic weak-label corpora with known event times.
//!
//! Each clip comes from its own source recording: white noise with event
//! instances planted only inside the clip window, which sits at least
//! `margin_s` from either end of the source. Expanding a clip by up to
//! `2 * margin_s` therefore adds background only. Audio is never stored;
//! any span of a source is rendered from the recipe on demand, and the
//! background is generated in 1 s blocks so that every span of a source
//! renders the same samples.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{AudioRef, Corpus, EventVocabulary, SourceSpan, Split, WeakClip};
use crate::dsp::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::seed;

const SR: f64 = SAMPLE_RATE as f64;
const FADE_S: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub events: usize,
    pub clips: usize,
    pub clip_len_s: f64,
    /// Relative weights for 1, 2, ... events per clip.
    pub events_per_clip: Vec<f64>,
    pub event_duration_s: (f64, f64),
    /// Event level relative to the background.
    pub snr_db: (f64, f64),
    pub seed: u64,
    /// Train/val/eval fractions.
    pub split: (f64, f64, f64),
    /// Background-only padding on each side of the clip.
    pub margin_s: f64,
    /// Upper bound of extra random source length beyond clip + margins.
    pub extra_source_s: f64,
    pub noise_rms: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            events: 8,
            clips: 500,
            clip_len_s: 10.0,
            events_per_clip: vec![0.8, 0.2],
            event_duration_s: (1.0, 3.0),
            snr_db: (-5.0, 5.0),
            seed: 7,
            split: (0.6, 0.2, 0.2),
            margin_s: 25.0,
            extra_source_s: 60.0,
            noise_rms: 0.05,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.events == 0 || self.clips == 0 {
            return bad("synthetic corpus needs at least one event and one clip".into());
        }
        if !(self.clip_len_s > 0.0) {
            return bad(format!("clip length {} must be positive", self.clip_len_s));
        }
        let (lo, hi) = self.event_duration_s;
        if !(0.0 < lo && lo <= hi) {
            return bad(format!("event duration range ({lo}, {hi}) is invalid"));
        }
        if hi > self.clip_len_s {
            return bad(format!(
                "event duration {hi} s exceeds clip length {} s",
                self.clip_len_s
            ));
        }
        if self.events_per_clip.is_empty()
            || self.events_per_clip.len() > self.events
            || self.events_per_clip.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || self.events_per_clip.iter().sum::<f64>() <= 0.0
        {
            return bad(format!(
                "events_per_clip weights {:?} must be nonnegative, not all zero, and at most {} long",
                self.events_per_clip, self.events
            ));
        }
        if !(self.snr_db.0 <= self.snr_db.1 && self.snr_db.0.is_finite() && self.snr_db.1.is_finite()) {
            return bad(format!("snr range {:?} is invalid", self.snr_db));
        }
        let (a, b, c) = self.split;
        if a < 0.0 || b < 0.0 || c < 0.0 || ((a + b + c) - 1.0).abs() > 1e-9 {
            return bad(format!(
                "split fractions {:?} must be nonnegative and sum to 1",
                self.split
            ));
        }
        if !(self.margin_s >= 0.0 && self.extra_source_s >= 0.0 && self.noise_rms > 0.0) {
            return bad("margin, extra source length and noise level must be nonnegative (noise positive)".into());
        }
        Ok(())
    }

    fn split_sizes(&self) -> (usize, usize) {
        let train = (self.split.0 * self.clips as f64).round() as usize;
        let val = ((self.split.1 * self.clips as f64).round() as usize).min(self.clips - train);
        (train, val)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventTemplate {
    Tone,
    Chirp,
    BandNoise,
    HarmonicAm,
}

impl EventTemplate {
    const ALL: [EventTemplate; 4] = [Self::Tone, Self::Chirp, Self::BandNoise, Self::HarmonicAm];

    fn short_name(self) -> &'static str {
        match self {
            Self::Tone => "tone",
            Self::Chirp => "chirp",
            Self::BandNoise => "noise",
            Self::HarmonicAm => "hum",
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EventClass {
    pub name: String,
    pub template: EventTemplate,
    pub center_hz: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EventInstance {
    pub event: usize,
    /// Onset in source time.
    pub onset_s: f64,
    pub duration_s: f64,
    pub freq_hz: f64,
    /// Peak-normalized RMS amplitude.
    pub gain: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SourceRecipe {
    pub duration_s: f64,
    pub noise_seed: u64,
    pub events: Vec<EventInstance>,
}

/// Everything needed to render any span of any synthetic source.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthRecipe {
    pub spec: SynthSpec,
    pub classes: Vec<EventClass>,
    pub sources: BTreeMap<String, SourceRecipe>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub train: Corpus,
    pub val: Corpus,
    pub eval: Corpus,
    pub recipe: SynthRecipe,
}

fn ms(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn event_classes(n: usize) -> Vec<EventClass> {
    let (lo, hi) = (300.0f64, 8000.0f64);
    (0..n)
        .map(|e| {
            let frac = if n == 1 { 0.0 } else { e as f64 / (n - 1) as f64 };
            let template = EventTemplate::ALL[e % EventTemplate::ALL.len()];
            EventClass {
                name: format!("{}{e:02}", template.short_name()),
                template,
                center_hz: (lo.ln() + frac * (hi.ln() - lo.ln())).exp().round(),
            }
        })
        .collect()
}

/// Generate train/val/eval corpora and the recipe that renders their audio.
pub fn synthesize_corpus(spec: &SynthSpec) -> Result<SyntheticSet> {
    spec.validate()?;
    let classes = event_classes(spec.events);
    let vocabulary = EventVocabulary::new(classes.iter().map(|c| c.name.clone()).collect())?;
    let counts = WeightedIndex::new(&spec.events_per_clip)
        .map_err(|e| Error::InvalidArgument(format!("events_per_clip: {e}")))?;
    let (n_train, n_val) = spec.split_sizes();
    let mut sources = BTreeMap::new();
    let mut clips = Vec::with_capacity(spec.clips);
    for i in 0..spec.clips {
        let mut rng = seed::rng(spec.seed, i as u64);
        let source_id = format!("src{i:05}");
        let duration = ms(spec.clip_len_s + 2.0 * spec.margin_s + rng.random::<f64>() * spec.extra_source_s);
        let slack = duration - spec.clip_len_s - 2.0 * spec.margin_s;
        let start = ms(spec.margin_s + rng.random::<f64>() * slack.max(0.0));
        let span = SourceSpan::new(source_id.clone(), start, start + spec.clip_len_s, duration)?;

        let m = rng.sample(&counts) + 1;
        let mut chosen = sample(&mut rng, spec.events, m).into_vec();
        chosen.sort_unstable();
        let mut truth: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
        let mut events = Vec::with_capacity(m);
        for e in chosen {
            let (lo, hi) = spec.event_duration_s;
            let d = ms(lo + rng.random::<f64>() * (hi - lo)).clamp(lo, hi);
            let rel = ms(rng.random::<f64>() * (spec.clip_len_s - d)).min(spec.clip_len_s - d);
            let jitter = 1.0 + 0.06 * (rng.random::<f64>() - 0.5);
            let snr = spec.snr_db.0 + rng.random::<f64>() * (spec.snr_db.1 - spec.snr_db.0);
            events.push(EventInstance {
                event: e,
                onset_s: start + rel,
                duration_s: d,
                freq_hz: classes[e].center_hz * jitter,
                gain: spec.noise_rms * 10f64.powf(snr / 20.0),
                seed: rng.random(),
            });
            truth.entry(e).or_default().push((rel, rel + d));
        }
        sources.insert(
            source_id.clone(),
            SourceRecipe {
                duration_s: duration,
                noise_seed: rng.random(),
                events,
            },
        );
        clips.push(WeakClip {
            clip_id: format!("clip{i:05}"),
            span,
            labels: truth.keys().copied().collect::<BTreeSet<_>>(),
            audio: AudioRef::Synth(source_id),
            truth: Some(truth),
        });
    }
    let eval_clips = clips.split_off(n_train + n_val);
    let val_clips = clips.split_off(n_train);
    Ok(SyntheticSet {
        train: Corpus::new(vocabulary.clone(), clips, Split::Train)?,
        val: Corpus::new(vocabulary.clone(), val_clips, Split::Val)?,
        eval: Corpus::new(vocabulary, eval_clips, Split::Eval)?,
        recipe: SynthRecipe {
            spec: spec.clone(),
            classes,
            sources,
        },
    })
}

fn background_block(noise_seed: u64, block: u64, rms: f64) -> Vec<f32> {
    let mut rng = seed::rng(noise_seed, block);
    (0..SAMPLE_RATE)
        .map(|_| (rms * rng.sample::<f64, _>(StandardNormal)) as f32)
        .collect()
}

/// Two-pole resonator centred on `freq` with bandwidth `freq / q`.
fn resonate(x: &mut [f64], freq: f64, q: f64) {
    let w = 2.0 * PI * freq / SR;
    let r = (-PI * freq / q / SR).exp();
    let (a1, a2) = (-2.0 * r * w.cos(), r * r);
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y = *v - a1 * y1 - a2 * y2;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

fn render_instance(class: &EventClass, inst: &EventInstance) -> Vec<f64> {
    let n = (inst.duration_s * SR).round() as usize;
    let f = inst.freq_hz;
    let d = inst.duration_s;
    let nyquist = 0.45 * SR;
    let mut x: Vec<f64> = match class.template {
        EventTemplate::Tone => (0..n).map(|i| (2.0 * PI * f * i as f64 / SR).sin()).collect(),
        EventTemplate::Chirp => {
            let (f0, f1) = (f / 2f64.sqrt(), (f * 2f64.sqrt()).min(nyquist));
            (0..n)
                .map(|i| {
                    let t = i as f64 / SR;
                    (2.0 * PI * (f0 * t + (f1 - f0) * t * t / (2.0 * d))).sin()
                })
                .collect()
        }
        EventTemplate::BandNoise => {
            let mut rng = seed::rng(inst.seed, 0);
            let mut x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            resonate(&mut x, f, 4.0);
            x
        }
        EventTemplate::HarmonicAm => (0..n)
            .map(|i| {
                let t = i as f64 / SR;
                let tone: f64 = (1..=4)
                    .filter(|&h| h as f64 * f < nyquist)
                    .map(|h| (2.0 * PI * h as f64 * f * t).sin() / h as f64)
                    .sum();
                tone * (0.55 + 0.45 * (2.0 * PI * 6.0 * t).sin())
            })
            .collect(),
    };
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
    let fade = ((FADE_S * SR) as usize).min(n / 2).max(1);
    for (i, v) in x.iter_mut().enumerate() {
        let edge = i.min(n - 1 - i);
        let env = if edge < fade {
            0.5 - 0.5 * (PI * edge as f64 / fade as f64).cos()
        } else {
            1.0
        };
        *v *= env * inst.gain / rms.max(1e-12);
    }
    x
}

impl SynthRecipe {
    /// Render `[start_s, end_s)` of a source. The sample count depends only
    /// on the span length, so equal-length clips yield equal-length audio.
    pub fn render_span(&self, source_id: &str, start_s: f64, end_s: f64) -> Result<Waveform> {
        let src = self
            .sources
            .get(source_id)
            .ok_or_else(|| Error::InvalidArgument(format!("recipe has no source {source_id:?}")))?;
        if !(0.0 <= start_s && start_s < end_s && end_s <= src.duration_s + 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "span ({start_s}, {end_s}) outside source {source_id:?} of {} s",
                src.duration_s
            )));
        }
        let s0 = (start_s * SR).round() as usize;
        let n = ((end_s - start_s) * SR).round() as usize;
        let s1 = s0 + n;
        let block = SAMPLE_RATE as usize;
        let mut out = Vec::with_capacity(n);
        for b in s0 / block..=(s1.saturating_sub(1)) / block {
            let bg = background_block(src.noise_seed, b as u64, self.spec.noise_rms);
            let lo = s0.max(b * block) - b * block;
            let hi = s1.min((b + 1) * block) - b * block;
            out.extend_from_slice(&bg[lo..hi]);
        }
        for inst in &src.events {
            let o = (inst.onset_s * SR).round() as usize;
            let len = (inst.duration_s * SR).round() as usize;
            if o >= s1 || o + len <= s0 {
                continue;
            }
            let x = render_instance(&self.classes[inst.event], inst);
            for i in o.max(s0)..(o + len).min(s1) {
                out[i - s0] += x[i - o] as f32;
            }
        }
        Waveform::new(out, SAMPLE_RATE)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
