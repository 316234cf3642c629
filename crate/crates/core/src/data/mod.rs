//! Weak-label corpora and the label-noise procedures.

mod audio;
mod corpus;
mod corrupt;
mod density;
mod manifest;
mod synth;
mod vocab;
mod wild;

pub use audio::{AudioResolver, Featurizer};
pub use corpus::{AudioRef, Corpus, SourceSpan, Split, TruthIntervals, WeakClip};
pub use corrupt::{apply_plan, corrupt_labels, CorruptionPlan, EventFlips};
pub use density::{density_report, expand_spans, label_density, union_length, DensityEntry, DensityReport};
pub use manifest::{load_manifest, load_truth, write_manifest, write_truth, MANIFEST_HEADER};
pub use synth::{synthesize_corpus, EventInstance, EventTemplate, SourceRecipe, SynthRecipe, SynthSpec, SyntheticSet};
pub use vocab::EventVocabulary;
pub use wild::simulate_wild;
