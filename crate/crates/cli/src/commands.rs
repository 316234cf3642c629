use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use walnet::autodiff::{operator_grad_checks, Pooling};
use walnet::data::{
    apply_plan, corrupt_labels, density_report, expand_spans, load_manifest, load_truth, simulate_wild,
    synthesize_corpus, write_manifest, write_truth, AudioResolver, Corpus, CorruptionPlan, EventVocabulary, Featurizer,
    Split, SynthRecipe, SynthSpec,
};
use walnet::dsp::{write_wav, LogmelSpectrogram};
use walnet::model::{load_checkpoint, localize_segments, model_grad_check, save_checkpoint, Model, ModelConfig};
use walnet::train::{
    evaluate, history_summary, metrics_summary, train, write_history_csv, write_metrics_csv, Dataset, SelectionMetric,
    TrainConfig,
};

use crate::config::{resolve_seed, ExperimentConfig};
use crate::{Command, ManifestArgs, MetricArg, PoolingArg};

/// A manifest with its vocabulary, optional truth and audio source.
struct Input {
    corpus: Corpus,
    resolver: AudioResolver,
}

fn sibling(manifest: &Path, name: &str) -> PathBuf {
    manifest.parent().unwrap_or(Path::new(".")).join(name)
}

fn truth_path(manifest: &Path) -> PathBuf {
    let stem = manifest
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    sibling(manifest, &format!("{stem}_truth.csv"))
}

fn load_input(args: &ManifestArgs, cfg: &ExperimentConfig, split: Split) -> Result<Input> {
    let vocab_path = args
        .vocab
        .clone()
        .or_else(|| cfg.paths.vocabulary.clone())
        .unwrap_or_else(|| sibling(&args.manifest, "vocab.txt"));
    let vocab = EventVocabulary::load(&vocab_path).with_context(|| format!("vocabulary {}", vocab_path.display()))?;
    let mut corpus = load_manifest(&args.manifest, &vocab, split)?;
    let truth = args
        .truth
        .clone()
        .or_else(|| Some(truth_path(&args.manifest)).filter(|p| p.exists()));
    if let Some(t) = truth {
        load_truth(&t, &mut corpus)?;
    }
    let recipe_path = args
        .recipe
        .clone()
        .or_else(|| cfg.paths.recipe.clone())
        .or_else(|| Some(sibling(&args.manifest, "recipe.json")).filter(|p| p.exists()));
    let recipe = recipe_path
        .map(|p| -> Result<SynthRecipe> {
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            Ok(SynthRecipe::from_json(&text)?)
        })
        .transpose()?;
    let base = args.manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok(Input {
        corpus,
        resolver: AudioResolver::new(base, recipe),
    })
}

fn featurizer(input: &Input, cache: Option<PathBuf>, jobs: usize) -> Featurizer {
    let f = Featurizer::new(input.resolver.clone()).with_jobs(jobs);
    match cache {
        Some(dir) => f.with_cache(dir),
        None => f,
    }
}

/// Manifest plus, when the corpus carries truth, its sidecar.
fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    write_manifest(path, corpus)?;
    if corpus.clips.iter().any(|c| c.truth.is_some()) {
        write_truth(&truth_path(path), corpus)?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth {
            events,
            clips,
            len,
            snr_db,
            seed,
            out,
            write_wav: wav,
            config,
        } => {
            let cfg = ExperimentConfig::load_opt(config.as_deref())?;
            let s = &cfg.synth;
            let mut spec = SynthSpec {
                seed: resolve_seed(seed, None, cfg.seed)?,
                ..SynthSpec::default()
            };
            if let Some(v) = events.or(s.events) {
                spec.events = v;
            }
            if let Some(v) = clips.or(s.clips) {
                spec.clips = v;
            }
            if let Some(v) = len.or(s.clip_len_s) {
                spec.clip_len_s = v;
            }
            if let Some(v) = &s.events_per_clip {
                spec.events_per_clip = v.clone();
            }
            if let Some(v) = s.event_duration_s {
                spec.event_duration_s = v;
            }
            if let Some(v) = snr_db.map(|v| (v[0], v[1])).or(s.snr_db) {
                spec.snr_db = v;
            }
            let set = synthesize_corpus(&spec)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            set.train.vocabulary.save(&out.join("vocab.txt"))?;
            write_text(&out.join("recipe.json"), &set.recipe.to_json()?)?;
            for (name, c) in [("train", &set.train), ("val", &set.val), ("eval", &set.eval)] {
                write_corpus(&out.join(format!("{name}.csv")), c)?;
            }
            if wav {
                let dir = out.join("audio");
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                for c in set.train.clips.iter().chain(&set.val.clips).chain(&set.eval.clips) {
                    let w = set
                        .recipe
                        .render_span(&c.span.source_id, c.span.start_s, c.span.end_s)?;
                    write_wav(&dir.join(format!("{}.wav", c.clip_id)), &w)?;
                }
            }
            println!(
                "wrote {} train / {} val / {} eval clips to {}",
                set.train.len(),
                set.val.len(),
                set.eval.len(),
                out.display()
            );
        }
        Command::Featurize {
            input,
            feature_cache,
            jobs,
            config,
        } => {
            let cfg = ExperimentConfig::load_opt(config.as_deref())?;
            let inp = load_input(&input, &cfg, Split::Train)?;
            let feats = featurizer(&inp, Some(feature_cache.clone()), jobs).featurize(&inp.corpus)?;
            let frames: usize = feats.iter().map(LogmelSpectrogram::frames).sum();
            println!(
                "cached {} clips ({frames} frames) in {}",
                feats.len(),
                feature_cache.display()
            );
        }
        Command::Train {
            input,
            val,
            config,
            out,
            seed,
            epochs,
            lr,
            batch_size,
            pooling,
            selection_metric,
            feature_cache,
            jobs,
        } => {
            let cfg = ExperimentConfig::load_opt(config.as_deref())?;
            let t = &cfg.train;
            let defaults = TrainConfig::default();
            let tc = TrainConfig {
                epochs: epochs.or(t.epochs).unwrap_or(defaults.epochs),
                lr: lr.or(t.lr).unwrap_or(defaults.lr),
                batch_size: batch_size.or(t.batch_size).unwrap_or(defaults.batch_size),
                pooling: pooling
                    .map(|p| match p {
                        PoolingArg::Avg => Pooling::Avg,
                        PoolingArg::Max => Pooling::Max,
                    })
                    .or(t.pooling)
                    .unwrap_or(defaults.pooling),
                seed: resolve_seed(seed, t.seed, cfg.seed)?,
                selection_metric: selection_metric
                    .map(|m| match m {
                        MetricArg::Map => SelectionMetric::Map,
                        MetricArg::Mauc => SelectionMetric::Mauc,
                    })
                    .or(t.selection_metric)
                    .unwrap_or(defaults.selection_metric),
            };
            let cache = feature_cache.or_else(|| cfg.paths.feature_cache.clone());
            let tr_in = load_input(&input, &cfg, Split::Train)?;
            let val_args = ManifestArgs {
                manifest: val,
                truth: None,
                ..input.clone()
            };
            let va_in = load_input(&val_args, &cfg, Split::Val)?;
            ensure!(
                tr_in.corpus.vocabulary == va_in.corpus.vocabulary,
                "training and validation vocabularies differ"
            );
            let tr = Dataset::from_corpus(&tr_in.corpus, &featurizer(&tr_in, cache.clone(), jobs))?;
            let va = Dataset::from_corpus(&va_in.corpus, &featurizer(&va_in, cache, jobs))?;
            let mut mc: ModelConfig = cfg.model_config(tr.class_count());
            mc.pooling = tc.pooling;
            let model = Model::build(mc.clone(), tc.seed)?;
            let outcome = train(model, &tr, &va, &tc)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            save_checkpoint(&out.join("best.ckpt"), &outcome.model, Some(&outcome.adam))?;
            write_history_csv(&out.join("history.csv"), &outcome.history)?;
            write_text(&out.join("history.txt"), &history_summary(&outcome.history)?)?;
            write_text(
                &out.join("config.toml"),
                &format!("[model]\n{}\n[train]\n{}", mc.to_toml()?, toml::to_string(&tc)?),
            )?;
            println!(
                "selected epoch {} of {}; checkpoint {}",
                outcome.history.selected_epoch,
                tc.epochs,
                out.join("best.ckpt").display()
            );
        }
        Command::Evaluate {
            model,
            input,
            out,
            feature_cache,
            jobs,
            config,
        } => {
            let cfg = ExperimentConfig::load_opt(config.as_deref())?;
            let ck = load_checkpoint(&model)?;
            let inp = load_input(&input, &cfg, Split::Eval)?;
            let cache = feature_cache.or_else(|| cfg.paths.feature_cache.clone());
            let data = Dataset::from_corpus(&inp.corpus, &featurizer(&inp, cache, jobs))?;
            let report = evaluate(&ck.model, &data, jobs)?;
            let summary = metrics_summary(&report)?;
            if let Some(path) = out {
                write_metrics_csv(&path, &report)?;
                write_text(&path.with_extension("txt"), &summary)?;
            }
            print!("{summary}");
        }
        Command::Expand {
            input,
            target_len,
            out,
            density,
            config,
        } => {
            let cfg = ExperimentConfig::load_opt(config.as_deref())?;
            let target = target_len
                .or(cfg.noise.target_len)
                .context("--target-len is required (or noise.target_len in the config)")?;
            let inp = load_input(&input, &cfg, Split::Train)?;
            let expanded = expand_spans(&inp.corpus, target);
            write_corpus(&out, &expanded)?;
            if let Some(path) = density {
                let report = density_report(&expanded)?;
                let mut text = String::from("clip_id,event,ld,ldn\n");
                for e in &report.entries {
                    text += &format!(
                        "{},{},{},{}\n",
                        e.clip_id,
                        expanded.vocabulary.name(e.event),
                        e.ld,
                        e.ldn
                    );
                }
                write_text(&path, &text)?;
            }
            println!("expanded {} clips to {target} s", expanded.len());
        }
        Command::Corrupt {
            input,
            r,
            seed,
            out,
            plan,
            apply,
            config,
        } => {
            let cfg = ExperimentConfig::load_opt(config.as_deref())?;
            let inp = load_input(&input, &cfg, Split::Train)?;
            let (corrupted, plan_used) = match apply {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    let plan = CorruptionPlan::from_toml(&text)?;
                    (apply_plan(&inp.corpus, &plan)?, plan)
                }
                None => {
                    let rate = r
                        .or(cfg.noise.r)
                        .context("--r is required (or noise.r in the config)")?;
                    let seed = resolve_seed(seed, cfg.noise.seed, cfg.seed)?;
                    corrupt_labels(&inp.corpus, rate, seed)?
                }
            };
            write_corpus(&out, &corrupted)?;
            if let Some(p) = plan {
                write_text(&p, &plan_used.to_toml()?)?;
            }
            println!("r = {}%: {} label flips", plan_used.rate, plan_used.flip_count());
        }
        Command::Wild {
            input,
            precision,
            top_k,
            seed,
            out,
            config,
        } => {
            let cfg = ExperimentConfig::load_opt(config.as_deref())?;
            let inp = load_input(&input, &cfg, Split::Train)?;
            let precision = precision
                .or(cfg.noise.retrieval_precision)
                .context("--precision is required (or noise.retrieval_precision in the config)")?;
            let top_k = top_k
                .or(cfg.noise.top_k)
                .context("--top-k is required (or noise.top_k in the config)")?;
            let seed = resolve_seed(seed, cfg.noise.seed, cfg.seed)?;
            let wild = simulate_wild(&inp.corpus, precision, top_k, seed)?;
            write_corpus(&out, &wild)?;
            println!("{} of {} clips retrieved", wild.len(), inp.corpus.len());
        }
        Command::Localize {
            model,
            input,
            threshold,
            out,
            feature_cache,
            config,
        } => {
            let cfg = ExperimentConfig::load_opt(config.as_deref())?;
            let ck = load_checkpoint(&model)?;
            let inp = load_input(&input, &cfg, Split::Eval)?;
            ensure!(
                ck.model.class_count() == inp.corpus.class_count(),
                "model has {} classes, vocabulary has {}",
                ck.model.class_count(),
                inp.corpus.class_count()
            );
            let cache = feature_cache.or_else(|| cfg.paths.feature_cache.clone());
            let data = Dataset::from_corpus(&inp.corpus, &featurizer(&inp, cache, 1))?;
            let mut text = String::from("clip_id,event,start_s,end_s\n");
            for (id, x) in data.clip_ids.iter().zip(&data.features) {
                let (seg, _) = ck.model.predict(x)?;
                for l in localize_segments(&seg, threshold, x.frame_hop_seconds)? {
                    text += &format!(
                        "{id},{},{},{}\n",
                        inp.corpus.vocabulary.name(l.event),
                        l.start_s,
                        l.end_s
                    );
                }
            }
            match out {
                Some(p) => write_text(&p, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Gradcheck {
            seed,
            repeats,
            full_width,
        } => gradcheck(seed, repeats, full_width)?,
    }
    Ok(())
}

const OPERATOR_TOL: f64 = 1e-4;
const NETWORK_TOL: f64 = 1e-3;

fn random_inputs(n: usize, frames: usize, seed: u64) -> Result<Vec<LogmelSpectrogram>> {
    // A fixed LCG keeps the CLI free of extra RNG plumbing.
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            let values = (0..frames * 128)
                .map(|_| {
                    state = state
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    ((state >> 40) as f32 / (1u64 << 24) as f32) * 4.0 - 2.0
                })
                .collect();
            Ok(LogmelSpectrogram::from_values(values, frames, 128)?)
        })
        .collect()
}

fn gradcheck(seed: u64, repeats: u64, full_width: Option<usize>) -> Result<()> {
    let mut failures = 0;
    let mut report = |name: &str, err: f64, tol: f64| {
        let ok = err <= tol;
        failures += usize::from(!ok);
        println!("{:<40} {err:.3e} {}", name, if ok { "ok" } else { "FAIL" });
    };
    for (name, err) in operator_grad_checks(seed..seed + repeats)? {
        report(&name, err, OPERATOR_TOL);
    }
    let inputs = random_inputs(2, 128, seed)?;
    let refs: Vec<&LogmelSpectrogram> = inputs.iter().collect();
    let targets = vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]];
    let tiny = ModelConfig {
        block_filters: vec![2; 6],
        convs_per_block: 1,
        l7_filters: 3,
        ..ModelConfig::new(3)
    };
    let model = Model::build(tiny, seed)?.cast::<f64>();
    for (name, err) in model_grad_check(&model, &refs, &targets, 1e-6, None, seed)? {
        report(&format!("network(tiny) {name}"), err, NETWORK_TOL);
    }
    if let Some(k) = full_width {
        let model = Model::build(ModelConfig::new(3), seed)?.cast::<f64>();
        for (name, err) in model_grad_check(&model, &refs, &targets, 1e-6, Some(k), seed)? {
            report(&format!("network {name}"), err, NETWORK_TOL);
        }
    }
    if failures > 0 {
        bail!("{failures} gradient checks exceeded tolerance");
    }
    Ok(())
}
