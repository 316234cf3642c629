//! CSV tables (one row per epoch or event) and keyed-text summaries.

use std::path::Path;

use super::{MetricsReport, TrainHistory};
use crate::error::{IoContext, Result};

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

pub fn write_history_csv(path: &Path, h: &TrainHistory) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["epoch", "train_loss", "val_map", "val_mauc", "selected"])?;
    for r in &h.epochs {
        w.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.val_map.to_string(),
            r.val_mauc.to_string(),
            u8::from(r.epoch == h.selected_epoch).to_string(),
        ])?;
    }
    w.flush().ctx(|| format!("writing {}", path.display()))
}

pub fn write_metrics_csv(path: &Path, r: &MetricsReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["event", "ap", "auc", "support"])?;
    for e in &r.per_event {
        w.write_record([
            e.event.clone(),
            e.ap.to_string(),
            e.auc.to_string(),
            e.support.to_string(),
        ])?;
    }
    w.flush().ctx(|| format!("writing {}", path.display()))
}

#[derive(serde::Serialize)]
struct MetricsSummary<'a> {
    map: f64,
    mauc: f64,
    events_scored: usize,
    excluded: &'a [String],
    skipped: &'a [String],
}

pub fn metrics_summary(r: &MetricsReport) -> Result<String> {
    Ok(toml::to_string(&MetricsSummary {
        map: r.map,
        mauc: r.mauc,
        events_scored: r.per_event.len(),
        excluded: &r.excluded,
        skipped: &r.skipped,
    })?)
}

#[derive(serde::Serialize)]
struct HistorySummary<'a> {
    epochs: usize,
    selected_epoch: usize,
    selected_val_map: f64,
    selected_val_mauc: f64,
    skipped_train: &'a [String],
    skipped_val: &'a [String],
}

pub fn history_summary(h: &TrainHistory) -> Result<String> {
    let sel = h.epochs.iter().find(|r| r.epoch == h.selected_epoch);
    Ok(toml::to_string(&HistorySummary {
        epochs: h.epochs.len(),
        selected_epoch: h.selected_epoch,
        selected_val_map: sel.map_or(f64::NAN, |r| r.val_map),
        selected_val_mauc: sel.map_or(f64::NAN, |r| r.val_mauc),
        skipped_train: &h.skipped_train,
        skipped_val: &h.skipped_val,
    })?)
}
