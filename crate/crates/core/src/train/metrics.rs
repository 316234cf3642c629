//! Ranking metrics for per-event retrieval of recordings.

use crate::error::{Error, Result};

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite score {s}")));
    }
    Ok(())
}

/// Non-interpolated average precision. Scores are ranked in descending
/// order with ties kept in input order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// Area under the ROC curve via the Mann-Whitney statistic; tied
/// positive/negative pairs count one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let p = labels.iter().filter(|&&l| l).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Midranks (1-based) summed over positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (p * (p + 1)) as f64 / 2.0;
    Ok(u / (p as f64 * n as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventMetrics {
    pub event: String,
    pub ap: f64,
    pub auc: f64,
    /// Positives for the event in the scored corpus.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_event: Vec<EventMetrics>,
    pub map: f64,
    pub mauc: f64,
    /// Events left out of the means because they had no positives (or no
    /// negatives).
    pub excluded: Vec<String>,
    /// Clips too short to score.
    pub skipped: Vec<String>,
}

impl MetricsReport {
    /// Score `C` events from per-clip posteriors (`scores[i][c]`) against
    /// multi-hot `targets[i][c]`.
    pub fn from_scores(names: &[String], scores: &[Vec<f64>], targets: &[Vec<bool>]) -> Result<Self> {
        if scores.len() != targets.len() {
            return Err(Error::InvalidArgument("scores and targets differ in length".into()));
        }
        let mut per_event = Vec::new();
        let mut excluded = Vec::new();
        for (c, name) in names.iter().enumerate() {
            let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
            let l: Vec<bool> = targets.iter().map(|r| r[c]).collect();
            let support = l.iter().filter(|&&b| b).count();
            if support == 0 || support == l.len() {
                excluded.push(name.clone());
                continue;
            }
            per_event.push(EventMetrics {
                event: name.clone(),
                ap: average_precision(&s, &l)?,
                auc: roc_auc(&s, &l)?,
                support,
            });
        }
        let mean = |f: fn(&EventMetrics) -> f64| {
            if per_event.is_empty() {
                f64::NAN
            } else {
                per_event.iter().map(f).sum::<f64>() / per_event.len() as f64
            }
        };
        Ok(Self {
            map: mean(|e| e.ap),
            mauc: mean(|e| e.auc),
            per_event,
            excluded,
            skipped: Vec::new(),
        })
    }
}
