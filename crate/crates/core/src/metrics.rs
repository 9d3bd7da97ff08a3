//! Classification accuracy and grouped ranking metrics (MAP, MRR).

use crate::error::{Error, Result};

pub fn accuracy<T: PartialEq>(predictions: &[T], labels: &[T]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Metric("accuracy of an empty set".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Metric(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / predictions.len() as f64)
}

pub fn error_rate<T: PartialEq>(predictions: &[T], labels: &[T]) -> Result<f64> {
    accuracy(predictions, labels).map(|a| 1.0 - a)
}

/// Scored candidates of one question.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedGroup {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl RankedGroup {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.is_empty() || scores.len() != labels.len() {
            return Err(Error::Metric(format!(
                "group needs equal, non-zero numbers of scores and labels ({} vs {})",
                scores.len(),
                labels.len()
            )));
        }
        Ok(RankedGroup { scores, labels })
    }

    /// Labels in ranked order: descending score, ties by original index.
    pub fn ranked_labels(&self) -> Vec<bool> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        order.into_iter().map(|i| self.labels[i]).collect()
    }

    pub fn has_positive(&self) -> bool {
        self.labels.iter().any(|&l| l)
    }
}

/// Outcome of scoring one group; groups without positives are skipped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GroupScore {
    Scored(f64),
    Skip,
}

pub fn average_precision(group: &RankedGroup) -> GroupScore {
    let mut hits = 0usize;
    let mut total = 0.0;
    for (k, positive) in group.ranked_labels().into_iter().enumerate() {
        if positive {
            hits += 1;
            total += hits as f64 / (k + 1) as f64;
        }
    }
    if hits == 0 {
        GroupScore::Skip
    } else {
        GroupScore::Scored(total / hits as f64)
    }
}

pub fn reciprocal_rank(group: &RankedGroup) -> GroupScore {
    match group.ranked_labels().iter().position(|&l| l) {
        Some(k) => GroupScore::Scored(1.0 / (k + 1) as f64),
        None => GroupScore::Skip,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankingMetrics {
    pub map: f64,
    pub mrr: f64,
    /// Groups that contributed (had at least one positive).
    pub groups: usize,
}

/// MAP and MRR over the groups that contain a positive.
pub fn mean_metrics(groups: &[RankedGroup]) -> Result<RankingMetrics> {
    let mut ap_sum = 0.0;
    let mut rr_sum = 0.0;
    let mut counted = 0usize;
    for g in groups {
        if let (GroupScore::Scored(ap), GroupScore::Scored(rr)) =
            (average_precision(g), reciprocal_rank(g))
        {
            ap_sum += ap;
            rr_sum += rr;
            counted += 1;
        }
    }
    if counted == 0 {
        return Err(Error::Metric("no group has a positive candidate".into()));
    }
    Ok(RankingMetrics {
        map: ap_sum / counted as f64,
        mrr: rr_sum / counted as f64,
        groups: counted,
    })
}

/// `metric<TAB>value` lines with four decimals.
pub fn format_report(entries: &[(&str, f64)]) -> String {
    entries
        .iter()
        .map(|(name, v)| format!("{name}\t{v:.4}\n"))
        .collect()
}
