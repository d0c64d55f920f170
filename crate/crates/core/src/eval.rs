//! Evaluation against planted labels and against a benchmark ranking.

use std::collections::{HashMap, HashSet};

use crate::anomaly::{AnomalyRanking, PcadScore};
use crate::error::{Error, Result};

/// Fraction of the top `m` ids that are planted outliers.
pub fn precision_at_m(ranking: &AnomalyRanking, truth: &HashSet<String>, m: usize) -> Result<f64> {
    if m > ranking.len() {
        return Err(Error::MTooLarge {
            m,
            n: ranking.len(),
        });
    }
    if m == 0 {
        return Ok(0.0);
    }
    let hits = ranking.entries[..m]
        .iter()
        .filter(|e| truth.contains(&e.id))
        .count();
    Ok(hits as f64 / m as f64)
}

/// `|rank_benchmark - rank_candidate|` for each of the benchmark's top `m`,
/// in benchmark order. Ranks are 1-based.
pub fn rank_change(benchmark: &AnomalyRanking, candidate: &AnomalyRanking, m: usize) -> Result<Vec<usize>> {
    if m > benchmark.len() {
        return Err(Error::MTooLarge {
            m,
            n: benchmark.len(),
        });
    }
    let positions: HashMap<&str, usize> = candidate
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id.as_str(), i + 1))
        .collect();
    benchmark.entries[..m]
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let r = *positions
                .get(e.id.as_str())
                .ok_or_else(|| Error::MissingId(e.id.clone()))?;
            Ok((i + 1).abs_diff(r))
        })
        .collect()
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Precision for one cluster under local evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPrecision {
    pub cluster: usize,
    /// Most common normal label in the cluster, if any.
    pub normal_label: Option<String>,
    /// Outlier label paired with that normal label.
    pub outlier_label: Option<String>,
    pub m: usize,
    pub precision: f64,
}

/// Local precision of every cluster. Series are grouped by the cluster
/// their local score was measured against and ranked ascending within it.
/// A cluster's truth is the outlier class paired with its majority normal
/// class; `m` is the size of that class in the whole corpus.
pub fn local_precision(
    labels: &[String],
    scores: &[PcadScore],
    k: usize,
    pairs: &[(String, String)],
) -> Vec<ClusterPrecision> {
    let normals: HashSet<&str> = pairs.iter().map(|(n, _)| n.as_str()).collect();
    let mut class_size: HashMap<&str, usize> = HashMap::new();
    for l in labels {
        *class_size.entry(l.as_str()).or_default() += 1;
    }
    (0..k)
        .map(|j| {
            let mut members: Vec<(usize, f64)> = scores
                .iter()
                .enumerate()
                .filter(|(_, s)| s.local_cluster == j)
                .map(|(i, s)| (i, s.local))
                .collect();
            members.sort_by(|a, b| a.1.total_cmp(&b.1));
            let mut votes: Vec<(&str, usize)> = Vec::new();
            for &(i, _) in &members {
                let l = labels[i].as_str();
                if normals.contains(l) {
                    match votes.iter_mut().find(|(v, _)| *v == l) {
                        Some(v) => v.1 += 1,
                        None => votes.push((l, 1)),
                    }
                }
            }
            let majority = votes
                .iter()
                .fold(None::<(&str, usize)>, |best, &(l, c)| match best {
                    Some((_, bc)) if bc >= c => best,
                    _ => Some((l, c)),
                })
                .map(|(l, _)| l);
            let outlier = majority.and_then(|n| pairs.iter().find(|(p, _)| p == n).map(|(_, o)| o.as_str()));
            let (m, precision) = match outlier {
                Some(o) => {
                    let m = class_size.get(o).copied().unwrap_or(0);
                    let hits = members
                        .iter()
                        .take(m)
                        .filter(|&&(i, _)| labels[i] == o)
                        .count();
                    (m, if m == 0 { 0.0 } else { hits as f64 / m as f64 })
                }
                None => (0, 0.0),
            };
            ClusterPrecision {
                cluster: j,
                normal_label: majority.map(str::to_string),
                outlier_label: outlier.map(str::to_string),
                m,
                precision,
            }
        })
        .collect()
}

/// One method's results on one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub seed: u64,
    pub method: String,
    pub sample: usize,
    pub k: Option<usize>,
    pub precision: Option<f64>,
    pub rank_changes: Vec<usize>,
}

impl IterationRecord {
    pub fn mean_rank_change(&self) -> Option<f64> {
        if self.rank_changes.is_empty() {
            None
        } else {
            Some(self.rank_changes.iter().sum::<usize>() as f64 / self.rank_changes.len() as f64)
        }
    }
}

/// Summary of one (method, sample size) cell across iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub sample: usize,
    pub precision: f64,
    pub precision_std: f64,
    /// Rank changes pooled over all iterations.
    pub rank_changes: Vec<usize>,
    pub mean_rank_change: f64,
    pub stdev: f64,
    pub records: Vec<IterationRecord>,
}

impl EvalReport {
    pub fn from_records(method: &str, sample: usize, records: Vec<IterationRecord>) -> Self {
        let precisions: Vec<f64> = records.iter().filter_map(|r| r.precision).collect();
        let (precision, precision_std) = mean_std(&precisions);
        let rank_changes: Vec<usize> = records.iter().flat_map(|r| r.rank_changes.iter().copied()).collect();
        let as_f: Vec<f64> = rank_changes.iter().map(|&v| v as f64).collect();
        let (mean_rank_change, stdev) = mean_std(&as_f);
        Self {
            method: method.to_string(),
            sample,
            precision,
            precision_std,
            rank_changes,
            mean_rank_change,
            stdev,
            records,
        }
    }
}
