//! Classification metrics over predicted source sets and score rankings, and
//! the report structure shared by evaluation and the experiment sweeps.

use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionModel;

/// Set-based metrics of one snapshot's prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub acc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Compare a predicted source set against the true one over `n` nodes.
///
/// Conventions: an empty prediction has precision 1 when the truth is also
/// empty and 0 otherwise; an empty truth has recall 1 (vacuous) and 0
/// otherwise-empty handling mirrors precision; F1 is 0 whenever
/// precision + recall is 0.
pub fn confusion_metrics(pred: &[usize], truth: &[usize], n: usize) -> ConfusionMetrics {
    let mut is_pred = vec![false; n];
    let mut is_truth = vec![false; n];
    for &v in pred {
        assert!(v < n, "prediction id {v} out of range");
        is_pred[v] = true;
    }
    for &v in truth {
        assert!(v < n, "truth id {v} out of range");
        is_truth[v] = true;
    }
    let pred_count = is_pred.iter().filter(|&&b| b).count();
    let truth_count = is_truth.iter().filter(|&&b| b).count();
    let tp = (0..n).filter(|&v| is_pred[v] && is_truth[v]).count();
    let correct = (0..n).filter(|&v| is_pred[v] == is_truth[v]).count();

    let precision = if pred_count == 0 {
        if truth_count == 0 { 1.0 } else { 0.0 }
    } else {
        tp as f64 / pred_count as f64
    };
    let recall = if truth_count == 0 {
        1.0
    } else {
        tp as f64 / truth_count as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ConfusionMetrics { acc: correct as f64 / n as f64, precision, recall, f1 }
}

/// Rank-based (Mann–Whitney) AUC with average-rank tie handling. `None` when
/// either class is absent.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "one label per score");
    let p = labels.iter().filter(|&&l| l).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; ties share the average rank of their run
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    let rank_sum: f64 = (0..scores.len()).filter(|&i| labels[i]).map(|i| ranks[i]).sum();
    let u = rank_sum - (p * (p + 1)) as f64 / 2.0;
    Some(u / (p as f64 * n as f64))
}

/// Metrics of one evaluated snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SnapshotMetrics {
    pub acc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Absent for degenerate single-class snapshots.
    pub auc: Option<f64>,
}

/// Mean/std pairs over snapshots (macro aggregation). AUC aggregates only the
/// snapshots where it is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AggregateMetrics {
    pub acc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
}

/// Experiment context carried on every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct ReportMeta {
    pub variant: Option<String>,
    pub delta: Option<f64>,
    pub incompleteness: Option<f64>,
    pub diffusion_model: Option<DiffusionModel>,
    pub seed_count: Option<usize>,
    pub detector: Option<String>,
}

/// Per-snapshot metrics plus macro means and standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricsReport {
    pub per_snapshot: Vec<SnapshotMetrics>,
    pub mean: AggregateMetrics,
    pub std: AggregateMetrics,
    pub meta: ReportMeta,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl MetricsReport {
    /// Macro aggregation: plain means and sample standard deviations of the
    /// per-snapshot values.
    pub fn from_snapshots(per_snapshot: Vec<SnapshotMetrics>, meta: ReportMeta) -> Self {
        let col = |f: fn(&SnapshotMetrics) -> f64| -> Vec<f64> {
            per_snapshot.iter().map(f).collect()
        };
        let (acc_m, acc_s) = mean_std(&col(|m| m.acc));
        let (p_m, p_s) = mean_std(&col(|m| m.precision));
        let (r_m, r_s) = mean_std(&col(|m| m.recall));
        let (f_m, f_s) = mean_std(&col(|m| m.f1));
        let aucs: Vec<f64> = per_snapshot.iter().filter_map(|m| m.auc).collect();
        let (auc_m, auc_s) = mean_std(&aucs);
        let have_auc = !aucs.is_empty();
        MetricsReport {
            per_snapshot,
            mean: AggregateMetrics {
                acc: acc_m,
                precision: p_m,
                recall: r_m,
                f1: f_m,
                auc: have_auc.then_some(auc_m),
            },
            std: AggregateMetrics {
                acc: acc_s,
                precision: p_s,
                recall: r_s,
                f1: f_s,
                auc: have_auc.then_some(auc_s),
            },
            meta,
        }
    }

    /// CSV with one row per snapshot; undefined AUC cells are empty.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let mut s = String::from("snapshot,acc,precision,recall,f1,auc\n");
        for (i, m) in self.per_snapshot.iter().enumerate() {
            let auc = m.auc.map_or(String::new(), |a| format!("{a}"));
            let _ = writeln!(s, "{i},{},{},{},{},{auc}", m.acc, m.precision, m.recall, m.f1);
        }
        s
    }
}
