//! Classification metrics: confusion matrices, per-class
//! precision/recall/F1 with weighted and macro averages, top-k
//! accuracy, and report rendering.

use crate::dsp::Matrix;
use crate::{Error, Result};
use serde::Serialize;
use std::fmt::Write as _;

/// K x K tally; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
    pub labels: Vec<String>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Merge tallies from another matrix of the same shape.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.counts.len() != self.counts.len() {
            return Err(Error::ShapeMismatch("confusion sizes differ".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassRow {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Per-class rows plus (precision, recall, f1) aggregates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub rows: Vec<ClassRow>,
    /// Support-weighted averages.
    pub weighted: (f64, f64, f64),
    /// Unweighted macro averages.
    pub macro_avg: (f64, f64, f64),
    pub total_support: usize,
}

/// Tally (truth, predicted) pairs into a K x K matrix.
pub fn confusion(predicted: &[usize], truth: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if predicted.len() != truth.len() {
        return Err(Error::Parameter(format!(
            "{} predictions vs {} truths",
            predicted.len(),
            truth.len()
        )));
    }
    let mut counts = vec![vec![0usize; k]; k];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= k || t >= k {
            return Err(Error::Parameter(format!(
                "label out of range: ({t}, {p}) with {k} classes"
            )));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        labels: (0..k).map(|i| i.to_string()).collect(),
    })
}

/// F1 = 2PR/(P+R), 0 when P + R = 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Per-class precision (diag/colsum), recall (diag/rowsum), and F1,
/// with 0/0 defined as 0; averages both support-weighted and macro.
pub fn precision_recall_f1(cm: &ConfusionMatrix) -> ClassReport {
    let k = cm.num_classes();
    let mut rows = Vec::with_capacity(k);
    let mut weighted = (0.0, 0.0, 0.0);
    let mut macro_avg = (0.0, 0.0, 0.0);
    let mut total_support = 0usize;
    for c in 0..k {
        let diag = cm.counts[c][c] as f64;
        let rowsum: usize = cm.counts[c].iter().sum();
        let colsum: usize = (0..k).map(|r| cm.counts[r][c]).sum();
        let precision = if colsum == 0 { 0.0 } else { diag / colsum as f64 };
        let recall = if rowsum == 0 { 0.0 } else { diag / rowsum as f64 };
        let f1 = f1_score(precision, recall);
        weighted.0 += precision * rowsum as f64;
        weighted.1 += recall * rowsum as f64;
        weighted.2 += f1 * rowsum as f64;
        macro_avg.0 += precision;
        macro_avg.1 += recall;
        macro_avg.2 += f1;
        total_support += rowsum;
        rows.push(ClassRow {
            label: cm.labels.get(c).cloned().unwrap_or_else(|| c.to_string()),
            precision,
            recall,
            f1,
            support: rowsum,
        });
    }
    let n = total_support.max(1) as f64;
    let kf = k.max(1) as f64;
    ClassReport {
        rows,
        weighted: (weighted.0 / n, weighted.1 / n, weighted.2 / n),
        macro_avg: (macro_avg.0 / kf, macro_avg.1 / kf, macro_avg.2 / kf),
        total_support,
    }
}

/// Build a report directly from tabulated per-class (P, R, F1, support)
/// rows, recomputing the aggregate rows under both conventions.
pub fn report_from_rows(rows: &[(f64, f64, f64, usize)]) -> ClassReport {
    let mut weighted = (0.0, 0.0, 0.0);
    let mut macro_avg = (0.0, 0.0, 0.0);
    let mut total_support = 0usize;
    let mut out = Vec::with_capacity(rows.len());
    for (i, &(p, r, f, s)) in rows.iter().enumerate() {
        weighted.0 += p * s as f64;
        weighted.1 += r * s as f64;
        weighted.2 += f * s as f64;
        macro_avg.0 += p;
        macro_avg.1 += r;
        macro_avg.2 += f;
        total_support += s;
        out.push(ClassRow {
            label: (i + 1).to_string(),
            precision: p,
            recall: r,
            f1: f,
            support: s,
        });
    }
    let n = total_support.max(1) as f64;
    let kf = rows.len().max(1) as f64;
    ClassReport {
        rows: out,
        weighted: (weighted.0 / n, weighted.1 / n, weighted.2 / n),
        macro_avg: (macro_avg.0 / kf, macro_avg.1 / kf, macro_avg.2 / kf),
        total_support,
    }
}

/// Fraction of rows whose true label is among the k highest
/// probabilities; ties broken toward the lowest class index.
pub fn top_k_accuracy(probs: &Matrix, truth: &[usize], k: usize) -> Result<f64> {
    if probs.len() != truth.len() {
        return Err(Error::Parameter(format!(
            "{} rows vs {} truths",
            probs.len(),
            truth.len()
        )));
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let classes = probs[0].len();
    if k == 0 || k > classes {
        return Err(Error::Parameter(format!(
            "k = {k} outside 1..={classes}"
        )));
    }
    let mut hits = 0usize;
    for (row, &t) in probs.iter().zip(truth) {
        if t >= classes {
            return Err(Error::Parameter(format!("label {t} out of range")));
        }
        // rank = classes that beat the true one (ties won by lower index)
        let pt = row[t];
        let rank = row
            .iter()
            .enumerate()
            .filter(|&(j, &p)| p > pt || (p == pt && j < t))
            .count();
        if rank < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / truth.len() as f64)
}

/// Fixed-width text table: one row per class, then the weighted
/// Avg/Total row and a labeled macro row.
pub fn format_report(report: &ClassReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>9} {:>9} {:>9} {:>8}",
        "Class", "Precision", "Recall", "F1-score", "Support"
    );
    for row in &report.rows {
        let _ = writeln!(
            out,
            "{:<12} {:>9.2} {:>9.2} {:>9.2} {:>8}",
            row.label, row.precision, row.recall, row.f1, row.support
        );
    }
    let (wp, wr, wf) = report.weighted;
    let _ = writeln!(
        out,
        "{:<12} {:>9.2} {:>9.2} {:>9.2} {:>8}",
        "Avg / Total", wp, wr, wf, report.total_support
    );
    let (mp, mr, mf) = report.macro_avg;
    let _ = writeln!(
        out,
        "{:<12} {:>9.2} {:>9.2} {:>9.2} {:>8}",
        "Macro avg", mp, mr, mf, report.total_support
    );
    out.push_str("(undefined precision/recall reported as 0)\n");
    out
}

/// CSV rendering: one row per class plus the two average rows.
pub fn report_csv(report: &ClassReport) -> String {
    let mut out = String::from("class,precision,recall,f1,support\n");
    for row in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.label, row.precision, row.recall, row.f1, row.support
        );
    }
    let (wp, wr, wf) = report.weighted;
    let _ = writeln!(out, "weighted_avg,{wp},{wr},{wf},{}", report.total_support);
    let (mp, mr, mf) = report.macro_avg;
    let _ = writeln!(out, "macro_avg,{mp},{mr},{mf},{}", report.total_support);
    out
}
