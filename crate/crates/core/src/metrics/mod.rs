//! Multi-label evaluation: per-class precision/recall/F1, micro and macro
//! averages, label PMI and correlation-vs-PMI ranking comparison.

mod pmi;
mod ranking;

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::note_parser::Medication;

pub use pmi::{pmi, pmi_with_base, PmiMatrix};
pub use ranking::{rank_comparison, spearman, MedicationRanking, RankComparison};

/// Display label for class `i`: the medication name when `i < 8`.
pub fn class_name(i: usize) -> String {
    Medication::from_index(i).map_or_else(|| format!("class_{i}"), |m| m.display_name().to_string())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Number of positive labels.
    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn prf(&self) -> Prf {
        let p = ratio(self.tp, self.tp + self.fp);
        let r = ratio(self.tp, self.tp + self.fn_);
        Prf::new(p, r)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// F1 from precision and recall, 0 when both are 0.
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }
}

/// Counts for class `i` over aligned prediction/label rows.
pub fn confusion(preds: &[Vec<u8>], labels: &[Vec<u8>], i: usize) -> ConfusionCounts {
    assert_eq!(preds.len(), labels.len(), "predictions and labels must align");
    let mut c = ConfusionCounts::default();
    for (p, l) in preds.iter().zip(labels) {
        match (p[i] == 1, l[i] == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

pub fn class_prf(preds: &[Vec<u8>], labels: &[Vec<u8>], i: usize) -> Prf {
    confusion(preds, labels, i).prf()
}

/// Frequency-weighted mean of class scores, each of P, R, F separately.
pub fn micro_average(scores: &[Prf], frequencies: &[usize]) -> Prf {
    assert_eq!(scores.len(), frequencies.len());
    let total: usize = frequencies.iter().sum();
    if total == 0 {
        return Prf::default();
    }
    let w = |f: fn(&Prf) -> f64| {
        scores.iter().zip(frequencies).map(|(s, &n)| f(s) * n as f64).sum::<f64>() / total as f64
    };
    Prf {
        precision: w(|s| s.precision),
        recall: w(|s| s.recall),
        f1: w(|s| s.f1),
    }
}

/// Unweighted mean of class scores.
pub fn macro_average(scores: &[Prf]) -> Prf {
    if scores.is_empty() {
        return Prf::default();
    }
    let n = scores.len() as f64;
    Prf {
        precision: scores.iter().map(|s| s.precision).sum::<f64>() / n,
        recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
        f1: scores.iter().map(|s| s.f1).sum::<f64>() / n,
    }
}

/// Micro average over summed confusion counts.
pub fn pooled_micro(counts: &[ConfusionCounts]) -> Prf {
    let sum = counts.iter().fold(ConfusionCounts::default(), |a, c| ConfusionCounts {
        tp: a.tp + c.tp,
        fp: a.fp + c.fp,
        fn_: a.fn_ + c.fn_,
        tn: a.tn + c.tn,
    });
    sum.prf()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub counts: ConfusionCounts,
    #[serde(flatten)]
    pub scores: Prf,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub num_examples: usize,
    pub classes: Vec<ClassMetrics>,
    /// Frequency-weighted mean of class scores.
    pub micro: Prf,
    pub macro_avg: Prf,
    /// Micro average over pooled confusion counts.
    pub pooled_micro: Prf,
}

impl MetricsReport {
    pub fn evaluate(preds: &[Vec<u8>], labels: &[Vec<u8>]) -> Self {
        let k = labels.first().or(preds.first()).map_or(0, Vec::len);
        let counts: Vec<ConfusionCounts> = (0..k).map(|i| confusion(preds, labels, i)).collect();
        let scores: Vec<Prf> = counts.iter().map(ConfusionCounts::prf).collect();
        let freqs: Vec<usize> = counts.iter().map(ConfusionCounts::support).collect();
        Self {
            num_examples: labels.len(),
            classes: counts
                .iter()
                .zip(&scores)
                .enumerate()
                .map(|(i, (c, s))| ClassMetrics {
                    name: class_name(i),
                    counts: *c,
                    scores: *s,
                    support: c.support(),
                })
                .collect(),
            micro: micro_average(&scores, &freqs),
            macro_avg: macro_average(&scores),
            pooled_micro: pooled_micro(&counts),
        }
    }

    /// Table rows: each medication (with support), then micro, macro and
    /// pooled micro averages.
    pub fn rows(&self) -> Vec<(String, Prf, Option<usize>)> {
        let mut rows: Vec<_> = self.classes.iter().map(|c| (c.name.clone(), c.scores, Some(c.support))).collect();
        rows.push(("Micro Avg".into(), self.micro, None));
        rows.push(("Macro Avg".into(), self.macro_avg, None));
        rows.push(("Pooled Micro".into(), self.pooled_micro, None));
        rows
    }

    /// Aligned columns: one row per medication followed by the averages.
    pub fn to_text_table(&self) -> String {
        let mut out = format!("{:<14} {:>6} {:>6} {:>6} {:>8}\n", "", "P", "R", "F", "support");
        for (name, s, support) in self.rows() {
            let support = support.map_or(String::new(), |n| n.to_string());
            let _ = writeln!(
                out,
                "{name:<14} {:>6.2} {:>6.2} {:>6.2} {support:>8}",
                s.precision, s.recall, s.f1
            );
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["name", "precision", "recall", "f1", "support"])?;
        for (name, s, support) in self.rows() {
            wr.write_record([
                name,
                s.precision.to_string(),
                s.recall.to_string(),
                s.f1.to_string(),
                support.map_or(String::new(), |n| n.to_string()),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}
