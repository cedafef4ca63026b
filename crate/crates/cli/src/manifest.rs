//! Multi-seed aggregation.

use std::fmt::Write as _;
use std::io::Write;

use rxpredict_core::MetricsReport;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub vocab_hash: String,
    pub checkpoint_sha256: String,
    pub metrics: MetricsReport,
}

/// Mean and sample standard deviation of one metric over seeds. `std` is
/// absent with fewer than two seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() >= 2)
            .then(|| (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt());
        Self { mean, std }
    }
}

/// One table row (a medication or an average) summarized over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub name: String,
    pub precision: Summary,
    pub recall: Summary,
    pub f1: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub notes_sha256: String,
    pub model: String,
    pub split: String,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedReport>,
    pub aggregate: Vec<AggregateRow>,
}

/// Summarizes each row of the per-seed tables, in table order.
pub fn aggregate(reports: &[&MetricsReport]) -> Vec<AggregateRow> {
    let Some(first) = reports.first() else {
        return Vec::new();
    };
    let tables: Vec<_> = reports.iter().map(|r| r.rows()).collect();
    first
        .rows()
        .iter()
        .enumerate()
        .map(|(i, (name, _, _))| {
            let col = |f: fn(&rxpredict_core::metrics::Prf) -> f64| {
                Summary::of(&tables.iter().map(|t| f(&t[i].1)).collect::<Vec<_>>())
            };
            AggregateRow {
                name: name.clone(),
                precision: col(|p| p.precision),
                recall: col(|p| p.recall),
                f1: col(|p| p.f1),
            }
        })
        .collect()
}

impl RunManifest {
    /// `name,precision_mean,precision_std,recall_mean,...`; absent std is empty.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["name", "precision_mean", "precision_std", "recall_mean", "recall_std", "f1_mean", "f1_std"])?;
        let std = |s: Summary| s.std.map_or(String::new(), |v| v.to_string());
        for r in &self.aggregate {
            wr.write_record([
                r.name.clone(),
                r.precision.mean.to_string(),
                std(r.precision),
                r.recall.mean.to_string(),
                std(r.recall),
                r.f1.mean.to_string(),
                std(r.f1),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// P / R / F columns as `mean ± std` to two decimals.
    pub fn to_text_table(&self) -> String {
        let cell = |s: Summary| match s.std {
            Some(sd) => format!("{:.2} ± {:.2}", s.mean, sd),
            None => format!("{:.2}", s.mean),
        };
        let mut out = format!(
            "{} over seeds {:?} ({} split)\n{:<14} {:>13} {:>13} {:>13}\n",
            self.model, self.seeds, self.split, "", "P", "R", "F"
        );
        for r in &self.aggregate {
            let _ = writeln!(
                out,
                "{:<14} {:>13} {:>13} {:>13}",
                r.name,
                cell(r.precision),
                cell(r.recall),
                cell(r.f1)
            );
        }
        out
    }
}
