use std::cmp::Ordering;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{class_name, PmiMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedicationRanking {
    pub index: usize,
    pub name: String,
    /// Other classes by descending correlation: `(class, score)`.
    pub corr_ranking: Vec<(usize, Option<f64>)>,
    pub pmi_ranking: Vec<(usize, Option<f64>)>,
    pub top1_agree: bool,
    /// `None` when either ranking is constant.
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankComparison {
    pub medications: Vec<MedicationRanking>,
    pub top1_agreement: usize,
}

/// Descending order; undefined scores last; ties to the lower index.
fn rank_desc(scores: &[(usize, Option<f64>)]) -> Vec<(usize, Option<f64>)> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| {
        let by_score = match (a.1, b.1) {
            (Some(x), Some(y)) => y.partial_cmp(&x).unwrap_or(Ordering::Equal),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        };
        by_score.then(a.0.cmp(&b.0))
    });
    v
}

/// Rank of each entry (1 = largest), ties share their average rank and
/// undefined entries tie at the bottom.
fn average_ranks(scores: &[Option<f64>]) -> Vec<f64> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    let key = |i: usize| scores[i].unwrap_or(f64::NEG_INFINITY);
    order.sort_by(|&a, &b| key(b).partial_cmp(&key(a)).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && key(order[end]) == key(order[start]) {
            end += 1;
        }
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman correlation with average ranks for ties.
pub fn spearman(a: &[Option<f64>], b: &[Option<f64>]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Compares, per class, the ranking of the other classes under the learned
/// correlation and under PMI.
pub fn rank_comparison(corr: &[Vec<Option<f64>>], pmi: &PmiMatrix) -> RankComparison {
    let k = corr.len();
    assert_eq!(k, pmi.k(), "correlation and PMI must cover the same classes");
    let medications: Vec<MedicationRanking> = (0..k)
        .map(|i| {
            let others: Vec<usize> = (0..k).filter(|&j| j != i).collect();
            let c: Vec<Option<f64>> = others.iter().map(|&j| corr[i][j]).collect();
            let p: Vec<Option<f64>> = others.iter().map(|&j| pmi.get(i, j)).collect();
            let pair = |v: &[Option<f64>]| others.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
            let corr_ranking = rank_desc(&pair(&c));
            let pmi_ranking = rank_desc(&pair(&p));
            MedicationRanking {
                index: i,
                name: class_name(i),
                top1_agree: corr_ranking.first().map(|x| x.0) == pmi_ranking.first().map(|x| x.0),
                spearman: spearman(&c, &p),
                corr_ranking,
                pmi_ranking,
            }
        })
        .collect();
    RankComparison {
        top1_agreement: medications.iter().filter(|m| m.top1_agree).count(),
        medications,
    }
}

fn fmt_score(s: Option<f64>) -> String {
    s.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

impl RankComparison {
    /// One block per medication: rank, CORR partner and score, PMI partner
    /// and score.
    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        for m in &self.medications {
            let rho = m.spearman.map_or("-".to_string(), |r| format!("{r:.3}"));
            let _ = writeln!(out, "{} (top-1 agree: {}, spearman: {rho})", m.name, m.top1_agree);
            let _ = writeln!(out, "  {:<4} {:<12} {:>7}   {:<12} {:>7}", "rank", "CORR", "", "PMI", "");
            for (r, (c, p)) in m.corr_ranking.iter().zip(&m.pmi_ranking).enumerate() {
                let _ = writeln!(
                    out,
                    "  {:<4} {:<12} {:>7}   {:<12} {:>7}",
                    r + 1,
                    class_name(c.0),
                    fmt_score(c.1),
                    class_name(p.0),
                    fmt_score(p.1)
                );
            }
        }
        let _ = writeln!(out, "top-1 agreement: {}/{}", self.top1_agreement, self.medications.len());
        out
    }

    /// `medication,rank,corr_partner,corr,pmi_partner,pmi`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["medication", "rank", "corr_partner", "corr", "pmi_partner", "pmi"])?;
        let num = |s: Option<f64>| s.map_or(String::new(), |v| v.to_string());
        for m in &self.medications {
            for (r, (c, p)) in m.corr_ranking.iter().zip(&m.pmi_ranking).enumerate() {
                wr.write_record([
                    m.name.clone(),
                    (r + 1).to_string(),
                    class_name(c.0),
                    num(c.1),
                    class_name(p.0),
                    num(p.1),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}
