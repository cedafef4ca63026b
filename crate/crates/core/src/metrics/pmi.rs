use serde::{Deserialize, Serialize};

/// Pairwise `log(n(i,j) / (n(i)·n(j)))` over label rows. Entries are `None`
/// on the diagonal and wherever two classes never co-occur.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmiMatrix {
    pub counts: Vec<usize>,
    pub pair_counts: Vec<Vec<usize>>,
    pub values: Vec<Vec<Option<f64>>>,
    /// Logarithm base; `e` by default.
    pub base: f64,
}

impl PmiMatrix {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i][j]
    }
}

pub fn pmi(labels: &[Vec<u8>]) -> PmiMatrix {
    pmi_with_base(labels, std::f64::consts::E)
}

pub fn pmi_with_base(labels: &[Vec<u8>], base: f64) -> PmiMatrix {
    let k = labels.first().map_or(0, Vec::len);
    let mut counts = vec![0usize; k];
    let mut pair_counts = vec![vec![0usize; k]; k];
    for row in labels {
        let on: Vec<usize> = (0..k).filter(|&i| row[i] == 1).collect();
        for &i in &on {
            counts[i] += 1;
            for &j in &on {
                pair_counts[i][j] += 1;
            }
        }
    }
    let natural = base == std::f64::consts::E;
    let values = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    let nij = pair_counts[i][j];
                    (i != j && nij > 0).then(|| {
                        // n(i)·n(j) is symmetric in integers, so pmi(i,j) == pmi(j,i) bitwise
                        let r = nij as f64 / (counts[i] * counts[j]) as f64;
                        if natural {
                            r.ln()
                        } else {
                            r.log(base)
                        }
                    })
                })
                .collect()
        })
        .collect();
    PmiMatrix {
        counts,
        pair_counts,
        values,
        base,
    }
}
