use serde::{Deserialize, Serialize};

use crate::corpus::{Vocabulary, PAD};
use crate::model::ModelParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterNgrams {
    /// Position of the filter in the pooled vector (banks in window order).
    pub filter_id: usize,
    pub window: usize,
    /// Distinct n-gram texts with their best value, descending.
    pub top: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterNgramReport {
    pub filters: Vec<FilterNgrams>,
}

/// Per-token projection onto every filter row slice: `proj[t][j·n + r]` is
/// the dot product of embedding row `t` with rows `r` of filter `j`.
fn project(params: &ModelParams, bank: usize, tokens: &[usize]) -> Vec<Vec<f64>> {
    let h = params.arch.embed_dim;
    let b = &params.banks[bank];
    let (f, n) = (b.weight.rows(), b.width);
    let mut proj = vec![Vec::new(); params.arch.vocab_size];
    for &t in tokens {
        if !proj[t].is_empty() {
            continue;
        }
        let e = params.embedding.row(t);
        let mut row = vec![0.0; f * n];
        for j in 0..f {
            let w = b.weight.row(j);
            for r in 0..n {
                row[j * n + r] = w[r * h..(r + 1) * h].iter().zip(e).map(|(a, b)| a * b).sum();
            }
        }
        proj[t] = row;
    }
    proj
}

/// Post-activation value of `filter` in `bank` on the window starting at each
/// position, as the forward pass computes it at inference time (no pooling).
pub fn filter_values(params: &ModelParams, bank: usize, filter: usize, tokens: &[usize]) -> Vec<f64> {
    let len = tokens.iter().position(|&t| t == PAD).unwrap_or(tokens.len());
    let b = &params.banks[bank];
    let n = b.width;
    if len < n {
        return Vec::new();
    }
    let proj = project(params, bank, &tokens[..len]);
    (0..=len - n)
        .map(|i| window_value(params, bank, filter, &proj, &tokens[i..i + n]))
        .collect()
}

fn window_value(params: &ModelParams, bank: usize, filter: usize, proj: &[Vec<f64>], window: &[usize]) -> f64 {
    let b = &params.banks[bank];
    let n = b.width;
    let pre = b.bias.data()[filter] + window.iter().enumerate().map(|(r, &t)| proj[t][filter * n + r]).sum::<f64>();
    params.arch.activation.apply(b.norm.apply_infer(filter, pre))
}

fn ngram_text(window: &[usize], vocab: &Vocabulary) -> String {
    window.iter().map(|&t| vocab.word(t)).collect::<Vec<_>>().join(" ")
}

/// Bounded list of the best distinct windows seen so far.
struct TopDistinct<'a> {
    cap: usize,
    items: Vec<(f64, &'a [usize])>,
}

impl<'a> TopDistinct<'a> {
    fn offer(&mut self, value: f64, window: &'a [usize], vocab: &Vocabulary) {
        if self.items.len() == self.cap && self.items.iter().all(|&(v, _)| value < v) {
            return;
        }
        if let Some(slot) = self.items.iter_mut().find(|(_, w)| *w == window) {
            slot.0 = slot.0.max(value);
            return;
        }
        let beats = |a: (f64, &[usize]), b: (f64, &[usize])| {
            a.0 > b.0 || (a.0 == b.0 && ngram_text(a.1, vocab) < ngram_text(b.1, vocab))
        };
        if self.items.len() < self.cap {
            self.items.push((value, window));
            return;
        }
        let worst = (0..self.items.len())
            .reduce(|w, i| if beats(self.items[w], self.items[i]) { i } else { w })
            .expect("cap > 0");
        if beats((value, window), self.items[worst]) {
            self.items[worst] = (value, window);
        }
    }

    fn finish(self, vocab: &Vocabulary) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self.items.into_iter().map(|(v, w)| (ngram_text(w, vocab), v)).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

/// Top `top_n` distinct n-grams of one filter over every valid window of
/// every note. Ties on value go to the lexicographically smaller text.
pub fn top_ngrams(
    params: &ModelParams,
    bank: usize,
    filter: usize,
    notes: &[&[usize]],
    vocab: &Vocabulary,
    top_n: usize,
) -> FilterNgrams {
    let report = bank_ngrams(params, bank, &[filter], notes, vocab, top_n);
    report.into_iter().next().expect("one filter requested")
}

fn bank_ngrams(
    params: &ModelParams,
    bank: usize,
    filters: &[usize],
    notes: &[&[usize]],
    vocab: &Vocabulary,
    top_n: usize,
) -> Vec<FilterNgrams> {
    let b = &params.banks[bank];
    let n = b.width;
    let valid: Vec<&[usize]> = notes
        .iter()
        .map(|t| &t[..t.iter().position(|&i| i == PAD).unwrap_or(t.len())])
        .collect();
    let all: Vec<usize> = valid.iter().flat_map(|t| t.iter().copied()).collect();
    let proj = project(params, bank, &all);
    let mut tops: Vec<TopDistinct> = filters
        .iter()
        .map(|_| TopDistinct {
            cap: top_n,
            items: Vec::new(),
        })
        .collect();
    if top_n > 0 {
        for t in &valid {
            for w in t.windows(n) {
                for (top, &j) in tops.iter_mut().zip(filters) {
                    top.offer(window_value(params, bank, j, &proj, w), w, vocab);
                }
            }
        }
    }
    let base: usize = params.banks[..bank].iter().map(|b| b.weight.rows()).sum();
    tops.into_iter()
        .zip(filters)
        .map(|(top, &j)| FilterNgrams {
            filter_id: base + j,
            window: n,
            top: top.finish(vocab),
        })
        .collect()
}

/// [`top_ngrams`] for every filter of every bank.
pub fn filter_ngram_report(params: &ModelParams, notes: &[&[usize]], vocab: &Vocabulary, top_n: usize) -> FilterNgramReport {
    let filters = (0..params.banks.len())
        .flat_map(|bi| {
            let all: Vec<usize> = (0..params.banks[bi].weight.rows()).collect();
            bank_ngrams(params, bi, &all, notes, vocab, top_n)
        })
        .collect();
    FilterNgramReport { filters }
}
