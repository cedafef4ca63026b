//! Interpretability outputs: embedding nearest neighbors, top n-grams per
//! convolution filter, and a 2-D t-SNE projection of note factor vectors.

mod neighbors;
mod ngrams;
mod tsne;

#[cfg(test)]
mod tests;

use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use neighbors::{nearest_neighbor, neighbor_report, Neighbor, NeighborReport};
pub use ngrams::{filter_ngram_report, filter_values, top_ngrams, FilterNgramReport, FilterNgrams};
pub use tsne::{
    conditional_affinities, joint_affinities, kl_divergence, output_affinities, tsne, TsneConfig, TsneEmbedding, MIN_POINTS,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("word `{0}` is not in the vocabulary")]
    UnknownWord(String),
    #[error("vocabulary has no other real word to compare with")]
    NoCandidates,
    #[error("t-SNE needs at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("perplexity {perplexity} must be positive and below a third of the {points} points")]
    BadPerplexity { perplexity: f64, points: usize },
    #[error("{what}: expected {expected}, got {got}")]
    DimMismatch { what: &'static str, expected: usize, got: usize },
    #[error("t-SNE produced non-finite coordinates")]
    NonFinite,
}

/// Sorted indices of at most `max` items drawn without replacement from `0..n`.
pub fn sample_indices(n: usize, max: usize, seed: u64) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n, max).into_vec();
    idx.sort_unstable();
    idx
}

impl NeighborReport {
    /// Columns `query,neighbor,distance`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["query", "neighbor", "distance"])?;
        for e in &self.entries {
            wr.write_record([e.query.clone(), e.neighbor.clone(), e.distance.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }
}

impl FilterNgramReport {
    /// Columns `filter_id,window,rank,ngram,value`, rank starting at 1.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["filter_id", "window", "rank", "ngram", "value"])?;
        for f in &self.filters {
            for (r, (text, v)) in f.top.iter().enumerate() {
                wr.write_record([
                    f.filter_id.to_string(),
                    f.window.to_string(),
                    (r + 1).to_string(),
                    text.clone(),
                    v.to_string(),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

impl TsneEmbedding {
    /// Columns `visit_id,x,y,med_0..med_7`; one row per point, with that
    /// note's label indicators.
    pub fn write_csv<W: Write>(&self, w: W, visit_ids: &[String], labels: &[Vec<u8>]) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let k = labels.first().map_or(0, Vec::len);
        let mut header = vec!["visit_id".to_string(), "x".into(), "y".into()];
        header.extend((0..k).map(|i| format!("med_{i}")));
        wr.write_record(&header)?;
        for ((c, id), l) in self.coords.iter().zip(visit_ids).zip(labels) {
            let mut row = vec![id.clone(), c[0].to_string(), c[1].to_string()];
            row.extend(l.iter().map(u8::to_string));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}
