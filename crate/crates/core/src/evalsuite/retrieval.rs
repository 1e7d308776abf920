use crate::embedder::EmbeddingModel;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::objective::{cosine_distance, Example};
use crate::source::Source;

#[derive(Clone, Debug, PartialEq)]
pub struct SourceRetrieval {
    pub source: Source,
    pub recall_at_1: f64,
    pub recall_at_5: f64,
    pub recall_at_10: f64,
    pub median_rank: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalReport {
    pub examples: usize,
    pub per_source: Vec<SourceRetrieval>,
}

/// 1-based rank of each anchor's own metadata among all items, ordered by
/// cosine distance to the anchor's prediction. Equal distances are ordered by
/// item index.
pub fn own_ranks(preds: &[Vec<f64>], targets: &[&[f64]], exec: Exec) -> Result<Vec<usize>> {
    let ranks = exec.map_range(preds.len(), |i| -> Result<usize> {
        let own = cosine_distance(&preds[i], targets[i])?;
        let mut rank = 1;
        for (j, t) in targets.iter().enumerate() {
            if j == i {
                continue;
            }
            let d = cosine_distance(&preds[i], t)?;
            if d < own || (d == own && j < i) {
                rank += 1;
            }
        }
        Ok(rank)
    });
    ranks.into_iter().collect()
}

/// Recall@{1,5,10} and nearest-rank median rank from own-item ranks.
pub fn summarize_ranks(source: Source, ranks: &[usize]) -> SourceRetrieval {
    let n = ranks.len() as f64;
    let recall = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let median_idx = ((0.5 * n).ceil() as usize).max(1) - 1;
    SourceRetrieval {
        source,
        recall_at_1: recall(1),
        recall_at_5: recall(5),
        recall_at_10: recall(10),
        median_rank: sorted[median_idx],
    }
}

/// Cross-modal retrieval of each video's own metadata for one source.
pub fn evaluate_retrieval(
    model: &EmbeddingModel,
    examples: &[Example],
    source: Source,
    exec: Exec,
) -> Result<SourceRetrieval> {
    if examples.len() < 2 {
        return Err(Error::Invalid("retrieval needs at least two examples".into()));
    }
    model.source_slot(source)?;
    let preds = exec
        .map_slice(examples, |ex| {
            let f_v = model.video_embedding(&ex.features)?;
            model.predict_metadata(&f_v, source)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<&[f64]> = examples.iter().map(|ex| ex.metadata.get(source)).collect();
    let ranks = own_ranks(&preds, &targets, exec)?;
    Ok(summarize_ranks(source, &ranks))
}

pub fn evaluate_retrieval_all(
    model: &EmbeddingModel,
    examples: &[Example],
    sources: &[Source],
    exec: Exec,
) -> Result<RetrievalReport> {
    let per_source = sources
        .iter()
        .map(|&s| evaluate_retrieval(model, examples, s, exec))
        .collect::<Result<Vec<_>>>()?;
    Ok(RetrievalReport {
        examples: examples.len(),
        per_source,
    })
}
