//! Cosine distance, the K-negative margin ranking loss, and the multi-source
//! batch loss with exact analytic gradients.
//!
//! For a predicted text embedding `p`, its own metadata `t` and negatives
//! `t'_1..t'_K` the per-example loss is
//! `1/K * sum_i max(0, m + d(p, t) - d(p, t'_i))` with `d(u, v) = 1 - cos(u, v)`.
//! The batch loss averages that over examples and sums over enabled sources.

use crate::embedder::{EmbeddingModel, Mode, Params};
use crate::error::{check_width, Error, Result};
use crate::source::Source;
use crate::textpool::MetadataEmbedding;

pub const DEFAULT_MARGIN: f64 = 0.1;
pub const DEFAULT_NEGATIVES: usize = 15;

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub margin: f64,
    pub negatives: usize,
    pub sources: Vec<Source>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            negatives: DEFAULT_NEGATIVES,
            sources: Source::ALL.to_vec(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) || !self.margin.is_finite() {
            return Err(Error::Config(format!("margin must be > 0, got {}", self.margin)));
        }
        if self.negatives < 1 {
            return Err(Error::Config("need at least one negative".into()));
        }
        if self.sources.is_empty() {
            return Err(Error::Config("no sources enabled".into()));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_pair(u: &[f64], v: &[f64]) -> Result<()> {
    check_width(u.len(), v.len())?;
    if u.iter().chain(v).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("cosine distance input".into()));
    }
    Ok(())
}

/// `1 - cos(u, v)`, or 1 when either vector has zero norm.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    check_pair(u, v)?;
    Ok(distance_and_grad(u, v).0)
}

/// Distance and its gradient with respect to `u`.
fn distance_and_grad(u: &[f64], v: &[f64]) -> (f64, Vec<f64>) {
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return (1.0, vec![0.0; u.len()]);
    }
    let uv = dot(u, v);
    let cos = uv / (nu * nv);
    // d/du cos = v / (|u||v|) - cos * u / |u|^2
    let grad = u
        .iter()
        .zip(v)
        .map(|(ui, vi)| -(vi / (nu * nv) - cos * ui / (nu * nu)))
        .collect();
    (1.0 - cos, grad)
}

/// Loss value and gradient with respect to `pred`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankingLoss {
    pub value: f64,
    pub grad: Vec<f64>,
}

pub fn ranking_loss(pred: &[f64], pos: &[f64], negs: &[&[f64]], margin: f64) -> Result<RankingLoss> {
    if negs.is_empty() {
        return Err(Error::Invalid("ranking loss needs at least one negative".into()));
    }
    check_pair(pred, pos)?;
    for n in negs {
        check_pair(pred, n)?;
    }
    let k = negs.len() as f64;
    let (d_pos, g_pos) = distance_and_grad(pred, pos);
    let mut value = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for n in negs {
        let (d_neg, g_neg) = distance_and_grad(pred, n);
        let hinge = margin + (d_pos - d_neg);
        if hinge > 0.0 {
            value += hinge;
            for ((g, gp), gn) in grad.iter_mut().zip(&g_pos).zip(&g_neg) {
                *g += gp - gn;
            }
        }
    }
    grad.iter_mut().for_each(|g| *g /= k);
    Ok(RankingLoss { value: value / k, grad })
}

/// One training pair: raw video features and the pooled metadata of that video.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub metadata: MetadataEmbedding,
}

/// In-batch negative indices: `[example][source slot][k]`, where source slots
/// follow [`LossConfig::sources`].
pub type NegativeAssignment = Vec<Vec<Vec<usize>>>;

#[derive(Clone, Debug)]
pub struct LossOutput {
    pub value: f64,
    /// Batch loss of each enabled source, in [`LossConfig::sources`] order.
    pub per_source: Vec<(Source, f64)>,
    pub grads: Params,
    /// Gradient with respect to each example's (post-dropout) `f_v`.
    pub d_video: Vec<Vec<f64>>,
}

fn validate_batch(
    batch: &[&Example],
    negatives: &NegativeAssignment,
    config: &LossConfig,
    model: &EmbeddingModel,
) -> Result<()> {
    config.validate()?;
    if batch.len() < 2 {
        return Err(Error::Invalid("batch size must be >= 2".into()));
    }
    if negatives.len() != batch.len() {
        return Err(Error::Invalid(format!(
            "negative assignment covers {} examples, batch has {}",
            negatives.len(),
            batch.len()
        )));
    }
    for &s in &config.sources {
        model.source_slot(s)?;
    }
    for (i, per_source) in negatives.iter().enumerate() {
        if per_source.len() != config.sources.len() {
            return Err(Error::Invalid(format!(
                "example {i}: negatives for {} sources, expected {}",
                per_source.len(),
                config.sources.len()
            )));
        }
        for list in per_source {
            if list.len() != config.negatives {
                return Err(Error::Invalid(format!(
                    "example {i}: {} negatives, expected {}",
                    list.len(),
                    config.negatives
                )));
            }
            for &j in list {
                if j >= batch.len() {
                    return Err(Error::Invalid(format!(
                        "example {i}: negative index {j} out of range for batch of {}",
                        batch.len()
                    )));
                }
                if j == i {
                    return Err(Error::Invalid(format!("example {i}: negative index equals anchor")));
                }
            }
        }
    }
    Ok(())
}

/// Batch loss with explicit dropout masks (`None` = eval mode). Each mask
/// holds per-unit scale factors for that example's `f_v`.
pub fn batch_loss_masked(
    model: &EmbeddingModel,
    batch: &[&Example],
    negatives: &NegativeAssignment,
    config: &LossConfig,
    masks: Option<&[Vec<f64>]>,
) -> Result<LossOutput> {
    validate_batch(batch, negatives, config, model)?;
    if let Some(m) = masks {
        if m.len() != batch.len() {
            return Err(Error::Invalid("one dropout mask per example required".into()));
        }
    }
    let text_width = model.config().text_width;
    for ex in batch {
        for &s in &config.sources {
            check_width(text_width, ex.metadata.get(s).len())?;
        }
    }

    let n = batch.len() as f64;
    let mut grads = model.params.zeros_like();
    let mut per_source = vec![0.0; config.sources.len()];
    let mut d_video = Vec::with_capacity(batch.len());

    for (i, ex) in batch.iter().enumerate() {
        let trace = model.head_trace(&ex.features)?;
        let mut f_v = trace.output.clone();
        if let Some(masks) = masks {
            check_width(f_v.len(), masks[i].len())?;
            f_v.iter_mut().zip(&masks[i]).for_each(|(v, m)| *v *= m);
        }
        let mut d_fv = vec![0.0; f_v.len()];
        for (slot, &s) in config.sources.iter().enumerate() {
            let proj_idx = model.source_slot(s)?;
            let proj = &model.params.projections[proj_idx];
            let pred = proj.forward(&f_v);
            let negs: Vec<&[f64]> = negatives[i][slot]
                .iter()
                .map(|&j| batch[j].metadata.get(s))
                .collect();
            let loss = ranking_loss(&pred, ex.metadata.get(s), &negs, config.margin)?;
            per_source[slot] += loss.value / n;
            let d_pred: Vec<f64> = loss.grad.iter().map(|g| g / n).collect();
            if d_pred.iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = &mut grads.projections[proj_idx];
            g.weight.add_outer(&d_pred, &f_v);
            for (gb, d) in g.bias.iter_mut().zip(&d_pred) {
                *gb += d;
            }
            for (a, b) in d_fv.iter_mut().zip(proj.weight.matvec_t(&d_pred)) {
                *a += b;
            }
        }
        let mut d_head = d_fv.clone();
        if let Some(masks) = masks {
            d_head.iter_mut().zip(&masks[i]).for_each(|(d, m)| *d *= m);
        }
        model.head_backward(&trace, &d_head, &mut grads);
        d_video.push(d_fv);
    }

    let value = per_source.iter().sum();
    Ok(LossOutput {
        value,
        per_source: config.sources.iter().copied().zip(per_source).collect(),
        grads,
        d_video,
    })
}

/// Batch loss; in train mode one dropout mask per example is drawn from the
/// model's generator.
pub fn batch_loss(
    model: &mut EmbeddingModel,
    batch: &[&Example],
    negatives: &NegativeAssignment,
    config: &LossConfig,
    mode: Mode,
) -> Result<LossOutput> {
    match mode {
        Mode::Eval => batch_loss_masked(model, batch, negatives, config, None),
        Mode::Train => {
            let masks: Vec<Vec<f64>> = batch.iter().map(|_| model.draw_dropout_mask()).collect();
            batch_loss_masked(model, batch, negatives, config, Some(&masks))
        }
    }
}
