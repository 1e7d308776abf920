use crate::dataset::Dataset;
use crate::embedder::{init_model, EmbeddingModel, ModelConfig};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::source::Source;
use crate::trainer::{train, TrainConfig};

use super::probe::{linear_probe, stratified_split, ProbeConfig, ProbeReport};

/// Settings shared by every ablation row.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    pub test_fraction: f64,
    pub split_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    /// Sources used for pre-training; empty for the untrained baseline.
    pub sources: Vec<Source>,
    pub report: ProbeReport,
}

impl AblationRow {
    pub fn label(&self) -> String {
        if self.sources.is_empty() {
            "scratch".to_string()
        } else if self.sources.len() == Source::ALL.len() {
            "all".to_string()
        } else {
            self.sources.iter().map(|s| s.name()).collect::<Vec<_>>().join("+")
        }
    }
}

/// Probe accuracy of eval-mode `f_v` features on a fixed stratified split.
pub fn probe_model(
    model: &EmbeddingModel,
    data: &Dataset,
    labels: &[usize],
    config: &AblationConfig,
) -> Result<ProbeReport> {
    let (train_idx, test_idx) = stratified_split(labels, config.test_fraction, config.split_seed);
    let features = data
        .examples
        .iter()
        .map(|ex| model.video_embedding(&ex.features))
        .collect::<Result<Vec<_>>>()?;
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (
            idx.iter().map(|&i| features[i].clone()).collect(),
            idx.iter().map(|&i| labels[i]).collect(),
        )
    };
    let (xtr, ytr) = pick(&train_idx);
    let (xte, yte) = pick(&test_idx);
    linear_probe(&xtr, &ytr, &xte, &yte, &config.probe)
}

/// Pre-trains once per source subset (same seeds and split everywhere) and
/// probes the result. The first row is the untrained baseline.
pub fn ablation_run(
    data: &Dataset,
    subsets: &[Vec<Source>],
    config: &AblationConfig,
    exec: Exec,
) -> Result<Vec<AblationRow>> {
    if subsets.iter().any(|s| s.is_empty()) {
        return Err(Error::Invalid("ablation subsets must be nonempty".into()));
    }
    let labels = data.class_labels()?;
    let mut rows: Vec<Vec<Source>> = vec![Vec::new()];
    rows.extend(subsets.iter().cloned());
    let results = exec.map_slice(&rows, |sources| -> Result<AblationRow> {
        let model_sources = if sources.is_empty() { Source::ALL.to_vec() } else { sources.clone() };
        let model = init_model(ModelConfig {
            sources: model_sources,
            ..config.model.clone()
        })?;
        let model = if sources.is_empty() {
            model
        } else {
            let train_cfg = TrainConfig {
                sources: sources.clone(),
                ..config.train.clone()
            };
            train(model, &data.examples, train_cfg, Exec::Sequential)?.0
        };
        Ok(AblationRow {
            sources: sources.clone(),
            report: probe_model(&model, data, &labels, config)?,
        })
    });
    results.into_iter().collect()
}
