//! Synchronous chunked SGD training of an [`EmbeddingModel`].
//!
//! Each step draws a batch (epoch-shuffled), splits it into equal chunks,
//! computes every chunk's loss and gradient with negatives drawn only from
//! inside that chunk, averages the chunk gradients in chunk order, and applies
//! one Nesterov update at the scheduled learning rate. Dropout masks and
//! negatives are drawn sequentially before the chunks are dispatched, so the
//! result does not depend on how many threads evaluate the chunks.

mod checkpoint;
mod optimizer;
mod sampling;
mod schedule;

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedder::EmbeddingModel;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::objective::{batch_loss_masked, Example, LossConfig};
use crate::source::Source;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use optimizer::{nesterov_step, nesterov_update, OptimizerState, SgdHyper};
pub use sampling::{sample_negatives, EpochSampler};
pub use schedule::learning_rate;

/// Stream offset separating the sampler generator from the model's.
const SAMPLER_STREAM: u64 = 7;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub chunk_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub decay_biases: bool,
    pub total_steps: u64,
    pub warmup_steps: u64,
    pub lr_start: f64,
    pub lr_peak: f64,
    pub negatives: usize,
    pub margin: f64,
    pub dropout: f64,
    pub seed: u64,
    pub sources: Vec<Source>,
    /// Reuse one negative draw for every source of an anchor.
    pub share_negatives: bool,
}

impl Default for TrainConfig {
    /// Large-scale settings: batch 2048 in chunks of 16, Nesterov 0.9, weight
    /// decay 1e-5, 1500 geometric warmup steps from 0.001 to 1.0, K = 15,
    /// margin 0.1, dropout 0.5, 140k steps.
    fn default() -> Self {
        Self {
            batch_size: 2048,
            chunk_size: 16,
            momentum: 0.9,
            weight_decay: 1e-5,
            decay_biases: true,
            total_steps: 140_000,
            warmup_steps: 1500,
            lr_start: 0.001,
            lr_peak: 1.0,
            negatives: 15,
            margin: 0.1,
            dropout: 0.5,
            seed: 0,
            sources: Source::ALL.to_vec(),
            share_negatives: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.chunk_size < 2 {
            return fail(format!("chunk size {} leaves no in-chunk negatives", self.chunk_size));
        }
        if self.batch_size == 0 || !self.batch_size.is_multiple_of(self.chunk_size) {
            return fail(format!(
                "chunk size {} does not divide batch size {}",
                self.chunk_size, self.batch_size
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(self.weight_decay >= 0.0) {
            return fail(format!("weight decay {} is negative", self.weight_decay));
        }
        if self.total_steps > 0 && self.warmup_steps >= self.total_steps {
            return fail(format!(
                "warmup steps {} must be below total steps {}",
                self.warmup_steps, self.total_steps
            ));
        }
        if !(self.lr_start > 0.0 && self.lr_peak > 0.0) {
            return fail("learning rates must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        self.loss_config().validate()
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            margin: self.margin,
            negatives: self.negatives,
            sources: self.sources.clone(),
        }
    }

    fn hyper(&self, lr: f64) -> SgdHyper {
        SgdHyper {
            lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            decay_biases: self.decay_biases,
        }
    }
}

/// Everything besides the model that a resumed run needs.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub optimizer: OptimizerState,
    pub sampler: EpochSampler,
}

impl TrainState {
    pub fn new(model: &EmbeddingModel, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SAMPLER_STREAM);
        Self {
            optimizer: OptimizerState::new(&model.params),
            sampler: EpochSampler::new(rng),
        }
    }

    pub fn step(&self) -> u64 {
        self.optimizer.step
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_per_source: Vec<(Source, f64)>,
    pub wall_ms: f64,
}

impl StepMetrics {
    /// One `key=value` line.
    pub fn to_line(&self) -> String {
        let per_source = self
            .loss_per_source
            .iter()
            .map(|(s, v)| format!("{s}:{v}"))
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "step={} lr={} loss_total={} loss_per_source={} wall_ms={:.3}",
            self.step, self.lr, self.loss_total, per_source, self.wall_ms
        )
    }
}

pub fn write_metrics<W: Write>(mut out: W, metrics: &[StepMetrics]) -> Result<()> {
    for m in metrics {
        writeln!(out, "{}", m.to_line())?;
    }
    out.flush()?;
    Ok(())
}

pub struct Trainer {
    pub config: TrainConfig,
    pub model: EmbeddingModel,
    pub state: TrainState,
    exec: Exec,
}

impl Trainer {
    pub fn new(mut model: EmbeddingModel, config: TrainConfig, exec: Exec) -> Result<Self> {
        config.validate()?;
        for &s in &config.sources {
            model.source_slot(s)?;
        }
        model.set_dropout(config.dropout)?;
        let state = TrainState::new(&model, config.seed);
        Ok(Self {
            config,
            model,
            state,
            exec,
        })
    }

    /// Continues from a saved model and training state.
    pub fn resume(mut model: EmbeddingModel, state: TrainState, config: TrainConfig, exec: Exec) -> Result<Self> {
        config.validate()?;
        model.set_dropout(config.dropout)?;
        if state.optimizer.velocity.shapes() != model.params.shapes() {
            return Err(Error::Invalid("optimizer state does not match model".into()));
        }
        Ok(Self {
            config,
            model,
            state,
            exec,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.state.step()
    }

    pub fn is_done(&self) -> bool {
        self.state.step() >= self.config.total_steps
    }

    /// Runs one synchronous step over `data`.
    pub fn step(&mut self, data: &[Example]) -> Result<StepMetrics> {
        let started = Instant::now();
        let cfg = &self.config;
        let step = self.state.step();
        let lr = learning_rate(step, cfg);
        let loss_cfg = cfg.loss_config();

        let indices = self.state.sampler.next_batch(cfg.batch_size, data.len())?;
        let masks: Option<Vec<Vec<f64>>> = (cfg.dropout > 0.0)
            .then(|| indices.iter().map(|_| self.model.draw_dropout_mask()).collect());
        let chunk = cfg.chunk_size;
        let n_chunks = indices.len() / chunk;
        let negatives = (0..n_chunks)
            .map(|_| {
                sample_negatives(
                    chunk,
                    cfg.negatives,
                    cfg.sources.len(),
                    cfg.share_negatives,
                    &mut self.state.sampler.rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;

        let model = &self.model;
        let outputs = self.exec.map_range(n_chunks, |c| {
            let members: Vec<&Example> = indices[c * chunk..(c + 1) * chunk]
                .iter()
                .map(|&i| &data[i])
                .collect();
            let chunk_masks = masks.as_ref().map(|m| &m[c * chunk..(c + 1) * chunk]);
            batch_loss_masked(model, &members, &negatives[c], &loss_cfg, chunk_masks)
        });

        let mut grads = self.model.params.zeros_like();
        let mut total = 0.0;
        let mut per_source = vec![0.0; cfg.sources.len()];
        for out in outputs {
            let out = out.map_err(|e| match e {
                Error::NonFinite(_) => Error::NonFiniteLoss { step },
                e => e,
            })?;
            grads.add_scaled(&out.grads, 1.0);
            total += out.value;
            for (acc, (_, v)) in per_source.iter_mut().zip(&out.per_source) {
                *acc += v;
            }
        }
        let inv = 1.0 / n_chunks as f64;
        grads.scale(inv);
        total *= inv;
        per_source.iter_mut().for_each(|v| *v *= inv);
        if !total.is_finite() || !grads.all_finite() {
            return Err(Error::NonFiniteLoss { step });
        }

        let hyper = cfg.hyper(lr);
        nesterov_step(&mut self.model.params, &grads, &mut self.state.optimizer, hyper)?;
        if !self.state.optimizer.velocity.all_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        Ok(StepMetrics {
            step,
            lr,
            loss_total: total,
            loss_per_source: cfg.sources.iter().copied().zip(per_source).collect(),
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Steps until `total_steps`, calling `after_step` after every step.
    pub fn run<F>(&mut self, data: &[Example], mut after_step: F) -> Result<Vec<StepMetrics>>
    where
        F: FnMut(&Trainer, &StepMetrics) -> Result<()>,
    {
        if data.len() < self.config.chunk_size {
            return Err(Error::Invalid(format!(
                "dataset of {} examples is smaller than one chunk ({})",
                data.len(),
                self.config.chunk_size
            )));
        }
        let mut log = Vec::new();
        while !self.is_done() {
            let m = self.step(data)?;
            after_step(self, &m)?;
            log.push(m);
        }
        Ok(log)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            state: Some(self.state.clone()),
        }
    }
}

/// Trains `model` for `config.total_steps` steps.
pub fn train(
    model: EmbeddingModel,
    data: &[Example],
    config: TrainConfig,
    exec: Exec,
) -> Result<(EmbeddingModel, Vec<StepMetrics>)> {
    let mut trainer = Trainer::new(model, config, exec)?;
    let log = trainer.run(data, |_, _| Ok(()))?;
    Ok((trainer.model, log))
}

/// Eval-mode loss over the whole dataset: one seeded shuffle, consecutive
/// chunks of `chunk_size`, seeded in-chunk negatives. A trailing chunk with
/// fewer than two examples is skipped.
pub fn evaluation_loss(
    model: &EmbeddingModel,
    data: &[Example],
    chunk_size: usize,
    loss: &LossConfig,
    seed: u64,
    exec: Exec,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let chunks: Vec<&[usize]> = order.chunks(chunk_size).filter(|c| c.len() >= 2).collect();
    if chunks.is_empty() {
        return Err(Error::Invalid("not enough examples for an evaluation chunk".into()));
    }
    let negatives = chunks
        .iter()
        .map(|c| sample_negatives(c.len(), loss.negatives, loss.sources.len(), false, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let values = exec.map_range(chunks.len(), |i| {
        let members: Vec<&Example> = chunks[i].iter().map(|&j| &data[j]).collect();
        batch_loss_masked(model, &members, &negatives[i], loss, None).map(|o| o.value * members.len() as f64)
    });
    let mut total = 0.0;
    for v in values {
        total += v?;
    }
    let counted: usize = chunks.iter().map(|c| c.len()).sum();
    Ok(total / counted as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::{init_model, ModelConfig};
    use crate::textpool::MetadataEmbedding;

    fn data(n: usize) -> Vec<Example> {
        (0..n)
            .map(|i| {
                let x = i as f64;
                Example {
                    features: vec![x.sin(), x.cos(), 1.0],
                    metadata: MetadataEmbedding::uniform(vec![(2.0 * x).cos(), x.sin()]),
                }
            })
            .collect()
    }

    fn model() -> EmbeddingModel {
        init_model(ModelConfig {
            input_width: 3,
            hidden_widths: vec![4],
            video_width: 3,
            text_width: 2,
            sources: vec![Source::Title, Source::Tags],
            dropout: 0.0,
            seed: 1,
        })
        .unwrap()
    }

    fn config(steps: u64) -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            chunk_size: 4,
            total_steps: steps,
            warmup_steps: 0,
            negatives: 3,
            dropout: 0.0,
            sources: vec![Source::Title, Source::Tags],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_steps_leaves_model_unchanged() {
        let m = model();
        let (trained, log) = train(m.clone(), &data(10), config(0), Exec::Sequential).unwrap();
        assert!(log.is_empty());
        assert_eq!(trained.params, m.params);
    }

    #[test]
    fn logs_every_step_with_per_source_losses() {
        let (_, log) = train(model(), &data(10), config(5), Exec::Sequential).unwrap();
        assert_eq!(log.len(), 5);
        for (i, m) in log.iter().enumerate() {
            assert_eq!(m.step, i as u64);
            let sum: f64 = m.loss_per_source.iter().map(|(_, v)| v).sum();
            assert!((sum - m.loss_total).abs() < 1e-12);
        }
        let line = log[0].to_line();
        assert!(line.starts_with("step=0 lr=1 loss_total="), "{line}");
        assert!(line.contains("loss_per_source=title:") && line.contains(",tags:") && line.contains(" wall_ms="));
    }

    #[test]
    fn non_finite_parameters_abort_with_the_step() {
        let mut trainer = Trainer::new(model(), config(4), Exec::Sequential).unwrap();
        trainer.step(&data(10)).unwrap();
        trainer.model.params.head[0].weight.data[0] = f64::NAN;
        match trainer.step(&data(10)) {
            Err(Error::NonFiniteLoss { step }) => assert_eq!(step, 1),
            other => panic!("expected a non-finite loss error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_configs_and_tiny_datasets() {
        let bad = [
            TrainConfig { chunk_size: 3, ..config(1) },
            TrainConfig { chunk_size: 1, batch_size: 1, ..config(1) },
            TrainConfig { momentum: 1.0, ..config(1) },
            TrainConfig { warmup_steps: 5, total_steps: 5, ..config(5) },
            TrainConfig { dropout: 1.0, ..config(1) },
            TrainConfig { sources: vec![], ..config(1) },
        ];
        for cfg in bad {
            assert!(Trainer::new(model(), cfg.clone(), Exec::Sequential).is_err(), "{cfg:?}");
        }
        let unknown = TrainConfig { sources: vec![Source::Channel], ..config(1) };
        assert!(Trainer::new(model(), unknown, Exec::Sequential).is_err());
        assert!(train(model(), &data(3), config(1), Exec::Sequential).is_err());
        assert!(train(model(), &data(6), config(1), Exec::Sequential).is_err());
    }

    #[test]
    fn evaluation_loss_is_seeded() {
        let d = data(20);
        let cfg = config(1).loss_config();
        let a = evaluation_loss(&model(), &d, 4, &cfg, 3, Exec::Sequential).unwrap();
        let b = evaluation_loss(&model(), &d, 4, &cfg, 3, Exec::Sequential).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0);
    }
}
