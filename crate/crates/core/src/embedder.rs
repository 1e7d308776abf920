//! Trainable video head `f_v` and per-source affine projections
//! `W(s) f_v + b(s)` into the text embedding space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binio::{ByteReader, ByteWriter};
use crate::error::{check_width, Error, Result};
use crate::source::Source;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// `self * x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self^T * y`
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
        out
    }

    /// `self += a b^T`
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        for (r, &ar) in a.iter().enumerate() {
            if ar == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, bc) in row.iter_mut().zip(b) {
                *w += ar * bc;
            }
        }
    }
}

/// `y = W x + b`
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    fn uniform(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut layer = Self::zeros(inputs, outputs);
        for w in &mut layer.weight.data {
            *w = rng.gen_range(-limit..=limit);
        }
        layer
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.matvec(x);
        for (o, b) in y.iter_mut().zip(&self.bias) {
            *o += b;
        }
        y
    }
}

/// Every trainable tensor of a model. Also used for gradients and optimizer
/// velocities, which share the model's shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub head: Vec<Affine>,
    /// One projection per configured source, in configuration order.
    pub projections: Vec<Affine>,
}

impl Params {
    pub fn zeros_like(&self) -> Self {
        let z = |l: &Affine| Affine::zeros(l.inputs(), l.outputs());
        Self {
            head: self.head.iter().map(z).collect(),
            projections: self.projections.iter().map(z).collect(),
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Affine> {
        self.head.iter().chain(&self.projections)
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Affine> {
        self.head.iter_mut().chain(&mut self.projections)
    }

    /// Declared tensor order: for each head layer then each projection,
    /// weight followed by bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers()
            .flat_map(|l| [l.weight.data.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut()
            .flat_map(|l| [l.weight.data.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// Parallel to [`Params::tensors`]: true for bias vectors.
    pub fn bias_mask(&self) -> Vec<bool> {
        self.layers().flat_map(|_| [false, true]).collect()
    }

    pub fn shapes(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Largest elementwise `|a - b| / max(|a|, |b|, floor)`.
    pub fn max_rel_diff(&self, other: &Params, floor: f64) -> f64 {
        let mut worst = 0.0f64;
        for (a, b) in self.tensors().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter().zip(b) {
                let denom = x.abs().max(y.abs()).max(floor);
                worst = worst.max((x - y).abs() / denom);
            }
        }
        worst
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub input_width: usize,
    pub hidden_widths: Vec<usize>,
    pub video_width: usize,
    pub text_width: usize,
    pub sources: Vec<Source>,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_width: 128,
            hidden_widths: vec![64],
            video_width: 32,
            text_width: crate::textpool::DEFAULT_TEXT_WIDTH,
            sources: Source::ALL.to_vec(),
            dropout: 0.5,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let widths_ok = self.input_width >= 1
            && self.video_width >= 1
            && self.text_width >= 1
            && self.hidden_widths.iter().all(|&w| w >= 1);
        if !widths_ok {
            return Err(Error::Config("all widths must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.sources.is_empty() {
            return Err(Error::Config("at least one source is required".into()));
        }
        for (i, s) in self.sources.iter().enumerate() {
            if self.sources[..i].contains(s) {
                return Err(Error::Config(format!("source `{s}` configured twice")));
            }
        }
        Ok(())
    }

    fn layer_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width];
        w.extend(&self.hidden_widths);
        w.push(self.video_width);
        w
    }
}

/// Intermediate values of one head forward pass, kept for backprop.
#[derive(Clone, Debug)]
pub struct HeadTrace {
    /// Input to each head layer.
    pub inputs: Vec<Vec<f64>>,
    /// Head output before dropout.
    pub output: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct EmbeddingModel {
    config: ModelConfig,
    pub params: Params,
    rng: ChaCha8Rng,
}

/// Builds a model with uniform fan-based weights and zero biases.
pub fn init_model(config: ModelConfig) -> Result<EmbeddingModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let widths = config.layer_widths();
    let head = widths
        .windows(2)
        .map(|w| Affine::uniform(w[0], w[1], &mut rng))
        .collect();
    let projections = config
        .sources
        .iter()
        .map(|_| Affine::uniform(config.video_width, config.text_width, &mut rng))
        .collect();
    Ok(EmbeddingModel {
        config,
        params: Params { head, projections },
        rng,
    })
}

impl EmbeddingModel {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn sources(&self) -> &[Source] {
        &self.config.sources
    }

    pub fn source_slot(&self, s: Source) -> Result<usize> {
        self.config
            .sources
            .iter()
            .position(|&x| x == s)
            .ok_or_else(|| Error::UnknownSource(s.name().to_string()))
    }

    pub fn projection(&self, s: Source) -> Result<&Affine> {
        Ok(&self.params.projections[self.source_slot(s)?])
    }

    pub fn projection_mut(&mut self, s: Source) -> Result<&mut Affine> {
        let slot = self.source_slot(s)?;
        Ok(&mut self.params.projections[slot])
    }

    pub fn set_dropout(&mut self, rate: f64) -> Result<()> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout {rate} outside [0, 1)")));
        }
        self.config.dropout = rate;
        Ok(())
    }

    pub fn head_trace(&self, x: &[f64]) -> Result<HeadTrace> {
        check_width(self.config.input_width, x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("video features".into()));
        }
        let last = self.params.head.len() - 1;
        let mut inputs = Vec::with_capacity(self.params.head.len());
        let mut h = x.to_vec();
        for (i, layer) in self.params.head.iter().enumerate() {
            let mut y = layer.forward(&h);
            if i != last {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            inputs.push(std::mem::replace(&mut h, y));
        }
        Ok(HeadTrace { inputs, output: h })
    }

    /// Accumulates parameter gradients of the head given `d_output`, the
    /// gradient with respect to the head output (before dropout).
    pub fn head_backward(&self, trace: &HeadTrace, d_output: &[f64], grads: &mut Params) {
        let mut delta = d_output.to_vec();
        for i in (0..self.params.head.len()).rev() {
            let layer = &self.params.head[i];
            let input = &trace.inputs[i];
            grads.head[i].weight.add_outer(&delta, input);
            for (g, d) in grads.head[i].bias.iter_mut().zip(&delta) {
                *g += d;
            }
            if i == 0 {
                break;
            }
            let mut prev = layer.weight.matvec_t(&delta);
            // `input` is the ReLU output of layer i-1; zero where inactive.
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    /// Inverted-dropout scale factors for one example: 0 or `1/(1-p)`.
    pub fn draw_dropout_mask(&mut self) -> Vec<f64> {
        let p = self.config.dropout;
        if p == 0.0 {
            return vec![1.0; self.config.video_width];
        }
        let keep = 1.0 / (1.0 - p);
        (0..self.config.video_width)
            .map(|_| if self.rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect()
    }

    /// Eval-mode video representation.
    pub fn video_embedding(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.head_trace(x)?.output)
    }

    pub fn forward_video(&mut self, x: &[f64], mode: Mode) -> Result<Vec<f64>> {
        let mut out = self.video_embedding(x)?;
        if mode == Mode::Train && self.config.dropout > 0.0 {
            let mask = self.draw_dropout_mask();
            out.iter_mut().zip(&mask).for_each(|(o, m)| *o *= m);
        }
        Ok(out)
    }

    pub fn predict_metadata(&self, f_v: &[f64], source: Source) -> Result<Vec<f64>> {
        check_width(self.config.video_width, f_v.len())?;
        Ok(self.projection(source)?.forward(f_v))
    }

    pub(crate) fn write_to(&self, w: &mut ByteWriter) {
        let c = &self.config;
        w.u32(c.input_width as u32);
        w.u32(c.hidden_widths.len() as u32);
        for &h in &c.hidden_widths {
            w.u32(h as u32);
        }
        w.u32(c.video_width as u32);
        w.u32(c.text_width as u32);
        w.u32(c.sources.len() as u32);
        for s in &c.sources {
            w.u8(s.index() as u8);
        }
        w.f64(c.dropout);
        w.u64(c.seed);
        for t in self.params.tensors() {
            w.f64_slice(t);
        }
        write_rng(w, &self.rng);
    }

    pub(crate) fn read_from(rd: &mut ByteReader<'_>) -> Result<Self> {
        let input_width = rd.u32()? as usize;
        let n_hidden = rd.u32()? as usize;
        let hidden_widths = (0..n_hidden)
            .map(|_| rd.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let video_width = rd.u32()? as usize;
        let text_width = rd.u32()? as usize;
        let n_sources = rd.u32()? as usize;
        let sources = (0..n_sources)
            .map(|_| rd.u8().and_then(Source::from_index))
            .collect::<Result<Vec<_>>>()?;
        let dropout = rd.f64()?;
        let seed = rd.u64()?;
        let config = ModelConfig {
            input_width,
            hidden_widths,
            video_width,
            text_width,
            sources,
            dropout,
            seed,
        };
        config.validate()?;
        let widths = config.layer_widths();
        let mut params = Params {
            head: widths.windows(2).map(|w| Affine::zeros(w[0], w[1])).collect(),
            projections: config
                .sources
                .iter()
                .map(|_| Affine::zeros(video_width, text_width))
                .collect(),
        };
        for t in params.tensors_mut() {
            rd.f64_into(t)?;
        }
        let rng = read_rng(rd)?;
        Ok(Self { config, params, rng })
    }
}

pub(crate) fn write_rng(w: &mut ByteWriter, rng: &ChaCha8Rng) {
    w.bytes(&rng.get_seed());
    w.u64(rng.get_stream());
    w.u128(rng.get_word_pos());
}

pub(crate) fn read_rng(rd: &mut ByteReader<'_>) -> Result<ChaCha8Rng> {
    let seed = rd.array::<32>()?;
    let stream = rd.u64()?;
    let pos = rd.u128()?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(pos);
    Ok(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small(seed: u64) -> ModelConfig {
        ModelConfig {
            input_width: 5,
            hidden_widths: vec![7],
            video_width: 4,
            text_width: 3,
            sources: vec![Source::Title, Source::Tags],
            dropout: 0.5,
            seed,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_model(small(3)).unwrap();
        let b = init_model(small(3)).unwrap();
        assert_eq!(a.params, b.params);
        let c = init_model(small(4)).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn init_biases_zero_and_weights_bounded() {
        let m = init_model(small(1)).unwrap();
        for layer in m.params.head.iter().chain(&m.params.projections) {
            assert!(layer.bias.iter().all(|&b| b == 0.0));
            let limit = (6.0 / (layer.inputs() + layer.outputs()) as f64).sqrt();
            assert!(layer.weight.data.iter().all(|w| w.abs() <= limit));
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = small(0);
        c.dropout = 1.0;
        assert!(init_model(c).is_err());
        let mut c = small(0);
        c.hidden_widths = vec![0];
        assert!(init_model(c).is_err());
        let mut c = small(0);
        c.sources.clear();
        assert!(init_model(c).is_err());
    }

    fn identity_model() -> EmbeddingModel {
        let mut m = init_model(ModelConfig {
            input_width: 3,
            hidden_widths: vec![],
            video_width: 3,
            text_width: 3,
            sources: vec![Source::Title],
            dropout: 0.0,
            seed: 0,
        })
        .unwrap();
        m.params.head[0].weight = Matrix::identity(3);
        m
    }

    #[test]
    fn identity_head_passes_input_through() {
        let mut m = identity_model();
        let v = [0.5, -2.0, 3.0];
        assert_eq!(m.forward_video(&v, Mode::Eval).unwrap(), v);
        assert_eq!(m.forward_video(&v, Mode::Train).unwrap(), v);
        assert!(m.forward_video(&[1.0], Mode::Eval).is_err());
    }

    #[test]
    fn predict_metadata_cases() {
        let mut m = identity_model();
        let f = [1.0, 2.0, 3.0];
        m.projection_mut(Source::Title).unwrap().weight = Matrix::zeros(3, 3);
        m.projection_mut(Source::Title).unwrap().bias = vec![7.0, 8.0, 9.0];
        assert_eq!(m.predict_metadata(&f, Source::Title).unwrap(), vec![7.0, 8.0, 9.0]);
        let p = m.projection_mut(Source::Title).unwrap();
        p.weight = Matrix::identity(3);
        p.bias = vec![0.0; 3];
        assert_eq!(m.predict_metadata(&f, Source::Title).unwrap(), f.to_vec());
        assert!(matches!(
            m.predict_metadata(&f, Source::Channel),
            Err(Error::UnknownSource(_))
        ));
    }

    #[test]
    fn predict_matches_naive_matvec() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = init_model(ModelConfig {
            text_width: 6,
            ..small(9)
        })
        .unwrap();
        let mut m = m;
        for b in &mut m.projection_mut(Source::Tags).unwrap().bias {
            *b = rng.gen_range(-1.0..1.0);
        }
        let f: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = m.projection(Source::Tags).unwrap().clone();
        let mut naive = vec![0.0; 6];
        for r in 0..6 {
            let mut acc = p.bias[r];
            for c in 0..4 {
                acc += p.weight.data[r * 4 + c] * f[c];
            }
            naive[r] = acc;
        }
        let got = m.predict_metadata(&f, Source::Tags).unwrap();
        for (a, b) in got.iter().zip(&naive) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn sources_have_independent_projections() {
        let mut m = init_model(small(2)).unwrap();
        let f = [0.1, 0.2, -0.3, 0.4];
        let before = m.predict_metadata(&f, Source::Tags).unwrap();
        m.projection_mut(Source::Title).unwrap().weight.data[0] += 1.0;
        assert_eq!(m.predict_metadata(&f, Source::Tags).unwrap(), before);
    }

    #[test]
    fn dropout_zero_matches_eval() {
        let mut c = small(5);
        c.dropout = 0.0;
        let mut m = init_model(c).unwrap();
        let x = [0.3, -0.1, 0.7, 0.2, -0.9];
        let eval = m.forward_video(&x, Mode::Eval).unwrap();
        assert_eq!(m.forward_video(&x, Mode::Train).unwrap(), eval);
    }

    #[test]
    fn dropout_is_unbiased() {
        let mut m = init_model(small(6)).unwrap();
        let x = [0.3, -0.1, 0.7, 0.2, -0.9];
        let eval = m.forward_video(&x, Mode::Eval).unwrap();
        let n = 20_000;
        let mut mean = vec![0.0; eval.len()];
        for _ in 0..n {
            let out = m.forward_video(&x, Mode::Train).unwrap();
            for (acc, o) in mean.iter_mut().zip(out) {
                *acc += o / n as f64;
            }
        }
        for (mu, e) in mean.iter().zip(&eval) {
            if e.abs() > 1e-9 {
                assert!(((mu - e) / e).abs() < 0.02, "mean {mu} vs eval {e}");
            } else {
                assert_eq!(*mu, 0.0);
            }
        }
    }

    #[test]
    fn bias_mask_matches_tensor_order() {
        let m = init_model(small(0)).unwrap();
        let mask = m.params.bias_mask();
        for (t, is_bias) in m.params.tensors().iter().zip(mask) {
            let bias_len = t.len() == 7 || t.len() == 4 || t.len() == 3;
            assert_eq!(is_bias, bias_len);
        }
    }
}
