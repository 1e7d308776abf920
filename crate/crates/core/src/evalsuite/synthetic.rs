//! Synthetic corpora with known class and instance structure.
//!
//! Each class has a unit latent vector `c`. Each video gets an instance
//! latent `z = c + noise * e` shared by the video and its metadata. Raw video
//! features are `A z + noise * clutter_gain * G u`, where `u` is a
//! per-video nuisance ("clutter") vector the metadata never sees. Source `s`
//! of a record describes its own noisy copy of the latent,
//! `z_s = z + noise * source_noise[s] * e_s`, and each of its tokens is
//! `B_s z_s + noise * e'`. Because `e_s` lives in latent space it cannot be
//! projected away, and sources with independent `e_s` complement each other.
//! `A`, `G` and `B_s` are fixed random lifts. With `noise = 0` all videos of a
//! class are identical.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{write_corpus, MetadataRecord};
use crate::dataset::Dataset;
use crate::embedder::Matrix;
use crate::error::Result;
use crate::features::{VideoFeature, VideoFeatureFile};
use crate::source::Source;
use crate::textpool::{TokenEmbeddingSet, TokenFile};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub per_class: usize,
    pub input_width: usize,
    pub text_width: usize,
    pub latent_width: usize,
    pub clutter_width: usize,
    pub clutter_gain: f64,
    pub noise: f64,
    /// Latent noise multiplier per source, in [`Source::ALL`] order.
    pub source_noise: [f64; 4],
    /// Tokens per title, description, tag, and channel name.
    pub tokens: [usize; 4],
    pub tags_per_record: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: 10,
            per_class: 100,
            input_width: 64,
            text_width: 64,
            latent_width: 24,
            clutter_width: 16,
            clutter_gain: 5.0,
            noise: 0.1,
            source_noise: [0.1, 3.0, 6.0, 12.0],
            tokens: [8, 8, 2, 2],
            tags_per_record: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub records: Vec<MetadataRecord>,
    pub video: VideoFeatureFile,
    pub tokens: TokenFile,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct SyntheticPaths {
    pub corpus: PathBuf,
    pub video: PathBuf,
    pub tokens: PathBuf,
}

impl SyntheticData {
    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::assemble(&self.records, &self.video, &self.tokens)
    }

    /// Writes `corpus.jsonl`, `video.wvtv` and `tokens.wvte` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<SyntheticPaths> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let paths = SyntheticPaths {
            corpus: dir.join("corpus.jsonl"),
            video: dir.join("video.wvtv"),
            tokens: dir.join("tokens.wvte"),
        };
        write_corpus(&paths.corpus, &self.records)?;
        self.video.save(&paths.video)?;
        self.tokens.save(&paths.tokens)?;
        Ok(paths)
    }
}

fn gaussian_matrix(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in &mut m.data {
        *v = std * rng.sample::<f64, _>(StandardNormal);
    }
    m
}

fn gaussian_vec(n: usize, std: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Values are stored as f32 on disk; rounding here keeps in-memory data equal
/// to what a reader sees.
fn to_f32_precision(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x as f32 as f64).collect()
}

pub fn generate_synthetic(config: &SyntheticConfig) -> SyntheticData {
    let c = config;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let latent = c.latent_width.max(1);

    let class_latents: Vec<Vec<f64>> = (0..c.classes)
        .map(|_| {
            let v = gaussian_vec(latent, 1.0, &mut rng);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    let video_lift = gaussian_matrix(c.input_width, latent, (1.0 / latent as f64).sqrt(), &mut rng);
    let clutter_lift = gaussian_matrix(c.input_width, c.clutter_width.max(1), (1.0 / c.clutter_width.max(1) as f64).sqrt(), &mut rng);
    let text_lifts: Vec<Matrix> = Source::ALL
        .iter()
        .map(|_| gaussian_matrix(c.text_width, latent, (1.0 / latent as f64).sqrt(), &mut rng))
        .collect();
    let empty_embedding = to_f32_precision(gaussian_vec(c.text_width, 0.1, &mut rng));

    let n = c.classes * c.per_class;
    let mut records = Vec::with_capacity(n);
    let mut video = Vec::with_capacity(n);
    let mut token_sets = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);

    for class in 0..c.classes {
        for j in 0..c.per_class {
            let id = format!("syn-{class:03}-{j:05}");
            let z: Vec<f64> = class_latents[class]
                .iter()
                .map(|&x| x + c.noise * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let mut x = video_lift.matvec(&z);
            if c.clutter_width > 0 && c.noise > 0.0 {
                let u = gaussian_vec(c.clutter_width, 1.0, &mut rng);
                let clutter = clutter_lift.matvec(&u);
                for (xi, ci) in x.iter_mut().zip(clutter) {
                    *xi += c.noise * c.clutter_gain * ci;
                }
            }
            video.push(VideoFeature {
                id: id.clone(),
                values: to_f32_precision(x),
            });

            let token_list = |s: Source, count: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
                let shift = c.noise * c.source_noise[s.index()];
                let z_s: Vec<f64> = z.iter().map(|v| v + shift * rng.sample::<f64, _>(StandardNormal)).collect();
                let base = text_lifts[s.index()].matvec(&z_s);
                (0..count)
                    .map(|_| to_f32_precision(base.iter().map(|b| b + c.noise * rng.sample::<f64, _>(StandardNormal)).collect()))
                    .collect()
            };
            let title = token_list(Source::Title, c.tokens[0], &mut rng);
            let description = token_list(Source::Description, c.tokens[1], &mut rng);
            let tags = (0..c.tags_per_record)
                .map(|_| token_list(Source::Tags, c.tokens[2], &mut rng))
                .collect();
            let channel = token_list(Source::Channel, c.tokens[3], &mut rng);
            token_sets.push(TokenEmbeddingSet {
                record_id: id.clone(),
                title,
                description,
                tags,
                channel,
            });

            let word = |prefix: &str, count: usize, rng: &mut ChaCha8Rng| -> String {
                (0..count)
                    .map(|_| format!("{prefix}{}", rng.gen_range(0..50)))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            records.push(MetadataRecord {
                id,
                query: format!("class {class}"),
                rank: j as u64 + 1,
                title: word(&format!("c{class}t"), c.tokens[0], &mut rng),
                description: word(&format!("c{class}d"), c.tokens[1], &mut rng),
                tags: (0..c.tags_per_record)
                    .map(|_| word(&format!("c{class}g"), c.tokens[2], &mut rng))
                    .collect(),
                channel: format!("channel-{class}-{}", rng.gen_range(0..5)),
                duration_s: 10.0 + rng.gen_range(0..600) as f64,
                age_days: 91 + rng.gen_range(0..2000),
                label: Some(class as i64),
            });
            labels.push(class);
        }
    }

    SyntheticData {
        records,
        video: VideoFeatureFile {
            width: c.input_width,
            records: video,
        },
        tokens: TokenFile {
            width: c.text_width,
            empty_embedding: Some(empty_embedding),
            records: token_sets,
        },
        labels,
    }
}
