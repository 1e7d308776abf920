#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use wvt_core::corpus::{canonical_tag_string, MetadataRecord};
use wvt_core::embedder::{init_model, EmbeddingModel, ModelConfig};
use wvt_core::objective::{Example, LossConfig, NegativeAssignment};
use wvt_core::stats::{CorpusStats, Quartiles, SourceStats};
use wvt_core::textpool::MetadataEmbedding;
use wvt_core::Source;

/// A small model with every parameter (biases included) drawn from [-1, 1].
pub fn random_model(rng: &mut ChaCha8Rng, sources: Vec<Source>, max_width: usize) -> EmbeddingModel {
    let w = |rng: &mut ChaCha8Rng| rng.gen_range(1..=max_width);
    let hidden = (0..rng.gen_range(0..=2)).map(|_| w(rng)).collect();
    let config = ModelConfig {
        input_width: w(rng),
        hidden_widths: hidden,
        video_width: w(rng),
        text_width: w(rng),
        sources,
        dropout: 0.0,
        seed: rng.gen(),
    };
    let mut model = init_model(config).unwrap();
    for t in model.params.tensors_mut() {
        t.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    }
    model
}

pub fn random_sources(rng: &mut ChaCha8Rng) -> Vec<Source> {
    let mut all = Source::ALL.to_vec();
    all.shuffle(rng);
    all.truncate(rng.gen_range(1..=4));
    all
}

pub fn random_examples(rng: &mut ChaCha8Rng, n: usize, input: usize, text: usize) -> Vec<Example> {
    let mut vec = |len: usize| (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    (0..n)
        .map(|_| Example {
            features: vec(input),
            metadata: MetadataEmbedding::new(vec(text), vec(text), vec(text), vec(text)),
        })
        .collect()
}

/// Uniform in-batch negatives, with replacement, never the anchor itself.
pub fn random_negatives(rng: &mut ChaCha8Rng, batch: usize, sources: usize, k: usize) -> NegativeAssignment {
    (0..batch)
        .map(|i| {
            (0..sources)
                .map(|_| {
                    (0..k)
                        .map(|_| {
                            let j = rng.gen_range(0..batch - 1);
                            if j >= i {
                                j + 1
                            } else {
                                j
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Straight-line evaluation of the batch objective from raw parameter arrays.
/// Returns the loss and the smallest distance of any hinge or ReLU input from
/// its kink, so finite-difference checks can skip non-smooth points.
pub fn reference_loss(
    model: &EmbeddingModel,
    batch: &[&Example],
    negatives: &NegativeAssignment,
    config: &LossConfig,
) -> (f64, f64) {
    let params = &model.params;
    let mut kink = f64::INFINITY;
    let affine = |w: &[f64], b: &[f64], x: &[f64]| -> Vec<f64> {
        let cols = x.len();
        (0..b.len())
            .map(|r| {
                let mut s = b[r];
                for c in 0..cols {
                    s += w[r * cols + c] * x[c];
                }
                s
            })
            .collect()
    };
    let distance = |u: &[f64], v: &[f64]| -> f64 {
        let mut uv = 0.0;
        let mut uu = 0.0;
        let mut vv = 0.0;
        for i in 0..u.len() {
            uv += u[i] * v[i];
            uu += u[i] * u[i];
            vv += v[i] * v[i];
        }
        if uu == 0.0 || vv == 0.0 {
            1.0
        } else {
            1.0 - uv / (uu.sqrt() * vv.sqrt())
        }
    };

    let mut total = 0.0;
    for (slot, &source) in config.sources.iter().enumerate() {
        let p = model.source_slot(source).unwrap();
        let proj = &params.projections[p];
        let mut source_sum = 0.0;
        for (i, ex) in batch.iter().enumerate() {
            let mut h = ex.features.clone();
            for (l, layer) in params.head.iter().enumerate() {
                h = affine(&layer.weight.data, &layer.bias, &h);
                if l + 1 < params.head.len() {
                    for v in h.iter_mut() {
                        kink = kink.min(v.abs());
                        *v = v.max(0.0);
                    }
                }
            }
            let pred = affine(&proj.weight.data, &proj.bias, &h);
            let d_pos = distance(&pred, ex.metadata.get(source));
            let mut example_sum = 0.0;
            for &j in &negatives[i][slot] {
                let d_neg = distance(&pred, batch[j].metadata.get(source));
                let hinge = config.margin + d_pos - d_neg;
                kink = kink.min(hinge.abs());
                example_sum += hinge.max(0.0);
            }
            source_sum += example_sum / config.negatives as f64;
        }
        total += source_sum / batch.len() as f64;
    }
    (total, kink)
}

/// Nearest-rank quartiles by sorting the full list of lengths.
fn oracle_quartiles(mut lengths: Vec<u64>) -> Quartiles {
    lengths.sort_unstable();
    let n = lengths.len();
    let at = |p: f64| lengths[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
    Quartiles {
        min: lengths[0],
        q25: at(0.25),
        q50: at(0.5),
        q75: at(0.75),
        max: lengths[n - 1],
    }
}

fn oracle_words(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Brute-force statistics straight from the definitions.
pub fn oracle_stats(records: &[MetadataRecord], nonmissing_only: bool) -> CorpusStats {
    let n = records.len();
    let sources = Source::ALL
        .iter()
        .map(|&s| {
            let values: Vec<String> = records
                .iter()
                .map(|r| match s {
                    Source::Title => r.title.clone(),
                    Source::Description => r.description.clone(),
                    Source::Tags => canonical_tag_string(&r.tags),
                    Source::Channel => r.channel.clone(),
                })
                .collect();
            let lengths: Vec<u64> = records
                .iter()
                .map(|r| match s {
                    Source::Title => oracle_words(&r.title),
                    Source::Description => oracle_words(&r.description),
                    Source::Tags => r.tags.iter().map(|t| oracle_words(t)).sum(),
                    Source::Channel => oracle_words(&r.channel),
                })
                .collect();
            let missing: Vec<bool> = records
                .iter()
                .map(|r| match s {
                    Source::Title => r.title.is_empty(),
                    Source::Description => r.description.is_empty(),
                    Source::Tags => r.tags.is_empty(),
                    Source::Channel => r.channel.is_empty(),
                })
                .collect();
            let total_words: u64 = lengths.iter().sum();
            let present = missing.iter().filter(|m| !**m).count();
            let mean_words = if nonmissing_only {
                if present == 0 {
                    0.0
                } else {
                    total_words as f64 / present as f64
                }
            } else {
                total_words as f64 / n as f64
            };
            let missing_rate = matches!(s, Source::Description | Source::Tags)
                .then(|| (n - present) as f64 / n as f64);
            let unique: HashSet<&String> = values.iter().collect();
            let mut counts: HashMap<&String, u64> = HashMap::new();
            for v in &values {
                *counts.entry(v).or_default() += 1;
            }
            let mut ranked: Vec<(String, u64)> = counts.into_iter().map(|(v, c)| (v.clone(), c)).collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            ranked.truncate(10);
            SourceStats {
                source: s,
                mean_words,
                missing_rate,
                unique_count: unique.len() as u64,
                unique_pct: unique.len() as f64 / n as f64,
                length_quartiles: oracle_quartiles(lengths),
                top_repeated: ranked,
            }
        })
        .collect::<Vec<_>>();
    let channels = sources[Source::Channel.index()].unique_count;
    CorpusStats {
        record_count: n as u64,
        sources,
        mean_tag_count: records.iter().map(|r| r.tags.len() as u64).sum::<u64>() as f64 / n as f64,
        videos_per_channel: n as f64 / channels as f64,
    }
}

/// Top-`n` ranks of every query, by grouping and sorting.
pub fn oracle_top_per_query(records: &[MetadataRecord], n: u64) -> Vec<MetadataRecord> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&MetadataRecord>> = BTreeMap::new();
    for r in records {
        if !groups.contains_key(r.query.as_str()) {
            order.push(&r.query);
        }
        groups.entry(&r.query).or_default().push(r);
    }
    let mut out = Vec::new();
    for q in order {
        let mut g = groups[q].clone();
        g.sort_by_key(|r| r.rank);
        out.extend(g.into_iter().filter(|r| r.rank <= n).cloned());
    }
    out
}

pub fn words(prefix: &str, count: usize) -> String {
    (0..count).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(" ")
}

/// `queries x per_query` records where deeper ranks have longer titles and
/// shorter descriptions (some of them missing), with repeated values so that
/// uniqueness and top-k statistics are exercised.
pub fn rank_trend_corpus(rng: &mut ChaCha8Rng, queries: usize, per_query: u64) -> Vec<MetadataRecord> {
    let mut out = Vec::new();
    for q in 0..queries {
        for rank in 1..=per_query {
            let depth = rank as f64 / per_query as f64;
            let title_len = 2 + (depth * 10.0) as usize + rng.gen_range(0..3);
            let desc_len = (30.0 * (1.0 - depth)) as usize + rng.gen_range(0..3);
            let description = if rng.gen_bool(0.1 + 0.3 * depth) {
                String::new()
            } else {
                words("d", desc_len)
            };
            let tags = (0..rng.gen_range(0..4)).map(|_| format!("tag{}", rng.gen_range(0..20))).collect();
            out.push(MetadataRecord {
                id: format!("q{q}-r{rank}"),
                query: format!("query {q}"),
                rank,
                title: words(if rng.gen_bool(0.2) { "common" } else { "t" }, title_len),
                description,
                tags,
                channel: format!("ch{}", rng.gen_range(0..300)),
                duration_s: rng.gen_range(1.0..900.0),
                age_days: rng.gen_range(0..4000),
                label: None,
            });
        }
    }
    out
}

fn random_text(rng: &mut ChaCha8Rng, max: usize) -> String {
    const ALPHABET: &[char] = &['a', 'b', ' ', 'é', '"', '\\', '\n', '\t', '\u{1F}', '語', '\u{0}'];
    (0..rng.gen_range(0..max)).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

pub fn random_record(rng: &mut ChaCha8Rng, id: usize) -> MetadataRecord {
    let title = random_text(rng, 12);
    let description = random_text(rng, 30);
    let tags = (0..rng.gen_range(0..4)).map(|_| random_text(rng, 6)).collect();
    let channel = random_text(rng, 8);
    let query = random_text(rng, 6);
    MetadataRecord {
        id: format!("r{id}"),
        query,
        rank: rng.gen_range(1..1_000_000),
        title,
        description,
        tags,
        channel,
        duration_s: if rng.gen_bool(0.5) {
            rng.gen_range(0.0..1e5)
        } else {
            rng.gen_range(0..10_000) as f64
        },
        age_days: rng.gen(),
        label: if rng.gen_bool(0.5) { Some(rng.gen()) } else { None },
    }
}
