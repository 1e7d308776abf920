//! Corpus scaling indicators: word lengths, missingness, uniqueness, length
//! quartiles and most-repeated values, per metadata source.
//!
//! Aggregation is map-reduce shaped. [`StatsAccumulator`] holds integer
//! totals plus the length and value multisets, merges associatively, and is
//! only turned into means/quartiles/top-k by [`StatsAccumulator::finish`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use crate::corpus::{canonical_tag_string, take_top_per_query, MetadataRecord};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::source::Source;

pub const TOP_K: usize = 10;

/// Number of maximal runs of non-whitespace characters.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Quartiles {
    pub min: u64,
    pub q25: u64,
    pub q50: u64,
    pub q75: u64,
    pub max: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceStats {
    pub source: Source,
    pub mean_words: f64,
    /// Only reported for descriptions and tags.
    pub missing_rate: Option<f64>,
    pub unique_count: u64,
    pub unique_pct: f64,
    pub length_quartiles: Quartiles,
    pub top_repeated: Vec<(String, u64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusStats {
    pub record_count: u64,
    /// Indexed by [`Source::index`].
    pub sources: Vec<SourceStats>,
    pub mean_tag_count: f64,
    pub videos_per_channel: f64,
}

impl CorpusStats {
    pub fn source(&self, s: Source) -> &SourceStats {
        &self.sources[s.index()]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StatsOptions {
    /// Average word lengths over records where the source is present only.
    pub nonmissing_only: bool,
}

#[derive(Clone, Debug, Default)]
struct SourceAcc {
    total_words: u64,
    nonmissing: u64,
    lengths: BTreeMap<u64, u64>,
    values: HashMap<String, u64>,
}

impl SourceAcc {
    fn add(&mut self, words: u64, missing: bool, value: String) {
        self.total_words += words;
        if !missing {
            self.nonmissing += 1;
        }
        *self.lengths.entry(words).or_insert(0) += 1;
        *self.values.entry(value).or_insert(0) += 1;
    }

    fn merge(&mut self, other: SourceAcc) {
        self.total_words += other.total_words;
        self.nonmissing += other.nonmissing;
        for (len, c) in other.lengths {
            *self.lengths.entry(len).or_insert(0) += c;
        }
        for (v, c) in other.values {
            *self.values.entry(v).or_insert(0) += c;
        }
    }
}

/// Mergeable partial aggregate over a shard of records.
#[derive(Clone, Debug, Default)]
pub struct StatsAccumulator {
    records: u64,
    total_tags: u64,
    per_source: [SourceAcc; 4],
}

impl StatsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, r: &MetadataRecord) {
        self.records += 1;
        self.total_tags += r.tags.len() as u64;
        let [title, description, tags, channel] = &mut self.per_source;
        title.add(word_count(&r.title) as u64, r.title.is_empty(), r.title.clone());
        description.add(
            word_count(&r.description) as u64,
            r.description.is_empty(),
            r.description.clone(),
        );
        let tag_words: usize = r.tags.iter().map(|t| word_count(t)).sum();
        tags.add(tag_words as u64, r.tags.is_empty(), canonical_tag_string(&r.tags));
        channel.add(word_count(&r.channel) as u64, r.channel.is_empty(), r.channel.clone());
    }

    pub fn merge(&mut self, other: StatsAccumulator) {
        self.records += other.records;
        self.total_tags += other.total_tags;
        for (mine, theirs) in self.per_source.iter_mut().zip(other.per_source) {
            mine.merge(theirs);
        }
    }

    pub fn record_count(&self) -> u64 {
        self.records
    }

    pub fn finish(&self, options: StatsOptions) -> Result<CorpusStats> {
        if self.records == 0 {
            return Err(Error::Invalid("statistics need at least one record".into()));
        }
        let n = self.records as f64;
        let sources = Source::ALL
            .iter()
            .map(|&s| {
                let acc = &self.per_source[s.index()];
                let mean_words = if options.nonmissing_only {
                    if acc.nonmissing == 0 {
                        0.0
                    } else {
                        acc.total_words as f64 / acc.nonmissing as f64
                    }
                } else {
                    acc.total_words as f64 / n
                };
                let missing_rate = match s {
                    Source::Description | Source::Tags => {
                        Some((self.records - acc.nonmissing) as f64 / n)
                    }
                    _ => None,
                };
                let unique_count = acc.values.len() as u64;
                SourceStats {
                    source: s,
                    mean_words,
                    missing_rate,
                    unique_count,
                    unique_pct: unique_count as f64 / n,
                    length_quartiles: nearest_rank_quartiles(&acc.lengths, self.records),
                    top_repeated: top_k(&acc.values, TOP_K),
                }
            })
            .collect::<Vec<_>>();
        let channels = sources[Source::Channel.index()].unique_count;
        Ok(CorpusStats {
            record_count: self.records,
            mean_tag_count: self.total_tags as f64 / n,
            videos_per_channel: n / channels as f64,
            sources,
        })
    }
}

/// Order statistic at 1-based position `ceil(p * n)` of a length histogram.
fn nearest_rank(lengths: &BTreeMap<u64, u64>, n: u64, p: f64) -> u64 {
    let target = ((p * n as f64).ceil() as u64).clamp(1, n);
    let mut seen = 0;
    for (&len, &c) in lengths {
        seen += c;
        if seen >= target {
            return len;
        }
    }
    unreachable!("histogram holds n entries")
}

fn nearest_rank_quartiles(lengths: &BTreeMap<u64, u64>, n: u64) -> Quartiles {
    Quartiles {
        min: *lengths.keys().next().unwrap_or(&0),
        q25: nearest_rank(lengths, n, 0.25),
        q50: nearest_rank(lengths, n, 0.5),
        q75: nearest_rank(lengths, n, 0.75),
        max: *lengths.keys().next_back().unwrap_or(&0),
    }
}

/// Most frequent values; ties broken lexicographically.
fn top_k(values: &HashMap<String, u64>, k: usize) -> Vec<(String, u64)> {
    let mut all: Vec<(&String, u64)> = values.iter().map(|(v, &c)| (v, c)).collect();
    all.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    all.into_iter().take(k).map(|(v, c)| (v.clone(), c)).collect()
}

/// Single streaming pass over `records`.
pub fn compute_stats<'a, I>(records: I, options: StatsOptions) -> Result<CorpusStats>
where
    I: IntoIterator<Item = &'a MetadataRecord>,
{
    let mut acc = StatsAccumulator::new();
    for r in records {
        acc.add(r);
    }
    acc.finish(options)
}

/// Sharded version of [`compute_stats`]; shards are merged in index order.
pub fn compute_stats_sharded(
    records: &[MetadataRecord],
    options: StatsOptions,
    exec: Exec,
) -> Result<CorpusStats> {
    const SHARD: usize = 4096;
    let shards: Vec<&[MetadataRecord]> = records.chunks(SHARD).collect();
    let partials = exec.map_slice(&shards, |shard| {
        let mut acc = StatsAccumulator::new();
        for r in *shard {
            acc.add(r);
        }
        acc
    });
    let mut total = StatsAccumulator::new();
    for p in partials {
        total.merge(p);
    }
    total.finish(options)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubsetStats {
    /// Requested subset size.
    pub size: u64,
    /// Results kept per query, `ceil(size / query_count)`.
    pub per_query: u64,
    /// The request exceeded the corpus; stats cover the full corpus.
    pub truncated: bool,
    pub stats: CorpusStats,
}

/// Statistics over increasingly deep top-N-per-query slices.
pub fn stats_by_subset(
    records: &[MetadataRecord],
    sizes: &[u64],
    options: StatsOptions,
    exec: Exec,
) -> Result<Vec<SubsetStats>> {
    if sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Invalid("subset sizes must be sorted ascending".into()));
    }
    if sizes.contains(&0) {
        return Err(Error::Invalid("subset sizes must be positive".into()));
    }
    let queries = records.iter().map(|r| r.query.as_str()).collect::<HashSet<_>>().len() as u64;
    let total = records.len() as u64;
    let max_rank = records.iter().map(|r| r.rank).max().unwrap_or(1);
    sizes
        .iter()
        .map(|&size| {
            let truncated = size > total;
            let per_query = if truncated { max_rank } else { size.div_ceil(queries.max(1)) };
            let slice = take_top_per_query(records.iter().cloned(), per_query)?;
            Ok(SubsetStats {
                size,
                per_query,
                truncated,
                stats: compute_stats_sharded(&slice, options, exec)?,
            })
        })
        .collect()
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization is infallible")
}

/// Writes one `key = value` block per subset.
pub fn write_report<W: Write>(mut out: W, subsets: &[SubsetStats]) -> Result<()> {
    for (i, sub) in subsets.iter().enumerate() {
        if i > 0 {
            writeln!(out)?;
        }
        let st = &sub.stats;
        writeln!(out, "[subset]")?;
        writeln!(out, "size = {}", sub.size)?;
        writeln!(out, "per_query = {}", sub.per_query)?;
        writeln!(out, "truncated = {}", sub.truncated)?;
        writeln!(out, "record_count = {}", st.record_count)?;
        writeln!(out, "mean_tag_count = {}", st.mean_tag_count)?;
        writeln!(out, "videos_per_channel = {}", st.videos_per_channel)?;
        for s in &st.sources {
            let name = s.source.name();
            writeln!(out, "{name}.mean_words = {}", s.mean_words)?;
            if let Some(m) = s.missing_rate {
                writeln!(out, "{name}.missing_rate = {m}")?;
            }
            writeln!(out, "{name}.unique_count = {}", s.unique_count)?;
            writeln!(out, "{name}.unique_pct = {}", s.unique_pct)?;
            let q = s.length_quartiles;
            writeln!(
                out,
                "{name}.length_quartiles = {} {} {} {} {}",
                q.min, q.q25, q.q50, q.q75, q.max
            )?;
            for (rank, (value, count)) in s.top_repeated.iter().enumerate() {
                writeln!(out, "{name}.top.{} = {} {count}", rank + 1, json_str(value))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Tab-separated `size indicator value` rows for external plotting.
pub fn write_plot_table<W: Write>(mut out: W, subsets: &[SubsetStats]) -> Result<()> {
    writeln!(out, "size\tindicator\tvalue")?;
    for sub in subsets {
        let st = &sub.stats;
        let size = st.record_count;
        for s in &st.sources {
            writeln!(out, "{size}\tmean_words.{}\t{}", s.source, s.mean_words)?;
        }
        for s in &st.sources {
            if let Some(m) = s.missing_rate {
                writeln!(out, "{size}\tmissing_rate.{}\t{m}", s.source)?;
            }
        }
        writeln!(out, "{size}\tmean_tag_count\t{}", st.mean_tag_count)?;
    }
    out.flush()?;
    Ok(())
}
