//! Web-video metadata records: the line-delimited corpus format, collection
//! filters, and top-N-per-query subsetting.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Videos shorter than this are discarded (training clips are 10 s long).
pub const MIN_DURATION_S: f64 = 10.0;
/// Videos uploaded within this many days are discarded.
pub const RECENT_UPLOAD_DAYS: u64 = 90;
/// Separator used by [`canonical_tag_string`] (ASCII unit separator).
pub const TAG_SEPARATOR: char = '\u{1F}';

const KEYS: [&str; 10] = [
    "id",
    "query",
    "rank",
    "title",
    "description",
    "tags",
    "channel",
    "duration_s",
    "age_days",
    "label",
];

/// One web video's textual metadata plus its collection attributes.
///
/// Missing descriptions and tags are stored as `""` and `[]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetadataRecord {
    pub id: String,
    pub query: String,
    pub rank: u64,
    pub title: String,
    pub description: String,
    pub tags: Vec<String>,
    pub channel: String,
    pub duration_s: f64,
    pub age_days: u64,
    pub label: Option<i64>,
}

impl MetadataRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty `id`".into());
        }
        if self.rank < 1 {
            return Err("`rank` must be >= 1".into());
        }
        if !self.duration_s.is_finite() || self.duration_s < 0.0 {
            return Err(format!("invalid `duration_s` {}", self.duration_s));
        }
        Ok(())
    }

    /// Parses one corpus line. Every key must be present; `label` may be null.
    pub fn from_json_line(line: &str) -> std::result::Result<Self, String> {
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let obj = value
            .as_object()
            .ok_or_else(|| "record is not a JSON object".to_string())?;
        for key in KEYS {
            if !obj.contains_key(key) {
                return Err(format!("missing field `{key}`"));
            }
        }
        if let Some(extra) = obj.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(format!("unknown field `{extra}`"));
        }
        let record: MetadataRecord = serde_json::from_value(value).map_err(|e| e.to_string())?;
        record.validate()?;
        Ok(record)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }
}

/// Streaming reader over a corpus file. Yields records in file order and
/// enforces per-file uniqueness of `id` and `(query, rank)`.
pub struct CorpusReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    seen_ids: HashSet<String>,
    seen_ranks: HashSet<(String, u64)>,
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
            seen_ids: HashSet::new(),
            seen_ranks: HashSet::new(),
        }
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<MetadataRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let line_no = self.line_no;
            let err = |message: String| Some(Err(Error::Corpus { line: line_no, message }));
            let record = match MetadataRecord::from_json_line(&line) {
                Ok(r) => r,
                Err(message) => return err(message),
            };
            if !self.seen_ids.insert(record.id.clone()) {
                return err(format!("duplicate id `{}`", record.id));
            }
            if !self.seen_ranks.insert((record.query.clone(), record.rank)) {
                return err(format!(
                    "duplicate (query, rank) = ({:?}, {})",
                    record.query, record.rank
                ));
            }
            return Some(Ok(record));
        }
    }
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<CorpusReader<BufReader<File>>> {
    Ok(CorpusReader::new(BufReader::new(File::open(path)?)))
}

/// Reads a whole corpus file, stopping at the first bad line.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<MetadataRecord>> {
    read_corpus(path)?.collect()
}

pub fn write_records<W: Write>(mut out: W, records: &[MetadataRecord]) -> Result<()> {
    for r in records {
        out.write_all(r.to_json_line().as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_corpus(path: impl AsRef<Path>, records: &[MetadataRecord]) -> Result<()> {
    write_records(BufWriter::new(File::create(path)?), records)
}

/// Evaluation-set video ids to exclude from the corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Denylist {
    ids: HashSet<String>,
}

impl Denylist {
    pub fn new<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            ids: ids.into_iter().map(Into::into).collect(),
        }
    }

    /// One id per line; surrounding whitespace and blank lines are ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut ids = HashSet::new();
        for line in reader.lines() {
            let line = line?;
            let id = line.trim();
            if !id.is_empty() {
                ids.insert(id.to_string());
            }
        }
        Ok(Self { ids })
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.contains(id)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Keep iff the video is at least 10 s long, older than 90 days, and not on
/// the denylist.
pub fn filter_record(record: &MetadataRecord, denylist: &Denylist) -> bool {
    record.duration_s >= MIN_DURATION_S
        && record.age_days > RECENT_UPLOAD_DAYS
        && !denylist.contains(&record.id)
}

/// Keeps the records with `rank <= n_per_query`. Output is grouped by query in
/// order of first appearance, rank-ascending within each query.
pub fn take_top_per_query<I>(records: I, n_per_query: u64) -> Result<Vec<MetadataRecord>>
where
    I: IntoIterator<Item = MetadataRecord>,
{
    if n_per_query < 1 {
        return Err(Error::Invalid("n_per_query must be >= 1".into()));
    }
    let mut order: HashMap<String, usize> = HashMap::new();
    let mut kept: Vec<(usize, MetadataRecord)> = Vec::new();
    for r in records {
        let next = order.len();
        let q = *order.entry(r.query.clone()).or_insert(next);
        if r.rank <= n_per_query {
            kept.push((q, r));
        }
    }
    kept.sort_by_key(|(q, r)| (*q, r.rank));
    Ok(kept.into_iter().map(|(_, r)| r).collect())
}

/// Tag-set identity: trimmed tags joined with [`TAG_SEPARATOR`].
pub fn canonical_tag_string<S: AsRef<str>>(tags: &[S]) -> String {
    let mut out = String::new();
    for (i, tag) in tags.iter().enumerate() {
        if i > 0 {
            out.push(TAG_SEPARATOR);
        }
        out.push_str(tag.as_ref().trim());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(id: &str, query: &str, rank: u64) -> MetadataRecord {
        MetadataRecord {
            id: id.into(),
            query: query.into(),
            rank,
            title: format!("title {id}"),
            description: String::new(),
            tags: vec![],
            channel: "ch".into(),
            duration_s: 30.0,
            age_days: 400,
            label: None,
        }
    }

    fn read_str(s: &str) -> Result<Vec<MetadataRecord>> {
        CorpusReader::new(s.as_bytes()).collect()
    }

    #[test]
    fn reads_records_in_order() {
        let recs = vec![record("a", "q", 1), record("b", "q", 2), record("c", "r", 1)];
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let back = read_str(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn empty_file_is_empty_stream() {
        assert!(read_str("").unwrap().is_empty());
    }

    #[test]
    fn missing_id_names_the_line() {
        let good = record("a", "q", 1).to_json_line();
        let bad = good.replace("\"id\":\"a\",", "");
        let text = format!("{good}\n{bad}\n");
        match read_str(&text) {
            Err(Error::Corpus { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("`id`"), "{message}");
            }
            other => panic!("expected corpus error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_zero_rank_and_duplicates() {
        let zero = record("a", "q", 0).to_json_line();
        assert!(read_str(&zero).is_err());
        let dup_id = format!(
            "{}\n{}",
            record("a", "q", 1).to_json_line(),
            record("a", "q", 2).to_json_line()
        );
        assert!(matches!(read_str(&dup_id), Err(Error::Corpus { line: 2, .. })));
        let dup_rank = format!(
            "{}\n{}",
            record("a", "q", 1).to_json_line(),
            record("b", "q", 1).to_json_line()
        );
        assert!(read_str(&dup_rank).is_err());
    }

    #[test]
    fn label_may_be_null_but_not_absent() {
        let mut r = record("a", "q", 1);
        r.label = Some(3);
        let line = r.to_json_line();
        assert!(line.contains("\"label\":3"));
        let null = record("a", "q", 1).to_json_line();
        assert!(null.contains("\"label\":null"));
        let absent = null.replace(",\"label\":null", "");
        assert!(MetadataRecord::from_json_line(&absent).is_err());
    }

    #[test]
    fn filter_examples() {
        let deny = Denylist::new(["kin1"]);
        let mut r = record("x", "q", 1);
        r.duration_s = 9.9;
        r.age_days = 365;
        assert!(!filter_record(&r, &deny));
        r.duration_s = 12.0;
        r.age_days = 30;
        assert!(!filter_record(&r, &deny));
        r.age_days = 365;
        assert!(filter_record(&r, &deny));
        r.id = "kin1".into();
        assert!(!filter_record(&r, &deny));
    }

    #[test]
    fn filter_boundaries() {
        let deny = Denylist::default();
        let mut r = record("x", "q", 1);
        r.duration_s = 10.0;
        r.age_days = 91;
        assert!(filter_record(&r, &deny));
        r.age_days = 90;
        assert!(!filter_record(&r, &deny));
    }

    #[test]
    fn top_one_per_query() {
        let recs = vec![
            record("a2", "a", 2),
            record("b1", "b", 1),
            record("a1", "a", 1),
            record("b2", "b", 2),
        ];
        let top = take_top_per_query(recs.clone(), 1).unwrap();
        let ids: Vec<_> = top.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a1", "b1"]);
        let all = take_top_per_query(recs, 100).unwrap();
        let ids: Vec<_> = all.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a1", "a2", "b1", "b2"]);
        assert!(take_top_per_query(Vec::new(), 0).is_err());
    }

    #[test]
    fn canonical_tags() {
        assert_eq!(canonical_tag_string(&["fun", "video"]), "fun\u{1F}video");
        assert_eq!(canonical_tag_string::<&str>(&[]), "");
        assert_eq!(canonical_tag_string(&[" a "]), "a");
    }

    fn arb_record() -> impl Strategy<Value = MetadataRecord> {
        (
            "[a-z0-9]{1,8}",
            "\\PC{0,12}",
            1u64..1000,
            "\\PC{0,20}",
            "\\PC{0,30}",
            prop::collection::vec("\\PC{0,6}", 0..4),
            "\\PC{0,10}",
            0.0f64..1e5,
            0u64..5000,
            prop::option::of(-5i64..50),
        )
            .prop_map(
                |(id, query, rank, title, description, tags, channel, duration_s, age_days, label)| {
                    MetadataRecord {
                        id,
                        query,
                        rank,
                        title,
                        description,
                        tags,
                        channel,
                        duration_s,
                        age_days,
                        label,
                    }
                },
            )
    }

    proptest! {
        #[test]
        fn line_round_trip_is_byte_exact(r in arb_record()) {
            let line = r.to_json_line();
            let back = MetadataRecord::from_json_line(&line).unwrap();
            prop_assert_eq!(&back, &r);
            prop_assert_eq!(back.to_json_line(), line);
        }

        #[test]
        fn top_per_query_size_matches_grouping(
            counts in prop::collection::vec(1u64..30, 1..8),
            n in 1u64..35,
        ) {
            let mut recs = Vec::new();
            for (q, &c) in counts.iter().enumerate() {
                for rank in 1..=c {
                    recs.push(record(&format!("{q}-{rank}"), &format!("q{q}"), rank));
                }
            }
            recs.reverse();
            let expected: u64 = counts.iter().map(|&c| c.min(n)).sum();
            let out = take_top_per_query(recs, n).unwrap();
            prop_assert_eq!(out.len() as u64, expected);
            prop_assert!(out.iter().all(|r| r.rank <= n));
        }
    }
}
