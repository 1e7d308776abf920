//! Pooling of precomputed token embeddings into one fixed-width vector per
//! metadata source, and the `WVTE` token embedding file.
//!
//! Token vectors are consumed as given; the text encoder is not part of this
//! crate and the pooled vectors are never trained.

use std::path::Path;

use crate::binio::{ByteReader, ByteWriter};
use crate::error::{check_width, Error, Result};
use crate::source::Source;

pub const DEFAULT_TEXT_WIDTH: usize = 768;

const MAGIC: &[u8; 4] = b"WVTE";
const VERSION: u32 = 1;

/// Token-level embeddings of one record's metadata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TokenEmbeddingSet {
    pub record_id: String,
    pub title: Vec<Vec<f64>>,
    pub description: Vec<Vec<f64>>,
    /// One token list per tag.
    pub tags: Vec<Vec<Vec<f64>>>,
    pub channel: Vec<Vec<f64>>,
}

impl TokenEmbeddingSet {
    fn all_vectors(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.title
            .iter()
            .chain(&self.description)
            .chain(self.tags.iter().flatten())
            .chain(&self.channel)
    }

    pub fn validate(&self, width: usize) -> Result<()> {
        for v in self.all_vectors() {
            check_width(width, v.len())?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("token embedding of `{}`", self.record_id)));
            }
        }
        Ok(())
    }
}

/// Pooled metadata representation, one vector per source.
#[derive(Clone, Debug, PartialEq)]
pub struct MetadataEmbedding {
    per_source: [Vec<f64>; 4],
}

impl MetadataEmbedding {
    pub fn new(title: Vec<f64>, description: Vec<f64>, tags: Vec<f64>, channel: Vec<f64>) -> Self {
        Self {
            per_source: [title, description, tags, channel],
        }
    }

    /// Same vector for every source.
    pub fn uniform(v: Vec<f64>) -> Self {
        Self::new(v.clone(), v.clone(), v.clone(), v)
    }

    pub fn get(&self, s: Source) -> &[f64] {
        &self.per_source[s.index()]
    }

    pub fn set(&mut self, s: Source, v: Vec<f64>) {
        self.per_source[s.index()] = v;
    }

    pub fn width(&self) -> usize {
        self.per_source[0].len()
    }
}

/// Componentwise mean; the zero vector for an empty list.
pub fn pool_tokens(tokens: &[Vec<f64>], width: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; width];
    if tokens.is_empty() {
        return Ok(out);
    }
    for t in tokens {
        check_width(width, t.len())?;
        for (o, x) in out.iter_mut().zip(t) {
            *o += x;
        }
    }
    let n = tokens.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// Mean of per-tag pooled vectors. With no tags, returns `empty` (or zeros if
/// no empty-string embedding is available).
pub fn pool_tags(tags: &[Vec<Vec<f64>>], width: usize, empty: Option<&[f64]>) -> Result<Vec<f64>> {
    if tags.is_empty() {
        return empty_or_zero(width, empty);
    }
    let pooled = tags
        .iter()
        .map(|t| pool_tokens(t, width))
        .collect::<Result<Vec<_>>>()?;
    pool_tokens(&pooled, width)
}

fn empty_or_zero(width: usize, empty: Option<&[f64]>) -> Result<Vec<f64>> {
    match empty {
        Some(e) => {
            check_width(width, e.len())?;
            Ok(e.to_vec())
        }
        None => Ok(vec![0.0; width]),
    }
}

fn pool_or_empty(tokens: &[Vec<f64>], width: usize, empty: Option<&[f64]>) -> Result<Vec<f64>> {
    if tokens.is_empty() {
        empty_or_zero(width, empty)
    } else {
        pool_tokens(tokens, width)
    }
}

/// Pools every source of one record, substituting the empty-string embedding
/// for missing metadata.
pub fn embed_record(
    tokens: &TokenEmbeddingSet,
    width: usize,
    empty: Option<&[f64]>,
) -> Result<MetadataEmbedding> {
    Ok(MetadataEmbedding::new(
        pool_or_empty(&tokens.title, width, empty)?,
        pool_or_empty(&tokens.description, width, empty)?,
        pool_tags(&tokens.tags, width, empty)?,
        pool_or_empty(&tokens.channel, width, empty)?,
    ))
}

/// Contents of a `WVTE` file.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenFile {
    pub width: usize,
    /// The encoder's embedding of the empty string, if the producer supplied it.
    pub empty_embedding: Option<Vec<f64>>,
    pub records: Vec<TokenEmbeddingSet>,
}

impl TokenFile {
    pub fn embed_all(&self) -> Result<Vec<MetadataEmbedding>> {
        self.records
            .iter()
            .map(|r| embed_record(r, self.width, self.empty_embedding.as_deref()))
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        const WHAT: &str = "token embedding file";
        let mut w = ByteWriter::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.u32(self.width as u32);
        match &self.empty_embedding {
            Some(e) => {
                check_width(self.width, e.len())?;
                w.u8(1);
                w.f32_slice(e);
            }
            None => w.u8(0),
        }
        w.u64(self.records.len() as u64);
        for r in &self.records {
            r.validate(self.width)?;
            w.short_string(WHAT, &r.record_id)?;
            for source in Source::ALL {
                if source == Source::Tags {
                    w.count_u16(WHAT, r.tags.len())?;
                    for tag in &r.tags {
                        write_tokens(&mut w, tag)?;
                    }
                } else {
                    let tokens = match source {
                        Source::Title => &r.title,
                        Source::Description => &r.description,
                        _ => &r.channel,
                    };
                    write_tokens(&mut w, tokens)?;
                }
            }
        }
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = ByteReader::new("token embedding file", bytes);
        rd.magic(MAGIC)?;
        rd.version(VERSION)?;
        let width = rd.u32()? as usize;
        if width == 0 {
            return Err(Error::Format {
                what: "token embedding file",
                message: "zero embedding width".into(),
            });
        }
        let empty_embedding = match rd.u8()? {
            0 => None,
            1 => Some(rd.f32_vec(width)?),
            f => {
                return Err(Error::Format {
                    what: "token embedding file",
                    message: format!("bad empty-embedding flag {f}"),
                })
            }
        };
        let count = rd.u64()?;
        let mut records = Vec::new();
        for _ in 0..count {
            let record_id = rd.short_string()?;
            let title = read_tokens(&mut rd, width)?;
            let description = read_tokens(&mut rd, width)?;
            let n_tags = rd.u16()?;
            let tags = (0..n_tags)
                .map(|_| read_tokens(&mut rd, width))
                .collect::<Result<Vec<_>>>()?;
            let channel = read_tokens(&mut rd, width)?;
            let set = TokenEmbeddingSet {
                record_id,
                title,
                description,
                tags,
                channel,
            };
            set.validate(width)?;
            records.push(set);
        }
        rd.finish()?;
        if let Some(e) = &empty_embedding {
            if e.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("empty-string embedding".into()));
            }
        }
        Ok(Self {
            width,
            empty_embedding,
            records,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }
}

fn write_tokens(w: &mut ByteWriter, tokens: &[Vec<f64>]) -> Result<()> {
    w.count_u16("token embedding file", tokens.len())?;
    for t in tokens {
        w.f32_slice(t);
    }
    Ok(())
}

fn read_tokens(rd: &mut ByteReader<'_>, width: usize) -> Result<Vec<Vec<f64>>> {
    let n = rd.u16()?;
    (0..n).map(|_| rd.f32_vec(width)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_tokens_examples() {
        assert_eq!(pool_tokens(&[vec![1.0, 0.0], vec![0.0, 1.0]], 2).unwrap(), vec![0.5, 0.5]);
        assert_eq!(pool_tokens(&[vec![3.0, -2.0]], 2).unwrap(), vec![3.0, -2.0]);
        assert_eq!(pool_tokens(&[], 3).unwrap(), vec![0.0; 3]);
        assert!(matches!(
            pool_tokens(&[vec![1.0, 0.0], vec![1.0]], 2),
            Err(Error::WidthMismatch { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn pool_tags_examples() {
        let u = vec![vec![2.0, 0.0], vec![0.0, 0.0]]; // pooled (1, 0)
        let v = vec![vec![0.0, 4.0]];
        assert_eq!(pool_tags(&[u.clone(), v.clone()], 2, None).unwrap(), vec![0.5, 2.0]);
        assert_eq!(pool_tags(&[v.clone()], 2, None).unwrap(), vec![0.0, 4.0]);
        let e = [0.25, -0.5];
        assert_eq!(pool_tags(&[], 2, Some(&e)).unwrap(), e.to_vec());
        assert_eq!(pool_tags(&[], 2, None).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn tag_mean_differs_from_flat_token_mean() {
        // Tags with different token counts weigh tags, not tokens, equally.
        let tags = vec![vec![vec![1.0], vec![1.0], vec![1.0]], vec![vec![0.0]]];
        let per_tag = pool_tags(&tags, 1, None).unwrap();
        let flat: Vec<Vec<f64>> = tags.iter().flatten().cloned().collect();
        let flat_mean = pool_tokens(&flat, 1).unwrap();
        assert_eq!(per_tag, vec![0.5]);
        assert_eq!(flat_mean, vec![0.75]);
    }

    #[test]
    fn embed_record_substitutes_empty_embedding() {
        let e = vec![9.0, 9.0];
        let set = TokenEmbeddingSet {
            record_id: "r".into(),
            title: vec![vec![1.0, 3.0], vec![3.0, 1.0]],
            description: vec![],
            tags: vec![vec![vec![5.0, 6.0]]],
            channel: vec![vec![0.0, 1.0]],
        };
        let m = embed_record(&set, 2, Some(&e)).unwrap();
        assert_eq!(m.get(Source::Title), &[2.0, 2.0]);
        assert_eq!(m.get(Source::Description), &[9.0, 9.0]);
        assert_eq!(m.get(Source::Tags), &[5.0, 6.0]);
        assert_eq!(m.get(Source::Channel), &[0.0, 1.0]);
        assert!(embed_record(&set, 2, Some(&[1.0])).is_err());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let file = TokenFile {
            width: 2,
            empty_embedding: Some(vec![0.5, 0.25]),
            records: vec![TokenEmbeddingSet {
                record_id: "a".into(),
                title: vec![vec![1.0, 2.0]],
                ..Default::default()
            }],
        };
        let bytes = file.to_bytes().unwrap();
        assert_eq!(TokenFile::from_bytes(&bytes).unwrap(), file);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(TokenFile::from_bytes(&bad), Err(Error::Format { .. })));
        assert!(matches!(
            TokenFile::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated { .. })
        ));
    }
}
