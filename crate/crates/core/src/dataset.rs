//! Joins corpus records with their video features and pooled metadata.

use std::collections::HashMap;

use crate::corpus::MetadataRecord;
use crate::error::{Error, Result};
use crate::features::VideoFeatureFile;
use crate::objective::Example;
use crate::textpool::TokenFile;

#[derive(Clone, Debug)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub examples: Vec<Example>,
    pub labels: Vec<Option<i64>>,
}

impl Dataset {
    /// One example per corpus record, in corpus order. Every record must have
    /// both video features and token embeddings.
    pub fn assemble(records: &[MetadataRecord], video: &VideoFeatureFile, tokens: &TokenFile) -> Result<Self> {
        let video_by_id: HashMap<&str, &[f64]> = video
            .records
            .iter()
            .map(|v| (v.id.as_str(), v.values.as_slice()))
            .collect();
        let empty = tokens.empty_embedding.as_deref();
        let tokens_by_id: HashMap<&str, usize> = tokens
            .records
            .iter()
            .enumerate()
            .map(|(i, t)| (t.record_id.as_str(), i))
            .collect();
        let mut out = Dataset {
            ids: Vec::with_capacity(records.len()),
            examples: Vec::with_capacity(records.len()),
            labels: Vec::with_capacity(records.len()),
        };
        for r in records {
            let features = video_by_id
                .get(r.id.as_str())
                .ok_or_else(|| Error::Invalid(format!("no video features for `{}`", r.id)))?;
            let t = tokens_by_id
                .get(r.id.as_str())
                .ok_or_else(|| Error::Invalid(format!("no token embeddings for `{}`", r.id)))?;
            let metadata = crate::textpool::embed_record(&tokens.records[*t], tokens.width, empty)?;
            out.ids.push(r.id.clone());
            out.examples.push(Example {
                features: features.to_vec(),
                metadata,
            });
            out.labels.push(r.label);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Labels as class indices; errors if any record is unlabeled or negative.
    pub fn class_labels(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .zip(&self.ids)
            .map(|(l, id)| match l {
                Some(l) if *l >= 0 => Ok(*l as usize),
                _ => Err(Error::Invalid(format!("record `{id}` has no usable label"))),
            })
            .collect()
    }
}
