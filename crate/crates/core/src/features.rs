//! `WVTV` video feature file: one raw feature vector per record id.

use std::path::Path;

use crate::binio::{ByteReader, ByteWriter};
use crate::error::{check_width, Error, Result};

const MAGIC: &[u8; 4] = b"WVTV";
const VERSION: u32 = 1;
const WHAT: &str = "video feature file";

#[derive(Clone, Debug, PartialEq)]
pub struct VideoFeature {
    pub id: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoFeatureFile {
    pub width: usize,
    pub records: Vec<VideoFeature>,
}

impl VideoFeatureFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.u32(self.width as u32);
        w.u64(self.records.len() as u64);
        for r in &self.records {
            check_width(self.width, r.values.len())?;
            w.short_string(WHAT, &r.id)?;
            w.f32_slice(&r.values);
        }
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = ByteReader::new(WHAT, bytes);
        rd.magic(MAGIC)?;
        rd.version(VERSION)?;
        let width = rd.u32()? as usize;
        let count = rd.u64()?;
        let mut records = Vec::new();
        for _ in 0..count {
            let id = rd.short_string()?;
            let values = rd.f32_vec(width)?;
            if values.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("video features of `{id}`")));
            }
            records.push(VideoFeature { id, values });
        }
        rd.finish()?;
        Ok(Self { width, records })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }
}
