use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::binio::{ByteReader, ByteWriter};
use crate::embedder::{read_rng, write_rng};
use crate::error::{Error, Result};
use crate::objective::NegativeAssignment;

/// Draws `k` in-chunk negatives for every anchor and source slot.
///
/// Negatives are uniform over the other chunk members, without replacement
/// when the chunk has at least `k` other members and with replacement
/// otherwise. With `share`, every source reuses the first slot's draw.
pub fn sample_negatives<R: Rng>(
    chunk_len: usize,
    k: usize,
    n_sources: usize,
    share: bool,
    rng: &mut R,
) -> Result<NegativeAssignment> {
    if chunk_len < 2 {
        return Err(Error::Invalid(format!(
            "chunk of {chunk_len} has no in-chunk negatives"
        )));
    }
    let others = chunk_len - 1;
    let skip_anchor = |anchor: usize, j: usize| if j >= anchor { j + 1 } else { j };
    let mut out = Vec::with_capacity(chunk_len);
    for anchor in 0..chunk_len {
        let mut per_source: Vec<Vec<usize>> = Vec::with_capacity(n_sources);
        for slot in 0..n_sources {
            if share && slot > 0 {
                per_source.push(per_source[0].clone());
                continue;
            }
            let draw: Vec<usize> = if others >= k {
                index::sample(rng, others, k)
                    .into_iter()
                    .map(|j| skip_anchor(anchor, j))
                    .collect()
            } else {
                (0..k).map(|_| skip_anchor(anchor, rng.gen_range(0..others))).collect()
            };
            per_source.push(draw);
        }
        out.push(per_source);
    }
    Ok(out)
}

/// Uniform sampling without replacement within an epoch; the order is
/// reshuffled whenever the remaining examples cannot fill a batch.
#[derive(Clone, Debug)]
pub struct EpochSampler {
    pub(crate) rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    epochs: u64,
}

impl EpochSampler {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self {
            rng,
            order: Vec::new(),
            cursor: 0,
            epochs: 0,
        }
    }

    /// Number of shuffles performed so far.
    pub fn epochs(&self) -> u64 {
        self.epochs
    }

    pub fn next_batch(&mut self, batch: usize, dataset_len: usize) -> Result<Vec<usize>> {
        if batch > dataset_len {
            return Err(Error::Config(format!(
                "batch size {batch} exceeds dataset size {dataset_len}"
            )));
        }
        if self.order.len() != dataset_len || self.cursor + batch > self.order.len() {
            self.order = (0..dataset_len).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
            self.epochs += 1;
        }
        let out = self.order[self.cursor..self.cursor + batch].to_vec();
        self.cursor += batch;
        Ok(out)
    }

    pub(crate) fn write_to(&self, w: &mut ByteWriter) {
        write_rng(w, &self.rng);
        w.u64(self.epochs);
        w.u64(self.cursor as u64);
        w.u64(self.order.len() as u64);
        for &i in &self.order {
            w.u64(i as u64);
        }
    }

    pub(crate) fn read_from(rd: &mut ByteReader<'_>) -> Result<Self> {
        let rng = read_rng(rd)?;
        let epochs = rd.u64()?;
        let cursor = rd.u64()? as usize;
        let len = rd.u64()? as usize;
        let order = (0..len)
            .map(|_| rd.u64().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        if cursor > order.len() {
            return Err(Error::Format {
                what: "checkpoint",
                message: format!("sampler cursor {cursor} beyond epoch of {}", order.len()),
            });
        }
        Ok(Self {
            rng,
            order,
            cursor,
            epochs,
        })
    }
}
