//! `WVTC` checkpoints.
//!
//! Layout (little-endian): magic, version u32, input width u32, hidden layer
//! count u32 and widths u32, video width u32, text width u32, source count u32
//! and source ids u8, dropout f64, seed u64, every parameter tensor as f64 in
//! declared order, model generator state, then a u8 flag followed (if set) by
//! the step counter u64, velocity tensors f64, and sampler state.

use std::path::Path;

use super::{OptimizerState, TrainState};
use crate::binio::{ByteReader, ByteWriter};
use crate::embedder::EmbeddingModel;
use crate::error::{Error, Result};
use crate::trainer::EpochSampler;

const MAGIC: &[u8; 4] = b"WVTC";
const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: EmbeddingModel,
    pub state: Option<TrainState>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        self.model.write_to(&mut w);
        match &self.state {
            None => w.u8(0),
            Some(state) => {
                w.u8(1);
                w.u64(state.optimizer.step);
                for t in state.optimizer.velocity.tensors() {
                    w.f64_slice(t);
                }
                state.sampler.write_to(&mut w);
            }
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = ByteReader::new("checkpoint", bytes);
        rd.magic(MAGIC)?;
        rd.version(VERSION)?;
        let model = EmbeddingModel::read_from(&mut rd)?;
        let state = match rd.u8()? {
            0 => None,
            1 => {
                let step = rd.u64()?;
                let mut velocity = model.params.zeros_like();
                for t in velocity.tensors_mut() {
                    rd.f64_into(t)?;
                }
                let sampler = EpochSampler::read_from(&mut rd)?;
                Some(TrainState {
                    optimizer: OptimizerState { velocity, step },
                    sampler,
                })
            }
            f => {
                return Err(Error::Format {
                    what: "checkpoint",
                    message: format!("bad training-state flag {f}"),
                })
            }
        };
        rd.finish()?;
        Ok(Self { model, state })
    }
}

pub fn save_checkpoint(
    model: &EmbeddingModel,
    state: Option<&TrainState>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let ckpt = Checkpoint {
        model: model.clone(),
        state: state.cloned(),
    };
    std::fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
