//! Training checkpoints: an `MSCA1` model file followed by an optional
//! optimiser trailer. The trailer is magic `ADAM1`, `u64` step, `u64` next
//! epoch, `u32` tensor count, then per tensor a `u32` length and the f32
//! first and second moments. Model loaders ignore the trailer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::AdamState;
use crate::error::{Error, Result};
use crate::model::checkpoint::{Le, LeRead};
use crate::model::{read_model, write_model, Model};
use crate::tensor::Real;

pub const ADAM_MAGIC: &[u8; 5] = b"ADAM1";

#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub model: Model<T>,
    pub adam: Option<AdamState<T>>,
    /// Epoch to run next.
    pub epoch: u64,
}

pub fn write_checkpoint<T: Real, W: Write>(ck: &Checkpoint<T>, mut out: W) -> std::io::Result<()> {
    write_model(&ck.model, &mut out)?;
    let Some(adam) = &ck.adam else { return Ok(()) };
    let mut w = Le(out);
    w.0.write_all(ADAM_MAGIC)?;
    w.u64(adam.step)?;
    w.u64(ck.epoch)?;
    w.usize(adam.m.len())?;
    for (m, v) in adam.m.iter().zip(&adam.v) {
        w.usize(m.len())?;
        w.f32s(m)?;
        w.f32s(v)?;
    }
    Ok(())
}

pub fn read_checkpoint<T: Real, R: Read>(input: R) -> Result<Checkpoint<T>> {
    let mut input = input;
    let model = read_model(&mut input)?;
    let mut first = [0u8; 1];
    let got = loop {
        match input.read(&mut first) {
            Ok(n) => break n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(Error::Internal(format!("read failed: {e}"))),
        }
    };
    if got == 0 {
        return Ok(Checkpoint {
            model,
            adam: None,
            epoch: 0,
        });
    }
    let mut r = LeRead((&first[..]).chain(input));
    r.magic(ADAM_MAGIC)?;
    let step = r.u64()?;
    let epoch = r.u64()?;
    let count = r.len()?;
    let (mut m, mut v) = (Vec::with_capacity(count), Vec::with_capacity(count));
    for _ in 0..count {
        let n = r.len()?;
        m.push(r.f32s(n)?);
        v.push(r.f32s(n)?);
    }
    let adam = AdamState { step, m, v };
    if !adam.matches(model.params().tensors()) {
        return Err(Error::Validation("optimiser state does not match the model parameters".into()));
    }
    Ok(Checkpoint {
        model,
        adam: Some(adam),
        epoch,
    })
}

pub fn save_checkpoint<T: Real>(ck: &Checkpoint<T>, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_checkpoint(ck, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(f))
}
