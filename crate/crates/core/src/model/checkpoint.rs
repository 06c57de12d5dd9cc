//! Binary parameter files.
//!
//! Layout, all little-endian: magic `MSCA1`; config block; `u32` tensor
//! count, then per tensor a `u32` name length, the UTF-8 name, four `u32`
//! dims and the f32 values; `u32` batch-norm layer count, then per layer a
//! `u32` channel count followed by f32 running means and variances.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{BackboneDepth, Model, ModelConfig, Variant};
use crate::error::{Error, Result};
use crate::tensor::{BatchNormConfig, BnRunning, Real, Shape, Tensor};

pub const MODEL_MAGIC: &[u8; 5] = b"MSCA1";

/// Upper bound on any single length field, to reject garbage early.
const MAX_LEN: u32 = 1 << 28;

pub(crate) struct Le<W>(pub W);

impl<W: Write> Le<W> {
    pub fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    pub fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    pub fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    pub fn f32s<T: Real>(&mut self, vs: &[T]) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(vs.len() * 4);
        for v in vs {
            buf.extend_from_slice(&(v.to_float() as f32).to_le_bytes());
        }
        self.0.write_all(&buf)
    }
    pub fn usize(&mut self, v: usize) -> std::io::Result<()> {
        self.u32(u32::try_from(v).map_err(|_| std::io::Error::other("value exceeds u32"))?)
    }
}

pub(crate) struct LeRead<R>(pub R);

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Validation("file is truncated".into())
    } else {
        Error::Internal(format!("read failed: {e}"))
    }
}

impl<R: Read> LeRead<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(truncated)?;
        Ok(b)
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    pub fn len(&mut self) -> Result<usize> {
        let v = self.u32()?;
        if v > MAX_LEN {
            return Err(Error::Validation(format!("implausible length field {v}")));
        }
        Ok(v as usize)
    }
    pub fn f32s<T: Real>(&mut self, n: usize) -> Result<Vec<T>> {
        let mut buf = vec![0u8; n * 4];
        self.0.read_exact(&mut buf).map_err(truncated)?;
        Ok(buf
            .chunks_exact(4)
            .map(|c| T::from_float(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect())
    }
    pub fn magic(&mut self, want: &[u8; 5]) -> Result<()> {
        let got: [u8; 5] = self.bytes()?;
        if &got != want {
            return Err(Error::Version(format!(
                "expected magic {:?}, found {:?}",
                String::from_utf8_lossy(want),
                String::from_utf8_lossy(&got)
            )));
        }
        Ok(())
    }
}

fn write_config<W: Write>(w: &mut Le<W>, c: &ModelConfig) -> std::io::Result<()> {
    w.usize(c.in_channels)?;
    w.f64(c.width_scale)?;
    w.u32(c.variant.code())?;
    w.u32(match c.backbone_depth {
        BackboneDepth::Thirteen => 13,
        BackboneDepth::Ten => 10,
    })?;
    w.usize(c.dcam_count)?;
    w.usize(c.dcam_dilations.len())?;
    for &d in &c.dcam_dilations {
        w.usize(d)?;
    }
    w.usize(c.kernel_size)?;
    w.usize(c.c5_dilation)?;
    for v in c.sam_widths.iter().chain(&c.dme_widths) {
        w.usize(*v)?;
    }
    w.f64(c.batchnorm.eps)?;
    w.f64(c.batchnorm.momentum)
}

fn read_config<R: Read>(r: &mut LeRead<R>) -> Result<ModelConfig> {
    let in_channels = r.len()?;
    let width_scale = r.f64()?;
    let variant = Variant::from_code(r.u32()?).map_err(|e| Error::Validation(e.to_string()))?;
    let backbone_depth = match r.u32()? {
        13 => BackboneDepth::Thirteen,
        10 => BackboneDepth::Ten,
        d => return Err(Error::Validation(format!("unsupported encoder depth {d}"))),
    };
    let dcam_count = r.len()?;
    let n = r.len()?;
    let dcam_dilations = (0..n).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
    let kernel_size = r.len()?;
    let c5_dilation = r.len()?;
    let sam_widths = [r.len()?, r.len()?];
    let dme_widths = [r.len()?, r.len()?];
    let batchnorm = BatchNormConfig {
        eps: r.f64()?,
        momentum: r.f64()?,
    };
    let cfg = ModelConfig {
        in_channels,
        width_scale,
        variant,
        backbone_depth,
        dcam_count,
        dcam_dilations,
        kernel_size,
        c5_dilation,
        sam_widths,
        dme_widths,
        batchnorm,
    };
    cfg.validate().map_err(|e| Error::Validation(format!("stored config: {e}")))?;
    Ok(cfg)
}

/// Serialises the model; parameters are narrowed to f32.
pub fn write_model<T: Real, W: Write>(model: &Model<T>, out: W) -> std::io::Result<()> {
    let mut w = Le(out);
    w.0.write_all(MODEL_MAGIC)?;
    write_config(&mut w, model.config())?;
    let params = model.params();
    w.usize(params.len())?;
    for (name, t) in params.names().iter().zip(params.tensors()) {
        w.usize(name.len())?;
        w.0.write_all(name.as_bytes())?;
        for d in t.shape().dims() {
            w.usize(d)?;
        }
        w.f32s(t.data())?;
    }
    w.usize(model.bn_state().len())?;
    for r in model.bn_state() {
        w.usize(r.channels())?;
        w.f32s(&r.mean)?;
        w.f32s(&r.var)?;
    }
    Ok(())
}

pub fn read_model<T: Real, R: Read>(input: R) -> Result<Model<T>> {
    let mut r = LeRead(input);
    r.magic(MODEL_MAGIC)?;
    let cfg = read_config(&mut r)?;
    let count = r.len()?;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let n = r.len()?;
        let mut name = vec![0u8; n];
        r.0.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| Error::Validation("parameter name is not UTF-8".into()))?;
        let shape = Shape::new(r.len()?, r.len()?, r.len()?, r.len()?);
        let data = r.f32s(shape.numel())?;
        params.push((name, Tensor::from_vec(shape, data)?));
    }
    let layers = r.len()?;
    let mut bn = Vec::with_capacity(layers);
    for _ in 0..layers {
        let c = r.len()?;
        bn.push(BnRunning {
            mean: r.f32s(c)?,
            var: r.f32s(c)?,
        });
    }
    Model::from_parts(cfg, params, bn)
}

pub fn save_model<T: Real>(model: &Model<T>, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_model(model, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Real>(path: &Path) -> Result<Model<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(f))
}
