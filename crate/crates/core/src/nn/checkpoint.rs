//! Binary checkpoint format.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic        4 bytes  "GFCK"
//! version      u16      currently 1
//! input dims   u8 tag (0 map, 1 flat); map: c,h,w u32 each, flat: n u32
//! layer_count  u32
//! per layer:
//!   kind       u8       1 conv2d, 2 maxpool, 3 dense, 4 relu, 5 sigmoid, 6 flatten
//!   conv2d:    in u32, out u32, kh u32, kw u32, stride u32,
//!              padding u8 (0 valid, 1 same), trainable u8
//!   maxpool:   ph u32, pw u32, stride u32
//!   dense:     in u32, out u32, trainable u8
//!   weight-bearing layers then carry two arrays, weights then bias,
//!   each as: len u64, len IEEE-754 f64 values
//! ```
//!
//! Round-trips are bit-exact: loading and re-saving reproduces the byte
//! stream, and parameter values keep their exact bit patterns.

use super::layer::{Dims, LayerSpec, Padding};
use super::model::{Layer, Model};
use crate::tensor::Tensor;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"GFCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic {0:?}; not a checkpoint file")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0} (expected {CHECKPOINT_VERSION})")]
    UnsupportedVersion(u16),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("unknown layer kind tag {0}")]
    UnknownKind(u8),
    #[error("unknown input dims tag {0}")]
    UnknownDims(u8),
    #[error("unknown padding tag {0}")]
    UnknownPadding(u8),
    #[error("layer {layer}: stored {field} length {stored} does not match spec ({expected})")]
    ArrayMismatch {
        layer: usize,
        field: &'static str,
        stored: u64,
        expected: usize,
    },
    #[error("checkpoint has trailing bytes after the last layer")]
    TrailingBytes,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn save_checkpoint(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    match model.input {
        Dims::Map { c, h, w } => {
            out.push(0);
            for v in [c, h, w] {
                out.extend_from_slice(&(v as u32).to_le_bytes());
            }
        }
        Dims::Flat(n) => {
            out.push(1);
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
    }
    out.extend_from_slice(&(model.layers.len() as u32).to_le_bytes());
    for layer in &model.layers {
        match layer.spec {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel: (kh, kw),
                stride,
                padding,
                trainable,
            } => {
                out.push(1);
                for v in [in_channels, out_channels, kh, kw, stride] {
                    out.extend_from_slice(&(v as u32).to_le_bytes());
                }
                out.push(match padding {
                    Padding::Valid => 0,
                    Padding::Same => 1,
                });
                out.push(u8::from(trainable));
            }
            LayerSpec::MaxPool {
                pool: (ph, pw),
                stride,
            } => {
                out.push(2);
                for v in [ph, pw, stride] {
                    out.extend_from_slice(&(v as u32).to_le_bytes());
                }
            }
            LayerSpec::Dense {
                inputs,
                outputs,
                trainable,
            } => {
                out.push(3);
                out.extend_from_slice(&(inputs as u32).to_le_bytes());
                out.extend_from_slice(&(outputs as u32).to_le_bytes());
                out.push(u8::from(trainable));
            }
            LayerSpec::Relu => out.push(4),
            LayerSpec::Sigmoid => out.push(5),
            LayerSpec::Flatten => out.push(6),
        }
        if let (Some(w), Some(b)) = (&layer.weights, &layer.bias) {
            for t in [w, b] {
                out.extend_from_slice(&(t.len() as u64).to_le_bytes());
                for v in t.iter() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.at + n > self.bytes.len() {
            return Err(CheckpointError::Truncated(what));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, CheckpointError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, len: usize, what: &'static str) -> Result<Vec<f64>, CheckpointError> {
        let raw = self.take(len * 8, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<Model, CheckpointError> {
    let mut r = Reader { bytes, at: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let input = match r.u8("input dims tag")? {
        0 => Dims::Map {
            c: r.u32("input channels")? as usize,
            h: r.u32("input height")? as usize,
            w: r.u32("input width")? as usize,
        },
        1 => Dims::Flat(r.u32("input size")? as usize),
        other => return Err(CheckpointError::UnknownDims(other)),
    };
    let count = r.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(count);
    for layer_idx in 0..count {
        let kind = r.u8("layer kind")?;
        let spec = match kind {
            1 => {
                let in_channels = r.u32("conv in_channels")? as usize;
                let out_channels = r.u32("conv out_channels")? as usize;
                let kh = r.u32("conv kernel height")? as usize;
                let kw = r.u32("conv kernel width")? as usize;
                let stride = r.u32("conv stride")? as usize;
                let padding = match r.u8("conv padding")? {
                    0 => Padding::Valid,
                    1 => Padding::Same,
                    other => return Err(CheckpointError::UnknownPadding(other)),
                };
                let trainable = r.u8("conv trainable")? != 0;
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel: (kh, kw),
                    stride,
                    padding,
                    trainable,
                }
            }
            2 => {
                let ph = r.u32("pool height")? as usize;
                let pw = r.u32("pool width")? as usize;
                let stride = r.u32("pool stride")? as usize;
                LayerSpec::MaxPool {
                    pool: (ph, pw),
                    stride,
                }
            }
            3 => {
                let inputs = r.u32("dense inputs")? as usize;
                let outputs = r.u32("dense outputs")? as usize;
                let trainable = r.u8("dense trainable")? != 0;
                LayerSpec::Dense {
                    inputs,
                    outputs,
                    trainable,
                }
            }
            4 => LayerSpec::Relu,
            5 => LayerSpec::Sigmoid,
            6 => LayerSpec::Flatten,
            other => return Err(CheckpointError::UnknownKind(other)),
        };
        let (weights, bias) = match spec.param_shapes() {
            Some((w_shape, b_shape)) => {
                let w_len = r.u64("weight array length")?;
                let expected: usize = w_shape.iter().product();
                if w_len as usize != expected {
                    return Err(CheckpointError::ArrayMismatch {
                        layer: layer_idx,
                        field: "weight",
                        stored: w_len,
                        expected,
                    });
                }
                let w = r.f64_vec(expected, "weight values")?;
                let b_len = r.u64("bias array length")?;
                let expected_b: usize = b_shape.iter().product();
                if b_len as usize != expected_b {
                    return Err(CheckpointError::ArrayMismatch {
                        layer: layer_idx,
                        field: "bias",
                        stored: b_len,
                        expected: expected_b,
                    });
                }
                let b = r.f64_vec(expected_b, "bias values")?;
                (
                    Some(Tensor::from_vec(&w_shape, w).unwrap()),
                    Some(Tensor::from_vec(&b_shape, b).unwrap()),
                )
            }
            None => (None, None),
        };
        layers.push(Layer {
            spec,
            weights,
            bias,
        });
    }
    if r.at != bytes.len() {
        return Err(CheckpointError::TrailingBytes);
    }
    Ok(Model {
        layers,
        input,
        rng_seed: 0,
    })
}

pub fn save_checkpoint_file(model: &Model, path: &Path) -> Result<(), CheckpointError> {
    let bytes = save_checkpoint(model);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint_file(path: &Path) -> Result<Model, CheckpointError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    load_checkpoint(&bytes)
}
