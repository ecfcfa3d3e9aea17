//! `PNET1` weight files.
//!
//! All integers are little-endian `u32`, all reals little-endian `f64`.
//!
//! ```text
//! "PNET1"
//! rank, dims[rank]                 input shape
//! layer_count
//! per layer:
//!   tag: u8                        1 conv2d, 2 dense, 3 relu, 4 maxpool2, 5 batchnorm, 6 flatten
//!   attr_count, attrs[attr_count]  f64 attributes
//!   tensor_count
//!   per tensor: rank, dims[rank], values[prod(dims)]
//! ```
//!
//! conv2d has attribute `stride` and tensors `weight [c_out, c_in, k, k]`,
//! `bias [c_out]`; dense has tensors `weight [units, inputs]`, `bias [units]`;
//! batchnorm has attributes `eps, momentum` and tensors `gamma, beta,
//! running_mean, running_var`, each `[channels]`.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{BatchNorm, Conv2d, Dense, Layer, NetError, Network};

pub const PNET_MAGIC: &[u8; 5] = b"PNET1";

#[derive(Debug, Error)]
pub enum PnetError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a PNET1 file")]
    BadMagic,
    #[error("file ends early at byte {0}")]
    Truncated(usize),
    #[error("unknown layer tag {0}")]
    UnknownTag(u8),
    #[error("layer {index}: {reason}")]
    Malformed { index: usize, reason: String },
    #[error(transparent)]
    Network(#[from] NetError),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn tensor(&mut self, dims: &[usize], data: &[f64]) {
        self.u32(dims.len());
        dims.iter().for_each(|&d| self.u32(d));
        self.f64s(data);
    }
}

pub fn encode(net: &Network) -> Vec<u8> {
    let mut w = Writer(PNET_MAGIC.to_vec());
    w.u32(net.input_shape.len());
    net.input_shape.iter().for_each(|&d| w.u32(d));
    w.u32(net.layers.len());
    for layer in &net.layers {
        let (tag, attrs, tensors): (u8, Vec<f64>, Vec<(Vec<usize>, &[f64])>) = match layer {
            Layer::Conv2d(c) => (
                1,
                vec![c.stride as f64],
                vec![
                    (vec![c.c_out, c.c_in, c.k, c.k], &c.weight),
                    (vec![c.c_out], &c.bias),
                ],
            ),
            Layer::Dense(d) => (
                2,
                vec![],
                vec![
                    (vec![d.units, d.inputs], &d.weight),
                    (vec![d.units], &d.bias),
                ],
            ),
            Layer::Relu => (3, vec![], vec![]),
            Layer::MaxPool2 => (4, vec![], vec![]),
            Layer::BatchNorm(b) => {
                let c = vec![b.gamma.len()];
                (
                    5,
                    vec![b.eps, b.momentum],
                    vec![
                        (c.clone(), &b.gamma),
                        (c.clone(), &b.beta),
                        (c.clone(), &b.running_mean),
                        (c, &b.running_var),
                    ],
                )
            }
            Layer::Flatten => (6, vec![], vec![]),
        };
        w.0.push(tag);
        w.u32(attrs.len());
        w.f64s(&attrs);
        w.u32(tensors.len());
        for (dims, data) in tensors {
            w.tensor(&dims, data);
        }
    }
    w.0
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], PnetError> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(PnetError::Truncated(self.bytes.len()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, PnetError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize, PnetError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f64(&mut self) -> Result<f64, PnetError> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("eight bytes")))
    }

    fn dims(&mut self) -> Result<Vec<usize>, PnetError> {
        let r = self.u32()?;
        if r > 8 {
            return Err(PnetError::Truncated(self.at));
        }
        (0..r).map(|_| self.u32()).collect()
    }

    fn tensor(&mut self) -> Result<(Vec<usize>, Vec<f64>), PnetError> {
        let dims = self.dims()?;
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or(PnetError::Truncated(self.at))?;
        if n.saturating_mul(8) > self.bytes.len() - self.at {
            return Err(PnetError::Truncated(self.bytes.len()));
        }
        let data = (0..n).map(|_| self.f64()).collect::<Result<_, _>>()?;
        Ok((dims, data))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Network, PnetError> {
    if bytes.len() < 5 || &bytes[..5] != PNET_MAGIC {
        return Err(PnetError::BadMagic);
    }
    let mut r = Reader { bytes, at: 5 };
    let input_shape = r.dims()?;
    let count = r.u32()?;
    let mut layers = Vec::new();
    for index in 0..count {
        let tag = r.u8()?;
        let na = r.u32()?;
        let attrs = (0..na.min(16))
            .map(|_| r.f64())
            .collect::<Result<Vec<_>, _>>()?;
        let nt = r.u32()?;
        let tensors = (0..nt.min(8))
            .map(|_| r.tensor())
            .collect::<Result<Vec<_>, _>>()?;
        let bad = |reason: &str| PnetError::Malformed {
            index,
            reason: reason.into(),
        };
        if na > 16 || nt > 8 {
            return Err(bad("too many fields"));
        }
        let layer = match tag {
            1 => match (attrs.as_slice(), tensors.as_slice()) {
                ([stride], [(wd, w), (_, b)]) if wd.len() == 4 && *stride >= 1.0 => {
                    Layer::Conv2d(Conv2d {
                        c_out: wd[0],
                        c_in: wd[1],
                        k: wd[2],
                        stride: *stride as usize,
                        weight: w.clone(),
                        bias: b.clone(),
                    })
                }
                _ => return Err(bad("conv2d needs a stride and weight/bias tensors")),
            },
            2 => match tensors.as_slice() {
                [(wd, w), (_, b)] if wd.len() == 2 => Layer::Dense(Dense {
                    units: wd[0],
                    inputs: wd[1],
                    weight: w.clone(),
                    bias: b.clone(),
                }),
                _ => return Err(bad("dense needs weight/bias tensors")),
            },
            3 => Layer::Relu,
            4 => Layer::MaxPool2,
            5 => match (attrs.as_slice(), tensors.as_slice()) {
                ([eps, momentum], [(_, g), (_, b), (_, m), (_, v)]) => {
                    Layer::BatchNorm(BatchNorm {
                        gamma: g.clone(),
                        beta: b.clone(),
                        running_mean: m.clone(),
                        running_var: v.clone(),
                        eps: *eps,
                        momentum: *momentum,
                    })
                }
                _ => return Err(bad("batchnorm needs eps, momentum and four tensors")),
            },
            6 => Layer::Flatten,
            t => return Err(PnetError::UnknownTag(t)),
        };
        layers.push(layer);
    }
    if r.at != bytes.len() {
        return Err(PnetError::Malformed {
            index: count,
            reason: "trailing bytes".into(),
        });
    }
    Ok(Network::new(input_shape, layers)?)
}

pub fn write_pnet(path: &Path, net: &Network) -> io::Result<()> {
    fs::write(path, encode(net))
}

pub fn read_pnet(path: &Path) -> Result<Network, PnetError> {
    decode(&fs::read(path)?)
}
