//! Binary model container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      4 bytes  "FNN1"
//! arch tag   u32      0 vanilla, 1 gw, 2 silvescu, 3 liu, 4 scrn
//! dim count  u32      then that many u64 header dims
//! scalar cnt u32      then that many f64 header scalars
//! tensor cnt u32      then, per tensor, a u64 length and that many f64
//! ```
//!
//! Header dims are `[head, d, n, C]` for feed-forward models (`head` is 0 for
//! regression, 1 for classification; `C` is 1 for regression). Tensors follow
//! [`Parameterized::tensors`](super::Parameterized::tensors) order. The SCRN
//! model writes its own dims and scalars under tag 4. Doubles are stored
//! bit-for-bit, so a round trip is exact.

use std::path::Path;

use super::{
    Architecture, ClassifierHead, CosSinLayer, CosineProductLayer, HiddenLayer, Parameterized,
    RegressionNet, SquashingLayer,
};
use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 4] = b"FNN1";
pub const SCRN_TAG: u32 = 4;

const HEAD_REGRESSION: u64 = 0;
const HEAD_CLASSIFIER: u64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub tag: u32,
    pub dims: Vec<u64>,
    pub scalars: Vec<f64>,
    pub tensors: Vec<Vec<f64>>,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let floats: usize = self.tensors.iter().map(Vec::len).sum();
        let mut out = Vec::with_capacity(32 + 8 * (floats + self.dims.len() + self.scalars.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.tag.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&(self.scalars.len() as u32).to_le_bytes());
        for s in &self.scalars {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.len() as u64).to_le_bytes());
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("missing FNN1 magic".into()));
        }
        let tag = r.u32()?;
        let dims = (0..r.u32()?).map(|_| r.u64()).collect::<Result<_>>()?;
        let scalars = (0..r.u32()?).map(|_| r.f64()).collect::<Result<_>>()?;
        let count = r.u32()?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let len = r.u64()? as usize;
            if len > (bytes.len() - r.pos) / 8 {
                return Err(Error::Format(format!(
                    "tensor length {len} exceeds file size"
                )));
            }
            tensors.push((0..len).map(|_| r.f64()).collect::<Result<_>>()?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            tag,
            dims,
            scalars,
            tensors,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of model file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn owned_tensors<P: Parameterized>(model: &P) -> Vec<Vec<f64>> {
    model.tensors().iter().map(|t| t.to_vec()).collect()
}

fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
    Matrix::from_vec(rows, cols, data).map_err(|e| Error::Format(e.to_string()))
}

fn vector(len: usize, data: Vec<f64>) -> Result<Vec<f64>> {
    if data.len() != len {
        return Err(Error::Format(format!(
            "tensor has {} entries, expected {len}",
            data.len()
        )));
    }
    Ok(data)
}

/// Rebuilds a hidden layer from the leading tensors, consuming them.
fn hidden_from(
    arch: Architecture,
    d: usize,
    n: usize,
    tensors: &mut std::vec::IntoIter<Vec<f64>>,
) -> Result<HiddenLayer> {
    let mut next = || {
        tensors
            .next()
            .ok_or_else(|| Error::Format("too few tensors".into()))
    };
    Ok(match arch {
        Architecture::Vanilla | Architecture::GallantWhite => {
            let kind = if arch == Architecture::Vanilla {
                ActivationKind::Sigmoid
            } else {
                ActivationKind::CosineSquasher
            };
            HiddenLayer::Squashing(SquashingLayer {
                kind,
                w: matrix(n, d, next()?)?,
                b: vector(n, next()?)?,
            })
        }
        Architecture::Silvescu => HiddenLayer::CosineProduct(CosineProductLayer {
            omega: matrix(n, d, next()?)?,
            phi: matrix(n, d, next()?)?,
        }),
        Architecture::Liu => HiddenLayer::CosSin(CosSinLayer {
            w: matrix(n, d, next()?)?,
            b: vector(n, next()?)?,
            p: matrix(n, d, next()?)?,
            q: vector(n, next()?)?,
        }),
    })
}

fn feedforward_header(c: &Container, head: u64) -> Result<(Architecture, usize, usize, usize)> {
    let arch = Architecture::from_tag(c.tag)
        .ok_or_else(|| Error::Format(format!("tag {} is not a feed-forward model", c.tag)))?;
    let [h, d, n, classes] = c.dims[..] else {
        return Err(Error::Format("feed-forward header needs 4 dims".into()));
    };
    if h != head {
        return Err(Error::Format(format!("head kind {h}, expected {head}")));
    }
    Ok((arch, d as usize, n as usize, classes as usize))
}

impl RegressionNet {
    pub fn to_container(&self) -> Container {
        Container {
            tag: self.architecture().tag(),
            dims: vec![
                HEAD_REGRESSION,
                self.input_dim() as u64,
                self.units() as u64,
                1,
            ],
            scalars: Vec::new(),
            tensors: owned_tensors(self),
        }
    }

    pub fn from_container(c: Container) -> Result<Self> {
        let (arch, d, n, _) = feedforward_header(&c, HEAD_REGRESSION)?;
        let mut tensors = c.tensors.into_iter();
        let hidden = hidden_from(arch, d, n, &mut tensors)?;
        let out = vector(
            hidden.feature_count(),
            tensors
                .next()
                .ok_or_else(|| Error::Format("missing read-out".into()))?,
        )?;
        let bias = vector(
            1,
            tensors
                .next()
                .ok_or_else(|| Error::Format("missing bias".into()))?,
        )?[0];
        if tensors.next().is_some() {
            return Err(Error::Format("too many tensors".into()));
        }
        RegressionNet::from_parts(hidden, out, bias)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_container().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_container(Container::from_bytes(bytes)?)
    }
}

impl ClassifierHead {
    pub fn to_container(&self) -> Container {
        Container {
            tag: self.architecture().tag(),
            dims: vec![
                HEAD_CLASSIFIER,
                self.hidden.input_dim() as u64,
                self.hidden.units() as u64,
                self.classes() as u64,
            ],
            scalars: Vec::new(),
            tensors: owned_tensors(self),
        }
    }

    pub fn from_container(c: Container) -> Result<Self> {
        let (arch, d, n, classes) = feedforward_header(&c, HEAD_CLASSIFIER)?;
        let mut tensors = c.tensors.into_iter();
        let hidden = hidden_from(arch, d, n, &mut tensors)?;
        let fc = hidden.feature_count();
        let weights = matrix(
            fc,
            classes,
            tensors
                .next()
                .ok_or_else(|| Error::Format("missing weights".into()))?,
        )?;
        let bias = vector(
            classes,
            tensors
                .next()
                .ok_or_else(|| Error::Format("missing bias".into()))?,
        )?;
        if tensors.next().is_some() {
            return Err(Error::Format("too many tensors".into()));
        }
        ClassifierHead::from_parts(hidden, weights, bias)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_container().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_container(Container::from_bytes(bytes)?)
    }
}
