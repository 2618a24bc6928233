//! Checkpoint container for a generator/discriminator pair.
//!
//! ```text
//! "NSCK" | u32 version=1 | u64 step | u32 latent_dim
//!        | net(G) | net(D) | f32 payload
//! net     = u32 layer_count, then per layer: u32 in | u32 out | u8 activation
//! payload = for G then D, for each layer: weights (out×in, row-major), then bias
//! ```
//! All fields little-endian.

use std::path::Path;

use super::{Activation, Dense, DenseNet, LayerSpec, NetSpec};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NSCK";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub generator: DenseNet<f32>,
    pub discriminator: DenseNet<f32>,
    pub latent_dim: usize,
    /// optimizer steps taken so far
    pub step: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.latent_dim as u32).to_le_bytes());
        for net in [&self.generator, &self.discriminator] {
            let spec = net.spec();
            out.extend_from_slice(&(spec.layers.len() as u32).to_le_bytes());
            for l in &spec.layers {
                out.extend_from_slice(&(l.in_dim as u32).to_le_bytes());
                out.extend_from_slice(&(l.out_dim as u32).to_le_bytes());
                out.push(l.activation.code());
            }
        }
        for net in [&self.generator, &self.discriminator] {
            for p in net.params() {
                for v in p {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("missing checkpoint magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let step = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let latent_dim = r.u32()? as usize;
        let g_spec = r.net_spec()?;
        let d_spec = r.net_spec()?;
        g_spec.validate()?;
        d_spec.validate()?;
        if g_spec.input_dim() != latent_dim {
            return Err(Error::Format(format!(
                "generator input {} does not match latent dim {latent_dim}",
                g_spec.input_dim()
            )));
        }
        if d_spec.input_dim() != g_spec.output_dim() || d_spec.output_dim() != 1 {
            return Err(Error::Format(
                "discriminator shape does not fit generator".into(),
            ));
        }
        let generator = r.net(&g_spec)?;
        let discriminator = r.net(&d_spec)?;
        if r.pos != bytes.len() {
            return Err(Error::Corrupt(
                "trailing bytes after checkpoint payload".into(),
            ));
        }
        Ok(Self {
            generator,
            discriminator,
            latent_dim,
            step,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end
            .ok_or_else(|| Error::Corrupt(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn net_spec(&mut self) -> Result<NetSpec> {
        let n = self.u32()? as usize;
        if n == 0 || n > 1024 {
            return Err(Error::Format(format!("implausible layer count {n}")));
        }
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let in_dim = self.u32()? as usize;
            let out_dim = self.u32()? as usize;
            let code = self.take(1)?[0];
            let activation = Activation::from_code(code)
                .ok_or_else(|| Error::Format(format!("unknown activation code {code}")))?;
            layers.push(LayerSpec {
                in_dim,
                out_dim,
                activation,
            });
        }
        Ok(NetSpec { layers })
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::Format("size overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }

    fn net(&mut self, spec: &NetSpec) -> Result<DenseNet<f32>> {
        let mut layers = Vec::with_capacity(spec.layers.len());
        for s in &spec.layers {
            let weights = self.floats(s.in_dim * s.out_dim)?;
            let bias = self.floats(s.out_dim)?;
            layers.push(Dense {
                spec: *s,
                weights,
                bias,
            });
        }
        DenseNet::from_layers(layers)
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
