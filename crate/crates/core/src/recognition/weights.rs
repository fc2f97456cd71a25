//! Binary weight fixtures.
//!
//! All integers are little-endian `u32` unless noted, all reals little-endian
//! IEEE-754 `f64`, matrices row-major.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "RSWF"
//! 4       2     format version (u16) = 1
//! 6       2     kind (u16): 1 = graph convolution stack, 2 = attention encoder
//!
//! kind 1:
//! 8       4     layer count L
//! 12      4     partition count K
//! 16      12*L  per layer: in_dim, out_dim, activation (0 = identity, 1 = relu)
//! ...           per layer, per partition: in_dim*out_dim reals
//!
//! kind 2:
//! 8       32    input_dim, hidden, d_model, d_k, d_v, classes, max_frames, reserved (0)
//! 40      ...   embed_hidden, embed_hidden_bias, embed_out, embed_out_bias,
//!               positional, query, key, value, head, head_bias
//! ```
//!
//! Readers reject unknown versions, truncated files and trailing bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::recognition::attention::AttentionWeights;
use crate::recognition::gcn::{Activation, LayerWeights};
use crate::recognition::matrix::Matrix;

pub const MAGIC: &[u8; 4] = b"RSWF";
pub const VERSION: u16 = 1;
const KIND_GCN: u16 = 1;
const KIND_ATTENTION: u16 = 2;

struct Writer(Vec<u8>);

impl Writer {
    fn header(kind: u16) -> Self {
        let mut buf = MAGIC.to_vec();
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&kind.to_le_bytes());
        Self(buf)
    }

    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn reals(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::MalformedInput(format!("weight file truncated at byte {}", self.pos))
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn reals(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| {
            Error::MalformedInput("weight dimensions overflow".into())
        })?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        Matrix::new(rows, cols, self.reals(rows * cols)?)
    }

    fn header(&mut self, kind: u16) -> Result<()> {
        if self.take(4)? != MAGIC {
            return Err(Error::MalformedInput("not a weight fixture (bad magic)".into()));
        }
        let version = self.u16()?;
        if version != VERSION {
            return Err(Error::MalformedInput(format!("unsupported weight format version {version}")));
        }
        let found = self.u16()?;
        if found != kind {
            return Err(Error::MalformedInput(format!("expected fixture kind {kind}, found {found}")));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::MalformedInput(format!(
                "{} trailing bytes after weights",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn encode_gcn(layers: &[LayerWeights]) -> Vec<u8> {
    let mut w = Writer::header(KIND_GCN);
    w.u32(layers.len());
    w.u32(layers.first().map_or(0, |l| l.partitions().len()));
    for l in layers {
        w.u32(l.in_dim());
        w.u32(l.out_dim());
        w.u32(match l.activation() {
            Activation::Identity => 0,
            Activation::Relu => 1,
        });
    }
    for l in layers {
        for p in l.partitions() {
            w.reals(p.data());
        }
    }
    w.0
}

pub fn decode_gcn(bytes: &[u8]) -> Result<Vec<LayerWeights>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(KIND_GCN)?;
    let count = r.u32()?;
    let partitions = r.u32()?;
    let mut shapes = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let (i, o) = (r.u32()?, r.u32()?);
        let act = match r.u32()? {
            0 => Activation::Identity,
            1 => Activation::Relu,
            other => return Err(Error::MalformedInput(format!("unknown activation tag {other}"))),
        };
        shapes.push((i, o, act));
    }
    let layers = shapes
        .into_iter()
        .map(|(i, o, act)| {
            let mats = (0..partitions).map(|_| r.matrix(i, o)).collect::<Result<_>>()?;
            LayerWeights::new(mats, act)
        })
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(layers)
}

pub fn encode_attention(w: &AttentionWeights) -> Vec<u8> {
    let mut out = Writer::header(KIND_ATTENTION);
    for d in [
        w.embed_hidden.rows(),
        w.embed_hidden.cols(),
        w.embed_out.cols(),
        w.query.cols(),
        w.value.cols(),
        w.head.cols(),
        w.positional.rows(),
        0,
    ] {
        out.u32(d);
    }
    out.reals(w.embed_hidden.data());
    out.reals(&w.embed_hidden_bias);
    out.reals(w.embed_out.data());
    out.reals(&w.embed_out_bias);
    out.reals(w.positional.data());
    out.reals(w.query.data());
    out.reals(w.key.data());
    out.reals(w.value.data());
    out.reals(w.head.data());
    out.reals(&w.head_bias);
    out.0
}

pub fn decode_attention(bytes: &[u8]) -> Result<AttentionWeights> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(KIND_ATTENTION)?;
    let input = r.u32()?;
    let hidden = r.u32()?;
    let d_model = r.u32()?;
    let d_k = r.u32()?;
    let d_v = r.u32()?;
    let classes = r.u32()?;
    let max_frames = r.u32()?;
    let _reserved = r.u32()?;
    let w = AttentionWeights {
        embed_hidden: r.matrix(input, hidden)?,
        embed_hidden_bias: r.reals(hidden)?,
        embed_out: r.matrix(hidden, d_model)?,
        embed_out_bias: r.reals(d_model)?,
        positional: r.matrix(max_frames, d_model)?,
        query: r.matrix(d_model, d_k)?,
        key: r.matrix(d_model, d_k)?,
        value: r.matrix(d_model, d_v)?,
        head: r.matrix(d_v, classes)?,
        head_bias: r.reals(classes)?,
    };
    r.finish()?;
    w.validate()?;
    Ok(w)
}

pub fn load_gcn(path: &Path) -> Result<Vec<LayerWeights>> {
    decode_gcn(&std::fs::read(path)?)
}

pub fn load_attention(path: &Path) -> Result<AttentionWeights> {
    decode_attention(&std::fs::read(path)?)
}
