//! Binary model checkpoints.
//!
//! Layout (little endian): magic `TNNR`, `u32` version, `u64` length plus the
//! JSON-encoded public parameters, `u64` step, then the dense layer and the
//! real output neurons, each as a `u32` count followed by records of
//! `u64 id, f32 bias, f32 m_bias, f32 v_bias, u32 dim, weights, m, v`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::NeuronRecord;

use super::params::PublicParams;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TNNR";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: PublicParams,
    pub step: u64,
    pub dense: Vec<NeuronRecord>,
    /// Real output neurons by id.
    pub output: Vec<NeuronRecord>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format {
        what: "checkpoint",
        msg: msg.into(),
    }
}

fn put_f32s(w: &mut impl Write, xs: &[f32]) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn put_records(w: &mut impl Write, recs: &[NeuronRecord]) -> Result<()> {
    w.write_all(&(recs.len() as u32).to_le_bytes())?;
    for r in recs {
        w.write_all(&r.id.to_le_bytes())?;
        put_f32s(w, &[r.bias, r.m_bias, r.v_bias])?;
        w.write_all(&(r.dim() as u32).to_le_bytes())?;
        put_f32s(w, r.weights())?;
        put_f32s(w, r.m())?;
        put_f32s(w, r.v())?;
    }
    Ok(())
}

pub fn save_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let json = serde_json::to_vec(&ck.params)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&ck.step.to_le_bytes())?;
    put_records(&mut w, &ck.dense)?;
    put_records(&mut w, &ck.output)?;
    w.flush()?;
    Ok(())
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.0.read_exact(&mut buf).map_err(|_| bad("truncated file"))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes()?))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        (0..n).map(|_| self.f32()).collect()
    }

    fn records(&mut self, dim: usize, lanes: usize) -> Result<Vec<NeuronRecord>> {
        let count = self.u32()? as usize;
        let mut out = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let id = self.u64()?;
            let (bias, m_bias, v_bias) = (self.f32()?, self.f32()?, self.f32()?);
            let d = self.u32()? as usize;
            if d != dim {
                return Err(bad(format!("record {id} has width {d}, expected {dim}")));
            }
            let w = self.f32s(d)?;
            let m = self.f32s(d)?;
            let v = self.f32s(d)?;
            let mut rec = NeuronRecord::real(id, &w, lanes);
            rec.set_params(&w, &m, &v, bias, m_bias, v_bias);
            out.push(rec);
        }
        Ok(out)
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let mut r = Reader(BufReader::new(File::open(path)?));
    if &r.bytes::<4>()? != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let len = r.u64()? as usize;
    let mut json = vec![0u8; len.min(1 << 24)];
    if json.len() != len {
        return Err(bad("parameter block too large"));
    }
    r.0.read_exact(&mut json).map_err(|_| bad("truncated file"))?;
    let params: PublicParams = serde_json::from_slice(&json)?;
    let step = r.u64()?;
    let net = &params.network;
    let lanes = params.train.batch_size;
    let dense = r.records(net.d_input, lanes)?;
    let output = r.records(net.n0, lanes)?;
    if dense.len() != net.n0 || output.len() != net.c {
        return Err(bad("layer sizes do not match the parameters"));
    }
    Ok(Checkpoint {
        params,
        step,
        dense,
        output,
    })
}
