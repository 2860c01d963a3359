//! Binary network container:
//!
//! ```text
//! magic  "MHHFLNET"          8 bytes
//! version u8 (= 1)
//! layers u64 LE
//! per layer:
//!   in_dim u64 LE, out_dim u64 LE, activation tag u8,
//!   weights out_dim*in_dim f64 LE (row-major), bias out_dim f64 LE
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{Activation, DenseNet, Layer, Matrix};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MHHFLNET";
const VERSION: u8 = 1;
// guards against absurd allocations from corrupt headers
const MAX_DIM: u64 = 1 << 24;

pub fn write_net<W: Write>(net: &DenseNet, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&(net.layers().len() as u64).to_le_bytes())?;
    for layer in net.layers() {
        w.write_all(&(layer.in_dim() as u64).to_le_bytes())?;
        w.write_all(&(layer.out_dim() as u64).to_le_bytes())?;
        w.write_all(&[layer.activation.tag()])?;
        for v in layer.weights.as_slice().iter().chain(&layer.bias) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Checkpoint("truncated file".into())
    } else {
        Error::Io(e)
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn read_net<R: Read>(mut r: R) -> Result<DenseNet> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version).map_err(truncated)?;
    if version[0] != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", version[0])));
    }
    let count = read_u64(&mut r)?;
    if count == 0 || count > 1024 {
        return Err(Error::Checkpoint(format!("implausible layer count {count}")));
    }
    let mut layers = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let in_dim = read_u64(&mut r)?;
        let out_dim = read_u64(&mut r)?;
        if in_dim == 0 || out_dim == 0 || in_dim > MAX_DIM || out_dim > MAX_DIM {
            return Err(Error::Checkpoint(format!("implausible layer {in_dim}x{out_dim}")));
        }
        let (in_dim, out_dim) = (in_dim as usize, out_dim as usize);
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag).map_err(truncated)?;
        let activation = Activation::from_tag(tag[0])
            .ok_or_else(|| Error::Checkpoint(format!("unknown activation tag {}", tag[0])))?;
        let weights = read_f64s(&mut r, in_dim * out_dim)?;
        let bias = read_f64s(&mut r, out_dim)?;
        layers.push(Layer {
            weights: Matrix::from_vec(out_dim, in_dim, weights),
            bias,
            activation,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    DenseNet::from_layers(layers).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save(net: &DenseNet, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_net(net, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<DenseNet> {
    let bytes = std::fs::read(path)?;
    read_net(bytes.as_slice())
}

impl DenseNet {
    /// Loads a checkpoint and checks it against the expected layer sizes.
    pub fn load_expecting(path: impl AsRef<Path>, dims: &[usize]) -> Result<Self> {
        let net = load(path)?;
        if net.dims() != dims {
            return Err(Error::Checkpoint(format!(
                "checkpoint has dims {:?}, expected {:?}",
                net.dims(),
                dims
            )));
        }
        Ok(net)
    }
}
