//! Binary network checkpoint.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic   4 bytes  "LSCN"
//! version u32      1
//! layers  u64      number of dims (depth + 1)
//! dims    u64 × layers
//! latent  u8       0 = relu, 1 = identity
//! output  u8       same coding
//! bias    u8       1 when biases are trained
//! pad     u8 × 5
//! params  f64 ×    encoder layers then decoder layers, each weight
//!                  (column-major) followed by bias
//! ```

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{Activation, Layer, NetworkParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LSCN";
const VERSION: u32 = 1;

fn act_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Identity => 1,
    }
}

fn act_from(code: u8, path: &Path) -> Result<Activation> {
    match code {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::Identity),
        other => Err(Error::ingestion(path, format!("unknown activation code {other}"))),
    }
}

pub fn save_checkpoint(params: &NetworkParams, path: &Path) -> Result<()> {
    let dims = params.layer_dims();
    let mut buf = Vec::with_capacity(32 + 8 * (dims.len() + params.parameter_count()));
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(dims.len() as u64).to_le_bytes());
    for &d in dims {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    buf.push(act_code(params.latent_activation));
    buf.push(act_code(params.output_activation));
    buf.push(params.use_bias as u8);
    buf.extend_from_slice(&[0u8; 5]);
    for s in params.slices() {
        for v in s {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, len: usize) -> Result<&[u8]> {
        if self.pos + len > self.bytes.len() {
            return Err(Error::ingestion(
                self.path,
                format!("checkpoint truncated at byte {}", self.pos),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let vals = (0..rows * cols).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_vec(rows, cols, vals))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::ingestion(path, "not a network checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::ingestion(
            path,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let count = r.u64()? as usize;
    if !(2..=1024).contains(&count) {
        return Err(Error::ingestion(path, format!("implausible layer count {count}")));
    }
    let dims = (0..count)
        .map(|_| r.u64().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::ingestion(path, "zero layer dimension"));
    }
    let flags = r.take(8)?.to_vec();
    let latent = act_from(flags[0], path)?;
    let output = act_from(flags[1], path)?;
    let use_bias = flags[2] != 0;

    let mut read_layer = |out_dim: usize, in_dim: usize| -> Result<Layer> {
        let weight = r.matrix(out_dim, in_dim)?;
        let bias = DVector::from_vec(r.matrix(out_dim, 1)?.as_slice().to_vec());
        Ok(Layer { weight, bias })
    };
    let encoder = dims
        .windows(2)
        .map(|w| read_layer(w[1], w[0]))
        .collect::<Result<Vec<_>>>()?;
    let decoder = dims
        .windows(2)
        .rev()
        .map(|w| read_layer(w[0], w[1]))
        .collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(Error::ingestion(path, "trailing bytes after checkpoint payload"));
    }
    let mut params = NetworkParams::from_layers(encoder, decoder)?.with_activations(latent, output);
    params.use_bias = use_bias;
    if params.slices().iter().any(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(Error::ingestion(path, "non-finite parameter"));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::init_network;

    #[test]
    fn roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        let mut net = init_network(&[6, 4, 2], 3)
            .unwrap()
            .with_activations(Activation::Identity, Activation::Identity)
            .without_bias();
        net.encoder[0].weight[(0, 0)] = -1.25;
        save_checkpoint(&net, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), net);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        let net = init_network(&[3, 2], 0).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let bytes = fs::read(&path).unwrap();

        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Ingestion { .. })));

        let mut bad = bytes.clone();
        bad[0] = b'X';
        fs::write(&path, bad).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Ingestion { .. })));
    }
}
