//! Versioned little-endian binary checkpoint for `f32` parameters.
//!
//! Layout: magic, `u32` version, `u8` architecture, `f64` dropout, `u64` seed,
//! `u32` tensor count, then per tensor `u32` rows, `u32` cols and the row-major
//! `f32` data.

use std::io::{Read, Write};

use ndarray::Array2;

use super::model::{Linear, ModelParams, SageLayer};
use super::BgnnError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ESBG";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(params: &ModelParams<f32>, mut out: W) -> Result<(), BgnnError> {
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let graph = params.sage1.w_neigh.is_some();
    out.write_all(&[graph as u8])?;
    out.write_all(&params.dropout_p.to_le_bytes())?;
    out.write_all(&params.seed.to_le_bytes())?;
    let tensors = params.tensors();
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        out.write_all(&(t.nrows() as u32).to_le_bytes())?;
        out.write_all(&(t.ncols() as u32).to_le_bytes())?;
        for v in t.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N], BgnnError> {
    let mut buf = [0u8; N];
    input
        .read_exact(&mut buf)
        .map_err(|e| BgnnError::Checkpoint(format!("truncated: {e}")))?;
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<ModelParams<f32>, BgnnError> {
    let magic: [u8; 4] = read_array(&mut input)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(BgnnError::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut input)?);
    if version != CHECKPOINT_VERSION {
        return Err(BgnnError::Checkpoint(format!("unsupported version {version}")));
    }
    let [graph] = read_array::<1, _>(&mut input)?;
    let dropout_p = f64::from_le_bytes(read_array(&mut input)?);
    let seed = u64::from_le_bytes(read_array(&mut input)?);
    let count = u32::from_le_bytes(read_array(&mut input)?) as usize;
    let expected = if graph == 1 { 8 } else { 6 };
    if count != expected {
        return Err(BgnnError::Checkpoint(format!(
            "expected {expected} tensors, found {count}"
        )));
    }
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = u32::from_le_bytes(read_array(&mut input)?) as usize;
        let cols = u32::from_le_bytes(read_array(&mut input)?) as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(f32::from_le_bytes(read_array(&mut input)?));
        }
        tensors.push(
            Array2::from_shape_vec((rows, cols), data)
                .map_err(|e| BgnnError::Checkpoint(e.to_string()))?,
        );
    }
    let mut it = tensors.into_iter();
    let mut layer = |graph: bool| {
        let w_self = it.next().unwrap();
        let w_neigh = if graph { it.next() } else { None };
        let bias = it.next().unwrap();
        SageLayer {
            w_self,
            w_neigh,
            bias,
        }
    };
    let sage1 = layer(graph == 1);
    let sage2 = layer(graph == 1);
    let head = Linear {
        weight: it.next().unwrap(),
        bias: it.next().unwrap(),
    };
    Ok(ModelParams {
        sage1,
        sage2,
        head,
        dropout_p,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgnn::{Architecture, ModelConfig};

    #[test]
    fn round_trip_is_bit_exact() {
        for arch in [Architecture::Sage, Architecture::Mlp] {
            let config = ModelConfig {
                hidden1: 7,
                hidden2: 5,
                dropout_p: 0.25,
                architecture: arch,
            };
            let params = ModelParams::<f32>::init(&config, 4, 77);
            let mut buf = Vec::new();
            write_checkpoint(&params, &mut buf).unwrap();
            let back = read_checkpoint(buf.as_slice()).unwrap();
            assert_eq!(back, params);
            let mut again = Vec::new();
            write_checkpoint(&back, &mut again).unwrap();
            assert_eq!(buf, again);
        }
    }

    #[test]
    fn rejects_corruption() {
        let params = ModelParams::<f32>::init(&ModelConfig::default_small(), 3, 1);
        let mut buf = Vec::new();
        write_checkpoint(&params, &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(bad.as_slice()).is_err());
        let mut future = buf;
        future[4] = 9;
        assert!(read_checkpoint(future.as_slice()).is_err());
    }

    impl ModelConfig {
        fn default_small() -> Self {
            ModelConfig {
                hidden1: 3,
                hidden2: 2,
                ..ModelConfig::default()
            }
        }
    }
}
