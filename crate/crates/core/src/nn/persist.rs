//! Model file format.
//!
//! ```text
//! "ADVRECT-MODEL/1"                      15 ASCII bytes
//! u32 rank, rank x u32 dims              input shape
//! u32 layer count, then per layer:
//!     u8 tag (0 dense, 1 conv2d, 2 maxpool2, 3 relu, 4 flatten)
//!     dense / conv2d only: u32 inputs-or-in-channels, u32 outputs-or-out-channels
//! per parametric layer, in order: weights then bias as f64
//! ```
//!
//! All integers and reals are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Layer, LayerParams, Model};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 15] = b"ADVRECT-MODEL/1";

// Guards allocation on corrupt headers.
const MAX_DIM: u32 = 1 << 24;

pub fn write_model<W: Write>(model: &Model, mut w: W) -> Result<()> {
    w.write_all(MODEL_MAGIC)?;
    write_u32(&mut w, model.input_shape().len())?;
    for &d in model.input_shape() {
        write_u32(&mut w, d)?;
    }
    write_u32(&mut w, model.layers().len())?;
    for layer in model.layers() {
        match *layer {
            Layer::Dense { inputs, outputs } => {
                w.write_all(&[0])?;
                write_u32(&mut w, inputs)?;
                write_u32(&mut w, outputs)?;
            }
            Layer::Conv2d { in_channels, out_channels } => {
                w.write_all(&[1])?;
                write_u32(&mut w, in_channels)?;
                write_u32(&mut w, out_channels)?;
            }
            Layer::MaxPool2 => w.write_all(&[2])?,
            Layer::Relu => w.write_all(&[3])?,
            Layer::Flatten => w.write_all(&[4])?,
        }
    }
    for p in model.params().iter().flatten() {
        for v in p.weight.iter().chain(&p.bias) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<Model> {
    let mut magic = [0u8; 15];
    r.read_exact(&mut magic).map_err(|_| Error::Format("truncated model header".into()))?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format("not an ADVRECT-MODEL/1 file (bad magic)".into()));
    }
    let rank = read_u32(&mut r)?;
    let input_shape = (0..rank).map(|_| read_u32(&mut r)).collect::<Result<Vec<_>>>()?;
    let n_layers = read_u32(&mut r)?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag).map_err(|_| Error::Format("truncated layer list".into()))?;
        layers.push(match tag[0] {
            0 => Layer::Dense { inputs: read_u32(&mut r)?, outputs: read_u32(&mut r)? },
            1 => Layer::Conv2d { in_channels: read_u32(&mut r)?, out_channels: read_u32(&mut r)? },
            2 => Layer::MaxPool2,
            3 => Layer::Relu,
            4 => Layer::Flatten,
            t => return Err(Error::Format(format!("unknown layer tag {t}"))),
        });
    }
    let mut params = Vec::with_capacity(layers.len());
    for layer in &layers {
        params.push(match layer.param_counts() {
            Some((nw, nb)) => Some(LayerParams { weight: read_f64s(&mut r, nw)?, bias: read_f64s(&mut r, nb)? }),
            None => None,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after parameters".into()));
    }
    Model::with_params(input_shape, layers, params).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    read_model(BufReader::new(File::open(path)?))
}

fn write_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated model file".into()))?;
    let v = u32::from_le_bytes(b);
    if v > MAX_DIM {
        return Err(Error::Format(format!("implausible size field {v}")));
    }
    Ok(v as usize)
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(|_| Error::Format("truncated parameter block".into()))?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}
