//! ILENS1 weights file: a bit-exact binary interchange format.
//!
//! Layout, all integers u32 little-endian, all floats f32 little-endian:
//!
//! ```text
//! magic   6 bytes  "ILENS1"
//! header  input_h, input_w, input_c, feature_tap, layer_count
//! layers  tag u8, then per tag:
//!         1 Conv    out_ch, in_ch, kernel, weights (out_ch, in_ch, ky, kx
//!                   row-major), bias (out_ch)
//!         2 Relu    -
//!         3 AvgPool size
//!         4 Flatten -
//!         5 Dense   out_dim, in_dim, weights (out, in row-major), bias (out)
//! ```

use super::{Layer, ScorerError, ScorerModel};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 6] = b"ILENS1";

pub fn save_model(model: &ScorerModel, path: &Path) -> Result<(), ScorerError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    let (h, wd, c) = model.input_shape();
    for v in [
        h as u32,
        wd as u32,
        c as u32,
        model.feature_tap() as u32,
        model.layers().len() as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for layer in model.layers() {
        match layer {
            Layer::Conv {
                weight,
                bias,
                out_ch,
                in_ch,
                kernel,
            } => {
                w.write_all(&[1u8])?;
                for v in [*out_ch as u32, *in_ch as u32, *kernel as u32] {
                    w.write_all(&v.to_le_bytes())?;
                }
                write_f32s(&mut w, weight)?;
                write_f32s(&mut w, bias)?;
            }
            Layer::Relu => w.write_all(&[2u8])?,
            Layer::AvgPool { size } => {
                w.write_all(&[3u8])?;
                w.write_all(&(*size as u32).to_le_bytes())?;
            }
            Layer::Flatten => w.write_all(&[4u8])?,
            Layer::Dense {
                weight,
                bias,
                out_dim,
                in_dim,
            } => {
                w.write_all(&[5u8])?;
                for v in [*out_dim as u32, *in_dim as u32] {
                    w.write_all(&v.to_le_bytes())?;
                }
                write_f32s(&mut w, weight)?;
                write_f32s(&mut w, bias)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ScorerModel, ScorerError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)
        .map_err(|_| ScorerError::BadWeights("file too short for magic".into()))?;
    if &magic != MAGIC {
        return Err(ScorerError::BadWeights(format!(
            "bad magic {:?}, expected ILENS1",
            String::from_utf8_lossy(&magic)
        )));
    }
    let h = read_u32(&mut r)? as usize;
    let w = read_u32(&mut r)? as usize;
    let c = read_u32(&mut r)? as usize;
    let feature_tap = read_u32(&mut r)? as usize;
    let layer_count = read_u32(&mut r)? as usize;
    if layer_count > 1024 {
        return Err(ScorerError::BadWeights(format!(
            "implausible layer count {layer_count}"
        )));
    }
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)
            .map_err(|_| ScorerError::BadWeights("truncated layer tag".into()))?;
        let layer = match tag[0] {
            1 => {
                let out_ch = read_u32(&mut r)? as usize;
                let in_ch = read_u32(&mut r)? as usize;
                let kernel = read_u32(&mut r)? as usize;
                let count = out_ch
                    .checked_mul(in_ch)
                    .and_then(|v| v.checked_mul(kernel * kernel))
                    .filter(|&v| v <= (1 << 28))
                    .ok_or_else(|| ScorerError::BadWeights("conv shape overflow".into()))?;
                let weight = read_f32s(&mut r, count)?;
                let bias = read_f32s(&mut r, out_ch)?;
                Layer::Conv {
                    weight,
                    bias,
                    out_ch,
                    in_ch,
                    kernel,
                }
            }
            2 => Layer::Relu,
            3 => Layer::AvgPool {
                size: read_u32(&mut r)? as usize,
            },
            4 => Layer::Flatten,
            5 => {
                let out_dim = read_u32(&mut r)? as usize;
                let in_dim = read_u32(&mut r)? as usize;
                let count = out_dim
                    .checked_mul(in_dim)
                    .filter(|&v| v <= (1 << 28))
                    .ok_or_else(|| ScorerError::BadWeights("dense shape overflow".into()))?;
                let weight = read_f32s(&mut r, count)?;
                let bias = read_f32s(&mut r, out_dim)?;
                Layer::Dense {
                    weight,
                    bias,
                    out_dim,
                    in_dim,
                }
            }
            t => {
                return Err(ScorerError::BadWeights(format!("unknown layer tag {t}")));
            }
        };
        layers.push(layer);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(ScorerError::BadWeights("trailing bytes after layers".into()));
    }
    ScorerModel::from_layers((h, w, c), layers, feature_tap)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ScorerError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| ScorerError::BadWeights("truncated integer".into()))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f32s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f32>, ScorerError> {
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| ScorerError::BadWeights("truncated weight data".into()))?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> Result<(), ScorerError> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}
