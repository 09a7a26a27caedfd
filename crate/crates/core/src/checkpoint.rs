//! Parameter files: `u32` little-endian header length, a JSON header, then
//! every parameter array as little-endian f64 in row-major order.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn write<H: Serialize>(path: impl AsRef<Path>, header: &H, arrays: &[&Array2<f64>]) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    let n: usize = arrays.iter().map(|a| a.len()).sum();
    let mut buf = Vec::with_capacity(4 + json.len() + 8 * n);
    let len = u32::try_from(json.len()).map_err(|_| Error::Config("header too large".into()))?;
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(&json);
    for a in arrays {
        for v in a.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Reads the header, then fills arrays of the shapes `shapes_of(header)`
/// returns.
pub fn read<H: DeserializeOwned>(
    path: impl AsRef<Path>,
    shapes_of: impl FnOnce(&H) -> Result<Vec<(usize, usize)>>,
) -> Result<(H, Vec<Array2<f64>>)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 4 {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            msg: "file too short for the header length".into(),
        });
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    if bytes.len() - 4 < len {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            msg: format!("header of {len} bytes is truncated"),
        });
    }
    let header: H = serde_json::from_slice(&bytes[4..4 + len]).map_err(|e| Error::Format {
        offset: 4,
        msg: format!("bad JSON header: {e}"),
    })?;
    let shapes = shapes_of(&header)?;
    let mut pos = 4 + len;
    let mut arrays = Vec::with_capacity(shapes.len());
    for (r, c) in shapes {
        let need = r * c * 8;
        if bytes.len() - pos < need {
            return Err(Error::Format {
                offset: bytes.len() as u64,
                msg: format!("parameter payload truncated: need {need} bytes at {pos}"),
            });
        }
        let vals = bytes[pos..pos + need]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        arrays.push(Array2::from_shape_vec((r, c), vals).unwrap());
        pos += need;
    }
    if pos != bytes.len() {
        return Err(Error::Format {
            offset: pos as u64,
            msg: format!("{} trailing bytes", bytes.len() - pos),
        });
    }
    Ok((header, arrays))
}
