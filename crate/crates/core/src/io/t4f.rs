//! `T4F1` tensor files: magic, four little-endian `u32` extents `(n, c, h, w)`,
//! then `n*c*h*w` little-endian `f32` values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape4, Tensor};

pub const T4F_MAGIC: &[u8; 4] = b"T4F1";

pub fn encode_t4f<T: Scalar>(t: &Tensor<T>) -> Result<Vec<u8>> {
    let s = t.shape();
    let mut out = Vec::with_capacity(20 + 4 * t.len());
    out.extend_from_slice(T4F_MAGIC);
    for d in s.dims() {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("extent {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_storage().to_le_bytes());
    }
    Ok(out)
}

pub fn decode_t4f<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    if bytes.len() < 20 || &bytes[..4] != T4F_MAGIC {
        return Err(Error::Format("missing T4F1 header".into()));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        let b = &bytes[4 + 4 * i..8 + 4 * i];
        *d = u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize;
    }
    let shape = Shape4::from(dims);
    let body = &bytes[20..];
    let expect = dims.iter().try_fold(4usize, |acc, &d| acc.checked_mul(d));
    if expect != Some(body.len()) {
        return Err(Error::Format(format!(
            "shape {} needs {} data bytes, file has {}",
            shape,
            expect.map_or("overflowing".to_string(), |e| e.to_string()),
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| T::from_storage(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    Tensor::from_vec(shape, data)
}

pub fn write_t4f<T: Scalar>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_t4f(t)?)?;
    Ok(())
}

pub fn read_t4f<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    decode_t4f(&buf)
}
