//! `DTN1` tensor files: magic, dtype, rank, little-endian shape and payload.

use std::fs;
use std::path::Path;

use deblur_core::{Cplx, Error, Result};
use ndarray::{ArrayD, IxDyn};

pub const MAGIC: &[u8; 4] = b"DTN1";
pub const DTYPE_F64: u8 = 1;
pub const DTYPE_C64: u8 = 2;

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    Real(ArrayD<f64>),
    Complex(ArrayD<Cplx<f64>>),
}

impl TensorData {
    pub fn shape(&self) -> &[usize] {
        match self {
            TensorData::Real(a) => a.shape(),
            TensorData::Complex(a) => a.shape(),
        }
    }

    pub fn into_real(self) -> Result<ArrayD<f64>> {
        match self {
            TensorData::Real(a) => Ok(a),
            TensorData::Complex(_) => Err(Error::Format("expected a real tensor, found complex".into())),
        }
    }

    pub fn into_complex(self) -> Result<ArrayD<Cplx<f64>>> {
        match self {
            TensorData::Complex(a) => Ok(a),
            TensorData::Real(_) => Err(Error::Format("expected a complex tensor, found real".into())),
        }
    }
}

pub fn encode(t: &TensorData) -> Result<Vec<u8>> {
    let shape = t.shape();
    if shape.len() > u8::MAX as usize {
        return Err(Error::Format(format!("rank {} exceeds 255", shape.len())));
    }
    let count: usize = shape.iter().product();
    let (code, width) = match t {
        TensorData::Real(_) => (DTYPE_F64, 8),
        TensorData::Complex(_) => (DTYPE_C64, 16),
    };
    let mut out = Vec::with_capacity(6 + 8 * shape.len() + width * count);
    out.extend_from_slice(MAGIC);
    out.push(code);
    out.push(shape.len() as u8);
    for &s in shape {
        out.extend_from_slice(&(s as u64).to_le_bytes());
    }
    match t {
        TensorData::Real(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        TensorData::Complex(a) => a.iter().for_each(|z| {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }),
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| Error::Format("truncated tensor file".into()))?;
    let s = &bytes[*pos..end];
    *pos = end;
    Ok(s)
}

fn f64_at(b: &[u8]) -> f64 {
    f64::from_le_bytes(b.try_into().expect("8 bytes"))
}

pub fn decode(bytes: &[u8]) -> Result<TensorData> {
    let mut pos = 0;
    if take(bytes, &mut pos, 4)? != MAGIC {
        return Err(Error::Format("bad magic, not a DTN1 file".into()));
    }
    let code = take(bytes, &mut pos, 1)?[0];
    let ndim = take(bytes, &mut pos, 1)?[0] as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let s = u64::from_le_bytes(take(bytes, &mut pos, 8)?.try_into().expect("8 bytes"));
        shape.push(usize::try_from(s).map_err(|_| Error::Format("dimension overflows usize".into()))?);
    }
    let count = shape
        .iter()
        .try_fold(1usize, |a, &s| a.checked_mul(s))
        .ok_or_else(|| Error::Format("element count overflows".into()))?;
    let width = match code {
        DTYPE_F64 => 8,
        DTYPE_C64 => 16,
        c => return Err(Error::Format(format!("unknown dtype code {c}"))),
    };
    let payload = take(bytes, &mut pos, count.checked_mul(width).ok_or_else(|| Error::Format("payload overflows".into()))?)?;
    if pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after payload", bytes.len() - pos)));
    }
    let dim = IxDyn(&shape);
    Ok(match code {
        DTYPE_F64 => TensorData::Real(ArrayD::from_shape_vec(dim, payload.chunks_exact(8).map(f64_at).collect()).expect("sized payload")),
        _ => TensorData::Complex(
            ArrayD::from_shape_vec(dim, payload.chunks_exact(16).map(|c| Cplx::new(f64_at(&c[..8]), f64_at(&c[8..]))).collect())
                .expect("sized payload"),
        ),
    })
}

pub fn write(path: &Path, t: &TensorData) -> Result<()> {
    fs::write(path, encode(t)?)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<TensorData> {
    decode(&fs::read(path)?)
}
