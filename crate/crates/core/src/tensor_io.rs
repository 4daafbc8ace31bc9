//! Bit-exact binary tensor files.
//!
//! Layout: magic `SATN`, little-endian u32 version (=1), u8 dtype code
//! (0 = f32, 1 = i8), u8 ndim, ndim x u64 dims, an f32 scale iff dtype is
//! i8, then the row-major payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{QuantizedTensor, Tensor};

pub const MAGIC: &[u8; 4] = b"SATN";
pub const VERSION: u32 = 1;

const DTYPE_F32: u8 = 0;
const DTYPE_I8: u8 = 1;

pub fn write_tensor(t: &Tensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, DTYPE_F32, t.dims())?;
    for &x in t.data() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let mut r = BufReader::new(File::open(path)?);
    let (dtype, dims) = read_header(&mut r)?;
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!("expected f32 dtype, found code {dtype}")));
    }
    let n: usize = dims.iter().product();
    let mut data = Vec::with_capacity(n);
    let mut buf = [0u8; 4];
    for i in 0..n {
        read_exact(&mut r, &mut buf, || format!("element {i} of {n}"))?;
        data.push(f32::from_le_bytes(buf));
    }
    Tensor::new(dims, data)
}

pub fn write_quantized(q: &QuantizedTensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, DTYPE_I8, q.dims())?;
    w.write_all(&q.scale().to_le_bytes())?;
    let bytes: Vec<u8> = q.data().iter().map(|&v| v as u8).collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_quantized(path: impl AsRef<Path>) -> Result<QuantizedTensor<f32>> {
    let mut r = BufReader::new(File::open(path)?);
    let (dtype, dims) = read_header(&mut r)?;
    if dtype != DTYPE_I8 {
        return Err(Error::Format(format!("expected i8 dtype, found code {dtype}")));
    }
    let mut sbuf = [0u8; 4];
    read_exact(&mut r, &mut sbuf, || "scale factor".to_string())?;
    let scale = f32::from_le_bytes(sbuf);
    let n: usize = dims.iter().product();
    let mut bytes = vec![0u8; n];
    read_exact(&mut r, &mut bytes, || format!("{n} i8 elements"))?;
    let data: Vec<i8> = bytes.into_iter().map(|b| b as i8).collect();
    QuantizedTensor::new(dims, data, scale)
}

fn write_header(w: &mut impl Write, dtype: u8, dims: &[usize]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[dtype])?;
    w.write_all(&[dims.len() as u8])?;
    for &d in dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    Ok(())
}

fn read_header(r: &mut impl Read) -> Result<(u8, Vec<usize>)> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, || "magic bytes".to_string())?;
    if &magic != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut vbuf = [0u8; 4];
    read_exact(r, &mut vbuf, || "version".to_string())?;
    let version = u32::from_le_bytes(vbuf);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let mut b = [0u8; 1];
    read_exact(r, &mut b, || "dtype code".to_string())?;
    let dtype = b[0];
    if dtype != DTYPE_F32 && dtype != DTYPE_I8 {
        return Err(Error::Format(format!("unknown dtype code {dtype}")));
    }
    read_exact(r, &mut b, || "ndim".to_string())?;
    let ndim = b[0] as usize;
    if ndim == 0 {
        return Err(Error::Format("zero-dim-count header".to_string()));
    }
    let mut dims = Vec::with_capacity(ndim);
    let mut dbuf = [0u8; 8];
    for i in 0..ndim {
        read_exact(r, &mut dbuf, || format!("dim {i}"))?;
        dims.push(u64::from_le_bytes(dbuf) as usize);
    }
    Ok((dtype, dims))
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: impl Fn() -> String) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated(what())
        } else {
            Error::Io(e)
        }
    })
}
