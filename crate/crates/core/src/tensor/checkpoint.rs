//! Flat binary parameter file.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic   8 bytes  "HRPARAMS"
//! version u32      1
//! count   u32      number of parameters
//! repeated count times:
//!   name_len u32, name (UTF-8)
//!   ndim     u32, dims (u64 × ndim)
//!   values   f64 × product(dims)
//! ```
//!
//! Values are always stored as 64-bit floats regardless of the in-memory
//! scalar type, so `f64` sets round-trip bit-exactly.

use std::io::{Read, Write};

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const PARAMS_MAGIC: &[u8; 8] = b"HRPARAMS";
pub const PARAMS_VERSION: u32 = 1;

// Guards against absurd allocations from corrupt headers.
const MAX_NAME_LEN: usize = 1 << 16;
const MAX_NDIM: usize = 8;

pub fn write_params<T: Scalar, W: Write>(params: &ParamSet<T>, mut out: W) -> Result<()> {
    out.write_all(PARAMS_MAGIC)?;
    out.write_all(&PARAMS_VERSION.to_le_bytes())?;
    out.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, value) in params.iter() {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(value.shape().len() as u32).to_le_bytes())?;
        for &d in value.shape() {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in value.data() {
            out.write_all(&v.to_f64_lossless().to_le_bytes())?;
        }
    }
    Ok(())
}

fn bad(detail: impl Into<String>) -> Error {
    Error::Format {
        what: "parameter file",
        detail: detail.into(),
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_params<T: Scalar, R: Read>(mut input: R) -> Result<ParamSet<T>> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != PARAMS_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = read_u32(&mut input)?;
    if version != PARAMS_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut input)? as usize;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name_len = read_u32(&mut input)? as usize;
        if name_len > MAX_NAME_LEN {
            return Err(bad("name too long"));
        }
        let mut name = vec![0u8; name_len];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| bad("name is not UTF-8"))?;
        let ndim = read_u32(&mut input)? as usize;
        if ndim == 0 || ndim > MAX_NDIM {
            return Err(bad(format!("{name}: invalid rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u64(&mut input)? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| bad("shape overflow"))?;
        let mut data = Vec::with_capacity(n.min(1 << 24));
        let mut b = [0u8; 8];
        for _ in 0..n {
            input.read_exact(&mut b)?;
            data.push(T::from_f64_lossy(f64::from_le_bytes(b)));
        }
        if params.find(&name).is_some() {
            return Err(bad(format!("duplicate parameter {name}")));
        }
        params.insert(name, Tensor::new(shape, data)?);
    }
    Ok(params)
}
