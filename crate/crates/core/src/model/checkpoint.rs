//! Model file: `"HRMODEL1"`, a little-endian `u32` header length, a JSON
//! header (architecture, μ, target standardisation), then the parameter file.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{HybridConfig, HybridRater, Standardizer};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{read_params, write_params};

pub const MODEL_MAGIC: &[u8; 8] = b"HRMODEL1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub config: HybridConfig,
    pub standardizer: Standardizer,
}

pub fn write_model<T: Scalar, W: Write>(
    rater: &HybridRater<T>,
    standardizer: Standardizer,
    mut out: W,
) -> Result<()> {
    let header = serde_json::to_vec(&ModelHeader {
        config: rater.config().clone(),
        standardizer,
    })?;
    out.write_all(MODEL_MAGIC)?;
    out.write_all(&(header.len() as u32).to_le_bytes())?;
    out.write_all(&header)?;
    write_params(rater.params(), out)
}

pub fn read_model<T: Scalar, R: Read>(mut input: R) -> Result<(HybridRater<T>, Standardizer)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format {
            what: "model file",
            detail: "bad magic".into(),
        });
    }
    let mut len = [0u8; 4];
    input.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > 1 << 20 {
        return Err(Error::Format {
            what: "model file",
            detail: "header too large".into(),
        });
    }
    let mut header = vec![0u8; len];
    input.read_exact(&mut header)?;
    let header: ModelHeader = serde_json::from_slice(&header)?;
    let params = read_params::<T, _>(input)?;
    let mut rater = HybridRater::new(header.config, 0)?;
    rater.load_params(&params)?;
    Ok((rater, header.standardizer))
}
