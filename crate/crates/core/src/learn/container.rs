//! Versioned model container: magic, version, a JSON header describing the
//! model, then a length-prefixed binary body.
//!
//! ```text
//! "ACTXMODL" | u32 version | u32 header_len | header JSON | u64 body_len | body
//! ```
//! All integers are little-endian.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{LearnError, Result};

const MAGIC: &[u8; 8] = b"ACTXMODL";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerHeader {
    /// What the body holds, e.g. `"tree_ensemble"` or `"chain"`.
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub classes: Vec<String>,
    pub schema_hash: String,
    pub config_hash: String,
    pub hyperparams: serde_json::Value,
}

fn bad(msg: impl Into<String>) -> LearnError {
    LearnError::Container(msg.into())
}

pub fn write_container<W: Write, T: Serialize>(mut out: W, header: &ContainerHeader, body: &T) -> Result<()> {
    let head = serde_json::to_vec(header).map_err(|e| bad(e.to_string()))?;
    let body = bincode::serialize(body).map_err(|e| bad(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&CONTAINER_VERSION.to_le_bytes())?;
    out.write_all(&(head.len() as u32).to_le_bytes())?;
    out.write_all(&head)?;
    out.write_all(&(body.len() as u64).to_le_bytes())?;
    out.write_all(&body)?;
    Ok(())
}

pub fn read_container<R: Read, T: DeserializeOwned>(mut input: R) -> Result<(ContainerHeader, T)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| bad("truncated before magic"))?;
    if &magic != MAGIC {
        return Err(bad("not a model container"));
    }
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != CONTAINER_VERSION {
        return Err(bad(format!("unsupported container version {version}")));
    }
    input.read_exact(&mut b4)?;
    let mut head = vec![0u8; u32::from_le_bytes(b4) as usize];
    input.read_exact(&mut head)?;
    let header: ContainerHeader = serde_json::from_slice(&head).map_err(|e| bad(format!("header: {e}")))?;
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b8)?;
    let len = u64::from_le_bytes(b8);
    let mut body = Vec::new();
    input.take(len).read_to_end(&mut body)?;
    if body.len() as u64 != len {
        return Err(bad("truncated body"));
    }
    let value = bincode::deserialize(&body).map_err(|e| bad(format!("body: {e}")))?;
    Ok((header, value))
}
