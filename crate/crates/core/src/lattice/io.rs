//! Field serialization.
//!
//! Binary layout: a 16-byte header (`"MBF1"`, `n` as little-endian `u32`,
//! 8 zero bytes) followed by `(n+1)^4` little-endian `f64` values in
//! lexicographic site order. JSON export is limited to `n ≤ 8`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Field, GridSpec};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"MBF1";
pub const HEADER_LEN: usize = 16;
pub const JSON_MAX_N: usize = 8;

pub fn write_binary<W: Write>(field: &Field, mut w: W) -> Result<()> {
    let mut header = [0u8; HEADER_LEN];
    header[..4].copy_from_slice(&MAGIC);
    header[4..8].copy_from_slice(&(field.grid().n() as u32).to_le_bytes());
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(field.values().len() * 8);
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn to_bytes(field: &Field) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + field.values().len() * 8);
    write_binary(field, &mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Field> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|e| Error::Format(format!("short header: {e}")))?;
    if header[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected MBF1".into()));
    }
    if header[8..].iter().any(|&b| b != 0) {
        return Err(Error::Format("reserved header bytes are not zero".into()));
    }
    let n = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let grid = GridSpec::new(n)?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != grid.site_count() * 8 {
        return Err(Error::Format(format!(
            "expected {} payload bytes for n = {n}, found {}",
            grid.site_count() * 8,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Field::from_values(grid, values)
}

pub fn save(field: &Field, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_binary(field, BufWriter::new(file)).map_err(|e| match e {
        Error::RawIo(io) => Error::io(path, io),
        other => other,
    })
}

pub fn load(path: &Path) -> Result<Field> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_binary(BufReader::new(file))
}

#[derive(Serialize, Deserialize)]
struct FieldJson {
    n: usize,
    h: f64,
    values: Vec<f64>,
}

pub fn to_json(field: &Field) -> Result<serde_json::Value> {
    let n = field.grid().n();
    if n > JSON_MAX_N {
        return Err(Error::invalid(format!(
            "JSON export is limited to n <= {JSON_MAX_N}, got n = {n}"
        )));
    }
    Ok(serde_json::to_value(FieldJson {
        n,
        h: field.grid().h(),
        values: field.values().to_vec(),
    })?)
}

pub fn from_json(value: &serde_json::Value) -> Result<Field> {
    let parsed: FieldJson = serde_json::from_value(value.clone())?;
    Field::from_values(GridSpec::new(parsed.n)?, parsed.values)
}
