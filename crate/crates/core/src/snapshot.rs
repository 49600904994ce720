//! Binary field snapshots.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 4            | magic `ELOF`                              |
//! | u32          | format version (1)                        |
//! | u32          | `N`                                       |
//! | f64          | `L`                                       |
//! | f64          | `t`                                       |
//! | u32          | field count                               |
//! | per field    | u32 name length, name bytes, u32 rank, payload |
//!
//! A rank-`r` payload holds `3^r` components of `N³` f64 values each,
//! component-major, every component x-fastest.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::grid::{Grid, GridField, ScalarField, VectorField};
use crate::solver::FlowState;

pub const MAGIC: &[u8; 4] = b"ELOF";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("bad snapshot: {0}")]
    FormatError(String),
    #[error("snapshot ends early")]
    TruncatedFile,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawField {
    pub name: String,
    pub rank: u32,
    pub components: Vec<Vec<f64>>,
}

fn put_u32(out: &mut Vec<u8>, x: u32) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, x: f64) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_field(out: &mut Vec<u8>, name: &str, rank: u32, comps: &[&[f64]]) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    put_u32(out, rank);
    for c in comps {
        for x in c.iter() {
            put_f64(out, *x);
        }
    }
}

pub fn encode(state: &FlowState) -> Vec<u8> {
    let grid = state.grid();
    let mut out = Vec::with_capacity(64 + 7 * 8 * grid.len());
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, grid.n() as u32);
    put_f64(&mut out, grid.l());
    put_f64(&mut out, state.t);
    put_u32(&mut out, 3);
    put_field(&mut out, "v", 1, &state.v.components());
    put_field(&mut out, "u", 1, &state.u.components());
    put_field(&mut out, "p", 0, &state.p.components());
    out
}

pub fn write_snapshot(state: &FlowState, path: &Path) -> Result<(), SnapshotError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(state))?;
    f.sync_all()?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self.pos.checked_add(n).ok_or(SnapshotError::TruncatedFile)?;
        let s = self.bytes.get(self.pos..end).ok_or(SnapshotError::TruncatedFile)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Header and raw fields, without interpreting field names.
pub fn decode_raw(bytes: &[u8]) -> Result<(Grid, f64, Vec<RawField>), SnapshotError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| SnapshotError::FormatError("missing magic".into()))? != MAGIC {
        return Err(SnapshotError::FormatError("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(SnapshotError::FormatError(format!("unsupported version {version}")));
    }
    let n = r.u32()? as usize;
    let l = r.f64()?;
    let t = r.f64()?;
    let grid = Grid::new(n, l).map_err(|e| SnapshotError::FormatError(e.to_string()))?;
    let count = r.u32()?;
    let mut fields = Vec::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| SnapshotError::FormatError("field name is not UTF-8".into()))?;
        let rank = r.u32()?;
        if rank > 2 {
            return Err(SnapshotError::FormatError(format!("field '{name}' has unsupported rank {rank}")));
        }
        let ncomp = 3usize.pow(rank);
        let mut components = Vec::with_capacity(ncomp);
        for _ in 0..ncomp {
            let raw = r.take(8 * grid.len())?;
            components.push(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect());
        }
        fields.push(RawField { name, rank, components });
    }
    if r.pos != bytes.len() {
        return Err(SnapshotError::FormatError("trailing bytes after last field".into()));
    }
    Ok((grid, t, fields))
}

pub fn decode(bytes: &[u8]) -> Result<FlowState, SnapshotError> {
    let (grid, t, fields) = decode_raw(bytes)?;
    let find = |name: &str, rank: u32| -> Result<&RawField, SnapshotError> {
        fields
            .iter()
            .find(|f| f.name == name && f.rank == rank)
            .ok_or_else(|| SnapshotError::FormatError(format!("missing rank-{rank} field '{name}'")))
    };
    let vector = |f: &RawField| {
        VectorField::from_components(grid, [f.components[0].clone(), f.components[1].clone(), f.components[2].clone()])
    };
    let v = vector(find("v", 1)?);
    let u = vector(find("u", 1)?);
    let p = ScalarField::from_vec(grid, find("p", 0)?.components[0].clone());
    Ok(FlowState { v, u, p, t })
}

pub fn read_snapshot(path: &Path) -> Result<FlowState, SnapshotError> {
    decode(&fs::read(path)?)
}
