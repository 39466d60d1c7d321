//! Binary grid checkpoints.
//!
//! Little-endian layout, version 1:
//!
//! ```text
//! magic        8 bytes  "GTRKGRID"
//! version      u32      1
//! keyframe     u32
//! grid_count   u32      forward grids first, then backward
//! per grid:
//!   direction    u8     0 = forward, 1 = backward
//!   level_count  u32
//!   per level:
//!     level        u32  (resolution is 2 * level - 1)
//!     active_count u32
//!     coords       active_count * 3 * u32   lattice (i, j, k)
//!     params       active_count * 6 * f64   (z0, z1, z2, tx, ty, tz)
//! ```

use std::path::Path;

use super::{DeformationGrid, Direction, GridLevel, GridSequence, Transform6};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GTRKGRID";
pub const VERSION: u32 = 1;

pub fn encode(grids: &GridSequence) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend(VERSION.to_le_bytes());
    out.extend((grids.keyframe() as u32).to_le_bytes());
    out.extend((grids.grid_count() as u32).to_le_bytes());
    for g in grids.grids() {
        out.push(match g.direction() {
            Direction::Forward => 0,
            Direction::Backward => 1,
        });
        out.extend((g.levels().len() as u32).to_le_bytes());
        for lvl in g.levels() {
            out.extend(lvl.level().to_le_bytes());
            out.extend((lvl.active_count() as u32).to_le_bytes());
            for c in lvl.coords() {
                for v in c {
                    out.extend(v.to_le_bytes());
                }
            }
            for p in &lvl.params {
                for v in p.0 {
                    out.extend(v.to_le_bytes());
                }
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| format!("truncated checkpoint at byte {}", self.pos))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<GridSequence, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a grid checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let keyframe = r.u32()? as usize;
    let count = r.u32()? as usize;
    let mut forward = Vec::new();
    let mut backward = Vec::new();
    for _ in 0..count {
        let direction = match r.take(1)?[0] {
            0 => Direction::Forward,
            1 => Direction::Backward,
            d => return Err(format!("bad direction tag {d}")),
        };
        let level_count = r.u32()?;
        let mut levels = Vec::with_capacity(level_count as usize);
        for _ in 0..level_count {
            let level = r.u32()?;
            if level == 0 || level > 1024 {
                return Err(format!("bad level index {level}"));
            }
            let active = r.u32()? as usize;
            let mut coords = Vec::with_capacity(active);
            for _ in 0..active {
                coords.push([r.u32()?, r.u32()?, r.u32()?]);
            }
            let mut lvl = GridLevel::from_coords(level, &coords).map_err(|e| e.to_string())?;
            if lvl.coords() != coords.as_slice() {
                return Err("active coordinates are not in canonical order".into());
            }
            for p in lvl.params.iter_mut() {
                let mut v = [0.0; 6];
                for x in v.iter_mut() {
                    *x = r.f64()?;
                }
                *p = Transform6(v);
            }
            levels.push(lvl);
        }
        let grid = DeformationGrid::from_levels(direction, levels).map_err(|e| e.to_string())?;
        match direction {
            Direction::Forward => forward.push(grid),
            Direction::Backward => backward.push(grid),
        }
    }
    if r.pos != bytes.len() {
        return Err("trailing bytes after checkpoint".into());
    }
    GridSequence::from_parts(keyframe, forward, backward).map_err(|e| e.to_string())
}

pub fn save(path: impl AsRef<Path>, grids: &GridSequence) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(grids)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<GridSequence> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|m| Error::parse(path, m))
}
