//! Little-endian binary field dumps.
//!
//! Layout: `b"ADFV"`, version `u32 = 1`, dims `u8`, the cell count of each
//! axis as `u64`, the `(lo, hi)` bounds of each axis as two `f64`, the
//! boundary tag `u8` (0 = no-flux, 1 = periodic), then the cell values as
//! `f64` in row-major order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Boundary, Field, Grid, MeshError};

pub const FIELD_MAGIC: &[u8; 4] = b"ADFV";
pub const FIELD_VERSION: u32 = 1;

pub fn write_field_to<W: Write>(field: &Field, mut w: W) -> Result<(), MeshError> {
    let grid = field.grid();
    let mut buf = Vec::with_capacity(16 + 24 * grid.dims() + 8 * field.len());
    buf.extend_from_slice(FIELD_MAGIC);
    buf.extend_from_slice(&FIELD_VERSION.to_le_bytes());
    buf.push(grid.dims() as u8);
    for axis in grid.axes() {
        buf.extend_from_slice(&(axis.cells as u64).to_le_bytes());
    }
    for axis in grid.axes() {
        buf.extend_from_slice(&axis.lo.to_le_bytes());
        buf.extend_from_slice(&axis.hi.to_le_bytes());
    }
    buf.push(grid.boundary().tag());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field_from<R: Read>(mut r: R) -> Result<Field, MeshError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != FIELD_MAGIC {
        return Err(MeshError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(cur.array()?);
    if version != FIELD_VERSION {
        return Err(MeshError::Format(format!("unsupported version {version}")));
    }
    let dims = cur.take(1)?[0] as usize;
    if dims == 0 || dims > 2 {
        return Err(MeshError::Format(format!("bad dimension {dims}")));
    }
    let mut cells = Vec::with_capacity(dims);
    for _ in 0..dims {
        let n = u64::from_le_bytes(cur.array()?);
        cells.push(usize::try_from(n).map_err(|_| MeshError::Format("cell count overflow".into()))?);
    }
    let mut bounds = Vec::with_capacity(dims);
    for _ in 0..dims {
        let lo = f64::from_le_bytes(cur.array()?);
        let hi = f64::from_le_bytes(cur.array()?);
        bounds.push((lo, hi));
    }
    let tag = cur.take(1)?[0];
    let boundary =
        Boundary::from_tag(tag).ok_or_else(|| MeshError::Format(format!("bad boundary tag {tag}")))?;
    let grid = Grid::new(&cells, &bounds, boundary)?;
    let expected = grid.len() * 8;
    if cur.remaining() != expected {
        return Err(MeshError::Format(format!(
            "expected {expected} value bytes, found {}",
            cur.remaining()
        )));
    }
    let values = (0..grid.len())
        .map(|_| cur.array().map(f64::from_le_bytes))
        .collect::<Result<Vec<_>, _>>()?;
    Field::new(grid, values)
}

/// Writes atomically: the dump goes to a sibling temporary file which is
/// then renamed over `path`.
pub fn write_field(field: &Field, path: &Path) -> Result<(), MeshError> {
    let mut bytes = Vec::new();
    write_field_to(field, &mut bytes)?;
    atomic_write(path, &bytes)
}

pub fn read_field(path: &Path) -> Result<Field, MeshError> {
    read_field_from(fs::File::open(path)?)
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), MeshError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MeshError> {
        if self.pos + n > self.bytes.len() {
            return Err(MeshError::Format("truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], MeshError> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_exact() {
        let g = Grid::line(4, -2.0, 2.0, Boundary::Periodic).unwrap();
        let f = Field::new(g, vec![0.0, 1.0, 2.5, 0.25]).unwrap();
        let mut bytes = Vec::new();
        write_field_to(&f, &mut bytes).unwrap();
        assert_eq!(&bytes[0..4], b"ADFV");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(bytes[8], 1);
        assert_eq!(&bytes[9..17], &4u64.to_le_bytes());
        assert_eq!(&bytes[17..25], &(-2.0f64).to_le_bytes());
        assert_eq!(&bytes[25..33], &2.0f64.to_le_bytes());
        assert_eq!(bytes[33], 1);
        assert_eq!(&bytes[34 + 16..34 + 24], &2.5f64.to_le_bytes());
        assert_eq!(bytes.len(), 34 + 32);
    }

    #[test]
    fn round_trip_2d() {
        let g = Grid::new(&[4, 6], &[(0.0, 1.0), (-3.0, 3.0)], Boundary::NoFlux).unwrap();
        let f = Field::from_fn(&g, |x| x[0] + x[1].abs()).unwrap();
        let mut bytes = Vec::new();
        write_field_to(&f, &mut bytes).unwrap();
        assert_eq!(read_field_from(bytes.as_slice()).unwrap(), f);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_field_from(&b"ADFX\x01\0\0\0"[..]).is_err());
        let g = Grid::line(4, 0.0, 1.0, Boundary::NoFlux).unwrap();
        let mut bytes = Vec::new();
        write_field_to(&Field::zeros(&g), &mut bytes).unwrap();
        bytes.pop();
        assert!(matches!(read_field_from(bytes.as_slice()), Err(MeshError::Format(_))));
    }
}
