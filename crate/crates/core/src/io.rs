//! Field dumps: CSV (one row per node and level) and the `LLAB1` binary format.
//!
//! `LLAB1` layout, all little-endian:
//! magic `b"LLAB1"`, `u32` dim, `dim × u32` cell counts, `f64` h, `f64` tau,
//! `dim × f64` origin, `f64` t0, `u32` steps, then `nodes × levels` values
//! ordered by level, then node.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{ScalarField, SpaceTimeGrid, SpatialGrid};

const MAGIC: &[u8; 5] = b"LLAB1";

pub fn write_csv<W: Write>(field: &ScalarField, out: W) -> Result<()> {
    let grid = field.grid();
    let space = grid.space();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=space.dim()).map(|s| format!("x{s}")).collect();
    header.push("t".into());
    header.push("value".into());
    w.write_record(&header).map_err(csv_err)?;
    for level in 0..grid.levels() {
        let t = grid.time(level);
        for (node, v) in field.slice(level).iter().enumerate() {
            let x = space.coord(node);
            let mut row: Vec<String> = x[..space.dim()].iter().map(|c| c.to_string()).collect();
            row.push(t.to_string());
            row.push(v.to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Reads the values column back onto a known grid.
pub fn read_csv<R: Read>(grid: &SpaceTimeGrid, input: R) -> Result<ScalarField> {
    let mut r = csv::Reader::from_reader(input);
    let expected = grid.space().dim() + 2;
    let mut values = Vec::with_capacity(grid.space().node_count() * grid.levels());
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} columns, found {}",
                rec.len()
            )));
        }
        let v: f64 = rec[expected - 1]
            .trim()
            .parse()
            .map_err(|e| Error::Format(format!("bad value {:?}: {e}", &rec[expected - 1])))?;
        values.push(v);
    }
    ScalarField::from_values(grid.clone(), values)
}

pub fn encode_binary(field: &ScalarField) -> Vec<u8> {
    let grid = field.grid();
    let space = grid.space();
    let mut buf = Vec::with_capacity(64 + 8 * field.values().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(space.dim() as u32).to_le_bytes());
    for &c in space.cells() {
        buf.extend_from_slice(&(c as u32).to_le_bytes());
    }
    buf.extend_from_slice(&space.h().to_le_bytes());
    buf.extend_from_slice(&grid.tau().to_le_bytes());
    for &o in space.origin() {
        buf.extend_from_slice(&o.to_le_bytes());
    }
    buf.extend_from_slice(&grid.t0().to_le_bytes());
    buf.extend_from_slice(&(grid.steps() as u32).to_le_bytes());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let bytes = self
            .data
            .get(self.pos..end)
            .ok_or_else(|| Error::Format("truncated LLAB1 dump".into()))?;
        self.pos = end;
        Ok(bytes.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn decode_binary(data: &[u8]) -> Result<ScalarField> {
    let mut c = Cursor { data, pos: 0 };
    if &c.take::<5>()? != MAGIC {
        return Err(Error::Format("missing LLAB1 magic".into()));
    }
    let dim = c.u32()? as usize;
    if !(1..=2).contains(&dim) {
        return Err(Error::Format(format!("unsupported dimension {dim}")));
    }
    let cells = (0..dim).map(|_| c.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let h = c.f64()?;
    let tau = c.f64()?;
    let origin = (0..dim).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let t0 = c.f64()?;
    let steps = c.u32()? as usize;
    let grid = SpaceTimeGrid::new(SpatialGrid::new(cells, h, origin)?, tau, t0, steps)?;
    let len = grid.space().node_count() * grid.levels();
    if data.len() - c.pos != 8 * len {
        return Err(Error::Format(format!(
            "expected {} value bytes, found {}",
            8 * len,
            data.len() - c.pos
        )));
    }
    let values = (0..len).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    ScalarField::from_values(grid, values)
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_binary(field: &ScalarField, path: &Path) -> Result<()> {
    write_atomic(path, &encode_binary(field))
}

pub fn load_binary(path: &Path) -> Result<ScalarField> {
    decode_binary(&fs::read(path)?)
}

pub fn save_csv(field: &ScalarField, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(field, &mut buf)?;
    write_atomic(path, &buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> ScalarField {
        let g = SpaceTimeGrid::new(
            SpatialGrid::new(vec![3, 4], 0.25, vec![-0.5, 1.0]).unwrap(),
            0.1,
            0.5,
            2,
        )
        .unwrap();
        ScalarField::from_fn(g, |x, t| (x[0] * 3.1).sin() + x[1] / 7.0 - t).unwrap()
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let f = field();
        let bytes = encode_binary(&f);
        assert_eq!(&bytes[..5], b"LLAB1");
        assert_eq!(decode_binary(&bytes).unwrap(), f);
        assert!(decode_binary(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_binary(&bad).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let f = field();
        let mut buf = Vec::new();
        write_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,t,value\n"));
        assert_eq!(text.lines().count(), 1 + 20 * 3);
        // shortest round-trip float formatting keeps values exact
        assert_eq!(read_csv(f.grid(), buf.as_slice()).unwrap(), f);
    }

    #[test]
    fn atomic_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("u.llab");
        save_binary(&field(), &path).unwrap();
        assert_eq!(load_binary(&path).unwrap(), field());
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
