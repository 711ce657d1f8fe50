//! Flat binary containers for matrices and named parameter bundles.
//!
//! Matrix files: `FMAT`, u32 version, u64 rows, u64 cols, row-major f64 LE.
//! Bundles: `FBND`, u32 version, kind string, u32 count, then per entry a
//! name, u64 rows, u64 cols and row-major f64 LE data. The entry names and
//! shapes double as the layer manifest of a checkpoint.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::{Error, Result};

const MATRIX_MAGIC: &[u8; 4] = b"FMAT";
const BUNDLE_MAGIC: &[u8; 4] = b"FBND";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

fn put_matrix(buf: &mut Vec<u8>, m: &Array2<f64>) {
    put_u64(buf, m.nrows() as u64);
    put_u64(buf, m.ncols() as u64);
    for v in m.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::format(self.path, "truncated file"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::format(self.path, "bad utf-8"))
    }

    fn matrix(&mut self) -> Result<Array2<f64>> {
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let bytes = self.take(rows * cols * 8)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::format(self.path, e.to_string()))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(Error::format(self.path, "bad magic"));
        }
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(Error::format(self.path, format!("unsupported version {v}")));
        }
        Ok(())
    }
}

fn write_bytes(path: &Path, buf: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(buf).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + m.len() * 8);
    buf.extend_from_slice(MATRIX_MAGIC);
    put_u32(&mut buf, FORMAT_VERSION);
    put_matrix(&mut buf, m);
    write_bytes(path.as_ref(), &buf)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let data = read_bytes(path)?;
    let mut c = Cursor { data: &data, pos: 0, path };
    c.header(MATRIX_MAGIC)?;
    c.matrix()
}

/// Named matrices tagged with a model kind.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Bundle {
    pub kind: String,
    pub arrays: BTreeMap<String, Array2<f64>>,
}

impl Bundle {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            arrays: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, m: Array2<f64>) {
        self.arrays.insert(name.into(), m);
    }

    pub fn insert_vec(&mut self, name: impl Into<String>, v: &[f64]) {
        self.insert(name, Array2::from_shape_vec((1, v.len()), v.to_vec()).unwrap());
    }

    pub fn insert_scalar(&mut self, name: impl Into<String>, v: f64) {
        self.insert_vec(name, &[v]);
    }

    pub fn get(&self, name: &str) -> Result<&Array2<f64>> {
        self.arrays
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("{} bundle has no entry '{name}'", self.kind)))
    }

    pub fn vec(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.get(name)?.iter().copied().collect())
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        self.get(name)?
            .iter()
            .next()
            .copied()
            .ok_or_else(|| Error::Invalid(format!("empty entry '{name}'")))
    }

    /// `(name, rows, cols)` for every entry, in name order.
    pub fn manifest(&self) -> Vec<(String, usize, usize)> {
        self.arrays
            .iter()
            .map(|(k, v)| (k.clone(), v.nrows(), v.ncols()))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(BUNDLE_MAGIC);
        put_u32(&mut buf, FORMAT_VERSION);
        put_str(&mut buf, &self.kind);
        put_u32(&mut buf, self.arrays.len() as u32);
        for (name, m) in &self.arrays {
            put_str(&mut buf, name);
            put_matrix(&mut buf, m);
        }
        buf
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = read_bytes(path)?;
        let mut c = Cursor { data: &data, pos: 0, path };
        c.header(BUNDLE_MAGIC)?;
        let kind = c.string()?;
        let n = c.u32()?;
        let mut b = Bundle::new(kind);
        for _ in 0..n {
            let name = c.string()?;
            let m = c.matrix()?;
            b.arrays.insert(name, m);
        }
        Ok(b)
    }

    pub fn expect_kind(self, kind: &str) -> Result<Self> {
        if self.kind != kind {
            return Err(Error::Invalid(format!("expected a {kind} file, found {}", self.kind)));
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_and_bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Array2::from_shape_fn((3, 4), |(i, j)| i as f64 * 0.5 - j as f64 / 3.0);
        let p = dir.path().join("m.bin");
        write_matrix(&p, &m).unwrap();
        assert_eq!(read_matrix(&p).unwrap(), m);

        let mut b = Bundle::new("test");
        b.insert("w", m.clone());
        b.insert_scalar("tau", 10.0);
        let q = dir.path().join("b.bin");
        b.save(&q).unwrap();
        let back = Bundle::load(&q).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.scalar("tau").unwrap(), 10.0);
        assert_eq!(back.manifest()[1], ("w".to_string(), 3, 4));
        assert!(Bundle::load(&p).is_err());
    }
}
