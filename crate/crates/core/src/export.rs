//! Plain-text tables and a binary path-ensemble format.
//!
//! CSV output starts with one `#` line carrying provenance; floats are
//! written with 17 significant digits so they round-trip exactly.
//!
//! Ensemble files are little-endian: magic `CLPE`, format version `u32`,
//! then `n_paths`, `dim`, `len` as `u64`, `seed` as `u64`, a jump flag
//! byte, the `len` times and finally `n_paths·len·dim` values as `f64`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::engine::ProfileCurve;
use crate::simulate::PathEnsemble;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Hex SHA-256 of the scenario file bytes.
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn header_line(&self) -> String {
        format!("# cutofflab {} config_sha256={} seed={}", self.version, self.config_sha256, self.seed)
    }
}

/// Shortest representation is not used on purpose: fixed 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: &mut W, provenance: &Provenance) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::InvalidArgument("refusing to write an empty table".into()));
        }
        writeln!(out, "{}", provenance.header_line())?;
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Columns `epsilon,r,t,measured,theoretical,gap,stderr`.
pub fn curve_table(curves: &[ProfileCurve]) -> Table {
    let mut table = Table::new(&["epsilon", "r", "t", "measured", "theoretical", "gap", "stderr"]);
    for c in curves {
        for p in &c.points {
            table.push(vec![
                fmt_opt(c.epsilon),
                fmt_f64(p.r),
                fmt_opt(p.t),
                fmt_opt(p.measured),
                fmt_f64(p.theoretical),
                fmt_opt(p.measured.map(|m| (m - p.theoretical).abs())),
                fmt_f64(p.stderr),
            ]);
        }
    }
    table
}

const MAGIC: &[u8; 4] = b"CLPE";
const FORMAT_VERSION: u32 = 1;

pub fn write_ensemble<W: Write>(out: &mut W, e: &PathEnsemble) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for v in [e.n_paths as u64, e.dim as u64, e.times.len() as u64, e.seed] {
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&[u8::from(e.has_jumps)])?;
    for v in e.times.iter().chain(&e.data) {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

pub fn read_ensemble<R: Read>(input: &mut R) -> Result<PathEnsemble> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::InvalidArgument("not a path ensemble file".into()));
    }
    let mut ver = [0u8; 4];
    input.read_exact(&mut ver)?;
    if u32::from_le_bytes(ver) != FORMAT_VERSION {
        return Err(Error::InvalidArgument(format!("unsupported ensemble format version {}", u32::from_le_bytes(ver))));
    }
    let n_paths = read_u64(input)? as usize;
    let dim = read_u64(input)? as usize;
    let len = read_u64(input)? as usize;
    let seed = read_u64(input)?;
    let mut flag = [0u8; 1];
    input.read_exact(&mut flag)?;
    let times = read_f64s(input, len)?;
    let data = read_f64s(input, n_paths * len * dim)?;
    Ok(PathEnsemble { n_paths, dim, times, seed, has_jumps: flag[0] != 0, data })
}
