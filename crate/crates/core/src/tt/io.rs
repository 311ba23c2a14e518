//! Little-endian binary dump of TT trains.
//!
//! Vector layout: `d`, `mode_sizes[d]`, `ranks[d+1]` as u64, then every core's
//! entries as f64 in core order (last rank index fastest).
//! Matrix layout: `d`, `row_sizes[d]`, `col_sizes[d]`, `ranks[d+1]`, then cores.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tt::matrix::TtMatrix;
use crate::tt::vector::{Core3, TtVector};

const MAX_DIM: u64 = 1 << 10;
const MAX_SIZE: u64 = 1 << 24;

fn put_u64(w: &mut impl Write, v: usize) -> std::io::Result<()> {
    w.write_all(&(v as u64).to_le_bytes())
}

fn get_u64(r: &mut impl Read, limit: u64, what: &str) -> Result<usize> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated header reading {what}: {e}")))?;
    let v = u64::from_le_bytes(b);
    if v == 0 || v > limit {
        return Err(Error::Format(format!("{what} = {v} out of range")));
    }
    Ok(v as usize)
}

fn get_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated core data: {e}")))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn put_cores(w: &mut impl Write, v: &TtVector) -> std::io::Result<()> {
    for c in v.cores() {
        for x in c.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_vector(w: &mut impl Write, v: &TtVector) -> std::io::Result<()> {
    put_u64(w, v.dim())?;
    for n in v.mode_sizes() {
        put_u64(w, n)?;
    }
    for r in v.ranks() {
        put_u64(w, r)?;
    }
    put_cores(w, v)
}

fn read_cores(r: &mut impl Read, modes: &[usize], ranks: &[usize]) -> Result<TtVector> {
    let cores = modes
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let data = get_f64s(r, ranks[k] * n * ranks[k + 1])?;
            Core3::new(ranks[k], n, ranks[k + 1], data)
        })
        .collect::<Result<Vec<_>>>()?;
    TtVector::from_cores(cores).map_err(|e| Error::Format(e.to_string()))
}

pub fn read_vector(r: &mut impl Read) -> Result<TtVector> {
    let d = get_u64(r, MAX_DIM, "d")?;
    let modes = (0..d)
        .map(|_| get_u64(r, MAX_SIZE, "mode size"))
        .collect::<Result<Vec<_>>>()?;
    let ranks = (0..=d)
        .map(|_| get_u64(r, MAX_SIZE, "rank"))
        .collect::<Result<Vec<_>>>()?;
    read_cores(r, &modes, &ranks)
}

pub fn write_matrix(w: &mut impl Write, m: &TtMatrix) -> std::io::Result<()> {
    put_u64(w, m.dim())?;
    for &n in m.row_sizes() {
        put_u64(w, n)?;
    }
    for &n in m.col_sizes() {
        put_u64(w, n)?;
    }
    for r in m.ranks() {
        put_u64(w, r)?;
    }
    put_cores(w, m.fused())
}

pub fn read_matrix(r: &mut impl Read) -> Result<TtMatrix> {
    let d = get_u64(r, MAX_DIM, "d")?;
    let rows = (0..d)
        .map(|_| get_u64(r, MAX_SIZE, "row size"))
        .collect::<Result<Vec<_>>>()?;
    let cols = (0..d)
        .map(|_| get_u64(r, MAX_SIZE, "column size"))
        .collect::<Result<Vec<_>>>()?;
    let ranks = (0..=d)
        .map(|_| get_u64(r, MAX_SIZE, "rank"))
        .collect::<Result<Vec<_>>>()?;
    let fused_modes: Vec<usize> = rows.iter().zip(&cols).map(|(a, b)| a * b).collect();
    let fused = read_cores(r, &fused_modes, &ranks)?;
    Ok(TtMatrix::from_fused(fused, rows, cols))
}

pub fn save_vector(path: &Path, v: &TtVector) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_vector(&mut w, v)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_vector(path: &Path) -> Result<TtVector> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_vector(&mut BufReader::new(f))
}

pub fn save_matrix(path: &Path, m: &TtMatrix) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_matrix(&mut w, m)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<TtMatrix> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_matrix(&mut BufReader::new(f))
}
