//! Portable binary files for matrices, dictionaries and model stacks.
//!
//! All integers and floats are little-endian; floats are IEEE-754 binary64.
//!
//! Matrix record (`.mat`):
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 8    | magic `SSMATRIX`              |
//! | 8      | 4    | u32 version (= 1)             |
//! | 12     | 4    | u32 reserved (= 0)            |
//! | 16     | 8    | u64 rows                      |
//! | 24     | 8    | u64 cols                      |
//! | 32     | 8·r·c| f64 entries, row-major        |
//!
//! Dictionary record (`.dict`): magic `SSDICT\0\0`, u32 version, u32
//! `has_conv` (0 or 1); when 1, four u64 fields `num_filters`, `filter_len`,
//! `stride`, `in_channels`; then a matrix record. A convolutional matrix must
//! equal the expansion of its filters or loading fails.
//!
//! Stack record (`.stack`): magic `SSSTACK\0`, u32 version, u32 layer count
//! `K`, then `K` times: u64 budget `λ_i` followed by a dictionary record.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{ConvMeta, Dictionary, ModelError, ModelStack, Result};

const MATRIX_MAGIC: &[u8; 8] = b"SSMATRIX";
const DICT_MAGIC: &[u8; 8] = b"SSDICT\0\0";
const STACK_MAGIC: &[u8; 8] = b"SSSTACK\0";
const VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_usize<R: Read>(r: &mut R) -> Result<usize> {
    usize::try_from(get_u64(r)?).map_err(|_| ModelError::Format("size does not fit in usize".into()))
}

fn expect_header<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<()> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    if &b != magic {
        return Err(ModelError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&b),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(ModelError::Format(format!("unsupported version {version}")));
    }
    Ok(())
}

pub fn write_matrix<W: Write>(w: &mut W, m: &Array2<f64>) -> Result<()> {
    w.write_all(MATRIX_MAGIC)?;
    put_u32(w, VERSION)?;
    put_u32(w, 0)?;
    put_u64(w, m.nrows() as u64)?;
    put_u64(w, m.ncols() as u64)?;
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_matrix<R: Read>(r: &mut R) -> Result<Array2<f64>> {
    expect_header(r, MATRIX_MAGIC)?;
    let _reserved = get_u32(r)?;
    let rows = get_usize(r)?;
    let cols = get_usize(r)?;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| ModelError::Format("matrix size overflows".into()))?;
    let mut data = Vec::with_capacity(count.min(1 << 24));
    let mut b = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut b)?;
        data.push(f64::from_le_bytes(b));
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| ModelError::Format(e.to_string()))
}

pub fn write_dictionary<W: Write>(w: &mut W, d: &Dictionary) -> Result<()> {
    w.write_all(DICT_MAGIC)?;
    put_u32(w, VERSION)?;
    match d.conv_meta() {
        Some(meta) => {
            put_u32(w, 1)?;
            for v in [meta.num_filters, meta.filter_len, meta.stride, meta.in_channels] {
                put_u64(w, v as u64)?;
            }
        }
        None => put_u32(w, 0)?,
    }
    write_matrix(w, d.matrix())
}

pub fn read_dictionary<R: Read>(r: &mut R) -> Result<Dictionary> {
    expect_header(r, DICT_MAGIC)?;
    let meta = match get_u32(r)? {
        0 => None,
        1 => Some(ConvMeta {
            num_filters: get_usize(r)?,
            filter_len: get_usize(r)?,
            stride: get_usize(r)?,
            in_channels: get_usize(r)?,
        }),
        other => return Err(ModelError::Format(format!("bad has_conv flag {other}"))),
    };
    let m = read_matrix(r)?;
    match meta {
        Some(meta) => Dictionary::with_conv_meta(m, meta),
        None => Dictionary::new(m),
    }
}

pub fn write_stack<W: Write>(w: &mut W, stack: &ModelStack) -> Result<()> {
    w.write_all(STACK_MAGIC)?;
    put_u32(w, VERSION)?;
    put_u32(w, stack.depth() as u32)?;
    for (d, &lambda) in stack.layers().iter().zip(stack.lambda()) {
        put_u64(w, lambda as u64)?;
        write_dictionary(w, d)?;
    }
    Ok(())
}

pub fn read_stack<R: Read>(r: &mut R) -> Result<ModelStack> {
    expect_header(r, STACK_MAGIC)?;
    let depth = get_u32(r)? as usize;
    let mut layers = Vec::with_capacity(depth);
    let mut lambda = Vec::with_capacity(depth);
    for _ in 0..depth {
        lambda.push(get_usize(r)?);
        layers.push(read_dictionary(r)?);
    }
    ModelStack::new(layers, lambda)
}

pub fn save_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<Array2<f64>> {
    read_matrix(&mut BufReader::new(File::open(path)?))
}

pub fn save_dictionary(path: &Path, d: &Dictionary) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dictionary(&mut w, d)?;
    w.flush()?;
    Ok(())
}

pub fn load_dictionary(path: &Path) -> Result<Dictionary> {
    read_dictionary(&mut BufReader::new(File::open(path)?))
}

pub fn save_stack(path: &Path, stack: &ModelStack) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_stack(&mut w, stack)?;
    w.flush()?;
    Ok(())
}

pub fn load_stack(path: &Path) -> Result<ModelStack> {
    read_stack(&mut BufReader::new(File::open(path)?))
}
