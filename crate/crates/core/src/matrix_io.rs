//! Little-endian binary formats.
//!
//! Matrix (`.gowm`): `"GOWM"`, version `u16 = 1`, rows `u64`, cols `u64`,
//! then `rows * cols` `f32` values row-major.
//!
//! Labels (`.gowl`): `"GOWL"`, rows `u64`, then one byte per row in `{0, 1}`.
//!
//! Model (`.gown`): `"GOWN"`, version `u16 = 1`, layer count `u8`, then per
//! layer rows `u32`, cols `u32`, `rows * cols` `f64` weights row-major and
//! `cols` `f64` biases.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::gower::GowerMatrix;
use crate::nn::{Layer, ModelParameters};

pub const MATRIX_MAGIC: &[u8; 4] = b"GOWM";
pub const LABELS_MAGIC: &[u8; 4] = b"GOWL";
pub const MODEL_MAGIC: &[u8; 4] = b"GOWN";
pub const FORMAT_VERSION: u16 = 1;

fn fmt_err(e: std::io::Error) -> Error {
    Error::Format(e.to_string())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(fmt_err)?;
    Ok(buf)
}

fn expect_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let got = read_array::<4>(r)?;
    if &got != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

fn expect_version(r: &mut impl Read) -> Result<()> {
    let v = u16::from_le_bytes(read_array(r)?);
    if v != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {v}")));
    }
    Ok(())
}

fn expect_eof(r: &mut impl Read) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe).map_err(fmt_err)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes after payload".into())),
    }
}

pub fn write_matrix_to(w: &mut impl Write, m: &GowerMatrix) -> Result<()> {
    w.write_all(MATRIX_MAGIC).map_err(fmt_err)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(fmt_err)?;
    w.write_all(&(m.rows() as u64).to_le_bytes()).map_err(fmt_err)?;
    w.write_all(&(m.cols() as u64).to_le_bytes()).map_err(fmt_err)?;
    for v in m.values() {
        w.write_all(&v.to_le_bytes()).map_err(fmt_err)?;
    }
    Ok(())
}

/// Reads the value grid; labels come from the sidecar.
pub fn read_matrix_values(r: &mut impl Read) -> Result<(usize, usize, Vec<f32>)> {
    expect_magic(r, MATRIX_MAGIC)?;
    expect_version(r)?;
    let rows = u64::from_le_bytes(read_array(r)?) as usize;
    let cols = u64::from_le_bytes(read_array(r)?) as usize;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("matrix dimensions overflow".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(fmt_err)?;
    if bytes.len() != n * 4 {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            n * 4,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((rows, cols, values))
}

pub fn write_labels_to(w: &mut impl Write, labels: &[u8]) -> Result<()> {
    w.write_all(LABELS_MAGIC).map_err(fmt_err)?;
    w.write_all(&(labels.len() as u64).to_le_bytes()).map_err(fmt_err)?;
    w.write_all(labels).map_err(fmt_err)?;
    Ok(())
}

pub fn read_labels_from(r: &mut impl Read) -> Result<Vec<u8>> {
    expect_magic(r, LABELS_MAGIC)?;
    let rows = u64::from_le_bytes(read_array(r)?) as usize;
    let mut labels = vec![0u8; rows];
    r.read_exact(&mut labels).map_err(fmt_err)?;
    expect_eof(r)?;
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Format("label byte outside {0,1}".into()));
    }
    Ok(labels)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `<stem>.gowm` and its `<stem>.gowl` sidecar.
pub fn save_matrix(matrix_path: &Path, m: &GowerMatrix) -> Result<()> {
    let mut w = create(matrix_path)?;
    write_matrix_to(&mut w, m)?;
    finish(w, matrix_path)?;
    let labels_path = matrix_path.with_extension("gowl");
    let mut w = create(&labels_path)?;
    write_labels_to(&mut w, m.row_labels())?;
    finish(w, &labels_path)
}

pub fn load_matrix(matrix_path: &Path) -> Result<GowerMatrix> {
    let (rows, cols, values) = read_matrix_values(&mut open(matrix_path)?)?;
    let labels_path = matrix_path.with_extension("gowl");
    let labels = read_labels_from(&mut open(&labels_path)?)?;
    if labels.len() != rows {
        return Err(Error::Format(format!(
            "{} has {rows} rows but {} has {} labels",
            matrix_path.display(),
            labels_path.display(),
            labels.len()
        )));
    }
    let id = matrix_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    GowerMatrix::from_parts(values, rows, cols, labels, id)
}

pub fn write_model_to(w: &mut impl Write, params: &ModelParameters) -> Result<()> {
    w.write_all(MODEL_MAGIC).map_err(fmt_err)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(fmt_err)?;
    let count = u8::try_from(params.layers().len())
        .map_err(|_| Error::Format("too many layers".into()))?;
    w.write_all(&[count]).map_err(fmt_err)?;
    for layer in params.layers() {
        let (rows, cols) = layer.weights.dim();
        w.write_all(&(rows as u32).to_le_bytes()).map_err(fmt_err)?;
        w.write_all(&(cols as u32).to_le_bytes()).map_err(fmt_err)?;
        for v in layer.weights.iter() {
            w.write_all(&v.to_le_bytes()).map_err(fmt_err)?;
        }
        for v in layer.biases.iter() {
            w.write_all(&v.to_le_bytes()).map_err(fmt_err)?;
        }
    }
    Ok(())
}

pub fn read_model_from(r: &mut impl Read) -> Result<ModelParameters> {
    expect_magic(r, MODEL_MAGIC)?;
    expect_version(r)?;
    let count = read_array::<1>(r)?[0] as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = u32::from_le_bytes(read_array(r)?) as usize;
        let cols = u32::from_le_bytes(read_array(r)?) as usize;
        let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
            (0..n)
                .map(|_| Ok(f64::from_le_bytes(read_array(r)?)))
                .collect()
        };
        let weights = read_f64s(rows * cols)?;
        let biases = read_f64s(cols)?;
        layers.push(Layer {
            weights: Array2::from_shape_vec((rows, cols), weights)
                .map_err(|e| Error::Format(e.to_string()))?,
            biases: Array1::from(biases),
        });
    }
    expect_eof(r)?;
    ModelParameters::from_layers(layers)
}

pub fn save_model(path: &Path, params: &ModelParameters) -> Result<()> {
    let mut w = create(path)?;
    write_model_to(&mut w, params)?;
    finish(w, path)
}

pub fn load_model(path: &Path) -> Result<ModelParameters> {
    read_model_from(&mut open(path)?)
}
