//! SIMG and STXT dataset files.
//!
//! ```text
//! SIMG: "SIMG" | u32 version | u32 n, k, C, H, W | n × (u16 label, C·H·W × f32 LE)
//! STXT: "STXT" | u32 version | u32 n, k, V, T | V × (u32 len, UTF-8) | n × (u16 label, T × u32 id)
//! ```

use std::path::Path;

use super::{ImageDataset, TextDataset};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::tensor::{IdTensor, Tensor};
use crate::Real;

pub const SIMG_MAGIC: &[u8; 4] = b"SIMG";
pub const STXT_MAGIC: &[u8; 4] = b"STXT";
pub const VERSION: u32 = 1;

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Dataset(format!("{what} {v} does not fit in u32")))
}

/// Label in range, so the encoder never writes what the decoder rejects.
fn check_label(record: usize, label: usize, classes: usize) -> Result<()> {
    if label >= classes {
        return Err(Error::Dataset(format!("record {record}: label {label} outside {classes} classes")));
    }
    Ok(())
}

fn to_u16_label(v: usize) -> Result<u16> {
    u16::try_from(v).map_err(|_| Error::Dataset(format!("label {v} does not fit in u16")))
}

pub fn encode_images(d: &ImageDataset) -> Result<Vec<u8>> {
    let s = d.images.shape();
    if s.len() != 4 || s[0] != d.labels.len() {
        return Err(Error::Dataset(format!("images {s:?} do not match {} labels", d.labels.len())));
    }
    let mut w = Writer::default();
    w.bytes(SIMG_MAGIC);
    w.u32(VERSION);
    for v in [s[0], d.classes, s[1], s[2], s[3]] {
        w.u32(to_u32(v, "dimension")?);
    }
    let per = s[1] * s[2] * s[3];
    for (i, &label) in d.labels.iter().enumerate() {
        check_label(i, label, d.classes)?;
        w.u16(to_u16_label(label)?);
        for &v in &d.images.data()[i * per..(i + 1) * per] {
            w.f32(v as f32);
        }
    }
    Ok(w.buf)
}

pub fn decode_images(bytes: &[u8]) -> Result<ImageDataset> {
    const F: &str = "SIMG";
    let mut r = Reader::new(bytes, F);
    r.magic(SIMG_MAGIC)?;
    r.version(VERSION)?;
    let mut dims = [0usize; 5];
    for (d, what) in dims.iter_mut().zip(["n", "k", "C", "H", "W"]) {
        *d = r.u32(what)? as usize;
    }
    let [n, k, c, h, w] = dims;
    if k == 0 || c == 0 || h == 0 || w == 0 {
        return Err(r.error_at(8, format!("header has a zero dimension: n={n} k={k} C={c} H={h} W={w}")));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let per = c * h * w;
    let expected = r.pos() + n * (2 + 4 * per);
    if bytes.len() != expected {
        return Err(r.error_at(
            bytes.len().min(expected),
            format!("header promises {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * per);
    for record in 0..n {
        let at = r.pos();
        let label = r.u16("label")? as usize;
        if label >= k {
            return Err(Error::LabelOutOfRange {
                format: F,
                record,
                offset: at as u64,
                label,
                classes: k,
            });
        }
        labels.push(label);
        for _ in 0..per {
            let at = r.pos();
            let v = r.f32("pixel")?;
            if !(0.0..=1.0).contains(&v) {
                return Err(r.error_at(at, format!("record {record}: pixel {v} outside [0, 1]")));
            }
            data.push(v as Real);
        }
    }
    Ok(ImageDataset {
        images: Tensor::new(vec![n, c, h, w], data)?,
        labels,
        classes: k,
    })
}

pub fn encode_text(d: &TextDataset) -> Result<Vec<u8>> {
    let s = d.tokens.shape();
    if s.len() != 2 || s[0] != d.labels.len() {
        return Err(Error::Dataset(format!("tokens {s:?} do not match {} labels", d.labels.len())));
    }
    let mut w = Writer::default();
    w.bytes(STXT_MAGIC);
    w.u32(VERSION);
    for v in [s[0], d.classes, d.vocab.len(), s[1]] {
        w.u32(to_u32(v, "dimension")?);
    }
    for entry in &d.vocab {
        w.string(entry);
    }
    for (i, &label) in d.labels.iter().enumerate() {
        check_label(i, label, d.classes)?;
        w.u16(to_u16_label(label)?);
        let row = &d.tokens.data()[i * s[1]..(i + 1) * s[1]];
        if let Some(&id) = row.iter().find(|&&id| id >= d.vocab.len()) {
            return Err(Error::Dataset(format!("record {i}: token id {id} outside vocabulary of {}", d.vocab.len())));
        }
        if let Some(pad) = row.iter().position(|&id| id == 0) {
            if row[pad..].iter().any(|&id| id != 0) {
                return Err(Error::Dataset(format!("record {i}: token after padding")));
            }
        }
        for &id in row {
            w.u32(to_u32(id, "token id")?);
        }
    }
    Ok(w.buf)
}

pub fn decode_text(bytes: &[u8]) -> Result<TextDataset> {
    const F: &str = "STXT";
    let mut r = Reader::new(bytes, F);
    r.magic(STXT_MAGIC)?;
    r.version(VERSION)?;
    let n = r.u32("n")? as usize;
    let k = r.u32("k")? as usize;
    let v = r.u32("V")? as usize;
    let t = r.u32("T")? as usize;
    if k == 0 || v == 0 || t == 0 {
        return Err(r.error_at(8, format!("header has a zero dimension: n={n} k={k} V={v} T={t}")));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut vocab = Vec::with_capacity(v);
    for _ in 0..v {
        vocab.push(r.string("vocabulary entry")?);
    }
    let expected = r.pos() + n * (2 + 4 * t);
    if bytes.len() != expected {
        return Err(r.error_at(
            bytes.len().min(expected),
            format!("header promises {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let mut labels = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n * t);
    for record in 0..n {
        let at = r.pos();
        let label = r.u16("label")? as usize;
        if label >= k {
            return Err(Error::LabelOutOfRange {
                format: F,
                record,
                offset: at as u64,
                label,
                classes: k,
            });
        }
        labels.push(label);
        let mut padded = false;
        for _ in 0..t {
            let at = r.pos();
            let id = r.u32("token id")? as usize;
            if id >= v {
                return Err(r.error_at(at, format!("record {record}: token id {id} outside vocabulary of {v}")));
            }
            if padded && id != 0 {
                return Err(r.error_at(at, format!("record {record}: token after padding")));
            }
            padded |= id == 0;
            ids.push(id);
        }
    }
    Ok(TextDataset {
        tokens: IdTensor::new(vec![n, t], ids)?,
        labels,
        classes: k,
        vocab,
    })
}

pub fn save_images(d: &ImageDataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_images(d)?)?;
    Ok(())
}

pub fn load_images(path: impl AsRef<Path>) -> Result<ImageDataset> {
    decode_images(&std::fs::read(path)?)
}

pub fn save_text(d: &TextDataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_text(d)?)?;
    Ok(())
}

pub fn load_text(path: impl AsRef<Path>) -> Result<TextDataset> {
    decode_text(&std::fs::read(path)?)
}
