//! SLPN weight files.
//!
//! ```text
//! "SLPN" | u32 version | u32 len, manifest JSON (UTF-8)
//! repeated: u32 len, name | u32 rank | rank × u32 dims | f64 LE values
//! u32 CRC32 of every preceding byte
//! ```

use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::Real;

pub const MAGIC: &[u8; 4] = b"SLPN";
pub const VERSION: u32 = 1;
const FORMAT: &str = "SLPN";

#[derive(Clone, Debug, PartialEq)]
pub struct WeightFile {
    pub manifest: String,
    pub params: Vec<(String, Tensor)>,
}

impl WeightFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.string(&self.manifest);
        for (name, t) in &self.params {
            w.string(name);
            w.u32(t.rank() as u32);
            for &d in t.shape() {
                w.u32(d as u32);
            }
            for &v in t.data() {
                w.f64(v as f64);
            }
        }
        let crc = crc32fast::hash(&w.buf);
        w.u32(crc);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, FORMAT);
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        if bytes.len() < 12 {
            return Err(r.error("file too short for a checksum"));
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum {
                format: FORMAT,
                stored,
                computed,
            });
        }
        let mut r = Reader::new(body, FORMAT);
        r.take(8, "header")?;
        let manifest = r.string("manifest")?;
        let mut params = Vec::new();
        while r.remaining() > 0 {
            let at = r.pos();
            let name = r.string("parameter name")?;
            let rank = r.u32("rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("dimension")? as usize);
            }
            let n: usize = shape.iter().product();
            if r.remaining() < n * 8 {
                return Err(r.error(format!("truncated values for `{name}`")));
            }
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(r.f64("value")? as Real);
            }
            let t = Tensor::new(shape, data).map_err(|e| r.error_at(at, format!("`{name}`: {e}")))?;
            params.push((name, t));
        }
        Ok(WeightFile { manifest, params })
    }

    /// Parses the manifest as `T` after checking its `format` tag, so a file
    /// of the wrong kind is a format error rather than a missing field.
    pub fn header<T: serde::de::DeserializeOwned>(&self, format: &str, what: &str) -> Result<T> {
        let value: serde_json::Value = serde_json::from_str(&self.manifest)?;
        let found = value.get("format").and_then(|f| f.as_str()).unwrap_or("");
        if found != format {
            return Err(Error::Format {
                format: FORMAT,
                offset: 0,
                reason: format!("manifest describes `{found}`, not {what}"),
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WeightFile {
        WeightFile {
            manifest: "{\"a\":1}".into(),
            params: vec![
                ("w".into(), Tensor::new(vec![2, 2], vec![1.0, -0.5, 3.25, 1e-300]).unwrap()),
                ("s".into(), Tensor::scalar(7.0)),
            ],
        }
    }

    #[test]
    fn round_trip() {
        let f = sample();
        let bytes = f.to_bytes();
        let back = WeightFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corruption_is_rejected() {
        let bytes = sample().to_bytes();
        assert!(matches!(
            WeightFile::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Checksum { .. })
        ));
        let mut flipped = bytes.clone();
        flipped[20] ^= 1;
        assert!(matches!(WeightFile::from_bytes(&flipped), Err(Error::Checksum { .. })));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(WeightFile::from_bytes(&magic), Err(Error::Format { .. })));
        let mut version = bytes;
        version[4] = 9;
        assert!(matches!(WeightFile::from_bytes(&version), Err(Error::Version { found: 9, .. })));
    }
}
