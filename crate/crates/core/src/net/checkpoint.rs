//! Binary checkpoint format.
//!
//! ```text
//! "SAVERS1"                       7 bytes
//! config_len: u32 LE, then config_len bytes of canonical JSON
//!   (sorted keys, no whitespace)
//! per parameter, in model order:
//!   name_len: u32 LE, name bytes (UTF-8)
//!   rank: u32 LE, then rank x u64 LE extents
//!   product(extents) x f64 LE values
//! ```
//! Nothing follows the last parameter.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::config::SaversConfig;
use super::model::{parameter_layout, ParamSet, SaversModel};
use crate::error::{Result, SaversError};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 7] = b"SAVERS1";

pub fn canonical_config_json(config: &SaversConfig) -> Result<String> {
    // serde_json's default Map is ordered by key
    let value = serde_json::to_value(config)?;
    Ok(serde_json::to_string(&value)?)
}

pub fn encode_checkpoint(model: &SaversModel) -> Result<Vec<u8>> {
    let json = canonical_config_json(model.config())?;
    let mut out = Vec::with_capacity(model.parameter_count() * 8 + 1024);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(json.as_bytes());
    for (name, t) in model.params().iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &e in t.shape() {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(SaversError::format(
                self.pos,
                format!("truncated checkpoint: need {n} bytes for {what}, {} left", self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<SaversModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(SaversError::format(0, "bad magic, not a SAVERS1 checkpoint"));
    }
    let json_len = r.u32("config length")? as usize;
    let json_at = r.pos;
    let json = r.take(json_len, "config")?;
    let config: SaversConfig = serde_json::from_slice(json)
        .map_err(|e| SaversError::format(json_at, format!("invalid config json: {e}")))?;
    config
        .validate()
        .map_err(|e| SaversError::format(json_at, e.to_string()))?;

    let mut entries = Vec::new();
    for (expected_name, expected_shape) in parameter_layout(&config) {
        let at = r.pos;
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| SaversError::format(at, "parameter name is not UTF-8"))?
            .to_string();
        if name != expected_name {
            return Err(SaversError::format(at, format!("expected parameter {expected_name}, found {name}")));
        }
        let shape_at = r.pos;
        let rank = r.u32("rank")? as usize;
        if rank > 8 {
            return Err(SaversError::format(shape_at, format!("implausible rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| r.u64("extent").map(|e| e as usize))
            .collect::<Result<Vec<_>>>()?;
        if shape != expected_shape {
            return Err(SaversError::format(
                shape_at,
                format!("parameter {name} has shape {shape:?}, config requires {expected_shape:?}"),
            ));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 8, "values")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(SaversError::format(r.pos, "trailing bytes after last parameter"));
    }
    SaversModel::from_parts(config, ParamSet::new(entries))
}

/// Writes through a temporary file so a failed save never leaves a
/// partial checkpoint at `path`.
pub fn save_checkpoint(model: &SaversModel, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model)?;
    let tmp = path.with_extension("tmp");
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| SaversError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<SaversModel> {
    let bytes = fs::read(path).map_err(|e| SaversError::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SaversModel {
        let cfg = SaversConfig {
            num_classes: 3,
            block_channels: [2, 2, 3, 3],
            mid_channels: 4,
            ..SaversConfig::default()
        };
        SaversModel::build(cfg, 11).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = small();
        let bytes = encode_checkpoint(&m).unwrap();
        assert_eq!(&bytes[..7], b"SAVERS1");
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
        assert_eq!(back, m);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode_checkpoint(&small()).unwrap();
        for cut in [3, 20, bytes.len() / 2, bytes.len() - 1] {
            match decode_checkpoint(&bytes[..cut]) {
                Err(SaversError::Format { offset, .. }) => assert!(offset <= cut),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn config_shape_guard() {
        let m = small();
        let bytes = encode_checkpoint(&m).unwrap();
        let json = canonical_config_json(m.config()).unwrap();
        let other = json.replace("\"num_classes\":3", "\"num_classes\":4");
        assert_ne!(json, other);
        let mut forged = Vec::new();
        forged.extend_from_slice(MAGIC);
        forged.extend_from_slice(&(other.len() as u32).to_le_bytes());
        forged.extend_from_slice(other.as_bytes());
        forged.extend_from_slice(&bytes[7 + 4 + json.len()..]);
        let err = decode_checkpoint(&forged).unwrap_err();
        assert!(err.to_string().contains("shape"), "{err}");
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(decode_checkpoint(b"SAVERS2xxxx"), Err(SaversError::Format { offset: 0, .. })));
    }
}
