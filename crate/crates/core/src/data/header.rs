//! Chip files with an ASCII key/value header followed by big-endian
//! 32-bit float magnitudes, as distributed with public SAR target sets.
//!
//! ```text
//! [PhoenixHeaderVer01.04]
//! PhoenixHeaderLength= 00000213
//! NumberOfColumns= 128
//! NumberOfRows= 128
//! TargetAz= 305.48
//! DesiredDepression= 15
//! [EndofPhoenixHeader]
//! <rows * cols BE f32 magnitude><optional phase block, ignored>
//! ```
//! Magnitudes start `PhoenixHeaderLength + NativeHeaderLength` bytes into
//! the file (`NativeHeaderLength` defaults to 0).

use super::chip::ChipRecord;
use crate::error::{Result, SaversError};
use crate::tensor::Tensor;

const BEGIN_PREFIX: &str = "[PhoenixHeaderVer";
const BEGIN_LINE: &str = "[PhoenixHeaderVer01.04]";
const END_LINE: &str = "[EndofPhoenixHeader]";

#[derive(Debug, Clone, PartialEq)]
pub struct HeaderChip {
    /// Header entries in file order.
    pub fields: Vec<(String, String)>,
    pub rows: usize,
    pub cols: usize,
    pub magnitudes: Vec<f32>,
}

impl HeaderChip {
    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut fields = Vec::new();
        let mut saw_begin = false;
        let mut header_end = None;
        while pos < bytes.len() {
            let line_start = pos;
            let line_end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .map_or(bytes.len(), |i| pos + i);
            pos = (line_end + 1).min(bytes.len());
            let line = String::from_utf8_lossy(&bytes[line_start..line_end]);
            let line = line.trim();
            if !saw_begin {
                if !line.starts_with(BEGIN_PREFIX) {
                    return Err(SaversError::format(line_start, "missing header begin marker"));
                }
                saw_begin = true;
                continue;
            }
            if line == END_LINE {
                header_end = Some(pos);
                break;
            }
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(SaversError::format(line_start, format!("header line without '=': {line:?}")));
            };
            fields.push((k.trim().to_string(), v.trim().to_string()));
        }
        if !saw_begin {
            return Err(SaversError::format(0, "missing header begin marker"));
        }
        let header_end = header_end.ok_or_else(|| SaversError::format(bytes.len(), "missing header end marker"))?;

        let get = |key: &str| -> Result<&str> {
            fields
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| SaversError::format(header_end, format!("missing header key {key}")))
        };
        let number = |key: &str| -> Result<usize> {
            let v = get(key)?;
            v.parse::<usize>()
                .map_err(|_| SaversError::format(header_end, format!("header key {key} is not an integer: {v:?}")))
        };
        let rows = number("NumberOfRows")?;
        let cols = number("NumberOfColumns")?;
        let phoenix_len = number("PhoenixHeaderLength")?;
        for key in ["TargetAz", "DesiredDepression"] {
            let v = get(key)?;
            v.parse::<f64>()
                .map_err(|_| SaversError::format(header_end, format!("header key {key} is not a number: {v:?}")))?;
        }
        let native_len = match fields.iter().find(|(k, _)| k == "NativeHeaderLength") {
            Some(_) => number("NativeHeaderLength")?,
            None => 0,
        };
        if rows == 0 || cols == 0 {
            return Err(SaversError::format(header_end, format!("empty raster {rows}x{cols}")));
        }

        let data_start = phoenix_len + native_len;
        let need = rows * cols * 4;
        if bytes.len() < data_start + need {
            return Err(SaversError::format(
                bytes.len(),
                format!("truncated magnitude block: need {need} bytes from offset {data_start}"),
            ));
        }
        let magnitudes = bytes[data_start..data_start + need]
            .chunks_exact(4)
            .map(|c| f32::from_be_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(HeaderChip {
            fields,
            rows,
            cols,
            magnitudes,
        })
    }

    /// Serialises with a fixed-width `PhoenixHeaderLength` so the value can
    /// describe the header that contains it. Entries for the length and
    /// raster size are (re)generated; other fields are kept in order.
    pub fn encode(&self) -> Vec<u8> {
        let mut body = String::new();
        body.push_str(&format!("NumberOfColumns= {}\n", self.cols));
        body.push_str(&format!("NumberOfRows= {}\n", self.rows));
        for (k, v) in &self.fields {
            if !matches!(
                k.as_str(),
                "PhoenixHeaderLength" | "NumberOfColumns" | "NumberOfRows" | "NativeHeaderLength"
            ) {
                body.push_str(&format!("{k}= {v}\n"));
            }
        }
        let prefix = format!("{BEGIN_LINE}\nPhoenixHeaderLength= ");
        let suffix = format!("\n{body}{END_LINE}\n");
        let total = prefix.len() + 8 + suffix.len();
        let mut out = format!("{prefix}{total:08}{suffix}").into_bytes();
        debug_assert_eq!(out.len(), total);
        for m in &self.magnitudes {
            out.extend_from_slice(&m.to_be_bytes());
        }
        out
    }

    /// Chip with magnitudes divided by their maximum.
    pub fn to_record(&self, class_id: usize) -> Result<ChipRecord> {
        let max = self.magnitudes.iter().copied().fold(0.0f32, f32::max) as f64;
        let scale = if max > 0.0 { 1.0 / max } else { 1.0 };
        let image = Tensor::new(
            vec![1, self.rows, self.cols],
            self.magnitudes.iter().map(|&m| (m as f64).max(0.0) * scale).collect(),
        )?;
        let num = |k: &str| self.field(k).and_then(|v| v.parse::<f64>().ok()).unwrap_or(0.0);
        Ok(ChipRecord {
            image,
            class_id,
            depression_deg: num("DesiredDepression"),
            aspect_deg: num("TargetAz").rem_euclid(360.0),
            source_name: self.field("Filename").unwrap_or_default().to_string(),
        })
    }

    pub fn from_record(record: &ChipRecord) -> Self {
        HeaderChip {
            fields: vec![
                ("Filename".into(), record.source_name.clone()),
                ("TargetAz".into(), format!("{}", record.aspect_deg)),
                ("DesiredDepression".into(), format!("{}", record.depression_deg)),
            ],
            rows: record.height(),
            cols: record.width(),
            magnitudes: record.image.data().iter().map(|&v| v as f32).collect(),
        }
    }
}

pub fn parse_header_chip(bytes: &[u8], class_id: usize) -> Result<ChipRecord> {
    HeaderChip::parse(bytes)?.to_record(class_id)
}

pub fn write_header_chip(record: &ChipRecord) -> Vec<u8> {
    HeaderChip::from_record(record).encode()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chip_bytes(fields: &[(&str, &str)], mags: &[f32]) -> Vec<u8> {
        HeaderChip {
            fields: fields.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            rows: 2,
            cols: 2,
            magnitudes: mags.to_vec(),
        }
        .encode()
    }

    #[test]
    fn normalises_by_max() {
        let bytes = chip_bytes(&[("TargetAz", "305.48"), ("DesiredDepression", "15")], &[1.0, 2.0, 3.0, 4.0]);
        let rec = parse_header_chip(&bytes, 4).unwrap();
        assert_eq!(rec.image.data(), &[0.25, 0.5, 0.75, 1.0]);
        assert_eq!(rec.aspect_deg, 305.48);
        assert_eq!(rec.depression_deg, 15.0);
        assert_eq!(rec.class_id, 4);
    }

    #[test]
    fn missing_rows_key_is_named() {
        let text = "[PhoenixHeaderVer01.04]\nPhoenixHeaderLength= 00000100\nNumberOfColumns= 2\nTargetAz= 1\nDesiredDepression= 17\n[EndofPhoenixHeader]\n";
        let err = HeaderChip::parse(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("NumberOfRows"), "{err}");
    }

    #[test]
    fn missing_markers() {
        assert!(HeaderChip::parse(b"NumberOfRows= 2\n").is_err());
        let err = HeaderChip::parse(b"[PhoenixHeaderVer01.04]\nNumberOfRows= 2\n").unwrap_err();
        assert!(err.to_string().contains("end marker"));
    }

    #[test]
    fn truncated_data_reports_offset() {
        let bytes = chip_bytes(&[("TargetAz", "1"), ("DesiredDepression", "17")], &[1.0; 4]);
        match HeaderChip::parse(&bytes[..bytes.len() - 3]) {
            Err(SaversError::Format { offset, message }) => {
                assert_eq!(offset, bytes.len() - 3);
                assert!(message.contains("truncated"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn phase_block_and_native_header_skipped() {
        let mut chip = HeaderChip::parse(&chip_bytes(&[("TargetAz", "10"), ("DesiredDepression", "17")], &[1.0, 2.0, 3.0, 4.0])).unwrap();
        chip.magnitudes = vec![5.0, 6.0, 7.0, 8.0];
        let mut bytes = chip.encode();
        bytes.extend_from_slice(&[0xFF; 16]); // phase
        assert_eq!(HeaderChip::parse(&bytes).unwrap().magnitudes, vec![5.0, 6.0, 7.0, 8.0]);
    }
}
