//! Binary portable graymap (P5) and pixmap (P6) IO.
//!
//! Images are written with maxval 65535 (16-bit big-endian samples);
//! amplitudes in `[0, 1]` map linearly onto `0..=65535`. Label images use
//! the same container with the class index as the sample value. Reading
//! also accepts 8-bit graymaps.

use std::path::Path;

use crate::error::{Result, SaversError};
use crate::net::RgbImage;
use crate::regions::LabelMap;
use crate::tensor::Tensor;

pub const PGM_MAXVAL: u16 = 65535;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl GrayImage {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval > 255 {
            for s in &self.samples {
                out.extend_from_slice(&s.to_be_bytes());
            }
        } else {
            out.extend(self.samples.iter().map(|&s| s as u8));
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let magic = next_token(bytes, &mut pos)?;
        if magic != "P5" {
            return Err(SaversError::format(0, format!("expected P5 graymap, found {magic:?}")));
        }
        let width = parse_dim(bytes, &mut pos, "width")?;
        let height = parse_dim(bytes, &mut pos, "height")?;
        let maxval_at = pos;
        let maxval = parse_dim(bytes, &mut pos, "maxval")?;
        if maxval == 0 || maxval > 65535 {
            return Err(SaversError::format(maxval_at, format!("maxval {maxval} outside 1..=65535")));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let bytes_per = if maxval > 255 { 2 } else { 1 };
        let need = width * height * bytes_per;
        if bytes.len() < pos + need {
            return Err(SaversError::format(
                bytes.len(),
                format!("truncated raster: need {need} bytes after header at {pos}"),
            ));
        }
        let raster = &bytes[pos..pos + need];
        let samples: Vec<u16> = if bytes_per == 2 {
            raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        } else {
            raster.iter().map(|&b| b as u16).collect()
        };
        if let Some(i) = samples.iter().position(|&s| s as usize > maxval) {
            return Err(SaversError::format(pos + i * bytes_per, format!("sample exceeds maxval {maxval}")));
        }
        Ok(GrayImage {
            height,
            width,
            maxval: maxval as u16,
            samples,
        })
    }

    pub fn from_image(image: &Tensor) -> Result<Self> {
        let (_, h, w) = image.chw()?;
        Ok(GrayImage {
            height: h,
            width: w,
            maxval: PGM_MAXVAL,
            samples: image.data()[..h * w]
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * PGM_MAXVAL as f64).round() as u16)
                .collect(),
        })
    }

    /// `[1, H, W]` amplitude in `[0, 1]`.
    pub fn to_image(&self) -> Result<Tensor> {
        let scale = self.maxval as f64;
        Tensor::new(
            vec![1, self.height, self.width],
            self.samples.iter().map(|&s| s as f64 / scale).collect(),
        )
    }

    pub fn from_labels(labels: &LabelMap) -> Result<Self> {
        let samples = labels
            .data()
            .iter()
            .map(|&c| {
                u16::try_from(c).map_err(|_| SaversError::Data(format!("class {c} does not fit a 16-bit graymap")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GrayImage {
            height: labels.height(),
            width: labels.width(),
            maxval: PGM_MAXVAL,
            samples,
        })
    }

    pub fn to_labels(&self) -> Result<LabelMap> {
        LabelMap::new(self.height, self.width, self.samples.iter().map(|&s| s as usize).collect())
    }
}

fn skip_space_and_comments(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        if bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        } else if bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    skip_space_and_comments(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(SaversError::format(start, "unexpected end of header"));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn parse_dim(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let at = *pos;
    let tok = next_token(bytes, pos)?;
    tok.parse::<usize>()
        .ok()
        .filter(|&v| v > 0)
        .ok_or_else(|| SaversError::format(at, format!("invalid {what} {tok:?}")))
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    for px in &image.pixels {
        out.extend_from_slice(px);
    }
    out
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| SaversError::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| SaversError::io(path, e))?;
    GrayImage::decode(&bytes).map_err(|e| match e {
        SaversError::Format { offset, message } => SaversError::format(offset, format!("{}: {message}", path.display())),
        other => other,
    })
}

pub fn write_image_pgm(path: &Path, image: &Tensor) -> Result<()> {
    write_file(path, &GrayImage::from_image(image)?.encode())
}

pub fn write_labels_pgm(path: &Path, labels: &LabelMap) -> Result<()> {
    write_file(path, &GrayImage::from_labels(labels)?.encode())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_bit_round_trip() {
        let img = GrayImage {
            height: 2,
            width: 3,
            maxval: 65535,
            samples: vec![0, 1, 256, 4000, 65534, 65535],
        };
        assert_eq!(GrayImage::decode(&img.encode()).unwrap(), img);
    }

    #[test]
    fn eight_bit_with_comment() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[10, 255]);
        let img = GrayImage::decode(&bytes).unwrap();
        assert_eq!(img.samples, vec![10, 255]);
        let t = img.to_image().unwrap();
        assert_eq!(t.data()[1], 1.0);
    }

    #[test]
    fn truncated_raster() {
        let bytes = b"P5 4 4 65535\n\x00\x01".to_vec();
        assert!(matches!(GrayImage::decode(&bytes), Err(SaversError::Format { .. })));
        assert!(GrayImage::decode(b"P6 1 1 255\n\x00\x00\x00").is_err());
    }

    #[test]
    fn labels_round_trip() {
        let map = LabelMap::new(2, 2, vec![0, 3, 10, 1]).unwrap();
        let back = GrayImage::decode(&GrayImage::from_labels(&map).unwrap().encode())
            .unwrap()
            .to_labels()
            .unwrap();
        assert_eq!(back, map);
    }

    #[test]
    fn ppm_header() {
        let img = RgbImage {
            height: 1,
            width: 2,
            pixels: vec![[1, 2, 3], [4, 5, 6]],
        };
        assert_eq!(encode_ppm(&img), b"P6\n2 1\n255\n\x01\x02\x03\x04\x05\x06".to_vec());
    }
}
