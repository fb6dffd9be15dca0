use std::io::{BufWriter, Write};
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const DISPLAY_GAMMA: f64 = 2.2;
const RAW_MAGIC: &[u8; 8] = b"TEMORAW1";

/// Linear RGB image, row-major, three channels per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        Image {
            height,
            width,
            data: rgb.iter().copied().cycle().take(height * width * 3).collect(),
        }
    }

    /// From a `[H*W, 3]` tensor.
    pub fn from_tensor(height: usize, width: usize, t: &Tensor) -> Result<Self> {
        if t.shape() != [height * width, 3] {
            return Err(Error::shape("Image::from_tensor", format!("{:?} for {height}x{width}", t.shape())));
        }
        Ok(Image {
            height,
            width,
            data: t.data().to_vec(),
        })
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.height * self.width, 3], self.data.clone()).expect("consistent image")
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// 8-bit sRGB-ish bytes: clamp to [0,1], then `v^(1/2.2)`.
    pub fn to_display_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0).powf(1.0 / DISPLAY_GAMMA) * 255.0).round() as u8)
            .collect()
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        w.write_image_data(&self.to_display_bytes())?;
        w.finish()?;
        Ok(())
    }

    /// Flat dump: magic, u32 height, u32 width, u32 channels (all LE), then
    /// linear f32 samples.
    pub fn write_raw(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(20 + self.data.len() * 4);
        buf.extend_from_slice(RAW_MAGIC);
        for d in [self.height as u32, self.width as u32, 3] {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_raw(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |msg: &str| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: msg.to_string(),
        };
        if bytes.len() < 20 || &bytes[..8] != RAW_MAGIC {
            return Err(bad("not a raw image dump"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
        let (h, w, c) = (word(0), word(1), word(2));
        if c != 3 || bytes.len() != 20 + h * w * 3 * 4 {
            return Err(bad("size does not match header"));
        }
        let data = bytes[20..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        Ok(Image {
            height: h,
            width: w,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_and_clamp_only_at_export() {
        let mut img = Image::filled(1, 3, [0.0; 3]);
        img.data = vec![-0.5, 0.0, 1.0, 2.0, 0.5, 0.2, 0.0, 0.0, 0.0];
        let b = img.to_display_bytes();
        assert_eq!(&b[..5], &[0, 0, 255, 255, 186]);
        assert_eq!(img.data[3], 2.0);
    }

    #[test]
    fn raw_roundtrip() {
        let img = Image {
            height: 2,
            width: 2,
            data: (0..12).map(|i| i as f64 * 0.25).collect(),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.raw");
        img.write_raw(&p).unwrap();
        assert_eq!(Image::read_raw(&p).unwrap(), img);
    }
}
