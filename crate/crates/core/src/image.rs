//! 8-bit grayscale raster with PGM/PNG I/O.

use std::io::Cursor;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Luma};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width.checked_mul(height) != Some(data.len()) {
            return Err(Error::invalid(format!(
                "{width}x{height} image needs {} bytes, got {}",
                width.saturating_mul(height),
                data.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Decodes PGM (binary or ASCII) or PNG bytes; colour input is
    /// converted to luma.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let format = image::guess_format(bytes).map_err(|e| Error::Image(e.to_string()))?;
        if !matches!(format, ImageFormat::Png | ImageFormat::Pnm) {
            return Err(Error::Image(format!("unsupported format {format:?}")));
        }
        let img = image::load_from_memory_with_format(bytes, format)
            .map_err(|e| Error::Image(e.to_string()))?
            .into_luma8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.into_raw())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Encodes as binary PGM (P5).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let buf: ImageBuffer<Luma<u8>, &[u8]> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, &self.data[..])
                .expect("dimensions checked at construction");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png)
            .map_err(|e| Error::Image(e.to_string()))?;
        Ok(out.into_inner())
    }

    /// Writes PNG when the extension is `.png`, PGM otherwise.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let is_png = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        let bytes = if is_png {
            self.to_png()?
        } else {
            self.to_pgm()
        };
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Adds `delta` to every pixel, saturating at 0 and 255.
    pub fn shifted(&self, delta: i32) -> Self {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&v| (v as i32 + delta).clamp(0, 255) as u8)
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GrayImage {
        GrayImage::from_fn(7, 5, |x, y| (x * 30 + y * 7) as u8)
    }

    #[test]
    fn pgm_round_trip() {
        let img = sample();
        assert_eq!(GrayImage::decode(&img.to_pgm()).unwrap(), img);
    }

    #[test]
    fn png_round_trip() {
        let img = sample();
        assert_eq!(GrayImage::decode(&img.to_png().unwrap()).unwrap(), img);
    }

    #[test]
    fn ascii_pgm() {
        let img = GrayImage::decode(b"P2\n2 2\n255\n0 10\n20 255\n").unwrap();
        assert_eq!(img.data(), &[0, 10, 20, 255]);
    }

    #[test]
    fn rejects_garbage_and_bad_sizes() {
        assert!(GrayImage::decode(b"not an image").is_err());
        assert!(GrayImage::decode(b"P5\n4 4\n255\n\x00\x01").is_err());
        assert!(GrayImage::new(3, 3, vec![0; 8]).is_err());
    }

    #[test]
    fn save_and_load_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let img = sample();
        for name in ["a.pgm", "b.png"] {
            let path = dir.path().join(name);
            img.save(&path).unwrap();
            assert_eq!(GrayImage::load(&path).unwrap(), img);
        }
    }
}
