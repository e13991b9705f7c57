//! Float images and PFM (portable float map) serialization.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::field::rgb_to_gray;
use crate::{Error, Result};

/// Row-major float image, top row first, `channels` interleaved per pixel
/// (1 = gray, 3 = RGB).
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: u32,
    height: u32,
    channels: u32,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(width: u32, height: u32, channels: u32) -> Image {
        assert!(channels == 1 || channels == 3, "1 or 3 channels");
        Image {
            width,
            height,
            channels,
            data: vec![0.0; (width * height * channels) as usize],
        }
    }

    pub fn from_data(width: u32, height: u32, channels: u32, data: Vec<f64>) -> Result<Image> {
        if data.len() != (width * height * channels) as usize {
            return Err(Error::Shape(format!(
                "image data length {} != {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn channels(&self) -> u32 {
        self.channels
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn n_pixels(&self) -> usize {
        (self.width * self.height) as usize
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width as usize + x) * self.channels as usize + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width as usize + x) * self.channels as usize + c] = v;
    }

    /// Rec.601 gray conversion; identity on gray images.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let mut out = Image::zeros(self.width, self.height, 1);
        for i in 0..self.n_pixels() {
            let rgb = [self.data[i * 3], self.data[i * 3 + 1], self.data[i * 3 + 2]];
            out.data[i] = rgb_to_gray(rgb);
        }
        out
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.channels == other.channels
    }

    /// Write as PFM: `PF`/`Pf` header, little-endian f32 samples, rows
    /// bottom-up per the format convention.
    pub fn write_pfm(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::with_capacity(self.data.len() * 4 + 32);
        let tag = if self.channels == 3 { "PF" } else { "Pf" };
        buf.extend_from_slice(format!("{tag}\n{} {}\n-1.0\n", self.width, self.height).as_bytes());
        let w = self.width as usize;
        let c = self.channels as usize;
        for y in (0..self.height as usize).rev() {
            for v in &self.data[y * w * c..(y + 1) * w * c] {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_pfm(path: &Path) -> Result<Image> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let mut line = String::new();
        let read_line = |r: &mut BufReader<std::fs::File>, line: &mut String| -> Result<String> {
            line.clear();
            r.read_line(line).map_err(|e| Error::io(path, e))?;
            Ok(line.trim().to_string())
        };
        let tag = read_line(&mut r, &mut line)?;
        let channels = match tag.as_str() {
            "PF" => 3u32,
            "Pf" => 1u32,
            other => {
                return Err(Error::Data(format!(
                    "{}: not a PFM file (header {other:?})",
                    path.display()
                )))
            }
        };
        let dims = read_line(&mut r, &mut line)?;
        let mut it = dims.split_whitespace();
        let parse = |s: Option<&str>| -> Result<u32> {
            s.and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Data(format!("{}: bad PFM dimensions", path.display())))
        };
        let width = parse(it.next())?;
        let height = parse(it.next())?;
        let scale: f64 = read_line(&mut r, &mut line)?
            .parse()
            .map_err(|_| Error::Data(format!("{}: bad PFM scale", path.display())))?;
        if scale >= 0.0 {
            return Err(Error::Data(format!(
                "{}: only little-endian PFM supported",
                path.display()
            )));
        }
        let n = (width * height * channels) as usize;
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes).map_err(|e| Error::io(path, e))?;
        let mut data = vec![0.0f64; n];
        let w = width as usize;
        let c = channels as usize;
        for y_file in 0..height as usize {
            let y = height as usize - 1 - y_file; // bottom-up rows
            for i in 0..w * c {
                let off = (y_file * w * c + i) * 4;
                let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
                data[y * w * c + i] = v as f64;
            }
        }
        Image::from_data(width, height, channels, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        // PFM stores f32; after one write/read cycle further cycles are
        // lossless.
        #[test]
        fn pfm_roundtrip_is_identity_at_format_precision(
            seed in 0u64..1000,
            gray in proptest::bool::ANY,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let ch = if gray { 1 } else { 3 };
            let data: Vec<f64> = (0..5 * 4 * ch)
                .map(|_| rng.gen_range(-2.0f32..2.0) as f64)
                .collect();
            let img = Image::from_data(5, 4, ch as u32, data).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("t.pfm");
            img.write_pfm(&path).unwrap();
            let back = Image::read_pfm(&path).unwrap();
            prop_assert_eq!(&img, &back);
            // second cycle is bit-identical at the file level too
            let bytes1 = std::fs::read(&path).unwrap();
            back.write_pfm(&path).unwrap();
            prop_assert_eq!(bytes1, std::fs::read(&path).unwrap());
        }
    }

    #[test]
    fn gray_of_gray_is_identity() {
        let img = Image::from_data(2, 1, 1, vec![0.25, 0.75]).unwrap();
        assert_eq!(img.to_gray(), img);
    }

    #[test]
    fn rejects_wrong_data_length() {
        assert!(Image::from_data(3, 3, 1, vec![0.0; 8]).is_err());
    }

    #[test]
    fn read_rejects_non_pfm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pfm");
        std::fs::write(&path, b"P6\n1 1\n255\n").unwrap();
        assert!(Image::read_pfm(&path).is_err());
    }
}
