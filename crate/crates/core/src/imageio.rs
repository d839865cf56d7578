//! Raster images, binary segmentation masks and binary PPM/PGM files.
//!
//! Only 8-bit binary netpbm is supported: `P6` for RGB, `P5` for grayscale,
//! maxval 255. Comments are skipped on read and never written.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major 8-bit image with one or three interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "image must be at least 1x1, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Channel {
                expected: 3,
                found: channels,
            });
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "{width}x{height}x{channels} image needs {expected} samples, got {}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Image filled with one value per channel.
    pub fn filled(width: u32, height: u32, pixel: &[u8]) -> Result<Self> {
        let data = pixel
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * pixel.len())
            .collect();
        Self::new(width, height, pixel.len() as u8, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    /// Samples of the pixel at `(x, y)`.
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels as usize;
        let at = (y as usize * self.width as usize + x as usize) * c;
        &self.data[at..at + c]
    }

    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [u8] {
        let c = self.channels as usize;
        let at = (y as usize * self.width as usize + x as usize) * c;
        &mut self.data[at..at + c]
    }

    /// Top-left `width` x `height` region.
    pub fn crop(&self, width: u32, height: u32) -> Result<Self> {
        if width > self.width || height > self.height {
            return Err(Error::DimensionMismatch(format!(
                "cannot crop {}x{} image to {width}x{height}",
                self.width, self.height
            )));
        }
        let c = self.channels as usize;
        let row = self.width as usize * c;
        let mut data = Vec::with_capacity(width as usize * height as usize * c);
        for y in 0..height as usize {
            data.extend_from_slice(&self.data[y * row..y * row + width as usize * c]);
        }
        Self::new(width, height, self.channels, data)
    }
}

/// Binary per-pixel target mask; every value is 0 or 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl SegMask {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "mask must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width as usize * height as usize {
            return Err(Error::Dimension(format!(
                "{width}x{height} mask needs {} values, got {}",
                width as usize * height as usize,
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::Range("mask values must be 0 or 1".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: u32, height: u32) -> Result<Self> {
        Self::new(width, height, vec![0; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub(crate) fn set(&mut self, x: u32, y: u32) {
        self.data[y as usize * self.width as usize + x as usize] = 1;
    }

    pub fn count(&self) -> u64 {
        self.data.iter().map(|&v| v as u64).sum()
    }

    /// Halves both dimensions; a target pixel survives when at least two of
    /// the four source pixels are set (box mean, rounded half-up).
    pub fn downsample_by_2(&self) -> Result<Self> {
        let small = downsample_by_2(&self.to_image())?;
        let data = small.into_data();
        Self::new(self.width / 2, self.height / 2, data)
    }

    /// Grayscale rendering with set pixels at 255.
    pub fn to_visual(&self) -> RasterImage {
        let data = self.data.iter().map(|&v| v * 255).collect();
        RasterImage::new(self.width, self.height, 1, data).expect("mask dims are valid")
    }

    fn to_image(&self) -> RasterImage {
        RasterImage::new(self.width, self.height, 1, self.data.clone())
            .expect("mask dims are valid")
    }
}

/// Reads a binary PPM (`P6`) or PGM (`P5`) file.
pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

/// Writes `img` as `P6` (three channels) or `P5` (one channel).
pub fn save_image(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pnm(img)).map_err(|e| Error::io(path, e))
}

pub fn encode_pnm(img: &RasterImage) -> Vec<u8> {
    let magic = if img.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn decode_pnm(bytes: &[u8]) -> Result<RasterImage> {
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3u8,
        Some(b"P5") => 1u8,
        _ => return Err(Error::Format("expected P6 or P5 magic".into())),
    };
    let mut pos = 2;
    let width = header_number(bytes, &mut pos, "width")?;
    let height = header_number(bytes, &mut pos, "height")?;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!(
            "maxval {maxval} unsupported, only 255"
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format("missing whitespace after maxval".into())),
    }
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("zero dimension {width}x{height}")));
    }
    let need = width as usize * height as usize * channels as usize;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(Error::Format(format!(
            "truncated raster: expected {need} bytes, found {}",
            payload.len()
        )));
    }
    RasterImage::new(width, height, channels, payload[..need].to_vec())
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<u32> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' || b == b'\r' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::Format(format!("header ends before {what}"))),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format(format!("expected a number for {what}")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("{what} does not fit in 32 bits")))
}

/// 2x2 box mean, rounded half-up.
pub fn downsample_by_2(img: &RasterImage) -> Result<RasterImage> {
    if img.width % 2 != 0 || img.height % 2 != 0 {
        return Err(Error::OddDimension {
            width: img.width,
            height: img.height,
        });
    }
    let (w, h, c) = (
        img.width as usize / 2,
        img.height as usize / 2,
        img.channels as usize,
    );
    let row = img.width as usize * c;
    let src = &img.data;
    let mut out = Vec::with_capacity(w * h * c);
    for y in 0..h {
        let top = &src[2 * y * row..(2 * y + 1) * row];
        let bottom = &src[(2 * y + 1) * row..(2 * y + 2) * row];
        for x in 0..w {
            for k in 0..c {
                let a = 2 * x * c + k;
                let sum = top[a] as u32 + top[a + c] as u32 + bottom[a] as u32 + bottom[a + c] as u32;
                out.push(((sum + 2) / 4) as u8);
            }
        }
    }
    RasterImage::new(w as u32, h as u32, img.channels, out)
}

/// Thresholds a grayscale image: 1 where `sample >= threshold`.
pub fn binarize_mask(img: &RasterImage, threshold: u8) -> Result<SegMask> {
    if img.channels != 1 {
        return Err(Error::Channel {
            expected: 1,
            found: img.channels,
        });
    }
    let data = img.data.iter().map(|&v| u8::from(v >= threshold)).collect();
    SegMask::new(img.width, img.height, data)
}

pub const DEFAULT_MASK_THRESHOLD: u8 = 128;
