//! 8-bit raster I/O (binary PGM in, binary PPM/PGM out) and the normalized
//! floating-point image the pipeline works on.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit raster with one (gray) or three (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageU8 {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl ImageU8 {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!("unsupported channel count {channels}")));
        }
        let expected = height * width * channels;
        if pixels.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Divide by 255 to get values in `[0, 1]`.
    pub fn normalized(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
        }
    }
}

/// Floating-point image, channel-interleaved, values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn gray(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::LengthMismatch {
                expected: height * width,
                actual: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels: 1,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels: 1,
            data: vec![value; height * width],
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Round to 8 bits, clamping to the representable range.
    pub fn to_u8(&self) -> ImageU8 {
        ImageU8 {
            height: self.height,
            width: self.width,
            channels: self.channels,
            pixels: self
                .data
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect(),
        }
    }
}

pub fn read_pgm(bytes: &[u8]) -> Result<ImageU8> {
    let mut cursor = 0;
    let magic = next_token(bytes, &mut cursor)?;
    if magic != b"P5" {
        return Err(Error::Format(format!(
            "expected binary PGM (P5), found {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = parse_usize(next_token(bytes, &mut cursor)?)?;
    let height = parse_usize(next_token(bytes, &mut cursor)?)?;
    let maxval = parse_usize(next_token(bytes, &mut cursor)?)?;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    cursor += 1;
    let expected = width * height;
    let raster = bytes.get(cursor..).unwrap_or_default();
    if raster.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            actual: raster.len(),
        });
    }
    ImageU8::new(height, width, 1, raster[..expected].to_vec())
}

pub fn write_pgm(img: &ImageU8) -> Result<Vec<u8>> {
    if img.channels != 1 {
        return Err(Error::Shape("PGM output needs a single channel".into()));
    }
    Ok(with_header("P5", img))
}

/// Binary PPM; gray images are replicated across the three channels.
pub fn write_ppm(img: &ImageU8) -> Vec<u8> {
    if img.channels == 3 {
        return with_header("P6", img);
    }
    let rgb = ImageU8 {
        height: img.height,
        width: img.width,
        channels: 3,
        pixels: img.pixels.iter().flat_map(|&p| [p, p, p]).collect(),
    };
    with_header("P6", &rgb)
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<ImageU8> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_pgm(&bytes)
}

fn with_header(magic: &str, img: &ImageU8) -> Vec<u8> {
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

fn next_token<'a>(bytes: &'a [u8], cursor: &mut usize) -> Result<&'a [u8]> {
    loop {
        match bytes.get(*cursor) {
            Some(b'#') => {
                while bytes.get(*cursor).is_some_and(|&b| b != b'\n') {
                    *cursor += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *cursor += 1,
            Some(_) => break,
            None => return Err(Error::Format("unexpected end of PGM header".into())),
        }
    }
    let start = *cursor;
    while bytes.get(*cursor).is_some_and(|b| !b.is_ascii_whitespace()) {
        *cursor += 1;
    }
    Ok(&bytes[start..*cursor])
}

fn parse_usize(token: &[u8]) -> Result<usize> {
    std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("bad header field {:?}", String::from_utf8_lossy(token))))
}
