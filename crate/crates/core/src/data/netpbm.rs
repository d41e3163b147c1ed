//! Binary netpbm codecs: P6 (PPM) and P5 (PGM), 8-bit, maxval 255.
//!
//! Comments (`#` to end of line) are allowed anywhere whitespace is, per the
//! format specification. Grayscale images are replicated to three channels;
//! sample values map to `[0, 1]` by division by 255.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        HeaderReader { bytes, pos: 0 }
    }

    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn read_number(&mut self) -> Result<usize> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::Decode("expected an ASCII integer in header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Decode("malformed integer in header".into()))
    }
}

/// Decodes binary PPM (P6) or PGM (P5) bytes into a `3 x H x W` tensor.
pub fn decode_image(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 2 {
        return Err(Error::Decode("file shorter than a magic number".into()));
    }
    let color = match &bytes[0..2] {
        b"P6" => true,
        b"P5" => false,
        other => {
            return Err(Error::Decode(format!(
                "unsupported magic {:?} (binary P5/P6 only)",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let mut reader = HeaderReader::new(&bytes[2..]);
    let width = reader.read_number()?;
    let height = reader.read_number()?;
    let maxval = reader.read_number()?;
    if maxval != 255 {
        return Err(Error::Decode(format!("maxval must be 255, got {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Decode("image dimensions must be positive".into()));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let after_header = 2 + reader.pos;
    if after_header >= bytes.len() || !bytes[after_header].is_ascii_whitespace() {
        return Err(Error::Decode("missing whitespace before raster data".into()));
    }
    let raster = &bytes[after_header + 1..];
    let samples_per_pixel = if color { 3 } else { 1 };
    let expected = width * height * samples_per_pixel;
    if raster.len() < expected {
        return Err(Error::Decode(format!(
            "raster truncated: need {expected} bytes, have {}",
            raster.len()
        )));
    }

    let mut data = vec![0.0; 3 * height * width];
    let plane = height * width;
    for row in 0..height {
        for col in 0..width {
            let pixel = row * width + col;
            if color {
                for channel in 0..3 {
                    data[channel * plane + pixel] = raster[pixel * 3 + channel] as f64 / 255.0;
                }
            } else {
                let v = raster[pixel] as f64 / 255.0;
                for channel in 0..3 {
                    data[channel * plane + pixel] = v;
                }
            }
        }
    }
    Tensor::new(vec![3, height, width], data)
}

/// Encodes a `3 x H x W` tensor with values in `[0, 1]` as binary PPM (P6).
/// Values are quantized by rounding to the nearest of 256 levels.
pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    if image.rank() != 3 || image.shape()[0] != 3 {
        return Err(Error::ShapeMismatch(format!(
            "expected a 3 x H x W image, got {:?}",
            image.shape()
        )));
    }
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let plane = h * w;
    for pixel in 0..plane {
        for channel in 0..3 {
            let v = image.data()[channel * plane + pixel];
            let byte = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            out.push(byte);
        }
    }
    Ok(out)
}
