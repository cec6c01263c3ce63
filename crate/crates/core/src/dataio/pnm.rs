//! Binary PNM images: P5 (grayscale) and P6 (RGB) with 8- or 16-bit samples.
//!
//! Samples map to `[0, 1]` by dividing by the header's maximum level. Writing
//! quantizes `v` to `floor(v·max + 0.5)` (round half up); 16-bit samples
//! are big-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_level(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

/// Quantizes `v ∈ [0, 1]` to the nearest level (ties up) and maps it back.
pub fn quantize(v: f64, depth: BitDepth) -> f64 {
    let max = depth.max_level() as f64;
    (v * max + 0.5).floor() / max
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    source: &'a str,
}

impl Cursor<'_> {
    fn error(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Parse { source_name: self.source.to_string(), offset, message: message.into() }
    }

    /// Skips whitespace and `#` comments running to the end of the line.
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<(u64, usize)> {
        let had_separator = self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#');
        self.skip_separators();
        let start = self.pos;
        if !had_separator {
            return Err(self.error(start, format!("expected whitespace before {what}")));
        }
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(match self.bytes.get(start) {
                None => self.error(start, format!("header ends before {what}")),
                Some(b) => self.error(start, format!("expected {what}, found byte 0x{b:02x}")),
            });
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        let value = text.parse::<u64>().map_err(|_| self.error(start, format!("{what} '{text}' is out of range")))?;
        Ok((value, start))
    }
}

/// Decodes a P5 (`1×1×H×W`) or P6 (`1×3×H×W`) image.
pub fn decode_pnm(bytes: &[u8], source: &str) -> Result<Tensor> {
    let mut cur = Cursor { bytes, pos: 0, source };
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(cur.error(0, "bad magic: expected P5 or P6")),
    };
    cur.pos = 2;
    let (width, wpos) = cur.number("width")?;
    let (height, hpos) = cur.number("height")?;
    let (maxval, mpos) = cur.number("maximum level")?;
    if width == 0 {
        return Err(cur.error(wpos, "width must be positive"));
    }
    if height == 0 {
        return Err(cur.error(hpos, "height must be positive"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(cur.error(mpos, format!("unsupported maximum level {maxval} (depth must be 1..=65535)")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        Some(b) => return Err(cur.error(cur.pos, format!("expected whitespace after header, found byte 0x{b:02x}"))),
        None => return Err(cur.error(cur.pos, "header ends before pixel data")),
    }
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let samples = (width as u128) * (height as u128) * channels as u128;
    let expected = samples * sample_bytes as u128;
    let payload = &bytes[cur.pos..];
    if (payload.len() as u128) < expected {
        return Err(cur.error(
            cur.pos,
            format!("truncated payload: expected {expected} bytes of pixel data, found {}", payload.len()),
        ));
    }
    if (payload.len() as u128) > expected {
        return Err(cur.error(
            cur.pos + expected as usize,
            format!("{} unexpected bytes after pixel data", payload.len() as u128 - expected),
        ));
    }
    let (h, w) = (height as usize, width as usize);
    let max = maxval as f64;
    let mut data = vec![0.0; channels * h * w];
    for k in 0..h * w * channels {
        let at = k * sample_bytes;
        let level = if sample_bytes == 1 {
            payload[at] as u64
        } else {
            u16::from_be_bytes([payload[at], payload[at + 1]]) as u64
        };
        if level > maxval {
            return Err(cur.error(cur.pos + at, format!("sample {level} exceeds maximum level {maxval}")));
        }
        // Interleaved RGB becomes planar.
        let (pixel, c) = (k / channels, k % channels);
        data[c * h * w + pixel] = level as f64 / max;
    }
    Tensor::from_vec([1, channels, h, w], data)
}

/// Encodes a `1×1×H×W` (P5) or `1×3×H×W` (P6) image with values in `[0, 1]`.
pub fn encode_pnm(image: &Tensor, depth: BitDepth) -> Result<Vec<u8>> {
    let [n, c, h, w] = image.shape();
    let magic = match (n, c) {
        (1, 1) => "P5",
        (1, 3) => "P6",
        _ => return Err(Error::sizing(format!("PNM holds one grayscale or RGB image, got shape {:?}", image.shape()))),
    };
    if let Some(v) = image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("PNM samples must lie in [0,1], found {v}")));
    }
    let max = depth.max_level();
    let mut out = format!("{magic}\n{w} {h}\n{max}\n").into_bytes();
    for pixel in 0..h * w {
        for ch in 0..c {
            let level = (image.plane(ch)[pixel] * max as f64 + 0.5).floor() as u32;
            match depth {
                BitDepth::Eight => out.push(level as u8),
                BitDepth::Sixteen => out.extend_from_slice(&(level as u16).to_be_bytes()),
            }
        }
    }
    Ok(out)
}

pub fn read_image(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes, &path.display().to_string())
}

pub fn write_image(path: &Path, image: &Tensor, depth: BitDepth) -> Result<()> {
    let bytes = encode_pnm(image, depth)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
