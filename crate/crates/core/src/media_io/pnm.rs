//! Binary PGM (`P5`) and PPM (`P6`) with maxval 255.
//!
//! The decoder accepts any whitespace and `#` comments in the header; the
//! encoder always writes the canonical form `P5\n<w> <h>\n255\n<payload>`.

use std::path::Path;

use super::Frame;
use crate::{Error, Result};

pub fn decode_pnm(bytes: &[u8]) -> Result<Frame> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::MalformedHeader("missing P5/P6 magic number".into())),
    };
    let mut header = HeaderReader { bytes, pos: 2 };
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!(
            "zero-sized image {width}x{height}"
        )));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval(maxval));
    }
    // Exactly one whitespace byte separates maxval from the payload.
    match bytes.get(header.pos) {
        Some(b) if b.is_ascii_whitespace() => header.pos += 1,
        Some(_) => return Err(Error::MalformedHeader("no whitespace after maxval".into())),
        None => {
            return Err(Error::TruncatedPayload {
                expected: width as usize * height as usize * channels,
                found: 0,
            })
        }
    }
    let expected = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::MalformedHeader(format!("image {width}x{height} is too large")))?;
    let payload = &bytes[header.pos..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    Frame::new(
        width as usize,
        height as usize,
        channels,
        payload[..expected].to_vec(),
    )
}

pub fn encode_pnm(frame: &Frame) -> Vec<u8> {
    let magic = if frame.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.pixels());
    out
}

pub fn read_pnm(path: &Path) -> Result<Frame> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

pub fn write_pnm(path: &Path, frame: &Frame) -> Result<()> {
    std::fs::write(path, encode_pnm(frame)).map_err(|e| Error::io(path, e))
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, field: &str) -> Result<u32> {
        let start = self.pos;
        self.skip_separators();
        if self.pos == start {
            return Err(Error::MalformedHeader(format!(
                "expected whitespace before {field}"
            )));
        }
        let digits_start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        let digits = &self.bytes[digits_start..self.pos];
        if digits.is_empty() {
            return Err(Error::MalformedHeader(format!("missing {field}")));
        }
        std::str::from_utf8(digits)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedHeader(format!("{field} out of range")))
    }
}
