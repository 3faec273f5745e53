//! Binary PGM (P5), 8- and 16-bit.

use crate::error::{Error, Result};

use super::Image;

fn format_err(message: impl Into<String>) -> Error {
    Error::Format {
        format: "PGM",
        message: message.into(),
    }
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(format!("missing or invalid {what}")))
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(format_err("missing magic number"));
    }
    match bytes[1] {
        b'5' => {}
        b'6' | b'3' => return Err(Error::ColorImage("PPM".into())),
        b'1' | b'4' => return Err(Error::UnsupportedBitDepth("1-bit PBM".into())),
        b'2' => return Err(Error::UnsupportedFormat("ASCII PGM (P2)".into())),
        _ => return Err(format_err("unknown magic number")),
    }
    let mut rd = HeaderReader { bytes, pos: 2 };
    let width = rd.number("width")?;
    let height = rd.number("height")?;
    let maxval = rd.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::UnsupportedBitDepth(format!("PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if rd.pos >= bytes.len() || !bytes[rd.pos].is_ascii_whitespace() {
        return Err(format_err("header not terminated by whitespace"));
    }
    let payload = &bytes[rd.pos + 1..];
    let n = width * height;
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    if payload.len() < n * bytes_per {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: payload.len() / bytes_per,
        });
    }
    let data: Vec<f64> = if bytes_per == 1 {
        payload[..n].iter().map(|&b| b as f64).collect()
    } else {
        payload[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect()
    };
    Ok(Image::new(&[height, width], data)?.with_intensity_range(0.0, maxval as f64))
}

/// Encodes 16-bit codes as a P5 raster.
pub(super) fn encode16(rows: usize, cols: usize, codes: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{cols} {rows}\n65535\n").into_bytes();
    out.reserve(codes.len() * 2);
    for c in codes {
        out.extend_from_slice(&c.to_be_bytes());
    }
    out
}
