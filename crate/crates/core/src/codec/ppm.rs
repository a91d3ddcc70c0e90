//! Binary PPM ("P6", maxval 255) reader and writer.

use super::RgbImage;
use crate::error::{Error, Result};

/// Parses a binary PPM image. Only "P6" with maxval 255 is accepted.
pub fn read_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let mut cur = Cursor { bytes, pos: 0 };

    let magic = cur.token()?;
    if magic != b"P6" {
        return Err(Error::format_at(
            0,
            format!(
                "not a binary PPM: magic {:?}",
                String::from_utf8_lossy(&magic)
            ),
        ));
    }
    let width = cur.unsigned("width")?;
    let height = cur.unsigned("height")?;
    let maxval = cur.unsigned("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(format!(
            "dimensions must be positive, got {width}x{height}"
        )));
    }
    if maxval != 255 {
        return Err(Error::format(format!("maxval must be 255, got {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the payload.
    cur.single_whitespace()?;

    let expected = 3usize
        .checked_mul(width as usize)
        .and_then(|n| n.checked_mul(height as usize))
        .ok_or_else(|| Error::format("pixel count overflows"))?;
    let payload = &cur.bytes[cur.pos..];
    if payload.len() < expected {
        return Err(Error::format_at(
            cur.pos + payload.len(),
            format!(
                "truncated pixel payload: got {} of {expected} bytes",
                payload.len()
            ),
        ));
    }
    if payload.len() > expected {
        return Err(Error::format_at(
            cur.pos + expected,
            format!(
                "{} trailing bytes after pixel payload",
                payload.len() - expected
            ),
        ));
    }
    RgbImage::new(width, height, payload.to_vec())
}

/// Serializes an image as binary PPM. `read_ppm(write_ppm(x)) == x` byte for byte.
pub fn write_ppm(image: &RgbImage) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", image.width(), image.height());
    let mut out = Vec::with_capacity(header.len() + image.pixels().len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(image.pixels());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) -> Result<()> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(&b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn token(&mut self) -> Result<Vec<u8>> {
        self.skip_space_and_comments()?;
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format_at(start, "unexpected end of header"));
        }
        Ok(self.bytes[start..self.pos].to_vec())
    }

    fn unsigned(&mut self, what: &str) -> Result<u32> {
        let tok = self.token()?;
        std::str::from_utf8(&tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| {
                Error::format_at(
                    self.pos,
                    format!("invalid {what}: {:?}", String::from_utf8_lossy(&tok)),
                )
            })
    }

    fn single_whitespace(&mut self) -> Result<()> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(Error::format_at(
                self.pos,
                "expected whitespace before pixel payload",
            )),
        }
    }
}
