//! Binary PGM (P5) reading and writing.
//!
//! P5 is the interchange format for the corpus: an ASCII header
//! (`P5`, width, height, maxval — tokens separated by whitespace, with
//! `#` comments running to end of line) followed by a single whitespace
//! byte and `width·height` raw bytes. Only `maxval = 255` (8-bit
//! grayscale) is accepted.

use std::path::Path;

use crate::error::{io_error, Error, Result};

/// A decoded 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

fn format_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::PgmFormat {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Cursor over the ASCII header portion of a PGM byte stream.
struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> HeaderCursor<'a> {
    /// Skip whitespace and `#` comments; position lands on the next
    /// token byte (or the end of input).
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => return,
            }
        }
    }

    /// Read one whitespace-delimited header token.
    fn token(&mut self) -> Result<&'a str> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err(self.path, "unexpected end of header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| format_err(self.path, "non-ASCII bytes in header"))
    }

    /// Read a positive decimal header field.
    fn number(&mut self, field: &str) -> Result<u64> {
        let tok = self.token()?;
        let value: u64 = tok
            .parse()
            .map_err(|_| format_err(self.path, format!("{field} is not a number: {tok:?}")))?;
        if value == 0 {
            return Err(format_err(self.path, format!("{field} must be positive")));
        }
        Ok(value)
    }
}

/// Decode a P5 byte stream. `path` is used only for error messages.
pub fn parse_pgm(path: &Path, bytes: &[u8]) -> Result<Pgm> {
    let mut cur = HeaderCursor { bytes, pos: 0, path };
    let magic = cur.token()?;
    if magic != "P5" {
        return Err(format_err(path, format!("magic is {magic:?}, expected \"P5\"")));
    }
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::PgmMaxval {
            path: path.to_path_buf(),
            maxval: maxval as u32,
        });
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(format_err(path, "missing whitespace before raster")),
    }

    let expected = width * height;
    let raster = &bytes[cur.pos..];
    if raster.len() < expected {
        return Err(Error::PgmTruncated {
            path: path.to_path_buf(),
            expected,
            actual: raster.len(),
        });
    }
    if raster.len() > expected {
        return Err(format_err(
            path,
            format!("{} trailing bytes after raster", raster.len() - expected),
        ));
    }
    Ok(Pgm {
        width,
        height,
        pixels: raster.to_vec(),
    })
}

/// Read and decode a P5 file.
pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
    parse_pgm(path, &bytes)
}

/// Encode pixels as a P5 byte stream.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::LengthMismatch {
            shape: vec![height, width],
            len: pixels.len(),
            product: width * height,
        });
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

/// Write a P5 file.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let bytes = encode_pgm(width, height, pixels)?;
    std::fs::write(path, bytes).map_err(|e| io_error(path, e))
}
