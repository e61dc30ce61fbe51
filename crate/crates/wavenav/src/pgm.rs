//! Minimal PGM (P2/P5) and PPM (P6) readers/writers.
//!
//! Rows are stored top-down in the file; callers decide how rows map onto
//! world coordinates.

use std::io::Write;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported magic number {0:?} (expected P2 or P5)")]
    UnsupportedMagic(String),
    #[error("zero dimensions: {width}x{height}")]
    ZeroDimensions { width: usize, height: usize },
    #[error("truncated pixel data: expected {expected} values, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("pixel value {value} exceeds maxval {maxval}")]
    ValueOutOfRange { value: u32, maxval: u32 },
}

/// Grayscale image decoded from a PGM file. `pixels[0]` is the top-left pixel.
#[derive(Debug, Clone)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

/// Parses a P2 (ASCII) or P5 (binary) PGM image.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    let mut cursor = 0usize;
    let magic = next_token(bytes, &mut cursor)
        .ok_or_else(|| PgmError::MalformedHeader("missing magic number".into()))?;
    let binary = match magic.as_str() {
        "P5" => true,
        "P2" => false,
        other => return Err(PgmError::UnsupportedMagic(other.to_string())),
    };
    let width = next_usize(bytes, &mut cursor, "width")?;
    let height = next_usize(bytes, &mut cursor, "height")?;
    let maxval = next_usize(bytes, &mut cursor, "maxval")?;
    if width == 0 || height == 0 {
        return Err(PgmError::ZeroDimensions { width, height });
    }
    if maxval == 0 || maxval > 65535 {
        return Err(PgmError::MalformedHeader(format!("bad maxval {maxval}")));
    }
    let expected = width * height;
    let mut pixels = Vec::with_capacity(expected);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let data = &bytes[cursor..];
        if maxval < 256 {
            if data.len() < expected {
                return Err(PgmError::Truncated {
                    expected,
                    got: data.len(),
                });
            }
            pixels.extend(data[..expected].iter().map(|&b| b as u16));
        } else {
            if data.len() < expected * 2 {
                return Err(PgmError::Truncated {
                    expected,
                    got: data.len() / 2,
                });
            }
            pixels.extend(
                data[..expected * 2]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]])),
            );
        }
    } else {
        while pixels.len() < expected {
            match next_token(bytes, &mut cursor) {
                Some(tok) => {
                    let v: u32 = tok.parse().map_err(|_| {
                        PgmError::MalformedHeader(format!("non-numeric pixel {tok:?}"))
                    })?;
                    if v > maxval as u32 {
                        return Err(PgmError::ValueOutOfRange {
                            value: v,
                            maxval: maxval as u32,
                        });
                    }
                    pixels.push(v as u16);
                }
                None => {
                    return Err(PgmError::Truncated {
                        expected,
                        got: pixels.len(),
                    })
                }
            }
        }
    }
    Ok(GrayImage {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

/// Writes a binary (P5) PGM with maxval 255. `comment` becomes a `#` header line.
pub fn write_pgm(width: usize, height: usize, pixels: &[u8], comment: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(pixels.len() + 64);
    write!(out, "P5\n").unwrap();
    for line in comment.lines() {
        write!(out, "# {line}\n").unwrap();
    }
    write!(out, "{width} {height}\n255\n").unwrap();
    out.extend_from_slice(pixels);
    out
}

/// Writes a binary (P6) PPM with maxval 255. `pixels` is RGB triples, top row first.
pub fn write_ppm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    debug_assert_eq!(pixels.len(), width * height * 3);
    let mut out = Vec::with_capacity(pixels.len() + 32);
    write!(out, "P6\n{width} {height}\n255\n").unwrap();
    out.extend_from_slice(pixels);
    out
}

fn next_token(bytes: &[u8], cursor: &mut usize) -> Option<String> {
    loop {
        // Skip whitespace and '#' comments.
        while *cursor < bytes.len() && bytes[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < bytes.len() && bytes[*cursor] == b'#' {
            while *cursor < bytes.len() && bytes[*cursor] != b'\n' {
                *cursor += 1;
            }
            continue;
        }
        break;
    }
    if *cursor >= bytes.len() {
        return None;
    }
    let start = *cursor;
    while *cursor < bytes.len() && !bytes[*cursor].is_ascii_whitespace() {
        *cursor += 1;
    }
    let tok = String::from_utf8_lossy(&bytes[start..*cursor]).into_owned();
    // Consume the single whitespace byte terminating the token so binary
    // raster data starts immediately after the maxval token.
    if *cursor < bytes.len() {
        *cursor += 1;
    }
    Some(tok)
}

fn next_usize(bytes: &[u8], cursor: &mut usize, what: &str) -> Result<usize, PgmError> {
    let tok = next_token(bytes, cursor)
        .ok_or_else(|| PgmError::MalformedHeader(format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| PgmError::MalformedHeader(format!("bad {what}: {tok:?}")))
}
