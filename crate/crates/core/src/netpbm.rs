//! Binary netpbm (`P5`, `P6`) and Portable FloatMap (`Pf`, `PF`) codecs.
//!
//! Only the binary variants are supported. PFM rasters are stored bottom-to-top
//! on disk; [`Raster`] is always top-to-bottom, row-major, channel-interleaved.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Raster<T> {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height * channels, "raster size mismatch");
        Raster {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Netpbm {
    /// `P5`; samples are widened to `u16` regardless of maxval.
    Pgm { maxval: u16, raster: Raster<u16> },
    /// `P6`.
    Ppm { maxval: u16, raster: Raster<u16> },
    /// `Pf` (1 channel) or `PF` (3 channels).
    Pfm { raster: Raster<f32> },
}

impl Netpbm {
    pub fn width(&self) -> usize {
        self.raster_dims().0
    }

    pub fn height(&self) -> usize {
        self.raster_dims().1
    }

    pub fn channels(&self) -> usize {
        self.raster_dims().2
    }

    fn raster_dims(&self) -> (usize, usize, usize) {
        match self {
            Netpbm::Pgm { raster, .. } | Netpbm::Ppm { raster, .. } => {
                (raster.width, raster.height, raster.channels)
            }
            Netpbm::Pfm { raster } => (raster.width, raster.height, raster.channels),
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
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

    fn token(&mut self, what: &str) -> Result<&'a str> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::parse(start, format!("non-ASCII {what}")))
    }

    fn uint(&mut self, what: &str) -> Result<usize> {
        let start = {
            self.skip_whitespace_and_comments();
            self.pos
        };
        let tok = self.token(what)?;
        tok.parse::<usize>()
            .map_err(|_| Error::parse(start, format!("invalid {what} {tok:?}")))
    }

    fn float(&mut self, what: &str) -> Result<f32> {
        let start = {
            self.skip_whitespace_and_comments();
            self.pos
        };
        let tok = self.token(what)?;
        tok.parse::<f32>()
            .map_err(|_| Error::parse(start, format!("invalid {what} {tok:?}")))
    }

    /// The single whitespace byte separating the header from the raster.
    fn raster_separator(&mut self) -> Result<()> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(Error::parse(self.pos, "expected whitespace before raster")),
        }
    }
}

pub fn decode(bytes: &[u8]) -> Result<Netpbm> {
    if bytes.len() < 2 {
        return Err(Error::parse(0, "file too short for a magic number"));
    }
    let mut cur = Cursor { bytes, pos: 2 };
    match &bytes[..2] {
        b"P5" | b"P6" => {
            let channels = if bytes[1] == b'5' { 1 } else { 3 };
            let width = cur.uint("width")?;
            let height = cur.uint("height")?;
            let maxval_at = cur.pos;
            let maxval = cur.uint("maxval")?;
            if maxval == 0 || maxval > 65535 {
                return Err(Error::parse(maxval_at, format!("maxval {maxval} out of range")));
            }
            check_dims(width, height, 2)?;
            cur.raster_separator()?;
            let n = width * height * channels;
            let bps = if maxval < 256 { 1 } else { 2 };
            let raster_at = cur.pos;
            let need = n * bps;
            if bytes.len() - raster_at < need {
                return Err(Error::parse(
                    bytes.len(),
                    format!("raster truncated: need {need} bytes, have {}", bytes.len() - raster_at),
                ));
            }
            let raw = &bytes[raster_at..raster_at + need];
            let data: Vec<u16> = if bps == 1 {
                raw.iter().map(|&b| u16::from(b)).collect()
            } else {
                raw.chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]))
                    .collect()
            };
            if let Some(i) = data.iter().position(|&v| usize::from(v) > maxval) {
                return Err(Error::parse(
                    raster_at + i * bps,
                    format!("sample {} exceeds maxval {maxval}", data[i]),
                ));
            }
            let raster = Raster::new(width, height, channels, data);
            let maxval = maxval as u16;
            Ok(if channels == 1 {
                Netpbm::Pgm { maxval, raster }
            } else {
                Netpbm::Ppm { maxval, raster }
            })
        }
        b"Pf" | b"PF" => {
            let channels = if bytes[1] == b'f' { 1 } else { 3 };
            let width = cur.uint("width")?;
            let height = cur.uint("height")?;
            let scale_at = cur.pos;
            let scale = cur.float("scale")?;
            if scale == 0.0 || !scale.is_finite() {
                return Err(Error::parse(scale_at, "scale must be finite and non-zero"));
            }
            check_dims(width, height, 2)?;
            cur.raster_separator()?;
            let little = scale < 0.0;
            let n = width * height * channels;
            let raster_at = cur.pos;
            let need = n * 4;
            if bytes.len() - raster_at < need {
                return Err(Error::parse(
                    bytes.len(),
                    format!("raster truncated: need {need} bytes, have {}", bytes.len() - raster_at),
                ));
            }
            let row_len = width * channels;
            let mut data = vec![0f32; n];
            for (i, chunk) in bytes[raster_at..raster_at + need].chunks_exact(4).enumerate() {
                let arr = [chunk[0], chunk[1], chunk[2], chunk[3]];
                let v = if little {
                    f32::from_le_bytes(arr)
                } else {
                    f32::from_be_bytes(arr)
                };
                // disk row 0 is the bottom row
                let disk_row = i / row_len;
                let col = i % row_len;
                data[(height - 1 - disk_row) * row_len + col] = v;
            }
            Ok(Netpbm::Pfm {
                raster: Raster::new(width, height, channels, data),
            })
        }
        _ => Err(Error::parse(0, "unsupported magic number (expected P5, P6, Pf or PF)")),
    }
}

fn check_dims(width: usize, height: usize, offset: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::parse(offset, "image dimensions must be non-zero"));
    }
    if width.checked_mul(height).and_then(|n| n.checked_mul(12)).is_none() {
        return Err(Error::parse(offset, "image dimensions overflow"));
    }
    Ok(())
}

pub fn encode_pgm8(width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    assert_eq!(data.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    out
}

pub fn encode_pgm16(width: usize, height: usize, data: &[u16]) -> Vec<u8> {
    assert_eq!(data.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for v in data {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn encode_ppm8(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    assert_eq!(rgb.len(), width * height * 3);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

/// Little-endian PFM. `channels` must be 1 or 3; `data` is top-to-bottom.
pub fn encode_pfm(width: usize, height: usize, channels: usize, data: &[f32]) -> Vec<u8> {
    assert!(channels == 1 || channels == 3);
    assert_eq!(data.len(), width * height * channels);
    let magic = if channels == 1 { "Pf" } else { "PF" };
    let mut out = format!("{magic}\n{width} {height}\n-1.0\n").into_bytes();
    let row_len = width * channels;
    for row in data.chunks_exact(row_len).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}
