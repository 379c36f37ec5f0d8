//! Packed binary rasters and the binary PGM (P5) codec used for concept masks.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// A binary image stored one bit per pixel, row-major.
///
/// Bits past `width * height` in the last word are always zero so that word-wise
/// popcounts never see padding.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryRaster {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for BinaryRaster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryRaster")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("count", &self.count())
            .finish()
    }
}

impl BinaryRaster {
    pub fn new(width: usize, height: usize) -> Self {
        let words = (width * height).div_ceil(64);
        Self {
            width,
            height,
            words: vec![0; words],
        }
    }

    pub fn filled(width: usize, height: usize) -> Self {
        let mut r = Self::new(width, height);
        for w in r.words.iter_mut() {
            *w = u64::MAX;
        }
        r.clear_padding();
        r
    }

    /// Builds a raster from a predicate evaluated at every `(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut r = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    r.set(x, y, true);
                }
            }
        }
        r
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        let i = y * self.width + x;
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        let i = y * self.width + x;
        let bit = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// `|self ∩ other|`; both rasters must share dimensions.
    pub fn intersection_count(&self, other: &BinaryRaster) -> u64 {
        debug_assert_eq!(self.dims(), other.dims());
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as u64)
            .sum()
    }

    pub fn iter_foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height)
            .flat_map(move |y| (0..self.width).map(move |x| (x, y)))
            .filter(move |&(x, y)| self.get(x, y))
    }

    fn clear_padding(&mut self) {
        let n = self.width * self.height;
        if !n.is_multiple_of(64) {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << (n % 64)) - 1;
            }
        }
    }

    /// Encodes as binary PGM with maxval 255 (foreground = 255).
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let mut row = vec![0u8; self.width];
        for y in 0..self.height {
            for (x, px) in row.iter_mut().enumerate() {
                *px = if self.get(x, y) { 255 } else { 0 };
            }
            out.write_all(&row)?;
        }
        Ok(())
    }

    /// Decodes a binary PGM (P5). Any nonzero sample is foreground.
    pub fn read_pgm<R: Read>(mut input: R, context: &str) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::parse(context, e))?;
        let (header, offset) = parse_pgm_header(&bytes, context)?;
        let (w, h) = (header.width, header.height);
        let sample_bytes = if header.maxval > 255 { 2 } else { 1 };
        let needed = w * h * sample_bytes;
        let payload = bytes.get(offset..offset + needed).ok_or_else(|| {
            Error::parse(
                context,
                format!("expected {needed} payload bytes, found {}", bytes.len() - offset),
            )
        })?;
        let mut r = Self::new(w, h);
        for (i, chunk) in payload.chunks_exact(sample_bytes).enumerate() {
            if chunk.iter().any(|&b| b != 0) {
                r.set(i % w, i / w, true);
            }
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PgmHeader {
    pub width: usize,
    pub height: usize,
    pub maxval: usize,
}

/// Parses a P5 header, returning it with the payload offset.
pub fn parse_pgm_header(bytes: &[u8], context: &str) -> Result<(PgmHeader, usize)> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while !matches!(bytes.get(pos), None | Some(b'\n')) {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while matches!(bytes.get(pos), Some(b) if !b.is_ascii_whitespace() && *b != b'#') {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(context, "truncated PGM header"));
        }
        fields.push(&bytes[start..pos]);
    }
    if fields[0] != b"P5" {
        return Err(Error::parse(context, "not a binary PGM (P5)"));
    }
    let num = |f: &[u8], name: &str| -> Result<usize> {
        std::str::from_utf8(f)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(context, format!("bad PGM {name}")))
    };
    let header = PgmHeader {
        width: num(fields[1], "width")?,
        height: num(fields[2], "height")?,
        maxval: num(fields[3], "maxval")?,
    };
    if header.maxval == 0 || header.maxval > 65535 {
        return Err(Error::parse(context, "PGM maxval out of range"));
    }
    // exactly one whitespace byte separates the header from the payload
    if !matches!(bytes.get(pos), Some(b) if b.is_ascii_whitespace()) {
        return Err(Error::parse(context, "truncated PGM header"));
    }
    Ok((header, pos + 1))
}
