//! Raster containers and their on-disk encodings (binary PGM/PPM and the
//! raw thermal grid format).

use std::io::{self, BufRead, Write};
use std::ops::Range;

use crate::domain::BBox;

/// Indices `i < n` with `i + 0.5` in `[lo, hi)`.
pub fn center_span(lo: f64, hi: f64, n: usize) -> Range<usize> {
    let clamp = |v: f64| if v.is_nan() { 0 } else { v.clamp(0.0, n as f64) as usize };
    let a = clamp((lo - 0.5).ceil());
    let b = clamp((hi - 0.5).ceil());
    a..b.max(a)
}

/// 8-bit single-channel image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0; width * height] }
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel value, or 0 outside the image.
    #[inline]
    pub fn get_or_zero(&self, x: i64, y: i64) -> u8 {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            0
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }

    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)
    }

    pub fn read_pgm<R: BufRead>(mut r: R) -> io::Result<Self> {
        let (magic, dims) = read_pnm_header(&mut r)?;
        if magic != "P5" {
            return Err(invalid(format!("expected P5 magic, found {magic}")));
        }
        let (width, height) = dims;
        let mut data = vec![0u8; width * height];
        r.read_exact(&mut data)?;
        Ok(Self { width, height, data })
    }
}

/// Row-major grid of temperatures in °C.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalGrid {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl ThermalGrid {
    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Adds `offset` to every cell.
    pub fn offset_by(&mut self, offset: f32) {
        if offset != 0.0 {
            self.data.iter_mut().for_each(|v| *v += offset);
        }
    }

    /// Column and row ranges of the cells whose centres lie in `b`
    /// (half-open on the right and bottom edges).
    pub fn cells_in(&self, b: &BBox) -> (Range<usize>, Range<usize>) {
        (center_span(b.x(), b.right(), self.width), center_span(b.y(), b.bottom(), self.height))
    }

    /// ASCII header `"W H\n"` followed by little-endian f32 cells.
    pub fn write_bin<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "{} {}\n", self.width, self.height)?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_bin<R: BufRead>(mut r: R) -> io::Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let mut parts = header.split_whitespace();
        let width = parse_dim(parts.next())?;
        let height = parse_dim(parts.next())?;
        if parts.next().is_some() {
            return Err(invalid("trailing tokens in thermal header".into()));
        }
        let mut raw = vec![0u8; width * height * 4];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { width, height, data })
    }
}

/// 8-bit RGB image, interleaved row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn from_gray(g: &GrayImage) -> Self {
        let data = g.data.iter().flat_map(|&v| [v, v, v]).collect();
        Self { width: g.width, height: g.height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Writes a pixel, ignoring coordinates outside the image.
    #[inline]
    pub fn put(&mut self, x: i64, y: i64, rgb: [u8; 3]) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = 3 * (y as usize * self.width + x as usize);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn write_ppm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)
    }
}

fn invalid(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

fn parse_dim(tok: Option<&str>) -> io::Result<usize> {
    let tok = tok.ok_or_else(|| invalid("missing dimension".into()))?;
    let v: usize = tok.parse().map_err(|_| invalid(format!("bad dimension {tok:?}")))?;
    if v == 0 {
        return Err(invalid("zero dimension".into()));
    }
    Ok(v)
}

fn read_pnm_header<R: BufRead>(r: &mut R) -> io::Result<(String, (usize, usize))> {
    // magic, width, height, maxval separated by whitespace; '#' comments allowed
    let mut tokens = Vec::with_capacity(4);
    let mut line = String::new();
    while tokens.len() < 4 {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(invalid("truncated PNM header".into()));
        }
        let content = line.split('#').next().unwrap_or("");
        tokens.extend(content.split_whitespace().map(str::to_owned));
    }
    if tokens.len() != 4 {
        return Err(invalid("PNM header must end with a newline after maxval".into()));
    }
    let w = parse_dim(Some(&tokens[1]))?;
    let h = parse_dim(Some(&tokens[2]))?;
    if tokens[3] != "255" {
        return Err(invalid(format!("unsupported maxval {}", tokens[3])));
    }
    Ok((tokens[0].clone(), (w, h)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn pgm_round_trip() {
        let mut img = GrayImage::new(5, 3);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i * 17) as u8;
        }
        let mut buf = Vec::new();
        img.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n5 3\n255\n"));
        assert_eq!(GrayImage::read_pgm(Cursor::new(buf)).unwrap(), img);
    }

    #[test]
    fn thermal_round_trip_is_bit_exact() {
        let mut g = ThermalGrid::filled(4, 2, 22.0);
        g.set(1, 1, 36.123_456);
        g.set(3, 0, -0.0);
        let mut buf = Vec::new();
        g.write_bin(&mut buf).unwrap();
        assert!(buf.starts_with(b"4 2\n"));
        assert_eq!(buf.len(), 4 + 8 * 4);
        let back = ThermalGrid::read_bin(Cursor::new(buf)).unwrap();
        let bits = |g: &ThermalGrid| g.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&g));
    }

    #[test]
    fn truncated_thermal_is_error() {
        let buf = b"4 2\n\x00\x00".to_vec();
        assert!(ThermalGrid::read_bin(Cursor::new(buf)).is_err());
    }
}
