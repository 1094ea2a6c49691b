//! Grayscale image type, PGM (P2/P5) file I/O and quality metrics.
//!
//! Intensities are stored as `f64` internally so that iterative solvers can
//! carry fractional values; quantization to 8-bit happens only when a file
//! is written.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Lower bound of the 8-bit dynamic range.
pub const D_MIN: f64 = 0.0;
/// Upper bound of the 8-bit dynamic range.
pub const D_MAX: f64 = 255.0;

/// A grayscale image: row-major `f64` intensities with a fixed
/// `[D_MIN, D_MAX]` nominal dynamic range.
///
/// Invariants enforced at construction: `data.len() == width * height`,
/// both dimensions at least 1, and every value finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    /// Build an image from row-major data, validating the invariants.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!(
                "non-finite value {} at index {i}",
                data[i]
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Construct without the finiteness scan. Internal shortcut for code
    /// paths that produce finite values by construction.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self {
            width,
            height,
            data,
        }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self::from_raw(width, height, vec![value; width * height])
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0)
    }

    /// Build an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::from_raw(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Total pixel count.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col] = value;
    }

    /// Row `r` as a slice.
    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.width..(r + 1) * self.width]
    }

    /// Every value clamped into `[D_MIN, D_MAX]`.
    pub fn clip(&self) -> Image {
        let data = self.data.iter().map(|v| v.clamp(D_MIN, D_MAX)).collect();
        Image::from_raw(self.width, self.height, data)
    }
}

/// Mean squared error between two images of equal size.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_size(b) {
        return Err(Error::DimensionMismatch(
            a.width, a.height, b.width, b.height,
        ));
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.len() as f64)
}

/// Peak signal-to-noise ratio in decibels, with the peak fixed at 255.
/// Returns `f64::INFINITY` when the images are identical.
pub fn psnr(reference: &Image, test: &Image) -> Result<f64> {
    let e = mse(reference, test)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (D_MAX * D_MAX / e).log10())
}

/// Quantize an intensity for 8-bit output: round half away from zero,
/// then clamp to [0, 255].
#[inline]
pub fn quantize(v: f64) -> u8 {
    // f64::round is round-half-away-from-zero, which is the rule we want.
    v.round().clamp(D_MIN, D_MAX) as u8
}

// ---------------------------------------------------------------------------
// PGM I/O
// ---------------------------------------------------------------------------

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek();
        if b.is_some() {
            self.pos += 1;
        }
        b
    }

    /// Skip whitespace and `#` comments (comments run to end of line).
    fn skip_separators(&mut self) {
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(b) = self.bump() {
                    if b == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    /// Read an unsigned ASCII decimal token.
    fn read_number(&mut self, what: &str) -> Result<u64> {
        self.skip_separators();
        let start = self.pos;
        let mut value: u64 = 0;
        let mut any = false;
        while let Some(b) = self.peek() {
            if b.is_ascii_digit() {
                value = value
                    .checked_mul(10)
                    .and_then(|v| v.checked_add((b - b'0') as u64))
                    .ok_or_else(|| Error::PgmParse {
                        offset: start,
                        reason: format!("{what} overflows"),
                    })?;
                any = true;
                self.pos += 1;
            } else {
                break;
            }
        }
        if !any {
            return Err(Error::PgmParse {
                offset: self.pos,
                reason: format!("expected {what}, found {}", describe_byte(self.peek())),
            });
        }
        Ok(value)
    }
}

fn describe_byte(b: Option<u8>) -> String {
    match b {
        None => "end of file".to_string(),
        Some(b) if b.is_ascii_graphic() => format!("'{}'", b as char),
        Some(b) => format!("byte 0x{b:02x}"),
    }
}

/// Decode a P2 (ASCII) or P5 (binary) PGM with maxval 255 from raw bytes.
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut cur = Cursor::new(bytes);
    let magic: [Option<u8>; 2] = [cur.bump(), cur.bump()];
    let binary = match (magic[0], magic[1]) {
        (Some(b'P'), Some(b'2')) => false,
        (Some(b'P'), Some(b'5')) => true,
        _ => {
            return Err(Error::PgmParse {
                offset: 0,
                reason: "expected magic 'P2' or 'P5'".to_string(),
            })
        }
    };

    let width = cur.read_number("width")? as usize;
    let height = cur.read_number("height")? as usize;
    if width == 0 || height == 0 {
        return Err(Error::PgmParse {
            offset: cur.pos,
            reason: format!("degenerate dimensions {width}x{height}"),
        });
    }
    let maxval_offset = {
        cur.skip_separators();
        cur.pos
    };
    let maxval = cur.read_number("maxval")?;
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval {
            offset: maxval_offset,
            maxval,
        });
    }

    let count = width * height;
    let mut data = Vec::with_capacity(count);
    if binary {
        // Exactly one whitespace byte separates the maxval from the payload.
        match cur.bump() {
            Some(b) if b.is_ascii_whitespace() => {}
            other => {
                return Err(Error::PgmParse {
                    offset: cur.pos.saturating_sub(1),
                    reason: format!(
                        "expected single whitespace before binary payload, found {}",
                        describe_byte(other)
                    ),
                })
            }
        }
        let payload = &cur.bytes[cur.pos..];
        if payload.len() < count {
            return Err(Error::TruncatedPayload {
                offset: cur.pos,
                expected: count,
                found: payload.len(),
            });
        }
        data.extend(payload[..count].iter().map(|&b| b as f64));
    } else {
        for _ in 0..count {
            let offset = cur.pos;
            let v = cur.read_number("sample")?;
            if v > 255 {
                return Err(Error::PgmParse {
                    offset,
                    reason: format!("sample {v} exceeds maxval 255"),
                });
            }
            data.push(v as f64);
        }
    }
    Ok(Image::from_raw(width, height, data))
}

/// Load a PGM file (P2 or P5, maxval 255).
pub fn load_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_pgm(&bytes)
}

/// Encode as binary P5 with maxval 255. Values are rounded half away from
/// zero and clamped to [0, 255].
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + img.len());
    out.extend_from_slice(format!("P5\n{} {}\n255\n", img.width(), img.height()).as_bytes());
    out.extend(img.data().iter().map(|&v| quantize(v)));
    out
}

/// Save as binary P5 PGM. `load_pgm(save_pgm(img))` reproduces the
/// rounded/clipped image exactly.
pub fn save_pgm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_pgm(img))?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p5_basic_decode() {
        let bytes = b"P5 2 2 255\n\x00\xff\x80\x40";
        let img = decode_pgm(bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.data(), &[0.0, 255.0, 128.0, 64.0]);
    }

    #[test]
    fn p2_matches_p5() {
        let p5 = decode_pgm(b"P5 2 2 255\n\x00\xff\x80\x40").unwrap();
        let p2 = decode_pgm(b"P2\n2 2\n255\n0 255 128 64\n").unwrap();
        assert_eq!(p5, p2);
    }

    #[test]
    fn p5_payload_requires_single_separator() {
        // A payload byte may itself look like whitespace, so the parser
        // must consume exactly one separator after the maxval.
        let img = decode_pgm(b"P5 2 1 255\n\x20\x0a").unwrap();
        assert_eq!(img.data(), &[32.0, 10.0]);
        assert!(decode_pgm(b"P5 2 1 255__").is_err());
    }

    #[test]
    fn header_comments_allowed() {
        let img = decode_pgm(b"P2 # format\n# size next\n2 1 # dims\n255\n7 9").unwrap();
        assert_eq!(img.data(), &[7.0, 9.0]);
    }

    #[test]
    fn maxval_65535_rejected() {
        let err = decode_pgm(b"P5 2 2 65535\n\x00\x01\x02\x03").unwrap_err();
        match err {
            Error::UnsupportedMaxval { maxval, .. } => assert_eq!(maxval, 65535),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let err = decode_pgm(b"P5 2 2 255\n\x00\x01").unwrap_err();
        match err {
            Error::TruncatedPayload {
                offset,
                expected,
                found,
            } => {
                assert_eq!(offset, 11);
                assert_eq!(expected, 4);
                assert_eq!(found, 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn bad_magic_rejected() {
        assert!(matches!(
            decode_pgm(b"P6 1 1 255 abc"),
            Err(Error::PgmParse { offset: 0, .. })
        ));
    }

    #[test]
    fn quantize_rounds_half_away_and_clips() {
        assert_eq!(quantize(254.6), 255);
        assert_eq!(quantize(254.5), 255);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(127.5), 128);
        assert_eq!(quantize(300.0), 255);
    }

    #[test]
    fn roundtrip_integral_image_is_identity() {
        let img = Image::from_fn(13, 7, |r, c| ((r * 31 + c * 17) % 256) as f64);
        let back = decode_pgm(&encode_pgm(&img)).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn mse_examples() {
        let a = Image::constant(2, 2, 50.0);
        let b = Image::constant(2, 2, 60.0);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &b).unwrap(), 100.0);
        let mut c = a.clone();
        c.set(1, 0, 52.0);
        assert_eq!(mse(&a, &c).unwrap(), 1.0);
        assert_eq!(mse(&a, &c).unwrap(), mse(&c, &a).unwrap());
    }

    #[test]
    fn mse_dimension_mismatch() {
        let a = Image::zeros(2, 2);
        let b = Image::zeros(3, 2);
        assert!(matches!(mse(&a, &b), Err(Error::DimensionMismatch(..))));
    }

    #[test]
    fn psnr_examples() {
        let a = Image::constant(4, 4, 10.0);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = Image::constant(4, 4, 20.0);
        let p = psnr(&a, &b).unwrap();
        assert!((p - 20.0 * 25.5f64.log10()).abs() < 1e-12, "psnr {p}");
        assert!((p - 28.1308).abs() < 1e-3);
    }

    #[test]
    fn psnr_decreases_with_mse() {
        let base = Image::constant(8, 8, 100.0);
        let mut prev = f64::INFINITY;
        for offset in [1.0, 2.0, 5.0, 20.0, 80.0] {
            let test = Image::constant(8, 8, 100.0 + offset);
            let p = psnr(&base, &test).unwrap();
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn clip_clamps_out_of_range() {
        let img = Image::new(3, 1, vec![-5.0, 128.0, 300.0]).unwrap();
        assert_eq!(img.clip().data(), &[0.0, 128.0, 255.0]);
        let in_range = Image::from_fn(4, 4, |r, c| (r * 4 + c) as f64);
        assert_eq!(in_range.clip(), in_range);
    }

    #[test]
    fn new_rejects_bad_inputs() {
        assert!(Image::new(0, 4, vec![]).is_err());
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::new(2, 2, vec![0.0, 1.0, f64::NAN, 3.0]).is_err());
    }
}
