//! Binary PPM (P6, 8-bit) decoding and encoding.

use thiserror::Error;

/// An 8-bit RGB triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self([r, g, b])
    }
}

/// Row-major RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PpmError {
    #[error("bad magic at byte {offset}: expected `P6`")]
    BadMagic { offset: usize },
    #[error("malformed header at byte {offset}: {reason}")]
    Header { offset: usize, reason: String },
    #[error("unsupported max value {value} at byte {offset}: only 255 is accepted")]
    MaxValue { offset: usize, value: u64 },
    #[error("truncated payload at byte {offset}: expected {expected} bytes, found {found}")]
    Truncated {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("trailing data at byte {offset}: {extra} bytes after the payload")]
    Trailing { offset: usize, extra: usize },
    #[error("pixel count {pixels} does not match {width}x{height}")]
    Shape {
        width: usize,
        height: usize,
        pixels: usize,
    },
}

impl RawImage {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self, PpmError> {
        if width.checked_mul(height) != Some(pixels.len()) {
            return Err(PpmError::Shape {
                width,
                height,
                pixels: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Image filled with a single color.
    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        Self {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [Rgb] {
        &mut self.pixels
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    /// Skips whitespace and `#` comments (which run to the end of line).
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

    /// Returns the offset the number starts at and its value.
    fn number(&mut self, what: &str) -> Result<(usize, u64), PpmError> {
        self.skip_separators();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PpmError::Header {
                offset: start,
                reason: format!("expected {what}"),
            });
        }
        // at most 20 ascii digits, so the utf8 conversion cannot fail
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map(|v| (start, v))
            .ok_or_else(|| PpmError::Header {
                offset: start,
                reason: format!("{what} out of range"),
            })
    }
}

/// Decodes a binary P6 image with max value 255.
pub fn parse_ppm(bytes: &[u8]) -> Result<RawImage, PpmError> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(PpmError::BadMagic { offset: 0 });
    }
    let mut cur = Cursor { bytes, pos: 2 };
    if !cur.bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(PpmError::Header {
            offset: 2,
            reason: "expected whitespace after magic".into(),
        });
    }
    let (width_at, width) = cur.number("width")?;
    let (height_at, height) = cur.number("height")?;
    if width == 0 {
        return Err(PpmError::Header {
            offset: width_at,
            reason: "width must be positive".into(),
        });
    }
    if height == 0 {
        return Err(PpmError::Header {
            offset: height_at,
            reason: "height must be positive".into(),
        });
    }
    let (max_at, max_value) = cur.number("max value")?;
    if max_value != 255 {
        return Err(PpmError::MaxValue {
            offset: max_at,
            value: max_value,
        });
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => {
            return Err(PpmError::Header {
                offset: cur.pos,
                reason: "expected a single whitespace byte before the payload".into(),
            })
        }
    }

    let (width, height) = (width as usize, height as usize);
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| PpmError::Header {
            offset: width_at,
            reason: "dimensions overflow".into(),
        })?;
    let payload = &bytes[cur.pos..];
    if payload.len() < expected {
        return Err(PpmError::Truncated {
            offset: cur.pos,
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(PpmError::Trailing {
            offset: cur.pos + expected,
            extra: payload.len() - expected,
        });
    }
    let pixels = payload
        .chunks_exact(3)
        .map(|c| Rgb([c[0], c[1], c[2]]))
        .collect();
    RawImage::new(width, height, pixels)
}

/// Encodes an image as `P6\n<w> <h>\n255\n` followed by the raster.
pub fn write_ppm(img: &RawImage) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.pixels.len() * 3);
    out.extend_from_slice(header.as_bytes());
    for p in &img.pixels {
        out.extend_from_slice(&p.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_pixel() {
        let bytes = b"P6\n1 1\n255\n\xbe\xa1\x7d";
        let img = parse_ppm(bytes).unwrap();
        assert_eq!(img.width(), 1);
        assert_eq!(img.height(), 1);
        assert_eq!(img.pixels(), &[Rgb::new(190, 161, 125)]);
    }

    #[test]
    fn truncated_payload_is_reported() {
        let mut bytes = b"P6 2 2 255\n".to_vec();
        bytes.extend_from_slice(&[0u8; 9]);
        assert_eq!(
            parse_ppm(&bytes),
            Err(PpmError::Truncated {
                offset: 11,
                expected: 12,
                found: 9
            })
        );
    }

    #[test]
    fn header_errors_name_offsets() {
        assert_eq!(parse_ppm(b"P3\n1 1\n255\n"), Err(PpmError::BadMagic { offset: 0 }));
        assert!(matches!(
            parse_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0"),
            Err(PpmError::MaxValue { offset: 7, value: 65535 })
        ));
        assert!(matches!(
            parse_ppm(b"P6\n0 1\n255\n"),
            Err(PpmError::Header { offset: 3, .. })
        ));
        assert!(matches!(parse_ppm(b"P6\nx"), Err(PpmError::Header { offset: 3, .. })));
        assert!(matches!(
            parse_ppm(b"P6\n1 1\n255\n\0\0\0\0"),
            Err(PpmError::Trailing { offset: 14, extra: 1 })
        ));
    }

    #[test]
    fn comments_in_header() {
        let bytes = b"P6\n# made by hand\n1 1\n255\n\x01\x02\x03";
        assert_eq!(parse_ppm(bytes).unwrap().pixels(), &[Rgb::new(1, 2, 3)]);
    }

    fn arb_image(max_side: usize) -> impl Strategy<Value = RawImage> {
        (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<[u8; 3]>(), w * h).prop_map(move |px| {
                RawImage::new(w, h, px.into_iter().map(Rgb).collect()).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(img in arb_image(16)) {
            let bytes = write_ppm(&img);
            let back = parse_ppm(&bytes).unwrap();
            prop_assert_eq!(&back, &img);
            prop_assert_eq!(write_ppm(&back), bytes);
        }
    }
}
