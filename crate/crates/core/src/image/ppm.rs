//! Binary PPM (P6) and PGM (P5) with maxval 255.
//!
//! The reader accepts the full PNM header grammar: any run of whitespace
//! between tokens, `#` comments through end of line, and exactly one
//! whitespace byte between the maxval and the pixel payload. The writer
//! always emits the canonical `P6\nW H\n255\n` form, so encode/decode is
//! byte-exact both ways.

use alloc::vec::Vec;

use super::{Image, ImageError, Mask};

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        Some(b)
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(b) = self.peek() {
            if is_pnm_space(b) {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(c) = self.bump() {
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn read_u64(&mut self) -> Result<u64, ImageError> {
        self.skip_space_and_comments();
        let mut value: u64 = 0;
        let mut digits = 0usize;
        while let Some(b) = self.peek() {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as u64))
                .ok_or(ImageError::BadHeader("integer overflow"))?;
            digits += 1;
            self.pos += 1;
        }
        if digits == 0 {
            return Err(ImageError::BadHeader("expected an integer"));
        }
        Ok(value)
    }

}

fn is_pnm_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c)
}

fn read_header(bytes: &[u8], magic: &[u8; 2]) -> Result<(u32, u32, usize), ImageError> {
    let mut cur = Cursor::new(bytes);
    if cur.bump() != Some(magic[0]) || cur.bump() != Some(magic[1]) {
        return Err(ImageError::BadMagic);
    }
    let width = cur.read_u64()?;
    let height = cur.read_u64()?;
    let maxval = cur.read_u64()?;
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimension);
    }
    if width > u32::MAX as u64 || height > u32::MAX as u64 {
        return Err(ImageError::BadHeader("dimensions too large"));
    }
    if maxval != 255 {
        return Err(ImageError::UnsupportedMaxval(maxval));
    }
    // Exactly one whitespace byte separates the header from the payload;
    // a comment here is not part of the grammar.
    match cur.bump() {
        Some(b) if is_pnm_space(b) => {}
        _ => return Err(ImageError::BadHeader("missing separator before payload")),
    }
    Ok((width as u32, height as u32, cur.pos))
}

fn take_payload(bytes: &[u8], start: usize, expected: usize) -> Result<Vec<u8>, ImageError> {
    let rest = &bytes[start..];
    if rest.len() < expected {
        return Err(ImageError::Truncated { expected, got: rest.len() });
    }
    // Trailing bytes after the payload are ignored, as most readers do.
    Ok(rest[..expected].to_vec())
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Image, ImageError> {
    let (width, height, payload_at) = read_header(bytes, b"P6")?;
    let expected = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(3))
        .ok_or(ImageError::BadHeader("dimensions too large"))?;
    let data = take_payload(bytes, payload_at, expected)?;
    Image::new(width, height, data)
}

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.data().len() + 20);
    push_header(&mut out, b"P6", img.width(), img.height());
    out.extend_from_slice(img.data());
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Mask, ImageError> {
    let (width, height, payload_at) = read_header(bytes, b"P5")?;
    let expected = (width as usize)
        .checked_mul(height as usize)
        .ok_or(ImageError::BadHeader("dimensions too large"))?;
    let data = take_payload(bytes, payload_at, expected)?;
    Mask::new(width, height, data)
}

pub fn encode_pgm(mask: &Mask) -> Vec<u8> {
    let mut out = Vec::with_capacity(mask.data().len() + 20);
    push_header(&mut out, b"P5", mask.width(), mask.height());
    out.extend_from_slice(mask.data());
    out
}

fn push_header(out: &mut Vec<u8>, magic: &[u8; 2], width: u32, height: u32) {
    out.extend_from_slice(magic);
    out.push(b'\n');
    push_decimal(out, width);
    out.push(b' ');
    push_decimal(out, height);
    out.push(b'\n');
    out.extend_from_slice(b"255\n");
}

fn push_decimal(out: &mut Vec<u8>, mut v: u32) {
    let mut buf = [0u8; 10];
    let mut i = buf.len();
    loop {
        i -= 1;
        buf[i] = b'0' + (v % 10) as u8;
        v /= 10;
        if v == 0 {
            break;
        }
    }
    out.extend_from_slice(&buf[i..]);
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn canonical_1x1_black() {
        let img = Image::filled(1, 1, [0, 0, 0]).unwrap();
        let bytes = encode_ppm(&img);
        assert_eq!(bytes, b"P6\n1 1\n255\n\0\0\0");
        assert_eq!(decode_ppm(&bytes).unwrap(), img);
    }

    #[test]
    fn header_accepts_comments_and_mixed_whitespace() {
        let bytes = b"P6 # a comment\n#another\n 2\t1 # w h\n255\n\x01\x02\x03\x04\x05\x06";
        let img = decode_ppm(bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 1));
        assert_eq!(img.data(), &[1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn payload_byte_after_single_separator_may_be_whitespace_valued() {
        // First pixel byte 0x20 must not be eaten as header whitespace.
        let bytes = b"P6\n1 1\n255\n\x20\x21\x22";
        let img = decode_ppm(bytes).unwrap();
        assert_eq!(img.pixel(0, 0), [0x20, 0x21, 0x22]);
    }

    #[test]
    fn rejects_bad_magic_maxval_truncation() {
        assert_eq!(decode_ppm(b"P3\n1 1\n255\n..."), Err(ImageError::BadMagic));
        assert_eq!(
            decode_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0"),
            Err(ImageError::UnsupportedMaxval(65535))
        );
        assert_eq!(
            decode_ppm(b"P6\n2 2\n255\n\0\0\0"),
            Err(ImageError::Truncated { expected: 12, got: 3 })
        );
        assert_eq!(decode_ppm(b"P6\n0 4\n255\n"), Err(ImageError::ZeroDimension));
        assert_eq!(decode_ppm(b"P6\nx 4\n255\n"), Err(ImageError::BadHeader("expected an integer")));
    }

    #[test]
    fn trailing_bytes_are_ignored() {
        let bytes = b"P6\n1 1\n255\n\x09\x08\x07extra";
        let img = decode_ppm(bytes).unwrap();
        assert_eq!(img.pixel(0, 0), [9, 8, 7]);
    }

    #[test]
    fn pgm_roundtrip() {
        let mask = Mask::new(3, 2, vec![0, 128, 255, 7, 9, 11]).unwrap();
        let bytes = encode_pgm(&mask);
        assert_eq!(&bytes[..12], b"P5\n3 2\n255\n\0");
        assert_eq!(decode_pgm(&bytes).unwrap(), mask);
    }
}
