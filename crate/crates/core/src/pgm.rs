//! Binary PGM (P5) reading and writing for logo templates.

use thiserror::Error;

use crate::media::{Frame, MediaError};

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("not a binary PGM (P5) file")]
    NotP5,
    #[error("malformed PGM header: {0}")]
    Header(String),
    #[error("only 8-bit PGM is supported (maxval {0})")]
    UnsupportedMaxval(u32),
    #[error("PGM raster truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error(transparent)]
    Media(#[from] MediaError),
}

pub fn decode(bytes: &[u8]) -> Result<Frame, PgmError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(PgmError::NotP5);
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // whitespace and '#' comments between tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(PgmError::Header(format!("expected a number at byte {start}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text.parse().map_err(|_| PgmError::Header(format!("number too large at byte {start}")))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(PgmError::Header("missing separator before raster".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(PgmError::UnsupportedMaxval(maxval));
    }
    let (w, h) = (
        u16::try_from(width).map_err(|_| PgmError::Header(format!("width {width}")))?,
        u16::try_from(height).map_err(|_| PgmError::Header(format!("height {height}")))?,
    );
    let needed = w as usize * h as usize;
    let raster = &bytes[pos..];
    if raster.len() < needed {
        return Err(PgmError::Truncated {
            needed,
            available: raster.len(),
        });
    }
    Ok(Frame::new(w, h, raster[..needed].to_vec())?)
}

pub fn encode(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.pixels());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let f = Frame::new(8, 9, (0..72).map(|i| (i * 3) as u8).collect()).unwrap();
        assert_eq!(decode(&encode(&f)).unwrap(), f);
    }

    #[test]
    fn comments_in_header() {
        let mut bytes = b"P5\n# made by hand\n8 8\n# max\n255\n".to_vec();
        bytes.extend(std::iter::repeat_n(7u8, 64));
        assert_eq!(decode(&bytes).unwrap(), Frame::filled(8, 8, 7).unwrap());
    }

    #[test]
    fn rejects_ascii_pgm_and_short_raster() {
        assert!(matches!(decode(b"P2\n8 8\n255\n"), Err(PgmError::NotP5)));
        assert!(matches!(decode(b"P5\n8 8\n255\n\x00\x01"), Err(PgmError::Truncated { .. })));
        assert!(matches!(decode(b"P5\n8 8\n65535\n"), Err(PgmError::UnsupportedMaxval(65535))));
    }
}
