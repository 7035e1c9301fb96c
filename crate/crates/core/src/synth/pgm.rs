use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Binary PGM (P5, maxval 255) bytes for an `H × W` image in `[0, 1]`.
pub fn encode_pgm(image: &Matrix) -> Result<Vec<u8>> {
    if let Some((i, v)) = image
        .data()
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::Domain {
            op: "encode_pgm",
            detail: format!("pixel {i} is {v}, outside [0, 1]"),
        });
    }
    let mut out = format!("P5\n{} {}\n255\n", image.cols(), image.rows()).into_bytes();
    out.extend(image.data().iter().map(|v| (v * 255.0).round() as u8));
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, detail: impl Into<String>) -> Error {
        Error::Pgm {
            offset: self.pos,
            detail: detail.into(),
        }
    }

    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Pgm {
                offset: start,
                detail: format!("{what} out of range"),
            })
    }
}

/// Parses binary PGM bytes into an `H × W` image scaled to `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Matrix> {
    let mut c = Cursor { bytes, pos: 0 };
    if bytes.get(..2) != Some(b"P5".as_slice()) {
        return Err(c.err("missing P5 magic"));
    }
    c.pos = 2;
    let width = c.number("width")?;
    let height = c.number("height")?;
    let maxval = c.number("maxval")?;
    if maxval != 255 {
        return Err(c.err(format!("maxval {maxval} unsupported (expected 255)")));
    }
    match bytes.get(c.pos) {
        Some(b) if b.is_ascii_whitespace() => c.pos += 1,
        _ => return Err(c.err("expected whitespace after maxval")),
    }
    let need = width * height;
    let body = &bytes[c.pos..];
    if body.len() < need {
        return Err(Error::Pgm {
            offset: bytes.len(),
            detail: format!("truncated pixel data: {} of {need} bytes", body.len()),
        });
    }
    if body.len() > need {
        return Err(Error::Pgm {
            offset: c.pos + need,
            detail: format!("{} trailing bytes", body.len() - need),
        });
    }
    Matrix::new(
        height,
        width,
        body.iter().map(|&b| f64::from(b) / 255.0).collect(),
    )
}

pub fn write_pgm(path: &Path, image: &Matrix) -> Result<()> {
    let bytes = encode_pgm(image)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<Matrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_mask_round_trips_exactly() {
        let m = Matrix::from_fn(3, 5, |y, x| ((y + x) % 2) as f64);
        assert_eq!(decode_pgm(&encode_pgm(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn half_grey_within_quantisation() {
        let m = Matrix::filled(4, 4, 0.5);
        let back = decode_pgm(&encode_pgm(&m).unwrap()).unwrap();
        assert!(back.max_abs_diff(&m).unwrap() <= 1.0 / 510.0);
    }

    #[test]
    fn truncated_names_offset() {
        let mut bytes = encode_pgm(&Matrix::zeros(2, 2)).unwrap();
        bytes.pop();
        let e = decode_pgm(&bytes).unwrap_err();
        match e {
            Error::Pgm { offset, .. } => assert_eq!(offset, bytes.len()),
            other => panic!("{other}"),
        }
        assert!(e_to_string(&bytes).contains("byte offset"));
    }

    fn e_to_string(b: &[u8]) -> String {
        decode_pgm(b).unwrap_err().to_string()
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            decode_pgm(b"P2\n1 1\n255\n\0"),
            Err(Error::Pgm { offset: 0, .. })
        ));
        assert!(matches!(
            decode_pgm(b"P5\n1 1\n65535\n\0\0"),
            Err(Error::Pgm { .. })
        ));
        assert!(matches!(
            decode_pgm(b"P5\nx"),
            Err(Error::Pgm { offset: 3, .. })
        ));
        assert_eq!(
            decode_pgm(b"P5 # note\n2 1\n255\n\xff\x00").unwrap(),
            Matrix::from_rows(&[[1.0, 0.0]])
        );
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(encode_pgm(&Matrix::filled(1, 1, 1.5)).is_err());
    }
}
