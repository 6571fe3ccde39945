//! Reader and writer for the version 1.0 NPY format, restricted to
//! little-endian `f4`/`f8` payloads in C order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8] = b"\x93NUMPY";
const PREAMBLE: usize = MAGIC.len() + 2 + 2;

/// On-disk element type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F4,
    F8,
}

impl Precision {
    fn descr(self) -> &'static str {
        match self {
            Precision::F4 => "<f4",
            Precision::F8 => "<f8",
        }
    }

    fn width(self) -> usize {
        match self {
            Precision::F4 => 4,
            Precision::F8 => 8,
        }
    }
}

pub fn read_npy(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < PREAMBLE || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("missing NPY magic".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(Error::Format(format!(
            "unsupported NPY version {major}.{minor}"
        )));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let payload_start = PREAMBLE + header_len;
    if bytes.len() < payload_start {
        return Err(Error::TruncatedPayload {
            expected: payload_start,
            actual: bytes.len(),
        });
    }
    let header = std::str::from_utf8(&bytes[PREAMBLE..payload_start])
        .map_err(|_| Error::Format("header is not ASCII".into()))?;
    let (precision, shape) = parse_header(header)?;

    let count: usize = shape.iter().product();
    let expected = count * precision.width();
    let payload = &bytes[payload_start..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            actual: payload.len(),
        });
    }
    let data = match precision {
        Precision::F8 => payload[..expected]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Precision::F4 => payload[..expected]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect(),
    };
    Tensor::new(shape, data)
}

pub fn write_npy(t: &Tensor, precision: Precision) -> Vec<u8> {
    let shape = match t.shape() {
        [] => "()".to_string(),
        [n] => format!("({n},)"),
        dims => format!(
            "({})",
            dims.iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        precision.descr(),
        shape
    );
    // pad so that preamble + header (+ trailing newline) is a multiple of 64
    let unpadded = PREAMBLE + header.len() + 1;
    let padding = (64 - unpadded % 64) % 64;
    header.extend(std::iter::repeat_n(' ', padding));
    header.push('\n');

    let mut out = Vec::with_capacity(PREAMBLE + header.len() + t.len() * precision.width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    match precision {
        Precision::F8 => t
            .data()
            .iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Precision::F4 => t
            .data()
            .iter()
            .for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes())),
    }
    out
}

pub fn load(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_npy(&bytes)
}

pub fn save(path: impl AsRef<Path>, t: &Tensor, precision: Precision) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_npy(t, precision)).map_err(|e| Error::io(path, e))
}

fn parse_header(header: &str) -> Result<(Precision, Vec<usize>)> {
    let body = header.trim();
    let body = body
        .strip_prefix('{')
        .and_then(|b| b.strip_suffix('}'))
        .ok_or_else(|| Error::Format("header is not a dict".into()))?;

    let descr = dict_value(body, "descr")?;
    let precision = match descr.trim_matches(|c| c == '\'' || c == '"') {
        "<f8" => Precision::F8,
        "<f4" => Precision::F4,
        other => return Err(Error::Format(format!("unsupported descr {other}"))),
    };
    match dict_value(body, "fortran_order")? {
        "False" => {}
        "True" => return Err(Error::Format("fortran_order arrays are not supported".into())),
        other => return Err(Error::Format(format!("bad fortran_order {other}"))),
    }
    let shape = dict_value(body, "shape")?;
    let inner = shape
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| Error::Format(format!("bad shape {shape}")))?;
    let dims = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad dimension {s}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((precision, dims))
}

/// Raw text of the value stored under `key`; values are a quoted string, a
/// bare word, or a parenthesised tuple.
fn dict_value<'a>(body: &'a str, key: &str) -> Result<&'a str> {
    let missing = || Error::Format(format!("header lacks '{key}'"));
    let start = body
        .find(&format!("'{key}'"))
        .or_else(|| body.find(&format!("\"{key}\"")))
        .ok_or_else(missing)?;
    let rest = &body[start + key.len() + 2..];
    let rest = rest.trim_start().strip_prefix(':').ok_or_else(missing)?.trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')').map(|i| i + 1)
    } else if let Some(q) = rest.chars().next().filter(|c| *c == '\'' || *c == '"') {
        rest[1..].find(q).map(|i| i + 2)
    } else {
        Some(rest.find(',').unwrap_or(rest.len()))
    }
    .ok_or_else(|| Error::Format(format!("unterminated value for '{key}'")))?;
    Ok(rest[..end].trim())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_of(bytes: &[u8]) -> &str {
        let len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        std::str::from_utf8(&bytes[10..10 + len]).unwrap()
    }

    #[test]
    fn decodes_2x2_f8() {
        let t = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = write_npy(&t, Precision::F8);
        assert_eq!((bytes.len() - 32) % 64, 0, "header block is a multiple of 64");
        let back = read_npy(&bytes).unwrap();
        assert_eq!(back.shape(), &[2, 2]);
        assert_eq!(back.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn hand_built_file_decodes() {
        let mut header =
            "{'descr': '<f8', 'fortran_order': False, 'shape': (2, 2), }".to_string();
        while (10 + header.len() + 1) % 64 != 0 {
            header.push(' ');
        }
        header.push('\n');
        let mut bytes = b"\x93NUMPY\x01\x00".to_vec();
        bytes.extend_from_slice(&(header.len() as u16).to_le_bytes());
        bytes.extend_from_slice(header.as_bytes());
        for v in [1.0f64, 2.0, 3.0, 4.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let t = read_npy(&bytes).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn rejects_fortran_order() {
        let t = Tensor::zeros(vec![2, 2]);
        let bytes = write_npy(&t, Precision::F8);
        let text = String::from_utf8_lossy(&bytes).replace("False", "True ");
        let err = read_npy(text.as_bytes());
        assert!(matches!(err, Err(Error::Format(_))), "{err:?}");
    }

    #[test]
    fn rejects_bad_magic_version_and_descr() {
        let bytes = write_npy(&Tensor::zeros(vec![3]), Precision::F8);
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(read_npy(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[6] = 2;
        assert!(matches!(read_npy(&bad), Err(Error::Format(_))));
        let text = String::from_utf8_lossy(&bytes).replace("<f8", "<i8");
        assert!(matches!(read_npy(text.as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_is_reported() {
        let bytes = write_npy(&Tensor::zeros(vec![4]), Precision::F8);
        let err = read_npy(&bytes[..bytes.len() - 3]);
        assert!(matches!(err, Err(Error::TruncatedPayload { .. })));
    }

    #[test]
    fn shape_spelling() {
        let scalar = write_npy(&Tensor::scalar(1.5), Precision::F8);
        assert!(header_of(&scalar).contains("'shape': ()"));
        assert_eq!(read_npy(&scalar).unwrap().data(), &[1.5]);
        let vec3 = write_npy(&Tensor::zeros(vec![3]), Precision::F4);
        assert!(header_of(&vec3).contains("'shape': (3,)"));
        assert!(header_of(&vec3).ends_with('\n'));
    }

    #[test]
    fn f4_is_widened() {
        let t = Tensor::new(vec![2], vec![0.5, 0.1]).unwrap();
        let back = read_npy(&write_npy(&t, Precision::F4)).unwrap();
        assert_eq!(back.data()[0], 0.5);
        assert_eq!(back.data()[1], f64::from(0.1f32));
    }
}
