//! Minimal NPY reader/writer: format version 1.0, C order, little-endian
//! `f4` / `f8`. Everything else is rejected with a specific message.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::featnet::{HiddenTensor, Layout};
use crate::io::atomic_write;

const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F4,
    F8,
}

impl Dtype {
    fn descr(self) -> &'static str {
        match self {
            Dtype::F4 => "<f4",
            Dtype::F8 => "<f8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
        }
    }
}

/// Array contents widened to `f64` (lossless for both dtypes).
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NpyArray {
    pub fn from_matrix(m: &DMatrix<f64>, dtype: Dtype) -> Self {
        let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
        NpyArray { dtype, shape: vec![m.nrows(), m.ncols()], data }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        match self.shape.as_slice() {
            &[r, c] => Ok(DMatrix::from_row_slice(r, c, &self.data)),
            &[r] => Ok(DMatrix::from_row_slice(r, 1, &self.data)),
            other => Err(Error::shape(format!("expected a 1-D or 2-D array, got shape {other:?}"))),
        }
    }

    pub fn to_tensor(&self, layout: Layout) -> Result<HiddenTensor> {
        HiddenTensor::new(self.data.clone(), layout, self.shape.clone())
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Npy(msg.into())
}

/// Value of `'key': <value>` in the header dict, up to the next top-level comma.
fn header_field<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let pat = format!("'{key}':");
    let start = header.find(&pat).ok_or_else(|| bad(format!("header missing '{key}'")))? + pat.len();
    let rest = header[start..].trim_start();
    let end = if rest.starts_with('(') { rest.find(')').map(|i| i + 1) } else { rest.find([',', '}']) }
        .ok_or_else(|| bad(format!("malformed '{key}' entry")))?;
    Ok(rest[..end].trim())
}

pub fn parse_npy(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(bad("not an NPY file (bad magic)"));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(bad(format!("unsupported version {major}.{minor} (only 1.0)")));
    }
    let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let body = 10 + hlen;
    if bytes.len() < body {
        return Err(bad("truncated header"));
    }
    let header = std::str::from_utf8(&bytes[10..body]).map_err(|_| bad("header is not ASCII"))?;

    let descr = header_field(header, "descr")?.trim_matches(['\'', '"']);
    let dtype = match descr {
        "<f8" => Dtype::F8,
        "<f4" => Dtype::F4,
        other => return Err(bad(format!("unsupported dtype '{other}' (only <f4, <f8)"))),
    };
    match header_field(header, "fortran_order")? {
        "False" => {}
        "True" => return Err(bad("fortran-order arrays are not supported")),
        other => return Err(bad(format!("malformed fortran_order '{other}'"))),
    }
    let shape_txt = header_field(header, "shape")?;
    let inner = shape_txt
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| bad(format!("malformed shape '{shape_txt}'")))?;
    let shape = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| bad(format!("malformed shape '{shape_txt}'"))))
        .collect::<Result<Vec<_>>>()?;

    let count: usize = shape.iter().product();
    let payload = &bytes[body..];
    let need = count * dtype.size();
    if payload.len() < need {
        return Err(bad(format!("truncated payload: shape {shape:?} needs {need} bytes, found {}", payload.len())));
    }
    if payload.len() > need {
        return Err(bad(format!(
            "payload length mismatch: shape {shape:?} needs {need} bytes, found {}",
            payload.len()
        )));
    }
    let data = match dtype {
        Dtype::F8 => payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
        Dtype::F4 => payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
    };
    Ok(NpyArray { dtype, shape, data })
}

pub fn to_npy_bytes(a: &NpyArray) -> Result<Vec<u8>> {
    let count: usize = a.shape.iter().product();
    if count != a.data.len() {
        return Err(Error::shape(format!("shape {:?} vs {} values", a.shape, a.data.len())));
    }
    let shape = match a.shape.len() {
        1 => format!("({},)", a.shape[0]),
        _ => format!("({})", a.shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")),
    };
    let mut header = format!("{{'descr': '{}', 'fortran_order': False, 'shape': {shape}, }}", a.dtype.descr());
    // pad so the payload starts on a 64-byte boundary, newline-terminated
    let unpadded = 10 + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');

    let mut out = Vec::with_capacity(10 + header.len() + count * a.dtype.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    match a.dtype {
        Dtype::F8 => a.data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Dtype::F4 => a.data.iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
    }
    Ok(out)
}

pub fn read_npy(path: &Path) -> Result<NpyArray> {
    parse_npy(&std::fs::read(path)?)
}

pub fn write_npy(path: &Path, a: &NpyArray) -> Result<()> {
    atomic_write(path, &to_npy_bytes(a)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.npy");
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        write_npy(&p, &NpyArray::from_matrix(&m, Dtype::F8)).unwrap();
        let back = read_npy(&p).unwrap();
        assert_eq!(back.shape, vec![2, 2]);
        assert_eq!(back.to_matrix().unwrap(), m);
        let bytes = std::fs::read(&p).unwrap();
        let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + hlen) % 64, 0);
    }

    #[test]
    fn reads_numpy_style_header() {
        // header as numpy.save writes it for np.arange(3, dtype='<f4')
        let mut header = String::from("{'descr': '<f4', 'fortran_order': False, 'shape': (3,), }");
        while (10 + header.len() + 1) % 64 != 0 {
            header.push(' ');
        }
        header.push('\n');
        let mut bytes = b"\x93NUMPY\x01\x00".to_vec();
        bytes.extend_from_slice(&(header.len() as u16).to_le_bytes());
        bytes.extend_from_slice(header.as_bytes());
        for v in [0f32, 1.0, 2.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let a = parse_npy(&bytes).unwrap();
        assert_eq!(a.dtype, Dtype::F4);
        assert_eq!(a.shape, vec![3]);
        assert_eq!(a.data, vec![0.0, 1.0, 2.0]);
    }

    fn with_header(major: u8, header: &str, payload: &[u8]) -> Vec<u8> {
        let mut bytes = b"\x93NUMPY".to_vec();
        bytes.extend_from_slice(&[major, 0]);
        bytes.extend_from_slice(&(header.len() as u16).to_le_bytes());
        bytes.extend_from_slice(header.as_bytes());
        bytes.extend_from_slice(payload);
        bytes
    }

    fn message(r: Result<NpyArray>) -> String {
        match r {
            Err(Error::Npy(m)) => m,
            other => panic!("expected npy error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unsupported_inputs() {
        let ok = "{'descr': '<f8', 'fortran_order': False, 'shape': (2,), }\n";
        let payload = [0u8; 16];
        assert!(message(parse_npy(&with_header(2, ok, &payload))).contains("unsupported version"));
        assert!(message(parse_npy(&with_header(1, ok, &payload[..12]))).contains("truncated payload"));
        let fortran = "{'descr': '<f8', 'fortran_order': True, 'shape': (2,), }\n";
        assert!(message(parse_npy(&with_header(1, fortran, &payload))).contains("fortran"));
        let big = "{'descr': '>f8', 'fortran_order': False, 'shape': (2,), }\n";
        assert!(message(parse_npy(&with_header(1, big, &payload))).contains("unsupported dtype"));
        let ints = "{'descr': '<i8', 'fortran_order': False, 'shape': (2,), }\n";
        assert!(message(parse_npy(&with_header(1, ints, &payload))).contains("unsupported dtype"));
        assert!(message(parse_npy(b"PK\x03\x04 not npy")).contains("magic"));
    }

    #[test]
    fn tensor_from_file_uses_layout() {
        let a = NpyArray { dtype: Dtype::F8, shape: vec![1, 1, 2, 2], data: vec![1.0, 2.0, 3.0, 4.0] };
        let t = a.to_tensor(Layout::Bdhw).unwrap();
        assert_eq!(crate::featnet::reduce_mean(&t)[(0, 0)], 2.5);
        assert!(a.to_tensor(Layout::Bd).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_bit_exact(
            shape in proptest::collection::vec(1usize..5, 1..4),
            seed in any::<u64>(),
            f4 in any::<bool>(),
        ) {
            let count: usize = shape.iter().product();
            let mut state = seed;
            let data: Vec<f64> = (0..count)
                .map(|_| {
                    state = crate::rng::splitmix64(state);
                    let v = f64::from_bits(state);
                    if !v.is_finite() { 0.5 } else if f4 { v as f32 as f64 } else { v }
                })
                .collect();
            let a = NpyArray { dtype: if f4 { Dtype::F4 } else { Dtype::F8 }, shape, data };
            let bytes = to_npy_bytes(&a).unwrap();
            let back = parse_npy(&bytes).unwrap();
            prop_assert_eq!(back.shape, a.shape.clone());
            for (x, y) in back.data.iter().zip(&a.data) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
            prop_assert_eq!(to_npy_bytes(&parse_npy(&bytes).unwrap()).unwrap(), bytes);
        }
    }
}
