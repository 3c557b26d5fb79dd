//! Binary tensor files.
//!
//! Layout (all integers unsigned 32-bit little-endian):
//!
//! ```text
//! "CNFD" | version | element type (0 = f32, 1 = f64) | rank | extent * rank | payload
//! ```
//!
//! The payload is the row-major element buffer in little-endian byte order.

use std::io::{Read, Write};
use std::path::Path;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"CNFD";
pub const TENSOR_VERSION: u32 = 1;

/// Serialize `t` into `out`.
pub fn write_tensor<T: Scalar>(t: &Tensor<T>, out: &mut Vec<u8>) {
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.extend_from_slice(&T::TYPE_CODE.to_le_bytes());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &e in t.shape() {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    out.reserve(t.len() * T::BYTES);
    for &v in t.data() {
        v.write_le(out);
    }
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::CorruptTensor(format!(
            "unexpected end of data: needed {n} bytes, {} left",
            bytes.len()
        )));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn take_u32(bytes: &mut &[u8]) -> Result<u32> {
    let b = take(bytes, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// Parse one tensor from the front of `bytes`, advancing the slice past it.
/// A stored f32/f64 tensor is converted to `T` when the types differ.
pub fn read_tensor<T: Scalar>(bytes: &mut &[u8]) -> Result<Tensor<T>> {
    if take(bytes, 4)? != TENSOR_MAGIC {
        return Err(Error::BadMagic {
            what: "tensor",
            expected: "CNFD".into(),
        });
    }
    let version = take_u32(bytes)?;
    if version != TENSOR_VERSION {
        return Err(Error::VersionMismatch {
            what: "tensor",
            found: version,
            expected: TENSOR_VERSION,
        });
    }
    let code = take_u32(bytes)?;
    let rank = take_u32(bytes)? as usize;
    if rank == 0 || rank > 16 {
        return Err(Error::CorruptTensor(format!("implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(take_u32(bytes)? as usize);
    }
    let len: usize = shape.iter().product();
    let data: Vec<T> = match code {
        0 => take(bytes, len * 4)?
            .chunks_exact(4)
            .map(|c| T::lit(f32::read_le(c) as f64))
            .collect(),
        1 => take(bytes, len * 8)?
            .chunks_exact(8)
            .map(|c| T::lit(f64::read_le(c)))
            .collect(),
        other => return Err(Error::CorruptTensor(format!("unknown element type {other}"))),
    };
    Tensor::new(shape, data).map_err(|e| Error::CorruptTensor(e.to_string()))
}

pub fn write_tensor_file<T: Scalar>(t: &Tensor<T>, path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    write_tensor(t, &mut bytes);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes)
}

pub fn read_tensor_file<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut slice = bytes.as_slice();
    let t = read_tensor(&mut slice)?;
    if !slice.is_empty() {
        return Err(Error::CorruptTensor(format!(
            "{} trailing bytes in {}",
            slice.len(),
            path.display()
        )));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_exact() {
        let t = Tensor::<f32>::new(vec![1, 2], vec![1.0, -2.0]).unwrap();
        let mut bytes = Vec::new();
        write_tensor(&t, &mut bytes);
        let mut want = b"CNFD".to_vec();
        for v in [1u32, 0, 2, 1, 2] {
            want.extend_from_slice(&v.to_le_bytes());
        }
        want.extend_from_slice(&1.0f32.to_le_bytes());
        want.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(bytes, want);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let t = Tensor::<f64>::full(vec![2, 2], 1.5);
        let mut bytes = Vec::new();
        write_tensor(&t, &mut bytes);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_tensor::<f64>(&mut bad.as_slice()), Err(Error::BadMagic { .. })));
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(read_tensor::<f64>(&mut &cut[..]), Err(Error::CorruptTensor(_))));
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(matches!(
            read_tensor::<f64>(&mut wrong_version.as_slice()),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(shape in proptest::collection::vec(1usize..5, 1..5), seed in any::<u64>()) {
            let len: usize = shape.iter().product();
            let data: Vec<f64> = (0..len).map(|i| ((i as u64 ^ seed) as f64).sin() * 1e3).collect();
            let t = Tensor::new(shape, data).unwrap();
            let mut bytes = Vec::new();
            write_tensor(&t, &mut bytes);
            let mut s = bytes.as_slice();
            let back: Tensor<f64> = read_tensor(&mut s).unwrap();
            prop_assert!(s.is_empty());
            prop_assert_eq!(back.shape(), t.shape());
            prop_assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
