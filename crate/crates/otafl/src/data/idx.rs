//! IDX binary tensor format (the MNIST container).
//!
//! Layout, all big-endian: two zero bytes, one element-kind byte
//! (0x08 = unsigned byte), one rank byte, then `rank` 32-bit dimension
//! sizes, then the row-major payload. Image files carry magic
//! `0x00000803` (kind 8, rank 3), label files `0x00000801`.

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
const KIND_UNSIGNED_BYTE: u8 = 0x08;

#[derive(Debug, Clone, PartialEq)]
pub struct IdxTensor {
    element_kind: u8,
    dims: Vec<usize>,
    payload: Vec<u8>,
}

impl IdxTensor {
    /// Unsigned-byte tensor; payload length must equal the dim product.
    pub fn unsigned(dims: Vec<usize>, payload: Vec<u8>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if dims.is_empty() || dims.len() > 255 {
            return Err(Error::Format(format!("bad rank {}", dims.len())));
        }
        if payload.len() != expected {
            return Err(Error::Length(format!(
                "payload length {} does not match dims {:?}",
                payload.len(),
                dims
            )));
        }
        Ok(IdxTensor {
            element_kind: KIND_UNSIGNED_BYTE,
            dims,
            payload,
        })
    }

    pub fn element_kind(&self) -> u8 {
        self.element_kind
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// Rank-1 view (labels file).
    pub fn as_labels(&self) -> Result<&[u8]> {
        if self.dims.len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "labels tensor must be rank 1, got rank {}",
                self.dims.len()
            )));
        }
        Ok(&self.payload)
    }

    /// Rank-3 view (images file): `(count, rows, cols)` with pixels scaled
    /// to [0, 1].
    pub fn as_images(&self) -> Result<(usize, usize, usize, Vec<f64>)> {
        if self.dims.len() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "images tensor must be rank 3, got rank {}",
                self.dims.len()
            )));
        }
        let pixels = self.payload.iter().map(|&b| b as f64 / 255.0).collect();
        Ok((self.dims[0], self.dims[1], self.dims[2], pixels))
    }
}

/// Parse an IDX byte stream.
pub fn read_idx(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        return Err(Error::Length(format!(
            "IDX header needs 4 bytes, got {}",
            bytes.len()
        )));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Format(format!(
            "bad IDX magic: leading bytes {:02x} {:02x}",
            bytes[0], bytes[1]
        )));
    }
    let kind = bytes[2];
    if kind != KIND_UNSIGNED_BYTE {
        return Err(Error::Format(format!(
            "unsupported IDX element kind 0x{kind:02x} (only 0x08 unsigned byte)"
        )));
    }
    let rank = bytes[3] as usize;
    if rank == 0 {
        return Err(Error::Format("IDX rank must be at least 1".into()));
    }
    let header_len = 4 + 4 * rank;
    if bytes.len() < header_len {
        return Err(Error::Length(format!(
            "IDX header truncated: rank {} needs {} bytes, got {}",
            rank,
            header_len,
            bytes.len()
        )));
    }
    let mut dims = Vec::with_capacity(rank);
    let mut expected: usize = 1;
    for i in 0..rank {
        let off = 4 + 4 * i;
        let dim = u32::from_be_bytes([
            bytes[off],
            bytes[off + 1],
            bytes[off + 2],
            bytes[off + 3],
        ]) as usize;
        expected = expected
            .checked_mul(dim)
            .ok_or_else(|| Error::Length("IDX dimension product overflows".into()))?;
        dims.push(dim);
    }
    let payload = &bytes[header_len..];
    if payload.len() != expected {
        return Err(Error::Length(format!(
            "IDX payload has {} bytes, dims {:?} require {}",
            payload.len(),
            dims,
            expected
        )));
    }
    Ok(IdxTensor {
        element_kind: kind,
        dims,
        payload: payload.to_vec(),
    })
}

/// Serialize a tensor back to IDX bytes; inverse of [`read_idx`].
pub fn encode_idx(tensor: &IdxTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * tensor.dims.len() + tensor.payload.len());
    out.extend_from_slice(&[0, 0, tensor.element_kind, tensor.dims.len() as u8]);
    for &dim in &tensor.dims {
        out.extend_from_slice(&(dim as u32).to_be_bytes());
    }
    out.extend_from_slice(&tensor.payload);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_labels_file() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 3, 7, 2, 1];
        let t = read_idx(&bytes).unwrap();
        assert_eq!(t.dims(), &[3]);
        assert_eq!(t.as_labels().unwrap(), &[7, 2, 1]);
    }

    #[test]
    fn parses_an_images_file() {
        let mut bytes = vec![0, 0, 8, 3];
        for d in [2u32, 2, 2] {
            bytes.extend_from_slice(&d.to_be_bytes());
        }
        bytes.extend_from_slice(&[0, 255, 128, 0, 255, 0, 0, 128]);
        let t = read_idx(&bytes).unwrap();
        let (n, rows, cols, pixels) = t.as_images().unwrap();
        assert_eq!((n, rows, cols), (2, 2, 2));
        assert_eq!(pixels[1], 1.0);
        assert_eq!(pixels[0], 0.0);
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(matches!(
            read_idx(&[1, 0, 8, 1, 0, 0, 0, 0]),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            read_idx(&[0, 0, 9, 1, 0, 0, 0, 0]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn rejects_every_truncation() {
        let tensor = IdxTensor::unsigned(vec![4, 8], (0..32).collect()).unwrap();
        let bytes = encode_idx(&tensor);
        assert!(read_idx(&bytes).is_ok());
        for cut in 0..bytes.len() {
            assert!(
                read_idx(&bytes[..cut]).is_err(),
                "truncation to {} bytes accepted",
                cut
            );
        }
    }

    #[test]
    fn rejects_trailing_bytes() {
        let tensor = IdxTensor::unsigned(vec![3], vec![1, 2, 3]).unwrap();
        let mut bytes = encode_idx(&tensor);
        bytes.push(0);
        assert!(matches!(read_idx(&bytes), Err(Error::Length(_))));
    }

    #[test]
    fn round_trips_through_encode() {
        let tensor = IdxTensor::unsigned(vec![2, 3], vec![9, 8, 7, 6, 5, 4]).unwrap();
        assert_eq!(read_idx(&encode_idx(&tensor)).unwrap(), tensor);
    }
}
