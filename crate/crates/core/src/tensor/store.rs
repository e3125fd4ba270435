//! Named-tensor checkpoint container.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic "XATN1" | count: u32 | count x tensor record
//! tensor record = name_len: u16 | name: utf8 | rank: u8 | dims: u32 x rank | data: f64 x numel
//! ```
//!
//! Records are written in ascending name order, so encoding a given map is
//! byte-deterministic. The decoder is defensive: it is driven by untrusted
//! bytes in tests and fuzzing, so every length is validated against the
//! remaining input before any allocation sized by it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::{Error, Result};

use super::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"XATN1";

/// Serialize a name → tensor map to the container format.
pub fn encode_checkpoint(tensors: &BTreeMap<String, Tensor>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let count = u32::try_from(tensors.len())
        .map_err(|_| Error::contract("checkpoint: too many tensors"))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in tensors {
        let name_len = u16::try_from(name.len()).map_err(|_| {
            Error::contract(format!("checkpoint: tensor name '{name}' exceeds 65535 bytes"))
        })?;
        if t.shape().len() > u8::MAX as usize {
            return Err(Error::contract(format!(
                "checkpoint: tensor '{name}' rank {} exceeds 255",
                t.shape().len()
            )));
        }
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| {
                Error::contract(format!("checkpoint: tensor '{name}' dimension {d} exceeds u32"))
            })?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&t.to_le_bytes());
    }
    Ok(out)
}

/// Parse the container format. Inverse of [`encode_checkpoint`].
pub fn decode_checkpoint(bytes: &[u8]) -> Result<BTreeMap<String, Tensor>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(CHECKPOINT_MAGIC.len())?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::data(format!(
            "checkpoint: bad magic {:02x?}, expected {:02x?}",
            magic, CHECKPOINT_MAGIC
        )));
    }
    let count = r.u32()? as usize;
    let mut out = BTreeMap::new();
    for idx in 0..count {
        let name_len = r.u16()? as usize;
        let name_bytes = r.take(name_len)?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| Error::data(format!("checkpoint: tensor {idx} name is not UTF-8")))?
            .to_string();
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        let mut numel: usize = 1;
        for _ in 0..rank {
            let d = r.u32()? as usize;
            numel = numel
                .checked_mul(d)
                .ok_or_else(|| Error::data(format!("checkpoint: tensor '{name}' size overflows")))?;
            shape.push(d);
        }
        // Validate against remaining bytes before allocating the buffer.
        let need = numel
            .checked_mul(8)
            .ok_or_else(|| Error::data(format!("checkpoint: tensor '{name}' size overflows")))?;
        if r.remaining() < need {
            return Err(Error::data(format!(
                "checkpoint: truncated data for tensor '{name}' (need {need} bytes, have {})",
                r.remaining()
            )));
        }
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            let chunk = r.take(8)?;
            data.push(f64::from_le_bytes(chunk.try_into().expect("8-byte chunk")));
        }
        let tensor = Tensor::from_vec(&shape, data)?;
        if out.insert(name.clone(), tensor).is_some() {
            return Err(Error::data(format!("checkpoint: duplicate tensor name '{name}'")));
        }
    }
    if r.remaining() != 0 {
        return Err(Error::data(format!(
            "checkpoint: {} trailing bytes after last tensor",
            r.remaining()
        )));
    }
    Ok(out)
}

/// Write a checkpoint file.
pub fn write_checkpoint(path: &Path, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
    let bytes = encode_checkpoint(tensors)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Read a checkpoint file.
pub fn read_checkpoint(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let bytes = fs::read(path)
        .map_err(|e| Error::data(format!("checkpoint: cannot read {}: {e}", path.display())))?;
    decode_checkpoint(&bytes)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::data(format!(
                "checkpoint: truncated at byte {} (need {n} more, have {})",
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_map() -> BTreeMap<String, Tensor> {
        let mut m = BTreeMap::new();
        m.insert(
            "layer0/attn/wq".to_string(),
            Tensor::from_vec(&[2, 3], vec![1.5, -2.0, 1e-300, 0.0, -0.0, 3.25]).unwrap(),
        );
        m.insert("cls/b".to_string(), Tensor::from_vec(&[2], vec![0.5, -0.5]).unwrap());
        m.insert("scalarish".to_string(), Tensor::scalar(42.0));
        m
    }

    #[test]
    fn roundtrip_is_exact_and_deterministic() {
        let m = sample_map();
        let a = encode_checkpoint(&m).unwrap();
        let b = encode_checkpoint(&m).unwrap();
        assert_eq!(a, b, "encoding must be byte-deterministic");
        let back = decode_checkpoint(&a).unwrap();
        assert_eq!(back.len(), m.len());
        for (name, t) in &m {
            let got = &back[name];
            assert_eq!(got.shape(), t.shape());
            // Compare bit patterns so -0.0 and tiny values stay exact.
            for (x, y) in got.data().iter().zip(t.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let m = sample_map();
        write_checkpoint(&path, &m).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.len(), m.len());
    }

    #[test]
    fn missing_file_reports_path() {
        let err = read_checkpoint(Path::new("/no/such/file.ckpt"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("/no/such/file.ckpt"), "{err}");
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = encode_checkpoint(&sample_map()).unwrap();
        bytes[0] = b'Y';
        assert!(decode_checkpoint(&bytes).is_err());
    }

    #[test]
    fn truncation_is_rejected_everywhere() {
        let bytes = encode_checkpoint(&sample_map()).unwrap();
        for cut in 0..bytes.len() {
            assert!(
                decode_checkpoint(&bytes[..cut]).is_err(),
                "decoder accepted a {cut}-byte prefix"
            );
        }
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut bytes = encode_checkpoint(&sample_map()).unwrap();
        bytes.push(0);
        assert!(decode_checkpoint(&bytes).is_err());
    }

    #[test]
    fn hostile_sizes_do_not_allocate() {
        // Header claiming one tensor with astronomically large dims.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(CHECKPOINT_MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.push(b'x');
        bytes.push(4); // rank 4
        for _ in 0..4 {
            bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(decode_checkpoint(&bytes).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
                let _ = decode_checkpoint(&bytes);
            }

            #[test]
            fn roundtrip_arbitrary_small_tensors(
                vals in proptest::collection::vec(any::<f64>(), 1..20),
                rows in 1usize..4,
            ) {
                let cols = vals.len() / rows;
                prop_assume!(cols > 0);
                let t = Tensor::from_vec(&[rows, cols], vals[..rows * cols].to_vec()).unwrap();
                let mut m = BTreeMap::new();
                m.insert("t".to_string(), t.clone());
                let back = decode_checkpoint(&encode_checkpoint(&m).unwrap()).unwrap();
                for (x, y) in back["t"].data().iter().zip(t.data()) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }
}
