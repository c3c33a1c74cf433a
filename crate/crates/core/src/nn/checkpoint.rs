//! Binary checkpoint format for named tensors.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic   4 bytes  "SGL1"
//! count   u32      number of tensors
//! repeat count times:
//!   name_len u32
//!   name     name_len bytes, UTF-8
//!   rank     u32
//!   dims     rank x u64
//!   values   product(dims) x f64
//! ```
//!
//! Tensors are written in the order given; loading preserves it. Save/load
//! round-trips are bit-exact.

use std::io::{Read, Write};

use super::tensor::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"SGL1";

pub fn save_checkpoint<W: Write>(mut w: W, tensors: &[(String, &Tensor)]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse(format!(
            "bad checkpoint magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let count = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|e| Error::Parse(format!("checkpoint name not UTF-8: {e}")))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        out.push((name, Tensor::from_vec(&shape, data)?));
    }
    Ok(out)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let a = Tensor::from_vec(&[2, 3], vec![1.0, -2.5, 3.25, 0.0, f64::MIN_POSITIVE, 1e300])
            .unwrap();
        let b = Tensor::from_vec(&[4], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &[("a".into(), &a), ("nested.name".into(), &b)]).unwrap();
        let loaded = load_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].0, "a");
        assert_eq!(loaded[0].1, a);
        assert_eq!(loaded[1].0, "nested.name");
        assert_eq!(loaded[1].1, b);

        let mut buf2 = Vec::new();
        save_checkpoint(
            &mut buf2,
            &[("a".into(), &loaded[0].1), ("nested.name".into(), &loaded[1].1)],
        )
        .unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(matches!(
            load_checkpoint(&b"NOPE\x00\x00\x00\x00"[..]),
            Err(Error::Parse(_))
        ));
    }
}
