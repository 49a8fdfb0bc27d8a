//! Named-tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"PLNK"
//! version u32                 (currently 1)
//! header  u32 length + UTF-8 JSON (model hyperparameters)
//! count   u32
//! count × { u32 name length, name bytes,
//!           u32 rank, rank × u64 dims,
//!           product(dims) × f64 }
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::params::ParamStore;
use super::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PLNK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(
    mut w: W,
    store: &ParamStore,
    header: &serde_json::Value,
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let header = serde_json::to_vec(header)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (_, name, t) in store.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.len() * 8);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
    offset: usize,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|e| Error::Parse {
            offset: self.offset,
            msg: format!("truncated checkpoint: {e}"),
        })?;
        self.offset += n;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.bytes(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<(ParamStore, serde_json::Value)> {
    let mut rd = Reader { inner: r, offset: 0 };
    if rd.bytes(4)? != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            msg: "not a checkpoint (bad magic)".into(),
        });
    }
    let version = rd.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Parse {
            offset: 4,
            msg: format!("unsupported checkpoint version {version}"),
        });
    }
    let hlen = rd.u32()? as usize;
    let hoff = rd.offset;
    let header: serde_json::Value =
        serde_json::from_slice(&rd.bytes(hlen)?).map_err(|e| Error::Parse {
            offset: hoff,
            msg: format!("bad header: {e}"),
        })?;
    let count = rd.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let nlen = rd.u32()? as usize;
        let noff = rd.offset;
        let name = String::from_utf8(rd.bytes(nlen)?).map_err(|_| Error::Parse {
            offset: noff,
            msg: "tensor name is not UTF-8".into(),
        })?;
        let rank = rd.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(rd.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = rd.bytes(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        store.add(name, Tensor::new(&shape, data)?);
    }
    Ok((store, header))
}

pub fn save_checkpoint(path: &Path, store: &ParamStore, header: &serde_json::Value) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(f, store, header)
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, serde_json::Value)> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_checkpoint(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut store = ParamStore::new();
        store.add("a.w", Tensor::new(&[2, 2], vec![0.1, -1e-300, f64::MAX, 3.0]).unwrap());
        store.add("b", Tensor::vector(&[std::f64::consts::PI]));
        let header = serde_json::json!({"model_dim": 1024});
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &store, &header).unwrap();
        let (back, h) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(h, header);
        assert_eq!(back.len(), 2);
        for ((_, n1, t1), (_, n2, t2)) in store.iter().zip(back.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            for (a, b) in t1.data().iter().zip(t2.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn truncated_file_names_offset() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::vector(&[1.0, 2.0]));
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &store, &serde_json::json!({})).unwrap();
        buf.truncate(buf.len() - 3);
        match read_checkpoint(buf.as_slice()) {
            Err(Error::Parse { offset, .. }) => assert!(offset > 0),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
