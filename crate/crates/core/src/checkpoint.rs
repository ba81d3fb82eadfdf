//! Binary checkpoint codec.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "MQTO" | version | config_len | config (UTF-8 `model.key = value` lines)
//! { name_len | name | rank | dims[rank] | f32 LE data } *
//! crc32 of every preceding byte
//! ```
//!
//! Tensors appear in [`MosquitoNet::named_tensors`] order, running statistics
//! included. Decoding validates the checksum before anything else and never
//! yields a partially populated model.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::model::{ModelConfig, MosquitoNet};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MQTO";
pub const VERSION: u32 = 1;

pub fn encode(model: &MosquitoNet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    let cfg = model.config().to_text();
    put_u32(&mut out, cfg.len() as u32);
    out.extend_from_slice(cfg.as_bytes());
    for (name, t) in model.named_tensors() {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rank() as u32);
        for &d in t.shape() {
            put_u32(&mut out, d as u32);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    out
}

/// The trailing checksum, which also serves as the model id.
pub fn checksum(bytes: &[u8]) -> Option<u32> {
    let tail = bytes.len().checked_sub(4)?;
    Some(u32::from_le_bytes(bytes[tail..].try_into().ok()?))
}

pub fn decode(bytes: &[u8]) -> Result<MosquitoNet> {
    if bytes.len() < 16 {
        return Err(Error::Checkpoint(format!(
            "truncated: only {} bytes",
            bytes.len()
        )));
    }
    let (body, _) = bytes.split_at(bytes.len() - 4);
    let stored = checksum(bytes).expect("length checked");
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::Checkpoint(format!(
            "integrity check failed (stored crc {stored:08x}, computed {actual:08x})"
        )));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint(
            "bad magic, not a Mosquito-Net checkpoint".into(),
        ));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let cfg_len = r.u32()? as usize;
    let cfg_text = core::str::from_utf8(r.take(cfg_len)?)
        .map_err(|_| Error::Checkpoint("config is not UTF-8".into()))?;
    let config = ModelConfig::from_text(cfg_text)
        .map_err(|e| Error::Checkpoint(format!("stored config invalid: {e}")))?;

    let mut tensors = Vec::new();
    while r.remaining() > 0 {
        let name_len = r.u32()? as usize;
        let name = String::from(
            core::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?,
        );
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(Error::Checkpoint(format!(
                "tensor {name}: implausible rank {rank}"
            )));
        }
        let dims: Vec<usize> = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<_>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n.checked_mul(4).is_some_and(|b| b <= r.remaining()))
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name}: data exceeds file")))?;
        let raw = r.take(n * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.push((name, Tensor::new(&dims, data)?));
    }
    MosquitoNet::from_named_tensors(config, tensors)
}

/// Decodes and additionally requires the stored config to equal `expected`.
pub fn decode_expecting(bytes: &[u8], expected: &ModelConfig) -> Result<MosquitoNet> {
    let model = decode(bytes)?;
    if model.config() != expected {
        return Err(Error::Checkpoint(format!(
            "checkpoint config does not match the expected config\n--- stored\n{}--- expected\n{}",
            model.config().to_text(),
            expected.to_text()
        )));
    }
    Ok(model)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Checkpoint("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RngSeed;

    fn small() -> MosquitoNet {
        let cfg = ModelConfig {
            height: 8,
            width: 8,
            conv_channels: alloc::vec![2, 3],
            fc_sizes: alloc::vec![4],
            ..ModelConfig::default()
        };
        let mut m = MosquitoNet::build(cfg, RngSeed(3)).unwrap();
        m.blocks[0].bn.running.mean[1] = 0.25;
        m.blocks[1].bn.running.var[2] = 3.5;
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = small();
        let bytes = encode(&m);
        assert_eq!(&bytes[..4], MAGIC);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&small());
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), VERSION);
        let cfg_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let cfg = core::str::from_utf8(&bytes[12..12 + cfg_len]).unwrap();
        assert!(cfg.starts_with("model.in_channels = 3\n"));
        let name_len =
            u32::from_le_bytes(bytes[12 + cfg_len..16 + cfg_len].try_into().unwrap()) as usize;
        assert_eq!(
            &bytes[16 + cfg_len..16 + cfg_len + name_len],
            b"block0.conv.weight"
        );
        assert_eq!(
            checksum(&bytes),
            Some(crc32fast::hash(&bytes[..bytes.len() - 4]))
        );
    }

    #[test]
    fn truncation_and_corruption_are_rejected() {
        let bytes = encode(&small());
        for cut in [0, 3, 15, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::Checkpoint(_))));
        }
        let mut flipped = bytes.clone();
        flipped[40] ^= 0x10;
        assert!(matches!(decode(&flipped), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = encode(&small());
        bytes[4] = 9;
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        let err = decode(&bytes).unwrap_err();
        assert!(format!("{err}").contains("version"));
    }

    #[test]
    fn config_mismatch() {
        let m = small();
        let bytes = encode(&m);
        assert!(decode_expecting(&bytes, m.config()).is_ok());
        assert!(decode_expecting(&bytes, &ModelConfig::default()).is_err());
    }
}
