//! Little-endian binary checkpoints.
//!
//! Layout: magic `DCRL`, format version (u32), byte-order marker (u32),
//! config text (u64 length + bytes), entry count (u32), then per entry the
//! name (u32 length + bytes), rank (u32), dims (u64 each) and an f32
//! payload, then the rng blob (u32 length + bytes), then a CRC-32 of
//! everything before it.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::crl::CrlAgent;
use crate::error::{Error, Result};
use crate::nn::RealArray;
use crate::scalar::Scalar;

use super::TrainConfig;

pub const MAGIC: &[u8; 4] = b"DCRL";
pub const FORMAT_VERSION: u32 = 1;
const BYTE_ORDER: u32 = 0x0102_0304;
const RNG_BLOB_LEN: usize = 32 + 8 + 16;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Serializable snapshot of a ChaCha8 stream position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_text: String,
    pub entries: Vec<CheckpointEntry>,
    pub rng: RngState,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str, wide: bool) -> Result<usize> {
        let n = if wide { self.u64(what)? } else { self.u32(what)? as u64 };
        usize::try_from(n)
            .ok()
            .filter(|&n| n <= self.buf.len() - self.pos)
            .ok_or_else(|| Error::Checkpoint(format!("{what} length {n} exceeds the file")))
    }
}

impl Checkpoint {
    pub fn capture<T: Scalar>(agent: &CrlAgent<T>, config: &TrainConfig, rng: &ChaCha8Rng) -> Self {
        let mut entries = Vec::new();
        for (prefix, store) in agent.stores() {
            for (name, e) in store.iter() {
                entries.push(CheckpointEntry {
                    name: format!("{prefix}/{name}"),
                    shape: e.value.shape().to_vec(),
                    data: e.value.data().iter().map(|v| v.as_f64() as f32).collect(),
                });
            }
        }
        Self {
            config_text: config.to_text(),
            entries,
            rng: RngState::capture(rng),
        }
    }

    pub fn config(&self) -> Result<TrainConfig> {
        TrainConfig::parse(&self.config_text)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        b.extend_from_slice(&BYTE_ORDER.to_le_bytes());
        b.extend_from_slice(&(self.config_text.len() as u64).to_le_bytes());
        b.extend_from_slice(self.config_text.as_bytes());
        b.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            b.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            b.extend_from_slice(e.name.as_bytes());
            b.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for &d in &e.shape {
                b.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &e.data {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b.extend_from_slice(&(RNG_BLOB_LEN as u32).to_le_bytes());
        b.extend_from_slice(&self.rng.seed);
        b.extend_from_slice(&self.rng.stream.to_le_bytes());
        b.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        let crc = crc32fast::hash(&b);
        b.extend_from_slice(&crc.to_le_bytes());
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Checkpoint("file too short".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Checkpoint("bad magic, not a checkpoint".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let order = r.u32("byte-order marker")?;
        if order != BYTE_ORDER {
            return Err(Error::Checkpoint(format!("byte-order marker {order:#010x} does not match")));
        }
        let stored_crc = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored_crc {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        let n = r.len("config", true)?;
        let config_text = String::from_utf8(r.take(n, "config")?.to_vec())
            .map_err(|_| Error::Checkpoint("config text is not UTF-8".into()))?;
        let count = r.u32("entry count")? as usize;
        let mut entries = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let n = r.len("entry name", false)?;
            let name = String::from_utf8(r.take(n, "entry name")?.to_vec())
                .map_err(|_| Error::Checkpoint("entry name is not UTF-8".into()))?;
            let rank = r.u32("rank")? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.u64("dims")? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| Error::Checkpoint(format!("entry `{name}` has an impossible shape")))?;
            let raw = r.take(numel, &name)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            entries.push(CheckpointEntry { name, shape, data });
        }
        let blob = r.len("rng blob", false)?;
        if blob != RNG_BLOB_LEN {
            return Err(Error::Checkpoint(format!("rng blob has {blob} bytes, expected {RNG_BLOB_LEN}")));
        }
        let seed: [u8; 32] = r.take(32, "rng seed")?.try_into().expect("32 bytes");
        let stream = r.u64("rng stream")?;
        let word_pos = u128::from_le_bytes(r.take(16, "rng position")?.try_into().expect("16 bytes"));
        if r.pos != body.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Self {
            config_text,
            entries,
            rng: RngState { seed, stream, word_pos },
        })
    }

    /// Writes atomically via a sibling temporary file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Copies parameters into `agent`. Every entry is checked before any
    /// parameter is written, so a failed restore leaves `agent` untouched.
    pub fn restore_into<T: Scalar>(&self, agent: &mut CrlAgent<T>) -> Result<()> {
        let expected: Vec<(String, Vec<usize>)> = agent
            .stores()
            .iter()
            .flat_map(|(p, s)| s.iter().map(move |(n, e)| (format!("{p}/{n}"), e.value.shape().to_vec())))
            .collect();
        if expected.len() != self.entries.len() {
            return Err(Error::CheckpointMismatch {
                entry: "<all>".into(),
                detail: format!("checkpoint has {} entries, model has {}", self.entries.len(), expected.len()),
            });
        }
        for ((name, shape), e) in expected.iter().zip(&self.entries) {
            if *name != e.name {
                return Err(Error::CheckpointMismatch {
                    entry: e.name.clone(),
                    detail: format!("model expects `{name}` at this position"),
                });
            }
            if *shape != e.shape {
                return Err(Error::CheckpointMismatch {
                    entry: e.name.clone(),
                    detail: format!("shape {:?} in checkpoint, {:?} in model", e.shape, shape),
                });
            }
        }
        let mut it = self.entries.iter();
        for (_, store) in agent.stores_mut() {
            for (_, p) in store.iter_mut() {
                let e = it.next().expect("counts checked");
                p.value = RealArray::from_vec(&e.shape, e.data.iter().map(|&v| T::of(v as f64)).collect())?;
            }
        }
        Ok(())
    }

    /// Rebuilds the agent described by the embedded config.
    pub fn build_agent<T: Scalar>(&self) -> Result<CrlAgent<T>> {
        let config = self.config()?;
        let spec = config.env_spec()?;
        let mut agent = CrlAgent::new(config.agent_config(&spec), config.seed)?;
        self.restore_into(&mut agent)?;
        Ok(agent)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        self.rng.restore()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    fn small() -> (TrainConfig, CrlAgent<f32>) {
        let mut c = TrainConfig::desk();
        c.width = 8;
        c.repr_dim = 4;
        let spec = c.env_spec().unwrap();
        let a = CrlAgent::new(c.agent_config(&spec), 5).unwrap();
        (c, a)
    }

    #[test]
    fn bytes_round_trip() {
        let (c, a) = small();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        rng.next_u64();
        let ck = Checkpoint::capture(&a, &c, &rng);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.rng().next_u64(), rng.next_u64());
        assert_eq!(back.config().unwrap(), c);
    }

    #[test]
    fn every_truncation_is_rejected() {
        let (c, a) = small();
        let bytes = Checkpoint::capture(&a, &c, &ChaCha8Rng::seed_from_u64(0)).to_bytes();
        for cut in [0, 3, 10, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut {cut}");
        }
    }

    #[test]
    fn flipped_bit_and_version_are_rejected() {
        let (c, a) = small();
        let mut bytes = Checkpoint::capture(&a, &c, &ChaCha8Rng::seed_from_u64(0)).to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(Checkpoint::from_bytes(&bytes).unwrap_err().to_string().contains("checksum"));
        bytes[mid] ^= 1;
        bytes[4] = 9;
        assert!(Checkpoint::from_bytes(&bytes).unwrap_err().to_string().contains("version"));
    }
}
